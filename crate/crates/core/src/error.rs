use std::path::PathBuf;

/// Errors raised by the simulator and the analytical evaluators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The configuration file or experiment plan is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// A ZF precoder cannot be built because the BS has too few antennas
    /// for the number of nulling constraints.
    #[error("infeasible ZF precoder: M = {antennas} but {constraints} nulling constraints need M > {needed}")]
    Infeasible { antennas: usize, constraints: usize, needed: usize },

    /// A closed form needs more antennas per user than the load implies.
    #[error("infeasible ZF closed form: rho0 = {rho0} does not exceed the load {load}")]
    InfeasibleLoad { rho0: f64, load: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// An internal contract was broken by the caller (e.g. asking for the
    /// channel estimate of an inactive user).
    #[error("logic error: {0}")]
    Logic(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn logic(msg: impl Into<String>) -> Self {
        Error::Logic(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
