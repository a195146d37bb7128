use std::path::PathBuf;
use std::process::ExitCode;

use cachemimo::config::ConfigFile;
use cachemimo::oracles;
use cachemimo::sim::experiment::run_experiment_with_workers;
use cachemimo::sim::{emit, ExperimentPlan, Format, Preset};
use cachemimo::Error;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cachemimo", version, about = "Cache-aided multi-cell massive MIMO downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep: closed-form rows plus Monte Carlo rows.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seed: Option<u64>,
        /// Total trials per grid point and scheme.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Evaluate the closed forms only.
    Analyze {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Run the random-matrix, quadrature and counting oracles.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct Source {
    /// JSON configuration file.
    #[arg(long, required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
}

#[derive(clap::Args)]
struct Output {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Fig1,
    Fig2,
    Fig4,
    Fig6,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Fig1 => Preset::Fig1,
            PresetArg::Fig2 => Preset::Fig2,
            PresetArg::Fig4 => Preset::Fig4,
            PresetArg::Fig6 => Preset::Fig6,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

fn load_plan(source: &Source) -> cachemimo::Result<ExperimentPlan> {
    let preset = source.preset.map(Preset::from);
    match &source.config {
        Some(path) => ExperimentPlan::from_config(&ConfigFile::load(path)?, preset),
        None => ExperimentPlan::preset(preset.expect("clap requires a preset without a config")),
    }
}

fn write(table: &cachemimo::sim::ResultTable, output: &Output) -> cachemimo::Result<()> {
    let format = Format::from(output.format);
    match &output.out {
        Some(path) => emit(table, format, path),
        None => {
            print!("{}", table.render(format));
            Ok(())
        }
    }
}

fn run(cli: Cli) -> cachemimo::Result<bool> {
    match cli.command {
        Command::Simulate { source, seed, trials, workers, output } => {
            let mut plan = load_plan(&source)?;
            if let Some(s) = seed {
                plan.master_seed = s;
            }
            if let Some(t) = trials {
                plan.set_trials(t)?;
            }
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            if workers == 0 {
                return Err(Error::Config("--workers must be at least 1".into()));
            }
            log::info!("{} preset, {} trials per point, {workers} workers", plan.preset, plan.trials());
            let table = run_experiment_with_workers(&plan, workers)?;
            write(&table, &output)?;
            Ok(true)
        }
        Command::Analyze { source, seed, output } => {
            let mut plan = load_plan(&source)?;
            if let Some(s) = seed {
                plan.master_seed = s;
            }
            plan.closed_form_only = true;
            let table = run_experiment_with_workers(&plan, 1)?;
            write(&table, &output)?;
            Ok(true)
        }
        Command::Selftest { seed } => {
            let checks = oracles::selftest(seed)?;
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed()).count();
            println!("{} checks, {failed} failed", checks.len());
            Ok(failed == 0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Domain(_) | Error::Infeasible { .. } | Error::InfeasibleLoad { .. } => 2,
                Error::Io { .. } => 3,
                Error::Numeric(_) | Error::Logic(_) => 1,
            })
        }
    }
}
