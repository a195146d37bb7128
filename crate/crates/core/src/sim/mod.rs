//! Experiment plans, the per-trial pipeline, sweeps and result output.

pub mod emit;
pub mod experiment;
pub mod plan;
pub mod trial;

pub use emit::{emit, Format, ResultRow, ResultTable, Value};
pub use experiment::run_experiment;
pub use plan::{AlphaPolicy, ExperimentPlan, ExperimentSpec, Preset, Sweep, SweepParameter};
pub use trial::{run_trial, TrialOutcome, TrialSetup};
