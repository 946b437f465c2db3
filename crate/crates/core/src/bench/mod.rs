//! Benchmark problems and experiment orchestration.

mod experiment;
mod nested;
mod plot;
mod problems;

pub use experiment::{
    read_replicates, run_experiment, validate_summary, write_outputs, DesignKind, ExperimentConfig,
    ExperimentResult, KindSummary, Quartiles, ReplicateRecord, Status, Summary, TargetRecord,
    TargetSummary, TraceRecord, CHAIN_THIN, SUMMARY_SCHEMA_VERSION,
};
pub use nested::{run_nested_study, write_nested, NestedConfig, NestedResult, NestedRow};
pub use plot::write_plot_data;
pub use problems::{
    forrester2d, generate_field_data, gfunction6d, CustomProblem, Forrester, GFunction, Problem,
    ProblemSetup, SimulatorKind, G6D_SITES, G6D_SITE_SEED,
};
