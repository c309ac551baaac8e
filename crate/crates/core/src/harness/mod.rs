//! Experiment driver: data ingestion, problem generation, algorithm
//! dispatch and CSV export.

pub mod config;
pub mod experiment;
pub mod libsvm;
pub mod synthetic;

pub use config::{Algorithm, DatasetSource, ExperimentConfig, LossChoice, RadiusRule};
pub use experiment::{
    build_problem, compare_csv, compare_report, default_step, learning_rate_sweep, problem_for, run_algorithm,
    run_experiment, sweep_csv, write_artifacts, CompareRow, ExperimentOutput, Summary, SweepOutcome, SweepRow,
};
pub use libsvm::{load_libsvm, parse_libsvm, to_libsvm_string, Dataset};
pub use synthetic::{gen_synthetic, newton_start, partition, synthetic_dataset, SyntheticKind};
