//! Test sets, policy evaluation, experiment runs, and learning-curve plots.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod record;
pub mod testset;

pub use config::{Algorithm, ExperimentConfig, Preset};
pub use experiment::{load_env, load_or_generate_test_set, run_experiment, RunInfo, RunOutcome};
pub use plot::{plot, plot_runs};
pub use record::{evaluate_policy, read_records, Evaluation, TrainRecord, SCHEMA_VERSION};
pub use testset::{generate_test_set, TestSet, TestSetMode};
