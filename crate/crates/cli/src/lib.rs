//! Driver for `qmon`: TOML experiment configs, run manifests, replay and the
//! acceptance suite.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod suite;

pub use config::{Experiment, ExperimentConfig, DEFAULT_SEED};
pub use error::{CliError, CliResult, EXIT_FAILURE, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION};
pub use manifest::{execute, replay, Manifest, ReplayReport, RunRequest, RunSummary};
pub use suite::{run_criterion, run_suite, CriterionOutcome, CRITERIA};

/// Config text for a suite run over `criteria` (all when empty).
pub fn suite_config(criteria: &[String]) -> String {
    let mut text = String::from("experiment = \"verify-suite\"\n");
    if !criteria.is_empty() {
        let list: Vec<String> = criteria.iter().map(|c| format!("\"{c}\"")).collect();
        text.push_str(&format!("[suite]\ncriteria = [{}]\n", list.join(", ")));
    }
    text
}
