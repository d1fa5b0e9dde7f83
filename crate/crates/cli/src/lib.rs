//! Config-driven experiment runner for the `fbac` library.
//!
//! A run reads one TOML [`config::ExperimentConfig`], validates it, executes
//! one of the commands `solve`, `sweep`, `recovery`, `varifold`, `gamma` or
//! `report`, and writes its artifacts together with `verdicts.json`, the
//! pass/fail checks the run could decide. `report` aggregates verdicts per
//! acceptance criterion and digests artifacts.
//!
//! All randomness is drawn from ChaCha8 streams keyed by the config seed
//! (see [`config::noise_rng`]).

pub mod checks;
pub mod config;
pub mod report;
pub mod run;
pub mod suite;

pub use checks::{Check, Criterion, Verdicts};
pub use config::ExperimentConfig;
pub use run::{run, RunError, RunOutcome};

/// Environment variable overriding the output directory of any run.
pub const OUTPUT_DIR_ENV: &str = "FBAC_OUTPUT_DIR";

/// Output directory: the environment override, else the config value, else
/// `out/<command>`.
pub fn output_dir(cfg: &ExperimentConfig) -> std::path::PathBuf {
    if let Some(d) = std::env::var_os(OUTPUT_DIR_ENV) {
        return d.into();
    }
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| std::path::Path::new("out").join(cfg.command.name()))
}
