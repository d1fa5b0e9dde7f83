use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fbac_cli::{output_dir, run, suite, ExperimentConfig, RunError, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "fbac", version, about = "Free boundary Allen-Cahn experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Run every entry of a reproduction manifest and aggregate a report.
    Suite {
        manifest: PathBuf,
        /// Run the suite twice and compare artifact digests.
        #[arg(long)]
        repeat: bool,
    },
}

fn fail(e: RunError) -> ExitCode {
    println!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, RunError> {
    ExperimentConfig::load(path).map_err(|e| RunError::Validation(vec![e]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let dir = output_dir(&cfg);
            match run(&cfg, &dir) {
                Ok(out) => {
                    let status = if out.partial_failure { "partial_failure" } else { "ok" };
                    println!(
                        "{}",
                        serde_json::json!({
                            "status": status,
                            "output_dir": out.output_dir,
                            "checks": out.verdicts.checks.len(),
                            "failed_checks": out.verdicts.checks.iter().filter(|c| !c.passed).count(),
                            "failures": out.verdicts.failures,
                        })
                    );
                    ExitCode::from(out.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Cmd::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let v = cfg.validate();
            if v.is_empty() {
                println!("{}", serde_json::json!({ "status": "ok", "violations": [] }));
                ExitCode::SUCCESS
            } else {
                fail(RunError::Validation(v))
            }
        }
        Cmd::Suite { manifest, repeat } => {
            let root: PathBuf = std::env::var_os(OUTPUT_DIR_ENV).map(Into::into).unwrap_or_else(|| "out/suite".into());
            match suite::run_suite(&manifest, &root, repeat) {
                Ok(out) => {
                    for r in &out.runs {
                        eprintln!("{:<28} exit {} in {:>7.1} s{}", r.name, r.exit_code, r.seconds, r.error.as_ref().map(|e| format!(": {e}")).unwrap_or_default());
                    }
                    for line in suite::summary_lines(&out.report) {
                        println!("{line}");
                    }
                    if out.report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(RunError::Io(e)),
            }
        }
    }
}
