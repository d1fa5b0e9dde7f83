//! The reproduction manifest and the full acceptance suite.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checks::Criterion;
use crate::config::ExperimentConfig;
use crate::report::{build_report, Report, REPORT_FILE};
use crate::run::{run, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Invocation that checks artifact determinism over the whole suite.
    pub determinism: String,
    #[serde(rename = "run")]
    pub runs: Vec<ManifestRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRun {
    pub name: String,
    /// Config path relative to the manifest.
    pub config: PathBuf,
    pub criteria: Vec<Criterion>,
    pub invocation: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn criteria(&self) -> Vec<Criterion> {
        let mut c: Vec<Criterion> = self.runs.iter().flat_map(|r| r.criteria.iter().copied()).collect();
        c.sort();
        c.dedup();
        c
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub name: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub runs: Vec<RunRecord>,
    pub report: Report,
}

fn run_pass(manifest: &Manifest, base: &Path, root: &Path) -> Result<Vec<RunRecord>, String> {
    let mut records = Vec::new();
    for r in &manifest.runs {
        let cfg = ExperimentConfig::load(&base.join(&r.config))?;
        let dir = root.join(&r.name);
        let start = Instant::now();
        let (exit_code, error) = match run(&cfg, &dir) {
            Ok(o) => (o.exit_code(), None),
            Err(e) => (e.exit_code(), Some(e.to_string())),
        };
        records.push(RunRecord {
            name: r.name.clone(),
            exit_code,
            error,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

fn pass_report(manifest: &Manifest, root: &Path, expect: &[Criterion], baseline: Option<&Path>) -> Result<Report, String> {
    let inputs: Vec<PathBuf> = manifest.runs.iter().map(|r| root.join(&r.name)).collect();
    let report = build_report(&inputs, expect, baseline).map_err(|e| e.to_string())?;
    let art = Artifacts::new(&root.join("report")).map_err(|e| e.to_string())?;
    art.json(REPORT_FILE, &report).map_err(|e| e.to_string())?;
    Ok(report)
}

/// Run every manifest entry into `root/<name>` and aggregate. With `repeat`
/// the suite runs a second time into `root/repeat` and the second report
/// also compares artifact digests with the first.
pub fn run_suite(manifest_path: &Path, root: &Path, repeat: bool) -> Result<SuiteOutcome, String> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let expect = manifest.criteria();
    let mut runs = run_pass(&manifest, base, root)?;
    let mut report = pass_report(&manifest, root, &expect, None)?;
    if repeat {
        let second = root.join("repeat");
        runs.extend(run_pass(&manifest, base, &second)?.into_iter().map(|mut r| {
            r.name = format!("repeat/{}", r.name);
            r
        }));
        let mut expect = expect.clone();
        expect.push(Criterion::Determinism);
        report = pass_report(&manifest, &second, &expect, Some(&root.join("report").join(REPORT_FILE)))?;
    }
    Ok(SuiteOutcome { runs, report })
}

/// One line per criterion: `PASS name (n checks)` or `FAIL name: …`.
pub fn summary_lines(report: &Report) -> Vec<String> {
    Criterion::ALL
        .iter()
        .map(|c| match report.criterion(*c) {
            None => format!("FAIL {:<22} not evaluated", c.name()),
            Some(s) if !s.evaluated => format!("FAIL {:<22} not evaluated", c.name()),
            Some(s) => {
                let mark = if s.passed { "PASS" } else { "FAIL" };
                let first = s.checks.iter().find(|r| !r.check.passed).or(s.checks.first()).expect("evaluated");
                format!(
                    "{mark} {:<22} {} checks, {} failed; {} [{}] measured {:.6} vs {:.6}{}",
                    c.name(),
                    s.checks.len(),
                    s.failed.len(),
                    first.run,
                    first.check.subject,
                    first.check.measured,
                    first.check.threshold,
                    if first.check.detail.is_empty() { String::new() } else { format!(" ({})", first.check.detail) }
                )
            }
        })
        .collect()
}
