//! Aggregation of run verdicts and artifact digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checks::{Check, Criterion, RowFailure, Verdicts};
use crate::config::ExperimentConfig;
use crate::run::{Artifacts, RunError, RunOutcome};

pub const VERDICTS_FILE: &str = "verdicts.json";
pub const REPORT_FILE: &str = "report.json";
/// Free-form log with timings; never digested.
pub const LOG_FILE: &str = "run.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDigest {
    pub name: String,
    pub command: String,
    /// Relative path → SHA-256 of every artifact except the log.
    pub files: BTreeMap<String, String>,
    pub failures: Vec<RowFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSummary {
    pub criterion: Criterion,
    pub evaluated: bool,
    pub passed: bool,
    /// `run: subject` of every failed check.
    pub failed: Vec<String>,
    pub checks: Vec<ReportedCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedCheck {
    pub run: String,
    #[serde(flatten)]
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunDigest>,
    pub criteria: Vec<CriterionSummary>,
    /// Every expected criterion was evaluated and passed.
    pub passed: bool,
}

impl Report {
    pub fn criterion(&self, c: Criterion) -> Option<&CriterionSummary> {
        self.criteria.iter().find(|s| s.criterion == c)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of every file below `dir` except the log, keyed by relative path.
pub fn digest_dir(dir: &Path) -> std::io::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(dir).expect("below root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if key == LOG_FILE {
                continue;
            }
            out.insert(key, hex(&Sha256::digest(fs::read(&p)?)));
        }
    }
    Ok(out)
}

/// Run directories named by the inputs, or the names of missing inputs.
fn collect_runs(inputs: &[PathBuf]) -> Result<Vec<(String, PathBuf)>, Vec<String>> {
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    for input in inputs {
        if input.join(VERDICTS_FILE).is_file() {
            let name = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            runs.push((name, input.clone()));
            continue;
        }
        let mut found = Vec::new();
        if let Ok(entries) = fs::read_dir(input) {
            for e in entries.flatten() {
                let p = e.path();
                if p.join(VERDICTS_FILE).is_file() {
                    found.push((e.file_name().to_string_lossy().into_owned(), p));
                }
            }
        }
        if found.is_empty() {
            missing.push(input.join(VERDICTS_FILE).display().to_string());
        }
        found.sort();
        runs.extend(found);
    }
    if missing.is_empty() {
        Ok(runs)
    } else {
        Err(missing)
    }
}

/// Aggregate the verdicts of `inputs`, optionally comparing digests with a
/// baseline report.
pub fn build_report(inputs: &[PathBuf], expect: &[Criterion], baseline: Option<&Path>) -> Result<Report, RunError> {
    let runs = collect_runs(inputs).map_err(RunError::MissingInputs)?;
    let mut digests = Vec::with_capacity(runs.len());
    let mut by_criterion: BTreeMap<Criterion, Vec<ReportedCheck>> = BTreeMap::new();
    for (name, dir) in &runs {
        let text = fs::read_to_string(dir.join(VERDICTS_FILE)).map_err(|e| RunError::Io(e.to_string()))?;
        let v: Verdicts = serde_json::from_str(&text).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
        for c in v.checks {
            by_criterion.entry(c.criterion).or_default().push(ReportedCheck { run: name.clone(), check: c });
        }
        digests.push(RunDigest {
            name: name.clone(),
            command: v.command,
            files: digest_dir(dir).map_err(|e| RunError::Io(e.to_string()))?,
            failures: v.failures,
        });
    }
    if let Some(b) = baseline {
        let text = fs::read_to_string(b).map_err(|_| RunError::MissingInputs(vec![b.display().to_string()]))?;
        let base: Report = serde_json::from_str(&text).map_err(|e| RunError::Io(format!("{}: {e}", b.display())))?;
        by_criterion.entry(Criterion::Determinism).or_default().push(determinism_check(&base.runs, &digests));
    }
    let mut criteria = Vec::new();
    let mut all: Vec<Criterion> = expect.to_vec();
    all.extend(by_criterion.keys().copied());
    all.sort();
    all.dedup();
    for c in all {
        let checks = by_criterion.remove(&c).unwrap_or_default();
        let failed: Vec<String> = checks
            .iter()
            .filter(|r| !r.check.passed)
            .map(|r| format!("{}: {}", r.run, r.check.subject))
            .collect();
        criteria.push(CriterionSummary {
            criterion: c,
            evaluated: !checks.is_empty(),
            passed: !checks.is_empty() && failed.is_empty(),
            failed,
            checks,
        });
    }
    Ok(Report {
        passed: criteria.iter().all(|c| c.passed),
        runs: digests,
        criteria,
    })
}

/// Number of artifacts whose digests differ from (or are absent in) the baseline.
fn determinism_check(base: &[RunDigest], now: &[RunDigest]) -> ReportedCheck {
    let index = |runs: &[RunDigest]| -> BTreeMap<String, String> {
        runs.iter()
            .flat_map(|r| r.files.iter().map(move |(f, d)| (format!("{}/{f}", r.name), d.clone())))
            .collect()
    };
    let (a, b) = (index(base), index(now));
    let mut differing: Vec<String> = a
        .iter()
        .filter(|(k, d)| b.get(*k) != Some(*d))
        .map(|(k, _)| k.clone())
        .collect();
    differing.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
    let detail = if differing.is_empty() {
        format!("{} artifacts identical", a.len())
    } else {
        format!("differing: {}", differing.join(", "))
    };
    ReportedCheck {
        run: "report".into(),
        check: Check::at_most(Criterion::Determinism, "artifact digests against the baseline", differing.len() as f64, 0.0)
            .with_detail(detail),
    }
}

pub(crate) fn run_report(cfg: &ExperimentConfig, output_dir: &Path) -> Result<RunOutcome, RunError> {
    let section = cfg.report.as_ref().expect("validated");
    let report = build_report(&section.inputs, &section.expect, section.baseline.as_deref())?;
    let art = Artifacts::new(output_dir)?;
    art.json(REPORT_FILE, &report)?;
    Ok(RunOutcome {
        output_dir: output_dir.to_path_buf(),
        verdicts: Verdicts {
            command: "report".into(),
            seed: cfg.seed,
            checks: Vec::new(),
            failures: Vec::new(),
        },
        partial_failure: false,
    })
}
