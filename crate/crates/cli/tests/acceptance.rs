//! Acceptance suite: runs the reproduction manifest twice and prints one
//! PASS/FAIL line per criterion.
//!
//! Numeric tolerances live in `fbac_cli::checks::tol`. Runtime budgets are
//! pinned below. The test itself fails only when a criterion could not be
//! evaluated at all, or on any FAIL line when `FBAC_STRICT` is set.

use std::path::PathBuf;

use fbac_cli::checks::Criterion;
use fbac_cli::suite::{run_suite, Manifest};

/// Wall-clock budget in seconds for the runs deciding each criterion.
fn budget(c: Criterion) -> f64 {
    match c {
        Criterion::EnergyQuantization => 1.0,
        Criterion::SheetDensity => 10.0,
        Criterion::ModicaBound => 120.0,
        Criterion::Monotonicity => 60.0,
        Criterion::DiscrepancyDecay => 300.0,
        Criterion::Stationarity => 300.0,
        Criterion::GammaLimsup => 120.0,
        Criterion::LiminfMechanism => 30.0,
        Criterion::HausdorffConvergence => 60.0,
        Criterion::Parity => 60.0,
        Criterion::Interpolation => 30.0,
        Criterion::Determinism => FULL_SUITE_BUDGET,
    }
}

const FULL_SUITE_BUDGET: f64 = 900.0;

fn manifest_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/manifest.toml")
}

#[test]
fn acceptance_suite() {
    let path = manifest_path();
    let manifest = Manifest::load(&path).expect("manifest");
    let root = tempfile::tempdir().expect("tempdir");
    let out = run_suite(&path, root.path(), true).expect("suite");

    let first_pass: Vec<_> = out.runs.iter().filter(|r| !r.name.starts_with("repeat/")).collect();
    let total: f64 = first_pass.iter().map(|r| r.seconds).sum();
    for r in &out.runs {
        println!("run {:<32} exit {} {:>8.2} s{}", r.name, r.exit_code, r.seconds, r.error.as_deref().map(|e| format!(" {e}")).unwrap_or_default());
    }

    let mut lines = Vec::new();
    let mut unevaluated = Vec::new();
    for c in Criterion::ALL {
        // Runtime is charged per pass; a run shared by several criteria
        // counts fully against each of them.
        let seconds = if c == Criterion::Determinism {
            total
        } else {
            manifest
                .runs
                .iter()
                .filter(|m| m.criteria.contains(&c))
                .filter_map(|m| first_pass.iter().find(|r| r.name == m.name))
                .map(|r| r.seconds)
                .sum()
        };
        let within = seconds <= budget(c);
        let summary = out.report.criterion(c);
        let evaluated = summary.is_some_and(|s| s.evaluated);
        if !evaluated {
            unevaluated.push(c.name());
        }
        let verdict = summary.is_some_and(|s| s.evaluated && s.passed);
        let detail = match summary {
            Some(s) if s.evaluated => {
                let shown = s.checks.iter().find(|r| !r.check.passed).or(s.checks.first());
                match shown {
                    Some(r) => format!(
                        "{}/{} checks passed; {} [{}] measured {:.6} threshold {:.6}",
                        s.checks.len() - s.failed.len(),
                        s.checks.len(),
                        r.run,
                        r.check.subject,
                        r.check.measured,
                        r.check.threshold
                    ),
                    None => "no checks".to_string(),
                }
            }
            _ => "not evaluated".to_string(),
        };
        let mark = if verdict && within { "PASS" } else { "FAIL" };
        lines.push((mark, format!("{mark} {:<22} runtime {:.2} s (budget {:.0} s); {detail}", c.name(), seconds, budget(c))));
    }

    println!();
    for (_, l) in &lines {
        println!("{l}");
    }
    let failing = lines.iter().filter(|(m, _)| *m == "FAIL").count();
    println!("{} of {} criteria pass", lines.len() - failing, lines.len());

    assert!(unevaluated.is_empty(), "criteria not evaluated: {unevaluated:?}");
    if std::env::var_os("FBAC_STRICT").is_some() {
        assert_eq!(failing, 0, "failing criteria under FBAC_STRICT");
    }
}
