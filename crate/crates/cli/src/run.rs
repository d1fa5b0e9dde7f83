//! Command pipelines.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fbac::energy::{self, EnergyReport};
use fbac::gamma::{self, ShapeSpec};
use fbac::geometry::{hausdorff, transition_band};
use fbac::grid::{self as field_io, Field, FieldKind, Grid, NodeMask, Point};
use fbac::solver::{self, SolveTrace};
use fbac::varifold::{self, EnergyMeasure};
use rand::Rng;
use serde::Serialize;

use crate::checks::{tol, Check, Criterion, RowFailure, Verdicts};
use crate::config::{noise_rng, Command, ExperimentConfig, Method as ConfigMethod};
use crate::report;

/// Exit status of a run, mapped onto process exit codes by the binary.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    /// Report inputs that do not exist.
    #[error("missing inputs: {}", .0.join(", "))]
    MissingInputs(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) | RunError::MissingInputs(_) | RunError::Io(_) => 1,
            RunError::Numerical(_) => 2,
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let (kind, items) = match self {
            RunError::Validation(v) => ("validation", v.clone()),
            RunError::MissingInputs(v) => ("missing_inputs", v.clone()),
            RunError::Numerical(m) => ("numerical", vec![m.clone()]),
            RunError::Io(m) => ("io", vec![m.clone()]),
        };
        serde_json::json!({ "status": "error", "kind": kind, "messages": items })
    }
}

fn io_err(e: impl std::fmt::Display) -> RunError {
    RunError::Io(e.to_string())
}

fn num_err(e: impl std::fmt::Display) -> RunError {
    RunError::Numerical(e.to_string())
}

/// What a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub verdicts: Verdicts,
    /// Some row or stage failed; artifacts were still written.
    pub partial_failure: bool,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.partial_failure {
            2
        } else {
            0
        }
    }
}

/// Artifact writer rooted at the output directory.
pub struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Artifacts, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, name: &str) -> Result<PathBuf, RunError> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        Ok(p)
    }

    pub fn text(&self, name: &str, body: &str) -> Result<(), RunError> {
        fs::write(self.path(name)?, body).map_err(io_err)
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> Result<(), RunError> {
        let mut s = serde_json::to_string_pretty(value).map_err(io_err)?;
        s.push('\n');
        self.text(name, &s)
    }

    pub fn field_binary(&self, name: &str, u: &Field) -> Result<(), RunError> {
        let f = fs::File::create(self.path(name)?).map_err(io_err)?;
        field_io::write_binary(u, BufWriter::new(f)).map_err(io_err)
    }

    pub fn field_csv(&self, name: &str, u: &Field) -> Result<(), RunError> {
        let f = fs::File::create(self.path(name)?).map_err(io_err)?;
        field_io::write_csv(u, BufWriter::new(f)).map_err(io_err)
    }

    /// Timings and other nondeterministic notes; excluded from digests.
    pub fn log(&self, line: &str) {
        use std::io::Write;
        if let Ok(mut f) = fs::OpenOptions::new().create(true).append(true).open(self.dir.join(report::LOG_FILE)) {
            let _ = writeln!(f, "{line}");
        }
    }
}

/// Validate, then execute one experiment into `output_dir`.
pub fn run(cfg: &ExperimentConfig, output_dir: &Path) -> Result<RunOutcome, RunError> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(RunError::Validation(violations));
    }
    if cfg.command == Command::Report {
        return report::run_report(cfg, output_dir);
    }
    let art = Artifacts::new(output_dir)?;
    let start = Instant::now();
    let mut v = Verdicts {
        command: cfg.command.name().to_string(),
        seed: cfg.seed,
        checks: Vec::new(),
        failures: Vec::new(),
    };
    match cfg.command {
        Command::Solve => solve(cfg, &art, &mut v)?,
        Command::Sweep => sweep(cfg, &art, &mut v)?,
        Command::Recovery => recovery(cfg, &art, &mut v)?,
        Command::Varifold => varifold_cmd(cfg, &art, &mut v)?,
        Command::Gamma => gamma_cmd(cfg, &art, &mut v)?,
        Command::Report => unreachable!(),
    }
    art.json(report::VERDICTS_FILE, &v)?;
    art.log(&format!("{} finished in {:.3} s", cfg.command.name(), start.elapsed().as_secs_f64()));
    Ok(RunOutcome {
        output_dir: output_dir.to_path_buf(),
        partial_failure: !v.failures.is_empty(),
        verdicts: v,
    })
}

/// Solver output plus what the audits need.
struct Solved {
    field: Field,
    trace: SolveTrace,
    label: String,
}

fn solve_one(cfg: &ExperimentConfig, grid: &Grid, eps: f64, stream: u64, label: &str) -> Result<(Solved, serde_json::Value), fbac::Error> {
    let section = cfg.solver_section();
    let scfg = section.resolve(grid, eps, cfg.seed);
    let init = cfg.init.as_ref().expect("validated").build(grid, eps, cfg.seed, stream)?;
    match section.method {
        ConfigMethod::Descent => {
            let (u, trace) = solver::minimize(&scfg, &init)?;
            let json = serde_json::to_value(&trace).expect("trace serializes");
            Ok((Solved { field: u, trace, label: label.to_string() }, json))
        }
        ConfigMethod::Band => {
            let band = transition_band(&init);
            let (u, bt) = solver::harmonic_band_solve(&scfg, grid, &band)?;
            let json = serde_json::to_value(&bt).expect("trace serializes");
            // the band solve has no descent stages; wrap its summary
            let trace = SolveTrace {
                step: 0.0,
                stages: Vec::new(),
                converged: bt.status == solver::BandStatus::Converged,
                report: bt.report,
                stationarity_residual: bt.stationarity_residual,
                hessian_max: solver::hessian_max(&u),
            };
            Ok((Solved { field: u, trace, label: label.to_string() }, json))
        }
    }
}

fn solve(cfg: &ExperimentConfig, art: &Artifacts, v: &mut Verdicts) -> Result<(), RunError> {
    let grid = cfg.grid.as_ref().expect("validated").fixed().map_err(num_err)?;
    let eps = cfg.epsilon.expect("validated");
    let (s, trace_json) = match solve_one(cfg, &grid, eps, 0, "solve") {
        Ok(r) => r,
        Err(e) => return Err(num_err(e)),
    };
    art.field_binary("field.bin", &s.field)?;
    art.field_csv("field.csv", &s.field)?;
    art.json("trace.json", &trace_json)?;
    let mut mono = String::from(MONO_HEADER);
    if s.trace.converged {
        field_checks(cfg, &s, eps, v, &mut mono).map_err(num_err)?;
    } else {
        v.failures.push(RowFailure { row: s.label.clone(), error: "solver did not converge".into() });
    }
    art.text("monotonicity.csv", &mono)?;
    Ok(())
}

const SWEEP_HEADER: &str = "epsilon,total,dirichlet,potential,discrepancy_l1,modica_violation,nodes,spacing,discrepancy_window,stationarity_residual,iterations,converged,status\n";
const MONO_HEADER: &str = "subject,center_x,center_y,center_z,radius,mass,ratio\n";

fn sweep(cfg: &ExperimentConfig, art: &Artifacts, v: &mut Verdicts) -> Result<(), RunError> {
    let gs = cfg.grid.as_ref().expect("validated");
    let mut csv = String::from(SWEEP_HEADER);
    let mut mono = String::from(MONO_HEADER);
    // (row, ε, spacing, residual, ∫_K|ξ|) of converged rows
    let mut done: Vec<(usize, f64, f64, f64, Option<f64>)> = Vec::new();
    for (k, row) in cfg.rows.iter().enumerate() {
        let label = format!("row {k} (epsilon {}, nodes {:?})", row.epsilon, row.nodes);
        let grid = Grid::new(&gs.extents(), &row.nodes).map_err(num_err)?;
        let nodes = row.nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x");
        let result = solve_one(cfg, &grid, row.epsilon, k as u64, &label);
        let (s, trace_json) = match result {
            Ok(r) => r,
            Err(e) => {
                let _ = writeln!(csv, "{},,,,,,{nodes},{},,,,false,failed: {}", row.epsilon, grid.min_spacing(), csv_safe(&e.to_string()));
                v.failures.push(RowFailure { row: label, error: e.to_string() });
                continue;
            }
        };
        art.field_binary(&format!("rows/{k}/field.bin"), &s.field)?;
        art.json(&format!("rows/{k}/trace.json"), &trace_json)?;
        let window = match &cfg.audit.discrepancy_window {
            Some(w) => {
                let mask = NodeMask::from_fn(&grid, |p| w.iter().enumerate().all(|(a, r)| p[a] >= r[0] && p[a] <= r[1]));
                Some(energy::discrepancy_on(&s.field, row.epsilon, &mask).map_err(num_err)?)
            }
            None => None,
        };
        let r: &EnergyReport = &s.trace.report;
        let iterations: usize = s.trace.stages.iter().map(|st| st.iterations).sum();
        let status = if s.trace.converged { "ok" } else { "not_converged" };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{nodes},{},{},{},{iterations},{},{status}",
            row.epsilon,
            r.total,
            r.dirichlet,
            r.potential,
            r.discrepancy_l1,
            r.modica_violation,
            grid.min_spacing(),
            window.map(|w| w.to_string()).unwrap_or_default(),
            s.trace.stationarity_residual,
            s.trace.converged,
        );
        if !s.trace.converged {
            v.failures.push(RowFailure { row: label, error: "solver did not converge".into() });
            continue;
        }
        field_checks(cfg, &s, row.epsilon, v, &mut mono).map_err(num_err)?;
        done.push((k, row.epsilon, grid.min_spacing(), s.trace.stationarity_residual, window));
    }
    art.text("sweep.csv", &csv)?;
    art.text("monotonicity.csv", &mono)?;

    if cfg.audit.discrepancy_window.is_some() {
        if done.len() == cfg.rows.len() && done.len() >= 2 {
            let vals: Vec<f64> = done.iter().map(|d| d.4.expect("window set")).collect();
            let strict = vals.windows(2).all(|w| w[1] < w[0]);
            let ratio = vals[vals.len() - 1] / vals[0];
            let listing = vals.iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>().join(" > ");
            v.checks.push(
                Check::at_most(Criterion::DiscrepancyDecay, "windowed discrepancy along the sweep", ratio, tol::DISCREPANCY_FINAL_FRACTION)
                    .and(strict)
                    .with_detail(format!("final/first ratio; values {listing}; strictly decreasing: {strict}")),
            );
        } else {
            v.checks.push(
                Check::at_most(Criterion::DiscrepancyDecay, "windowed discrepancy along the sweep", f64::MAX, tol::DISCREPANCY_FINAL_FRACTION)
                    .and(false)
                    .with_detail("not every row converged"),
            );
        }
    }

    // stationarity: rows at equal ε whose spacing halves
    for (i, a) in done.iter().enumerate() {
        for b in &done[i + 1..] {
            let same_eps = (a.1 - b.1).abs() <= 1e-12 * a.1;
            let halved = ((a.2 / b.2) - 2.0).abs() < 0.02;
            if same_eps && halved {
                let gain = a.3 / b.3;
                v.checks.push(
                    Check::at_least(
                        Criterion::Stationarity,
                        format!("residual gain rows {} -> {} (epsilon {})", a.0, b.0, a.1),
                        gain,
                        tol::STATIONARITY_GAIN,
                    )
                    .with_detail(format!("residuals {:.6e} -> {:.6e}", a.3, b.3)),
                );
            }
        }
    }
    Ok(())
}

fn csv_safe(s: &str) -> String {
    s.replace([',', '\n'], ";")
}

/// Monotonicity radii `{4ε, 6ε, …}` up to `max(0.2, 6ε)`.
pub fn monotonicity_radii(eps: f64) -> Vec<f64> {
    let r_max = tol::MONOTONICITY_RADIUS.max(6.0 * eps);
    let mut out = Vec::new();
    let mut k = 4.0;
    while k * eps <= r_max * (1.0 + 1e-12) {
        out.push(k * eps);
        k += 2.0;
    }
    out
}

/// Points on the analytic interface of `shape`, spaced below `h/2`.
fn analytic_interface(shape: &ShapeSpec, grid: &Grid) -> fbac::Result<Vec<Point>> {
    let h = grid.min_spacing();
    match shape.interface_points(grid, 0.5 * h) {
        Some(p) => Ok(p),
        None => Ok(shape.instantiate(grid)?.interface().vertices),
    }
}

fn band_distance(u: &Field, interface: &[Point]) -> f64 {
    let g = u.grid();
    let band = transition_band(u).points(g);
    // an empty set is as far as the domain allows
    hausdorff(&band, interface, g.dim()).unwrap_or(g.diameter())
}

/// Audits of one converged solver output.
fn field_checks(cfg: &ExperimentConfig, s: &Solved, eps: f64, v: &mut Verdicts, mono: &mut String) -> fbac::Result<()> {
    let u = &s.field;
    let grid = u.grid();
    let h = grid.min_spacing();
    let label = &s.label;

    let m = energy::modica_check(u, eps)?;
    let bound = tol::MODICA_FACTOR * h / (eps * eps);
    v.checks.push(Check::at_most(Criterion::ModicaBound, label.clone(), m.violation, bound));

    let cs = energy::cs_lower_bound_check(u, eps)?;
    v.checks.push(
        Check::at_least(Criterion::LiminfMechanism, label.clone(), cs.min_margin.unwrap_or(0.0), 0.0)
            .and(cs.holds)
            .with_detail(format!("transition nodes {}", cs.transition_nodes)),
    );

    let radii = monotonicity_radii(eps);
    if radii[0] > 2.0 * grid.max_spacing() {
        let r_max = radii[radii.len() - 1];
        let centers = varifold::interface_samples(u, cfg.audit.monotonicity_centers, r_max);
        if !centers.is_empty() {
            let measure = EnergyMeasure::new(u, eps)?;
            let mut worst = 0.0f64;
            let mut hard = 0;
            for c in &centers {
                let sample = measure.monotonicity(c, &radii)?;
                worst = worst.max(sample.max_relative_drop);
                hard += sample.hard_violations;
                for ((r, mass), ratio) in sample.radii.iter().zip(&sample.masses).zip(&sample.ratios) {
                    let _ = writeln!(mono, "{},{},{},{},{r},{mass},{ratio}", csv_safe(label), c[0], c[1], c[2]);
                }
            }
            v.checks.push(
                Check::at_most(Criterion::Monotonicity, label.clone(), worst, varifold::MONOTONICITY_SLACK)
                    .and(hard == 0)
                    .with_detail(format!("{} centers, radii {:?}, hard violations {hard}", centers.len(), radii)),
            );
        }
    }

    // first variation of the varifold against the discrepancy identity
    let mut worst = 0.0f64;
    for g in solver::bump_basis(grid) {
        let lhs = varifold::first_variation_varifold(u, eps, &g)?;
        let rhs = varifold::discrepancy_variation(u, eps, &g)?;
        worst = worst.max((lhs - rhs).abs() / solver::c1_norm(&g));
    }
    v.checks.push(Check::at_most(Criterion::Stationarity, format!("{label}: varifold identity"), worst, tol::VARIFOLD_IDENTITY));

    for shape in cfg.all_shapes() {
        let iface = analytic_interface(&shape, grid)?;
        if iface.is_empty() {
            continue;
        }
        let d = band_distance(u, &iface);
        v.checks.push(
            Check::at_most(
                Criterion::HausdorffConvergence,
                format!("{label}: solver band vs {}", shape.description()),
                d,
                tol::SOLVER_EPS_FACTOR * eps,
            ),
        );
        if eps > 2.0 * grid.max_spacing() {
            let rec = gamma::recovery_sequence(&shape.instantiate(grid)?, eps)?;
            let d = band_distance(&rec, &iface);
            v.checks.push(Check::at_most(
                Criterion::HausdorffConvergence,
                format!("{label}: recovery band vs {}", shape.description()),
                d,
                eps + tol::RECOVERY_H_FACTOR * grid.max_spacing(),
            ));
        }
    }
    Ok(())
}

const LIMSUP_HEADER: &str = "shape,epsilon,spacing,energy,four_perimeter,relative_gap,l1_to_limit\n";

fn limsup_checks(audit: &gamma::LimsupAudit, shape: &ShapeSpec, v: &mut Verdicts, csv: &mut String) {
    for r in &audit.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            csv_safe(&audit.shape),
            r.epsilon,
            r.spacing,
            r.energy,
            r.four_perimeter,
            r.relative_gap,
            r.l1_to_limit
        );
    }
    let gaps = audit.rows.iter().map(|r| format!("{:.5}", r.relative_gap)).collect::<Vec<_>>().join(", ");
    v.checks.push(
        Check::at_most(Criterion::GammaLimsup, audit.shape.clone(), audit.final_gap, tol::LIMSUP_FINAL_GAP)
            .and(audit.trend_ok)
            .with_detail(format!("gaps [{gaps}]; non-increasing: {}", audit.trend_ok)),
    );
    if matches!(shape, ShapeSpec::HalfSpace { .. }) {
        let worst = audit.rows.iter().map(|r| r.relative_gap).fold(0.0, f64::max);
        v.checks.push(Check::at_most(
            Criterion::EnergyQuantization,
            format!("single sheet {}", audit.shape),
            worst,
            tol::ENERGY_QUANTIZATION,
        ));
    }
}

fn recovery(cfg: &ExperimentConfig, art: &Artifacts, v: &mut Verdicts) -> Result<(), RunError> {
    let gs = cfg.grid.as_ref().expect("validated");
    let eps_list = cfg.epsilon_list.clone().expect("validated");
    let cells = gs.cells_per_epsilon.expect("validated");
    let mut csv = String::from(LIMSUP_HEADER);
    let mut audits = Vec::new();
    for shape in cfg.all_shapes() {
        let audit = gamma::gamma_limsup_audit(&shape, &gs.extents(), &eps_list, cells).map_err(num_err)?;
        limsup_checks(&audit, &shape, v, &mut csv);
        for &eps in &eps_list {
            let grid = gs.for_epsilon(eps).map_err(num_err)?;
            let iface = analytic_interface(&shape, &grid).map_err(num_err)?;
            if iface.is_empty() {
                continue;
            }
            let u = gamma::recovery_sequence(&shape.instantiate(&grid).map_err(num_err)?, eps).map_err(num_err)?;
            v.checks.push(Check::at_most(
                Criterion::HausdorffConvergence,
                format!("recovery band vs {} at epsilon {eps}", shape.description()),
                band_distance(&u, &iface),
                eps + tol::RECOVERY_H_FACTOR * grid.max_spacing(),
            ));
        }
        audits.push(audit);
    }
    art.text("limsup.csv", &csv)?;
    art.json("limsup.json", &audits)?;
    Ok(())
}

const SAMPLE_HEADER: &str = "case,center_x,center_y,center_z,radius,mass,ratio,theta,sheets,rounding_gap\n";

fn varifold_cmd(cfg: &ExperimentConfig, art: &Artifacts, v: &mut Verdicts) -> Result<(), RunError> {
    let vs = cfg.varifold.as_ref().expect("validated");
    let gs = cfg.grid.as_ref().expect("validated");
    let window = (vs.window[0], vs.window[1]);
    let radii = varifold::window_radii(window.0, window.1, 9).map_err(num_err)?;
    let mut csv = String::from(SAMPLE_HEADER);
    for case in &vs.cases {
        let eps = cfg.epsilon.expect("validated");
        let grid = gs.for_epsilon(eps).map_err(num_err)?;
        let u = case.field.build(&grid, eps, cfg.seed, 0).map_err(num_err)?;
        let measure = EnergyMeasure::new(&u, eps).map_err(num_err)?;
        let expected = case.field.sheet_offsets(eps).map(|(o, _)| o.len());
        for c in &case.centers {
            let mut p = [0.0; 3];
            p[..c.len()].copy_from_slice(c);
            let s = measure.density(&p, &radii).map_err(num_err)?;
            let (theta, sheets, gap) = (s.theta.unwrap_or(0.0), s.sheets.unwrap_or(0), s.rounding_gap.unwrap_or(1.0));
            for ((r, mass), ratio) in s.radii.iter().zip(&s.masses).zip(&s.ratios) {
                let _ = writeln!(csv, "{},{},{},{},{r},{mass},{ratio},{theta},{sheets},{gap}", csv_safe(&case.name), p[0], p[1], p[2]);
            }
            if let Some(n) = expected {
                v.checks.push(
                    Check::at_most(Criterion::SheetDensity, format!("{} at {:?}", case.name, c), gap, tol::SHEET_ROUNDING_GAP)
                        .and(sheets == n)
                        .with_detail(format!("theta {theta:.4}, sheets {sheets}, expected {n}")),
                );
            }
        }
    }
    art.text("samples.csv", &csv)?;

    let mut reports = Vec::new();
    for case in &vs.parity {
        let eps_list = cfg.epsilon_list.clone().expect("validated");
        let mut seq = Vec::with_capacity(eps_list.len());
        for &eps in &eps_list {
            let grid = gs.for_epsilon(eps).map_err(num_err)?;
            seq.push((eps, case.field.build(&grid, eps, cfg.seed, 0).map_err(num_err)?));
        }
        let fine = &seq[seq.len() - 1].1;
        let u0 = case.limit.instantiate(fine.grid()).map_err(num_err)?.indicator;
        let points = varifold::interface_samples(fine, case.samples, window.1);
        let rep = varifold::parity_audit(&seq, &u0, &points, window).map_err(num_err)?;
        let detail = rep
            .points
            .iter()
            .map(|p| format!("sheets {} sign change {}", p.sheets, p.sign_change))
            .collect::<Vec<_>>()
            .join("; ");
        v.checks.push(
            Check::at_least(Criterion::Parity, case.name.clone(), rep.agreement, tol::PARITY_AGREEMENT)
                .and(!rep.points.is_empty())
                .with_detail(format!("{} points: {detail}", rep.points.len())),
        );
        reports.push(serde_json::json!({ "case": case.name, "report": rep }));
    }
    art.json("parity.json", &reports)?;
    Ok(())
}

/// Random phase field: uniform values with about a third of the nodes
/// snapped to the nearer pure phase.
pub fn random_phase_field(grid: &Grid, rng: &mut impl Rng) -> Field {
    let values = (0..grid.len())
        .map(|_| {
            let t: f64 = rng.random_range(-1.0..=1.0);
            if rng.random::<f64>() < 1.0 / 3.0 {
                t.signum()
            } else {
                t
            }
        })
        .collect();
    Field::new(grid.clone(), FieldKind::Phase, values).expect("values in [-1, 1]")
}

#[derive(Serialize)]
struct InterpolationSummary {
    grid_nodes: Vec<usize>,
    calibration_fields: usize,
    calibration_stream: u64,
    calibrated_constant: f64,
    holdout_fields: usize,
    holdout_stream: u64,
    holdout_max: f64,
    holdout_constants: Vec<f64>,
}

fn gamma_cmd(cfg: &ExperimentConfig, art: &Artifacts, v: &mut Verdicts) -> Result<(), RunError> {
    let gs = cfg.gamma.clone().unwrap_or_default();
    let shapes = cfg.all_shapes();
    if !shapes.is_empty() {
        let grid_section = cfg.grid.as_ref().expect("validated");
        let eps_list = cfg.epsilon_list.clone().expect("validated");
        let mut limsup = String::from(LIMSUP_HEADER);
        let mut liminf = String::from("shape,epsilon,energy,bv_bound,limit_energy,l1_to_limit,holds,margin_to_limit\n");
        for shape in &shapes {
            let mut fields = Vec::with_capacity(eps_list.len());
            let mut rows = Vec::with_capacity(eps_list.len());
            for &eps in &eps_list {
                let grid = grid_section.for_epsilon(eps).map_err(num_err)?;
                let s = shape.instantiate(&grid).map_err(num_err)?;
                let p = s.analytic_perimeter.unwrap_or_else(|| gamma::perimeter(&s));
                let u = gamma::recovery_sequence(&s, eps).map_err(num_err)?;
                let e = energy::energy(&u, eps).map_err(num_err)?.total;
                rows.push(gamma::LimsupRow {
                    epsilon: eps,
                    spacing: grid.max_spacing(),
                    energy: e,
                    four_perimeter: 4.0 * p,
                    relative_gap: (e - 4.0 * p).abs() / (4.0 * p),
                    l1_to_limit: u.l1_distance(&s.indicator).map_err(num_err)?,
                });
                fields.push((eps, u));
            }
            let k = rows.len();
            let trend_ok = rows[k.saturating_sub(3)..].windows(2).all(|w| w[1].relative_gap <= w[0].relative_gap);
            let audit = gamma::LimsupAudit {
                shape: shape.description(),
                final_gap: rows[k - 1].relative_gap,
                rows,
                trend_ok,
            };
            limsup_checks(&audit, shape, v, &mut limsup);
            let inf = gamma::gamma_liminf_audit(&fields, shape).map_err(num_err)?;
            for r in &inf.rows {
                let _ = writeln!(
                    liminf,
                    "{},{},{},{},{},{},{},{}",
                    csv_safe(&inf.shape),
                    r.epsilon,
                    r.energy,
                    r.bv_bound,
                    r.limit_energy,
                    r.l1_to_limit,
                    r.holds,
                    r.margin_to_limit
                );
            }
            for (eps, u) in &fields {
                let cs = energy::cs_lower_bound_check(u, *eps).map_err(num_err)?;
                v.checks.push(
                    Check::at_least(
                        Criterion::LiminfMechanism,
                        format!("recovery field of {} at epsilon {eps}", inf.shape),
                        cs.min_margin.unwrap_or(0.0),
                        0.0,
                    )
                    .and(cs.holds),
                );
            }
        }
        art.text("limsup.csv", &limsup)?;
        art.text("liminf.csv", &liminf)?;
    }

    let audit_grid = || -> Result<Grid, RunError> {
        let gsec = cfg.grid.as_ref().expect("validated");
        Grid::new(&gsec.extents(), &vec![gs.audit_nodes; gsec.extents.len()]).map_err(num_err)
    };

    if gs.random_fields > 0 {
        let eps = cfg.epsilon.expect("validated");
        let grid = audit_grid()?;
        let mut rng = noise_rng(cfg.seed, RANDOM_FIELD_STREAM);
        let mut csv = String::from("index,min_margin,integrated_margin,transition_nodes,holds\n");
        let mut worst = f64::INFINITY;
        let mut all = true;
        for i in 0..gs.random_fields {
            let u = random_phase_field(&grid, &mut rng);
            let cs = energy::cs_lower_bound_check(&u, eps).map_err(num_err)?;
            let m = cs.min_margin.unwrap_or(0.0);
            worst = worst.min(m);
            all &= cs.holds;
            let _ = writeln!(csv, "{i},{m},{},{},{}", cs.integrated_margin, cs.transition_nodes, cs.holds);
        }
        art.text("random_fields.csv", &csv)?;
        v.checks.push(
            Check::at_least(Criterion::LiminfMechanism, format!("{} random phase fields", gs.random_fields), worst, 0.0)
                .and(all),
        );
    }

    if gs.interpolation_calibration > 0 {
        let grid = audit_grid()?;
        let c_star = energy::calibrate_interpolation_constant(&grid, gs.interpolation_calibration, cfg.seed);
        let mut rng = noise_rng(cfg.seed, HOLDOUT_STREAM);
        let holdout: Vec<f64> = (0..gs.interpolation_holdout)
            .map(|_| energy::interpolation_check(&energy::random_piecewise_linear(&grid, &mut rng)).realized_constant)
            .collect();
        let max = holdout.iter().copied().filter(|c| c.is_finite()).fold(0.0, f64::max);
        let finite = holdout.iter().all(|c| c.is_finite());
        art.json(
            "interpolation.json",
            &InterpolationSummary {
                grid_nodes: grid.node_counts().to_vec(),
                calibration_fields: gs.interpolation_calibration,
                calibration_stream: 0,
                calibrated_constant: c_star,
                holdout_fields: gs.interpolation_holdout,
                holdout_stream: HOLDOUT_STREAM,
                holdout_max: max,
                holdout_constants: holdout,
            },
        )?;
        v.checks.push(
            Check::at_most(Criterion::Interpolation, format!("{} holdout fields", gs.interpolation_holdout), max, c_star)
                .and(finite),
        );
    }
    Ok(())
}

/// Stream of the seed used for holdout interpolation fields (calibration
/// uses stream 0).
pub const HOLDOUT_STREAM: u64 = 1;
/// Stream of the seed used for random phase fields.
pub const RANDOM_FIELD_STREAM: u64 = 2;
