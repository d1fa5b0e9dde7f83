//! Approximate critical points of `J_ε`: projected descent on the mollified
//! energy with ramp continuation, the harmonic band fixed point for the
//! Bernoulli system `Δu = 0`, `|∇u| = 1/ε`, profile constructors and the
//! first variation.

use serde::{Deserialize, Serialize};

use crate::energy::{self, check_epsilon, indicator, EnergyReport, MollifiedKernel, Mollifier};
use crate::error::{config, input, Result};
use crate::geometry::connected_components;
use crate::grid::{self, Field, FieldKind, Grid, NodeMask, Point, VectorField};

/// Number of accepted steps over which the relative energy decrease is
/// compared against `energy_tol`.
pub const STALL_WINDOW: usize = 50;

/// Relative slack allowed for an accepted descent step.
pub const DESCENT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lo,
    Hi,
}

/// Dirichlet value on one face of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceValue {
    pub axis: usize,
    pub side: Side,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Boundary {
    /// No constraint on ∂Ω.
    #[default]
    Natural,
    /// Fixed values on the listed faces, natural elsewhere.
    Dirichlet { faces: Vec<FaceValue> },
    /// Every boundary node keeps its initial value.
    HoldInitial,
}

impl Boundary {
    /// Dirichlet data `bottom = -1`, `top = +1` along the last axis.
    pub fn flat(grid: &Grid) -> Boundary {
        let axis = grid.dim() - 1;
        Boundary::Dirichlet {
            faces: vec![
                FaceValue { axis, side: Side::Lo, value: -1.0 },
                FaceValue { axis, side: Side::Hi, value: 1.0 },
            ],
        }
    }

    /// Node mask and values of the constrained nodes for a given initial field.
    pub fn constrained(&self, init: &Field) -> Result<(NodeMask, Vec<f64>)> {
        let g = init.grid();
        let mut mask = NodeMask::all(g.len(), false);
        let mut values = init.values().to_vec();
        match self {
            Boundary::Natural => {}
            Boundary::HoldInitial => {
                for p in 0..g.len() {
                    if g.is_boundary(p) {
                        mask.set(p, true);
                    }
                }
            }
            Boundary::Dirichlet { faces } => {
                for f in faces {
                    if f.axis >= g.dim() {
                        return config(format!("face axis {} on a {}-D grid", f.axis, g.dim()));
                    }
                    if !(-1.0..=1.0).contains(&f.value) {
                        return config(format!("Dirichlet value {} outside [-1, 1]", f.value));
                    }
                    let target = match f.side {
                        Side::Lo => 0,
                        Side::Hi => g.nodes(f.axis) - 1,
                    };
                    for p in 0..g.len() {
                        if g.multi_index(p)[f.axis] != target {
                            continue;
                        }
                        if mask.get(p) && values[p] != f.value {
                            return config("conflicting Dirichlet values where two faces meet");
                        }
                        mask.set(p, true);
                        values[p] = f.value;
                    }
                }
            }
        }
        Ok((mask, values))
    }
}

fn default_safety() -> f64 {
    0.2
}

fn default_max_iters() -> usize {
    200_000
}

fn default_energy_tol() -> f64 {
    1e-9
}

/// Ramp widths `1/2, 1/4, …` while above the smallest spacing, ending
/// exactly at that spacing.
pub fn halving_schedule(grid: &Grid) -> Vec<f64> {
    let h = grid.min_spacing();
    let mut out = Vec::new();
    let mut k = 0.5;
    while k > h * (1.0 + 1e-9) {
        out.push(k);
        k *= 0.5;
    }
    out.push(h.min(0.5));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    /// Ramp widths of the continuation; `None` selects
    /// `{0.5, 0.25, 0.125, max(h, 0.0625)}`.
    #[serde(default)]
    pub kappa_schedule: Option<Vec<f64>>,
    /// Fraction of the explicit stability bound used as step size.
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(epsilon: f64) -> SolverConfig {
        SolverConfig {
            epsilon,
            kappa_schedule: None,
            safety: default_safety(),
            max_iters: default_max_iters(),
            energy_tol: default_energy_tol(),
            boundary: Boundary::Natural,
            seed: 0,
        }
    }

    /// The continuation schedule on a given grid, validated.
    pub fn schedule(&self, grid: &Grid) -> Result<Vec<f64>> {
        let h = grid.min_spacing();
        let schedule = match &self.kappa_schedule {
            Some(s) => s.clone(),
            None => {
                let last = h.max(0.0625);
                let mut s: Vec<f64> = [0.5, 0.25, 0.125].into_iter().filter(|k| *k > last).collect();
                s.push(last);
                s
            }
        };
        if schedule.is_empty() {
            return config("empty kappa schedule");
        }
        for w in schedule.windows(2) {
            if w[1] >= w[0] {
                return config("kappa schedule must be strictly decreasing");
            }
        }
        if schedule.iter().any(|k| !(*k > 0.0 && *k < 1.0)) {
            return config("kappa values must lie in (0, 1)");
        }
        let last = schedule[schedule.len() - 1];
        if last < h * (1.0 - 1e-12) {
            return config(format!("final kappa {last} is below the grid spacing {h}"));
        }
        Ok(schedule)
    }

    /// Step size `safety / (4ε Σ_a h_a⁻²)`, which is `safety · h²/(4·dim·ε)`
    /// on isotropic grids.
    pub fn step(&self, grid: &Grid) -> Result<f64> {
        check_epsilon(self.epsilon)?;
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return config(format!("safety factor must lie in (0, 1], got {}", self.safety));
        }
        let inv: f64 = grid.spacings().iter().map(|h| 1.0 / (h * h)).sum();
        Ok(self.safety / (4.0 * self.epsilon * inv))
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        self.schedule(grid)?;
        self.step(grid)?;
        if self.max_iters == 0 {
            return config("max_iters must be positive");
        }
        if !(self.energy_tol >= 0.0) {
            return config("energy_tol must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub kappa: f64,
    /// Accepted steps.
    pub iterations: usize,
    /// Rejected trial steps (step halved).
    pub backtracks: usize,
    pub converged: bool,
    /// Mollified energy after every tenth accepted step, plus the final one.
    pub energy_history: Vec<f64>,
    /// Largest relative increase over any accepted step.
    pub max_relative_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub step: f64,
    pub stages: Vec<StageTrace>,
    pub converged: bool,
    pub report: EnergyReport,
    pub stationarity_residual: f64,
    pub hessian_max: f64,
}

/// Projected descent on the mollified energy with ramp continuation.
pub fn minimize(cfg: &SolverConfig, init: &Field) -> Result<(Field, SolveTrace)> {
    let grid = init.grid().clone();
    cfg.validate(&grid)?;
    if init.kind() != FieldKind::Phase {
        return input("initial field must be a phase field");
    }
    let schedule = cfg.schedule(&grid)?;
    let tau0 = cfg.step(&grid)?;
    let (fixed, mut u) = cfg.boundary.constrained(init)?;
    let fixed = fixed.bits().to_vec();
    let kernel = MollifiedKernel::new(&grid, cfg.epsilon)?;
    let mut field = vec![0.0; u.len()];
    let mut trial = vec![0.0; u.len()];
    let mut trial_field = vec![0.0; u.len()];
    let mut stages = Vec::with_capacity(schedule.len());
    for kappa in schedule {
        let m = Mollifier::new(kappa)?;
        let mut e = kernel.evaluate(&u, &m, &mut field);
        if !e.is_finite() {
            return input("initial energy is not finite");
        }
        let mut window = vec![e];
        let mut stage = StageTrace {
            kappa,
            iterations: 0,
            backtracks: 0,
            converged: false,
            energy_history: vec![e],
            max_relative_increase: 0.0,
        };
        let mut tau = tau0;
        let free = fixed.iter().any(|f| !f);
        while free && stage.iterations < cfg.max_iters {
            for p in 0..u.len() {
                trial[p] = if fixed[p] {
                    u[p]
                } else {
                    (u[p] - tau * field[p]).clamp(-1.0, 1.0)
                };
            }
            let e_new = kernel.evaluate(&trial, &m, &mut trial_field);
            let rise = (e_new - e) / e.abs().max(f64::MIN_POSITIVE);
            if rise > DESCENT_SLACK {
                stage.backtracks += 1;
                tau *= 0.5;
                if tau < tau0 * 1e-12 {
                    break;
                }
                continue;
            }
            stage.max_relative_increase = stage.max_relative_increase.max(rise);
            std::mem::swap(&mut u, &mut trial);
            std::mem::swap(&mut field, &mut trial_field);
            e = e_new;
            stage.iterations += 1;
            if stage.iterations % 10 == 0 {
                stage.energy_history.push(e);
            }
            window.push(e);
            if window.len() > STALL_WINDOW + 1 {
                window.remove(0);
            }
            if window.len() == STALL_WINDOW + 1 {
                let old = window[0];
                if old - e <= cfg.energy_tol * e.abs().max(f64::MIN_POSITIVE) {
                    stage.converged = true;
                    break;
                }
            }
        }
        if !free {
            stage.converged = true;
        }
        if stage.energy_history.last() != Some(&e) {
            stage.energy_history.push(e);
        }
        stages.push(stage);
    }
    let out = Field::new(grid, FieldKind::Phase, u)?;
    let report = energy::energy(&out, cfg.epsilon)?;
    let stationarity_residual = stationarity_residual(&out, cfg.epsilon)?;
    let trace = SolveTrace {
        step: tau0,
        converged: stages.iter().all(|s| s.converged),
        stages,
        report,
        stationarity_residual,
        hessian_max: hessian_max(&out),
    };
    Ok((out, trace))
}

/// Largest second difference `|∂_a∂_b u|` over interior nodes.
pub fn hessian_max(u: &Field) -> f64 {
    let g = u.grid();
    let v = u.values();
    let mut best = 0.0f64;
    for p in 0..g.len() {
        let idx = g.multi_index(p);
        for a in 0..g.dim() {
            if idx[a] == 0 || idx[a] + 1 == g.nodes(a) {
                continue;
            }
            let (sa, ha) = (g.stride(a), g.spacing(a));
            let d2 = (v[p + sa] - 2.0 * v[p] + v[p - sa]) / (ha * ha);
            best = best.max(d2.abs());
            for b in a + 1..g.dim() {
                if idx[b] == 0 || idx[b] + 1 == g.nodes(b) {
                    continue;
                }
                let (sb, hb) = (g.stride(b), g.spacing(b));
                let m = (v[p + sa + sb] - v[p + sa - sb] - v[p - sa + sb] + v[p - sa - sb])
                    / (4.0 * ha * hb);
                best = best.max(m.abs());
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandStatus {
    Converged,
    NotConverged,
    Collapsed,
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTrace {
    pub status: BandStatus,
    /// Relaxation sweeps of each Laplace solve.
    pub laplace_sweeps: Vec<usize>,
    /// Band nodes added or removed after each Laplace solve.
    pub edge_moves: Vec<usize>,
    /// Range of `ε|∇u|` over band-edge nodes of the final iterate.
    pub edge_gradient_min: f64,
    pub edge_gradient_max: f64,
    pub report: EnergyReport,
    pub stationarity_residual: f64,
}

/// Relative deviation of `ε|∇u|` from one tolerated before a band edge moves.
pub const BAND_HYSTERESIS: f64 = 0.05;
const SOR_OMEGA: f64 = 1.85;
const MAX_BAND_ROUNDS: usize = 10_000;
const MAX_SWEEPS: usize = 1_000_000;

struct BandProblem<'a> {
    grid: &'a Grid,
    fixed: Vec<bool>,
    fixed_values: Vec<f64>,
}

impl BandProblem<'_> {
    /// Sign of each complement node from the Dirichlet data of its
    /// connected component.
    fn complement_signs(&self, band: &NodeMask) -> Option<Vec<f64>> {
        let comps = connected_components(self.grid, &band.not());
        let mut sign = vec![0.0; comps.components.len()];
        for p in 0..self.grid.len() {
            if let (Some(c), true) = (comps.labels[p], self.fixed[p]) {
                let s = self.fixed_values[p].signum();
                if sign[c] == 0.0 {
                    sign[c] = s;
                } else if sign[c] != s {
                    return None;
                }
            }
        }
        if sign.iter().any(|s| *s == 0.0) {
            return None;
        }
        Some(
            comps
                .labels
                .iter()
                .map(|l| l.map_or(0.0, |c| sign[c]))
                .collect(),
        )
    }

    /// Gauss–Seidel with over-relaxation on band nodes; natural (mirror)
    /// stencil where the band touches ∂Ω.
    fn laplace(&self, band: &NodeMask, u: &mut [f64]) -> usize {
        let g = self.grid;
        let axes: Vec<(usize, usize, f64)> = (0..g.dim())
            .map(|a| (g.nodes(a), g.stride(a), 1.0 / (g.spacing(a) * g.spacing(a))))
            .collect();
        let diag: f64 = axes.iter().map(|a| 2.0 * a.2).sum();
        let tol = 1e-8 / (g.min_spacing() * g.min_spacing());
        let nodes: Vec<usize> = band.indices().filter(|p| !self.fixed[*p]).collect();
        for sweep in 1..=MAX_SWEEPS {
            let mut residual = 0.0f64;
            for &p in &nodes {
                let mut acc = 0.0;
                for &(n, s, w) in &axes {
                    let i = (p / s) % n;
                    let (lo, hi) = if i == 0 {
                        (u[p + s], u[p + s])
                    } else if i + 1 == n {
                        (u[p - s], u[p - s])
                    } else {
                        (u[p - s], u[p + s])
                    };
                    acc += (lo + hi) * w;
                }
                let r = acc - diag * u[p];
                residual = residual.max(r.abs());
                u[p] += SOR_OMEGA * r / diag;
            }
            if residual < tol {
                return sweep;
            }
        }
        MAX_SWEEPS
    }
}

/// Fixed point of the Bernoulli system on a moving band. Edges adjacent to
/// the +1 and −1 phases move on alternating rounds so that a symmetric band
/// cannot step over the admissible window.
pub fn harmonic_band_solve(cfg: &SolverConfig, grid: &Grid, band_init: &NodeMask) -> Result<(Field, BandTrace)> {
    check_epsilon(cfg.epsilon)?;
    if band_init.len() != grid.len() {
        return input("band mask does not match the grid");
    }
    if !band_init.any() {
        return input("initial band is empty");
    }
    if connected_components(grid, band_init).components.len() != 1 {
        return input("initial band is not connected");
    }
    let zero = Field::constant(grid, FieldKind::Phase, 0.0);
    let (fixed, fixed_values) = cfg.boundary.constrained(&zero)?;
    let prob = BandProblem {
        grid,
        fixed: fixed.bits().to_vec(),
        fixed_values,
    };
    let Some(mut signs) = prob.complement_signs(band_init) else {
        return input("band does not separate +1 and -1 Dirichlet regions");
    };
    let mut band = band_init.clone();
    let mut u: Vec<f64> = (0..grid.len())
        .map(|p| if band.get(p) { 0.0 } else { signs[p] })
        .collect();
    let mut sweeps = Vec::new();
    let mut moves = Vec::new();
    let mut status = BandStatus::NotConverged;
    let mut quiet = 0;
    for round in 0..MAX_BAND_ROUNDS {
        sweeps.push(prob.laplace(&band, &mut u));
        let side = if round % 2 == 0 { 1.0 } else { -1.0 };
        let grad = grid::gradient_of(grid, &u);
        let mut add = NodeMask::all(grid.len(), false);
        let mut remove = NodeMask::all(grid.len(), false);
        let mut outward = NodeMask::all(grid.len(), false);
        for p in band.indices() {
            let outside: Vec<usize> = grid.neighbors(p).filter(|q| !band.get(*q)).collect();
            if outside.is_empty() || outside.iter().all(|q| signs[*q] != side) {
                continue;
            }
            let slope = cfg.epsilon * grad.at(p).iter().map(|d| d * d).sum::<f64>().sqrt();
            if slope > 1.0 + BAND_HYSTERESIS {
                outward.set(p, true);
                for q in outside {
                    if signs[q] == side && !prob.fixed[q] {
                        add.set(q, true);
                    }
                }
            } else if slope < 1.0 - BAND_HYSTERESIS && !prob.fixed[p] {
                remove.set(p, true);
            }
        }
        // outward motion wins over inward motion on adjacent nodes
        for p in remove.indices().collect::<Vec<_>>() {
            if grid.neighbors(p).any(|q| outward.get(q) || add.get(q)) {
                remove.set(p, false);
            }
        }
        let count = add.count() + remove.count();
        moves.push(count);
        if count == 0 {
            quiet += 1;
            if quiet == 2 {
                status = BandStatus::Converged;
                break;
            }
            continue;
        }
        quiet = 0;
        let mut next = band.clone();
        for p in add.indices() {
            next.set(p, true);
        }
        for p in remove.indices() {
            next.set(p, false);
        }
        if !next.any() {
            status = BandStatus::Collapsed;
            break;
        }
        if connected_components(grid, &next).components.len() != 1 {
            status = BandStatus::Disconnected;
            break;
        }
        let Some(next_signs) = prob.complement_signs(&next) else {
            status = BandStatus::Disconnected;
            break;
        };
        for p in remove.indices() {
            u[p] = next_signs[p];
        }
        band = next;
        signs = next_signs;
    }
    let out = Field::new(grid.clone(), FieldKind::Phase, u.iter().map(|v| v.clamp(-1.0, 1.0)).collect())?;
    let grad = grid::gradient(&out);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in band.indices() {
        if grid.neighbors(p).any(|q| !band.get(q)) {
            let s = cfg.epsilon * grad.at(p).iter().map(|d| d * d).sum::<f64>().sqrt();
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    let report = energy::energy(&out, cfg.epsilon)?;
    let trace = BandTrace {
        status,
        laplace_sweeps: sweeps,
        edge_moves: moves,
        edge_gradient_min: lo,
        edge_gradient_max: hi,
        report,
        stationarity_residual: stationarity_residual(&out, cfg.epsilon)?,
    };
    Ok((out, trace))
}

/// `clamp((x·normal − offset)/ε, −1, 1)`.
pub fn exact_profile(grid: &Grid, epsilon: f64, normal: &[f64], offset: f64) -> Result<Field> {
    check_epsilon(epsilon)?;
    if normal.len() != grid.dim() {
        return input("normal has the wrong dimension");
    }
    let norm: f64 = normal.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return input(format!("normal must have unit length, got {norm}"));
    }
    Ok(Field::from_fn(grid, FieldKind::Phase, |p| {
        let s: f64 = normal.iter().zip(p).map(|(n, x)| n * x).sum();
        (s - offset) / epsilon
    }))
}

/// Stacked flat transition layers normal to the last axis. Sheet `k` at
/// height `offsets[k]` goes from `−signs[k]` below to `signs[k]` above, so
/// consecutive signs must alternate.
pub fn multi_sheet_profile(grid: &Grid, epsilon: f64, offsets: &[f64], signs: &[f64]) -> Result<Field> {
    check_epsilon(epsilon)?;
    if offsets.is_empty() || offsets.len() != signs.len() {
        return input("need one sign per offset and at least one sheet");
    }
    if signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
        return input("sheet signs must be +1 or -1");
    }
    for w in offsets.windows(2) {
        if w[1] - w[0] <= 4.0 * epsilon {
            return input(format!(
                "sheets at {} and {} overlap: gaps must exceed 4 epsilon",
                w[0], w[1]
            ));
        }
    }
    for w in signs.windows(2) {
        if w[0] == w[1] {
            return input("consecutive sheet signs must alternate");
        }
    }
    let axis = grid.dim() - 1;
    Ok(Field::from_fn(grid, FieldKind::Phase, |p| {
        let s = p[axis];
        let k = (0..offsets.len())
            .min_by(|a, b| {
                (s - offsets[*a]).abs().total_cmp(&(s - offsets[*b]).abs())
            })
            .unwrap_or(0);
        signs[k] * (s - offsets[k]) / epsilon
    }))
}

/// Squared one-sided differences per axis, averaged like the Dirichlet energy.
fn axis_edge_sq(grid: &Grid, v: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.nodes(axis);
    let s = grid.stride(axis);
    let h2 = grid.spacing(axis).powi(2);
    (0..v.len())
        .map(|p| {
            let i = (p / s) % n;
            if i == 0 {
                (v[p + s] - v[p]).powi(2) / h2
            } else if i + 1 == n {
                (v[p] - v[p - s]).powi(2) / h2
            } else {
                0.5 * ((v[p + s] - v[p]).powi(2) + (v[p] - v[p - s]).powi(2)) / h2
            }
        })
        .collect()
}

/// `δJ_ε(u)[g] = ∫_{χ(u)=1} −2ε ∇u·(Dg ∇u) + ε|∇u|² div g + div g/ε`.
///
/// Squared partial derivatives use the edge differences of the energy;
/// mixed products and `Dg` use central differences.
pub fn first_variation(u: &Field, epsilon: f64, g: &VectorField) -> Result<f64> {
    check_epsilon(epsilon)?;
    let grid = u.grid();
    grid.check_same(g.grid())?;
    let dim = grid.dim();
    let scale = g.max_norm().max(1.0);
    for p in 0..grid.len() {
        if grid.is_boundary(p) && g.at(p).iter().any(|c| c.abs() > 1e-12 * scale) {
            return input("test vector field must vanish on the boundary");
        }
    }
    let v = u.values();
    let du = grid::gradient(u);
    let sq: Vec<Vec<f64>> = (0..dim).map(|a| axis_edge_sq(grid, v, a)).collect();
    // dg[i][j] = ∂_j g_i
    let dg: Vec<Vec<Vec<f64>>> = (0..dim)
        .map(|i| {
            let gi = g.component(i);
            (0..dim).map(|j| grid::axis_derivative(grid, &gi, j)).collect()
        })
        .collect();
    let mut total = 0.0;
    for p in 0..grid.len() {
        if indicator(v[p]) == 0.0 {
            continue;
        }
        let grad_sq: f64 = (0..dim).map(|a| sq[a][p]).sum();
        let div: f64 = (0..dim).map(|a| dg[a][a][p]).sum();
        let mut quad = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let prod = if i == j { sq[i][p] } else { du.at(p)[i] * du.at(p)[j] };
                quad += prod * dg[i][j][p];
            }
        }
        let density = -2.0 * epsilon * quad + epsilon * grad_sq * div + div / epsilon;
        total += grid.weight(p) * density;
    }
    Ok(total)
}

/// `sup|g| + sup|Dg|` with `Dg` by central differences.
pub fn c1_norm(g: &VectorField) -> f64 {
    let grid = g.grid();
    let mut d = 0.0f64;
    for i in 0..grid.dim() {
        let gi = g.component(i);
        for j in 0..grid.dim() {
            for x in grid::axis_derivative(grid, &gi, j) {
                d = d.max(x.abs());
            }
        }
    }
    g.max_norm() + d
}

/// Ten compactly supported `C²` bump fields `(1 − |x−c|²/r²)³ e_a` inside the
/// domain: five centers times two axes in 2D and 3D, ten centers in 1D.
pub fn bump_basis(grid: &Grid) -> Vec<VectorField> {
    let dim = grid.dim();
    let rel = |f: [f64; 3]| -> Point {
        let mut c = [0.0; 3];
        for a in 0..dim {
            let (lo, hi) = grid.extent(a);
            c[a] = lo + f[a] * (hi - lo);
        }
        c
    };
    let span = (0..dim)
        .map(|a| grid.extent(a).1 - grid.extent(a).0)
        .fold(f64::INFINITY, f64::min);
    let mut fields = Vec::new();
    let mut push = |c: Point, axis: usize, r: f64| {
        fields.push(VectorField::from_fn(grid, |p| {
            let d2: f64 = (0..dim).map(|a| (p[a] - c[a]).powi(2)).sum();
            let mut out = [0.0; 3];
            if d2 < r * r {
                out[axis] = (1.0 - d2 / (r * r)).powi(3);
            }
            out
        }));
    };
    if dim == 1 {
        for k in 0..10 {
            let f = 0.3 + 0.4 * k as f64 / 9.0;
            push(rel([f, 0.0, 0.0]), 0, 0.2 * span);
        }
    } else {
        let last = dim - 1;
        let mut centers = Vec::new();
        for shift in [0.0, -0.2, 0.2] {
            let mut f = [0.5; 3];
            f[0] += shift;
            centers.push(f);
        }
        for shift in [-0.15, 0.15] {
            let mut f = [0.5; 3];
            f[last] += shift;
            centers.push(f);
        }
        for axis in [0, last] {
            for f in &centers {
                push(rel(*f), axis, 0.2 * span);
            }
        }
    }
    fields
}

/// `max_g |δJ_ε(u)[g]| / ‖g‖_C¹` over [`bump_basis`].
pub fn stationarity_residual(u: &Field, epsilon: f64) -> Result<f64> {
    let mut best = 0.0f64;
    for g in bump_basis(u.grid()) {
        let n = c1_norm(&g);
        if n > 0.0 {
            best = best.max(first_variation(u, epsilon, &g)?.abs() / n);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn profile_formula_and_symmetry() {
        let g = Grid::cube(1, -0.2, 0.2, 9).unwrap();
        let u = exact_profile(&g, 0.1, &[1.0], 0.0).unwrap();
        assert_eq!(u.values()[4], 0.0);
        assert_abs_diff_eq!(u.values()[5], 0.5, epsilon = 1e-12);
        assert_eq!(u.values()[8], 1.0);
        assert_eq!(u.values()[6], 1.0);
        let w = exact_profile(&g, 0.1, &[-1.0], -0.0).unwrap();
        assert_eq!(w, u.negated());
        assert!(exact_profile(&g, 0.1, &[2.0], 0.0).is_err());
    }

    #[test]
    fn multi_sheet_validation_and_reduction() {
        let g = Grid::cube(2, 0.0, 1.0, 41).unwrap();
        let one = multi_sheet_profile(&g, 0.05, &[0.5], &[1.0]).unwrap();
        assert_eq!(one, exact_profile(&g, 0.05, &[0.0, 1.0], 0.5).unwrap());
        assert!(multi_sheet_profile(&g, 0.05, &[0.4, 0.55], &[1.0, -1.0]).is_err());
        assert!(multi_sheet_profile(&g, 0.05, &[0.3, 0.6], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn halving_schedule_ends_at_spacing() {
        let g = Grid::new(&[(0.0, 1.0), (0.0, 1.0)], &[17, 161]).unwrap();
        let s = halving_schedule(&g);
        // 1/128 is still above h = 1/160
        assert_eq!(s.len(), 8);
        assert_eq!(s[6], 1.0 / 128.0);
        assert_eq!(s[7], g.min_spacing());
        let mut c = SolverConfig::new(0.05);
        c.kappa_schedule = Some(s);
        assert!(c.validate(&g).is_ok());
    }

    #[test]
    fn default_schedule_and_step() {
        let g = Grid::cube(2, 0.0, 1.0, 101).unwrap();
        let c = SolverConfig::new(0.05);
        assert_eq!(c.schedule(&g).unwrap(), vec![0.5, 0.25, 0.125, 0.0625]);
        assert_abs_diff_eq!(c.step(&g).unwrap(), 0.2 * 1e-4 / (8.0 * 0.05), epsilon = 1e-15);
        let coarse = Grid::cube(2, 0.0, 1.0, 5).unwrap();
        assert_eq!(c.schedule(&coarse).unwrap(), vec![0.5, 0.25]);
        let mut bad = c.clone();
        bad.kappa_schedule = Some(vec![0.5, 0.5]);
        assert!(bad.validate(&g).is_err());
        bad.kappa_schedule = Some(vec![0.5, 0.001]);
        assert!(bad.validate(&g).is_err());
    }

    #[test]
    fn first_variation_trivial_cases() {
        let g = Grid::cube(2, 0.0, 1.0, 33).unwrap();
        let u = exact_profile(&g, 0.1, &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(first_variation(&u, 0.1, &VectorField::zeros(&g)).unwrap(), 0.0);
        let one = Field::constant(&g, FieldKind::Phase, 1.0);
        for b in bump_basis(&g) {
            assert_eq!(first_variation(&one, 0.1, &b).unwrap(), 0.0);
        }
        let bad = VectorField::from_fn(&g, |_| [1.0, 0.0, 0.0]);
        assert!(first_variation(&u, 0.1, &bad).is_err());
    }

    #[test]
    fn all_dirichlet_constant_is_untouched() {
        let g = Grid::cube(2, 0.0, 1.0, 9).unwrap();
        let one = Field::constant(&g, FieldKind::Phase, 1.0);
        let mut c = SolverConfig::new(0.2);
        c.boundary = Boundary::HoldInitial;
        c.kappa_schedule = Some(vec![0.5, 0.25]);
        // interior nodes are free but already at the global minimum
        let (u, t) = minimize(&c, &one).unwrap();
        assert_eq!(u, one);
        assert_eq!(t.report.total, 0.0);
        assert!(t.stages.iter().all(|s| s.converged && s.iterations == STALL_WINDOW));
    }
}
