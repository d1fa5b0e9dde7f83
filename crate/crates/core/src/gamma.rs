//! Γ-convergence harness: phase shapes, signed distances, recovery
//! sequences, perimeters, the liminf/limsup audits, threshold limits and the
//! local-minimality transfer audit.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{self, check_epsilon};
use crate::error::{config, input, Result};
use crate::geometry::{extract_level_set, point_segment_distance, point_triangle_distance, InterfaceMesh};
use crate::grid::{distance, Field, FieldKind, Grid, Point};

/// Analytic description of a phase set `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShapeSpec {
    /// `A = {x·normal > offset}`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Ball of the given radius (a disc in 2D).
    Disc { center: Vec<f64>, radius: f64 },
    /// Axis-aligned cube `|x − center|_∞ < half_width`.
    Square { center: Vec<f64>, half_width: f64 },
    /// `A = {x_last > base + amplitude·sin(2π·wavenumber·x_0)}` (2D).
    Graph { base: f64, amplitude: f64, wavenumber: f64 },
    /// `A = Ω` (`inside = true`) or `A = ∅`.
    Whole { inside: bool },
}

impl ShapeSpec {
    fn check(&self, dim: usize) -> Result<()> {
        match self {
            ShapeSpec::HalfSpace { normal, .. } => {
                if normal.len() != dim {
                    return input("half-space normal has the wrong dimension");
                }
                let n: f64 = normal.iter().map(|c| c * c).sum::<f64>().sqrt();
                if (n - 1.0).abs() > 1e-9 {
                    return input("half-space normal must be a unit vector");
                }
            }
            ShapeSpec::Disc { center, radius } => {
                if center.len() != dim || !(*radius > 0.0) {
                    return input("disc needs a center of the grid dimension and a positive radius");
                }
            }
            ShapeSpec::Square { center, half_width } => {
                if center.len() != dim || !(*half_width > 0.0) {
                    return input("square needs a center of the grid dimension and a positive half width");
                }
            }
            ShapeSpec::Graph { .. } => {
                if dim != 2 {
                    return input("graph shapes are two-dimensional");
                }
            }
            ShapeSpec::Whole { .. } => {}
        }
        Ok(())
    }

    /// Smooth level function, `≥ 0` exactly on `A`.
    pub fn level(&self, p: &Point, dim: usize) -> f64 {
        match self {
            ShapeSpec::HalfSpace { normal, offset } => {
                normal.iter().zip(p).map(|(n, x)| n * x).sum::<f64>() - offset
            }
            ShapeSpec::Disc { center, radius } => {
                let c = pad(center);
                radius - distance(p, &c, dim)
            }
            ShapeSpec::Square { center, half_width } => {
                let m = (0..dim).map(|a| (p[a] - center[a]).abs()).fold(0.0, f64::max);
                half_width - m
            }
            ShapeSpec::Graph {
                base,
                amplitude,
                wavenumber,
            } => p[1] - base - amplitude * (2.0 * std::f64::consts::PI * wavenumber * p[0]).sin(),
            ShapeSpec::Whole { inside } => {
                if *inside {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Perimeter of `A` inside the box `grid` spans, when it has a closed form
    /// (graphs use a fine midpoint rule).
    pub fn analytic_perimeter(&self, grid: &Grid) -> Option<f64> {
        let dim = grid.dim();
        match self {
            ShapeSpec::HalfSpace { normal, .. } => {
                // only axis-aligned planes have a simple cross-section
                let axis = normal.iter().position(|c| c.abs() == 1.0)?;
                Some((0..dim).filter(|a| *a != axis).map(|a| grid.extent(a).1 - grid.extent(a).0).product())
            }
            ShapeSpec::Disc { radius: r, .. } => Some(match dim {
                1 => 2.0,
                2 => 2.0 * std::f64::consts::PI * r,
                _ => 4.0 * std::f64::consts::PI * r * r,
            }),
            ShapeSpec::Square { half_width: w, .. } => Some(match dim {
                1 => 2.0,
                2 => 8.0 * w,
                _ => 24.0 * w * w,
            }),
            ShapeSpec::Graph { amplitude, wavenumber, .. } => {
                let (lo, hi) = grid.extent(0);
                let n = 100_000;
                let dx = (hi - lo) / n as f64;
                let k = 2.0 * std::f64::consts::PI * wavenumber;
                Some(
                    (0..n)
                        .map(|i| {
                            let x = lo + (i as f64 + 0.5) * dx;
                            (1.0 + (amplitude * k * (k * x).cos()).powi(2)).sqrt() * dx
                        })
                        .sum(),
                )
            }
            ShapeSpec::Whole { .. } => Some(0.0),
        }
    }

    /// Points on `∂A` at spacing at most `spacing` (2D shapes and 1D discs;
    /// `None` where no parametrization is provided).
    pub fn interface_points(&self, grid: &Grid, spacing: f64) -> Option<Vec<Point>> {
        let dim = grid.dim();
        let inside = |p: &Point| grid.contains(p);
        let mut pts = Vec::new();
        match (self, dim) {
            (ShapeSpec::HalfSpace { normal, offset }, 2) => {
                // walk along the tangent direction across the box
                let t = [-normal[1], normal[0]];
                let base = [normal[0] * offset, normal[1] * offset];
                let d = grid.diameter();
                let c = [
                    0.5 * (grid.extent(0).0 + grid.extent(0).1),
                    0.5 * (grid.extent(1).0 + grid.extent(1).1),
                ];
                let s0 = (c[0] - base[0]) * t[0] + (c[1] - base[1]) * t[1];
                let n = (2.0 * d / spacing).ceil() as usize;
                for k in 0..=n {
                    let s = s0 - d + 2.0 * d * k as f64 / n as f64;
                    let p = [base[0] + s * t[0], base[1] + s * t[1], 0.0];
                    if inside(&p) {
                        pts.push(p);
                    }
                }
            }
            (ShapeSpec::Disc { center, radius }, 2) => {
                let n = (2.0 * std::f64::consts::PI * radius / spacing).ceil() as usize;
                for k in 0..n {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    let p = [center[0] + radius * a.cos(), center[1] + radius * a.sin(), 0.0];
                    if inside(&p) {
                        pts.push(p);
                    }
                }
            }
            (ShapeSpec::Square { center, half_width }, 2) => {
                let n = (2.0 * half_width / spacing).ceil() as usize;
                for k in 0..n {
                    let s = -half_width + 2.0 * half_width * k as f64 / n as f64;
                    for p in [
                        [center[0] + s, center[1] - half_width, 0.0],
                        [center[0] + half_width, center[1] + s, 0.0],
                        [center[0] - s, center[1] + half_width, 0.0],
                        [center[0] - half_width, center[1] - s, 0.0],
                    ] {
                        if inside(&p) {
                            pts.push(p);
                        }
                    }
                }
            }
            (
                ShapeSpec::Graph {
                    base,
                    amplitude,
                    wavenumber,
                },
                2,
            ) => {
                let (lo, hi) = grid.extent(0);
                let slope = 1.0 + (2.0 * std::f64::consts::PI * wavenumber * amplitude).abs();
                let n = ((hi - lo) * slope / spacing).ceil() as usize;
                for k in 0..=n {
                    let x = lo + (hi - lo) * k as f64 / n as f64;
                    let y = base + amplitude * (2.0 * std::f64::consts::PI * wavenumber * x).sin();
                    let p = [x, y, 0.0];
                    if inside(&p) {
                        pts.push(p);
                    }
                }
            }
            (ShapeSpec::HalfSpace { normal, offset }, 1) => {
                pts.push([offset / normal[0], 0.0, 0.0]);
            }
            (ShapeSpec::Disc { center, radius }, 1) => {
                for s in [-radius, *radius] {
                    let p = [center[0] + s, 0.0, 0.0];
                    if inside(&p) {
                        pts.push(p);
                    }
                }
            }
            _ => return None,
        }
        Some(pts)
    }

    pub fn description(&self) -> String {
        match self {
            ShapeSpec::HalfSpace { normal, offset } => format!("half-space x.{normal:?} > {offset}"),
            ShapeSpec::Disc { center, radius } => format!("disc center {center:?} radius {radius}"),
            ShapeSpec::Square { center, half_width } => format!("square center {center:?} half width {half_width}"),
            ShapeSpec::Graph {
                base,
                amplitude,
                wavenumber,
            } => format!("graph y = {base} + {amplitude} sin(2 pi {wavenumber} x)"),
            ShapeSpec::Whole { inside } => format!("whole domain, inside = {inside}"),
        }
    }

    /// The shape sampled on a grid.
    pub fn instantiate(&self, grid: &Grid) -> Result<PhaseShape> {
        self.check(grid.dim())?;
        let dim = grid.dim();
        let level = Field::from_fn(grid, FieldKind::Free, |p| self.level(p, dim));
        Ok(PhaseShape {
            indicator: indicator_of(&level),
            level,
            analytic_perimeter: self.analytic_perimeter(grid).filter(|p| *p > 0.0),
            description: self.description(),
        })
    }
}

fn pad(v: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (a, c) in v.iter().enumerate().take(3) {
        p[a] = *c;
    }
    p
}

fn indicator_of(level: &Field) -> Field {
    let vals = level
        .values()
        .iter()
        .map(|v| if *v >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    Field::new(level.grid().clone(), FieldKind::Phase, vals).expect("values are ±1")
}

/// A phase set sampled on a grid: `u₀ = 2χ_A − 1` together with a continuous
/// level function (`≥ 0` exactly where `u₀ = +1`) used to locate `∂A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShape {
    pub indicator: Field,
    pub level: Field,
    pub analytic_perimeter: Option<f64>,
    pub description: String,
}

impl PhaseShape {
    /// A shape known only through its indicator; its boundary is located at
    /// the midlevel between neighboring ±1 nodes.
    pub fn from_indicator(indicator: Field, description: impl Into<String>) -> Result<PhaseShape> {
        if indicator.values().iter().any(|v| *v != 1.0 && *v != -1.0) {
            return input("indicator must take only the values -1 and +1");
        }
        Ok(PhaseShape {
            level: indicator.clone().into_free(),
            indicator: Field::new(indicator.grid().clone(), FieldKind::Phase, indicator.into_values())?,
            analytic_perimeter: None,
            description: description.into(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.indicator.grid()
    }

    /// The complement `Ω \ A`.
    pub fn complement(&self) -> PhaseShape {
        PhaseShape {
            indicator: self.indicator.negated(),
            // keep ties on the boundary inside the new set
            level: Field::new(
                self.level.grid().clone(),
                FieldKind::Free,
                self.level
                    .values()
                    .iter()
                    .map(|v| if *v == 0.0 { 0.0 } else { -v })
                    .collect(),
            )
            .expect("same grid"),
            analytic_perimeter: self.analytic_perimeter,
            description: format!("complement of {}", self.description),
        }
    }

    pub fn single_phase(&self) -> bool {
        let v = self.indicator.values();
        v.iter().all(|x| *x == v[0])
    }

    pub fn interface(&self) -> InterfaceMesh {
        extract_level_set(&self.level, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistance {
    pub field: Field,
    /// The shape has a single phase; `field` is then the constant
    /// `∓diameter` sentinel.
    pub single_phase: bool,
}

/// `d = +dist(x, ∂A)` outside `A`, `−dist` inside, by brute force over the
/// extracted interface elements.
pub fn signed_distance(shape: &PhaseShape) -> SignedDistance {
    let grid = shape.grid();
    let inside = |p: usize| shape.indicator.values()[p] > 0.0;
    let mesh = shape.interface();
    if shape.single_phase() || mesh.is_empty() {
        let s = if inside(0) { -grid.diameter() } else { grid.diameter() };
        return SignedDistance {
            field: Field::constant(grid, FieldKind::Free, s),
            single_phase: true,
        };
    }
    let dist: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let x = grid.coord(p);
            let d = (0..element_count(&mesh))
                .map(|e| element_distance(&mesh, e, &x))
                .fold(f64::INFINITY, f64::min);
            if inside(p) {
                -d
            } else {
                d
            }
        })
        .collect();
    SignedDistance {
        field: Field::new(grid.clone(), FieldKind::Free, dist).expect("grid length"),
        single_phase: false,
    }
}

fn element_count(mesh: &InterfaceMesh) -> usize {
    match mesh.dim {
        0 => mesh.vertices.len(),
        1 => mesh.segments.len(),
        _ => mesh.triangles.len(),
    }
}

fn element_vertices(mesh: &InterfaceMesh, e: usize) -> Vec<&Point> {
    match mesh.dim {
        0 => vec![&mesh.vertices[e]],
        1 => mesh.segments[e].iter().map(|i| &mesh.vertices[*i]).collect(),
        _ => mesh.triangles[e].iter().map(|i| &mesh.vertices[*i]).collect(),
    }
}

fn element_distance(mesh: &InterfaceMesh, e: usize, x: &Point) -> f64 {
    match mesh.dim {
        0 => (x[0] - mesh.vertices[e][0]).abs(),
        1 => {
            let [a, b] = mesh.segments[e];
            point_segment_distance(x, &mesh.vertices[a], &mesh.vertices[b])
        }
        _ => {
            let [a, b, c] = mesh.triangles[e];
            point_triangle_distance(x, &mesh.vertices[a], &mesh.vertices[b], &mesh.vertices[c])
        }
    }
}

/// Signed distance truncated at `cutoff`: values are exact where
/// `|d| < cutoff` and `±cutoff` elsewhere. Elements are binned into cells of
/// side `cutoff`, so each node only visits its 3^dim neighbouring cells.
pub fn truncated_signed_distance(shape: &PhaseShape, cutoff: f64) -> Result<SignedDistance> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return input(format!("distance cutoff must be positive, got {cutoff}"));
    }
    let grid = shape.grid();
    let dim = grid.dim();
    let inside = |p: usize| shape.indicator.values()[p] > 0.0;
    let mesh = shape.interface();
    if shape.single_phase() || mesh.is_empty() {
        let s = if inside(0) { -cutoff } else { cutoff };
        return Ok(SignedDistance {
            field: Field::constant(grid, FieldKind::Free, s),
            single_phase: true,
        });
    }
    let cell = |x: &Point| -> [i64; 3] {
        let mut c = [0; 3];
        for k in 0..dim {
            c[k] = (x[k] / cutoff).floor() as i64;
        }
        c
    };
    let mut bins: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for e in 0..element_count(&mesh) {
        let vs = element_vertices(&mesh, e);
        let (mut lo, mut hi) = (cell(vs[0]), cell(vs[0]));
        for v in &vs[1..] {
            let c = cell(v);
            for k in 0..dim {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for l in lo[2]..=hi[2] {
                    bins.entry([i, j, l]).or_default().push(e);
                }
            }
        }
    }
    let reach = |k: usize| if k < dim { -1..=1 } else { 0..=0 };
    let dist: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let x = grid.coord(p);
            let c = cell(&x);
            let mut d = cutoff;
            for i in reach(0) {
                for j in reach(1) {
                    for l in reach(2) {
                        if let Some(es) = bins.get(&[c[0] + i, c[1] + j, c[2] + l]) {
                            for &e in es {
                                d = d.min(element_distance(&mesh, e, &x));
                            }
                        }
                    }
                }
            }
            if inside(p) {
                -d
            } else {
                d
            }
        })
        .collect();
    Ok(SignedDistance {
        field: Field::new(grid.clone(), FieldKind::Free, dist).expect("grid length"),
        single_phase: false,
    })
}

/// `u_ε = clamp(−d/ε, −1, 1)`, which is `+1` inside `A`.
pub fn recovery_sequence(shape: &PhaseShape, epsilon: f64) -> Result<Field> {
    check_epsilon(epsilon)?;
    let h = shape.grid().max_spacing();
    if epsilon <= 2.0 * h {
        return config(format!("epsilon {epsilon} must exceed twice the spacing {h}"));
    }
    // only distances below ε survive the clamp
    let d = truncated_signed_distance(shape, epsilon)?;
    let vals = d.field.values().iter().map(|d| (-d / epsilon).clamp(-1.0, 1.0)).collect();
    Field::new(shape.grid().clone(), FieldKind::Phase, vals)
}

/// Length (2D), area (3D) or point count (1D) of `∂A`; zero for a single
/// phase.
pub fn perimeter(shape: &PhaseShape) -> f64 {
    if shape.single_phase() {
        return 0.0;
    }
    shape.interface().length_or_area
}

/// `u₀ = +1` where `u ≥ 0`, `−1` elsewhere, and `‖u − u₀‖_{L¹}`.
pub fn threshold_limit(u: &Field) -> (PhaseShape, f64) {
    let level = u.clone().into_free();
    let indicator = indicator_of(&level);
    let diff: Vec<f64> = u
        .values()
        .iter()
        .zip(indicator.values())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let l1 = u.grid().integrate_values(&diff, None);
    (
        PhaseShape {
            indicator,
            level,
            analytic_perimeter: None,
            description: "threshold limit".into(),
        },
        l1,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimsupRow {
    pub epsilon: f64,
    pub spacing: f64,
    pub energy: f64,
    pub four_perimeter: f64,
    pub relative_gap: f64,
    pub l1_to_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimsupAudit {
    pub shape: String,
    pub rows: Vec<LimsupRow>,
    /// Gap non-increasing over the last two halvings.
    pub trend_ok: bool,
    pub final_gap: f64,
}

/// Box grid with spacing at most `epsilon / cells_per_epsilon`.
pub fn grid_for_epsilon(extents: &[(f64, f64)], epsilon: f64, cells_per_epsilon: f64) -> Result<Grid> {
    let h = epsilon / cells_per_epsilon;
    let nodes: Vec<usize> = extents
        .iter()
        .map(|(lo, hi)| ((hi - lo) / h).round().max(2.0) as usize + 1)
        .collect();
    Grid::new(extents, &nodes)
}

/// Recovery energies against `4·perimeter` along a decreasing ε list, with
/// grids refined as `h = ε / cells_per_epsilon`.
pub fn gamma_limsup_audit(
    shape: &ShapeSpec,
    extents: &[(f64, f64)],
    epsilons: &[f64],
    cells_per_epsilon: f64,
) -> Result<LimsupAudit> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return input("epsilon list must be non-empty and decreasing");
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let grid = grid_for_epsilon(extents, eps, cells_per_epsilon)?;
        let s = shape.instantiate(&grid)?;
        let p = s.analytic_perimeter.unwrap_or_else(|| perimeter(&s));
        let u = recovery_sequence(&s, eps)?;
        let e = energy::energy(&u, eps)?.total;
        let l1 = u.l1_distance(&s.indicator)?;
        rows.push(LimsupRow {
            epsilon: eps,
            spacing: grid.max_spacing(),
            energy: e,
            four_perimeter: 4.0 * p,
            relative_gap: (e - 4.0 * p).abs() / (4.0 * p),
            l1_to_limit: l1,
        });
    }
    let k = rows.len();
    let trend_ok = rows[k.saturating_sub(3)..]
        .windows(2)
        .all(|w| w[1].relative_gap <= w[0].relative_gap);
    Ok(LimsupAudit {
        shape: shape.description(),
        final_gap: rows[k - 1].relative_gap,
        rows,
        trend_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiminfRow {
    pub epsilon: f64,
    pub energy: f64,
    /// `2∫|∇u|` over the whole domain.
    pub bv_bound: f64,
    pub limit_energy: f64,
    pub l1_to_limit: f64,
    /// `J_ε(u) ≥ 2∫|∇u|` with the pointwise margin `ε(|∇u| − 1/ε)² ≥ 0`.
    pub holds: bool,
    pub margin_to_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiminfAudit {
    pub shape: String,
    pub rows: Vec<LiminfRow>,
    pub all_hold: bool,
}

/// Check `J_ε(u_k) ≥ 2∫|∇u_k|` and report `J_ε(u_k) − J₀(u₀)`.
pub fn gamma_liminf_audit(fields: &[(f64, Field)], shape: &ShapeSpec) -> Result<LiminfAudit> {
    let mut rows = Vec::with_capacity(fields.len());
    for (eps, u) in fields {
        let s = shape.instantiate(u.grid())?;
        let p = s.analytic_perimeter.unwrap_or_else(|| perimeter(&s));
        let rep = energy::energy(u, *eps)?;
        let cs = energy::cs_lower_bound_check(u, *eps)?;
        rows.push(LiminfRow {
            epsilon: *eps,
            energy: rep.total,
            bv_bound: rep.bv_lower_bound,
            limit_energy: 4.0 * p,
            l1_to_limit: u.l1_distance(&s.indicator)?,
            holds: cs.holds,
            margin_to_limit: rep.total - 4.0 * p,
        });
    }
    Ok(LiminfAudit {
        shape: shape.description(),
        all_hold: rows.iter().all(|r| r.holds),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferEntry {
    pub description: String,
    pub l1_distance: f64,
    pub skipped: bool,
    pub perimeter: f64,
    /// `J₀(u₀) ≤ J₀(perturbation)`.
    pub passes: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub base_perimeter: f64,
    pub entries: Vec<TransferEntry>,
    pub all_pass: bool,
}

/// Probe L¹-local perimeter minimality of `u0` against perturbations within
/// distance `c`.
pub fn local_min_transfer_audit(u0: &PhaseShape, perturbations: &[PhaseShape], c: f64) -> Result<TransferReport> {
    let base = perimeter(u0);
    let mut entries = Vec::with_capacity(perturbations.len());
    for p in perturbations {
        let l1 = u0.indicator.l1_distance(&p.indicator)?;
        if l1 > c {
            entries.push(TransferEntry {
                description: p.description.clone(),
                l1_distance: l1,
                skipped: true,
                perimeter: f64::NAN,
                passes: true,
                note: format!("outside the L1 ball of radius {c}"),
            });
            continue;
        }
        let per = perimeter(p);
        entries.push(TransferEntry {
            description: p.description.clone(),
            l1_distance: l1,
            skipped: false,
            perimeter: per,
            passes: base <= per,
            note: String::new(),
        });
    }
    Ok(TransferReport {
        base_perimeter: base,
        all_pass: entries.iter().all(|e| e.passes),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::exact_profile;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Grid {
        Grid::cube(2, 0.0, 1.0, n).unwrap()
    }

    #[test]
    fn half_plane_distance_is_exact() {
        let g = unit(33);
        let s = ShapeSpec::HalfSpace { normal: vec![0.0, -1.0], offset: -0.5 }
            .instantiate(&g)
            .unwrap();
        let d = signed_distance(&s);
        assert!(!d.single_phase);
        for p in 0..g.len() {
            assert_abs_diff_eq!(d.field.values()[p], g.coord(p)[1] - 0.5, epsilon = 1e-12);
        }
        let c = signed_distance(&s.complement());
        for p in 0..g.len() {
            assert_abs_diff_eq!(c.field.values()[p], -d.field.values()[p], epsilon = 1e-12);
        }
    }

    #[test]
    fn truncated_distance_matches_brute_force() {
        let g = unit(97);
        for spec in [
            ShapeSpec::Disc { center: vec![0.4, 0.55], radius: 0.23 },
            ShapeSpec::HalfSpace { normal: vec![0.6, 0.8], offset: 0.7 },
        ] {
            let s = spec.instantiate(&g).unwrap();
            let full = signed_distance(&s);
            let cut = truncated_signed_distance(&s, 0.07).unwrap();
            for (a, b) in full.field.values().iter().zip(cut.field.values()) {
                assert_eq!(*b, a.clamp(-0.07, 0.07));
            }
        }
        let g1 = Grid::cube(1, -1.0, 1.0, 41).unwrap();
        let s = ShapeSpec::HalfSpace { normal: vec![1.0], offset: 0.1 }.instantiate(&g1).unwrap();
        let full = signed_distance(&s);
        let cut = truncated_signed_distance(&s, 0.3).unwrap();
        for (a, b) in full.field.values().iter().zip(cut.field.values()) {
            assert_eq!(*b, a.clamp(-0.3, 0.3));
        }
        assert!(truncated_signed_distance(&s, 0.0).is_err());
    }

    #[test]
    fn disc_distance_and_perimeter() {
        let g = unit(257);
        let spec = ShapeSpec::Disc { center: vec![0.5, 0.5], radius: 0.25 };
        let s = spec.instantiate(&g).unwrap();
        let d = signed_distance(&s);
        let h = g.max_spacing();
        for p in (0..g.len()).step_by(97) {
            let x = g.coord(p);
            let exact = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt() - 0.25;
            assert!((d.field.values()[p] - exact).abs() <= h);
        }
        let per = perimeter(&s);
        assert!((per - 2.0 * PI * 0.25).abs() / (2.0 * PI * 0.25) < 0.02);
    }

    #[test]
    fn single_phase_shapes() {
        let g = unit(17);
        let s = ShapeSpec::Whole { inside: true }.instantiate(&g).unwrap();
        assert_eq!(perimeter(&s), 0.0);
        let d = signed_distance(&s);
        assert!(d.single_phase);
        assert!(d.field.values().iter().all(|v| *v < 0.0));
    }

    #[test]
    fn recovery_of_half_plane_is_the_profile() {
        let g = unit(129);
        let s = ShapeSpec::HalfSpace { normal: vec![0.0, 1.0], offset: 0.5 }
            .instantiate(&g)
            .unwrap();
        let u = recovery_sequence(&s, 0.05).unwrap();
        let p = exact_profile(&g, 0.05, &[0.0, 1.0], 0.5).unwrap();
        assert!(u.linf_distance(&p).unwrap() < 1e-12);
        assert!(recovery_sequence(&s, 0.01).is_err());
    }

    #[test]
    fn threshold_examples() {
        let g = Grid::cube(1, -1.0, 1.0, 201).unwrap();
        let u = exact_profile(&g, 0.1, &[1.0], 0.0).unwrap();
        let (s, l1) = threshold_limit(&u);
        assert_abs_diff_eq!(l1, 0.1, epsilon = 1e-12);
        let (again, zero) = threshold_limit(&s.indicator);
        assert_eq!(again.indicator, s.indicator);
        assert_eq!(zero, 0.0);
        let c = Field::constant(&g, FieldKind::Phase, 0.3);
        assert!(threshold_limit(&c).0.indicator.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn transfer_audit_examples() {
        let g = unit(129);
        let flat = ShapeSpec::HalfSpace { normal: vec![0.0, 1.0], offset: 0.5 }
            .instantiate(&g)
            .unwrap();
        let waves: Vec<PhaseShape> = [0.01, 0.02]
            .iter()
            .map(|a| {
                ShapeSpec::Graph { base: 0.5, amplitude: *a, wavenumber: 1.0 }
                    .instantiate(&g)
                    .unwrap()
            })
            .collect();
        let r = local_min_transfer_audit(&flat, &waves, 0.1).unwrap();
        assert!(r.all_pass && r.entries.iter().all(|e| !e.skipped));
        let disc = ShapeSpec::Disc { center: vec![0.5, 0.5], radius: 0.25 }.instantiate(&g).unwrap();
        let smaller = ShapeSpec::Disc { center: vec![0.5, 0.5], radius: 0.23 }.instantiate(&g).unwrap();
        assert!(!local_min_transfer_audit(&disc, &[smaller], 0.1).unwrap().all_pass);
        assert!(local_min_transfer_audit(&disc, &[], 0.1).unwrap().all_pass);
    }
}
