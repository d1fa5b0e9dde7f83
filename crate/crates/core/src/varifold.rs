//! Observables of the diffuse varifold `μ_ε = e_ε dx` with normals
//! `ν = ∇u/|∇u|`: ball masses, monotonicity ratios, tilt excess, first
//! variation, density and sheet counts, and the parity audit.

use serde::{Deserialize, Serialize};

use crate::energy::{self, check_epsilon, Densities};
use crate::error::{input, Result};
use crate::geometry::extract_level_set;
use crate::grid::{self, distance, Field, Grid, NodeMask, Point, VectorField};

/// Gradients below `NORMAL_FLOOR / ε` get the zero normal.
pub const NORMAL_FLOOR: f64 = 1e-12;

/// Relative decrease of consecutive monotonicity ratios tolerated as
/// discretization noise.
pub const MONOTONICITY_SLACK: f64 = 1e-2;

/// Volume of the unit ball in `R^k` for `k = 0, 1, 2`.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => std::f64::consts::PI,
    }
}

/// `ν = ∇u/|∇u|` (central differences) where `|∇u| > NORMAL_FLOOR/ε`, zero
/// elsewhere.
pub fn normal_field(u: &Field, epsilon: f64) -> VectorField {
    let mut g = grid::gradient(u);
    let floor = NORMAL_FLOOR / epsilon;
    let dim = u.grid().dim();
    for p in 0..u.grid().len() {
        let v = g.at_mut(p);
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in v.iter_mut().take(dim) {
            *c = if n > floor { *c / n } else { 0.0 };
        }
    }
    g
}

/// The energy measure of one field, ready for many ball queries.
#[derive(Debug, Clone)]
pub struct EnergyMeasure {
    grid: Grid,
    epsilon: f64,
    weighted: Vec<f64>,
}

impl EnergyMeasure {
    pub fn new(u: &Field, epsilon: f64) -> Result<EnergyMeasure> {
        let d = energy::densities(u, epsilon)?;
        let grid = u.grid().clone();
        let weighted = d
            .energy
            .iter()
            .enumerate()
            .map(|(p, e)| e * grid.weight(p))
            .collect();
        Ok(EnergyMeasure {
            grid,
            epsilon,
            weighted,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `μ_ε(B_r(center))` and whether the ball leaves the domain.
    pub fn ball(&self, center: &Point, r: f64) -> Result<(f64, bool)> {
        let h = self.grid.max_spacing();
        if !(r > 2.0 * h) {
            return input(format!("ball radius {r} must exceed twice the spacing {h}"));
        }
        let mut m = 0.0;
        self.grid.for_each_in_ball(center, r, |p| m += self.weighted[p]);
        let clipped = !self.grid.contains(center) || self.grid.distance_to_boundary(center) < r;
        Ok((m, clipped))
    }
}

/// `μ_ε(B_r(center))`; the flag reports a ball clipped by ∂Ω.
pub fn ball_mass(u: &Field, epsilon: f64, center: &Point, r: f64) -> Result<(f64, bool)> {
    EnergyMeasure::new(u, epsilon)?.ball(center, r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarifoldSample {
    pub center: Point,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    /// `μ(B_r)/r^{n−1}`.
    pub ratios: Vec<f64>,
    /// Some ball reached outside the domain.
    pub clipped: bool,
    /// Largest relative decrease between consecutive ratios (0 if monotone).
    pub max_relative_drop: f64,
    /// Decreases larger than [`MONOTONICITY_SLACK`].
    pub hard_violations: usize,
    pub theta: Option<f64>,
    pub sheets: Option<usize>,
    pub rounding_gap: Option<f64>,
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return input("empty radius list");
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return input("radii must be strictly increasing");
    }
    Ok(())
}

impl EnergyMeasure {
    pub fn monotonicity(&self, center: &Point, radii: &[f64]) -> Result<VarifoldSample> {
        check_radii(radii)?;
        let n = self.grid.dim();
        let mut masses = Vec::with_capacity(radii.len());
        let mut clipped = false;
        for r in radii {
            let (m, c) = self.ball(center, *r)?;
            masses.push(m);
            clipped |= c;
        }
        let ratios: Vec<f64> = masses
            .iter()
            .zip(radii)
            .map(|(m, r)| m / r.powi(n as i32 - 1))
            .collect();
        let mut max_drop = 0.0f64;
        let mut hard = 0;
        for w in ratios.windows(2) {
            if w[1] < w[0] {
                let drop = (w[0] - w[1]) / w[0];
                max_drop = max_drop.max(drop);
                if drop > MONOTONICITY_SLACK {
                    hard += 1;
                }
            }
        }
        Ok(VarifoldSample {
            center: *center,
            radii: radii.to_vec(),
            masses,
            ratios,
            clipped,
            max_relative_drop: max_drop,
            hard_violations: hard,
            theta: None,
            sheets: None,
            rounding_gap: None,
        })
    }

    pub fn density(&self, center: &Point, radii: &[f64]) -> Result<VarifoldSample> {
        let mut s = self.monotonicity(center, radii)?;
        let n = self.grid.dim();
        let omega = unit_ball_volume(n - 1);
        let mut dens: Vec<f64> = s
            .masses
            .iter()
            .zip(radii)
            .map(|(m, r)| m / (omega * r.powi(n as i32 - 1)))
            .collect();
        dens.sort_by(f64::total_cmp);
        let k = dens.len();
        let theta = if k % 2 == 1 {
            dens[k / 2]
        } else {
            0.5 * (dens[k / 2 - 1] + dens[k / 2])
        };
        let sheets = (theta / 4.0).round();
        s.theta = Some(theta);
        s.sheets = Some(sheets as usize);
        s.rounding_gap = Some((theta / 4.0 - sheets).abs());
        Ok(s)
    }
}

/// Ratios `r^{1−n} μ(B_r)` over the given radii.
pub fn monotonicity_profile(u: &Field, epsilon: f64, center: &Point, radii: &[f64]) -> Result<VarifoldSample> {
    EnergyMeasure::new(u, epsilon)?.monotonicity(center, radii)
}

/// Radii of a density window: `count` values evenly spread over `[lo, hi]`.
pub fn window_radii(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(hi > lo) || count == 0 {
        return input(format!("empty radius window [{lo}, {hi}]"));
    }
    if count == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    Ok((0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect())
}

/// Median of `μ(B_r)/(ω_{n−1} r^{n−1})` over nine radii in the window and
/// the nearest sheet count.
pub fn density_and_sheets(u: &Field, epsilon: f64, center: &Point, window: (f64, f64)) -> Result<VarifoldSample> {
    check_epsilon(epsilon)?;
    let (lo, hi) = window;
    if lo < 4.0 * epsilon * (1.0 - 1e-12) {
        return input(format!("window starts at {lo}, below 4 epsilon"));
    }
    let radii = window_radii(lo, hi, 9)?;
    EnergyMeasure::new(u, epsilon)?.density(center, &radii)
}

/// `∫_{|∇u|>floor} Dg : (I − ν⊗ν) e_ε`.
pub fn first_variation_varifold(u: &Field, epsilon: f64, g: &VectorField) -> Result<f64> {
    let d = energy::densities(u, epsilon)?;
    varifold_variation_with(u, epsilon, g, &d, false)
}

/// `−∫ Dg : (ν⊗ν) ξ_ε`, the value the varifold first variation takes on a
/// stationary field.
pub fn discrepancy_variation(u: &Field, epsilon: f64, g: &VectorField) -> Result<f64> {
    let d = energy::densities(u, epsilon)?;
    varifold_variation_with(u, epsilon, g, &d, true)
}

fn varifold_variation_with(u: &Field, epsilon: f64, g: &VectorField, d: &Densities, discrepancy: bool) -> Result<f64> {
    let grid = u.grid();
    grid.check_same(g.grid())?;
    let scale = g.max_norm().max(1.0);
    for p in 0..grid.len() {
        if grid.is_boundary(p) && g.at(p).iter().any(|c| c.abs() > 1e-12 * scale) {
            return input("test vector field must vanish on the boundary");
        }
    }
    let dim = grid.dim();
    let nu = normal_field(u, epsilon);
    let dg: Vec<Vec<Vec<f64>>> = (0..dim)
        .map(|i| {
            let gi = g.component(i);
            (0..dim).map(|j| grid::axis_derivative(grid, &gi, j)).collect()
        })
        .collect();
    let mut total = 0.0;
    for p in 0..grid.len() {
        let n = nu.at(p);
        if n.iter().all(|c| *c == 0.0) {
            continue;
        }
        let mut proj = 0.0;
        let mut div = 0.0;
        for i in 0..dim {
            div += dg[i][i][p];
            for j in 0..dim {
                proj += dg[i][j][p] * n[i] * n[j];
            }
        }
        total += grid.weight(p)
            * if discrepancy {
                -proj * d.discrepancy[p]
            } else {
                (div - proj) * d.energy[p]
            };
    }
    Ok(total)
}

/// `∫_region (1 − (ν·d)²) ε|∇u|²`.
pub fn tilt_excess(u: &Field, epsilon: f64, direction: &[f64], region: &NodeMask) -> Result<f64> {
    let d = energy::densities(u, epsilon)?;
    let grid = u.grid();
    if direction.len() != grid.dim() {
        return input("direction has the wrong dimension");
    }
    let norm: f64 = direction.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return input("direction must be a unit vector");
    }
    let nu = normal_field(u, epsilon);
    let vals: Vec<f64> = (0..grid.len())
        .map(|p| {
            let c: f64 = nu.at(p).iter().zip(direction).map(|(a, b)| a * b).sum();
            (1.0 - c * c) * epsilon * d.grad_sq[p]
        })
        .collect();
    Ok(grid.integrate_values(&vals, Some(region)))
}

/// Sign changes of `u − t` along the grid line through `base` in direction
/// `axis`. A node with `u = t` exactly counts iff its two line neighbors lie
/// strictly on opposite sides of `t`.
pub fn line_crossings(u: &Field, base: usize, axis: usize, t: f64) -> Result<usize> {
    if !(t > -1.0 && t < 1.0) {
        return input(format!("level {t} must lie in (-1, 1)"));
    }
    if axis >= u.grid().dim() {
        return input("axis out of range");
    }
    let line = u.line_values(base, axis);
    let mut count = 0;
    for k in 0..line.len() {
        let d = line[k] - t;
        if d == 0.0 {
            if k > 0 && k + 1 < line.len() {
                let (a, b) = (line[k - 1] - t, line[k + 1] - t);
                if (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) {
                    count += 1;
                }
            }
        } else if k + 1 < line.len() {
            let e = line[k + 1] - t;
            if (d < 0.0 && e > 0.0) || (d > 0.0 && e < 0.0) {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityPoint {
    pub point: Point,
    /// `u₀` changes sign across the interface at this point.
    pub sign_change: bool,
    /// Density at each member of the sequence, coarsest first.
    pub thetas: Vec<f64>,
    pub sheets: usize,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub points: Vec<ParityPoint>,
    /// Fraction of points where the parity of `N` matches the sign change
    /// (1 for an empty sample).
    pub agreement: f64,
}

/// Compare the parity of the sheet count with the sign change of `u₀`.
///
/// `sequence` holds `(ε, u_ε)` at decreasing `ε`. Normals come from the
/// finest field; `u₀` is sampled at `±4ε` along them. Densities use the
/// radius window `window` at every member.
pub fn parity_audit(
    sequence: &[(f64, Field)],
    u0: &Field,
    points: &[Point],
    window: (f64, f64),
) -> Result<ParityReport> {
    let Some((eps_fine, fine)) = sequence.last() else {
        return input("empty field sequence");
    };
    let measures = sequence
        .iter()
        .map(|(e, u)| EnergyMeasure::new(u, *e))
        .collect::<Result<Vec<_>>>()?;
    let radii = window_radii(window.0, window.1, 9)?;
    let grad = grid::gradient(fine);
    let g0 = u0.grid();
    let dim = g0.dim();
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let mut n: Vec<f64> = (0..dim)
            .map(|a| fine.grid().interpolate(&grad.component(a), p))
            .collect();
        let len = n.iter().map(|c| c * c).sum::<f64>().sqrt();
        if len > 0.0 {
            n.iter_mut().for_each(|c| *c /= len);
        } else {
            n = vec![0.0; dim];
            n[dim - 1] = 1.0;
        }
        let mut plus = *p;
        let mut minus = *p;
        for a in 0..dim {
            plus[a] += 4.0 * eps_fine * n[a];
            minus[a] -= 4.0 * eps_fine * n[a];
        }
        let clamp = |q: &mut Point| {
            for (a, c) in q.iter_mut().enumerate().take(dim) {
                let (lo, hi) = g0.extent(a);
                *c = c.clamp(lo, hi);
            }
        };
        clamp(&mut plus);
        clamp(&mut minus);
        let (a, b) = (g0.interpolate(u0.values(), &plus), g0.interpolate(u0.values(), &minus));
        let sign_change = a * b < 0.0;
        let mut thetas = Vec::with_capacity(measures.len());
        let mut sheets = 0;
        for m in &measures {
            let s = m.density(p, &radii)?;
            thetas.push(s.theta.unwrap_or(0.0));
            sheets = s.sheets.unwrap_or(0);
        }
        let agrees = (sheets % 2 == 1) == sign_change;
        out.push(ParityPoint {
            point: *p,
            sign_change,
            thetas,
            sheets,
            agrees,
        });
    }
    let agreement = if out.is_empty() {
        1.0
    } else {
        out.iter().filter(|p| p.agrees).count() as f64 / out.len() as f64
    };
    Ok(ParityReport {
        points: out,
        agreement,
    })
}

/// `count` points on `{u = 0}` whose distance to ∂Ω is at least `margin`.
pub fn interface_samples(u: &Field, count: usize, margin: f64) -> Vec<Point> {
    let g = u.grid();
    let mesh = extract_level_set(u, 0.0);
    mesh.evenly_spaced(count, |p| g.distance_to_boundary(p) >= margin)
}

/// Mean distance from a point set to the nearest of `others` (diagnostic).
pub fn mean_separation(points: &[Point], others: &[Point], dim: usize) -> f64 {
    if points.is_empty() || others.is_empty() {
        return 0.0;
    }
    points
        .iter()
        .map(|p| {
            others
                .iter()
                .map(|q| distance(p, q, dim))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldKind;
    use crate::solver::{bump_basis, exact_profile, multi_sheet_profile};
    use approx::assert_abs_diff_eq;

    fn flat(eps: f64, n: usize) -> Field {
        let g = Grid::cube(2, 0.0, 1.0, n).unwrap();
        exact_profile(&g, eps, &[0.0, 1.0], 0.5).unwrap()
    }

    #[test]
    fn normals_of_profile_and_constant() {
        let u = flat(0.1, 41);
        let nu = normal_field(&u, 0.1);
        let p = u.grid().index(&[20, 20]);
        assert_abs_diff_eq!(nu.at(p)[1], 1.0, epsilon = 1e-12);
        let c = Field::constant(u.grid(), FieldKind::Phase, 1.0);
        assert_eq!(normal_field(&c, 0.1).max_norm(), 0.0);
    }

    #[test]
    fn flat_ball_mass_and_ratios() {
        let u = flat(0.01, 801);
        let (m, clipped) = ball_mass(&u, 0.01, &[0.5, 0.5, 0.0], 0.2).unwrap();
        assert!(!clipped);
        assert!((m - 1.6).abs() / 1.6 < 0.05, "{m}");
        let radii: Vec<f64> = (0..8).map(|k| 0.05 + 0.02 * k as f64).collect();
        let s = monotonicity_profile(&u, 0.01, &[0.5, 0.5, 0.0], &radii).unwrap();
        for r in &s.ratios {
            assert!((r - 8.0).abs() < 0.4, "{r}");
        }
        assert_eq!(s.hard_violations, 0);
        let d = density_and_sheets(&u, 0.01, &[0.5, 0.5, 0.0], (0.1, 0.3)).unwrap();
        assert_eq!(d.sheets, Some(1));
        assert!(d.rounding_gap.unwrap() <= 0.05);
    }

    #[test]
    fn empty_measure() {
        let g = Grid::cube(2, 0.0, 1.0, 41).unwrap();
        let u = Field::constant(&g, FieldKind::Phase, -1.0);
        let d = density_and_sheets(&u, 0.05, &[0.5, 0.5, 0.0], (0.2, 0.4)).unwrap();
        assert_eq!((d.theta, d.sheets), (Some(0.0), Some(0)));
        assert!(density_and_sheets(&u, 0.05, &[0.5, 0.5, 0.0], (0.1, 0.1)).is_err());
        assert!(ball_mass(&u, 0.05, &[0.5, 0.5, 0.0], 0.01).is_err());
    }

    #[test]
    fn tilt_identities() {
        let eps = 0.05;
        let u = flat(eps, 161);
        let all = NodeMask::all(u.grid().len(), true);
        let dir = energy::energy(&u, eps).unwrap().dirichlet;
        assert!(tilt_excess(&u, eps, &[0.0, 1.0], &all).unwrap().abs() < 1e-10);
        assert_abs_diff_eq!(tilt_excess(&u, eps, &[1.0, 0.0], &all).unwrap(), dir, epsilon = 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let g = Grid::cube(2, 0.0, 1.0, 201).unwrap();
        let diag = exact_profile(&g, eps, &[s, s], s).unwrap();
        let dd = energy::energy(&diag, eps).unwrap().dirichlet;
        let t = tilt_excess(&diag, eps, &[0.0, 1.0], &NodeMask::all(g.len(), true)).unwrap();
        assert!((t - 0.5 * dd).abs() / dd < 0.02, "{t} {dd}");
    }

    #[test]
    fn crossings() {
        let g = Grid::cube(2, 0.0, 1.0, 101).unwrap();
        let u = multi_sheet_profile(&g, 0.02, &[0.3, 0.5, 0.7], &[1.0, -1.0, 1.0]).unwrap();
        assert_eq!(line_crossings(&u, 0, 1, 0.0).unwrap(), 3);
        let one = exact_profile(&g, 0.02, &[0.0, 1.0], 0.5).unwrap();
        for t in [-0.5, 0.0, 0.9] {
            assert_eq!(line_crossings(&one, 0, 1, t).unwrap(), 1);
        }
        // node 50 sits exactly on the level
        assert_eq!(one.values()[50], 0.0);
        let c = Field::constant(&g, FieldKind::Phase, 1.0);
        assert_eq!(line_crossings(&c, 0, 1, 0.3).unwrap(), 0);
    }

    #[test]
    fn varifold_variation_basics() {
        let eps = 0.05;
        let u = flat(eps, 161);
        assert_eq!(first_variation_varifold(&u, eps, &VectorField::zeros(u.grid())).unwrap(), 0.0);
        let translation = VectorField::from_fn(u.grid(), |_| [0.0, 1.0, 0.0]);
        assert!(first_variation_varifold(&u, eps, &translation).is_err());
        for b in bump_basis(u.grid()) {
            let v = first_variation_varifold(&u, eps, &b).unwrap();
            assert!(v.abs() < 0.1, "{v}");
        }
    }
}
