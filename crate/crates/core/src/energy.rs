//! The free boundary Allen–Cahn energy with indicator potential,
//!
//! ```text
//! J_ε(u) = ∫ ε|∇u|² + χ_(-1,1)(u)/ε,
//! ```
//!
//! its pointwise density and discrepancy, the Modica and Cauchy–Schwarz
//! checks, the ramp-mollified surrogate minimized by the solver, and the
//! L¹–Lipschitz interpolation check.
//!
//! All Dirichlet integrals use the edge-difference form of `|∇u|²` from
//! [`crate::grid::edge_gradient_sq`], so that the diagnostic energy and the
//! functional descended by the solver are the same discrete object.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{config, input, Result};
use crate::grid::{self, Field, FieldKind, Grid};

/// `χ_(-1,1)(t)`: one on the open interval, zero elsewhere (including ±1).
#[inline]
pub fn indicator(t: f64) -> f64 {
    if t > -1.0 && t < 1.0 {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return config(format!("epsilon must be positive and finite, got {epsilon}"));
    }
    Ok(())
}

fn check_phase(u: &Field) -> Result<()> {
    if u.kind() != FieldKind::Phase {
        return input("expected a phase field with values in [-1, 1]");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub epsilon: f64,
    /// `∫ ε|∇u|²`
    pub dirichlet: f64,
    /// `∫ χ(u)/ε`
    pub potential: f64,
    pub total: f64,
    /// `∫ |ξ_ε|`
    pub discrepancy_l1: f64,
    /// `max ε|∇u|² − 1/ε` over transition nodes, `−1/ε` if there are none.
    pub modica_violation: f64,
    /// `2 ∫ |∇u|`
    pub bv_lower_bound: f64,
}

/// Per-node energy quantities.
#[derive(Debug, Clone)]
pub struct Densities {
    /// Edge-assembled `|∇u|²`.
    pub grad_sq: Vec<f64>,
    /// `χ(u)` per node.
    pub chi: Vec<f64>,
    /// `e_ε = ε|∇u|² + χ/ε`.
    pub energy: Vec<f64>,
    /// `ξ_ε = ε|∇u|² − χ/ε`.
    pub discrepancy: Vec<f64>,
}

pub fn densities(u: &Field, epsilon: f64) -> Result<Densities> {
    check_epsilon(epsilon)?;
    let grad_sq = grid::edge_gradient_sq(u);
    let chi: Vec<f64> = u.values().iter().map(|v| indicator(*v)).collect();
    let energy = grad_sq
        .iter()
        .zip(&chi)
        .map(|(g, c)| epsilon * g + c / epsilon)
        .collect();
    let discrepancy = grad_sq
        .iter()
        .zip(&chi)
        .map(|(g, c)| epsilon * g - c / epsilon)
        .collect();
    Ok(Densities {
        grad_sq,
        chi,
        energy,
        discrepancy,
    })
}

/// Evaluate `J_ε` and its companion quantities in one quadrature pass.
pub fn energy(u: &Field, epsilon: f64) -> Result<EnergyReport> {
    check_phase(u)?;
    check_epsilon(epsilon)?;
    let g = u.grid();
    let gsq = grid::edge_gradient_sq(u);
    let vals = u.values();
    let (mut dir, mut pot, mut tot, mut disc, mut bv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut modica = f64::NEG_INFINITY;
    g.for_each_weight(|i, w| {
        let chi = indicator(vals[i]);
        let d = epsilon * gsq[i];
        let p = chi / epsilon;
        dir += w * d;
        pot += w * p;
        tot += w * (d + p);
        disc += w * (d - p).abs();
        bv += w * 2.0 * gsq[i].sqrt();
        if chi == 1.0 {
            modica = modica.max(d - 1.0 / epsilon);
        }
    });
    if modica == f64::NEG_INFINITY {
        modica = -1.0 / epsilon;
    }
    Ok(EnergyReport {
        epsilon,
        dirichlet: dir,
        potential: pot,
        // identical to dir + pot up to the order of additions
        total: tot,
        discrepancy_l1: disc,
        modica_violation: modica,
        bv_lower_bound: bv,
    })
}

/// Discrepancy `∫ |ξ_ε|` restricted to a node mask.
pub fn discrepancy_on(u: &Field, epsilon: f64, mask: &grid::NodeMask) -> Result<f64> {
    let d = densities(u, epsilon)?;
    let abs: Vec<f64> = d.discrepancy.iter().map(|x| x.abs()).collect();
    Ok(u.grid().integrate_values(&abs, Some(mask)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModicaCheck {
    /// `max (ε|∇u|² − 1/ε)` over nodes with `|u| < 1`; `−1/ε` when there are none.
    pub violation: f64,
    /// False when no node lies in the transition set.
    pub has_band: bool,
}

/// Pointwise Modica bound `ε|∇u|² ≤ 1/ε` on the transition set.
pub fn modica_check(u: &Field, epsilon: f64) -> Result<ModicaCheck> {
    check_phase(u)?;
    check_epsilon(epsilon)?;
    let gsq = grid::edge_gradient_sq(u);
    let mut worst = f64::NEG_INFINITY;
    for (v, g) in u.values().iter().zip(&gsq) {
        if indicator(*v) == 1.0 {
            worst = worst.max(epsilon * g - 1.0 / epsilon);
        }
    }
    Ok(if worst == f64::NEG_INFINITY {
        ModicaCheck {
            violation: -1.0 / epsilon,
            has_band: false,
        }
    } else {
        ModicaCheck {
            violation: worst,
            has_band: true,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsCheck {
    pub holds: bool,
    /// Smallest `ε|∇u|² + 1/ε − 2|∇u|` over transition nodes, evaluated as
    /// `ε(|∇u| − 1/ε)²`. `None` when there are no transition nodes.
    pub min_margin: Option<f64>,
    /// `J_ε(u) − 2∫_{χ=1} |∇u|`.
    pub integrated_margin: f64,
    pub transition_nodes: usize,
}

/// Pointwise AM–GM bound `ε|∇u|² + χ/ε ≥ 2|∇u|` on `{χ = 1}`.
pub fn cs_lower_bound_check(u: &Field, epsilon: f64) -> Result<CsCheck> {
    check_phase(u)?;
    check_epsilon(epsilon)?;
    let gsq = grid::edge_gradient_sq(u);
    let vals = u.values();
    let mut min_margin: Option<f64> = None;
    let mut integrated = 0.0;
    let mut count = 0;
    u.grid().for_each_weight(|i, w| {
        if indicator(vals[i]) == 1.0 {
            let g = gsq[i].sqrt();
            let m = epsilon * (g - 1.0 / epsilon).powi(2);
            min_margin = Some(min_margin.map_or(m, |x: f64| x.min(m)));
            integrated += w * m;
            count += 1;
        } else {
            integrated += w * epsilon * gsq[i];
        }
    });
    Ok(CsCheck {
        holds: min_margin.map_or(true, |m| m >= 0.0) && integrated >= 0.0,
        min_margin,
        integrated_margin: integrated,
        transition_nodes: count,
    })
}

/// Piecewise-affine smoothing of `χ_(-1,1)`: one on `|t| ≤ 1 − κ`, zero on
/// `|t| ≥ 1`, linear in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    kappa: f64,
}

impl Mollifier {
    pub fn new(kappa: f64) -> Result<Mollifier> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return config(format!("ramp width kappa must lie in (0, 1), got {kappa}"));
        }
        Ok(Mollifier { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 - self.kappa {
            1.0
        } else if a >= 1.0 {
            0.0
        } else {
            (1.0 - a) / self.kappa
        }
    }

    /// A supergradient of the (concave on [-1, 1]) ramp. Outside `[-1, 1]`
    /// the ramp slope is continued so that descent pushes values back to ±1.
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        if t.abs() < 1.0 - self.kappa {
            0.0
        } else {
            -t.signum() / self.kappa
        }
    }
}

/// Evaluates the mollified energy and its L²-gradient
/// `−2εΔ_h u + χ_κ'(u)/ε` on a fixed grid.
#[derive(Debug, Clone)]
pub(crate) struct MollifiedKernel {
    grid: Grid,
    weights: Vec<f64>,
    epsilon: f64,
}

impl MollifiedKernel {
    pub(crate) fn new(grid: &Grid, epsilon: f64) -> Result<MollifiedKernel> {
        check_epsilon(epsilon)?;
        Ok(MollifiedKernel {
            grid: grid.clone(),
            weights: grid.weights(),
            epsilon,
        })
    }

    /// Energy value; writes the descent field into `field`.
    pub(crate) fn evaluate(&self, u: &[f64], m: &Mollifier, field: &mut [f64]) -> f64 {
        let g = &self.grid;
        let eps = self.epsilon;
        let dim = g.dim();
        let axes: Vec<(usize, usize, f64)> = (0..dim)
            .map(|a| (g.nodes(a), g.stride(a), 1.0 / (g.spacing(a) * g.spacing(a))))
            .collect();
        let mut total = 0.0;
        for p in 0..u.len() {
            let v = u[p];
            let mut sq = 0.0;
            let mut grad = 0.0;
            for &(n, s, inv_h2) in &axes {
                let i = (p / s) % n;
                // one-sided at the boundary: the missing edge is mirrored,
                // which doubles the remaining difference in the Laplacian
                let (sum_sq, lap) = if i == 0 {
                    let d = u[p + s] - v;
                    (d * d, 2.0 * d)
                } else if i + 1 == n {
                    let d = u[p - s] - v;
                    (d * d, 2.0 * d)
                } else {
                    let d1 = u[p + s] - v;
                    let d0 = u[p - s] - v;
                    (0.5 * (d1 * d1 + d0 * d0), d1 + d0)
                };
                sq += sum_sq * inv_h2;
                grad -= lap * inv_h2;
            }
            total += self.weights[p] * (eps * sq + m.value(v) / eps);
            field[p] = 2.0 * eps * grad + m.derivative(v) / eps;
        }
        total
    }
}

/// `∫ ε|∇u|² + χ_κ(u)/ε`.
pub fn mollified_energy(u: &Field, epsilon: f64, m: &Mollifier) -> Result<f64> {
    let k = MollifiedKernel::new(u.grid(), epsilon)?;
    let mut field = vec![0.0; u.values().len()];
    Ok(k.evaluate(u.values(), m, &mut field))
}

/// Pointwise variational gradient `−2εΔu + χ_κ'(u)/ε` of the mollified
/// energy (with the natural boundary stencil on ∂Ω).
pub fn mollified_gradient(u: &Field, epsilon: f64, m: &Mollifier) -> Result<Field> {
    let k = MollifiedKernel::new(u.grid(), epsilon)?;
    let mut field = vec![0.0; u.values().len()];
    k.evaluate(u.values(), m, &mut field);
    Field::new(u.grid().clone(), FieldKind::Free, field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCheck {
    /// `‖u‖_∞`
    pub sup_norm: f64,
    /// `‖u‖_{L¹}`
    pub l1_norm: f64,
    /// `‖∇u‖_∞`
    pub lipschitz: f64,
    /// `max{ I^{1/(n+1)} K^{n/(n+1)}, I }`
    pub bound_base: f64,
    /// Smallest C with `‖u‖_∞ ≤ C · bound_base`.
    pub realized_constant: f64,
}

impl InterpolationCheck {
    pub fn holds(&self, constant: f64) -> bool {
        self.realized_constant <= constant
    }
}

/// Realized constant of the L¹–Lipschitz interpolation inequality for `u`.
pub fn interpolation_check(u: &Field) -> InterpolationCheck {
    let g = u.grid();
    let n = g.dim() as f64;
    let sup = u.max_abs();
    let abs: Vec<f64> = u.values().iter().map(|v| v.abs()).collect();
    let l1 = g.integrate_values(&abs, None);
    let lip = grid::gradient(u).max_norm();
    let base = (l1.powf(1.0 / (n + 1.0)) * lip.powf(n / (n + 1.0))).max(l1);
    let realized = if sup == 0.0 {
        0.0
    } else if base == 0.0 {
        f64::INFINITY
    } else {
        sup / base
    };
    InterpolationCheck {
        sup_norm: sup,
        l1_norm: l1,
        lipschitz: lip,
        bound_base: base,
        realized_constant: realized,
    }
}

/// Member of the random piecewise-linear family used to calibrate the
/// interpolation constant: a sum of one to four tents (1D) or square
/// pyramids `max(0, a − s‖x − c‖_∞)` with random heights, slopes and centers.
pub fn random_piecewise_linear(grid: &Grid, rng: &mut ChaCha8Rng) -> Field {
    let dim = grid.dim();
    let count = rng.random_range(1..=4usize);
    let mut tents = Vec::with_capacity(count);
    for _ in 0..count {
        let mut c = [0.0; 3];
        for (a, ca) in c.iter_mut().enumerate().take(dim) {
            let (lo, hi) = grid.extent(a);
            *ca = rng.random_range(lo..=hi);
        }
        let height: f64 = rng.random_range(-1.0..=1.0);
        let slope: f64 = rng.random_range(1.0..=20.0);
        tents.push((c, height, slope));
    }
    Field::from_fn(grid, FieldKind::Free, |p| {
        tents
            .iter()
            .map(|(c, a, s)| {
                let r = (0..dim).map(|k| (p[k] - c[k]).abs()).fold(0.0, f64::max);
                a.signum() * (a.abs() - s * r).max(0.0)
            })
            .sum()
    })
}

/// Brute-force calibration: the largest realized constant over `count`
/// members of the random family drawn from `seed`.
pub fn calibrate_interpolation_constant(grid: &Grid, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| interpolation_check(&random_piecewise_linear(grid, &mut rng)).realized_constant)
        .filter(|c| c.is_finite())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_abs_diff_eq;

    fn profile_1d(eps: f64, h: f64, scale: f64) -> Field {
        let n = (2.0 / h).round() as usize + 1;
        let g = Grid::cube(1, -1.0, 1.0, n).unwrap();
        Field::from_fn(&g, FieldKind::Phase, |p| scale * p[0] / eps)
    }

    #[test]
    fn indicator_is_open_interval() {
        assert_eq!(indicator(0.0), 1.0);
        assert_eq!(indicator(1.0), 0.0);
        assert_eq!(indicator(-1.0), 0.0);
        assert_eq!(indicator(0.999999), 1.0);
    }

    #[test]
    fn pure_phase_has_no_energy() {
        let g = Grid::cube(2, 0.0, 1.0, 11).unwrap();
        let u = Field::constant(&g, FieldKind::Phase, 1.0);
        let r = energy(&u, 0.1).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(r.discrepancy_l1, 0.0);
        assert_abs_diff_eq!(r.modica_violation, -10.0);
        let m = modica_check(&u, 0.1).unwrap();
        assert!(!m.has_band);
        assert!(energy(&u, 0.0).is_err());
        assert!(energy(&u, -1.0).is_err());
    }

    #[test]
    fn exact_profile_1d_energy() {
        let eps = 0.1;
        let u = profile_1d(eps, eps / 16.0, 1.0);
        let r = energy(&u, eps).unwrap();
        assert!((r.total - 4.0).abs() / 4.0 < 0.02, "total {}", r.total);
        assert_abs_diff_eq!(r.total, r.dirichlet + r.potential, epsilon = 1e-12);
        // edge Dirichlet is exact for a profile whose kinks sit on nodes
        assert_abs_diff_eq!(r.dirichlet, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn modica_on_profiles() {
        let eps = 0.1;
        let u = profile_1d(eps, eps / 16.0, 1.0);
        let m = modica_check(&u, eps).unwrap();
        assert!(m.has_band);
        assert!(m.violation.abs() < 1e-9, "{}", m.violation);

        let steep = profile_1d(eps, eps / 16.0, 2.0);
        let m = modica_check(&steep, eps).unwrap();
        assert_abs_diff_eq!(m.violation, 3.0 / eps, epsilon = 1e-9);

        let g = Grid::cube(1, -1.0, 1.0, 21).unwrap();
        let zero = Field::constant(&g, FieldKind::Phase, 0.0);
        let m = modica_check(&zero, eps).unwrap();
        assert!(m.has_band);
        assert_abs_diff_eq!(m.violation, -1.0 / eps);
    }

    #[test]
    fn cs_margin_vanishes_on_exact_profile() {
        let eps = 0.1;
        let u = profile_1d(eps, eps / 16.0, 1.0);
        let c = cs_lower_bound_check(&u, eps).unwrap();
        assert!(c.holds);
        assert!(c.min_margin.unwrap() < 1e-12);
    }

    #[test]
    fn mollifier_shape() {
        let m = Mollifier::new(0.25).unwrap();
        assert_eq!(m.value(0.5), 1.0);
        assert_eq!(m.value(0.75), 1.0);
        assert_abs_diff_eq!(m.value(0.875), 0.5);
        assert_eq!(m.value(1.0), 0.0);
        assert_eq!(m.value(-1.0), 0.0);
        assert_eq!(m.derivative(0.0), 0.0);
        assert_eq!(m.derivative(0.9), -4.0);
        assert_eq!(m.derivative(-0.9), 4.0);
        assert!(Mollifier::new(0.0).is_err());
        assert!(Mollifier::new(1.0).is_err());
    }

    #[test]
    fn mollified_energy_of_pure_phase() {
        let g = Grid::cube(2, 0.0, 1.0, 9).unwrap();
        let u = Field::constant(&g, FieldKind::Phase, 1.0);
        let m = Mollifier::new(0.5).unwrap();
        assert_eq!(mollified_energy(&u, 0.1, &m).unwrap(), 0.0);
        // the ramp pushes pure phases outward; projection keeps them at ±1
        let grad = mollified_gradient(&u, 0.1, &m).unwrap();
        assert!(grad.values().iter().all(|v| *v <= 0.0));
    }

    #[test]
    fn mollified_energy_of_profile_matches_ramp_integral() {
        // ∫ χ_κ(x/ε)/ε over the band = 2(1 - κ) + κ = 2 - κ; Dirichlet is 2.
        let eps = 0.1;
        let kappa = 0.25;
        let u = profile_1d(eps, eps / 64.0, 1.0);
        let m = Mollifier::new(kappa).unwrap();
        let e = mollified_energy(&u, eps, &m).unwrap();
        assert!(e < 4.0);
        assert!(e >= 4.0 * (1.0 - kappa / 2.0) - 1e-9);
        assert_abs_diff_eq!(e, 4.0 - kappa, epsilon = 0.02);
        let mut last = e;
        for k in [0.125, 0.0625] {
            let v = mollified_energy(&u, eps, &Mollifier::new(k).unwrap()).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(last <= energy(&u, eps).unwrap().total + 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = Grid::new(&[(0.0, 1.0), (0.0, 1.0)], &[7, 6]).unwrap();
        let u = Field::from_fn(&g, FieldKind::Phase, |p| 0.6 * (4.0 * p[0] - 2.0 * p[1]).sin());
        let eps = 0.2;
        let m = Mollifier::new(0.5).unwrap();
        let field = mollified_gradient(&u, eps, &m).unwrap();
        let w = g.weights();
        for p in [0usize, 3, 10, 20, 41] {
            let mut plus = u.values().to_vec();
            let mut minus = u.values().to_vec();
            let d = 1e-6;
            plus[p] += d;
            minus[p] -= d;
            let ep = mollified_energy(&Field::new(g.clone(), FieldKind::Phase, plus).unwrap(), eps, &m).unwrap();
            let em = mollified_energy(&Field::new(g.clone(), FieldKind::Phase, minus).unwrap(), eps, &m).unwrap();
            let fd = (ep - em) / (2.0 * d) / w[p];
            assert_abs_diff_eq!(field.values()[p], fd, epsilon = 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn interpolation_examples() {
        let g = Grid::cube(2, 0.0, 1.0, 11).unwrap();
        let c = Field::constant(&g, FieldKind::Free, 0.7);
        assert_abs_diff_eq!(interpolation_check(&c).realized_constant, 1.0, epsilon = 1e-12);

        let r = 0.25;
        let g = Grid::cube(1, -1.0, 1.0, 401).unwrap();
        let tent = Field::from_fn(&g, FieldKind::Free, |p| (1.0 - p[0].abs() / r).max(0.0));
        let chk = interpolation_check(&tent);
        assert_abs_diff_eq!(chk.sup_norm, 1.0);
        assert_abs_diff_eq!(chk.l1_norm, r, epsilon = 1e-12);
        assert_abs_diff_eq!(chk.lipschitz, 1.0 / r, epsilon = 1e-9);
        assert_abs_diff_eq!(chk.realized_constant, 1.0, epsilon = 1e-9);
    }
}
