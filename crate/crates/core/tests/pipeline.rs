//! End-to-end pipelines across modules: solve, then audit the output the way
//! the experiment runner does.

use fbac::energy::{self, cs_lower_bound_check, modica_check};
use fbac::gamma::{self, ShapeSpec};
use fbac::geometry::{hausdorff, transition_band};
use fbac::grid::{self, Field, FieldKind, Grid};
use fbac::solver::{exact_profile, halving_schedule, minimize, multi_sheet_profile, stationarity_residual, Boundary, SolverConfig};
use fbac::varifold::{density_and_sheets, EnergyMeasure};
use proptest::prelude::*;

fn flat_solution(eps: f64, nodes: usize) -> (Field, fbac::solver::SolveTrace) {
    let g = Grid::cube(2, 0.0, 1.0, nodes).unwrap();
    // a tilted step: the solver has to rotate and sharpen it
    let init = Field::from_fn(&g, FieldKind::Phase, |p| if p[1] > 0.4 + 0.2 * p[0] { 1.0 } else { -1.0 });
    let mut cfg = SolverConfig::new(eps);
    cfg.boundary = Boundary::flat(&g);
    cfg.kappa_schedule = Some(halving_schedule(&g));
    cfg.safety = 0.8;
    minimize(&cfg, &init).unwrap()
}

#[test]
fn flat_solve_passes_the_field_audits() {
    let eps = 0.1;
    let (u, trace) = flat_solution(eps, 81);
    let g = u.grid().clone();
    let h = g.max_spacing();

    assert!(trace.converged);
    assert!((trace.report.total - 4.0).abs() / 4.0 < 0.03, "{}", trace.report.total);
    assert!(modica_check(&u, eps).unwrap().violation <= 10.0 * h / (eps * eps));
    let cs = cs_lower_bound_check(&u, eps).unwrap();
    assert!(cs.holds && cs.integrated_margin >= 0.0);

    let band = transition_band(&u).points(&g);
    let line: Vec<_> = (0..=200).map(|i| [i as f64 / 200.0, 0.5, 0.0]).collect();
    assert!(hausdorff(&band, &line, 2).unwrap() <= 2.0 * eps);
    assert!(trace.stationarity_residual.is_finite());
    assert_eq!(trace.stationarity_residual, stationarity_residual(&u, eps).unwrap());
}

#[test]
fn solver_output_survives_a_binary_round_trip() {
    let (u, _) = flat_solution(0.1, 41);
    let mut buf = Vec::new();
    grid::write_binary(&u, &mut buf).unwrap();
    let back = grid::read_binary(FieldKind::Phase, buf.as_slice()).unwrap();
    assert_eq!(back.values(), u.values());
    assert_eq!(back.grid(), u.grid());
}

#[test]
fn disc_recovery_converges_in_energy_and_position() {
    let spec = ShapeSpec::Disc { center: vec![0.5, 0.5], radius: 0.25 };
    let four_p = 4.0 * 2.0 * std::f64::consts::PI * 0.25;
    for eps in [0.04, 0.02] {
        let g = gamma::grid_for_epsilon(&[(0.0, 1.0), (0.0, 1.0)], eps, 8.0).unwrap();
        let s = spec.instantiate(&g).unwrap();
        let u = gamma::recovery_sequence(&s, eps).unwrap();
        let e = energy::energy(&u, eps).unwrap().total;
        assert!((e - four_p).abs() / four_p < 0.05, "eps {eps}: {e}");

        let iface = spec.interface_points(&g, g.max_spacing() / 2.0).unwrap();
        let d = hausdorff(&transition_band(&u).points(&g), &iface, 2).unwrap();
        assert!(d <= eps + 2.0 * g.max_spacing(), "eps {eps}: {d}");

        // thresholding the recovery field gives back the disc
        let (limit, l1) = gamma::threshold_limit(&u);
        assert!(l1 < 2.0 * eps * 2.0 * std::f64::consts::PI * 0.25);
        assert_eq!(limit.indicator.values(), s.indicator.values());
    }
}

#[test]
fn stacked_sheets_have_density_four_n() {
    let eps = 0.02;
    let g = Grid::unit_with_spacing(2, eps / 8.0).unwrap();
    let base = 0.50125;
    for offsets in [vec![0.0], vec![-2.125, 2.125], vec![-4.25, 0.0, 4.25]] {
        let at: Vec<f64> = offsets.iter().map(|o| base + o * eps).collect();
        let signs: Vec<f64> = (0..at.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let u = multi_sheet_profile(&g, eps, &at, &signs).unwrap();
        let e = energy::energy(&u, eps).unwrap().total;
        assert!((e - 4.0 * at.len() as f64).abs() / (4.0 * at.len() as f64) < 0.03);
        let s = density_and_sheets(&u, eps, &[0.5, 0.5, 0.0], (0.35, 0.49)).unwrap();
        assert_eq!(s.sheets, Some(at.len()));
        assert!(s.rounding_gap.unwrap() <= 0.1);
    }
}

#[test]
fn monotone_ratios_on_a_single_sheet() {
    let eps = 0.04;
    let g = Grid::cube(2, 0.0, 1.0, 201).unwrap();
    let u = exact_profile(&g, eps, &[0.0, 1.0], 0.5).unwrap();
    let m = EnergyMeasure::new(&u, eps).unwrap();
    let radii: Vec<f64> = (2..=5).map(|k| 2.0 * k as f64 * eps).collect();
    let s = m.monotonicity(&[0.5, 0.5, 0.0], &radii).unwrap();
    assert_eq!(s.hard_violations, 0);
    assert!(s.max_relative_drop <= 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // ε|∇u|² + χ/ε ≥ 2|∇u| on the transition set, for any phase field.
    #[test]
    fn energy_dominates_twice_the_variation(values in prop::collection::vec(-1.0f64..=1.0, 17 * 17), eps in 0.05f64..0.5) {
        let g = Grid::cube(2, 0.0, 1.0, 17).unwrap();
        let u = Field::new(g, FieldKind::Phase, values).unwrap();
        let cs = cs_lower_bound_check(&u, eps).unwrap();
        prop_assert!(cs.holds);
        prop_assert!(cs.min_margin.is_none_or(|m| m >= 0.0));
        prop_assert!(cs.integrated_margin >= -1e-12);
    }
}
