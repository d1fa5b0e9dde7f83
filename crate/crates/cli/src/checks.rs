//! Acceptance criteria, their pinned tolerances and per-run verdicts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    EnergyQuantization,
    SheetDensity,
    ModicaBound,
    Monotonicity,
    DiscrepancyDecay,
    Stationarity,
    GammaLimsup,
    LiminfMechanism,
    HausdorffConvergence,
    Parity,
    Interpolation,
    Determinism,
}

impl Criterion {
    pub const ALL: [Criterion; 12] = [
        Criterion::EnergyQuantization,
        Criterion::SheetDensity,
        Criterion::ModicaBound,
        Criterion::Monotonicity,
        Criterion::DiscrepancyDecay,
        Criterion::Stationarity,
        Criterion::GammaLimsup,
        Criterion::LiminfMechanism,
        Criterion::HausdorffConvergence,
        Criterion::Parity,
        Criterion::Interpolation,
        Criterion::Determinism,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::EnergyQuantization => "energy_quantization",
            Criterion::SheetDensity => "sheet_density",
            Criterion::ModicaBound => "modica_bound",
            Criterion::Monotonicity => "monotonicity",
            Criterion::DiscrepancyDecay => "discrepancy_decay",
            Criterion::Stationarity => "stationarity",
            Criterion::GammaLimsup => "gamma_limsup",
            Criterion::LiminfMechanism => "liminf_mechanism",
            Criterion::HausdorffConvergence => "hausdorff_convergence",
            Criterion::Parity => "parity",
            Criterion::Interpolation => "interpolation",
            Criterion::Determinism => "determinism",
        }
    }
}

/// Pinned tolerances. Changing one changes what the suite certifies.
pub mod tol {
    /// Relative error of a single-sheet energy against `4 × cross-section`.
    pub const ENERGY_QUANTIZATION: f64 = 0.02;
    /// `|θ/4 − N|` for a stack of `N` sheets.
    pub const SHEET_ROUNDING_GAP: f64 = 0.1;
    /// Modica violation bound `MODICA_FACTOR · h / ε²`.
    pub const MODICA_FACTOR: f64 = 10.0;
    /// Radii of the monotonicity check run over `{4ε, 6ε, …}` up to
    /// `max(MONOTONICITY_RADIUS, 6ε)`.
    pub const MONOTONICITY_RADIUS: f64 = 0.2;
    /// Final `∫_K |ξ|` as a fraction of the first.
    pub const DISCREPANCY_FINAL_FRACTION: f64 = 0.25;
    /// Required decrease of the stationarity residual when `h` halves.
    pub const STATIONARITY_GAIN: f64 = 2.0;
    /// Regression constant for `max_g |δV(g) + ∫Dg:(ν⊗ν)ξ| / ‖g‖_{C¹}`.
    /// Frozen at 1.5x the largest value measured on converged flat
    /// solutions (0.0098 at `h = ε/8`).
    pub const VARIFOLD_IDENTITY: f64 = 0.015;
    /// Relative gap of recovery energies at the finest ε.
    pub const LIMSUP_FINAL_GAP: f64 = 0.05;
    /// Band-to-interface distance: `ε + RECOVERY_H_FACTOR · h` for recovery
    /// fields, `SOLVER_EPS_FACTOR · ε` for solver outputs.
    pub const RECOVERY_H_FACTOR: f64 = 2.0;
    pub const SOLVER_EPS_FACTOR: f64 = 2.0;
    /// Fraction of parity sample points classified correctly.
    pub const PARITY_AGREEMENT: f64 = 1.0;
}

/// One pass/fail measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: Criterion,
    /// What was measured (run-local label).
    pub subject: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    /// `measured ≤ threshold`.
    pub fn at_most(criterion: Criterion, subject: impl Into<String>, measured: f64, threshold: f64) -> Check {
        Check {
            criterion,
            subject: subject.into(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail: String::new(),
        }
    }

    /// `measured ≥ threshold`.
    pub fn at_least(criterion: Criterion, subject: impl Into<String>, measured: f64, threshold: f64) -> Check {
        Check {
            passed: measured >= threshold,
            ..Check::at_most(criterion, subject, measured, threshold)
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Check {
        self.detail = detail.into();
        self
    }

    pub fn and(mut self, ok: bool) -> Check {
        self.passed &= ok;
        self
    }
}

/// A failed row of a multi-row command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub row: String,
    pub error: String,
}

/// Everything a run decided, written as `verdicts.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub command: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    #[serde(default)]
    pub failures: Vec<RowFailure>,
}
