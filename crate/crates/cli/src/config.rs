//! Experiment configuration files.
//!
//! One TOML file describes one experiment. Keys mirror the library types;
//! lists of ε and sweep rows are always spelled out.

use std::path::{Path, PathBuf};

use fbac::gamma::ShapeSpec;
use fbac::grid::{Field, FieldKind, Grid};
use fbac::solver::{self, Boundary, FaceValue, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Sweep,
    Recovery,
    Varifold,
    Gamma,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Recovery => "recovery",
            Command::Varifold => "varifold",
            Command::Gamma => "gamma",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub solver: Option<SolverSection>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub epsilon_list: Option<Vec<f64>>,
    /// Sweep rows, each with its own grid.
    #[serde(default)]
    pub rows: Vec<SweepRow>,
    #[serde(default)]
    pub init: Option<InitSpec>,
    #[serde(default)]
    pub shape: Option<ShapeSpec>,
    #[serde(default)]
    pub shapes: Vec<ShapeSpec>,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub varifold: Option<VarifoldSection>,
    #[serde(default)]
    pub gamma: Option<GammaSection>,
    #[serde(default)]
    pub report: Option<ReportSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub extents: Vec<[f64; 2]>,
    #[serde(default)]
    pub nodes: Option<Vec<usize>>,
    /// `h = ε / cells_per_epsilon` for commands that refine with ε.
    #[serde(default)]
    pub cells_per_epsilon: Option<f64>,
}

impl GridSection {
    pub fn extents(&self) -> Vec<(f64, f64)> {
        self.extents.iter().map(|e| (e[0], e[1])).collect()
    }

    pub fn fixed(&self) -> fbac::Result<Grid> {
        match &self.nodes {
            Some(n) => Grid::new(&self.extents(), n),
            None => Err(fbac::Error::Config("grid.nodes is required".into())),
        }
    }

    pub fn for_epsilon(&self, epsilon: f64) -> fbac::Result<Grid> {
        match (self.cells_per_epsilon, &self.nodes) {
            (Some(c), _) => fbac::gamma::grid_for_epsilon(&self.extents(), epsilon, c),
            (None, Some(n)) => Grid::new(&self.extents(), n),
            (None, None) => Err(fbac::Error::Config(
                "grid needs either nodes or cells_per_epsilon".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KappaRule {
    /// `{0.5, 0.25, 0.125, max(h, 0.0625)}`.
    #[default]
    Default,
    /// Halve from 1/2 down to the grid spacing.
    Halving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Descent,
    Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundarySpec {
    #[default]
    Natural,
    /// `−1` on the low face and `+1` on the high face of the last axis.
    Flat,
    HoldInitial,
    Dirichlet { faces: Vec<FaceValue> },
}

impl BoundarySpec {
    pub fn resolve(&self, grid: &Grid) -> Boundary {
        match self {
            BoundarySpec::Natural => Boundary::Natural,
            BoundarySpec::Flat => Boundary::flat(grid),
            BoundarySpec::HoldInitial => Boundary::HoldInitial,
            BoundarySpec::Dirichlet { faces } => Boundary::Dirichlet { faces: faces.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub kappa_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub kappa_rule: KappaRule,
    #[serde(default)]
    pub safety: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub energy_tol: Option<f64>,
    #[serde(default)]
    pub boundary: BoundarySpec,
}

impl SolverSection {
    pub fn resolve(&self, grid: &Grid, epsilon: f64, seed: u64) -> SolverConfig {
        let mut c = SolverConfig::new(epsilon);
        c.kappa_schedule = match (&self.kappa_schedule, self.kappa_rule) {
            (Some(s), _) => Some(s.clone()),
            (None, KappaRule::Halving) => Some(solver::halving_schedule(grid)),
            (None, KappaRule::Default) => None,
        };
        if let Some(s) = self.safety {
            c.safety = s;
        }
        if let Some(m) = self.max_iters {
            c.max_iters = m;
        }
        if let Some(t) = self.energy_tol {
            c.energy_tol = t;
        }
        c.boundary = self.boundary.resolve(grid);
        c.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub epsilon: f64,
    pub nodes: Vec<usize>,
}

/// Initial or constructed fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// `−1` below and `+1` above `position` along `axis` (default: last),
    /// plus uniform noise of total width `jitter`, clipped to `[−1, 1]`.
    Step {
        #[serde(default)]
        axis: Option<usize>,
        #[serde(default = "half")]
        position: f64,
        #[serde(default)]
        jitter: f64,
    },
    /// Single-sheet profile `clamp((x·normal − offset)/ε)`.
    Profile { normal: Vec<f64>, offset: f64 },
    /// Stacked sheets along the last axis at `offsets`, or at
    /// `base + k·ε` for `k` in `eps_offsets`.
    Sheets {
        #[serde(default)]
        offsets: Vec<f64>,
        #[serde(default)]
        base: f64,
        #[serde(default)]
        eps_offsets: Vec<f64>,
        signs: Vec<f64>,
    },
    /// Recovery field of a shape.
    Recovery { shape: ShapeSpec },
    Constant { value: f64 },
    /// Field file in the binary format.
    File { path: PathBuf },
}

fn half() -> f64 {
    0.5
}

impl InitSpec {
    /// Build the field on `grid`; `stream` selects an independent noise stream.
    pub fn build(&self, grid: &Grid, epsilon: f64, seed: u64, stream: u64) -> fbac::Result<Field> {
        match self {
            InitSpec::Step { axis, position, jitter } => {
                let a = axis.unwrap_or(grid.dim() - 1);
                if a >= grid.dim() {
                    return Err(fbac::Error::Config(format!("step axis {a} out of range")));
                }
                let mut rng = noise_rng(seed, stream);
                let values = (0..grid.len())
                    .map(|p| {
                        let base = if grid.coord(p)[a] < *position { -1.0 } else { 1.0 };
                        let r: f64 = rng.random::<f64>() - 0.5;
                        (base + jitter * r).clamp(-1.0, 1.0)
                    })
                    .collect();
                Field::new(grid.clone(), FieldKind::Phase, values)
            }
            InitSpec::Profile { normal, offset } => solver::exact_profile(grid, epsilon, normal, *offset),
            InitSpec::Sheets { .. } => {
                let (offsets, signs) = self.sheet_offsets(epsilon).expect("sheet variant");
                solver::multi_sheet_profile(grid, epsilon, &offsets, &signs)
            }
            InitSpec::Recovery { shape } => {
                let s = shape.instantiate(grid)?;
                fbac::gamma::recovery_sequence(&s, epsilon)
            }
            InitSpec::Constant { value } => {
                if !(-1.0..=1.0).contains(value) {
                    return Err(fbac::Error::Config(format!("constant {value} outside [-1, 1]")));
                }
                Ok(Field::constant(grid, FieldKind::Phase, *value))
            }
            InitSpec::File { path } => {
                let f = std::fs::File::open(path)?;
                let u = fbac::grid::read_binary(FieldKind::Phase, std::io::BufReader::new(f))?;
                grid.check_same(u.grid())?;
                Ok(u)
            }
        }
    }

    /// Absolute sheet offsets and signs of a `Sheets` spec.
    pub fn sheet_offsets(&self, epsilon: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            InitSpec::Sheets { offsets, base, eps_offsets, signs } => {
                let mut o = offsets.clone();
                o.extend(eps_offsets.iter().map(|k| base + k * epsilon));
                Some((o, signs.clone()))
            }
            _ => None,
        }
    }
}

/// Noise generator for one stream of one seed.
///
/// ChaCha8 is a counter-mode stream cipher: output block `i` of stream `s`
/// under key `seed` depends on nothing else, so values are identical on
/// every platform.
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Diagnostics attached to commands that produce fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    /// Box `K` for `∫_K |ξ_ε|`; enables the discrepancy decay check on sweeps.
    #[serde(default)]
    pub discrepancy_window: Option<Vec<[f64; 2]>>,
    /// Interface centers per field for the monotonicity check.
    #[serde(default = "default_centers")]
    pub monotonicity_centers: usize,
}

fn default_centers() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarifoldSection {
    /// Radius window `[lo, hi]` for densities.
    pub window: [f64; 2],
    /// Density cases: each builds a field and measures it at `centers`.
    #[serde(default)]
    pub cases: Vec<DensityCase>,
    #[serde(default)]
    pub parity: Vec<ParityCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityCase {
    pub name: String,
    pub field: InitSpec,
    pub centers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParityCase {
    pub name: String,
    /// Field at each ε of `epsilon_list`.
    pub field: InitSpec,
    /// The `L¹` limit `u₀`.
    pub limit: ShapeSpec,
    /// Sample points on the finest zero level set.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GammaSection {
    /// Random phase fields for the pointwise lower bound.
    #[serde(default)]
    pub random_fields: usize,
    /// Nodes per axis of the random-field and interpolation grids.
    #[serde(default = "default_audit_nodes")]
    pub audit_nodes: usize,
    #[serde(default)]
    pub interpolation_calibration: usize,
    #[serde(default)]
    pub interpolation_holdout: usize,
}

fn default_audit_nodes() -> usize {
    65
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// Run directories, or directories whose subdirectories are runs.
    pub inputs: Vec<PathBuf>,
    /// Criteria that must have been evaluated.
    #[serde(default)]
    pub expect: Vec<crate::checks::Criterion>,
    /// A previous report to compare artifact digests with.
    #[serde(default)]
    pub baseline: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Shapes named by `shape` and `shapes`.
    pub fn all_shapes(&self) -> Vec<ShapeSpec> {
        self.shape.iter().chain(&self.shapes).cloned().collect()
    }

    pub fn solver_section(&self) -> SolverSection {
        self.solver.clone().unwrap_or_default()
    }

    /// Dry-run precondition check; empty iff [`crate::run`] would start.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        match self.command {
            Command::Solve => self.validate_solve(&mut v),
            Command::Sweep => self.validate_sweep(&mut v),
            Command::Recovery => self.validate_recovery(&mut v),
            Command::Varifold => self.validate_varifold(&mut v),
            Command::Gamma => self.validate_gamma(&mut v),
            Command::Report => match &self.report {
                None => v.push("report: [report] section is required".into()),
                Some(r) if r.inputs.is_empty() => v.push("report: inputs must not be empty".into()),
                Some(_) => {}
            },
        }
        v
    }

    fn epsilon_ok(v: &mut Vec<String>, eps: f64) -> bool {
        if !(eps > 0.0 && eps.is_finite()) {
            v.push(format!("epsilon must be positive, got {eps}"));
            return false;
        }
        true
    }

    fn epsilons(&self, v: &mut Vec<String>) -> Vec<f64> {
        let Some(list) = &self.epsilon_list else {
            v.push("epsilon_list is required".into());
            return Vec::new();
        };
        if list.is_empty() {
            v.push("epsilon_list must not be empty".into());
        }
        if list.windows(2).any(|w| w[1] >= w[0]) {
            v.push("epsilon_list must be strictly decreasing".into());
        }
        list.iter().filter(|e| Self::epsilon_ok(v, **e)).copied().collect()
    }

    fn solver_ok(&self, v: &mut Vec<String>, grid: &Grid, eps: f64, label: &str) {
        let s = self.solver_section();
        let cfg = s.resolve(grid, eps, self.seed);
        if let Err(e) = cfg.validate(grid) {
            v.push(format!("{label}: {e}"));
        }
        if s.method == Method::Band && cfg.boundary == Boundary::Natural {
            v.push(format!("{label}: the band solver needs boundary data"));
        }
    }

    fn init_ok(&self, v: &mut Vec<String>, init: &InitSpec, grid: &Grid, eps: f64, label: &str) {
        match init {
            InitSpec::Sheets { offsets, eps_offsets, .. } => {
                if offsets.is_empty() == eps_offsets.is_empty() {
                    v.push(format!("{label}: give exactly one of offsets and eps_offsets"));
                    return;
                }
                let (o, s) = init.sheet_offsets(eps).expect("sheet variant");
                if o.len() != s.len() {
                    v.push(format!("{label}: one sign per sheet is required"));
                    return;
                }
                if o.windows(2).any(|w| w[1] - w[0] <= 4.0 * eps) {
                    v.push(format!("{label}: sheets closer than 4 epsilon overlap"));
                }
                if s.windows(2).any(|w| w[0] * w[1] >= 0.0) {
                    v.push(format!("{label}: sheet signs must alternate"));
                }
            }
            InitSpec::Profile { normal, .. } => {
                let n: f64 = normal.iter().map(|c| c * c).sum::<f64>().sqrt();
                if normal.len() != grid.dim() || (n - 1.0).abs() > 1e-9 {
                    v.push(format!("{label}: profile normal must be a unit vector of the grid dimension"));
                }
            }
            InitSpec::Recovery { shape } => {
                if let Err(e) = shape.instantiate(grid) {
                    v.push(format!("{label}: {e}"));
                }
                if eps <= 2.0 * grid.max_spacing() {
                    v.push(format!("{label}: band unresolvable (epsilon {eps} <= 2h)"));
                }
            }
            InitSpec::Constant { value } => {
                if !(-1.0..=1.0).contains(value) {
                    v.push(format!("{label}: constant outside [-1, 1]"));
                }
            }
            InitSpec::File { path } => {
                if !path.is_file() {
                    v.push(format!("{label}: field file {} not found", path.display()));
                }
            }
            InitSpec::Step { axis, jitter, .. } => {
                if axis.is_some_and(|a| a >= grid.dim()) {
                    v.push(format!("{label}: step axis out of range"));
                }
                if !(*jitter >= 0.0) {
                    v.push(format!("{label}: jitter must be non-negative"));
                }
            }
        }
    }

    fn validate_solve(&self, v: &mut Vec<String>) {
        let Some(eps) = self.epsilon else {
            v.push("solve: epsilon is required".into());
            return;
        };
        if !Self::epsilon_ok(v, eps) {
            return;
        }
        let grid = match self.grid.as_ref().map(|g| g.fixed()) {
            None => {
                v.push("solve: [grid] section is required".into());
                return;
            }
            Some(Err(e)) => {
                v.push(format!("solve: {e}"));
                return;
            }
            Some(Ok(g)) => g,
        };
        // descent only needs the band resolved across the interface, so
        // anisotropic grids are judged by their finest axis
        if eps <= 2.0 * grid.min_spacing() {
            v.push(format!("solve: band unresolvable (epsilon {eps} <= 2h)"));
        }
        self.solver_ok(v, &grid, eps, "solve");
        match &self.init {
            None => v.push("solve: [init] section is required".into()),
            Some(i) => self.init_ok(v, i, &grid, eps, "solve init"),
        }
    }

    fn validate_sweep(&self, v: &mut Vec<String>) {
        if self.rows.is_empty() {
            v.push("sweep: at least one [[rows]] entry is required".into());
        }
        let Some(gs) = &self.grid else {
            v.push("sweep: [grid] section with extents is required".into());
            return;
        };
        let Some(init) = &self.init else {
            v.push("sweep: [init] section is required".into());
            return;
        };
        for (k, row) in self.rows.iter().enumerate() {
            let label = format!("sweep row {k}");
            if !Self::epsilon_ok(v, row.epsilon) {
                continue;
            }
            let grid = match Grid::new(&gs.extents(), &row.nodes) {
                Ok(g) => g,
                Err(e) => {
                    v.push(format!("{label}: {e}"));
                    continue;
                }
            };
            if row.epsilon <= 2.0 * grid.min_spacing() {
                v.push(format!("{label}: band unresolvable (epsilon {} <= 2h)", row.epsilon));
            }
            self.solver_ok(v, &grid, row.epsilon, &label);
            self.init_ok(v, init, &grid, row.epsilon, &label);
        }
        if let Some(w) = &self.audit.discrepancy_window {
            if w.len() != gs.extents.len() || w.iter().any(|r| !(r[1] > r[0])) {
                v.push("sweep: discrepancy_window must give one non-empty range per axis".into());
            }
        }
        if let Some(row) = self.rows.first() {
            if let Ok(g) = Grid::new(&gs.extents(), &row.nodes) {
                for s in self.all_shapes() {
                    if let Err(e) = s.instantiate(&g) {
                        v.push(format!("sweep shape: {e}"));
                    }
                }
            }
        }
    }

    fn refined_grid(&self, v: &mut Vec<String>, eps: f64, label: &str) -> Option<Grid> {
        let Some(gs) = &self.grid else {
            v.push(format!("{label}: [grid] section is required"));
            return None;
        };
        match gs.for_epsilon(eps) {
            Ok(g) => Some(g),
            Err(e) => {
                v.push(format!("{label}: {e}"));
                None
            }
        }
    }

    fn validate_recovery(&self, v: &mut Vec<String>) {
        let shapes = self.all_shapes();
        if shapes.is_empty() {
            v.push("recovery: a shape is required".into());
        }
        if self.grid.as_ref().is_some_and(|g| g.cells_per_epsilon.is_none()) {
            v.push("recovery: grid.cells_per_epsilon is required".into());
        }
        for eps in self.epsilons(v) {
            let label = format!("recovery epsilon {eps}");
            let Some(g) = self.refined_grid(v, eps, &label) else {
                continue;
            };
            if eps <= 2.0 * g.max_spacing() {
                v.push(format!("{label}: band unresolvable (epsilon <= 2h)"));
            }
            for s in &shapes {
                if let Err(e) = s.instantiate(&g) {
                    v.push(format!("{label}: {e}"));
                }
            }
        }
    }

    fn validate_varifold(&self, v: &mut Vec<String>) {
        let Some(vs) = &self.varifold else {
            v.push("varifold: [varifold] section is required".into());
            return;
        };
        if vs.cases.is_empty() && vs.parity.is_empty() {
            v.push("varifold: no density or parity cases".into());
        }
        let [lo, hi] = vs.window;
        if !(hi > lo && lo > 0.0) {
            v.push(format!("varifold: empty radius window [{lo}, {hi}]"));
        }
        if !vs.cases.is_empty() {
            match self.epsilon {
                None => v.push("varifold: epsilon is required for density cases".into()),
                Some(eps) if Self::epsilon_ok(v, eps) => {
                    if lo < 4.0 * eps * (1.0 - 1e-12) {
                        v.push(format!("varifold: window starts below 4 epsilon ({lo} < {})", 4.0 * eps));
                    }
                    if let Some(g) = self.refined_grid(v, eps, "varifold") {
                        if eps <= 2.0 * g.max_spacing() {
                            v.push("varifold: band unresolvable (epsilon <= 2h)".into());
                        }
                        for c in &vs.cases {
                            let label = format!("varifold case {}", c.name);
                            self.init_ok(v, &c.field, &g, eps, &label);
                            if c.centers.is_empty() {
                                v.push(format!("{label}: no centers"));
                            }
                            if c.centers.iter().any(|p| p.len() != g.dim()) {
                                v.push(format!("{label}: center of the wrong dimension"));
                            }
                        }
                    }
                }
                Some(_) => {}
            }
        }
        if !vs.parity.is_empty() {
            for eps in self.epsilons(v) {
                if lo < 4.0 * eps * (1.0 - 1e-12) {
                    v.push(format!("varifold: window starts below 4 epsilon at epsilon {eps}"));
                }
                let Some(g) = self.refined_grid(v, eps, "varifold parity") else {
                    continue;
                };
                if eps <= 2.0 * g.max_spacing() {
                    v.push(format!("varifold parity: band unresolvable at epsilon {eps}"));
                }
                for c in &vs.parity {
                    let label = format!("parity case {} at epsilon {eps}", c.name);
                    self.init_ok(v, &c.field, &g, eps, &label);
                    if let Err(e) = c.limit.instantiate(&g) {
                        v.push(format!("{label}: {e}"));
                    }
                }
            }
            if vs.parity.iter().any(|c| c.samples == 0) {
                v.push("varifold: parity cases need at least one sample".into());
            }
        }
    }

    fn validate_gamma(&self, v: &mut Vec<String>) {
        let gs = self.gamma.clone().unwrap_or_default();
        let shapes = self.all_shapes();
        if shapes.is_empty() && gs.random_fields == 0 && gs.interpolation_calibration == 0 {
            v.push("gamma: nothing to audit".into());
        }
        if !shapes.is_empty() {
            for eps in self.epsilons(v) {
                let label = format!("gamma epsilon {eps}");
                if let Some(g) = self.refined_grid(v, eps, &label) {
                    if eps <= 2.0 * g.max_spacing() {
                        v.push(format!("{label}: band unresolvable (epsilon <= 2h)"));
                    }
                    for s in &shapes {
                        if let Err(e) = s.instantiate(&g) {
                            v.push(format!("{label}: {e}"));
                        }
                    }
                }
            }
        }
        if gs.random_fields > 0 {
            match self.epsilon {
                None => v.push("gamma: epsilon is required for random fields".into()),
                Some(e) => {
                    Self::epsilon_ok(v, e);
                }
            }
        }
        if (gs.random_fields > 0 || gs.interpolation_calibration > 0) && gs.audit_nodes < 3 {
            v.push("gamma: audit_nodes must be at least 3".into());
        }
        if (gs.interpolation_calibration > 0) != (gs.interpolation_holdout > 0) {
            v.push("gamma: interpolation needs both calibration and holdout counts".into());
        }
        if (gs.random_fields > 0 || gs.interpolation_calibration > 0) && self.grid.is_none() {
            v.push("gamma: [grid] extents are required".into());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(s).unwrap()
    }

    const SOLVE: &str = r#"
command = "solve"
epsilon = 0.1
[grid]
extents = [[0.0, 1.0], [0.0, 1.0]]
nodes = [41, 41]
[solver]
boundary = { type = "flat" }
[init]
type = "step"
"#;

    #[test]
    fn well_formed_config_has_no_violations() {
        assert!(parse(SOLVE).validate().is_empty());
    }

    #[test]
    fn kappa_below_spacing_is_reported() {
        let mut c = parse(SOLVE);
        c.solver.as_mut().unwrap().kappa_schedule = Some(vec![0.5, 0.001]);
        let v = c.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("kappa"), "{v:?}");
    }

    #[test]
    fn unresolved_recovery_band_is_reported() {
        let c = parse(
            r#"
command = "recovery"
epsilon_list = [0.04, 0.02]
shape = { type = "disc", center = [0.5, 0.5], radius = 0.25 }
[grid]
extents = [[0.0, 1.0], [0.0, 1.0]]
cells_per_epsilon = 1.5
"#,
        );
        let v = c.validate();
        assert!(v.iter().any(|s| s.contains("band unresolvable")), "{v:?}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("command = \"solve\"\nepsilonn = 0.1").is_err());
        assert!(ExperimentConfig::from_toml("command = \"launch\"").is_err());
    }

    #[test]
    fn step_noise_is_reproducible() {
        let g = Grid::cube(2, 0.0, 1.0, 9).unwrap();
        let s = InitSpec::Step { axis: None, position: 0.5, jitter: 0.2 };
        let a = s.build(&g, 0.1, 7, 0).unwrap();
        let b = s.build(&g, 0.1, 7, 0).unwrap();
        let c = s.build(&g, 0.1, 7, 1).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!(a.values().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn eps_offsets_scale_with_epsilon() {
        let s = InitSpec::Sheets { offsets: vec![], base: 0.5, eps_offsets: vec![-2.5, 2.5], signs: vec![1.0, -1.0] };
        let (o, _) = s.sheet_offsets(0.02).unwrap();
        assert!((o[0] - 0.45).abs() < 1e-15 && (o[1] - 0.55).abs() < 1e-15);
    }
}
