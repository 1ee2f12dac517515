//! Core data model: longitudinal panels, threshold regimes, tolerance
//! windows, and the configuration types shared by the weighting and
//! estimation layers.
//!
//! Conventions used throughout the crate:
//! * stages are indexed `0..T` in code and reported 1-based in messages;
//! * treatments are members of a declared alphabet, `{0, 1}` by default,
//!   with `1` conventionally the "treat" arm;
//! * a threshold rule recommends treatment when **every** clause of the
//!   stage holds, and the comparison is inclusive on the treat side
//!   (`x <= psi` treats at `x == psi` for a `Le` clause, mirrored for `Ge`).

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

// ---------------------------------------------------------------------------
// Panel
// ---------------------------------------------------------------------------

/// Treatment alphabet carried by a panel. Estimation is implemented for the
/// binary alphabet `{0, 1}`; the alphabet is kept explicit so that data with
/// richer codings fail loudly at validation rather than silently.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    actions: Vec<u8>,
}

impl Alphabet {
    pub fn binary() -> Self {
        Alphabet { actions: vec![0, 1] }
    }

    pub fn new(mut actions: Vec<u8>) -> Result<Self> {
        actions.sort_unstable();
        actions.dedup();
        if actions.len() < 2 {
            return Err(EngineError::Config(
                "treatment alphabet needs at least two distinct actions".into(),
            ));
        }
        Ok(Alphabet { actions })
    }

    pub fn actions(&self) -> &[u8] {
        &self.actions
    }

    pub fn contains(&self, a: u8) -> bool {
        self.actions.binary_search(&a).is_ok()
    }

    pub fn is_binary(&self) -> bool {
        self.actions == [0, 1]
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Alphabet::binary()
    }
}

/// One decision stage of a panel: the covariates observed just before the
/// stage's treatment decision, and the treatment actually received.
#[derive(Debug, Clone)]
pub struct Stage {
    /// Column-major covariate block: `covariates[j][i]` is covariate `j` for
    /// subject `i`.
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    /// Observed treatment per subject; members of the panel alphabet.
    pub treatments: Vec<u8>,
}

/// Optional time-constant covariates available to feature specifications but
/// not referenced by threshold rules.
#[derive(Debug, Clone, Default)]
pub struct Baseline {
    pub columns: Vec<Vec<f64>>,
    pub names: Vec<String>,
}

/// A longitudinal panel: `T` decision stages followed by a terminal outcome,
/// higher outcomes preferred.
#[derive(Debug, Clone)]
pub struct Panel {
    pub stages: Vec<Stage>,
    pub outcome: Vec<f64>,
    pub baseline: Option<Baseline>,
    pub alphabet: Alphabet,
}

impl Panel {
    pub fn new(stages: Vec<Stage>, outcome: Vec<f64>, alphabet: Alphabet) -> Result<Self> {
        let panel = Panel { stages, outcome, baseline: None, alphabet };
        panel.validate()?;
        Ok(panel)
    }

    /// Number of subjects.
    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Number of decision stages `T`.
    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Check the structural contract: consistent lengths, finite covariates
    /// and outcomes, treatments drawn from the alphabet.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(EngineError::Data("panel has no subjects".into()));
        }
        if self.stages.is_empty() {
            return Err(EngineError::Data("panel has no decision stages".into()));
        }
        for (t, stage) in self.stages.iter().enumerate() {
            if stage.covariate_names.len() != stage.covariates.len() {
                return Err(EngineError::Data(format!(
                    "stage {}: {} covariate names for {} columns",
                    t + 1,
                    stage.covariate_names.len(),
                    stage.covariates.len()
                )));
            }
            if stage.treatments.len() != n {
                return Err(EngineError::Data(format!(
                    "stage {}: {} treatments for {} subjects",
                    t + 1,
                    stage.treatments.len(),
                    n
                )));
            }
            for (j, col) in stage.covariates.iter().enumerate() {
                if col.len() != n {
                    return Err(EngineError::Data(format!(
                        "stage {} covariate {}: {} values for {} subjects",
                        t + 1,
                        j,
                        col.len(),
                        n
                    )));
                }
                if let Some(i) = col.iter().position(|x| !x.is_finite()) {
                    return Err(EngineError::Data(format!(
                        "stage {} covariate {} is not finite for subject {}",
                        t + 1,
                        j,
                        i
                    )));
                }
            }
            if let Some(i) = stage.treatments.iter().position(|a| !self.alphabet.contains(*a)) {
                return Err(EngineError::Data(format!(
                    "stage {} subject {}: treatment {} outside the alphabet",
                    t + 1,
                    i,
                    stage.treatments[i]
                )));
            }
        }
        if let Some(i) = self.outcome.iter().position(|y| !y.is_finite()) {
            return Err(EngineError::Data(format!("outcome is not finite for subject {i}")));
        }
        if let Some(base) = &self.baseline {
            if base.names.len() != base.columns.len() {
                return Err(EngineError::Data("baseline names/columns mismatch".into()));
            }
            for (j, col) in base.columns.iter().enumerate() {
                if col.len() != n {
                    return Err(EngineError::Data(format!(
                        "baseline covariate {}: {} values for {} subjects",
                        j,
                        col.len(),
                        n
                    )));
                }
                if col.iter().any(|x| !x.is_finite()) {
                    return Err(EngineError::Data(format!("baseline covariate {j} is not finite")));
                }
            }
        }
        Ok(())
    }

    /// Row-resampled copy (bootstrap). `idx` entries must be `< n`.
    pub fn subsample(&self, idx: &[usize]) -> Panel {
        let take = |col: &Vec<f64>| idx.iter().map(|&i| col[i]).collect::<Vec<f64>>();
        Panel {
            stages: self
                .stages
                .iter()
                .map(|s| Stage {
                    covariates: s.covariates.iter().map(take).collect(),
                    covariate_names: s.covariate_names.clone(),
                    treatments: idx.iter().map(|&i| s.treatments[i]).collect(),
                })
                .collect(),
            outcome: take(&self.outcome),
            baseline: self.baseline.as_ref().map(|b| Baseline {
                columns: b.columns.iter().map(take).collect(),
                names: b.names.clone(),
            }),
            alphabet: self.alphabet.clone(),
        }
    }

    /// Observed range `max(Y) - min(Y)` of the outcome.
    pub fn outcome_range(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &y in &self.outcome {
            lo = lo.min(y);
            hi = hi.max(y);
        }
        hi - lo
    }

    /// Empirical `(min, max)` of one stage covariate.
    pub fn covariate_range(&self, stage: usize, covariate: usize) -> Result<(f64, f64)> {
        let col = self
            .stages
            .get(stage)
            .and_then(|s| s.covariates.get(covariate))
            .ok_or_else(|| {
                EngineError::Data(format!(
                    "no covariate {} at stage {}",
                    covariate,
                    stage + 1
                ))
            })?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in col {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        Ok((lo, hi))
    }
}

// ---------------------------------------------------------------------------
// Threshold regimes
// ---------------------------------------------------------------------------

/// Comparison direction of a threshold clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Treat when `x <= psi`.
    Le,
    /// Treat when `x >= psi`.
    Ge,
}

/// One clause of a stage rule: a comparison of a single stage covariate
/// against a threshold. The comparison is inclusive on the treat side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Clause {
    /// Index into the stage's covariate columns.
    pub covariate: usize,
    pub threshold: f64,
    pub direction: Direction,
}

impl Clause {
    pub fn holds(&self, x: f64) -> bool {
        match self.direction {
            Direction::Le => x <= self.threshold,
            Direction::Ge => x >= self.threshold,
        }
    }
}

/// Per-stage rule: the conjunction of its clauses. Treatment is recommended
/// exactly when every clause holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRule {
    pub clauses: Vec<Clause>,
}

/// A deterministic threshold regime over all stages of a panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Regime {
    pub stages: Vec<StageRule>,
    pub treat_action: u8,
    pub control_action: u8,
}

impl Regime {
    /// Single-clause-per-stage constructor used by the simulation layers:
    /// stage `t` treats when covariate `covariate[t] <= threshold[t]`.
    pub fn all_le(covariates: &[usize], thresholds: &[f64]) -> Self {
        Regime {
            stages: covariates
                .iter()
                .zip(thresholds)
                .map(|(&covariate, &threshold)| StageRule {
                    clauses: vec![Clause { covariate, threshold, direction: Direction::Le }],
                })
                .collect(),
            treat_action: 1,
            control_action: 0,
        }
    }

    /// Structural validation against a panel: one rule per panel stage, every
    /// clause referencing an existing covariate, actions inside the alphabet.
    pub fn validate_against(&self, panel: &Panel) -> Result<()> {
        if self.stages.len() != panel.n_stages() {
            return Err(EngineError::Config(format!(
                "regime has {} stages but the panel has {}",
                self.stages.len(),
                panel.n_stages()
            )));
        }
        if self.treat_action == self.control_action {
            return Err(EngineError::Config("treat and control actions coincide".into()));
        }
        for action in [self.treat_action, self.control_action] {
            if !panel.alphabet.contains(action) {
                return Err(EngineError::Config(format!(
                    "regime action {action} is outside the panel alphabet"
                )));
            }
        }
        for (t, rule) in self.stages.iter().enumerate() {
            if rule.clauses.is_empty() {
                return Err(EngineError::Config(format!("stage {} rule has no clauses", t + 1)));
            }
            for clause in &rule.clauses {
                if clause.covariate >= panel.stages[t].covariates.len() {
                    return Err(EngineError::Config(format!(
                        "stage {} clause references covariate {} but the stage has {}",
                        t + 1,
                        clause.covariate,
                        panel.stages[t].covariates.len()
                    )));
                }
                if !clause.threshold.is_finite() {
                    return Err(EngineError::Config(format!(
                        "stage {} threshold is not finite",
                        t + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether the stage-`t` rule recommends treatment for subject `i`.
    /// Callers must have run [`Regime::validate_against`]; indices are then
    /// in range by construction.
    pub(crate) fn recommends_treat(&self, panel: &Panel, t: usize, i: usize) -> bool {
        self.stages[t]
            .clauses
            .iter()
            .all(|cl| cl.holds(panel.stages[t].covariates[cl.covariate][i]))
    }

    /// Recommended action for subject `i` at stage `t`, with index checking.
    pub fn recommended_action(&self, panel: &Panel, t: usize, i: usize) -> Result<u8> {
        self.validate_against(panel)?;
        if i >= panel.n() {
            return Err(EngineError::Data(format!("subject {i} out of range")));
        }
        Ok(if self.recommends_treat(panel, t, i) { self.treat_action } else { self.control_action })
    }

    /// Recommended action given the stage-`t` covariate values directly
    /// (`x[j]` is the stage's covariate `j`).
    pub fn recommended_action_values(&self, t: usize, x: &[f64]) -> Result<u8> {
        let rule = self
            .stages
            .get(t)
            .ok_or_else(|| EngineError::Config(format!("no rule for stage {}", t + 1)))?;
        let mut treat = true;
        for clause in &rule.clauses {
            let value = *x.get(clause.covariate).ok_or_else(|| {
                EngineError::Config(format!(
                    "stage {} clause references covariate {} but {} values were supplied",
                    t + 1,
                    clause.covariate,
                    x.len()
                ))
            })?;
            treat &= clause.holds(value);
        }
        Ok(if treat { self.treat_action } else { self.control_action })
    }

    /// Thresholds flattened stage-major, clause-minor. This is the coordinate
    /// system used by grids, windows, and reports.
    pub fn thresholds(&self) -> Vec<f64> {
        self.stages
            .iter()
            .flat_map(|s| s.clauses.iter().map(|c| c.threshold))
            .collect()
    }

    /// Copy of the regime with the flattened thresholds replaced.
    pub fn with_thresholds(&self, flat: &[f64]) -> Result<Regime> {
        if flat.len() != self.n_thresholds() {
            return Err(EngineError::Config(format!(
                "{} thresholds supplied for a regime with {}",
                flat.len(),
                self.n_thresholds()
            )));
        }
        let mut out = self.clone();
        let mut k = 0;
        for rule in &mut out.stages {
            for clause in &mut rule.clauses {
                clause.threshold = flat[k];
                k += 1;
            }
        }
        Ok(out)
    }

    pub fn n_thresholds(&self) -> usize {
        self.stages.iter().map(|s| s.clauses.len()).sum()
    }
}

/// Strict adherence indicators: `out[t][i]` is true when subject `i`'s
/// observed stage-`t` treatment equals the regime's recommendation.
pub fn strict_adherence(panel: &Panel, regime: &Regime) -> Result<Vec<Vec<bool>>> {
    regime.validate_against(panel)?;
    let n = panel.n();
    Ok((0..panel.n_stages())
        .map(|t| {
            (0..n)
                .map(|i| {
                    let rec = if regime.recommends_treat(panel, t, i) {
                        regime.treat_action
                    } else {
                        regime.control_action
                    };
                    panel.stages[t].treatments[i] == rec
                })
                .collect()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Tolerance windows
// ---------------------------------------------------------------------------

/// Lower/upper tolerance around one clause's threshold. `lower` widens the
/// region below the threshold, `upper` the region above; both are
/// non-negative distances on the covariate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub lower: f64,
    pub upper: f64,
}

impl Tolerance {
    pub fn zero() -> Self {
        Tolerance { lower: 0.0, upper: 0.0 }
    }

    pub fn symmetric(delta: f64) -> Self {
        Tolerance { lower: delta, upper: delta }
    }
}

/// Tolerance windows for every clause of a regime, flattened the same way as
/// [`Regime::thresholds`]: `stages[t][k]` pairs with clause `k` of stage `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub stages: Vec<Vec<Tolerance>>,
}

impl WindowSpec {
    /// The all-zero window, which reproduces strict adherence.
    pub fn zeros(regime: &Regime) -> Self {
        WindowSpec {
            stages: regime
                .stages
                .iter()
                .map(|s| vec![Tolerance::zero(); s.clauses.len()])
                .collect(),
        }
    }

    /// Symmetric window from flattened per-clause half-widths.
    pub fn symmetric(regime: &Regime, flat: &[f64]) -> Result<Self> {
        if flat.len() != regime.n_thresholds() {
            return Err(EngineError::Config(format!(
                "{} window widths supplied for a regime with {} thresholds",
                flat.len(),
                regime.n_thresholds()
            )));
        }
        let mut stages = Vec::with_capacity(regime.stages.len());
        let mut k = 0;
        for rule in &regime.stages {
            let mut row = Vec::with_capacity(rule.clauses.len());
            for _ in &rule.clauses {
                row.push(Tolerance::symmetric(flat[k]));
                k += 1;
            }
            stages.push(row);
        }
        Ok(WindowSpec { stages })
    }

    pub fn is_zero(&self) -> bool {
        self.stages
            .iter()
            .all(|s| s.iter().all(|t| t.lower == 0.0 && t.upper == 0.0))
    }

    /// Largest tolerance in the window (sup norm over all half-widths).
    pub fn sup_norm(&self) -> f64 {
        self.stages
            .iter()
            .flat_map(|s| s.iter())
            .map(|t| t.lower.max(t.upper))
            .fold(0.0, f64::max)
    }

    /// Validate shape, non-negativity, and the directional constraints
    /// against the panel's empirical covariate ranges: a clause at threshold
    /// `psi` over a covariate spanning `[lo, hi]` admits `lower <= psi - lo`
    /// and `upper <= hi - psi`, each additionally capped by `delta_max` when
    /// one is supplied.
    pub fn validate(
        &self,
        regime: &Regime,
        panel: &Panel,
        delta_max: Option<f64>,
    ) -> Result<()> {
        if self.stages.len() != regime.stages.len() {
            return Err(EngineError::Config("window/regime stage count mismatch".into()));
        }
        for (t, (tols, rule)) in self.stages.iter().zip(&regime.stages).enumerate() {
            if tols.len() != rule.clauses.len() {
                return Err(EngineError::Config(format!(
                    "stage {}: {} tolerances for {} clauses",
                    t + 1,
                    tols.len(),
                    rule.clauses.len()
                )));
            }
            for (tol, clause) in tols.iter().zip(&rule.clauses) {
                if !(tol.lower >= 0.0 && tol.upper >= 0.0)
                    || !tol.lower.is_finite()
                    || !tol.upper.is_finite()
                {
                    return Err(EngineError::Config(format!(
                        "stage {}: tolerances must be finite and non-negative",
                        t + 1
                    )));
                }
                let (lo, hi) = panel.covariate_range(t, clause.covariate)?;
                let mut max_lower = clause.threshold - lo;
                let mut max_upper = hi - clause.threshold;
                if let Some(dm) = delta_max {
                    max_lower = max_lower.min(dm);
                    max_upper = max_upper.min(dm);
                }
                // A threshold outside the observed range leaves no room on
                // that side at all.
                max_lower = max_lower.max(0.0);
                max_upper = max_upper.max(0.0);
                if tol.lower > max_lower || tol.upper > max_upper {
                    return Err(EngineError::Config(format!(
                        "stage {}: tolerance ({}, {}) exceeds the directional bound ({:.6}, {:.6})",
                        t + 1,
                        tol.lower,
                        tol.upper,
                        max_lower,
                        max_upper
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Weighting configuration and output
// ---------------------------------------------------------------------------

/// Relaxation schedule for generalized adherence weighting. The total
/// relaxation budget is `eps_n = c * n^(-k)`, split evenly across stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GawConfig {
    pub c: f64,
    pub k: f64,
    /// Cap applied to the per-stage relaxation factor gamma so the
    /// compatibility score of a non-adherent observation stays below 1.
    pub gamma_cap: f64,
}

pub const DEFAULT_GAMMA_CAP: f64 = 1.0 - 1e-9;

impl GawConfig {
    pub fn new(c: f64, k: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(EngineError::Config(format!("gaw rate constant c must be >= 0, got {c}")));
        }
        if !(k >= 0.0 && k.is_finite()) {
            return Err(EngineError::Config(format!("gaw rate exponent k must be >= 0, got {k}")));
        }
        Ok(GawConfig { c, k, gamma_cap: DEFAULT_GAMMA_CAP })
    }

    /// Total relaxation budget `eps_n = c * n^(-k)`; must land in `[0, 1)`.
    pub fn eps_total(&self, n: usize) -> Result<f64> {
        let eps = self.c * (n as f64).powf(-self.k);
        if !(0.0..1.0).contains(&eps) {
            return Err(EngineError::Config(format!(
                "relaxation budget eps_n = {eps:.6} outside [0, 1) at n = {n}"
            )));
        }
        Ok(eps)
    }

    /// Even per-stage split `eps_t = eps_n / T`.
    pub fn eps_stage(&self, n: usize, n_stages: usize) -> Result<f64> {
        Ok(self.eps_total(n)? / n_stages as f64)
    }
}

/// Which statistic drives bootstrap window selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionStatistic {
    /// Normalized windowed inverse-probability estimate.
    Plain,
    /// Normalized augmented (doubly robust) windowed estimate.
    Augmented,
}

/// Configuration for bootstrap window selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BawConfig {
    /// Candidate symmetric half-widths per clause, flattened stage-major like
    /// [`Regime::thresholds`]. Every list must start at 0 and be strictly
    /// increasing; the search walks the cartesian product.
    pub grids: Vec<Vec<f64>>,
    /// Number of bootstrap resamples `B`.
    pub bootstrap: usize,
    /// Weight on squared bias in the selection loss
    /// `L(delta) = Var + lambda_bias * Bias^2`.
    pub lambda_bias: f64,
    /// Refit nuisance models inside each bootstrap replicate. Off by
    /// default: the selection loop reuses the full-sample fits, which is the
    /// cheap variant; turning this on bootstraps the whole procedure.
    pub refit_nuisance: bool,
    pub statistic: SelectionStatistic,
    /// A candidate whose estimate fails (no compatible observations) in more
    /// than this fraction of replicates is disqualified.
    pub max_excluded: f64,
    /// Divisor `q` of the covariate range in the default half-width cap
    /// `delta_max = (max - min) / q`; sensible values lie in `[20, 50]`.
    pub range_divisor: f64,
}

impl BawConfig {
    pub fn new(grids: Vec<Vec<f64>>, bootstrap: usize) -> Result<Self> {
        let cfg = BawConfig {
            grids,
            bootstrap,
            lambda_bias: 1.0,
            refit_nuisance: false,
            statistic: SelectionStatistic::Plain,
            max_excluded: 0.2,
            range_divisor: 35.0,
        };
        cfg.validate_grids()?;
        Ok(cfg)
    }

    pub fn validate_grids(&self) -> Result<()> {
        if self.grids.is_empty() {
            return Err(EngineError::Config("window search needs at least one grid".into()));
        }
        if self.bootstrap < 2 {
            return Err(EngineError::Config("window search needs at least 2 bootstrap resamples".into()));
        }
        if !(self.lambda_bias >= 0.0) {
            return Err(EngineError::Config("lambda_bias must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.max_excluded) {
            return Err(EngineError::Config("max_excluded must lie in [0, 1]".into()));
        }
        for (k, grid) in self.grids.iter().enumerate() {
            if grid.first() != Some(&0.0) {
                return Err(EngineError::Config(format!(
                    "candidate grid {k} must start at 0 so the strict regime stays in the search"
                )));
            }
            if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|d| !d.is_finite()) {
                return Err(EngineError::Config(format!(
                    "candidate grid {k} must be finite and strictly increasing"
                )));
            }
        }
        Ok(())
    }
}

/// Which weighting scheme produced a [`WeightSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightKind {
    Ipw,
    Gaw,
    Baw,
}

/// Per-stage and cumulative weights for one (panel, regime) pair.
#[derive(Debug, Clone)]
pub struct WeightSeries {
    pub kind: WeightKind,
    /// `stage[t][i]`: the stage-t weight of subject i.
    pub stage: Vec<Vec<f64>>,
    /// `cumulative[t][i]`: running product of stage weights through stage t.
    pub cumulative: Vec<Vec<f64>>,
    /// Per-subject product of `p_t / D_t` across stages (generalized
    /// adherence weighting only); drives the bias bound.
    pub theta: Option<Vec<f64>>,
    /// How many times the relaxation factor gamma hit its cap.
    pub gamma_cap_events: usize,
}

impl WeightSeries {
    pub fn n(&self) -> usize {
        self.cumulative.last().map_or(0, Vec::len)
    }

    pub fn n_stages(&self) -> usize {
        self.cumulative.len()
    }

    /// Terminal cumulative weights, the ones a plain weighted estimator uses.
    pub fn terminal(&self) -> &[f64] {
        self.cumulative.last().expect("weight series has at least one stage")
    }
}
