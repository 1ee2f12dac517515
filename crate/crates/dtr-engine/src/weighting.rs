//! Adherence weights and weight diagnostics.
//!
//! All three weighting schemes share one shape: a per-stage weight
//! `m / D`, where `m` scores how compatible the observed treatment is with
//! the regime at that stage and `D` is the conditional probability mass of
//! the compatible treatment set. Strict inverse-probability weighting takes
//! `m` as the 0/1 adherence indicator; the relaxed schemes widen `m` (and
//! correct `D` accordingly) so fewer observations are discarded.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::glm::PropensityFit;
use crate::model::{
    GawConfig, Panel, Regime, WeightKind, WeightSeries, WindowSpec,
};

// ---------------------------------------------------------------------------
// Stage-level generalized adherence quantities
// ---------------------------------------------------------------------------

/// Raw relaxation factor `gamma = eps * p / ((1 - eps) * (1 - p))`, the
/// unique value at which the stage weight has unit conditional expectation
/// while non-adherent mass stays bounded by `eps`. No cap is applied.
pub fn gamma_eq1(eps: f64, p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eps) {
        return Err(EngineError::Config(format!("relaxation eps = {eps} outside [0, 1)")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(EngineError::Config(format!(
            "adherence probability p = {p} must lie strictly inside (0, 1)"
        )));
    }
    Ok(eps * p / ((1.0 - eps) * (1.0 - p)))
}

/// Capped relaxation factor. Returns the factor together with a flag noting
/// whether the cap bound it (which keeps a non-adherent observation's
/// compatibility strictly below an adherent one's).
pub fn gamma_from_constraint(eps: f64, p: f64, cap: f64) -> Result<(f64, bool)> {
    let raw = gamma_eq1(eps, p)?;
    if raw > cap {
        Ok((cap, true))
    } else {
        Ok((raw, false))
    }
}

/// Everything the generalized scheme computes for one (subject, stage):
/// compatibility `m`, denominator `D = p + gamma (1 - p)`, the stage weight
/// `m / D`, and the stage's contribution `p / D` to the bias factor theta.
#[derive(Debug, Clone, Copy)]
pub struct GawStageQuantities {
    pub p: f64,
    pub gamma: f64,
    pub m: f64,
    pub d: f64,
    pub weight: f64,
}

/// Stage-level generalized adherence weight for one observation, for any
/// relaxation factor in `[0, 1)` — the factor is usually the capped value
/// from [`gamma_from_constraint`], but callers may supply their own.
pub fn gaw_stage_weight(adherent: bool, p: f64, gamma: f64) -> Result<GawStageQuantities> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EngineError::Config(format!(
            "adherence probability p = {p} must lie strictly inside (0, 1)"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(EngineError::Config(format!("relaxation factor {gamma} outside [0, 1)")));
    }
    let m = if adherent { 1.0 } else { gamma };
    let d = p + gamma * (1.0 - p);
    Ok(GawStageQuantities { p, gamma, m, d, weight: m / d })
}

// ---------------------------------------------------------------------------
// Weight series over a panel
// ---------------------------------------------------------------------------

fn cumulative_products(stage: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = stage[0].len();
    let mut cumulative: Vec<Vec<f64>> = Vec::with_capacity(stage.len());
    let mut running = vec![1.0; n];
    for w in stage {
        for i in 0..n {
            running[i] *= w[i];
        }
        cumulative.push(running.clone());
    }
    cumulative
}

/// Strict inverse-probability weights: at each stage, adherent observations
/// get `1 / P(observed action | history)` and everyone else gets 0.
pub fn ipw_weights(
    panel: &Panel,
    regime: &Regime,
    props: &PropensityFit,
) -> Result<WeightSeries> {
    regime.validate_against(panel)?;
    let n = panel.n();
    let n_stages = panel.n_stages();
    let mut stage = vec![vec![0.0; n]; n_stages];
    for t in 0..n_stages {
        for i in 0..n {
            let rec = if regime.recommends_treat(panel, t, i) {
                regime.treat_action
            } else {
                regime.control_action
            };
            let obs = panel.stages[t].treatments[i];
            if obs == rec {
                stage[t][i] = 1.0 / props.prob_of(t, i, obs);
            }
        }
    }
    let cumulative = cumulative_products(&stage);
    Ok(WeightSeries {
        kind: WeightKind::Ipw,
        stage,
        cumulative,
        theta: None,
        gamma_cap_events: 0,
    })
}

/// Generalized adherence weights under the relaxation budget in `cfg`.
///
/// With a zero budget the output coincides with [`ipw_weights`] exactly
/// (bit for bit): gamma collapses to 0, so `m` is the strict indicator and
/// `D` the strict adherence probability.
pub fn gaw_weights(
    panel: &Panel,
    regime: &Regime,
    props: &PropensityFit,
    cfg: &GawConfig,
) -> Result<WeightSeries> {
    regime.validate_against(panel)?;
    let n = panel.n();
    let n_stages = panel.n_stages();
    let eps = cfg.eps_stage(n, n_stages)?;
    let mut stage = vec![vec![0.0; n]; n_stages];
    let mut theta = vec![1.0; n];
    let mut gamma_cap_events = 0;
    for t in 0..n_stages {
        for i in 0..n {
            let rec = if regime.recommends_treat(panel, t, i) {
                regime.treat_action
            } else {
                regime.control_action
            };
            let adherent = panel.stages[t].treatments[i] == rec;
            let p = props.prob_of(t, i, rec);
            let (gamma, capped) = gamma_from_constraint(eps, p, cfg.gamma_cap)?;
            if capped {
                gamma_cap_events += 1;
            }
            let q = gaw_stage_weight(adherent, p, gamma)?;
            stage[t][i] = q.weight;
            theta[i] *= q.p / q.d;
        }
    }
    let cumulative = cumulative_products(&stage);
    Ok(WeightSeries {
        kind: WeightKind::Gaw,
        stage,
        cumulative,
        theta: Some(theta),
        gamma_cap_events,
    })
}

// ---------------------------------------------------------------------------
// Windowed compatibility
// ---------------------------------------------------------------------------

/// Which actions a windowed clause set deems compatible for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibleActions {
    pub treat: bool,
    pub control: bool,
}

/// Stage-level windowed compatibility of both actions for subject `i`.
///
/// For a `x <= psi` clause, treatment stays compatible up to `psi + upper`
/// and control down to (but excluding) `psi - lower`; a `x >= psi` clause
/// mirrors this. A stage with several clauses treats-compatibly only if
/// every clause does, and control-compatibly if any clause does — the
/// windowed analogue of recommending control when the conjunction fails.
/// Inside a band both actions are compatible; the sets are never both empty.
pub(crate) fn stage_compatible_actions(
    panel: &Panel,
    regime: &Regime,
    window: &WindowSpec,
    t: usize,
    i: usize,
) -> CompatibleActions {
    let mut treat = true;
    let mut control = false;
    for (clause, tol) in regime.stages[t].clauses.iter().zip(&window.stages[t]) {
        let x = panel.stages[t].covariates[clause.covariate][i];
        let (clause_treat, clause_control) = match clause.direction {
            crate::model::Direction::Le => {
                (x <= clause.threshold + tol.upper, x > clause.threshold - tol.lower)
            }
            crate::model::Direction::Ge => {
                (x >= clause.threshold - tol.lower, x < clause.threshold + tol.upper)
            }
        };
        treat &= clause_treat;
        control |= clause_control;
    }
    CompatibleActions { treat, control }
}

/// Windowed compatibility of the *observed* actions: `out[t][i]` is true
/// when subject `i`'s stage-`t` treatment lies in the windowed compatible
/// set. A zero window reproduces [`strict_adherence`].
///
/// [`strict_adherence`]: crate::model::strict_adherence
pub fn windowed_compatibility(
    panel: &Panel,
    regime: &Regime,
    window: &WindowSpec,
) -> Result<Vec<Vec<bool>>> {
    regime.validate_against(panel)?;
    if window.stages.len() != regime.stages.len()
        || window
            .stages
            .iter()
            .zip(&regime.stages)
            .any(|(w, r)| w.len() != r.clauses.len())
    {
        return Err(EngineError::Config("window shape does not match the regime".into()));
    }
    let n = panel.n();
    Ok((0..panel.n_stages())
        .map(|t| {
            (0..n)
                .map(|i| {
                    let set = stage_compatible_actions(panel, regime, window, t, i);
                    let obs = panel.stages[t].treatments[i];
                    if obs == regime.treat_action {
                        set.treat
                    } else {
                        set.control
                    }
                })
                .collect()
        })
        .collect())
}

/// Windowed adherence weights: `m` is the windowed compatibility indicator
/// and `D` the propensity mass of the compatible set. Observations inside a
/// band (both actions compatible) get weight exactly 1; with a zero window
/// the output coincides with [`ipw_weights`] bit for bit.
pub fn baw_weights(
    panel: &Panel,
    regime: &Regime,
    props: &PropensityFit,
    window: &WindowSpec,
) -> Result<WeightSeries> {
    regime.validate_against(panel)?;
    if window.stages.len() != regime.stages.len()
        || window
            .stages
            .iter()
            .zip(&regime.stages)
            .any(|(w, r)| w.len() != r.clauses.len())
    {
        return Err(EngineError::Config("window shape does not match the regime".into()));
    }
    let n = panel.n();
    let n_stages = panel.n_stages();
    let mut stage = vec![vec![0.0; n]; n_stages];
    for t in 0..n_stages {
        for i in 0..n {
            let set = stage_compatible_actions(panel, regime, window, t, i);
            let obs = panel.stages[t].treatments[i];
            let obs_compatible = if obs == regime.treat_action { set.treat } else { set.control };
            if !obs_compatible {
                continue;
            }
            stage[t][i] = match (set.treat, set.control) {
                // Both actions compatible: the set has full probability mass.
                (true, true) => 1.0,
                (true, false) => 1.0 / props.prob_of(t, i, regime.treat_action),
                (false, true) => 1.0 / props.prob_of(t, i, regime.control_action),
                (false, false) => unreachable!("compatible sets are never empty"),
            };
        }
    }
    let cumulative = cumulative_products(&stage);
    Ok(WeightSeries {
        kind: WeightKind::Baw,
        stage,
        cumulative,
        theta: None,
        gamma_cap_events: 0,
    })
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Effective sample size `(sum w)^2 / (sum w^2)`. Errors when every weight
/// is zero (no information at all) rather than returning NaN.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(EngineError::Data(format!("weight {w} is negative or non-finite")));
        }
        sum += w;
        sumsq += w * w;
    }
    if sumsq == 0.0 {
        return Err(EngineError::NoAdherers { stage: None });
    }
    Ok(sum * sum / sumsq)
}

/// Percentile with linear interpolation between closest ranks
/// (the `h = (n - 1) * p / 100` convention).
pub fn percentile(values: &[f64], pct: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(EngineError::Data("percentile of an empty slice".into()));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(EngineError::Config(format!("percentile {pct} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let h = (sorted.len() - 1) as f64 * pct / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        Ok(sorted[lo])
    } else {
        Ok(sorted[lo] + (h - h.floor()) * (sorted[hi] - sorted[lo]))
    }
}

/// Spread between two weight percentiles; (1, 99) gives the usual
/// 99th-minus-1st percentile range.
pub fn weight_spread(weights: &[f64], lo_pct: f64, hi_pct: f64) -> Result<f64> {
    if hi_pct < lo_pct {
        return Err(EngineError::Config(format!(
            "spread percentiles out of order: {hi_pct} < {lo_pct}"
        )));
    }
    Ok(percentile(weights, hi_pct)? - percentile(weights, lo_pct)?)
}

/// Standardized mean difference of a covariate between the treated
/// (`group = true`) and control groups: difference of (optionally weighted)
/// group means over the pooled *unweighted* standard deviation
/// `sqrt((s1^2 + s0^2) / 2)`. Without weights this is the plain SMD.
pub fn smd(x: &[f64], group: &[bool], weights: Option<&[f64]>) -> Result<f64> {
    let unit = vec![1.0; x.len()];
    let weights = weights.unwrap_or(&unit);
    if x.len() != group.len() || x.len() != weights.len() {
        return Err(EngineError::Data("smd inputs have mismatched lengths".into()));
    }
    let mut wsum = [0.0f64; 2];
    let mut wmean = [0.0f64; 2];
    let mut count = [0usize; 2];
    let mut mean = [0.0f64; 2];
    for i in 0..x.len() {
        let g = usize::from(group[i]);
        wsum[g] += weights[i];
        wmean[g] += weights[i] * x[i];
        count[g] += 1;
        mean[g] += x[i];
    }
    for g in 0..2 {
        if count[g] < 2 {
            return Err(EngineError::Data(format!(
                "smd needs at least two observations per group, group {g} has {}",
                count[g]
            )));
        }
        if wsum[g] <= 0.0 {
            return Err(EngineError::NoAdherers { stage: None });
        }
        wmean[g] /= wsum[g];
        mean[g] /= count[g] as f64;
    }
    let mut var = [0.0f64; 2];
    for i in 0..x.len() {
        let g = usize::from(group[i]);
        var[g] += (x[i] - mean[g]).powi(2);
    }
    for g in 0..2 {
        var[g] /= (count[g] - 1) as f64;
    }
    let pooled = ((var[0] + var[1]) / 2.0).sqrt();
    if pooled == 0.0 {
        return Err(EngineError::Data("smd undefined: pooled standard deviation is zero".into()));
    }
    Ok((wmean[1] - wmean[0]) / pooled)
}
