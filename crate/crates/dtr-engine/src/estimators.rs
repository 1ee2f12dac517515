//! Value estimators and their analytical variances.
//!
//! Twelve estimators share two formulas: a plain weighted mean of the
//! outcome (unnormalized or normalized) applied to IPW, GAW, or BAW
//! weights, and an augmented form that adds regression-based stage terms on
//! top of an outcome-model baseline. Analytical variances come from the
//! estimating-equation (sandwich) plug-in for the normalized variants; for
//! windowed weights the same formula is reported but should be read as a
//! heuristic, since it ignores the randomness of window selection.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::model::{Panel, WeightKind, WeightSeries};

/// Which of the twelve estimators a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorId {
    pub kind: WeightKind,
    pub augmented: bool,
    pub normalized: bool,
}

impl EstimatorId {
    pub fn new(kind: WeightKind, augmented: bool, normalized: bool) -> Self {
        Self { kind, augmented, normalized }
    }

    /// Conventional short label: `nAGAW` = normalized augmented GAW etc.
    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.normalized {
            s.push('n');
        }
        if self.augmented {
            s.push('A');
        }
        s.push_str(match self.kind {
            WeightKind::Ipw => "IPW",
            WeightKind::Gaw => "GAW",
            WeightKind::Baw => "BAW",
        });
        s
    }

    /// Parse a label such as "nGAW" or "aipw" (case-insensitive).
    pub fn parse(label: &str) -> Result<Self> {
        let lower = label.to_ascii_lowercase();
        let (normalized, rest) = match lower.strip_prefix('n') {
            Some(rest) => (true, rest),
            None => (false, lower.as_str()),
        };
        // None of the bare kind names starts with 'a', so a leading 'a'
        // always marks the augmented variant.
        let (augmented, rest) = match rest.strip_prefix('a') {
            Some(r) => (true, r),
            None => (false, rest),
        };
        let kind = match rest {
            "ipw" => WeightKind::Ipw,
            "gaw" => WeightKind::Gaw,
            "baw" => WeightKind::Baw,
            _ => {
                return Err(EngineError::Config(format!("unknown estimator label \"{label}\"")))
            }
        };
        Ok(Self { kind, augmented, normalized })
    }

    /// All twelve estimators in a fixed reporting order.
    pub fn all() -> Vec<Self> {
        let mut out = Vec::new();
        for kind in [WeightKind::Ipw, WeightKind::Gaw, WeightKind::Baw] {
            for augmented in [false, true] {
                for normalized in [false, true] {
                    out.push(Self { kind, augmented, normalized });
                }
            }
        }
        out
    }
}

/// A point estimate of a regime's value together with its diagnostics.
///
/// `variance` is populated for the normalized variants (where the sandwich
/// formulas below apply) and absent otherwise. `theta_min` and `bias_bound`
/// are present only for GAW weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub id: EstimatorId,
    pub value: f64,
    pub variance: Option<f64>,
    pub ess: f64,
    /// 99th-minus-1st percentile range of the terminal weights.
    pub weight_spread: f64,
    pub theta_min: Option<f64>,
    pub bias_bound: Option<f64>,
    pub gamma_cap_events: usize,
}

impl ValueEstimate {
    pub fn se(&self) -> Option<f64> {
        self.variance.map(f64::sqrt)
    }
}

fn check_alignment(panel: &Panel, weights: &WeightSeries) -> Result<()> {
    if weights.n() != panel.n() || weights.n_stages() != panel.n_stages() {
        return Err(EngineError::Data(format!(
            "weight series shaped {}x{} does not match panel {}x{}",
            weights.n_stages(),
            weights.n(),
            panel.n_stages(),
            panel.n()
        )));
    }
    Ok(())
}

fn terminal_ess(weights: &WeightSeries) -> f64 {
    crate::weighting::ess(weights.terminal()).unwrap_or(0.0)
}

fn theta_min_of(weights: &WeightSeries) -> Option<f64> {
    weights
        .theta
        .as_ref()
        .map(|th| th.iter().copied().fold(f64::INFINITY, f64::min))
}

fn attach_diagnostics(panel: &Panel, weights: &WeightSeries, est: &mut ValueEstimate) {
    est.ess = terminal_ess(weights);
    est.weight_spread =
        crate::weighting::weight_spread(weights.terminal(), 1.0, 99.0).unwrap_or(0.0);
    est.gamma_cap_events = weights.gamma_cap_events;
    if let Some(tm) = theta_min_of(weights) {
        est.theta_min = Some(tm);
        est.bias_bound = Some(bias_bound(tm, panel.outcome_range()));
    }
}

// ---------------------------------------------------------------------------
// Plain weighted estimators
// ---------------------------------------------------------------------------

/// Plain weighted value estimate from any weight series (strict, generalized,
/// or windowed — the formula is the same; the series carries its own kind).
///
/// Unnormalized: `n^-1 sum_i wbar_i Y_i`. Normalized: `sum wbar Y / sum wbar`,
/// which errors when no one carries weight.
pub fn value_ipw(panel: &Panel, weights: &WeightSeries, normalized: bool) -> Result<ValueEstimate> {
    check_alignment(panel, weights)?;
    let w = weights.terminal();
    let y = &panel.outcome;
    let n = panel.n() as f64;
    let wsum: f64 = w.iter().sum();
    let wy: f64 = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum();
    let value = if normalized {
        if wsum == 0.0 {
            return Err(EngineError::NoAdherers { stage: None });
        }
        wy / wsum
    } else {
        wy / n
    };
    let variance = if normalized {
        Some(analytical_variance_plain(panel, weights, value)?)
    } else {
        None
    };
    let mut est = ValueEstimate {
        id: EstimatorId::new(weights.kind, false, normalized),
        value,
        variance,
        ess: 0.0,
        weight_spread: 0.0,
        theta_min: None,
        bias_bound: None,
        gamma_cap_events: 0,
    };
    attach_diagnostics(panel, weights, &mut est);
    Ok(est)
}

/// Sandwich variance of the normalized plain estimator:
/// `(1/n^2) sum_i wbar_i^2 (Y_i - V)^2 / Jbar^2` with `Jbar = mean(wbar)`.
///
/// At all-one weights this is the population variance of Y over n, i.e. the
/// usual variance of a sample mean (population divisor, documented once here
/// and used in every sandwich formula).
pub fn analytical_variance_plain(
    panel: &Panel,
    weights: &WeightSeries,
    point: f64,
) -> Result<f64> {
    check_alignment(panel, weights)?;
    let w = weights.terminal();
    let n = panel.n() as f64;
    let jbar = w.iter().sum::<f64>() / n;
    if jbar == 0.0 {
        return Err(EngineError::NoAdherers { stage: None });
    }
    let meat: f64 = w
        .iter()
        .zip(&panel.outcome)
        .map(|(wi, yi)| (wi * (yi - point)).powi(2))
        .sum();
    Ok(meat / (n * n * jbar * jbar))
}

// ---------------------------------------------------------------------------
// Augmented estimators
// ---------------------------------------------------------------------------

fn check_q_shape(panel: &Panel, q: &[Vec<f64>]) -> Result<()> {
    let t_stages = panel.n_stages();
    if q.len() != t_stages + 1 {
        return Err(EngineError::Data(format!(
            "expected {} pseudo-outcome vectors (stages + outcome), got {}",
            t_stages + 1,
            q.len()
        )));
    }
    if q.iter().any(|qt| qt.len() != panel.n()) {
        return Err(EngineError::Data("pseudo-outcome vector length mismatch".into()));
    }
    Ok(())
}

/// Augmented value estimate from a weight series and the pseudo-outcome
/// recursion `q[0..=T]` (with `q[T]` literally the outcome vector).
///
/// Unnormalized: `n^-1 sum_i { q0_i + sum_t wbar_{t,i} (q_{t+1,i} - q_{t,i}) }`.
/// Normalized: `mean(q0) + sum_t [ sum_i wbar_{t,i} (q_{t+1,i} - q_{t,i}) ] / S_t`
/// with `S_t = sum_i wbar_{t,i}`; a stage that no one's weight reaches makes
/// the normalized form undefined and errors with that stage named.
pub fn value_augmented(
    panel: &Panel,
    weights: &WeightSeries,
    q: &[Vec<f64>],
    normalized: bool,
) -> Result<ValueEstimate> {
    check_alignment(panel, weights)?;
    check_q_shape(panel, q)?;
    let n = panel.n();
    let t_stages = panel.n_stages();
    let value = if normalized {
        let mut value = q[0].iter().sum::<f64>() / n as f64;
        for t in 0..t_stages {
            let wt = &weights.cumulative[t];
            let s_t: f64 = wt.iter().sum();
            if s_t == 0.0 {
                return Err(EngineError::NoAdherers { stage: Some(t) });
            }
            let num: f64 =
                (0..n).map(|i| wt[i] * (q[t + 1][i] - q[t][i])).sum();
            value += num / s_t;
        }
        value
    } else {
        let mut total = 0.0;
        for i in 0..n {
            let mut term = q[0][i];
            for t in 0..t_stages {
                term += weights.cumulative[t][i] * (q[t + 1][i] - q[t][i]);
            }
            total += term;
        }
        total / n as f64
    };
    let variance = if normalized {
        Some(analytical_variance_augmented(panel, weights, q, value)?)
    } else {
        None
    };
    let mut est = ValueEstimate {
        id: EstimatorId::new(weights.kind, true, normalized),
        value,
        variance,
        ess: 0.0,
        weight_spread: 0.0,
        theta_min: None,
        bias_bound: None,
        gamma_cap_events: 0,
    };
    attach_diagnostics(panel, weights, &mut est);
    Ok(est)
}

/// Sandwich variance of the normalized augmented estimator: `sum_i U_i^2`
/// with estimating function
/// `U_i = sum_t wbar_{t,i} (q_{t+1,i} - q_{t,i}) / S_t + (q0_i - V) / n`.
///
/// A stage with `S_t = 0` contributes nothing to any `U_i` (its stage term
/// is absent from the estimator, so 0/0 is read as 0 here); with weights
/// identically zero this collapses to the variance of the mean of `q0`.
pub fn analytical_variance_augmented(
    panel: &Panel,
    weights: &WeightSeries,
    q: &[Vec<f64>],
    point: f64,
) -> Result<f64> {
    check_alignment(panel, weights)?;
    check_q_shape(panel, q)?;
    let n = panel.n();
    let t_stages = panel.n_stages();
    let stage_sums: Vec<f64> =
        (0..t_stages).map(|t| weights.cumulative[t].iter().sum()).collect();
    let mut total = 0.0;
    for i in 0..n {
        let mut u = (q[0][i] - point) / n as f64;
        for t in 0..t_stages {
            if stage_sums[t] > 0.0 {
                u += weights.cumulative[t][i] * (q[t + 1][i] - q[t][i]) / stage_sums[t];
            }
        }
        total += u * u;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Bias bound
// ---------------------------------------------------------------------------

/// Conservative upper bound on the magnitude of the bias a nonzero
/// relaxation budget can introduce: `(1 - theta_min) * y_range`, where
/// `theta_min` is the worst-case individual's product of `p_t / D_t` terms.
/// With the constraint-derived relaxation factor this is at most
/// `eps_n * y_range`.
pub fn bias_bound(theta_min: f64, y_range: f64) -> f64 {
    (1.0 - theta_min) * y_range
}

/// Convenience: run one estimator end to end from weights (+ optional
/// pseudo-outcomes for the augmented forms).
pub fn estimate(
    panel: &Panel,
    weights: &WeightSeries,
    q: Option<&[Vec<f64>]>,
    augmented: bool,
    normalized: bool,
) -> Result<ValueEstimate> {
    if augmented {
        let q = q.ok_or_else(|| {
            EngineError::Config("augmented estimators need fitted pseudo-outcomes".into())
        })?;
        value_augmented(panel, weights, q, normalized)
    } else {
        value_ipw(panel, weights, normalized)
    }
}
