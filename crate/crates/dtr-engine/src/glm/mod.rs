//! Nuisance models: propensity (logistic) and outcome (linear Q) fits over
//! declarative feature specifications.

pub mod features;
pub mod linear;
pub mod logistic;
pub mod qfit;

pub use features::{Factor, FeatureSpec, ModelRole, Term};
pub use linear::{lstsq, LinearFit, LstsqCache};
pub use logistic::{expit, fit_logistic, IrlsOptions, LogisticFit};
pub use qfit::{fit_q_functions, QFit, QFitter, QOptions};

use crate::error::{EngineError, Result};
use crate::model::Panel;

/// Options for propensity fitting.
#[derive(Debug, Clone)]
pub struct PropensityOptions {
    /// Per-stage feature specs; `None` selects
    /// [`FeatureSpec::propensity_default`] at every stage.
    pub specs: Option<Vec<FeatureSpec>>,
    pub irls: IrlsOptions,
    /// Predicted probabilities are clamped into `[p_clamp, 1 - p_clamp]`
    /// before they enter any weight denominator.
    pub p_clamp: f64,
}

impl Default for PropensityOptions {
    fn default() -> Self {
        PropensityOptions { specs: None, irls: IrlsOptions::default(), p_clamp: 1e-6 }
    }
}

/// Fitted treatment models and their clamped per-stage predictions.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    /// Per-stage logistic fits; empty when probabilities were supplied
    /// externally (for example, known randomization probabilities).
    pub models: Vec<LogisticFit>,
    /// `probs[t][i] = P(A_t = 1 | history)`, clamped.
    pub probs: Vec<Vec<f64>>,
    /// How many predictions the clamp actually moved.
    pub clamp_events: usize,
}

impl PropensityFit {
    /// Probability of a specific binary action.
    #[inline]
    pub fn prob_of(&self, stage: usize, i: usize, action: u8) -> f64 {
        let p = self.probs[stage][i];
        if action == 1 {
            p
        } else {
            1.0 - p
        }
    }

    /// Wrap externally supplied `P(A_t = 1 | history)` values (clamped the
    /// same way as fitted ones).
    pub fn from_probs(probs: Vec<Vec<f64>>, p_clamp: f64) -> Result<Self> {
        let mut clamped = probs;
        let mut clamp_events = 0;
        for stage in &mut clamped {
            for p in stage.iter_mut() {
                if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                    return Err(EngineError::Data(format!(
                        "supplied propensity {p} outside [0, 1]"
                    )));
                }
                let c = p.clamp(p_clamp, 1.0 - p_clamp);
                if c != *p {
                    clamp_events += 1;
                    *p = c;
                }
            }
        }
        Ok(PropensityFit { models: Vec::new(), probs: clamped, clamp_events })
    }

    /// Row-resampled view of the predictions (bootstrap without refitting).
    pub fn subsample(&self, idx: &[usize]) -> PropensityFit {
        PropensityFit {
            models: self.models.clone(),
            probs: self
                .probs
                .iter()
                .map(|stage| idx.iter().map(|&i| stage[i]).collect())
                .collect(),
            clamp_events: self.clamp_events,
        }
    }
}

/// Fit one logistic treatment model per stage. The panel alphabet must be
/// binary `{0, 1}`; the model predicts `P(A_t = 1 | history)`.
pub fn fit_propensities(panel: &Panel, opts: &PropensityOptions) -> Result<PropensityFit> {
    if !panel.alphabet.is_binary() {
        return Err(EngineError::Config(
            "propensity fitting is implemented for the binary alphabet {0, 1}".into(),
        ));
    }
    let n_stages = panel.n_stages();
    let specs: Vec<FeatureSpec> = match &opts.specs {
        Some(s) => {
            if s.len() != n_stages {
                return Err(EngineError::Config(format!(
                    "{} propensity specs for {} stages",
                    s.len(),
                    n_stages
                )));
            }
            s.clone()
        }
        None => (0..n_stages)
            .map(|t| FeatureSpec::propensity_default(panel, t))
            .collect(),
    };

    let mut models = Vec::with_capacity(n_stages);
    let mut probs = Vec::with_capacity(n_stages);
    let mut clamp_events = 0;
    for (t, spec) in specs.iter().enumerate() {
        spec.validate(panel, ModelRole::Propensity { stage: t })?;
        let design = spec.design(panel);
        let y: Vec<f64> = panel.stages[t].treatments.iter().map(|&a| f64::from(a)).collect();
        let fit = fit_logistic(&design, &y, &opts.irls)
            .map_err(|e| EngineError::Fit(format!("stage {} propensity: {e}", t + 1)))?;
        let mut p = fit.predict(&design);
        for v in &mut p {
            let c = v.clamp(opts.p_clamp, 1.0 - opts.p_clamp);
            if c != *v {
                clamp_events += 1;
                *v = c;
            }
        }
        models.push(fit);
        probs.push(p);
    }
    Ok(PropensityFit { models, probs, clamp_events })
}

/// Clamped probability of taking `action` at `stage` for subject `i`.
/// Always lies in `[p_clamp, 1 - p_clamp]`, so inverse weights stay finite.
#[inline]
pub fn predict_propensity(fit: &PropensityFit, stage: usize, i: usize, action: u8) -> f64 {
    fit.prob_of(stage, i, action)
}

/// Bundled nuisance options used by the higher-level drivers.
#[derive(Debug, Clone, Default)]
pub struct NuisanceOptions {
    pub propensity: PropensityOptions,
    pub outcome: QOptions,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Alphabet, Stage};
    use crate::rng::substream;
    use rand::Rng;

    fn synthetic_panel(n: usize) -> Panel {
        let mut rng = substream(21, &[]);
        let mut x1 = Vec::new();
        let mut a1 = Vec::new();
        for _ in 0..n {
            let v: f64 = 450.0 + 150.0 * (rng.random::<f64>() - 0.5) * 3.0;
            let p = expit(2.0 - 0.006 * v);
            x1.push(v);
            a1.push(u8::from(rng.random::<f64>() < p));
        }
        Panel::new(
            vec![Stage {
                covariates: vec![x1],
                covariate_names: vec!["x1".into()],
                treatments: a1,
            }],
            vec![0.0; n],
            Alphabet::binary(),
        )
        .unwrap()
    }

    #[test]
    fn fitted_probabilities_track_the_truth() {
        let panel = synthetic_panel(30_000);
        let fit = fit_propensities(&panel, &PropensityOptions::default()).unwrap();
        assert!(fit.models[0].converged);
        let mut worst: f64 = 0.0;
        for i in 0..panel.n() {
            let truth = expit(2.0 - 0.006 * panel.stages[0].covariates[0][i]);
            worst = worst.max((fit.probs[0][i] - truth).abs());
        }
        assert!(worst < 0.05, "worst absolute propensity error {worst}");
    }

    #[test]
    fn prob_of_is_complementary_for_binary_actions() {
        let fit = PropensityFit::from_probs(vec![vec![0.3, 0.8]], 1e-6).unwrap();
        assert!((fit.prob_of(0, 0, 1) - 0.3).abs() < 1e-15);
        assert!((fit.prob_of(0, 0, 0) - 0.7).abs() < 1e-15);
        assert_eq!(fit.clamp_events, 0);
    }

    #[test]
    fn clamping_is_counted() {
        let fit = PropensityFit::from_probs(vec![vec![0.0, 1.0, 0.5]], 1e-6).unwrap();
        assert_eq!(fit.clamp_events, 2);
        assert!(fit.probs[0][0] >= 1e-6 && fit.probs[0][1] <= 1.0 - 1e-6);
        assert!(PropensityFit::from_probs(vec![vec![1.2]], 1e-6).is_err());
    }

    #[test]
    fn subsample_reindexes_predictions() {
        let fit = PropensityFit::from_probs(vec![vec![0.1, 0.2, 0.3]], 1e-6).unwrap();
        let sub = fit.subsample(&[2, 0, 2]);
        assert_eq!(sub.probs[0], vec![0.3, 0.1, 0.3]);
    }
}
