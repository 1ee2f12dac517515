//! Outcome (Q-function) models by backward recursion.
//!
//! Stage `T`'s model regresses the outcome on observed history and
//! treatment; each earlier stage regresses the *regime-evaluated* prediction
//! of the next stage on its own observed history and treatment. Every model
//! is then evaluated with the current stage's treatment replaced by the
//! regime's recommendation, holding earlier observed treatments fixed.
//!
//! Design matrices depend only on the panel and feature specs, so a
//! [`QFitter`] factors them once and re-solves cheaply as the regime (and
//! with it the pseudo-outcome recursion) changes across a threshold grid.

use crate::error::Result;
use crate::glm::features::{FeatureSpec, ModelRole};
use crate::glm::linear::{LinearFit, LstsqCache};
use crate::model::{Panel, Regime};

/// Per-stage outcome feature specs; `None` selects
/// [`FeatureSpec::outcome_default`] at every stage.
#[derive(Debug, Clone, Default)]
pub struct QOptions {
    pub specs: Option<Vec<FeatureSpec>>,
}

/// Fitted stage models and regime-evaluated value predictions.
#[derive(Debug, Clone)]
pub struct QFit {
    /// `models[t]`: stage-`t` regression of the downstream pseudo-outcome on
    /// observed history and treatment.
    pub models: Vec<LinearFit>,
    /// `q[t]` for `t in 0..=T`: the stage-(t+1) pseudo-outcome under the
    /// regime. `q[0]` predicts the value from baseline history; `q[T]` is
    /// the observed outcome itself.
    pub q: Vec<Vec<f64>>,
    /// Total design columns dropped as collinear across stages.
    pub dropped_columns: usize,
}

/// Reusable design factorizations for one (panel, feature-spec) pair.
pub struct QFitter {
    specs: Vec<FeatureSpec>,
    caches: Vec<LstsqCache>,
}

impl QFitter {
    pub fn new(panel: &Panel, opts: &QOptions) -> Result<Self> {
        let n_stages = panel.n_stages();
        let specs: Vec<FeatureSpec> = match &opts.specs {
            Some(s) => {
                if s.len() != n_stages {
                    return Err(crate::error::EngineError::Config(format!(
                        "{} outcome specs for {} stages",
                        s.len(),
                        n_stages
                    )));
                }
                s.clone()
            }
            None => (0..n_stages)
                .map(|t| FeatureSpec::outcome_default(panel, t))
                .collect(),
        };
        let mut caches = Vec::with_capacity(n_stages);
        for (t, spec) in specs.iter().enumerate() {
            spec.validate(panel, ModelRole::Outcome { stage: t })?;
            caches.push(LstsqCache::new(&spec.design(panel))?);
        }
        Ok(QFitter { specs, caches })
    }

    /// Run the backward recursion for one regime.
    pub fn fit(&self, panel: &Panel, regime: &Regime) -> Result<QFit> {
        regime.validate_against(panel)?;
        let n = panel.n();
        let n_stages = panel.n_stages();
        let mut q = vec![Vec::new(); n_stages + 1];
        q[n_stages] = panel.outcome.clone();
        let mut models: Vec<Option<LinearFit>> = (0..n_stages).map(|_| None).collect();
        let mut dropped = 0;

        for t in (0..n_stages).rev() {
            let fit = self.caches[t].solve(&q[t + 1])?;
            dropped += fit.dropped.len();
            let actions: Vec<u8> = (0..n)
                .map(|i| {
                    if regime.recommends_treat(panel, t, i) {
                        regime.treat_action
                    } else {
                        regime.control_action
                    }
                })
                .collect();
            let design_d = self.specs[t].design_with_action(panel, t, &actions);
            q[t] = crate::glm::linear::predict(&design_d, &fit);
            models[t] = Some(fit);
        }

        Ok(QFit {
            models: models.into_iter().map(Option::unwrap).collect(),
            q,
            dropped_columns: dropped,
        })
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }
}

/// Convenience one-shot wrapper around [`QFitter`].
pub fn fit_q_functions(panel: &Panel, regime: &Regime, opts: &QOptions) -> Result<QFit> {
    QFitter::new(panel, opts)?.fit(panel, regime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Alphabet, Stage};
    use crate::rng::substream;
    use rand::Rng;

    /// Two-stage panel with a linear truth the default spec nests exactly:
    /// Y = 1 + 2*x1 - a1*(x1 - 3) + 0.5*x2 - a2*(x2 - 8), no noise.
    fn linear_panel(n: usize) -> Panel {
        let mut rng = substream(9, &[]);
        let mut x1 = Vec::new();
        let mut x2 = Vec::new();
        let mut a1 = Vec::new();
        let mut a2 = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let v1 = 6.0 * rng.random::<f64>();
            let t1 = u8::from(rng.random::<f64>() < 0.5);
            let v2 = v1 + 8.0 * rng.random::<f64>();
            let t2 = u8::from(rng.random::<f64>() < 0.4);
            x1.push(v1);
            x2.push(v2);
            a1.push(t1);
            a2.push(t2);
            y.push(
                1.0 + 2.0 * v1 - f64::from(t1) * (v1 - 3.0) + 0.5 * v2
                    - f64::from(t2) * (v2 - 8.0),
            );
        }
        Panel::new(
            vec![
                Stage {
                    covariates: vec![x1],
                    covariate_names: vec!["x1".into()],
                    treatments: a1,
                },
                Stage {
                    covariates: vec![x2],
                    covariate_names: vec!["x2".into()],
                    treatments: a2,
                },
            ],
            y,
            Alphabet::binary(),
        )
        .unwrap()
    }

    #[test]
    fn recursion_reproduces_a_nested_linear_truth() {
        let panel = linear_panel(400);
        let regime = Regime::all_le(&[0, 0], &[3.0, 8.0]);
        let fit = fit_q_functions(&panel, &regime, &QOptions::default()).unwrap();

        // Stage-2 model must reproduce Y exactly at the observed actions, so
        // q[1] equals the truth with a2 swapped for the recommendation.
        let n = panel.n();
        for i in 0..n {
            let x1 = panel.stages[0].covariates[0][i];
            let x2 = panel.stages[1].covariates[0][i];
            let a1 = f64::from(panel.stages[0].treatments[i]);
            let d2 = f64::from(u8::from(x2 <= 8.0));
            let expect =
                1.0 + 2.0 * x1 - a1 * (x1 - 3.0) + 0.5 * x2 - d2 * (x2 - 8.0);
            assert!(
                (fit.q[1][i] - expect).abs() < 1e-7,
                "q1[{i}] = {} vs {expect}",
                fit.q[1][i]
            );
        }
        assert_eq!(fit.q[2], panel.outcome);
        assert_eq!(fit.models.len(), 2);
    }

    #[test]
    fn fitter_reuse_is_identical_to_fresh_fits() {
        let panel = linear_panel(150);
        let fitter = QFitter::new(&panel, &QOptions::default()).unwrap();
        for psi in [2.0, 3.5, 5.0] {
            let regime = Regime::all_le(&[0, 0], &[psi, 8.0]);
            let cached = fitter.fit(&panel, &regime).unwrap();
            let fresh = fit_q_functions(&panel, &regime, &QOptions::default()).unwrap();
            assert_eq!(cached.q, fresh.q);
        }
    }

    #[test]
    fn spec_count_must_match_stages() {
        let panel = linear_panel(50);
        let opts = QOptions {
            specs: Some(vec![FeatureSpec::outcome_default(&panel, 0)]),
        };
        assert!(QFitter::new(&panel, &opts).is_err());
    }
}
