//! Feature specifications: declarative design-matrix columns over a panel.
//!
//! A term is a product of powered factors (covariates, treatments, baseline
//! columns); the empty product is the intercept. Specs are validated against
//! a panel and a modeling role so that, for example, a stage-2 propensity
//! model cannot peek at the stage-2 treatment it is predicting.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::model::Panel;

/// One multiplicative factor of a term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factor {
    /// Stage covariate `X_{stage, index}`.
    Covariate { stage: usize, index: usize },
    /// Treatment indicator `A_stage` (as 0/1).
    Treatment { stage: usize },
    /// Time-constant baseline covariate.
    Baseline { index: usize },
}

/// A design column: the product of its factors raised to integer powers.
/// Terms are kept in a normal form (sorted factors, merged powers) so that
/// duplicate detection is structural.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    factors: Vec<(Factor, u32)>,
}

impl Term {
    pub fn intercept() -> Self {
        Term { factors: Vec::new() }
    }

    pub fn new(raw: Vec<(Factor, u32)>) -> Self {
        let mut factors: Vec<(Factor, u32)> = Vec::new();
        for (f, p) in raw {
            if p == 0 {
                continue;
            }
            match factors.iter_mut().find(|(g, _)| *g == f) {
                Some((_, q)) => *q += p,
                None => factors.push((f, p)),
            }
        }
        factors.sort_unstable();
        Term { factors }
    }

    pub fn of(factor: Factor) -> Self {
        Term::new(vec![(factor, 1)])
    }

    pub fn product(a: Factor, b: Factor) -> Self {
        Term::new(vec![(a, 1), (b, 1)])
    }

    pub fn factors(&self) -> &[(Factor, u32)] {
        &self.factors
    }

    fn value(&self, panel: &Panel, i: usize, override_action: Option<(usize, f64)>) -> f64 {
        let mut v = 1.0;
        for &(factor, power) in &self.factors {
            let x = match factor {
                Factor::Covariate { stage, index } => panel.stages[stage].covariates[index][i],
                Factor::Treatment { stage } => match override_action {
                    Some((s, a)) if s == stage => a,
                    _ => f64::from(panel.stages[stage].treatments[i]),
                },
                Factor::Baseline { index } => {
                    panel.baseline.as_ref().expect("validated baseline").columns[index][i]
                }
            };
            for _ in 0..power {
                v *= x;
            }
        }
        v
    }

    /// Human-readable label, e.g. `x2*a1` or `x1^2`.
    pub fn label(&self, panel: &Panel) -> String {
        if self.factors.is_empty() {
            return "1".into();
        }
        self.factors
            .iter()
            .map(|&(f, p)| {
                let base = match f {
                    Factor::Covariate { stage, index } => {
                        let name = &panel.stages[stage].covariate_names[index];
                        if name.is_empty() {
                            format!("s{}c{}", stage + 1, index)
                        } else {
                            name.clone()
                        }
                    }
                    Factor::Treatment { stage } => format!("a{}", stage + 1),
                    Factor::Baseline { index } => {
                        let base = panel.baseline.as_ref();
                        base.map(|b| b.names[index].clone())
                            .filter(|s| !s.is_empty())
                            .unwrap_or_else(|| format!("b{index}"))
                    }
                };
                if p == 1 {
                    base
                } else {
                    format!("{base}^{p}")
                }
            })
            .collect::<Vec<_>>()
            .join("*")
    }
}

/// What a spec is allowed to reference: a propensity model for stage `t` may
/// use covariates up to stage `t` and treatments strictly before it; an
/// outcome model for stage `t` may additionally use the stage-`t` treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelRole {
    Propensity { stage: usize },
    Outcome { stage: usize },
}

/// An ordered list of design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub terms: Vec<Term>,
}

impl FeatureSpec {
    /// Default propensity features for stage `t`: intercept, the stage's own
    /// covariates, and all earlier treatments.
    pub fn propensity_default(panel: &Panel, stage: usize) -> Self {
        let mut terms = vec![Term::intercept()];
        for index in 0..panel.stages[stage].covariates.len() {
            terms.push(Term::of(Factor::Covariate { stage, index }));
        }
        for s in 0..stage {
            terms.push(Term::of(Factor::Treatment { stage: s }));
        }
        FeatureSpec { terms }
    }

    /// Default outcome features for stage `t`: intercept, every covariate and
    /// treatment observed through stage `t`, plus each treatment interacted
    /// with its own decision stage's covariates — the natural shape for
    /// stagewise treatment effects that vary with the deciding covariate.
    pub fn outcome_default(panel: &Panel, stage: usize) -> Self {
        let mut terms = vec![Term::intercept()];
        for s in 0..=stage {
            for index in 0..panel.stages[s].covariates.len() {
                terms.push(Term::of(Factor::Covariate { stage: s, index }));
            }
        }
        for s in 0..=stage {
            terms.push(Term::of(Factor::Treatment { stage: s }));
            for index in 0..panel.stages[s].covariates.len() {
                terms.push(Term::product(
                    Factor::Treatment { stage: s },
                    Factor::Covariate { stage: s, index },
                ));
            }
        }
        FeatureSpec { terms }
    }

    /// Validate factor references against the panel and the modeling role,
    /// and reject structurally duplicate terms.
    pub fn validate(&self, panel: &Panel, role: ModelRole) -> Result<()> {
        if self.terms.is_empty() {
            return Err(EngineError::Config("feature spec has no terms".into()));
        }
        for (k, term) in self.terms.iter().enumerate() {
            if self.terms[..k].contains(term) {
                return Err(EngineError::Config(format!(
                    "duplicate design term at position {k}"
                )));
            }
            for &(factor, _) in term.factors() {
                match factor {
                    Factor::Covariate { stage, index } => {
                        let horizon = match role {
                            ModelRole::Propensity { stage: t } | ModelRole::Outcome { stage: t } => t,
                        };
                        if stage > horizon {
                            return Err(EngineError::Config(format!(
                                "term references stage-{} covariates ahead of the model's stage {}",
                                stage + 1,
                                horizon + 1
                            )));
                        }
                        if stage >= panel.n_stages()
                            || index >= panel.stages[stage].covariates.len()
                        {
                            return Err(EngineError::Config(format!(
                                "term references covariate {} at stage {}, which the panel lacks",
                                index,
                                stage + 1
                            )));
                        }
                    }
                    Factor::Treatment { stage } => {
                        match role {
                            // Predicting A_t from A_t would be circular.
                            ModelRole::Propensity { stage: t } if stage >= t => {
                                return Err(EngineError::Config(format!(
                                    "stage-{} propensity model cannot reference treatment a{}",
                                    t + 1,
                                    stage + 1
                                )));
                            }
                            ModelRole::Outcome { stage: t } if stage > t => {
                                return Err(EngineError::Config(format!(
                                    "stage-{} outcome model cannot reference treatment a{}",
                                    t + 1,
                                    stage + 1
                                )));
                            }
                            _ => {}
                        }
                        if stage >= panel.n_stages() {
                            return Err(EngineError::Config(format!(
                                "term references treatment a{}, which the panel lacks",
                                stage + 1
                            )));
                        }
                    }
                    Factor::Baseline { index } => {
                        let width = panel.baseline.as_ref().map_or(0, |b| b.columns.len());
                        if index >= width {
                            return Err(EngineError::Config(format!(
                                "term references baseline covariate {index}, but the panel has {width}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Design matrix over the observed data.
    pub fn design(&self, panel: &Panel) -> DMatrix<f64> {
        let n = panel.n();
        DMatrix::from_fn(n, self.terms.len(), |i, k| self.terms[k].value(panel, i, None))
    }

    /// Design matrix with the stage-`stage` treatment overridden per subject
    /// (used to evaluate outcome models at a regime's recommended action).
    pub fn design_with_action(
        &self,
        panel: &Panel,
        stage: usize,
        actions: &[u8],
    ) -> DMatrix<f64> {
        let n = panel.n();
        DMatrix::from_fn(n, self.terms.len(), |i, k| {
            self.terms[k].value(panel, i, Some((stage, f64::from(actions[i]))))
        })
    }
}
