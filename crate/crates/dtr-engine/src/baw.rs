//! Bootstrap selection of adherence-window half-widths.
//!
//! Widening the tolerance window around a threshold rule admits
//! near-adherent subjects, trading a little definitional bias for variance.
//! The selector scores every candidate half-width tuple on a common set of
//! bootstrap resamples (so candidates see identical resampling noise) and
//! minimizes `Var + lambda * Bias^2`, where bias is measured against the
//! strict-window statistic on the original sample.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::estimators::{estimate, ValueEstimate};
use crate::glm::{fit_propensities, NuisanceOptions, PropensityFit, QFitter};
use crate::model::{BawConfig, Panel, Regime, SelectionStatistic, WindowSpec};
use crate::rng::{substream, tags};
use crate::surface::cartesian_grid;
use crate::weighting::baw_weights;

/// Largest sensible half-width for one clause: covariate range over `q`.
///
/// `q` between 20 and 50 keeps the window a small fraction of the spread.
pub fn delta_max(range: (f64, f64), q: f64) -> Result<f64> {
    let (lo, hi) = range;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(EngineError::Config(format!(
            "degenerate covariate range [{lo}, {hi}] has no usable window scale"
        )));
    }
    if !(20.0..=50.0).contains(&q) {
        return Err(EngineError::Config(format!("range divisor q = {q} outside [20, 50]")));
    }
    Ok((hi - lo) / q)
}

/// Candidate half-width tuples: per clause `{0, s, 2s, ...}` capped at that
/// clause's `delta_max`, expanded to the cartesian product. The strict
/// all-zero tuple always comes first.
pub fn build_grid(steps: &[f64], delta_max: &[f64]) -> Result<Vec<Vec<f64>>> {
    if steps.is_empty() || steps.len() != delta_max.len() {
        return Err(EngineError::Config(format!(
            "{} grid steps for {} half-width caps",
            steps.len(),
            delta_max.len()
        )));
    }
    let mut axes = Vec::with_capacity(steps.len());
    for (j, (&s, &dmax)) in steps.iter().zip(delta_max).enumerate() {
        if !(s > 0.0) || !s.is_finite() {
            return Err(EngineError::Config(format!("grid step {j} must be positive, got {s}")));
        }
        if s > dmax {
            return Err(EngineError::Config(format!(
                "grid step {s} exceeds the half-width cap {dmax} for clause {j}"
            )));
        }
        let slack = 1e-9 * dmax.max(1.0);
        let mut axis = Vec::new();
        let mut k = 0u32;
        loop {
            let v = f64::from(k) * s;
            if v > dmax + slack {
                break;
            }
            axis.push(v);
            k += 1;
        }
        axes.push(axis);
    }
    Ok(cartesian_grid(&axes))
}

/// Bootstrap score card for one half-width tuple.
///
/// The four statistics are `None` when fewer than two replicates kept the
/// candidate alive (no variance can be formed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowCandidate {
    pub deltas: Vec<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    /// Bootstrap mean minus the strict-window statistic on the original
    /// sample.
    pub bias: Option<f64>,
    pub loss: Option<f64>,
    /// Replicates where the windowed estimate was undefined.
    pub excluded: usize,
    pub disqualified: bool,
}

/// Everything the window search saw and what it picked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowSearchResult {
    pub statistic: SelectionStatistic,
    pub lambda_bias: f64,
    pub bootstrap: usize,
    /// Strict-window (`delta = 0`) statistic on the original sample; the
    /// bias anchor.
    pub reference_value: f64,
    pub candidates: Vec<WindowCandidate>,
    /// Index of the winner in `candidates`.
    pub selected: usize,
    pub delta_opt: Vec<f64>,
    /// Windowed estimate at `delta_opt` on the original sample.
    pub estimate: ValueEstimate,
    /// Per-candidate bootstrap statistics, replicate-major within each
    /// candidate; `None` marks an exclusion.
    pub replicate_values: Vec<Vec<Option<f64>>>,
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Smallest qualified loss, ties to the lexicographically smallest tuple.
fn choose(candidates: &[WindowCandidate]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (idx, c) in candidates.iter().enumerate() {
        if c.disqualified {
            continue;
        }
        let loss = c.loss.expect("qualified candidate has a loss");
        match best {
            None => best = Some(idx),
            Some(b) => {
                let bl = candidates[b].loss.unwrap();
                if loss < bl || (loss == bl && lex_less(&c.deltas, &candidates[b].deltas)) {
                    best = Some(idx);
                }
            }
        }
    }
    best.ok_or_else(|| {
        EngineError::Selection(
            "every candidate window was disqualified by bootstrap exclusions".into(),
        )
    })
}

struct ReplicateCtx {
    panel: Panel,
    props: PropensityFit,
    q: Option<Vec<Vec<f64>>>,
}

fn statistic_value(
    panel: &Panel,
    regime: &Regime,
    props: &PropensityFit,
    q: Option<&[Vec<f64>]>,
    deltas: &[f64],
    statistic: SelectionStatistic,
) -> Result<ValueEstimate> {
    let window = WindowSpec::symmetric(regime, deltas)?;
    let weights = baw_weights(panel, regime, props, &window)?;
    match statistic {
        SelectionStatistic::Plain => estimate(panel, &weights, None, false, true),
        SelectionStatistic::Augmented => estimate(panel, &weights, q, true, true),
    }
}

/// [`select_window`] with explicit nuisance-model options.
pub fn select_window_with(
    panel: &Panel,
    regime: &Regime,
    cfg: &BawConfig,
    nuisance: &NuisanceOptions,
    seed: u64,
) -> Result<WindowSearchResult> {
    cfg.validate_grids()?;
    regime.validate_against(panel)?;
    if cfg.grids.len() != regime.n_thresholds() {
        return Err(EngineError::Config(format!(
            "{} candidate grids for a regime with {} thresholds",
            cfg.grids.len(),
            regime.n_thresholds()
        )));
    }
    let candidates_deltas = cartesian_grid(&cfg.grids);
    let augmented = cfg.statistic == SelectionStatistic::Augmented;

    let props_full = fit_propensities(panel, &nuisance.propensity)?;
    let q_full = if augmented {
        Some(QFitter::new(panel, &nuisance.outcome)?.fit(panel, regime)?.q)
    } else {
        None
    };

    // Bias anchor: the strict statistic on the original sample. The same
    // number doubles as the reference the winner is compared against.
    let zeros = vec![0.0; regime.n_thresholds()];
    let reference = statistic_value(
        panel,
        regime,
        &props_full,
        q_full.as_deref(),
        &zeros,
        cfg.statistic,
    )?;

    let n = panel.n();
    let b_total = cfg.bootstrap;
    // One resample context per replicate, shared by every candidate, so the
    // loss comparison sees common random numbers.
    let contexts: Vec<ReplicateCtx> = (0..b_total)
        .into_par_iter()
        .map(|rep| -> Result<ReplicateCtx> {
            let mut rng = substream(seed, &[tags::BOOTSTRAP, rep as u64]);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resample = panel.subsample(&idx);
            let props = if cfg.refit_nuisance {
                fit_propensities(&resample, &nuisance.propensity)?
            } else {
                props_full.subsample(&idx)
            };
            // Outcome models always honor the resample: the backward
            // recursion is what the augmented statistic is judged on.
            let q = if augmented {
                Some(QFitter::new(&resample, &nuisance.outcome)?.fit(&resample, regime)?.q)
            } else {
                None
            };
            Ok(ReplicateCtx { panel: resample, props, q })
        })
        .collect::<Result<_>>()?;

    let replicate_values: Vec<Vec<Option<f64>>> = candidates_deltas
        .par_iter()
        .map(|deltas| -> Result<Vec<Option<f64>>> {
            contexts
                .iter()
                .map(|ctx| {
                    match statistic_value(
                        &ctx.panel,
                        regime,
                        &ctx.props,
                        ctx.q.as_deref(),
                        deltas,
                        cfg.statistic,
                    ) {
                        Ok(est) => Ok(Some(est.value)),
                        Err(EngineError::NoAdherers { .. }) => Ok(None),
                        Err(other) => Err(other),
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let candidates: Vec<WindowCandidate> = candidates_deltas
        .iter()
        .zip(&replicate_values)
        .map(|(deltas, values)| {
            let kept: Vec<f64> = values.iter().flatten().copied().collect();
            let excluded = b_total - kept.len();
            let over_budget = excluded as f64 > cfg.max_excluded * b_total as f64;
            if kept.len() < 2 || over_budget {
                return WindowCandidate {
                    deltas: deltas.clone(),
                    mean: None,
                    variance: None,
                    bias: None,
                    loss: None,
                    excluded,
                    disqualified: true,
                };
            }
            let mean = kept.iter().sum::<f64>() / kept.len() as f64;
            let variance = kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (kept.len() - 1) as f64;
            let bias = mean - reference.value;
            WindowCandidate {
                deltas: deltas.clone(),
                mean: Some(mean),
                variance: Some(variance),
                bias: Some(bias),
                loss: Some(variance + cfg.lambda_bias * bias * bias),
                excluded,
                disqualified: false,
            }
        })
        .collect();

    let selected = choose(&candidates)?;
    let delta_opt = candidates[selected].deltas.clone();
    // Compatibility only grows with the window, so the winner is defined on
    // the original sample whenever the strict reference was.
    let estimate = statistic_value(
        panel,
        regime,
        &props_full,
        q_full.as_deref(),
        &delta_opt,
        cfg.statistic,
    )?;

    Ok(WindowSearchResult {
        statistic: cfg.statistic,
        lambda_bias: cfg.lambda_bias,
        bootstrap: b_total,
        reference_value: reference.value,
        candidates,
        selected,
        delta_opt,
        estimate,
        replicate_values,
    })
}

/// Pick tolerance half-widths by minimizing bootstrap `Var + lambda * Bias^2`
/// over the candidate grid, then estimate at the winner on the full sample.
pub fn select_window(
    panel: &Panel,
    regime: &Regime,
    cfg: &BawConfig,
    seed: u64,
) -> Result<WindowSearchResult> {
    select_window_with(panel, regime, cfg, &NuisanceOptions::default(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate, DgpSpec};
    use crate::weighting::ipw_weights;

    #[test]
    fn delta_max_frozen_values() {
        assert_eq!(delta_max((150.0, 500.0), 35.0).unwrap(), 10.0);
        assert_eq!(delta_max((0.0, 100.0), 20.0).unwrap(), 5.0);
        assert!(delta_max((5.0, 5.0), 35.0).is_err());
        assert!(delta_max((9.0, 5.0), 35.0).is_err());
        assert!(delta_max((0.0, 100.0), 19.0).is_err());
        assert!(delta_max((0.0, 100.0), 51.0).is_err());
    }

    #[test]
    fn build_grid_frozen_values() {
        let g = build_grid(&[2.0], &[10.0]).unwrap();
        assert_eq!(g, vec![
            vec![0.0], vec![2.0], vec![4.0], vec![6.0], vec![8.0], vec![10.0]
        ]);
        let g = build_grid(&[3.0], &[10.0]).unwrap();
        assert_eq!(g, vec![vec![0.0], vec![3.0], vec![6.0], vec![9.0]]);
        let g = build_grid(&[2.0, 5.0], &[2.0, 5.0]).unwrap();
        assert_eq!(g, vec![
            vec![0.0, 0.0], vec![0.0, 5.0], vec![2.0, 0.0], vec![2.0, 5.0]
        ]);
        assert_eq!(g[0], vec![0.0, 0.0], "strict tuple always first");
        assert!(build_grid(&[0.0], &[10.0]).is_err());
        assert!(build_grid(&[-1.0], &[10.0]).is_err());
        assert!(build_grid(&[11.0], &[10.0]).is_err());
        assert!(build_grid(&[1.0], &[10.0, 20.0]).is_err());
    }

    #[test]
    fn build_grid_handles_inexact_steps() {
        // 0.1 * 3 != 0.3 exactly; the cap tolerance keeps the last point.
        let g = build_grid(&[0.1], &[0.3]).unwrap();
        assert_eq!(g.len(), 4);
        assert!((g[3][0] - 0.3).abs() < 1e-12);
    }

    fn sim1_panel(n: usize, seed: u64) -> (Panel, Regime) {
        let spec = DgpSpec::sim1();
        let panel = generate(&spec, n, seed).unwrap();
        let regime = spec.regime(&[350.0, 450.0]).unwrap();
        (panel, regime)
    }

    #[test]
    fn degenerate_grid_selects_strict_window_and_matches_ipw() {
        let (panel, regime) = sim1_panel(250, 41);
        let cfg = BawConfig::new(vec![vec![0.0], vec![0.0]], 16).unwrap();
        let res = select_window(&panel, &regime, &cfg, 7).unwrap();
        assert_eq!(res.delta_opt, vec![0.0, 0.0]);
        assert_eq!(res.candidates.len(), 1);
        // Strict window is plain IPW, bit for bit.
        let props = fit_propensities(&panel, &NuisanceOptions::default().propensity).unwrap();
        let ipw = estimate(
            &panel,
            &ipw_weights(&panel, &regime, &props).unwrap(),
            None,
            false,
            true,
        )
        .unwrap();
        assert_eq!(res.estimate.value, ipw.value);
        assert_eq!(res.reference_value, ipw.value);
    }

    #[test]
    fn replicate_values_reproduce_manual_resample_estimates() {
        let (panel, regime) = sim1_panel(200, 42);
        let cfg = BawConfig::new(vec![vec![0.0, 8.0], vec![0.0, 12.0]], 6).unwrap();
        let seed = 99;
        let res = select_window(&panel, &regime, &cfg, seed).unwrap();
        assert_eq!(res.replicate_values.len(), 4);

        // Rebuild replicate 3 by hand: the strict candidate must equal plain
        // normalized IPW on the same resample with subsampled propensities.
        let props = fit_propensities(&panel, &NuisanceOptions::default().propensity).unwrap();
        let mut rng = substream(seed, &[tags::BOOTSTRAP, 3]);
        let idx: Vec<usize> = (0..panel.n()).map(|_| rng.random_range(0..panel.n())).collect();
        let resample = panel.subsample(&idx);
        let manual = estimate(
            &resample,
            &ipw_weights(&resample, &regime, &props.subsample(&idx)).unwrap(),
            None,
            false,
            true,
        )
        .unwrap();
        assert_eq!(res.replicate_values[0][3], Some(manual.value));
    }

    #[test]
    fn pure_variance_loss_never_beats_strict_window() {
        let (panel, regime) = sim1_panel(300, 43);
        let mut cfg = BawConfig::new(
            vec![vec![0.0, 5.0, 10.0], vec![0.0, 10.0, 20.0]],
            60,
        )
        .unwrap();
        cfg.lambda_bias = 0.0;
        let res = select_window(&panel, &regime, &cfg, 11).unwrap();
        let strict = &res.candidates[0];
        assert!(!strict.disqualified);
        let winner = &res.candidates[res.selected];
        assert!(
            winner.variance.unwrap() <= strict.variance.unwrap(),
            "lambda = 0 search must weakly dominate the strict window"
        );
    }

    #[test]
    fn search_is_deterministic() {
        let (panel, regime) = sim1_panel(150, 44);
        let cfg = BawConfig::new(vec![vec![0.0, 6.0], vec![0.0, 9.0]], 10).unwrap();
        let a = select_window(&panel, &regime, &cfg, 5).unwrap();
        let b = select_window(&panel, &regime, &cfg, 5).unwrap();
        assert_eq!(a.delta_opt, b.delta_opt);
        assert_eq!(a.estimate.value, b.estimate.value);
        assert_eq!(a.replicate_values, b.replicate_values);
        let c = select_window(&panel, &regime, &cfg, 6).unwrap();
        assert_ne!(a.replicate_values, c.replicate_values, "seed must matter");
    }

    #[test]
    fn augmented_statistic_path_runs() {
        let (panel, regime) = sim1_panel(220, 45);
        let mut cfg = BawConfig::new(vec![vec![0.0, 8.0], vec![0.0, 10.0]], 8).unwrap();
        cfg.statistic = SelectionStatistic::Augmented;
        let res = select_window(&panel, &regime, &cfg, 13).unwrap();
        assert_eq!(res.estimate.id.label(), "nABAW");
        assert!(res.estimate.value.is_finite());
        // Reference is the strict augmented statistic, not plain IPW.
        let props = fit_propensities(&panel, &NuisanceOptions::default().propensity).unwrap();
        let opts = NuisanceOptions::default();
        let q = QFitter::new(&panel, &opts.outcome)
            .unwrap()
            .fit(&panel, &regime)
            .unwrap()
            .q;
        let strict = estimate(
            &panel,
            &ipw_weights(&panel, &regime, &props).unwrap(),
            Some(&q),
            true,
            true,
        )
        .unwrap();
        assert_eq!(res.reference_value, strict.value);
    }

    #[test]
    fn refit_nuisance_changes_the_bootstrap_but_not_the_reference() {
        let (panel, regime) = sim1_panel(180, 46);
        let mut cfg = BawConfig::new(vec![vec![0.0, 8.0], vec![0.0, 10.0]], 6).unwrap();
        let cheap = select_window(&panel, &regime, &cfg, 3).unwrap();
        cfg.refit_nuisance = true;
        let honest = select_window(&panel, &regime, &cfg, 3).unwrap();
        assert_eq!(cheap.reference_value, honest.reference_value);
        assert_ne!(
            cheap.replicate_values, honest.replicate_values,
            "refitting propensities must move the replicate statistics"
        );
    }

    #[test]
    fn choose_breaks_ties_lexicographically_and_rejects_empty() {
        let mk = |deltas: Vec<f64>, loss: f64, disq: bool| WindowCandidate {
            deltas,
            mean: Some(0.0),
            variance: Some(loss),
            bias: Some(0.0),
            loss: if disq { None } else { Some(loss) },
            excluded: 0,
            disqualified: disq,
        };
        let cands = vec![
            mk(vec![5.0, 0.0], 2.0, false),
            mk(vec![0.0, 5.0], 2.0, false),
            mk(vec![0.0, 0.0], 9.0, false),
        ];
        assert_eq!(choose(&cands).unwrap(), 1);
        let all_out = vec![mk(vec![0.0], 1.0, true), mk(vec![2.0], 1.0, true)];
        let err = choose(&all_out).unwrap_err();
        assert_eq!(err.reason_code(), "selection");
    }
}
