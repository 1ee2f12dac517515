//! Reproducible simulation studies: replicate panels over a threshold grid,
//! aggregate operating characteristics per estimator and cell, and write
//! tables plus a manifest that re-runs the whole study byte for byte.
//!
//! Conventions. Per (estimator, cell): `mean` averages the replicate
//! estimates; `bias = mean - truth`; the reported `variance` divides by
//! `kept - 1`; `rmse` divides the squared errors by `kept`, so
//! `bias^2 + variance * (kept - 1) / kept = rmse^2` exactly. Truth is a
//! per-cell Monte Carlo evaluation of the regime on fresh draws. Percent
//! variance reduction counts cells where an estimator's empirical variance
//! is strictly below the inverse-probability estimator with the same
//! normalization and augmentation flags.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::estimators::{EstimatorId, ValueEstimate};
use crate::glm::NuisanceOptions;
use crate::model::{GawConfig, Regime, WeightKind};
use crate::rng::{derive_seed, tags};
use crate::simgen::{generate, oracle_value, DgpSpec};
use crate::surface::{
    cartesian_grid, evaluate_surface, locate_optimum, regime_metrics, SurfaceConfig,
};
use crate::weighting::percentile;

/// How the relaxation budget constant `c` is chosen per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GawTuning {
    /// Use the configured `c` as-is.
    Fixed,
    /// Retune per replicate: `c = m / range`, where `range` is the spread of
    /// that replicate's normalized inverse-probability value surface.
    SurfaceRange { m: f64 },
}

/// Full description of one simulation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub spec: DgpSpec,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    /// Candidate lists per threshold, stage-major clause-minor.
    pub axes: Vec<Vec<f64>>,
    pub estimators: Vec<EstimatorId>,
    pub gaw: GawConfig,
    pub tuning: GawTuning,
    /// Symmetric tolerance half-widths, required for windowed estimators.
    pub baw_half_widths: Option<Vec<f64>>,
    pub seed: u64,
    /// Monte Carlo draws per cell for the truth surface; 0 skips truth,
    /// bias, and rmse.
    pub truth_mc: usize,
    /// Fresh individuals per replicate for rule metrics; 0 skips them.
    pub external_n: usize,
    /// Overrides the scenario's built-in optimal rule when scoring.
    pub true_thresholds: Option<Vec<f64>>,
    /// Retain the raw per-replicate estimates and adherence bias bounds.
    pub keep_replicate_values: bool,
    #[serde(skip, default)]
    pub nuisance: NuisanceOptions,
}

impl StudyConfig {
    pub fn new(spec: DgpSpec, axes: Vec<Vec<f64>>, seed: u64) -> Self {
        StudyConfig {
            spec,
            sample_sizes: vec![1000],
            replications: 100,
            axes,
            estimators: EstimatorId::all().into_iter().filter(|e| e.normalized).collect(),
            gaw: GawConfig::new(0.18, 0.5).expect("default gaw config"),
            tuning: GawTuning::Fixed,
            baw_half_widths: None,
            seed,
            truth_mc: 200_000,
            external_n: 0,
            true_thresholds: None,
            keep_replicate_values: false,
            nuisance: NuisanceOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 10) {
            return Err(EngineError::Config("sample sizes must all be at least 10".into()));
        }
        if self.replications < 2 {
            return Err(EngineError::Config(
                "a study needs at least 2 replications to report variances".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(EngineError::Config("no estimators requested".into()));
        }
        if self.axes.len() != self.spec.n_thresholds() {
            return Err(EngineError::Config(format!(
                "{} grid axes for a scenario with {} thresholds",
                self.axes.len(),
                self.spec.n_thresholds()
            )));
        }
        if self.axes.iter().any(Vec::is_empty) {
            return Err(EngineError::Config("every grid axis needs at least one value".into()));
        }
        if let GawTuning::SurfaceRange { m } = self.tuning {
            if !(m > 0.0) || !m.is_finite() {
                return Err(EngineError::Config(format!(
                    "surface-range tuning needs a positive bias target, got {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Replicate-aggregated behavior of one estimator in one grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub thresholds: Vec<f64>,
    pub truth: Option<f64>,
    /// Replicates contributing an estimate here.
    pub kept: usize,
    /// Replicates where the estimate was undefined (nobody adhered).
    pub missing: usize,
    pub mean: Option<f64>,
    pub bias: Option<f64>,
    /// Empirical variance across replicates, divisor `kept - 1`.
    pub variance: Option<f64>,
    pub rmse: Option<f64>,
    /// Mean of the per-replicate analytical variance estimates.
    pub mean_analytical_variance: Option<f64>,
    pub mean_ess: Option<f64>,
    pub mean_weight_spread: Option<f64>,
    /// Mean adherence-relaxation bias bound (budgeted estimators only).
    pub mean_bias_bound: Option<f64>,
}

/// Surface-level aggregates for one estimator at one sample size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub id: EstimatorId,
    pub cells: Vec<CellSummary>,
    /// Share of cells whose empirical variance is strictly below the
    /// same-flags inverse-probability estimator; `None` for that baseline
    /// itself or when it was not requested.
    pub pct_cells_var_below_ipw: Option<f64>,
    /// Surface-average empirical variance divided by the baseline's, over
    /// cells where both are defined.
    pub var_ratio_vs_ipw: Option<f64>,
    pub surface_avg_variance: Option<f64>,
    pub surface_avg_bias: Option<f64>,
    pub surface_avg_abs_bias: Option<f64>,
    pub surface_avg_ess: Option<f64>,
    /// Mean analytical variance over cells divided by mean empirical
    /// variance over cells.
    pub analytical_over_mc: Option<f64>,
    /// Selected thresholds per kept replicate, replicate order.
    pub selections: Vec<Vec<f64>>,
    pub median_thresholds: Vec<f64>,
    pub mean_pot: Option<f64>,
    pub mean_external_value: Option<f64>,
}

/// One sample size's worth of study output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRun {
    pub n: usize,
    /// Grid cells in odometer order, matching every summary's cell order.
    pub thresholds: Vec<Vec<f64>>,
    pub truth: Option<Vec<f64>>,
    pub estimators: Vec<EstimatorSummary>,
    pub replicates_kept: usize,
    pub replicates_failed: usize,
    pub failure_note: Option<String>,
    /// Per kept replicate when surface-range tuning is active.
    pub tuned_c: Vec<f64>,
    pub gamma_cap_events: usize,
    /// `[estimator][cell][replicate]`, present when requested.
    pub replicate_values: Option<Vec<Vec<Vec<Option<f64>>>>>,
    /// Same layout, the per-replicate adherence bias bounds.
    pub replicate_bias_bounds: Option<Vec<Vec<Vec<Option<f64>>>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub runs: Vec<StudyRun>,
}

struct ReplicateOutcome {
    /// `[estimator][cell]` value estimates; `None` marks a missing cell.
    estimates: Vec<Vec<Option<ValueEstimate>>>,
    /// Argmax thresholds per estimator, `None` if the surface was empty.
    optima: Vec<Option<Vec<f64>>>,
    pot: Vec<Option<f64>>,
    external_value: Vec<Option<f64>>,
    tuned_c: Option<f64>,
    gamma_cap_events: usize,
}

fn mean_of(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Replicate estimates for one cell folded into a [`CellSummary`].
fn summarize_cell(
    thresholds: &[f64],
    values: &[Option<f64>],
    analytical: &[Option<f64>],
    esses: &[Option<f64>],
    spreads: &[Option<f64>],
    bounds: &[Option<f64>],
    truth: Option<f64>,
) -> CellSummary {
    let kept: Vec<f64> = values.iter().flatten().copied().collect();
    let missing = values.len() - kept.len();
    let mean = mean_of(&kept);
    let variance = match (kept.len(), mean) {
        (k, Some(m)) if k >= 2 => {
            Some(kept.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1) as f64)
        }
        _ => None,
    };
    let bias = match (mean, truth) {
        (Some(m), Some(t)) => Some(m - t),
        _ => None,
    };
    let rmse = match truth {
        Some(t) if !kept.is_empty() => Some(
            (kept.iter().map(|v| (v - t).powi(2)).sum::<f64>() / kept.len() as f64).sqrt(),
        ),
        _ => None,
    };
    let flat = |xs: &[Option<f64>]| mean_of(&xs.iter().flatten().copied().collect::<Vec<_>>());
    CellSummary {
        thresholds: thresholds.to_vec(),
        truth,
        kept: kept.len(),
        missing,
        mean,
        bias,
        variance,
        rmse,
        mean_analytical_variance: flat(analytical),
        mean_ess: flat(esses),
        mean_weight_spread: flat(spreads),
        mean_bias_bound: flat(bounds),
    }
}

fn run_replicate(
    cfg: &StudyConfig,
    n: usize,
    rep: usize,
    base: &Regime,
    truth_regime: &Regime,
    cells: &[Vec<f64>],
) -> Result<ReplicateOutcome> {
    let seed_r = derive_seed(cfg.seed, &[tags::REPLICATE, n as u64, rep as u64]);
    let panel = generate(&cfg.spec, n, seed_r)?;
    let n_est = cfg.estimators.len();

    // Estimates per requested estimator per cell, possibly assembled from
    // two passes when the relaxation budget is tuned to this replicate's
    // inverse-probability surface.
    let mut estimates: Vec<Vec<Option<ValueEstimate>>> = vec![Vec::new(); n_est];
    let mut tuned_c = None;
    match cfg.tuning {
        GawTuning::Fixed => {
            let sc = SurfaceConfig {
                estimators: cfg.estimators.clone(),
                gaw: cfg.gaw,
                baw_half_widths: cfg.baw_half_widths.clone(),
                nuisance: cfg.nuisance.clone(),
            };
            let surface = evaluate_surface(&panel, base, &cfg.axes, &sc)?;
            for cell in &surface.cells {
                for (j, est) in cell.estimates.iter().enumerate() {
                    estimates[j].push(est.clone());
                }
            }
        }
        GawTuning::SurfaceRange { m } => {
            let nipw = EstimatorId::new(WeightKind::Ipw, false, true);
            let mut pass1: Vec<EstimatorId> =
                cfg.estimators.iter().copied().filter(|e| e.kind != WeightKind::Gaw).collect();
            if !pass1.contains(&nipw) {
                pass1.push(nipw);
            }
            let sc1 = SurfaceConfig {
                estimators: pass1.clone(),
                gaw: cfg.gaw,
                baw_half_widths: cfg.baw_half_widths.clone(),
                nuisance: cfg.nuisance.clone(),
            };
            let surface1 = evaluate_surface(&panel, base, &cfg.axes, &sc1)?;
            let anchor = pass1.iter().position(|e| *e == nipw).unwrap();
            let heights: Vec<f64> = surface1
                .cells
                .iter()
                .filter_map(|c| c.estimates[anchor].as_ref().map(|e| e.value))
                .collect();
            let (lo, hi) = heights
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            if !(hi > lo) {
                return Err(EngineError::Selection(
                    "flat inverse-probability surface; cannot tune the relaxation budget"
                        .into(),
                ));
            }
            let c = m / (hi - lo);
            tuned_c = Some(c);
            let gaw = GawConfig { c, ..cfg.gaw };
            let pass2: Vec<EstimatorId> =
                cfg.estimators.iter().copied().filter(|e| e.kind == WeightKind::Gaw).collect();
            let surface2 = if pass2.is_empty() {
                None
            } else {
                let sc2 = SurfaceConfig {
                    estimators: pass2.clone(),
                    gaw,
                    baw_half_widths: cfg.baw_half_widths.clone(),
                    nuisance: cfg.nuisance.clone(),
                };
                Some(evaluate_surface(&panel, base, &cfg.axes, &sc2)?)
            };
            for (j, id) in cfg.estimators.iter().enumerate() {
                if id.kind == WeightKind::Gaw {
                    let surface2 = surface2.as_ref().expect("gaw pass exists");
                    let col = pass2.iter().position(|e| e == id).unwrap();
                    for cell in &surface2.cells {
                        estimates[j].push(cell.estimates[col].clone());
                    }
                } else {
                    let col = pass1.iter().position(|e| e == id).unwrap();
                    for cell in &surface1.cells {
                        estimates[j].push(cell.estimates[col].clone());
                    }
                }
            }
        }
    }

    let gamma_cap_events = estimates
        .iter()
        .flatten()
        .flatten()
        .map(|e| e.gamma_cap_events)
        .sum();

    let mut optima = Vec::with_capacity(n_est);
    let mut pot = Vec::with_capacity(n_est);
    let mut external_value = Vec::with_capacity(n_est);
    for column in &estimates {
        let values: Vec<Option<f64>> =
            column.iter().map(|e| e.as_ref().map(|e| e.value)).collect();
        let opt = locate_optimum(&values, cells).map(|(idx, _)| cells[idx].clone());
        match (&opt, cfg.external_n) {
            (Some(thresholds), n_ext) if n_ext > 0 => {
                let rule = cfg.spec.regime(thresholds)?;
                let m = regime_metrics(&rule, truth_regime, &cfg.spec, n_ext, seed_r)?;
                pot.push(Some(m.pot));
                external_value.push(Some(m.external_value));
            }
            _ => {
                pot.push(None);
                external_value.push(None);
            }
        }
        optima.push(opt);
    }

    Ok(ReplicateOutcome { estimates, optima, pot, external_value, tuned_c, gamma_cap_events })
}

fn summarize_run(
    cfg: &StudyConfig,
    n: usize,
    cells: &[Vec<f64>],
    truth: Option<&[f64]>,
    outcomes: Vec<Result<ReplicateOutcome>>,
) -> Result<StudyRun> {
    let mut kept = Vec::new();
    let mut failed = 0usize;
    let mut failure_note = None;
    for o in outcomes {
        match o {
            Ok(o) => kept.push(o),
            Err(e) => {
                failed += 1;
                failure_note.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if kept.is_empty() {
        return Err(EngineError::Selection(format!(
            "every replicate failed at n = {n}: {}",
            failure_note.unwrap_or_default()
        )));
    }
    let n_est = cfg.estimators.len();
    let n_cells = cells.len();
    let r = kept.len();

    // Per estimator, per cell, per replicate pulls of each diagnostic.
    let pull = |f: &dyn Fn(&ValueEstimate) -> Option<f64>| -> Vec<Vec<Vec<Option<f64>>>> {
        (0..n_est)
            .map(|j| {
                (0..n_cells)
                    .map(|c| {
                        kept.iter().map(|o| o.estimates[j][c].as_ref().and_then(f)).collect()
                    })
                    .collect()
            })
            .collect()
    };
    let values = pull(&|e| Some(e.value));
    let analytical = pull(&|e| e.variance);
    let esses = pull(&|e| Some(e.ess));
    let spreads = pull(&|e| Some(e.weight_spread));
    let bounds = pull(&|e| e.bias_bound);

    let mut summaries = Vec::with_capacity(n_est);
    for (j, id) in cfg.estimators.iter().enumerate() {
        let cell_summaries: Vec<CellSummary> = (0..n_cells)
            .map(|c| {
                summarize_cell(
                    &cells[c],
                    &values[j][c],
                    &analytical[j][c],
                    &esses[j][c],
                    &spreads[j][c],
                    &bounds[j][c],
                    truth.map(|t| t[c]),
                )
            })
            .collect();

        let defined: Vec<&CellSummary> =
            cell_summaries.iter().filter(|c| c.variance.is_some()).collect();
        let surface_avg_variance =
            mean_of(&defined.iter().filter_map(|c| c.variance).collect::<Vec<_>>());
        let surface_avg_bias =
            mean_of(&cell_summaries.iter().filter_map(|c| c.bias).collect::<Vec<_>>());
        let surface_avg_abs_bias = mean_of(
            &cell_summaries.iter().filter_map(|c| c.bias.map(f64::abs)).collect::<Vec<_>>(),
        );
        let surface_avg_ess =
            mean_of(&cell_summaries.iter().filter_map(|c| c.mean_ess).collect::<Vec<_>>());
        let analytical_over_mc = {
            let pairs: Vec<(f64, f64)> = cell_summaries
                .iter()
                .filter_map(|c| Some((c.mean_analytical_variance?, c.variance?)))
                .collect();
            if pairs.is_empty() {
                None
            } else {
                let num = pairs.iter().map(|p| p.0).sum::<f64>();
                let den = pairs.iter().map(|p| p.1).sum::<f64>();
                (den > 0.0).then(|| num / den)
            }
        };

        // Baseline with the same flags but inverse-probability weights.
        let baseline = EstimatorId::new(WeightKind::Ipw, id.augmented, id.normalized);
        let baseline_idx = (id.kind != WeightKind::Ipw)
            .then(|| cfg.estimators.iter().position(|e| *e == baseline))
            .flatten();
        let (pct_cells_var_below_ipw, var_ratio_vs_ipw) = match baseline_idx {
            Some(b) => {
                let mut below = 0usize;
                let mut total = 0usize;
                let mut num = 0.0;
                let mut den = 0.0;
                for c in 0..n_cells {
                    let own = summarize_cell(
                        &cells[c],
                        &values[j][c],
                        &[],
                        &[],
                        &[],
                        &[],
                        None,
                    )
                    .variance;
                    let base = summarize_cell(
                        &cells[c],
                        &values[b][c],
                        &[],
                        &[],
                        &[],
                        &[],
                        None,
                    )
                    .variance;
                    if let (Some(v), Some(w)) = (own, base) {
                        total += 1;
                        num += v;
                        den += w;
                        if v < w {
                            below += 1;
                        }
                    }
                }
                (
                    (total > 0).then(|| below as f64 / total as f64),
                    (total > 0 && den > 0.0).then(|| num / den),
                )
            }
            None => (None, None),
        };

        let selections: Vec<Vec<f64>> =
            kept.iter().filter_map(|o| o.optima[j].clone()).collect();
        let median_thresholds = if selections.is_empty() {
            Vec::new()
        } else {
            (0..cells[0].len())
                .map(|k| {
                    let coord: Vec<f64> = selections.iter().map(|s| s[k]).collect();
                    percentile(&coord, 50.0)
                })
                .collect::<Result<_>>()?
        };
        let mean_pot =
            mean_of(&kept.iter().filter_map(|o| o.pot[j]).collect::<Vec<_>>());
        let mean_external_value =
            mean_of(&kept.iter().filter_map(|o| o.external_value[j]).collect::<Vec<_>>());

        summaries.push(EstimatorSummary {
            id: *id,
            cells: cell_summaries,
            pct_cells_var_below_ipw,
            var_ratio_vs_ipw,
            surface_avg_variance,
            surface_avg_bias,
            surface_avg_abs_bias,
            surface_avg_ess,
            analytical_over_mc,
            selections,
            median_thresholds,
            mean_pot,
            mean_external_value,
        })
    }

    let gamma_cap_events = kept.iter().map(|o| o.gamma_cap_events).sum();
    let tuned_c = kept.iter().filter_map(|o| o.tuned_c).collect();
    let (replicate_values, replicate_bias_bounds) = if cfg.keep_replicate_values {
        (Some(values), Some(bounds))
    } else {
        (None, None)
    };

    Ok(StudyRun {
        n,
        thresholds: cells.to_vec(),
        truth: truth.map(<[f64]>::to_vec),
        estimators: summaries,
        replicates_kept: r,
        replicates_failed: failed,
        failure_note,
        tuned_c,
        gamma_cap_events,
        replicate_values,
        replicate_bias_bounds,
    })
}

/// Run the whole study: truth surface once, then every sample size with
/// `replications` independent panels each.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let zeros = vec![0.0; cfg.spec.n_thresholds()];
    let base = cfg.spec.regime(&zeros)?;
    let truth_thresholds =
        cfg.true_thresholds.clone().unwrap_or_else(|| cfg.spec.true_thresholds());
    let truth_regime = cfg.spec.regime(&truth_thresholds)?;
    let cells = cartesian_grid(&cfg.axes);

    let truth: Option<Vec<f64>> = if cfg.truth_mc > 0 {
        Some(
            cells
                .par_iter()
                .enumerate()
                .map(|(c, thresholds)| -> Result<f64> {
                    let regime = cfg.spec.regime(thresholds)?;
                    let seed_c = derive_seed(cfg.seed, &[tags::CELL, c as u64]);
                    Ok(oracle_value(&cfg.spec, &regime, cfg.truth_mc, seed_c)?.value)
                })
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let mut runs = Vec::with_capacity(cfg.sample_sizes.len());
    for &n in &cfg.sample_sizes {
        let outcomes: Vec<Result<ReplicateOutcome>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| run_replicate(cfg, n, rep, &base, &truth_regime, &cells))
            .collect();
        runs.push(summarize_run(cfg, n, &cells, truth.as_deref(), outcomes)?);
    }
    Ok(StudyResult { config: cfg.clone(), runs })
}

// ---------------------------------------------------------------------------
// Tables and the manifest
// ---------------------------------------------------------------------------

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_cells_csv(result: &StudyResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = result.config.axes.len();
    let mut header = vec!["n".to_string(), "estimator".to_string()];
    header.extend((1..=k).map(|j| format!("psi{j}")));
    header.extend(
        [
            "truth",
            "kept",
            "missing",
            "mean",
            "bias",
            "variance",
            "rmse",
            "mean_analytical_variance",
            "mean_ess",
            "mean_weight_spread",
            "mean_bias_bound",
        ]
        .map(str::to_string),
    );
    w.write_record(&header)?;
    for run in &result.runs {
        for est in &run.estimators {
            for cell in &est.cells {
                let mut rec = vec![run.n.to_string(), est.id.label()];
                rec.extend(cell.thresholds.iter().map(f64::to_string));
                rec.push(opt_str(cell.truth));
                rec.push(cell.kept.to_string());
                rec.push(cell.missing.to_string());
                rec.push(opt_str(cell.mean));
                rec.push(opt_str(cell.bias));
                rec.push(opt_str(cell.variance));
                rec.push(opt_str(cell.rmse));
                rec.push(opt_str(cell.mean_analytical_variance));
                rec.push(opt_str(cell.mean_ess));
                rec.push(opt_str(cell.mean_weight_spread));
                rec.push(opt_str(cell.mean_bias_bound));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_estimators_csv(result: &StudyResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = result.config.axes.len();
    let mut header = vec!["n".to_string(), "estimator".to_string()];
    header.extend(
        [
            "surface_avg_variance",
            "surface_avg_bias",
            "surface_avg_abs_bias",
            "surface_avg_ess",
            "pct_cells_var_below_ipw",
            "var_ratio_vs_ipw",
            "analytical_over_mc",
        ]
        .map(str::to_string),
    );
    header.extend((1..=k).map(|j| format!("psi{j}_median")));
    header.extend(
        ["mean_pot", "mean_external_value", "replicates_kept", "replicates_failed"]
            .map(str::to_string),
    );
    w.write_record(&header)?;
    for run in &result.runs {
        for est in &run.estimators {
            let mut rec = vec![run.n.to_string(), est.id.label()];
            rec.push(opt_str(est.surface_avg_variance));
            rec.push(opt_str(est.surface_avg_bias));
            rec.push(opt_str(est.surface_avg_abs_bias));
            rec.push(opt_str(est.surface_avg_ess));
            rec.push(opt_str(est.pct_cells_var_below_ipw));
            rec.push(opt_str(est.var_ratio_vs_ipw));
            rec.push(opt_str(est.analytical_over_mc));
            for j in 0..k {
                rec.push(
                    est.median_thresholds.get(j).map(f64::to_string).unwrap_or_default(),
                );
            }
            rec.push(opt_str(est.mean_pot));
            rec.push(opt_str(est.mean_external_value));
            rec.push(run.replicates_kept.to_string());
            rec.push(run.replicates_failed.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_selections_csv(result: &StudyResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = result.config.axes.len();
    let mut header = vec!["n".to_string(), "estimator".to_string(), "replicate".to_string()];
    header.extend((1..=k).map(|j| format!("psi{j}")));
    w.write_record(&header)?;
    for run in &result.runs {
        for est in &run.estimators {
            for (rep, sel) in est.selections.iter().enumerate() {
                let mut rec = vec![run.n.to_string(), est.id.label(), rep.to_string()];
                rec.extend(sel.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    config: StudyConfig,
}

/// Write the study tables and the re-run manifest; returns the paths.
pub fn write_tables(result: &StudyResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let cells = dir.join("study_cells.csv");
    let estimators = dir.join("study_estimators.csv");
    let selections = dir.join("study_selections.csv");
    let manifest = dir.join("study_manifest.json");
    write_cells_csv(result, &cells)?;
    write_estimators_csv(result, &estimators)?;
    write_selections_csv(result, &selections)?;
    let doc = Manifest { schema_version: crate::SCHEMA_VERSION, config: result.config.clone() };
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    std::fs::write(&manifest, json)?;
    Ok(vec![cells, estimators, selections, manifest])
}

/// Re-run a study exactly as recorded by [`write_tables`].
pub fn run_study_from_manifest(path: &Path) -> Result<StudyResult> {
    let raw = std::fs::read_to_string(path)?;
    let doc: Manifest = serde_json::from_str(&raw)?;
    if doc.schema_version != crate::SCHEMA_VERSION {
        return Err(EngineError::Config(format!(
            "manifest schema {} unsupported (expected {})",
            doc.schema_version,
            crate::SCHEMA_VERSION
        )));
    }
    run_study(&doc.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> StudyConfig {
        let spec = DgpSpec::sim1();
        let mut cfg = StudyConfig::new(
            spec,
            vec![vec![325.0, 375.0], vec![425.0, 475.0]],
            515,
        );
        cfg.sample_sizes = vec![150];
        cfg.replications = 4;
        cfg.estimators = vec![
            EstimatorId::parse("nIPW").unwrap(),
            EstimatorId::parse("nGAW").unwrap(),
        ];
        cfg.truth_mc = 4_000;
        cfg.external_n = 2_000;
        cfg.keep_replicate_values = true;
        cfg
    }

    #[test]
    fn summarize_cell_matches_the_worked_example() {
        // Estimates {1, 3} against truth 2: zero bias, reported variance 2
        // (divisor kept - 1), rmse 1 (divisor kept).
        let s = summarize_cell(
            &[0.0],
            &[Some(1.0), Some(3.0), None],
            &[None, None, None],
            &[Some(2.0), Some(4.0), None],
            &[None; 3],
            &[None; 3],
            Some(2.0),
        );
        assert_eq!(s.kept, 2);
        assert_eq!(s.missing, 1);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.bias, Some(0.0));
        assert_eq!(s.variance, Some(2.0));
        assert_eq!(s.rmse, Some(1.0));
        assert_eq!(s.mean_ess, Some(3.0));
        assert_eq!(s.mean_analytical_variance, None);
        // bias^2 + variance * (kept-1)/kept == rmse^2 exactly.
        let lhs = s.bias.unwrap().powi(2) + s.variance.unwrap() * 0.5;
        assert_eq!(lhs, s.rmse.unwrap().powi(2));
    }

    #[test]
    fn tiny_study_has_consistent_shapes_and_aggregates() {
        let cfg = tiny_config();
        let result = run_study(&cfg).unwrap();
        assert_eq!(result.runs.len(), 1);
        let run = &result.runs[0];
        assert_eq!(run.thresholds.len(), 4);
        assert_eq!(run.estimators.len(), 2);
        assert_eq!(run.replicates_kept, 4);
        assert_eq!(run.replicates_failed, 0);
        let truth = run.truth.as_ref().unwrap();
        assert_eq!(truth.len(), 4);
        assert!(truth.iter().all(|t| (900.0..1400.0).contains(t)), "{truth:?}");

        // Cell aggregates must reproduce from the retained raw values.
        let raw = run.replicate_values.as_ref().unwrap();
        for (j, est) in run.estimators.iter().enumerate() {
            assert_eq!(est.cells.len(), 4);
            for (c, cell) in est.cells.iter().enumerate() {
                let vals: Vec<f64> = raw[j][c].iter().flatten().copied().collect();
                assert_eq!(cell.kept, vals.len());
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert_eq!(cell.mean, Some(mean));
                assert_eq!(cell.bias, Some(mean - truth[c]));
            }
            assert_eq!(est.selections.len(), 4);
            assert_eq!(est.median_thresholds.len(), 2);
            let pot = est.mean_pot.unwrap();
            assert!((0.0..=1.0).contains(&pot));
            assert!(est.mean_external_value.unwrap() > 900.0);
        }
        // The budgeted estimator carries bias bounds; the plain one doesn't.
        assert!(run.estimators[1].cells[0].mean_bias_bound.is_some());
        assert!(run.estimators[0].cells[0].mean_bias_bound.is_none());
        assert!(run.estimators[1].pct_cells_var_below_ipw.is_some());
        assert!(run.estimators[0].pct_cells_var_below_ipw.is_none());
    }

    #[test]
    fn surface_range_tuning_records_a_reproducible_constant() {
        let mut cfg = tiny_config();
        cfg.external_n = 0;
        cfg.truth_mc = 0;
        cfg.tuning = GawTuning::SurfaceRange { m: 15.0 };
        let result = run_study(&cfg).unwrap();
        let run = &result.runs[0];
        assert_eq!(run.tuned_c.len(), 4);

        // Recompute replicate 0's constant by hand.
        let seed_r = derive_seed(cfg.seed, &[tags::REPLICATE, 150, 0]);
        let panel = generate(&cfg.spec, 150, seed_r).unwrap();
        let base = cfg.spec.regime(&[0.0, 0.0]).unwrap();
        let sc = SurfaceConfig::new(
            vec![EstimatorId::parse("nIPW").unwrap()],
            cfg.gaw,
        );
        let surface = evaluate_surface(&panel, &base, &cfg.axes, &sc).unwrap();
        let vals: Vec<f64> = surface
            .cells
            .iter()
            .map(|c| c.estimates[0].as_ref().unwrap().value)
            .collect();
        let range = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        assert_eq!(run.tuned_c[0], 15.0 / range);
    }

    #[test]
    fn study_reruns_byte_identically_from_its_manifest() {
        let mut cfg = tiny_config();
        cfg.truth_mc = 1_000;
        cfg.external_n = 500;
        let first = run_study(&cfg).unwrap();
        let dir1 = tempfile::tempdir().unwrap();
        let files1 = write_tables(&first, dir1.path()).unwrap();

        let manifest = dir1.path().join("study_manifest.json");
        let second = run_study_from_manifest(&manifest).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let files2 = write_tables(&second, dir2.path()).unwrap();

        for (a, b) in files1.iter().zip(&files2) {
            let bytes_a = std::fs::read(a).unwrap();
            let bytes_b = std::fs::read(b).unwrap();
            assert_eq!(bytes_a, bytes_b, "{} drifted between runs", a.display());
            assert!(!bytes_a.is_empty());
        }
    }

    #[test]
    fn config_validation_catches_shape_errors() {
        let mut cfg = tiny_config();
        cfg.replications = 1;
        assert!(run_study(&cfg).is_err());
        let mut cfg = tiny_config();
        cfg.axes = vec![vec![325.0]];
        assert!(run_study(&cfg).is_err());
        let mut cfg = tiny_config();
        cfg.tuning = GawTuning::SurfaceRange { m: 0.0 };
        assert!(run_study(&cfg).is_err());
    }
}
