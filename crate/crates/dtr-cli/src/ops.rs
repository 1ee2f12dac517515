//! The five subcommands, sharing panel loading, seed resolution, and the
//! JSON report conventions (`schema_version` on every stdout document).

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use rand::Rng;
use serde_json::json;

use dtr_engine::baw::select_window;
use dtr_engine::estimators::{estimate, EstimatorId};
use dtr_engine::glm::{fit_q_functions, fit_propensities, PropensityOptions, QOptions};
use dtr_engine::ingest::{
    ingest_csv, IngestReport, IngestSchema, MissingPolicy, StageColumns, write_panel_csv,
};
use dtr_engine::model::{
    Alphabet, BawConfig, GawConfig, Panel, Regime, SelectionStatistic, WeightKind, WindowSpec,
};
use dtr_engine::simgen::generate;
use dtr_engine::study::{run_study, run_study_from_manifest, write_tables, GawTuning, StudyConfig};
use dtr_engine::surface::{evaluate_surface, SurfaceConfig};
use dtr_engine::weighting::{baw_weights, gaw_weights, ipw_weights};
use dtr_engine::{EngineError, SCHEMA_VERSION};

use crate::config::Config;
use crate::parse;
use crate::{EstimateArgs, SelectWindowArgs, SimulateArgs, StudyArgs, SurfaceArgs};

/// Everything resolved from the global flags.
pub struct Ctx {
    pub config: Config,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl Ctx {
    /// Flag value if present, else the config entry, else `None`.
    fn setting<T: std::str::FromStr + Clone>(
        &self,
        flag: &Option<T>,
        key: &str,
    ) -> dtr_engine::Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v.clone())),
            None => self.config.get_parsed(key),
        }
    }

    /// Randomized commands take the seed from `--seed`, then `run.seed`,
    /// and otherwise generate one and announce it on stderr so the run can
    /// be reproduced.
    fn resolve_seed(&self) -> dtr_engine::Result<u64> {
        if let Some(seed) = self.seed {
            return Ok(seed);
        }
        if let Some(seed) = self.config.get_parsed::<u64>("run.seed")? {
            return Ok(seed);
        }
        let seed: u64 = rand::rng().random();
        eprintln!("seed = {seed} (generated; pass --seed {seed} to reproduce this run)");
        Ok(seed)
    }

    fn out_path(&self, flag: Option<PathBuf>, key: &str, default_name: &str) -> PathBuf {
        if let Some(p) = flag {
            return p;
        }
        if let Some(p) = self.config.get(key) {
            return PathBuf::from(p);
        }
        self.out_dir.join(default_name)
    }
}

fn need<T>(value: Option<T>, what: &str) -> dtr_engine::Result<T> {
    value.ok_or_else(|| EngineError::Config(format!("missing {what}")))
}

fn print_json(doc: &serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(doc)?);
    Ok(())
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Panel loading
// ---------------------------------------------------------------------------

/// Build a schema from `ingest.*` config keys:
/// `ingest.outcome`, optional `ingest.id`, `ingest.policy` (drop-row |
/// fail), `ingest.codes` (`raw:action` pairs), and per stage
/// `ingest.stage<t>.covariates` + `ingest.stage<t>.treatment`.
fn schema_from_config(cfg: &Config) -> dtr_engine::Result<IngestSchema> {
    let outcome = need(cfg.get("ingest.outcome"), "ingest.outcome")?.to_string();
    let mut stages = Vec::new();
    for t in 1.. {
        let covs = cfg.get(&format!("ingest.stage{t}.covariates"));
        let treat = cfg.get(&format!("ingest.stage{t}.treatment"));
        match (covs, treat) {
            (None, None) => break,
            (Some(c), Some(a)) => stages.push(StageColumns {
                covariates: c.split(',').map(|s| s.trim().to_string()).collect(),
                treatment: a.trim().to_string(),
            }),
            _ => {
                return Err(EngineError::Config(format!(
                    "ingest.stage{t} needs both covariates and treatment"
                )))
            }
        }
    }
    if stages.is_empty() {
        return Err(EngineError::Config("ingest.* mapping has no stages".into()));
    }
    let mut schema = IngestSchema::binary(stages, outcome);
    schema.id = cfg.get("ingest.id").map(str::to_string);
    if let Some(policy) = cfg.get("ingest.policy") {
        schema.policy = match policy {
            "drop-row" => MissingPolicy::DropRow,
            "fail" => MissingPolicy::Fail,
            other => {
                return Err(EngineError::Config(format!(
                    "ingest.policy '{other}' (expected drop-row or fail)"
                )))
            }
        };
    }
    if let Some(codes) = cfg.get("ingest.codes") {
        let mut map = Vec::new();
        for pair in codes.split(',') {
            let (raw, action) = pair.split_once(':').ok_or_else(|| {
                EngineError::Config(format!("ingest.codes entry '{pair}' is not raw:action"))
            })?;
            let action: u8 = action.trim().parse().map_err(|_| {
                EngineError::Config(format!("ingest.codes entry '{pair}': bad action"))
            })?;
            map.push((raw.trim().to_string(), action));
        }
        schema.treatment_codes = map;
        schema.alphabet = Alphabet::binary();
    }
    Ok(schema)
}

/// Infer the default layout written by `simulate`: an optional `id`, each
/// stage's covariates followed by its `a<t>` treatment column, and `y`
/// last. Any other layout needs an `ingest.*` mapping.
fn infer_schema(path: &Path) -> dtr_engine::Result<IngestSchema> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();

    let mut stages: Vec<StageColumns> = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut saw_outcome = false;
    let mut saw_id = false;
    for name in headers.iter() {
        if name == "id" && stages.is_empty() && pending.is_empty() {
            saw_id = true;
            continue;
        }
        if name == "y" {
            saw_outcome = true;
            continue;
        }
        let next_treatment = format!("a{}", stages.len() + 1);
        if name == next_treatment {
            stages.push(StageColumns {
                covariates: std::mem::take(&mut pending),
                treatment: next_treatment,
            });
        } else {
            pending.push(name.to_string());
        }
    }
    if stages.is_empty() || !saw_outcome || !pending.is_empty() {
        return Err(EngineError::Data(format!(
            "cannot infer the column layout of {} (expected id?, covariates, a1, …, y); \
             supply an ingest.* mapping in the config file",
            path.display()
        )));
    }
    let mut schema = IngestSchema::binary(stages, "y");
    if saw_id {
        schema.id = Some("id".into());
    }
    Ok(schema)
}

fn load_panel(ctx: &Ctx, path: &Path) -> dtr_engine::Result<(Panel, IngestReport)> {
    let schema = if ctx.config.has_section("ingest") {
        schema_from_config(&ctx.config)?
    } else {
        infer_schema(path)?
    };
    ingest_csv(path, &schema)
}

fn panel_and_regime(
    ctx: &Ctx,
    panel_flag: &Option<PathBuf>,
    regime_flag: &Option<String>,
    section: &str,
) -> dtr_engine::Result<(Panel, IngestReport, Regime)> {
    let path = need(
        ctx.setting(panel_flag, &format!("{section}.panel"))?,
        "--panel (a CSV file)",
    )?;
    let (panel, report) = load_panel(ctx, &path)?;
    let rule = need(
        ctx.setting(regime_flag, &format!("{section}.regime"))?,
        "--regime (for example \"x1<=350 | x2<=450\")",
    )?;
    let regime = parse::regime(&rule, &panel)?;
    Ok((panel, report, regime))
}

fn gaw_config(ctx: &Ctx, c: Option<f64>, k: Option<f64>) -> dtr_engine::Result<GawConfig> {
    let c = ctx.setting(&c, "gaw.c")?.unwrap_or(0.18);
    let k = ctx.setting(&k, "gaw.k")?.unwrap_or(0.5);
    GawConfig::new(c, k)
}

fn half_widths(
    ctx: &Ctx,
    delta: &Option<String>,
    n_thresholds: usize,
) -> dtr_engine::Result<Option<Vec<f64>>> {
    let Some(text) = ctx.setting(delta, "baw.delta")? else { return Ok(None) };
    let widths = parse::list_f64(&text, "--delta")?;
    if widths.len() != n_thresholds {
        return Err(EngineError::Config(format!(
            "--delta lists {} half-widths for {} thresholds",
            widths.len(),
            n_thresholds
        )));
    }
    Ok(Some(widths))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(ctx: &Ctx, args: &SimulateArgs) -> anyhow::Result<()> {
    let name = need(ctx.setting(&args.scenario, "simulate.scenario")?, "--scenario")?;
    let mut spec = parse::scenario(&name)?;
    if let Some(text) = ctx.setting(&args.scales, "simulate.scales")? {
        spec.scales = Some(parse::list_f64(&text, "--scales")?);
    }
    if args.scales_are_variances
        || ctx.config.get_parsed::<bool>("simulate.scales_are_variances")?.unwrap_or(false)
    {
        spec.scale_is_sd = false;
    }
    let n = need(ctx.setting(&args.n, "simulate.n")?, "--n")?;
    let seed = ctx.resolve_seed()?;

    let panel = generate(&spec, n, seed)?;
    let out = ctx.out_path(args.out.clone(), "simulate.out", "panel.csv");
    ensure_parent(&out)?;
    let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    write_panel_csv(&panel, file)?;

    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "scenario": name.to_ascii_lowercase(),
        "n": n,
        "seed": seed,
        "csv": out,
    }))
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

fn weights_for(
    panel: &Panel,
    regime: &Regime,
    id: EstimatorId,
    gaw: &GawConfig,
    widths: &Option<Vec<f64>>,
) -> dtr_engine::Result<dtr_engine::model::WeightSeries> {
    let props = fit_propensities(panel, &PropensityOptions::default())?;
    match id.kind {
        WeightKind::Ipw => ipw_weights(panel, regime, &props),
        WeightKind::Gaw => gaw_weights(panel, regime, &props, gaw),
        WeightKind::Baw => {
            let widths = widths.as_ref().ok_or_else(|| {
                EngineError::Config("windowed estimators need --delta half-widths".into())
            })?;
            let window = WindowSpec::symmetric(regime, widths)?;
            baw_weights(panel, regime, &props, &window)
        }
    }
}

pub fn run_estimate(ctx: &Ctx, args: &EstimateArgs) -> anyhow::Result<()> {
    let (panel, report, regime) =
        panel_and_regime(ctx, &args.panel, &args.regime, "estimate")?;
    let label = ctx.setting(&args.estimator, "estimate.estimator")?.unwrap_or("nIPW".into());
    let id = EstimatorId::parse(&label)?;
    let gaw = gaw_config(ctx, args.c, args.k)?;
    let widths = half_widths(ctx, &args.delta, regime.n_thresholds())?;

    let weights = weights_for(&panel, &regime, id, &gaw, &widths)?;
    let q = if id.augmented {
        Some(fit_q_functions(&panel, &regime, &QOptions::default())?.q)
    } else {
        None
    };
    let est = estimate(&panel, &weights, q.as_deref(), id.augmented, id.normalized)?;

    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "estimator": id.label(),
        "estimate": est,
        "se": est.se(),
        "rows_in": report.rows_in,
        "rows_kept": report.rows_kept,
    }))
}

// ---------------------------------------------------------------------------
// surface
// ---------------------------------------------------------------------------

pub fn run_surface(ctx: &Ctx, args: &SurfaceArgs) -> anyhow::Result<()> {
    let (panel, report, regime) =
        panel_and_regime(ctx, &args.panel, &args.regime, "surface")?;
    let grid_text = need(ctx.setting(&args.grid, "surface.grid")?, "--grid")?;
    let axes = parse::threshold_grid(&grid_text)?;
    let labels =
        ctx.setting(&args.estimators, "surface.estimators")?.unwrap_or("nIPW,nGAW".into());
    let estimators = parse::estimators(&labels)?;

    let mut cfg = SurfaceConfig::new(estimators, gaw_config(ctx, args.c, args.k)?);
    cfg.baw_half_widths = half_widths(ctx, &args.delta, regime.n_thresholds())?;
    let surface = evaluate_surface(&panel, &regime, &axes, &cfg)?;

    let out = ctx.out_path(args.out.clone(), "surface.out", "surface.csv");
    ensure_parent(&out)?;
    let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    surface.write_csv(file)?;

    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "surface",
        "csv": out,
        "cells": surface.cells.len(),
        "estimators": surface.estimators.iter().map(EstimatorId::label).collect::<Vec<_>>(),
        "optima": surface.optima,
        "propensity_clamp_events": surface.propensity_clamp_events,
        "rows_in": report.rows_in,
        "rows_kept": report.rows_kept,
    }))
}

// ---------------------------------------------------------------------------
// select-window
// ---------------------------------------------------------------------------

fn write_candidates_csv(
    path: &Path,
    result: &dtr_engine::baw::WindowSearchResult,
    n_thresholds: usize,
) -> dtr_engine::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> =
        (1..=n_thresholds).map(|k| format!("delta{k}")).collect();
    header.extend(
        ["mean", "variance", "bias", "loss", "excluded", "disqualified", "selected"]
            .map(str::to_string),
    );
    w.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (idx, cand) in result.candidates.iter().enumerate() {
        let mut rec: Vec<String> = cand.deltas.iter().map(f64::to_string).collect();
        rec.push(fmt(cand.mean));
        rec.push(fmt(cand.variance));
        rec.push(fmt(cand.bias));
        rec.push(fmt(cand.loss));
        rec.push(cand.excluded.to_string());
        rec.push(cand.disqualified.to_string());
        rec.push((idx == result.selected).to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(EngineError::from)?;
    Ok(())
}

pub fn run_select_window(ctx: &Ctx, args: &SelectWindowArgs) -> anyhow::Result<()> {
    let (panel, report, regime) =
        panel_and_regime(ctx, &args.panel, &args.regime, "window")?;
    let grid_text = need(ctx.setting(&args.window_grid, "window.grid")?, "--window-grid")?;
    let grids = parse::window_grids(&grid_text)?;
    let bootstrap = ctx.setting(&args.bootstrap, "window.bootstrap")?.unwrap_or(200);

    let mut cfg = BawConfig::new(grids, bootstrap)?;
    if let Some(lambda) = ctx.setting(&args.lambda_bias, "window.lambda_bias")? {
        cfg.lambda_bias = lambda;
    }
    if let Some(frac) = ctx.setting(&args.max_excluded, "window.max_excluded")? {
        cfg.max_excluded = frac;
    }
    cfg.refit_nuisance = args.refit_nuisance
        || ctx.config.get_parsed::<bool>("window.refit_nuisance")?.unwrap_or(false);
    let statistic =
        ctx.setting(&args.statistic, "window.statistic")?.unwrap_or("plain".into());
    cfg.statistic = match statistic.to_ascii_lowercase().as_str() {
        "plain" => SelectionStatistic::Plain,
        "augmented" => SelectionStatistic::Augmented,
        other => {
            return Err(EngineError::Config(format!(
                "unknown statistic '{other}' (expected plain or augmented)"
            ))
            .into())
        }
    };
    cfg.validate_grids()?;

    let seed = ctx.resolve_seed()?;
    let result = select_window(&panel, &regime, &cfg, seed)?;

    let out = ctx.out_path(args.out.clone(), "window.out", "window_candidates.csv");
    ensure_parent(&out)?;
    write_candidates_csv(&out, &result, regime.n_thresholds())?;

    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "select-window",
        "seed": seed,
        "statistic": statistic.to_ascii_lowercase(),
        "bootstrap": result.bootstrap,
        "lambda_bias": result.lambda_bias,
        "reference_value": result.reference_value,
        "delta_opt": result.delta_opt,
        "estimate": result.estimate,
        "disqualified_candidates":
            result.candidates.iter().filter(|c| c.disqualified).count(),
        "candidates_csv": out,
        "rows_in": report.rows_in,
        "rows_kept": report.rows_kept,
    }))
}

// ---------------------------------------------------------------------------
// study
// ---------------------------------------------------------------------------

pub fn run_study_cmd(ctx: &Ctx, args: &StudyArgs) -> anyhow::Result<()> {
    let result = if let Some(manifest) =
        ctx.setting(&args.manifest, "study.manifest")?
    {
        run_study_from_manifest(&manifest)?
    } else {
        let name = need(ctx.setting(&args.scenario, "study.scenario")?, "--scenario")?;
        let spec = parse::scenario(&name)?;
        let grid_text = need(ctx.setting(&args.grid, "study.grid")?, "--grid")?;
        let axes = parse::threshold_grid(&grid_text)?;
        let seed = ctx.resolve_seed()?;

        let mut cfg = StudyConfig::new(spec, axes, seed);
        if let Some(text) = ctx.setting(&args.n, "study.n")? {
            cfg.sample_sizes = parse::list_usize(&text, "--n")?;
        }
        if let Some(r) = ctx.setting(&args.replications, "study.replications")? {
            cfg.replications = r;
        }
        if let Some(labels) = ctx.setting(&args.estimators, "study.estimators")? {
            cfg.estimators = parse::estimators(&labels)?;
        }
        cfg.gaw = gaw_config(ctx, args.c, args.k)?;
        if let Some(m) = ctx.setting(&args.bias_target, "study.bias_target")? {
            cfg.tuning = GawTuning::SurfaceRange { m };
        }
        let n_thresholds = cfg.spec.n_thresholds();
        cfg.baw_half_widths = half_widths(ctx, &args.delta, n_thresholds)?;
        if let Some(mc) = ctx.setting(&args.truth_mc, "study.truth_mc")? {
            cfg.truth_mc = mc;
        }
        if let Some(ext) = ctx.setting(&args.external_n, "study.external_n")? {
            cfg.external_n = ext;
        }
        run_study(&cfg)?
    };

    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let files = write_tables(&result, &ctx.out_dir)?;

    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "study",
        "seed": result.config.seed,
        "sample_sizes": result.config.sample_sizes,
        "replications": result.config.replications,
        "files": files,
    }))
}
