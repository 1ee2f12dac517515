//! Grammars for the small command-line languages: regimes, grids, lists.

use dtr_engine::estimators::EstimatorId;
use dtr_engine::model::{Clause, Direction, Panel, Regime, StageRule};
use dtr_engine::simgen::DgpSpec;
use dtr_engine::{EngineError, Result};

pub fn scenario(name: &str) -> Result<DgpSpec> {
    match name.to_ascii_lowercase().as_str() {
        "sim1" => Ok(DgpSpec::sim1()),
        "sim2" => Ok(DgpSpec::sim2()),
        other => Err(EngineError::Config(format!(
            "unknown scenario '{other}' (expected sim1 or sim2)"
        ))),
    }
}

pub fn list_f64(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| EngineError::Config(format!("{what}: '{s}' is not a number")))
        })
        .collect()
}

pub fn list_usize(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| EngineError::Config(format!("{what}: '{s}' is not a count")))
        })
        .collect()
}

pub fn estimators(text: &str) -> Result<Vec<EstimatorId>> {
    text.split(',').map(|s| EstimatorId::parse(s.trim())).collect()
}

/// Inclusive range `lo:hi:step` expanded to an ascending axis.
fn range_axis(spec: &str, what: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(EngineError::Config(format!("{what}: '{spec}' is not lo:hi:step")));
    }
    let nums = list_f64(&parts.join(","), what)?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || hi < lo {
        return Err(EngineError::Config(format!(
            "{what}: range '{spec}' needs hi >= lo and a positive step"
        )));
    }
    let mut axis = Vec::new();
    let mut k = 0u32;
    loop {
        let x = lo + f64::from(k) * step;
        if x > hi + 1e-9 * step {
            break;
        }
        axis.push(x);
        k += 1;
    }
    Ok(axis)
}

/// Threshold grid such as `psi1=150:500:5,psi2=200:600:5`. Every slot
/// `psi1..psiK` must appear exactly once; slots index the regime's
/// thresholds in stage-major, clause-minor order.
pub fn threshold_grid(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut slots: Vec<(usize, Vec<f64>)> = Vec::new();
    for entry in text.split(',') {
        let (name, spec) = entry.split_once('=').ok_or_else(|| {
            EngineError::Config(format!("grid entry '{entry}' is not psiK=lo:hi:step"))
        })?;
        let name = name.trim();
        let k: usize = name
            .strip_prefix("psi")
            .and_then(|s| s.parse().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| {
                EngineError::Config(format!("grid entry '{name}' should be named psi1, psi2, …"))
            })?;
        if slots.iter().any(|(j, _)| *j == k) {
            return Err(EngineError::Config(format!("grid names psi{k} twice")));
        }
        slots.push((k, range_axis(spec.trim(), "grid")?));
    }
    slots.sort_by_key(|(k, _)| *k);
    for (pos, (k, _)) in slots.iter().enumerate() {
        if *k != pos + 1 {
            return Err(EngineError::Config(format!(
                "grid slots must be psi1..psi{} with no gaps",
                slots.len()
            )));
        }
    }
    Ok(slots.into_iter().map(|(_, axis)| axis).collect())
}

/// Window half-width grids, one `lo:hi:step` range per threshold:
/// `0:10:2,0:4:1`.
pub fn window_grids(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(',').map(|spec| range_axis(spec.trim(), "window grid")).collect()
}

/// Rule text: stages separated by `|`, clauses inside a stage by `&`, each
/// clause `name<=value` or `name>=value` with `name` a covariate of that
/// stage. Example: `x1<=350 | x2<=450`.
pub fn regime(text: &str, panel: &Panel) -> Result<Regime> {
    let stage_texts: Vec<&str> = text.split('|').collect();
    if stage_texts.len() != panel.n_stages() {
        return Err(EngineError::Config(format!(
            "regime has {} stages but the panel has {}",
            stage_texts.len(),
            panel.n_stages()
        )));
    }
    let mut stages = Vec::with_capacity(stage_texts.len());
    for (t, stage_text) in stage_texts.iter().enumerate() {
        let mut clauses = Vec::new();
        for clause_text in stage_text.split('&') {
            let clause_text = clause_text.trim();
            let (name, direction, value) = if let Some((n, v)) = clause_text.split_once("<=") {
                (n, Direction::Le, v)
            } else if let Some((n, v)) = clause_text.split_once(">=") {
                (n, Direction::Ge, v)
            } else {
                return Err(EngineError::Config(format!(
                    "clause '{clause_text}' is not name<=value or name>=value"
                )));
            };
            let name = name.trim();
            let covariate = panel.stages[t]
                .covariate_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| {
                    EngineError::Config(format!(
                        "stage {}: no covariate named '{name}' (have {})",
                        t + 1,
                        panel.stages[t].covariate_names.join(", ")
                    ))
                })?;
            let threshold: f64 = value.trim().parse().map_err(|_| {
                EngineError::Config(format!("clause '{clause_text}': bad threshold"))
            })?;
            clauses.push(Clause { covariate, threshold, direction });
        }
        stages.push(StageRule { clauses });
    }
    Ok(Regime { stages, treat_action: 1, control_action: 0 })
}
