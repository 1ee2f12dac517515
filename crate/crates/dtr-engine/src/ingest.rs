//! CSV panel ingestion and the matching writer.
//!
//! Columns are mapped by name through an [`IngestSchema`]. Empty cells are
//! *missing data* and go through the schema's policy (drop the row or fail);
//! non-empty cells that do not parse — stray text in a numeric column, a
//! treatment code outside the declared map — are hard errors with row and
//! column coordinates, whatever the policy says.
//!
//! Numbers are written in Rust's shortest round-trip form and parsed with
//! dot-decimal `f64` semantics, so write → ingest reproduces a panel bit for
//! bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::model::{Alphabet, Panel, Stage};

/// What to do with a row that has missing (empty) cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingPolicy {
    DropRow,
    Fail,
}

/// Column names for one decision stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageColumns {
    pub covariates: Vec<String>,
    pub treatment: String,
}

/// Column mapping and codings for one CSV layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSchema {
    /// Checked for existence when given; the values themselves are not kept.
    pub id: Option<String>,
    pub stages: Vec<StageColumns>,
    pub outcome: String,
    pub policy: MissingPolicy,
    /// Raw treatment cell -> action value; every value must lie in the
    /// alphabet.
    pub treatment_codes: Vec<(String, u8)>,
    pub alphabet: Alphabet,
}

impl IngestSchema {
    /// Binary 0/1 coding with the given stage and outcome columns.
    pub fn binary(stages: Vec<StageColumns>, outcome: impl Into<String>) -> Self {
        IngestSchema {
            id: None,
            stages,
            outcome: outcome.into(),
            policy: MissingPolicy::DropRow,
            treatment_codes: vec![("0".into(), 0), ("1".into(), 1)],
            alphabet: Alphabet::binary(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(EngineError::Config("schema needs at least one stage".into()));
        }
        if self.treatment_codes.is_empty() {
            return Err(EngineError::Config("schema needs a treatment coding map".into()));
        }
        for (code, action) in &self.treatment_codes {
            if !self.alphabet.contains(*action) {
                return Err(EngineError::Config(format!(
                    "treatment code '{code}' maps to {action}, outside the alphabet"
                )));
            }
        }
        Ok(())
    }
}

/// What happened to each row during ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_in: usize,
    pub rows_kept: usize,
    /// (1-based data row, reason), in file order.
    pub dropped: Vec<(usize, String)>,
}

struct ColumnMap {
    id: Option<usize>,
    stages: Vec<(Vec<usize>, usize)>,
    outcome: usize,
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| EngineError::Data(format!("column '{name}' not found in the header")))
}

fn map_columns(headers: &csv::StringRecord, schema: &IngestSchema) -> Result<ColumnMap> {
    let id = schema.id.as_deref().map(|n| find_column(headers, n)).transpose()?;
    let stages = schema
        .stages
        .iter()
        .map(|s| -> Result<(Vec<usize>, usize)> {
            let covs =
                s.covariates.iter().map(|c| find_column(headers, c)).collect::<Result<_>>()?;
            Ok((covs, find_column(headers, &s.treatment)?))
        })
        .collect::<Result<_>>()?;
    Ok(ColumnMap { id, stages, outcome: find_column(headers, &schema.outcome)? })
}

enum Cell {
    Value(f64),
    Missing,
}

fn parse_numeric(raw: &str, row: usize, column: &str) -> Result<Cell> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(Cell::Missing);
    }
    trimmed
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Cell::Value)
        .ok_or_else(|| {
            EngineError::Data(format!("row {row}, column '{column}': unparseable number '{raw}'"))
        })
}

/// [`ingest_csv`] over any reader.
pub fn ingest_reader<R: Read>(input: R, schema: &IngestSchema) -> Result<(Panel, IngestReport)> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let map = map_columns(&headers, schema)?;
    let _ = map.id; // existence checked; the values are not stored

    let n_stages = schema.stages.len();
    let mut covariates: Vec<Vec<Vec<f64>>> =
        schema.stages.iter().map(|s| vec![Vec::new(); s.covariates.len()]).collect();
    let mut treatments: Vec<Vec<u8>> = vec![Vec::new(); n_stages];
    let mut outcome: Vec<f64> = Vec::new();
    let mut rows_in = 0usize;
    let mut dropped: Vec<(usize, String)> = Vec::new();

    'rows: for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        rows_in += 1;
        let mut row_covs: Vec<Vec<f64>> = Vec::with_capacity(n_stages);
        let mut row_actions: Vec<u8> = Vec::with_capacity(n_stages);

        let miss = |column: &str, dropped: &mut Vec<(usize, String)>| -> Result<bool> {
            match schema.policy {
                MissingPolicy::DropRow => {
                    dropped.push((row, format!("missing '{column}'")));
                    Ok(true)
                }
                MissingPolicy::Fail => Err(EngineError::Data(format!(
                    "row {row}, column '{column}': missing value"
                ))),
            }
        };

        for (t, (cov_idx, treat_idx)) in map.stages.iter().enumerate() {
            let mut vals = Vec::with_capacity(cov_idx.len());
            for (k, &ci) in cov_idx.iter().enumerate() {
                let name = &schema.stages[t].covariates[k];
                match parse_numeric(&record[ci], row, name)? {
                    Cell::Value(v) => vals.push(v),
                    Cell::Missing => {
                        if miss(name, &mut dropped)? {
                            continue 'rows;
                        }
                    }
                }
            }
            let raw = record[*treat_idx].trim();
            if raw.is_empty() {
                if miss(&schema.stages[t].treatment, &mut dropped)? {
                    continue 'rows;
                }
            }
            let action = schema
                .treatment_codes
                .iter()
                .find(|(code, _)| code == raw)
                .map(|(_, a)| *a)
                .ok_or_else(|| {
                    EngineError::Data(format!(
                        "row {row}, column '{}': unknown treatment code '{raw}'",
                        schema.stages[t].treatment
                    ))
                })?;
            row_covs.push(vals);
            row_actions.push(action);
        }
        match parse_numeric(&record[map.outcome], row, &schema.outcome)? {
            Cell::Value(v) => {
                for (t, vals) in row_covs.into_iter().enumerate() {
                    for (k, v) in vals.into_iter().enumerate() {
                        covariates[t][k].push(v);
                    }
                }
                for (t, a) in row_actions.into_iter().enumerate() {
                    treatments[t].push(a);
                }
                outcome.push(v);
            }
            Cell::Missing => {
                if miss(&schema.outcome, &mut dropped)? {
                    continue 'rows;
                }
            }
        }
    }

    if outcome.is_empty() {
        return Err(EngineError::Data(format!(
            "no rows survived ingestion ({rows_in} read, {} dropped)",
            dropped.len()
        )));
    }
    let stages: Vec<Stage> = schema
        .stages
        .iter()
        .zip(covariates)
        .zip(treatments)
        .map(|((sc, covs), treats)| Stage {
            covariates: covs,
            covariate_names: sc.covariates.clone(),
            treatments: treats,
        })
        .collect();
    let rows_kept = outcome.len();
    let panel = Panel::new(stages, outcome, schema.alphabet.clone())?;
    Ok((panel, IngestReport { rows_in, rows_kept, dropped }))
}

/// Read a panel from a CSV file through a column schema.
pub fn ingest_csv(path: &Path, schema: &IngestSchema) -> Result<(Panel, IngestReport)> {
    let file = std::fs::File::open(path)
        .map_err(|e| EngineError::Data(format!("{}: {e}", path.display())))?;
    ingest_reader(file, schema)
}

/// Schema matching [`write_panel_csv`]'s layout for this panel.
///
/// Covariate names must be unique across stages; treatments come out as
/// `a1..aT` and the outcome as `y`.
pub fn panel_schema(panel: &Panel) -> Result<IngestSchema> {
    let mut seen: Vec<&str> = Vec::new();
    let mut stages = Vec::with_capacity(panel.n_stages());
    for (t, stage) in panel.stages.iter().enumerate() {
        for name in &stage.covariate_names {
            if seen.contains(&name.as_str()) || ["id", "y"].contains(&name.as_str()) {
                return Err(EngineError::Config(format!(
                    "covariate name '{name}' collides with another column"
                )));
            }
            seen.push(name);
        }
        stages.push(StageColumns {
            covariates: stage.covariate_names.clone(),
            treatment: format!("a{}", t + 1),
        });
    }
    let mut schema = IngestSchema::binary(stages, "y");
    schema.id = Some("id".into());
    schema.treatment_codes = panel
        .alphabet
        .actions()
        .iter()
        .map(|&a| (a.to_string(), a))
        .collect();
    schema.alphabet = panel.alphabet.clone();
    Ok(schema)
}

/// Write a panel in the layout [`panel_schema`] describes: `id`, then each
/// stage's covariates and `a{t}`, then `y`.
pub fn write_panel_csv<W: Write>(panel: &Panel, out: W) -> Result<()> {
    let schema = panel_schema(panel)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    for (t, stage) in schema.stages.iter().enumerate() {
        header.extend(stage.covariates.iter().cloned());
        let _ = t;
        header.push(stage.treatment.clone());
    }
    header.push(schema.outcome.clone());
    w.write_record(&header)?;
    for i in 0..panel.n() {
        let mut rec = vec![(i + 1).to_string()];
        for stage in &panel.stages {
            for col in &stage.covariates {
                rec.push(col[i].to_string());
            }
            rec.push(stage.treatments[i].to_string());
        }
        rec.push(panel.outcome[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate, DgpSpec};

    fn two_stage_schema() -> IngestSchema {
        IngestSchema::binary(
            vec![
                StageColumns { covariates: vec!["x1".into()], treatment: "a1".into() },
                StageColumns { covariates: vec!["x2".into()], treatment: "a2".into() },
            ],
            "y",
        )
    }

    const WELL_FORMED: &str = "\
id,x1,a1,x2,a2,y
1,450,1,560,0,1200
2,300.5,0,380,1,1100.25
3,500,1,640,1,990
";

    #[test]
    fn well_formed_file_ingests_every_row() {
        let (panel, report) = ingest_reader(WELL_FORMED.as_bytes(), &two_stage_schema()).unwrap();
        assert_eq!(panel.n(), 3);
        assert_eq!(report.rows_in, 3);
        assert_eq!(report.rows_kept, 3);
        assert!(report.dropped.is_empty());
        assert_eq!(panel.stages[0].covariates[0], vec![450.0, 300.5, 500.0]);
        assert_eq!(panel.stages[1].treatments, vec![0, 1, 1]);
        assert_eq!(panel.outcome, vec![1200.0, 1100.25, 990.0]);
    }

    #[test]
    fn empty_outcome_under_drop_row_decrements_n_and_logs() {
        let csv = "id,x1,a1,x2,a2,y\n1,450,1,560,0,1200\n2,300,0,380,1,\n3,500,1,640,1,990\n";
        let (panel, report) = ingest_reader(csv.as_bytes(), &two_stage_schema()).unwrap();
        assert_eq!(panel.n(), 2);
        assert_eq!(report.rows_in, 3);
        assert_eq!(report.dropped, vec![(2, "missing 'y'".to_string())]);
        assert_eq!(panel.outcome, vec![1200.0, 990.0]);
    }

    #[test]
    fn missing_cell_under_fail_policy_is_an_error_with_coordinates() {
        let csv = "id,x1,a1,x2,a2,y\n1,450,1,,0,1200\n";
        let mut schema = two_stage_schema();
        schema.policy = MissingPolicy::Fail;
        let err = ingest_reader(csv.as_bytes(), &schema).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("'x2'"), "{msg}");
    }

    #[test]
    fn unknown_treatment_code_names_the_row_regardless_of_policy() {
        let csv = "id,x1,a1,x2,a2,y\n1,450,1,560,0,1200\n2,300,2,380,1,1100\n";
        let err = ingest_reader(csv.as_bytes(), &two_stage_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("'2'"), "{msg}");
    }

    #[test]
    fn unparseable_number_is_a_hard_error() {
        let csv = "id,x1,a1,x2,a2,y\n1,abc,1,560,0,1200\n";
        let err = ingest_reader(csv.as_bytes(), &two_stage_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("'x1'") && msg.contains("abc"), "{msg}");
    }

    #[test]
    fn unmapped_column_is_reported_by_name() {
        let csv = "id,x1,a1,y\n1,450,1,1200\n";
        let err = ingest_reader(csv.as_bytes(), &two_stage_schema()).unwrap_err();
        assert!(err.to_string().contains("'x2'"), "{err}");
    }

    #[test]
    fn simulated_panel_round_trips_bit_for_bit() {
        let panel = generate(&DgpSpec::sim1(), 80, 9001).unwrap();
        let mut buf = Vec::new();
        write_panel_csv(&panel, &mut buf).unwrap();
        let schema = panel_schema(&panel).unwrap();
        let (back, report) = ingest_reader(buf.as_slice(), &schema).unwrap();
        assert_eq!(report.rows_kept, 80);
        assert_eq!(back.outcome, panel.outcome);
        for (a, b) in back.stages.iter().zip(&panel.stages) {
            assert_eq!(a.covariates, b.covariates);
            assert_eq!(a.treatments, b.treatments);
            assert_eq!(a.covariate_names, b.covariate_names);
        }
    }

    #[test]
    fn schema_rejects_code_outside_alphabet() {
        let mut schema = two_stage_schema();
        schema.treatment_codes.push(("T".into(), 7));
        let err = ingest_reader(WELL_FORMED.as_bytes(), &schema).unwrap_err();
        assert!(err.to_string().contains("outside the alphabet"), "{err}");
    }
}
