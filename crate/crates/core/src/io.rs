//! CSV datasets, result tables and the JSON model file.
//!
//! Reals are written with 17 significant digits, so parsing a written value
//! gives back the identical `f64`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boosting::{BoostedModel, Ensemble, FitConfig};
use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::tree::RegressionTree;
use crate::tuning::{ResultRow, ScoreRow, Trace};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Reads a CSV with a header row into a dataset.
///
/// Numeric columns are parsed as reals. With `one_hot`, non-numeric columns
/// are replaced in place by one 0/1 column per distinct value, in order of
/// first appearance, named `column=value`. When `loss` is given, responses are
/// checked against its support.
pub fn ingest_csv(path: impl AsRef<Path>, target_column: &str, loss: Option<&LossSpec>, one_hot: bool) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    read_csv(BufReader::new(file), target_column, loss, one_hot)
}

pub fn read_csv<R: Read>(reader: R, target_column: &str, loss: Option<&LossSpec>, one_hot: bool) -> Result<Dataset> {
    let table = read_table(reader, target_column, true, one_hot)?;
    let response = table.response.expect("target is required");
    if let Some(loss) = loss {
        loss.check_responses(&response)?;
    }
    Dataset::new(table.features, response, table.feature_names)
}

/// Reads only the feature columns of a CSV, skipping `target_column` if present.
pub fn ingest_features(path: impl AsRef<Path>, target_column: &str, one_hot: bool) -> Result<(Matrix, Vec<String>)> {
    let file = File::open(path.as_ref())?;
    let table = read_table(BufReader::new(file), target_column, false, one_hot)?;
    Ok((table.features, table.feature_names))
}

struct Table {
    features: Matrix,
    feature_names: Vec<String>,
    response: Option<Vec<f64>>,
}

fn read_table<R: Read>(reader: R, target_column: &str, require_target: bool, one_hot: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Empty("CSV file has no header".into()));
    }
    let target = headers.iter().position(|h| h == target_column);
    if target.is_none() && require_target {
        return Err(Error::Data(format!(
            "target column {target_column:?} not found; available columns: {}",
            headers.join(", ")
        )));
    }

    let mut cells: Vec<Vec<String>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        cells.push(record.iter().map(str::to_owned).collect());
    }
    if cells.is_empty() {
        return Err(Error::Empty("CSV file has no data rows".into()));
    }
    let missing: Vec<String> = cells
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(String::is_empty))
        .map(|(i, _)| (i + 1).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!("missing values in data rows {}", missing.join(", "))));
    }

    enum Column {
        Numeric(Vec<f64>),
        Dummies { names: Vec<String>, codes: Vec<usize> },
    }
    let response = match target {
        Some(t) => Some(
            cells.iter().enumerate().map(|(i, row)| parse_real(&row[t], i, &headers[t])).collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let mut columns = Vec::new();
    for (j, name) in headers.iter().enumerate() {
        if Some(j) == target {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, usize> =
            cells.iter().enumerate().map(|(i, row)| row[j].parse::<f64>().map_err(|_| i)).collect();
        match parsed {
            Ok(values) => {
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("non-finite value in row {}, column {name:?}", i + 1)));
                }
                columns.push((name.clone(), Column::Numeric(values)));
            }
            Err(i) if !one_hot => {
                return Err(Error::Data(format!(
                    "cannot parse {:?} as a number in row {}, column {name:?}",
                    cells[i][j],
                    i + 1
                )));
            }
            Err(_) => {
                let mut seen: HashMap<&str, usize> = HashMap::new();
                let mut names = Vec::new();
                let codes = cells
                    .iter()
                    .map(|row| {
                        let v = row[j].as_str();
                        *seen.entry(v).or_insert_with(|| {
                            names.push(format!("{name}={v}"));
                            names.len() - 1
                        })
                    })
                    .collect();
                columns.push((name.clone(), Column::Dummies { names, codes }));
            }
        }
    }

    let mut feature_names = Vec::new();
    for (name, col) in &columns {
        match col {
            Column::Numeric(_) => feature_names.push(name.clone()),
            Column::Dummies { names, .. } => feature_names.extend(names.iter().cloned()),
        }
    }
    let n = cells.len();
    let p = feature_names.len();
    let mut data = vec![0.0; n * p];
    let mut offset = 0;
    for (_, col) in &columns {
        match col {
            Column::Numeric(values) => {
                for (i, v) in values.iter().enumerate() {
                    data[i * p + offset] = *v;
                }
                offset += 1;
            }
            Column::Dummies { names, codes } => {
                for (i, &c) in codes.iter().enumerate() {
                    data[i * p + offset + c] = 1.0;
                }
                offset += names.len();
            }
        }
    }
    Ok(Table { features: Matrix::new(data, n, p)?, feature_names, response })
}

fn parse_real(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Data(format!("cannot parse {cell:?} as a number in row {}, column {column:?}", row + 1))),
    }
}

/// Writes features then the response (column `target_name`).
pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset, target_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.push(target_name);
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (row, y) in dataset.features.rows().zip(&dataset.response) {
        record.clear();
        record.extend(row.iter().map(|v| fmt_real(*v)));
        record.push(fmt_real(*y));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset, target_name: &str) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), dataset, target_name)
}

/// Writes a real matrix under the given column names.
pub fn write_matrix<W: Write>(writer: W, names: &[String], m: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(names)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| fmt_real(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "split_id",
        "mode",
        "learning_rate",
        "min_leaf",
        "constraint",
        "chosen_M",
        "valid_score",
        "test_score",
    ])?;
    for r in rows {
        w.write_record([
            r.split_id.to_string(),
            r.mode.clone(),
            fmt_real(r.learning_rate),
            fmt_real(r.min_leaf),
            r.constraint.clone(),
            r.chosen_m.to_string(),
            fmt_real(r.valid_score),
            fmt_real(r.test_score),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_score_table<W: Write>(writer: W, mode: &str, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["mode", "learning_rate", "min_leaf", "iteration", "valid_score"])?;
    for r in rows {
        w.write_record([
            mode.to_string(),
            fmt_real(r.learning_rate),
            fmt_real(r.min_leaf),
            r.iterations.to_string(),
            fmt_real(r.score),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(writer: W, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "train_loss", "test_score"])?;
    for (m, train, test) in &trace.points {
        w.write_record([m.to_string(), fmt_real(*train), fmt_real(*test)])?;
    }
    w.flush()?;
    Ok(())
}

/// On-disk model layout: flat node arrays per tree, learning rate already applied.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    loss: LossSpec,
    config: FitConfig,
    num_features: usize,
    f0: Vec<f64>,
    trees: Vec<Vec<RegressionTree>>,
    train_loss: Vec<f64>,
}

pub fn model_to_json(model: &BoostedModel) -> Result<String> {
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        loss: model.loss.clone(),
        config: model.config.clone(),
        num_features: model.ensemble.num_features,
        f0: model.ensemble.f0.clone(),
        trees: model.ensemble.trees.clone(),
        train_loss: model.ensemble.train_loss.clone(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn model_from_json(text: &str) -> Result<BoostedModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::Data(format!(
            "unsupported model schema version {} (expected {})",
            file.schema_version, MODEL_SCHEMA_VERSION
        )));
    }
    let model = BoostedModel {
        loss: file.loss,
        config: file.config,
        ensemble: Ensemble {
            num_features: file.num_features,
            f0: file.f0,
            trees: file.trees,
            train_loss: file.train_loss,
        },
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &BoostedModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(model_to_json(model)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BoostedModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}
