//! Sample splitting, validation metrics, grid search and the benchmark runner.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{fit, BoostedModel, FitConfig, UpdateMode};
use crate::data::{Dataset, Matrix};
use crate::datagen::{simulate, SimSpec};
use crate::error::{Error, Result};
use crate::losses::{softmax, LossFamily, LossSpec};
use crate::tree::{LeafConstraint, TreeConfig};

/// Random partition of `0..n` into training, validation and test indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub fractions: [f64; 3],
    pub caps: Option<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    /// Equal thirds, uncapped.
    pub fn thirds(seed: u64) -> Self {
        SplitPlan { seed, fractions: [1.0 / 3.0; 3], caps: None }
    }

    pub fn split(&self, n: usize) -> Result<Partition> {
        let total: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|f| !(*f >= 0.0)) || !(total > 0.0) || total > 1.0 + 1e-9 {
            return Err(Error::Config(format!("invalid split fractions {:?}", self.fractions)));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha20Rng::seed_from_u64(self.seed));
        let n_train = (n as f64 * self.fractions[0] / total.max(1.0)).floor() as usize;
        let n_valid = (n as f64 * self.fractions[1] / total.max(1.0)).floor() as usize;
        // the test part takes the remainder when the fractions cover everything
        let n_test = if (total - 1.0).abs() < 1e-9 {
            n - n_train - n_valid
        } else {
            (n as f64 * self.fractions[2]).floor() as usize
        };
        let mut parts = [
            idx[..n_train].to_vec(),
            idx[n_train..n_train + n_valid].to_vec(),
            idx[n_train + n_valid..n_train + n_valid + n_test].to_vec(),
        ];
        if let Some(caps) = self.caps {
            for (part, cap) in parts.iter_mut().zip(caps) {
                part.truncate(cap);
            }
        }
        let [train, valid, test] = parts;
        if train.is_empty() || valid.is_empty() || test.is_empty() {
            return Err(Error::Config(format!("split of {n} rows leaves an empty partition")));
        }
        Ok(Partition { train, valid, test })
    }
}

/// Fraction of mismatched labels.
pub fn error_rate(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Input(format!("{} predictions for {} labels", predictions.len(), truth.len())));
    }
    let wrong = predictions.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / predictions.len() as f64)
}

/// Predicted class per row: `p > 0.5` for binary, softmax argmax (lowest index on ties) for multiclass.
pub fn predicted_labels(loss: &LossSpec, scores: &Matrix) -> Result<Vec<usize>> {
    match loss.family {
        LossFamily::BinaryLogistic => Ok(scores
            .rows()
            .map(|s| {
                let p = 1.0 / (1.0 + (-s[0]).exp());
                usize::from(p > 0.5)
            })
            .collect()),
        LossFamily::MulticlassSoftmax => Ok(scores
            .rows()
            .map(|s| {
                let p = softmax(s);
                let mut best = 0;
                for k in 1..p.len() {
                    if p[k] > p[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()),
        other => Err(Error::Config(format!("{} is not a classification loss", other.name()))),
    }
}

/// Mean per-observation loss.
pub fn neg_log_likelihood(loss: &LossSpec, scores: &Matrix, truth: &[f64]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Empty("no observations to score".into()));
    }
    if scores.n_rows() != truth.len() || scores.n_cols() != loss.num_outputs {
        return Err(Error::Input(format!(
            "{}x{} scores for {} observations of a {}-output loss",
            scores.n_rows(),
            scores.n_cols(),
            truth.len(),
            loss.num_outputs
        )));
    }
    loss.check_responses(truth)?;
    let d = loss.num_outputs;
    let (mut g, mut h) = (vec![0.0; d], vec![0.0; d]);
    let total: f64 = scores.rows().zip(truth).map(|(s, &y)| loss.eval_into(y, s, &mut g, &mut h)).sum();
    Ok(total / truth.len() as f64)
}

/// Error rate for classification losses, mean NLL otherwise.
pub fn score(loss: &LossSpec, scores: &Matrix, truth: &[f64]) -> Result<f64> {
    if loss.family.is_classification() {
        let labels: Vec<usize> = truth.iter().map(|&y| y as usize).collect();
        error_rate(&predicted_labels(loss, scores)?, &labels)
    } else {
        neg_log_likelihood(loss, scores, truth)
    }
}

/// An update mode paired with the leaf constraint it is tuned under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variant {
    pub mode: UpdateMode,
    pub constraint: LeafConstraint,
}

impl Variant {
    pub const GRADIENT: Variant = Variant { mode: UpdateMode::Gradient, constraint: LeafConstraint::RawCount };
    pub const NEWTON: Variant = Variant { mode: UpdateMode::Newton, constraint: LeafConstraint::EquivalentWeighted };
    pub const HYBRID: Variant = Variant { mode: UpdateMode::Hybrid, constraint: LeafConstraint::RawCount };
    pub const NEWTON_HESSIAN_SUM: Variant =
        Variant { mode: UpdateMode::Newton, constraint: LeafConstraint::RawHessianSum };
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Variant::NEWTON_HESSIAN_SUM {
            f.write_str("newton-hessian-sum")
        } else {
            f.write_str(self.mode.name())
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Variant::GRADIENT),
            "newton" => Ok(Variant::NEWTON),
            "hybrid" => Ok(Variant::HYBRID),
            "newton-hessian-sum" | "xgboost" => Ok(Variant::NEWTON_HESSIAN_SUM),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?} (expected gradient, newton, hybrid or newton-hessian-sum)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    /// `M` is searched over `1..=iterations_max`.
    pub iterations_max: usize,
    pub learning_rates: Vec<f64>,
    pub min_per_leaf_values: Vec<f64>,
    pub max_depth: usize,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            iterations_max: 1000,
            learning_rates: vec![1.0, 0.1, 0.01, 0.001],
            min_per_leaf_values: vec![1.0, 5.0, 25.0, 100.0],
            max_depth: 5,
        }
    }
}

impl TuningGrid {
    /// Leaf minimums actually searched for `variant` under `loss`.
    ///
    /// Gradient and hybrid mean-scale fits only consider `S` in {25, 100}.
    pub fn min_leaf_values(&self, variant: Variant, loss: &LossSpec) -> Vec<f64> {
        if loss.family == LossFamily::MeanScaleGaussian && variant.mode != UpdateMode::Newton {
            let kept: Vec<f64> =
                self.min_per_leaf_values.iter().copied().filter(|s| *s == 25.0 || *s == 100.0).collect();
            if kept.is_empty() {
                vec![25.0, 100.0]
            } else {
                kept
            }
        } else {
            self.min_per_leaf_values.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations_max == 0 || self.learning_rates.is_empty() || self.min_per_leaf_values.is_empty() {
            return Err(Error::Config("tuning grid has an empty axis".into()));
        }
        Ok(())
    }
}

/// Validation score of one `(learning rate, S, M)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub learning_rate: f64,
    pub min_leaf: f64,
    pub iterations: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: ScoreRow,
    pub config: FitConfig,
    /// The selected cell's model truncated to the chosen number of iterations.
    pub model: BoostedModel,
    pub table: Vec<ScoreRow>,
}

/// Orders candidate rows: lower score, then fewer iterations, then smaller
/// learning rate, then larger `S`.
fn prefer(a: &ScoreRow, b: &ScoreRow) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.iterations.cmp(&b.iterations))
        .then(a.learning_rate.total_cmp(&b.learning_rate))
        .then(b.min_leaf.total_cmp(&a.min_leaf))
}

/// Fits every `(learning rate, S)` cell once with `iterations_max` trees and
/// scores all staged predictions on `valid`.
pub fn grid_search(
    train: &Dataset,
    valid: &Dataset,
    loss: &LossSpec,
    variant: Variant,
    grid: &TuningGrid,
) -> Result<GridResult> {
    grid.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Empty("training and validation data must be nonempty".into()));
    }
    let cells: Vec<(f64, f64)> = grid
        .learning_rates
        .iter()
        .flat_map(|&lr| grid.min_leaf_values(variant, loss).into_iter().map(move |s| (lr, s)))
        .collect();

    let fitted: Vec<Result<(FitConfig, BoostedModel, Vec<ScoreRow>)>> = cells
        .par_iter()
        .map(|&(lr, s)| {
            let config = FitConfig::new(
                variant.mode,
                grid.iterations_max,
                lr,
                TreeConfig::new(grid.max_depth, variant.constraint, s),
            );
            let model = fit(train, loss, &config)?;
            let mut rows = Vec::with_capacity(grid.iterations_max);
            let mut failure = None;
            model.for_each_stage(&valid.features, None, |m, scores| {
                if m == 0 || failure.is_some() {
                    return;
                }
                match score(loss, scores, &valid.response) {
                    Ok(v) => rows.push(ScoreRow { learning_rate: lr, min_leaf: s, iterations: m, score: v }),
                    Err(e) => failure = Some(e),
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok((config, model, rows))
        })
        .collect();

    let mut table = Vec::new();
    let mut best: Option<(ScoreRow, usize)> = None;
    let mut failures = Vec::new();
    for (i, cell) in fitted.iter().enumerate() {
        match cell {
            Ok((_, _, rows)) => {
                for row in rows {
                    table.push(*row);
                    if row.score.is_nan() {
                        continue;
                    }
                    if best.as_ref().is_none_or(|(b, _)| prefer(row, b) == Ordering::Less) {
                        best = Some((*row, i));
                    }
                }
            }
            Err(e) => {
                let (lr, s) = cells[i];
                warn!("grid cell (learning_rate={lr}, min_leaf={s}) failed: {e}");
                failures.push(format!("(learning_rate={lr}, min_leaf={s}): {e}"));
            }
        }
    }
    let (best, idx) = best.ok_or_else(|| Error::AllCellsDiverged(failures.join("; ")))?;
    let (config, model, _) = fitted.into_iter().nth(idx).expect("index in range")?;
    let model = model.truncated(best.iterations)?;
    let mut config = config;
    config.num_iterations = best.iterations;
    Ok(GridResult { best, config, model, table })
}

/// Where benchmark data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Fresh simulated data per split: `3 * n_per_partition` rows with seed `spec.seed + split`.
    Simulated { spec: SimSpec, n_per_partition: usize },
    /// A fixed dataset, re-partitioned per split.
    Table { dataset: Dataset, loss: LossSpec, caps: Option<[usize; 3]> },
}

impl DataSource {
    /// Loss plus training, validation and test parts for split `s`.
    pub fn split(&self, s: usize, seed: u64) -> Result<(LossSpec, Dataset, Dataset, Dataset)> {
        let split_seed = seed.wrapping_add(s as u64);
        let (dataset, loss, caps) = match self {
            DataSource::Simulated { spec, n_per_partition } => {
                let spec = SimSpec { n: 3 * n_per_partition, seed: spec.seed.wrapping_add(s as u64), ..spec.clone() };
                let sim = simulate(&spec)?;
                (sim.dataset, sim.loss, None)
            }
            DataSource::Table { dataset, loss, caps } => (dataset.clone(), loss.clone(), *caps),
        };
        let plan = SplitPlan { caps, ..SplitPlan::thirds(split_seed) };
        let part = plan.split(dataset.len())?;
        Ok((loss, dataset.subset(&part.train), dataset.subset(&part.valid), dataset.subset(&part.test)))
    }
}

/// One row of the benchmark result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub split_id: usize,
    pub mode: String,
    pub learning_rate: f64,
    pub min_leaf: f64,
    pub constraint: String,
    pub chosen_m: usize,
    pub valid_score: f64,
    pub test_score: f64,
}

/// Runs grid search for every split and variant and scores the chosen model on test data.
///
/// Failed cells are logged and reported with NaN scores; the run continues.
pub fn benchmark(
    source: &DataSource,
    variants: &[Variant],
    splits: usize,
    seed: u64,
    grid: &TuningGrid,
) -> Result<Vec<ResultRow>> {
    if splits == 0 {
        return Err(Error::Config("need at least one split".into()));
    }
    let mut rows = Vec::with_capacity(splits * variants.len());
    for s in 0..splits {
        let (loss, train, valid, test) = source.split(s, seed)?;
        let results: Vec<ResultRow> = variants
            .par_iter()
            .map(|&variant| {
                let outcome = grid_search(&train, &valid, &loss, variant, grid).and_then(|r| {
                    let scores = r.model.predict(&test.features, None)?;
                    Ok((r.best, score(&loss, &scores, &test.response)?))
                });
                match outcome {
                    Ok((best, test_score)) => ResultRow {
                        split_id: s,
                        mode: variant.to_string(),
                        learning_rate: best.learning_rate,
                        min_leaf: best.min_leaf,
                        constraint: variant.constraint.name().into(),
                        chosen_m: best.iterations,
                        valid_score: best.score,
                        test_score,
                    },
                    Err(e) => {
                        warn!("split {s}, mode {variant}: {e}");
                        ResultRow {
                            split_id: s,
                            mode: variant.to_string(),
                            learning_rate: f64::NAN,
                            min_leaf: f64::NAN,
                            constraint: variant.constraint.name().into(),
                            chosen_m: 0,
                            valid_score: f64::NAN,
                            test_score: f64::NAN,
                        }
                    }
                }
            })
            .collect();
        rows.extend(results);
    }
    Ok(rows)
}

/// Per-iteration training loss and test score of a fixed-configuration fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub split_id: usize,
    pub variant: Variant,
    /// `(iteration, mean training loss, test score)` for iterations `1..=M`.
    pub points: Vec<(usize, f64, f64)>,
}

/// Fits each variant with a fixed learning rate and leaf minimum on every
/// split and records training-loss and test-score curves.
#[allow(clippy::too_many_arguments)]
pub fn trace(
    source: &DataSource,
    variants: &[Variant],
    splits: usize,
    seed: u64,
    learning_rate: f64,
    min_leaf: f64,
    iterations: usize,
    max_depth: usize,
) -> Result<Vec<Trace>> {
    let mut out = Vec::new();
    for s in 0..splits {
        let (loss, train, _valid, test) = source.split(s, seed)?;
        let traces: Vec<Result<Trace>> = variants
            .par_iter()
            .map(|&variant| {
                let config = FitConfig::new(
                    variant.mode,
                    iterations,
                    learning_rate,
                    TreeConfig::new(max_depth, variant.constraint, min_leaf),
                );
                let model = fit(&train, &loss, &config)?;
                let n = train.len() as f64;
                let mut points = Vec::with_capacity(iterations);
                let mut failure = None;
                model.for_each_stage(&test.features, None, |m, scores| {
                    if m == 0 || failure.is_some() {
                        return;
                    }
                    match score(&loss, scores, &test.response) {
                        Ok(v) => points.push((m, model.ensemble.train_loss[m - 1] / n, v)),
                        Err(e) => failure = Some(e),
                    }
                })?;
                if let Some(e) = failure {
                    return Err(e);
                }
                Ok(Trace { split_id: s, variant, points })
            })
            .collect();
        for t in traces {
            out.push(t?);
        }
    }
    Ok(out)
}
