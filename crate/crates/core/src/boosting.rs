//! Stagewise boosting with gradient, Newton or hybrid updates.
//!
//! Each iteration evaluates the loss gradient `g` and diagonal Hessian `h` at
//! the current scores and fits one tree per output dimension:
//!
//! | mode     | tree structure fitted to | leaf values          |
//! |----------|--------------------------|----------------------|
//! | gradient | `-g`, unit weights       | mean of `-g`         |
//! | newton   | `-g/h`, weights `h`      | `-sum(g) / sum(h)`   |
//! | hybrid   | `-g`, unit weights       | `-sum(g) / sum(h)`   |
//!
//! Leaf values are multiplied by the learning rate before they are stored, so
//! a model's score is `f0 + sum of all tree outputs`.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::losses::{LossFamily, LossSpec};
use crate::tree::{fit_tree_sorted, ColumnOrder, LeafConstraint, RegressionTree, TreeConfig};

pub use crate::tree::normalize_weights;

pub const DEFAULT_HESSIAN_FLOOR: f64 = 1e-20;

/// Degenerate initial scores (all one class, all-zero counts, ...) are clamped here.
const INIT_CLAMP: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Gradient,
    Newton,
    Hybrid,
}

impl UpdateMode {
    pub fn name(self) -> &'static str {
        match self {
            UpdateMode::Gradient => "gradient",
            UpdateMode::Newton => "newton",
            UpdateMode::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub mode: UpdateMode,
    pub num_iterations: usize,
    pub learning_rate: f64,
    pub tree: TreeConfig,
    pub hessian_floor: f64,
}

impl FitConfig {
    pub fn new(mode: UpdateMode, num_iterations: usize, learning_rate: f64, tree: TreeConfig) -> Self {
        FitConfig { mode, num_iterations, learning_rate, tree, hessian_floor: DEFAULT_HESSIAN_FLOOR }
    }

    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if self.num_iterations == 0 {
            return Err(Error::Config("num_iterations must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning rate must lie in (0, 1], got {}", self.learning_rate)));
        }
        if !(self.hessian_floor > 0.0 && self.hessian_floor.is_finite()) {
            return Err(Error::Config(format!("hessian floor must be positive, got {}", self.hessian_floor)));
        }
        let constraint = self.tree.leaf_constraint;
        let ok = match self.mode {
            UpdateMode::Gradient | UpdateMode::Hybrid => constraint == LeafConstraint::RawCount,
            UpdateMode::Newton => constraint != LeafConstraint::RawCount,
        };
        if !ok {
            return Err(Error::Config(format!(
                "{} boosting cannot use the {} leaf constraint",
                self.mode.name(),
                constraint.name()
            )));
        }
        Ok(())
    }
}

/// Initial scores and trees: everything needed for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub num_features: usize,
    pub f0: Vec<f64>,
    /// `trees[m][k]`: iteration `m`, output dimension `k`, learning rate applied.
    pub trees: Vec<Vec<RegressionTree>>,
    /// Training loss (sum over rows) after each iteration.
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub loss: LossSpec,
    pub config: FitConfig,
    pub ensemble: Ensemble,
}

impl BoostedModel {
    pub fn num_iterations(&self) -> usize {
        self.ensemble.trees.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.loss.num_outputs
    }

    pub fn num_features(&self) -> usize {
        self.ensemble.num_features
    }

    /// Scores of the first `upto` iterations (all of them by default), one row per input row.
    pub fn predict(&self, features: &Matrix, upto: Option<usize>) -> Result<Matrix> {
        let upto = self.check_upto(upto)?;
        self.check_width(features)?;
        let d = self.num_outputs();
        let mut out = Matrix::zeros(features.n_rows(), d);
        for (i, row) in features.rows().enumerate() {
            let scores = out.row_mut(i);
            scores.copy_from_slice(&self.ensemble.f0);
            for stage in &self.ensemble.trees[..upto] {
                for (s, tree) in scores.iter_mut().zip(stage) {
                    *s += tree.predict_row(row);
                }
            }
        }
        Ok(out)
    }

    /// Calls `visit(m, scores)` for `m = 0..=upto` with the staged scores.
    ///
    /// Scores are accumulated in the same order as [`BoostedModel::predict`],
    /// so stage `m` is bit-identical to `predict(features, Some(m))`.
    pub fn for_each_stage(
        &self,
        features: &Matrix,
        upto: Option<usize>,
        mut visit: impl FnMut(usize, &Matrix),
    ) -> Result<()> {
        let upto = self.check_upto(upto)?;
        self.check_width(features)?;
        let d = self.num_outputs();
        let mut scores = Matrix::zeros(features.n_rows(), d);
        for i in 0..features.n_rows() {
            scores.row_mut(i).copy_from_slice(&self.ensemble.f0);
        }
        visit(0, &scores);
        for (m, stage) in self.ensemble.trees[..upto].iter().enumerate() {
            for (i, row) in features.rows().enumerate() {
                for (s, tree) in scores.row_mut(i).iter_mut().zip(stage) {
                    *s += tree.predict_row(row);
                }
            }
            visit(m + 1, &scores);
        }
        Ok(())
    }

    /// The model consisting of the first `m` iterations.
    pub fn truncated(&self, m: usize) -> Result<BoostedModel> {
        let m = self.check_upto(Some(m))?;
        let mut config = self.config.clone();
        config.num_iterations = m;
        Ok(BoostedModel {
            loss: self.loss.clone(),
            config,
            ensemble: Ensemble {
                num_features: self.ensemble.num_features,
                f0: self.ensemble.f0.clone(),
                trees: self.ensemble.trees[..m].to_vec(),
                train_loss: self.ensemble.train_loss[..m].to_vec(),
            },
        })
    }

    fn check_upto(&self, upto: Option<usize>) -> Result<usize> {
        let m = upto.unwrap_or(self.num_iterations());
        if m > self.num_iterations() {
            return Err(Error::Input(format!(
                "requested {} iterations but the model has {}",
                m,
                self.num_iterations()
            )));
        }
        Ok(m)
    }

    fn check_width(&self, features: &Matrix) -> Result<()> {
        if features.n_cols() != self.num_features() {
            return Err(Error::WidthMismatch { expected: self.num_features(), actual: features.n_cols() });
        }
        Ok(())
    }

    /// Structural checks for models read from disk.
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let d = self.num_outputs();
        if self.ensemble.f0.len() != d || self.ensemble.f0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("initial scores do not match the loss".into()));
        }
        if self.ensemble.train_loss.len() != self.ensemble.trees.len() {
            return Err(Error::Data("training-loss trace length differs from the number of iterations".into()));
        }
        for stage in &self.ensemble.trees {
            if stage.len() != d {
                return Err(Error::Data(format!("iteration with {} trees, expected {}", stage.len(), d)));
            }
            for tree in stage {
                tree.validate()?;
                tree.check_width(self.ensemble.num_features)?;
            }
        }
        Ok(())
    }
}

/// The constant scores minimizing the empirical risk.
pub fn init_scores(loss: &LossSpec, responses: &[f64]) -> Result<Vec<f64>> {
    loss.validate()?;
    if responses.is_empty() {
        return Err(Error::Empty("cannot initialize scores from zero responses".into()));
    }
    loss.check_responses(responses)?;
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    let clamp_log = |v: f64, what: &str| {
        if v > 0.0 {
            v.ln().max(-INIT_CLAMP)
        } else {
            warn!("{what} is zero; initial score clamped to -{INIT_CLAMP}");
            -INIT_CLAMP
        }
    };
    Ok(match loss.family {
        LossFamily::SquaredError => vec![mean],
        LossFamily::BinaryLogistic => {
            if mean == 0.0 || mean == 1.0 {
                warn!("all responses belong to one class; initial score clamped to +/-{INIT_CLAMP}");
            }
            let logit = (mean / (1.0 - mean)).ln();
            vec![logit.clamp(-INIT_CLAMP, INIT_CLAMP)]
        }
        LossFamily::MulticlassSoftmax => {
            let mut counts = vec![0usize; loss.num_outputs];
            for &y in responses {
                counts[y as usize] += 1;
            }
            counts.iter().map(|&c| clamp_log(c as f64 / n, "a class frequency")).collect()
        }
        LossFamily::Poisson => vec![clamp_log(mean, "the mean count")],
        LossFamily::Gamma => vec![mean.ln()],
        LossFamily::Tobit => vec![newton_constant(loss, responses, mean)],
        LossFamily::MeanScaleGaussian => {
            let var = responses.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
            let log_sd = if var > 0.0 {
                0.5 * var.ln()
            } else {
                warn!("responses have zero variance; initial log-sd clamped to -{INIT_CLAMP}");
                -INIT_CLAMP
            };
            vec![mean, log_sd]
        }
    })
}

/// Damped scalar Newton iteration on a one-output loss, started at `start`.
fn newton_constant(loss: &LossSpec, responses: &[f64], start: f64) -> f64 {
    let total = |f: f64| {
        let (mut l, mut g, mut h) = (0.0, 0.0, 0.0);
        let (mut gi, mut hi) = ([0.0], [0.0]);
        for &y in responses {
            l += loss.eval_into(y, &[f], &mut gi, &mut hi);
            g += gi[0];
            h += hi[0];
        }
        (l, g, h)
    };
    let n = responses.len() as f64;
    let mut f = start;
    let (mut l, mut g, mut h) = total(f);
    for _ in 0..200 {
        if (g / n).abs() < 1e-10 {
            break;
        }
        let step = -g / h.max(DEFAULT_HESSIAN_FLOOR);
        let mut t = 1.0;
        loop {
            let cand = f + t * step;
            let (lc, gc, hc) = total(cand);
            if lc <= l || t < 1e-12 {
                f = cand;
                (l, g, h) = (lc, gc, hc);
                break;
            }
            t *= 0.5;
        }
    }
    f
}

/// Regression targets and fit weights handed to the tree learner.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTargets {
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    /// Hybrid only: Newton targets and weights used to refit the leaf values.
    pub refit: Option<(Vec<f64>, Vec<f64>)>,
}

pub fn pseudo_targets(mode: UpdateMode, gradients: &[f64], hessians: &[f64], floor: f64) -> PseudoTargets {
    let gradient = || (gradients.iter().map(|g| -g).collect::<Vec<_>>(), vec![1.0; gradients.len()]);
    let newton = || {
        let weights: Vec<f64> = hessians.iter().map(|&h| h.max(floor)).collect();
        let targets = gradients.iter().zip(&weights).map(|(g, w)| -g / w).collect();
        (targets, weights)
    };
    match mode {
        UpdateMode::Gradient => {
            let (targets, weights) = gradient();
            PseudoTargets { targets, weights, refit: None }
        }
        UpdateMode::Newton => {
            let (targets, weights) = newton();
            PseudoTargets { targets, weights, refit: None }
        }
        UpdateMode::Hybrid => {
            let (targets, weights) = gradient();
            PseudoTargets { targets, weights, refit: Some(newton()) }
        }
    }
}

/// Fits a boosted ensemble.
pub fn fit(dataset: &Dataset, loss: &LossSpec, config: &FitConfig) -> Result<BoostedModel> {
    fit_with_observer(dataset, loss, config, |_, _| {})
}

/// [`fit`], calling `observe(m, trees)` with the unscaled trees of iteration
/// `m` (1-based) before they are added to the scores.
pub fn fit_with_observer(
    dataset: &Dataset,
    loss: &LossSpec,
    config: &FitConfig,
    mut observe: impl FnMut(usize, &[RegressionTree]),
) -> Result<BoostedModel> {
    loss.validate()?;
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("cannot fit to an empty dataset".into()));
    }
    let f0 = init_scores(loss, &dataset.response)?;
    let x = &dataset.features;
    let n = dataset.len();
    let d = loss.num_outputs;
    let order = ColumnOrder::new(x);

    let mut scores = vec![0.0; n * d];
    for row in scores.chunks_mut(d) {
        row.copy_from_slice(&f0);
    }
    let mut grad = vec![0.0; n * d];
    let mut hess = vec![0.0; n * d];
    evaluate(loss, &dataset.response, &scores, &mut grad, &mut hess);

    let mut trees = Vec::with_capacity(config.num_iterations);
    let mut train_loss = Vec::with_capacity(config.num_iterations);
    for m in 1..=config.num_iterations {
        let stage: Vec<RegressionTree> = (0..d)
            .into_par_iter()
            .map(|k| {
                let g: Vec<f64> = grad.iter().skip(k).step_by(d).copied().collect();
                let h: Vec<f64> = hess.iter().skip(k).step_by(d).copied().collect();
                fit_dimension(x, &order, &g, &h, config)
            })
            .collect::<Result<_>>()?;
        observe(m, &stage);

        let stage: Vec<RegressionTree> = stage
            .into_iter()
            .map(|mut t| {
                t.scale(config.learning_rate);
                t
            })
            .collect();
        for (i, row) in x.rows().enumerate() {
            for (s, tree) in scores[i * d..(i + 1) * d].iter_mut().zip(&stage) {
                *s += tree.predict_row(row);
            }
        }
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                iteration: m,
                detail: format!("score of row {} output {} is {}", pos / d, pos % d, scores[pos]),
            });
        }
        let total = evaluate(loss, &dataset.response, &scores, &mut grad, &mut hess);
        if !total.is_finite() {
            return Err(Error::NonFinite { iteration: m, detail: format!("training loss is {total}") });
        }
        train_loss.push(total);
        trees.push(stage);
    }

    Ok(BoostedModel {
        loss: loss.clone(),
        config: config.clone(),
        ensemble: Ensemble { num_features: x.n_cols(), f0, trees, train_loss },
    })
}

/// Loss sum at `scores`, refreshing the gradient and Hessian buffers.
fn evaluate(loss: &LossSpec, y: &[f64], scores: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
    let d = loss.num_outputs;
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let r = i * d..(i + 1) * d;
        total += loss.eval_into(yi, &scores[r.clone()], &mut grad[r.clone()], &mut hess[r]);
    }
    total
}

fn fit_dimension(
    x: &Matrix,
    order: &ColumnOrder,
    g: &[f64],
    h: &[f64],
    config: &FitConfig,
) -> Result<RegressionTree> {
    let pt = pseudo_targets(config.mode, g, h, config.hessian_floor);
    let mut tree = fit_tree_sorted(x, order, &pt.targets, &pt.weights, &config.tree)?;
    if let Some((targets, weights)) = pt.refit {
        refit_leaves(&mut tree, x, &targets, &weights);
    }
    Ok(tree)
}

/// Replaces each leaf value by the weighted mean of `targets` over its rows.
fn refit_leaves(tree: &mut RegressionTree, x: &Matrix, targets: &[f64], weights: &[f64]) {
    let mut sums = vec![(0.0, 0.0); tree.num_nodes()];
    for (i, row) in x.rows().enumerate() {
        let leaf = tree.leaf_index(row);
        sums[leaf].0 += weights[i] * targets[i];
        sums[leaf].1 += weights[i];
    }
    for leaf in tree.leaves().collect::<Vec<_>>() {
        let (s, w) = sums[leaf];
        if w > 0.0 {
            tree.set_leaf_value(leaf, s / w);
        }
    }
}
