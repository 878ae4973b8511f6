//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use triboost::losses::eval_loss;
use triboost::tree::Node;
use triboost::{LeafConstraint, LossFamily, LossSpec, Matrix, RegressionTree, TreeConfig};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// `|a - b| / max(|a|, |b|, 1)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// Finite differences

fn step(f: f64) -> f64 {
    1e-6 * f.abs().max(1.0)
}

/// Central difference of the loss value in score component `k`.
pub fn fd_gradient(spec: &LossSpec, y: f64, scores: &[f64], k: usize) -> f64 {
    let h = step(scores[k]);
    let mut up = scores.to_vec();
    let mut dn = scores.to_vec();
    up[k] += h;
    dn[k] -= h;
    let lu = eval_loss(spec, y, &up).unwrap().loss;
    let ld = eval_loss(spec, y, &dn).unwrap().loss;
    (lu - ld) / (up[k] - dn[k])
}

/// Central difference of the analytic gradient component `k` in component `k`.
pub fn fd_hessian(spec: &LossSpec, y: f64, scores: &[f64], k: usize) -> f64 {
    let h = step(scores[k]);
    let mut up = scores.to_vec();
    let mut dn = scores.to_vec();
    up[k] += h;
    dn[k] -= h;
    let gu = eval_loss(spec, y, &up).unwrap().gradient[k];
    let gd = eval_loss(spec, y, &dn).unwrap().gradient[k];
    (gu - gd) / (up[k] - dn[k])
}

/// A loss evaluation point; `near_threshold` marks uncensored Tobit responses
/// within 0.01 of a censoring threshold.
#[derive(Debug, Clone)]
pub struct LossPoint {
    pub spec: LossSpec,
    pub y: f64,
    pub scores: Vec<f64>,
    pub near_threshold: bool,
}

pub const FAMILIES: [LossFamily; 7] = [
    LossFamily::SquaredError,
    LossFamily::BinaryLogistic,
    LossFamily::MulticlassSoftmax,
    LossFamily::Poisson,
    LossFamily::Gamma,
    LossFamily::Tobit,
    LossFamily::MeanScaleGaussian,
];

/// `n` seeded random points in the support of `family`.
pub fn loss_points(family: LossFamily, n: usize, seed: u64) -> Vec<LossPoint> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let mut near_threshold = false;
            let (spec, y, scores) = match family {
                LossFamily::SquaredError => {
                    (LossSpec::squared_error(), r.random_range(-10.0..10.0), vec![r.random_range(-10.0..10.0)])
                }
                LossFamily::BinaryLogistic => (
                    LossSpec::binary_logistic(),
                    f64::from(r.random_range(0..2u8)),
                    vec![r.random_range(-8.0..8.0)],
                ),
                LossFamily::MulticlassSoftmax => {
                    let k = r.random_range(2..7usize);
                    let scores = (0..k).map(|_| r.random_range(-5.0..5.0)).collect();
                    (LossSpec::multiclass(k).unwrap(), r.random_range(0..k) as f64, scores)
                }
                LossFamily::Poisson => (
                    LossSpec::poisson(),
                    f64::from(r.random_range(0..20u8)),
                    vec![r.random_range(-3.0..3.0)],
                ),
                LossFamily::Gamma => (
                    LossSpec::gamma(r.random_range(0.5..20.0)).unwrap(),
                    r.random_range(0.05..10.0),
                    vec![r.random_range(-3.0..3.0)],
                ),
                LossFamily::Tobit => {
                    let lo = r.random_range(-2.0..0.0);
                    let hi = lo + r.random_range(0.5..4.0);
                    let sigma = r.random_range(0.3..3.0);
                    let y = match i % 4 {
                        0 => lo,
                        1 => hi,
                        2 => r.random_range(lo..hi),
                        _ => {
                            near_threshold = true;
                            let d = r.random_range(1e-4..0.01);
                            if r.random_bool(0.5) {
                                lo + d
                            } else {
                                hi - d
                            }
                        }
                    };
                    let f = r.random_range(lo - 3.0 * sigma..hi + 3.0 * sigma);
                    (LossSpec::tobit(sigma, lo, hi).unwrap(), y, vec![f])
                }
                LossFamily::MeanScaleGaussian => (
                    LossSpec::mean_scale(),
                    r.random_range(-5.0..5.0),
                    vec![r.random_range(-5.0..5.0), r.random_range(-2.0..2.0)],
                ),
            };
            LossPoint { spec, y, scores, near_threshold }
        })
        .collect()
}

/// Largest relative error of analytic gradient and Hessian against finite
/// differences over `points`, split into (regular, near-threshold).
pub fn worst_fd_errors(points: &[LossPoint]) -> (f64, f64) {
    let (mut regular, mut near) = (0.0f64, 0.0f64);
    for p in points {
        let t = eval_loss(&p.spec, p.y, &p.scores).unwrap();
        for k in 0..p.scores.len() {
            let eg = rel_err(t.gradient[k], fd_gradient(&p.spec, p.y, &p.scores, k));
            let eh = rel_err(t.hessian[k], fd_hessian(&p.spec, p.y, &p.scores, k));
            let e = eg.max(eh);
            if p.near_threshold {
                near = near.max(e);
            } else {
                regular = regular.max(e);
            }
        }
    }
    (regular, near)
}

// ---------------------------------------------------------------------------
// Exhaustive tree oracle

#[derive(Debug, Clone)]
pub enum OracleTree {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: Box<OracleTree>, right: Box<OracleTree> },
}

pub struct SmallProblem {
    pub x: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    pub config: TreeConfig,
}

impl SmallProblem {
    pub fn matrix(&self) -> Matrix {
        Matrix::from_rows(&self.x).unwrap()
    }
}

/// Random dataset with n <= 30, p <= 3, random weights, some repeated values.
pub fn small_problem(seed: u64) -> SmallProblem {
    let mut r = rng(seed);
    let n = r.random_range(2..=30usize);
    let p = r.random_range(1..=3usize);
    let levels = r.random_range(2..12u32);
    let discrete = r.random_bool(0.4);
    let x = (0..n)
        .map(|_| {
            (0..p)
                .map(|_| if discrete { f64::from(r.random_range(0..levels)) } else { r.random_range(-1.0..1.0) })
                .collect()
        })
        .collect();
    let targets = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let weights = (0..n).map(|_| r.random_range(0.05..3.0)).collect();
    let constraint = match r.random_range(0..3u8) {
        0 => LeafConstraint::RawCount,
        1 => LeafConstraint::EquivalentWeighted,
        _ => LeafConstraint::RawHessianSum,
    };
    let min = match constraint {
        LeafConstraint::RawCount => f64::from(r.random_range(1..5u8)),
        _ => r.random_range(0.0..4.0),
    };
    let config = TreeConfig::new(r.random_range(1..5usize), constraint, min);
    SmallProblem { x, targets, weights, config }
}

fn weighted_sse(rows: &[usize], t: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = rows.iter().map(|&i| w[i]).sum();
    let mean = rows.iter().map(|&i| w[i] * t[i]).sum::<f64>() / sw;
    let sse = rows.iter().map(|&i| w[i] * (t[i] - mean).powi(2)).sum();
    (mean, sse)
}

fn oracle_midpoint(a: f64, b: f64) -> f64 {
    let m = (a + b) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

fn feasible(config: &TreeConfig, rows: &[usize], mass: &[f64]) -> bool {
    match config.leaf_constraint {
        LeafConstraint::RawCount => rows.len() as f64 >= config.min_per_leaf,
        _ => rows.iter().map(|&i| mass[i]).sum::<f64>() >= config.min_per_leaf * (1.0 - 1e-9),
    }
}

/// Exhaustive search: every feature, every cut between distinct values, SSE
/// recomputed from scratch; near-equal reductions resolve to the lowest
/// (feature, threshold).
pub fn oracle_fit(problem: &SmallProblem) -> OracleTree {
    let n = problem.targets.len();
    let total: f64 = problem.weights.iter().sum();
    let mass: Vec<f64> = match problem.config.leaf_constraint {
        LeafConstraint::RawCount => vec![1.0; n],
        LeafConstraint::EquivalentWeighted => problem.weights.iter().map(|w| w * n as f64 / total).collect(),
        LeafConstraint::RawHessianSum => problem.weights.clone(),
    };
    let rows: Vec<usize> = (0..n).collect();
    oracle_node(problem, &mass, &rows, 0)
}

fn oracle_node(pb: &SmallProblem, mass: &[f64], rows: &[usize], depth: usize) -> OracleTree {
    let (mean, sse) = weighted_sse(rows, &pb.targets, &pb.weights);
    if depth >= pb.config.max_depth || rows.len() < 2 || sse <= 0.0 {
        return OracleTree::Leaf(mean);
    }
    let p = pb.x[0].len();
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    for f in 0..p {
        let mut values: Vec<f64> = rows.iter().map(|&i| pb.x[i][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let thr = oracle_midpoint(pair[0], pair[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| pb.x[i][f] <= thr);
            if !feasible(&pb.config, &l, mass) || !feasible(&pb.config, &r, mass) {
                continue;
            }
            let reduction = sse - weighted_sse(&l, &pb.targets, &pb.weights).1 - weighted_sse(&r, &pb.targets, &pb.weights).1;
            candidates.push((f, thr, reduction));
        }
    }
    let best = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    if candidates.is_empty() || best <= 1e-10 * sse {
        return OracleTree::Leaf(mean);
    }
    let &(feature, threshold, _) = candidates
        .iter()
        .find(|c| best - c.2 <= 1e-12 * sse)
        .expect("the maximum is a candidate");
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| pb.x[i][feature] <= threshold);
    OracleTree::Split {
        feature,
        threshold,
        left: Box::new(oracle_node(pb, mass, &l, depth + 1)),
        right: Box::new(oracle_node(pb, mass, &r, depth + 1)),
    }
}

/// Describes the first structural or numerical difference, if any.
pub fn compare_trees(tree: &RegressionTree, oracle: &OracleTree) -> Result<(), String> {
    fn walk(tree: &RegressionTree, i: usize, o: &OracleTree, path: &str) -> Result<(), String> {
        match (tree.node(i), o) {
            (Node::Leaf { value }, OracleTree::Leaf(v)) => {
                if rel_err(value, *v) > 1e-12 {
                    return Err(format!("{path}: leaf {value} vs oracle {v}"));
                }
                Ok(())
            }
            (Node::Split { feature, threshold, left, right, gain }, OracleTree::Split { feature: f, threshold: t, left: ol, right: or }) => {
                if feature != *f || threshold != *t {
                    return Err(format!("{path}: split ({feature}, {threshold}) vs oracle ({f}, {t})"));
                }
                if !(gain > 0.0) {
                    return Err(format!("{path}: non-positive gain {gain}"));
                }
                walk(tree, left, ol, &format!("{path}L"))?;
                walk(tree, right, or, &format!("{path}R"))
            }
            (a, b) => Err(format!("{path}: {a:?} vs oracle {b:?}")),
        }
    }
    walk(tree, 0, oracle, "root")
}
