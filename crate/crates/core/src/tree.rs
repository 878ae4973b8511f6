//! Exact-greedy CART regression trees fitted by weighted least squares.
//!
//! A tree is stored as flat node arrays. Node 0 is the root; a node is a leaf
//! iff its `left` child index is 0. Rows go left iff `x[feature] <= threshold`.

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

/// Relative slack on weight-sum leaf constraints, absorbing summation rounding.
const MASS_SLACK: f64 = 1e-9;

/// Splits whose gain is below this fraction of the parent's weighted SSE are
/// treated as zero-gain (rounding noise in the prefix-sum gain formula).
const GAIN_REL_TOL: f64 = 1e-10;

/// A candidate must beat the best so far by this fraction of the parent SSE;
/// smaller differences are rounding ties and keep the earlier candidate.
const TIE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafConstraint {
    /// At least `S` rows per leaf.
    RawCount,
    /// At least `S` equivalent weighted rows per leaf, weights normalized to sum to n.
    EquivalentWeighted,
    /// Raw sum of fit weights (Hessians) per leaf at least `S`.
    RawHessianSum,
}

impl LeafConstraint {
    pub fn name(self) -> &'static str {
        match self {
            LeafConstraint::RawCount => "count",
            LeafConstraint::EquivalentWeighted => "equivalent",
            LeafConstraint::RawHessianSum => "hessian-sum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Root has depth 0; leaves sit at depth <= `max_depth`.
    pub max_depth: usize,
    pub leaf_constraint: LeafConstraint,
    /// The constant `S`.
    pub min_per_leaf: f64,
}

impl TreeConfig {
    pub fn new(max_depth: usize, leaf_constraint: LeafConstraint, min_per_leaf: f64) -> Self {
        TreeConfig { max_depth, leaf_constraint, min_per_leaf }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.min_per_leaf >= 0.0 && self.min_per_leaf.is_finite()) {
            return Err(Error::Config(format!(
                "min_per_leaf must be a nonnegative number, got {}",
                self.min_per_leaf
            )));
        }
        Ok(())
    }
}

/// One node of a fitted tree, as seen from outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, gain: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    num_features: usize,
    feature: Vec<u32>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    /// Leaf value for leaves; weighted node mean for internal nodes.
    value: Vec<f64>,
    gain: Vec<f64>,
}

impl RegressionTree {
    /// A single-leaf tree.
    pub fn constant(value: f64, num_features: usize) -> Self {
        let mut tree = RegressionTree::empty(num_features);
        tree.push_leaf(value);
        tree
    }

    fn empty(num_features: usize) -> Self {
        RegressionTree {
            num_features,
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
            gain: Vec::new(),
        }
    }

    fn push_leaf(&mut self, value: f64) -> usize {
        self.feature.push(0);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.gain.push(0.0);
        self.value.len() - 1
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_nodes(&self) -> usize {
        self.value.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.left[node] == 0
    }

    pub fn node(&self, i: usize) -> Node {
        if self.is_leaf(i) {
            Node::Leaf { value: self.value[i] }
        } else {
            Node::Split {
                feature: self.feature[i] as usize,
                threshold: self.threshold[i],
                gain: self.gain[i],
                left: self.left[i] as usize,
                right: self.right[i] as usize,
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes()).filter(|&i| self.is_leaf(i))
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// Depth of the deepest leaf (0 for a single leaf).
    pub fn depth(&self) -> usize {
        fn walk(t: &RegressionTree, i: usize) -> usize {
            if t.is_leaf(i) {
                0
            } else {
                1 + walk(t, t.left[i] as usize).max(walk(t, t.right[i] as usize))
            }
        }
        walk(self, 0)
    }

    pub fn leaf_value(&self, leaf: usize) -> f64 {
        self.value[leaf]
    }

    pub(crate) fn set_leaf_value(&mut self, leaf: usize, value: f64) {
        debug_assert!(self.is_leaf(leaf));
        self.value[leaf] = value;
    }

    /// Multiplies every stored value by `factor`.
    pub(crate) fn scale(&mut self, factor: f64) {
        if factor != 1.0 {
            for v in &mut self.value {
                *v *= factor;
            }
        }
    }

    /// Index of the leaf `row` is routed to.
    #[inline]
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0usize;
        while self.left[i] != 0 {
            i = if row[self.feature[i] as usize] <= self.threshold[i] {
                self.left[i] as usize
            } else {
                self.right[i] as usize
            };
        }
        i
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.value[self.leaf_index(row)]
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        self.check_width(features.n_cols())?;
        Ok(features.rows().map(|r| self.predict_row(r)).collect())
    }

    pub(crate) fn check_width(&self, width: usize) -> Result<()> {
        if width != self.num_features {
            return Err(Error::WidthMismatch { expected: self.num_features, actual: width });
        }
        Ok(())
    }

    /// Structural checks for trees read from disk.
    pub fn validate(&self) -> Result<()> {
        let n = self.value.len();
        let lens = [self.feature.len(), self.threshold.len(), self.left.len(), self.right.len(), self.gain.len()];
        if n == 0 || lens.iter().any(|&l| l != n) {
            return Err(Error::Data("tree node arrays are empty or of unequal length".into()));
        }
        for i in 0..n {
            if self.left[i] == 0 {
                if self.right[i] != 0 {
                    return Err(Error::Data(format!("node {i}: leaf with a right child")));
                }
                continue;
            }
            let (l, r) = (self.left[i] as usize, self.right[i] as usize);
            // children are allocated after their parent
            if l <= i || r <= i || l >= n || r >= n {
                return Err(Error::Data(format!("node {i}: child index out of range")));
            }
            if self.feature[i] as usize >= self.num_features {
                return Err(Error::Data(format!("node {i}: feature index out of range")));
            }
        }
        Ok(())
    }
}

/// Per-column row orderings, ascending by value then row index.
///
/// Built once per feature matrix and shared by every tree fitted on it.
#[derive(Debug, Clone)]
pub struct ColumnOrder {
    order: Vec<Vec<u32>>,
    /// Column-major copy of the features.
    columns: Vec<f64>,
}

impl ColumnOrder {
    pub fn new(features: &Matrix) -> Self {
        let n = features.n_rows();
        let order = (0..features.n_cols())
            .map(|j| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    features
                        .get(a as usize, j)
                        .total_cmp(&features.get(b as usize, j))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        let mut columns = vec![0.0; n * features.n_cols()];
        for (i, row) in features.rows().enumerate() {
            for (j, v) in row.iter().enumerate() {
                columns[j * n + i] = *v;
            }
        }
        ColumnOrder { order, columns }
    }
}

/// Renormalizes weights to sum to their count: `n * w_i / sum(w)`.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    let n = weights.len() as f64;
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Input(format!("cannot normalize weights with sum {total}")));
    }
    let mut out: Vec<f64> = weights.iter().map(|&w| w * (n / total)).collect();
    // second pass absorbs the rounding of the first
    let total2: f64 = out.iter().sum();
    if total2 != n {
        let f = n / total2;
        out.iter_mut().for_each(|w| *w *= f);
    }
    Ok(out)
}

/// `sum(w * t) / sum(w)`.
pub fn leaf_value(targets: &[f64], weights: &[f64]) -> Result<f64> {
    if targets.len() != weights.len() {
        return Err(Error::Input("targets and weights differ in length".into()));
    }
    let (mut s, mut w) = (0.0, 0.0);
    for (&t, &wi) in targets.iter().zip(weights) {
        s += wi * t;
        w += wi;
    }
    if !(w > 0.0) {
        return Err(Error::Input(format!("leaf weight sum must be positive, got {w}")));
    }
    Ok(s / w)
}

/// Whether a leaf with the given constraint weights and row count is admissible.
///
/// `leaf_weights` are the normalized weights for `EquivalentWeighted` and the
/// raw weights for `RawHessianSum`; `RawCount` only looks at `leaf_count`.
pub fn constraint_satisfied(config: &TreeConfig, leaf_weights: &[f64], leaf_count: usize) -> bool {
    let mass: f64 = leaf_weights.iter().sum();
    admissible(config.leaf_constraint, config.min_per_leaf, mass, leaf_count)
}

#[inline]
fn admissible(kind: LeafConstraint, min: f64, mass: f64, count: usize) -> bool {
    match kind {
        LeafConstraint::RawCount => count as f64 >= min,
        LeafConstraint::EquivalentWeighted | LeafConstraint::RawHessianSum => mass >= min * (1.0 - MASS_SLACK),
    }
}

/// Fits one tree to `targets` with fit weights `weights`.
pub fn fit_tree(features: &Matrix, targets: &[f64], weights: &[f64], config: &TreeConfig) -> Result<RegressionTree> {
    let order = ColumnOrder::new(features);
    fit_tree_sorted(features, &order, targets, weights, config)
}

/// [`fit_tree`] with a precomputed column ordering of `features`.
pub fn fit_tree_sorted(
    features: &Matrix,
    order: &ColumnOrder,
    targets: &[f64],
    weights: &[f64],
    config: &TreeConfig,
) -> Result<RegressionTree> {
    config.validate()?;
    let n = features.n_rows();
    if n == 0 {
        return Err(Error::Empty("cannot fit a tree to zero rows".into()));
    }
    if targets.len() != n || weights.len() != n {
        return Err(Error::Input(format!(
            "{} rows, {} targets, {} weights",
            n,
            targets.len(),
            weights.len()
        )));
    }
    if order.order.len() != features.n_cols()
        || order.order.iter().any(|o| o.len() != n)
        || order.columns.len() != n * features.n_cols()
    {
        return Err(Error::Input("column ordering does not match the feature matrix".into()));
    }
    if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
        return Err(Error::Input(format!("non-finite target {t}")));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Input("weights must be finite and nonnegative".into()));
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::Input("at least one weight must be positive".into()));
    }

    let mass = match config.leaf_constraint {
        LeafConstraint::RawCount => vec![1.0; n],
        LeafConstraint::EquivalentWeighted => normalize_weights(weights)?,
        LeafConstraint::RawHessianSum => weights.to_vec(),
    };
    let stats = weights.iter().zip(&mass).map(|(&w, &m)| RowStats { weight: w, centered: 0.0, mass: m }).collect();
    let mut grower = Grower {
        columns: &order.columns,
        n,
        targets,
        stats,
        config,
        go_left: vec![false; n],
        rows: (0..n as u32).collect(),
        cols: order.order.clone(),
        scratch: Vec::with_capacity(n),
        tree: RegressionTree::empty(features.n_cols()),
    };
    grower.grow(0, n, 0);
    Ok(grower.tree)
}

#[derive(Clone, Copy)]
struct RowStats {
    weight: f64,
    /// Scratch: w_i * (t_i - node mean).
    centered: f64,
    /// Contribution to the leaf constraint.
    mass: f64,
}

struct Grower<'a> {
    columns: &'a [f64],
    n: usize,
    targets: &'a [f64],
    stats: Vec<RowStats>,
    config: &'a TreeConfig,
    go_left: Vec<bool>,
    /// Row ids; each node owns a contiguous range, ascending.
    rows: Vec<u32>,
    /// Per feature, row ids sorted by value; same node ranges as `rows`.
    cols: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    tree: RegressionTree,
}

/// Stable in-place partition of `segment` by `go_left`; returns the left size.
fn partition_stable(segment: &mut [u32], go_left: &[bool], scratch: &mut Vec<u32>) -> usize {
    scratch.clear();
    let mut nl = 0;
    for i in 0..segment.len() {
        let r = segment[i];
        if go_left[r as usize] {
            segment[nl] = r;
            nl += 1;
        } else {
            scratch.push(r);
        }
    }
    segment[nl..].copy_from_slice(scratch);
    nl
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    /// Grows the subtree over `rows[lo..hi]` and returns its node index.
    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let (mut s, mut w) = (0.0, 0.0);
        for &r in &self.rows[lo..hi] {
            let r = r as usize;
            s += self.stats[r].weight * self.targets[r];
            w += self.stats[r].weight;
        }
        let value = s / w;
        let node = self.tree.push_leaf(value);
        if depth >= self.config.max_depth || hi - lo < 2 {
            return node;
        }
        let Some(best) = self.best_split(lo, hi, value, w) else {
            return node;
        };

        let column = &self.columns[best.feature * self.n..(best.feature + 1) * self.n];
        for &r in &self.rows[lo..hi] {
            let r = r as usize;
            self.go_left[r] = column[r] <= best.threshold;
        }
        let mid = lo + partition_stable(&mut self.rows[lo..hi], &self.go_left, &mut self.scratch);
        for col in &mut self.cols {
            partition_stable(&mut col[lo..hi], &self.go_left, &mut self.scratch);
        }
        let left = self.grow(lo, mid, depth + 1);
        let right = self.grow(mid, hi, depth + 1);
        self.tree.feature[node] = best.feature as u32;
        self.tree.threshold[node] = best.threshold;
        self.tree.gain[node] = best.gain;
        self.tree.left[node] = left as u32;
        self.tree.right[node] = right as u32;
        node
    }

    fn best_split(&mut self, lo: usize, hi: usize, mean: f64, w_total: f64) -> Option<BestSplit> {
        let mut sse = 0.0;
        let mut c_total = 0.0;
        let mut mass_total = 0.0;
        for &r in &self.rows[lo..hi] {
            let r = r as usize;
            let st = &mut self.stats[r];
            let d = self.targets[r] - mean;
            let c = st.weight * d;
            st.centered = c;
            c_total += c;
            sse += c * d;
            mass_total += st.mass;
        }
        if !(sse > 0.0) {
            return None;
        }
        let kind = self.config.leaf_constraint;
        let min = self.config.min_per_leaf;
        let k = hi - lo;
        let parent_term = c_total * c_total / w_total;

        let tie = TIE_REL_TOL * sse;
        let (mut best_gain, mut best_feature, mut best_pair) = (f64::NEG_INFINITY, usize::MAX, (0.0, 0.0));
        for (feature, col) in self.cols.iter().enumerate() {
            let col = &col[lo..hi];
            let column = &self.columns[feature * self.n..(feature + 1) * self.n];
            let (mut wl, mut cl, mut ml) = (0.0, 0.0, 0.0);
            let mut b = column[col[0] as usize];
            for (i, pair) in col.windows(2).enumerate() {
                let st = self.stats[pair[0] as usize];
                wl += st.weight;
                cl += st.centered;
                ml += st.mass;
                let a = b;
                b = column[pair[1] as usize];
                if a >= b {
                    continue;
                }
                let wr = w_total - wl;
                let nl = i + 1;
                if !(wl > 0.0 && wr > 0.0)
                    || !admissible(kind, min, ml, nl)
                    || !admissible(kind, min, mass_total - ml, k - nl)
                {
                    continue;
                }
                let cr = c_total - cl;
                let gain = cl * cl / wl + cr * cr / wr - parent_term;
                if gain - best_gain > tie {
                    best_gain = gain;
                    best_feature = feature;
                    best_pair = (a, b);
                }
            }
        }
        (best_feature != usize::MAX && best_gain > GAIN_REL_TOL * sse).then(|| BestSplit {
            feature: best_feature,
            threshold: midpoint(best_pair.0, best_pair.1),
            gain: best_gain,
        })
    }
}

/// Threshold between consecutive distinct sorted values `a < b`.
///
/// Falls back to `a` when the midpoint rounds up to `b`, so the routing rule
/// reproduces the partition.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = 0.5 * a + 0.5 * b;
    if m >= b || m < a {
        a
    } else {
        m
    }
}
