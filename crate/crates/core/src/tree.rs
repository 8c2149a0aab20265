//! CART trees: greedy binary splits on midpoints, left branch takes `x <= threshold`.
//!
//! Regression trees minimize the sum of squared errors (SSE). The classification
//! mode exists for the forest's strength/correlation diagnostics; its labels are
//! bin indices stored as `f64` and its impurity is the misclassification count.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const TREE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Candidate features drawn per node.
    pub m_try: usize,
    pub seed: u64,
}

impl TreeConfig {
    /// Standalone default: every feature is a candidate at every node.
    pub fn full(n_features: usize) -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            m_try: n_features.max(1),
            seed: 0,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        if self.m_try < 1 || self.m_try > n_features {
            return Err(Error::invalid(format!(
                "m_try must lie in 1..={n_features}, got {}",
                self.m_try
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TreeMode {
    Regression,
    /// Targets are class labels `0..n_classes`.
    Classification {
        n_classes: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub threshold: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.feature] <= self.threshold
    }
}

/// `impurity` is the node SSE in regression mode and the misclassified count in
/// classification mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Node {
    Leaf {
        value: f64,
        count: usize,
        impurity: f64,
    },
    Split {
        rule: SplitRule,
        count: usize,
        impurity: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn count(&self) -> usize {
        match self {
            Node::Leaf { count, .. } | Node::Split { count, .. } => *count,
        }
    }

    pub fn impurity(&self) -> f64 {
        match self {
            Node::Leaf { impurity, .. } | Node::Split { impurity, .. } => *impurity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub mode: TreeMode,
    pub n_features: usize,
    pub root: Node,
}

/// Best split found at a node together with its impurity reduction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub rule: SplitRule,
    pub gain: f64,
}

/// Gains closer than this fraction of the parent impurity count as ties.
pub const TIE_TOLERANCE: f64 = 1e-10;

fn sse(y: &[f64], rows: &[usize]) -> (f64, f64) {
    let first = y[rows[0]];
    if rows.iter().all(|&i| y[i] == first) {
        return (first, 0.0);
    }
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
    let sse = rows.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    (mean, sse)
}

/// Returns (modal class, misclassified count); ties go to the lower class.
fn mode_of(y: &[f64], rows: &[usize], n_classes: usize) -> (f64, f64) {
    let mut counts = vec![0usize; n_classes];
    for &i in rows {
        counts[y[i] as usize] += 1;
    }
    let (best, &c) =
        counts.iter().enumerate().fold(
            (0, &0),
            |acc, (k, c)| if *c > *acc.1 { (k, c) } else { acc },
        );
    (best as f64, (rows.len() - c) as f64)
}

fn node_summary(mode: TreeMode, y: &[f64], rows: &[usize]) -> (f64, f64) {
    match mode {
        TreeMode::Regression => sse(y, rows),
        TreeMode::Classification { n_classes } => mode_of(y, rows, n_classes),
    }
}

/// Exhaustive split search over `candidate_features` (ascending).
///
/// Thresholds are midpoints between adjacent distinct values; both children must
/// keep at least `min_samples_leaf` rows. Returns `None` when no split lowers
/// impurity. Ties resolve to the lowest feature, then the lowest threshold.
pub fn best_split(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    candidate_features: &[usize],
    mode: TreeMode,
    min_samples_leaf: usize,
) -> Option<SplitCandidate> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let (center, parent) = node_summary(mode, y, rows);
    if parent <= 0.0 {
        return None;
    }
    let tol = TIE_TOLERANCE * parent;
    let min_leaf = min_samples_leaf.max(1);

    let mut best: Option<SplitCandidate> = None;
    let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut left_counts = Vec::new();
    let mut right_counts = Vec::new();

    for &f in candidate_features {
        sorted.clear();
        sorted.extend(rows.iter().map(|&i| (x.get(i, f), y[i])));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted[0].0 == sorted[n - 1].0 {
            continue;
        }

        match mode {
            TreeMode::Regression => {
                // centred sums limit cancellation in sumsq - sum^2/n
                let (tot_s, tot_q) = sorted.iter().fold((0.0, 0.0), |(s, q), &(_, v)| {
                    let d = v - center;
                    (s + d, q + d * d)
                });
                let parent_sse = tot_q - tot_s * tot_s / n as f64;
                let (mut ls, mut lq) = (0.0, 0.0);
                for k in 0..n - 1 {
                    let d = sorted[k].1 - center;
                    ls += d;
                    lq += d * d;
                    let nl = k + 1;
                    let nr = n - nl;
                    if sorted[k].0 == sorted[k + 1].0 || nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    let rs = tot_s - ls;
                    let rq = tot_q - lq;
                    let child = (lq - ls * ls / nl as f64) + (rq - rs * rs / nr as f64);
                    let gain = parent_sse - child;
                    consider(&mut best, f, sorted[k].0, sorted[k + 1].0, gain, tol);
                }
            }
            TreeMode::Classification { n_classes } => {
                left_counts.clear();
                left_counts.resize(n_classes, 0usize);
                right_counts.clear();
                right_counts.resize(n_classes, 0usize);
                for &(_, v) in &sorted {
                    right_counts[v as usize] += 1;
                }
                for k in 0..n - 1 {
                    let c = sorted[k].1 as usize;
                    left_counts[c] += 1;
                    right_counts[c] -= 1;
                    let nl = k + 1;
                    let nr = n - nl;
                    if sorted[k].0 == sorted[k + 1].0 || nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    let mis_l = nl - left_counts.iter().max().copied().unwrap_or(0);
                    let mis_r = nr - right_counts.iter().max().copied().unwrap_or(0);
                    let gain = parent - (mis_l + mis_r) as f64;
                    consider(&mut best, f, sorted[k].0, sorted[k + 1].0, gain, tol);
                }
            }
        }
    }
    best
}

#[inline]
fn consider(best: &mut Option<SplitCandidate>, f: usize, lo: f64, hi: f64, gain: f64, tol: f64) {
    if gain <= tol {
        return;
    }
    let beats = match best {
        None => true,
        Some(b) => gain > b.gain + tol,
    };
    if beats {
        *best = Some(SplitCandidate {
            rule: SplitRule {
                feature: f,
                threshold: midpoint(lo, hi),
            },
            gain,
        });
    }
}

/// Midpoint that always lies strictly between two distinct finite values.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a [f64],
    config: &'a TreeConfig,
    mode: TreeMode,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> Node {
        let (value, impurity) = node_summary(self.mode, self.y, &rows);
        let count = rows.len();
        let leaf = Node::Leaf {
            value,
            count,
            impurity,
        };
        if impurity <= 0.0
            || count < self.config.min_samples_split
            || count < 2 * self.config.min_samples_leaf
            || self.config.max_depth.is_some_and(|d| depth >= d)
        {
            return leaf;
        }

        let features = self.draw_features(&rows);
        let Some(cand) = best_split(
            self.x,
            self.y,
            &rows,
            &features,
            self.mode,
            self.config.min_samples_leaf,
        ) else {
            return leaf;
        };

        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| cand.rule.goes_left(self.x.row(i)));
        let left = self.build(left, depth + 1);
        let right = self.build(right, depth + 1);
        Node::Split {
            rule: cand.rule,
            count,
            impurity,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Draws up to `m_try` features among those that vary inside the node.
    fn draw_features(&mut self, rows: &[usize]) -> Vec<usize> {
        let varying: Vec<usize> = (0..self.x.n_cols())
            .filter(|&f| {
                let first = self.x.get(rows[0], f);
                rows.iter().any(|&i| self.x.get(i, f) != first)
            })
            .collect();
        if varying.len() <= self.config.m_try {
            return varying;
        }
        let mut picked: Vec<usize> = index::sample(self.rng, varying.len(), self.config.m_try)
            .into_iter()
            .map(|k| varying[k])
            .collect();
        picked.sort_unstable();
        picked
    }
}

/// Grows a tree on the rows listed in `rows` (repeats allowed, as in a bootstrap).
pub fn fit_tree_on<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: Vec<usize>,
    config: &TreeConfig,
    mode: TreeMode,
    rng: &mut R,
) -> Result<RegressionTree> {
    if rows.is_empty() || x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch(x.n_rows(), y.len()));
    }
    config.validate(x.n_cols())?;
    if rows.len() < config.min_samples_leaf {
        return Err(Error::invalid(format!(
            "{} training rows cannot fill a leaf of min_samples_leaf {}",
            rows.len(),
            config.min_samples_leaf
        )));
    }
    if let TreeMode::Classification { n_classes } = mode {
        if let Some(bad) = y
            .iter()
            .find(|&&v| !(v >= 0.0 && v.fract() == 0.0 && (v as usize) < n_classes))
        {
            return Err(Error::invalid(format!(
                "class label {bad} outside 0..{n_classes}"
            )));
        }
    }
    let root = Builder {
        x,
        y,
        config,
        mode,
        rng,
    }
    .build(rows, 0);
    Ok(RegressionTree {
        mode,
        n_features: x.n_cols(),
        root,
    })
}

pub fn fit_tree<R: Rng>(
    x: &Matrix,
    y: &[f64],
    config: &TreeConfig,
    rng: &mut R,
) -> Result<RegressionTree> {
    fit_tree_on(
        x,
        y,
        (0..x.n_rows()).collect(),
        config,
        TreeMode::Regression,
        rng,
    )
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Arity {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    rule, left, right, ..
                } => node = if rule.goes_left(x) { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            match n {
                Node::Leaf { .. } => out.push(n),
                Node::Split { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(left).max(go(right)),
            }
        }
        go(&self.root)
    }

    /// Adds each split's impurity reduction to `acc[feature]`.
    pub fn accumulate_importance(&self, acc: &mut [f64]) {
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            if let Node::Split {
                rule,
                impurity,
                left,
                right,
                ..
            } = n
            {
                acc[rule.feature] += (impurity - left.impurity() - right.impurity()).max(0.0);
                stack.push(left);
                stack.push(right);
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            version: u32,
            #[serde(flatten)]
            tree: &'a RegressionTree,
        }
        Ok(serde_json::to_string(&Doc {
            version: TREE_FORMAT_VERSION,
            tree: self,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            version: u32,
            #[serde(flatten)]
            tree: RegressionTree,
        }
        let doc: Doc = crate::persist::from_json_str(s)?;
        if doc.version != TREE_FORMAT_VERSION {
            return Err(Error::Version(doc.version));
        }
        Ok(doc.tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(xs: &[f64]) -> Matrix {
        Matrix::new(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn constant_targets_have_no_split() {
        let x = col(&[0.0, 1.0, 2.0]);
        let y = [5.0; 3];
        assert!(best_split(&x, &y, &[0, 1, 2], &[0], TreeMode::Regression, 1).is_none());
    }

    #[test]
    fn step_split_at_midpoint() {
        let x = col(&[0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 1.0, 1.0];
        let c = best_split(&x, &y, &[0, 1, 2, 3], &[0], TreeMode::Regression, 1).unwrap();
        assert_eq!(
            c.rule,
            SplitRule {
                feature: 0,
                threshold: 1.5
            }
        );
        assert!((c.gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_gain_prefers_lower_feature() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let y = [0.0, 0.0, 1.0, 1.0];
        let c = best_split(&x, &y, &[0, 1, 2, 3], &[0, 1], TreeMode::Regression, 1).unwrap();
        assert_eq!(c.rule.feature, 0);
    }

    #[test]
    fn min_leaf_restricts_thresholds() {
        let x = col(&[0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 1.0, 1.0, 1.0];
        let c = best_split(&x, &y, &[0, 1, 2, 3], &[0], TreeMode::Regression, 2).unwrap();
        assert_eq!(c.rule.threshold, 1.5);
    }

    #[test]
    fn single_sample_is_a_leaf() {
        let x = col(&[4.0]);
        let t = fit_tree(
            &x,
            &[33.17],
            &TreeConfig::full(1),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(
            t.root,
            Node::Leaf {
                value: 33.17,
                count: 1,
                impurity: 0.0
            }
        );
        assert_eq!(t.predict(&[100.0]).unwrap(), 33.17);
    }

    #[test]
    fn boundary_routes_left() {
        let x = col(&[0.0, 1.0, 2.0, 3.0]);
        let t = fit_tree(
            &x,
            &[0.0, 0.0, 1.0, 1.0],
            &TreeConfig::full(1),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(t.predict(&[1.5]).unwrap(), 0.0);
        assert_eq!(t.predict(&[2.0]).unwrap(), 1.0);
        assert!(matches!(t.predict(&[1.0, 2.0]), Err(Error::Arity { .. })));
    }

    #[test]
    fn duplicate_rows_become_leaf_mean() {
        let x = col(&[1.0, 1.0, 1.0]);
        let t = fit_tree(
            &x,
            &[1.0, 2.0, 6.0],
            &TreeConfig::full(1),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        match t.root {
            Node::Leaf { value, count, .. } => {
                assert_eq!(value, 3.0);
                assert_eq!(count, 3);
            }
            _ => panic!("expected leaf"),
        }
    }

    #[test]
    fn max_depth_limits_growth() {
        let x = col(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = [0.0, 1.0, 4.0, 9.0, 16.0, 25.0];
        let mut cfg = TreeConfig::full(1);
        cfg.max_depth = Some(1);
        let t = fit_tree(&x, &y, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn classification_mode_majority() {
        let x = col(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = [0.0, 0.0, 1.0, 1.0, 1.0];
        let t = fit_tree_on(
            &x,
            &y,
            (0..5).collect(),
            &TreeConfig::full(1),
            TreeMode::Classification { n_classes: 2 },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(t.predict(&[0.5]).unwrap(), 0.0);
        assert_eq!(t.predict(&[3.5]).unwrap(), 1.0);
    }

    #[test]
    fn classification_rejects_bad_labels() {
        let x = col(&[0.0, 1.0]);
        let r = fit_tree_on(
            &x,
            &[0.0, 2.0],
            vec![0, 1],
            &TreeConfig::full(1),
            TreeMode::Classification { n_classes: 2 },
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TreeConfig::full(7);
        assert!(c.validate(7).is_ok());
        c.m_try = 8;
        assert!(c.validate(7).is_err());
        c.m_try = 2;
        c.min_samples_split = 1;
        assert!(c.validate(7).is_err());
        c.min_samples_split = 2;
        c.min_samples_leaf = 0;
        assert!(c.validate(7).is_err());
    }

    #[test]
    fn empty_training_set() {
        let x = Matrix::new(0, 1, vec![]).unwrap();
        assert!(matches!(
            fit_tree(
                &x,
                &[],
                &TreeConfig::full(1),
                &mut ChaCha8Rng::seed_from_u64(0)
            ),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn hand_built_depth_one_tree() {
        let t = RegressionTree {
            mode: TreeMode::Regression,
            n_features: 1,
            root: Node::Split {
                rule: SplitRule {
                    feature: 0,
                    threshold: 1.5,
                },
                count: 2,
                impurity: 0.5,
                left: Box::new(Node::Leaf {
                    value: 0.0,
                    count: 1,
                    impurity: 0.0,
                }),
                right: Box::new(Node::Leaf {
                    value: 1.0,
                    count: 1,
                    impurity: 0.0,
                }),
            },
        };
        assert_eq!(t.predict(&[2.0]).unwrap(), 1.0);
        let back = RegressionTree::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
