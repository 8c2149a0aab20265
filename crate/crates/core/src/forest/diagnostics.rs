//! Margin, strength and correlation estimates for a forest of classifiers.
//!
//! Regression targets are discretized into equal-frequency bins and a
//! classification-mode forest is grown on the bin labels. The regression model
//! itself never sees the bins.

use serde::{Deserialize, Serialize};

use super::{fit_forest_mode, Forest, ForestConfig};
use crate::data::quantile_sorted;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tree::TreeMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub labels: Vec<usize>,
    /// `k + 1` edges from the minimum to the maximum target.
    pub edges: Vec<f64>,
}

impl Binning {
    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin of `v`: values equal to an interior edge fall in the lower bin.
    pub fn label(&self, v: f64) -> usize {
        self.edges[1..self.edges.len() - 1]
            .iter()
            .filter(|&&e| v > e)
            .count()
    }
}

/// Equal-frequency discretization into `k` bins.
pub fn bin_targets(targets: &[f64], k: usize) -> Result<Binning> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {k}")));
    }
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sorted = targets.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::Degenerate("targets are constant; cannot bin".into()));
    }
    let edges: Vec<f64> = (0..=k)
        .map(|j| quantile_sorted(&sorted, j as f64 / k as f64))
        .collect();
    let mut b = Binning {
        labels: Vec::new(),
        edges,
    };
    b.labels = targets.iter().map(|&v| b.label(v)).collect();
    Ok(b)
}

pub fn fit_classification_forest(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    config: &ForestConfig,
) -> Result<Forest> {
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    fit_forest_mode(x, &y, config, TreeMode::Classification { n_classes })
}

fn n_classes(f: &Forest) -> Result<usize> {
    match f.mode {
        TreeMode::Classification { n_classes } => Ok(n_classes),
        TreeMode::Regression => Err(Error::invalid(
            "margin diagnostics need a forest trained on binned labels",
        )),
    }
}

fn vote_shares(f: &Forest, x: &[f64], n_classes: usize) -> Result<Vec<f64>> {
    let mut votes = vec![0.0; n_classes];
    for p in f.tree_predictions(x)? {
        votes[p as usize] += 1.0;
    }
    let n = f.trees.len() as f64;
    votes.iter_mut().for_each(|v| *v /= n);
    Ok(votes)
}

/// Strongest wrong class; ties go to the lowest index.
fn strongest_rival(votes: &[f64], y: usize) -> usize {
    let mut best = None::<(usize, f64)>;
    for (j, &v) in votes.iter().enumerate() {
        if j == y {
            continue;
        }
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((j, v));
        }
    }
    best.map_or(y, |(j, _)| j)
}

/// Vote share of the true class minus the largest share of any other class.
pub fn margin(f: &Forest, x: &[f64], y: usize) -> Result<f64> {
    let k = n_classes(f)?;
    if y >= k {
        return Err(Error::invalid(format!("label {y} outside 0..{k}")));
    }
    let votes = vote_shares(f, x, k)?;
    let rival = strongest_rival(&votes, y);
    Ok(votes[y] - votes[rival])
}

pub fn margins(f: &Forest, x: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    if labels.len() != x.n_rows() {
        return Err(Error::LengthMismatch(labels.len(), x.n_rows()));
    }
    x.rows()
        .zip(labels)
        .map(|(r, &y)| margin(f, r, y))
        .collect()
}

/// Share of evaluation samples with a strictly negative margin.
pub fn generalization_error_estimate(f: &Forest, x: &Matrix, labels: &[usize]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(error_fraction(&margins(f, x, labels)?))
}

fn error_fraction(margins: &[f64]) -> f64 {
    margins.iter().filter(|&&m| m < 0.0).count() as f64 / margins.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrengthCorrelation {
    pub strength: f64,
    pub mean_correlation: f64,
    /// `mean_correlation * (1 - s^2) / s^2`; `None` stands for +inf when `s <= 0`.
    pub bound: Option<f64>,
}

pub fn bound_from(strength: f64, mean_correlation: f64) -> Option<f64> {
    (strength > 0.0).then(|| mean_correlation * (1.0 - strength * strength) / (strength * strength))
}

/// Pearson correlation; a zero-variance side gives 1 for identical vectors, else 0.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Strength is the mean margin. Mean correlation averages the Pearson correlation,
/// over all tree pairs, of per-tree raw margins `I[h = y] - I[h = rival]` where the
/// rival is the forest's strongest wrong class for that sample.
pub fn strength_correlation_bound(
    f: &Forest,
    x: &Matrix,
    labels: &[usize],
) -> Result<StrengthCorrelation> {
    let k = n_classes(f)?;
    if f.trees.len() < 2 {
        return Err(Error::Degenerate(
            "mean correlation needs at least 2 trees".into(),
        ));
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != x.n_rows() {
        return Err(Error::LengthMismatch(labels.len(), x.n_rows()));
    }
    let n_trees = f.trees.len();
    let mut raw = vec![vec![0.0; x.n_rows()]; n_trees];
    let mut margin_sum = 0.0;
    for (i, (row, &y)) in x.rows().zip(labels).enumerate() {
        let preds = f.tree_predictions(row)?;
        let mut votes = vec![0.0; k];
        for &p in &preds {
            votes[p as usize] += 1.0 / n_trees as f64;
        }
        let rival = strongest_rival(&votes, y);
        margin_sum += votes[y] - votes[rival];
        for (t, &p) in preds.iter().enumerate() {
            let p = p as usize;
            raw[t][i] = f64::from(u8::from(p == y)) - f64::from(u8::from(p == rival));
        }
    }
    let strength = margin_sum / x.n_rows() as f64;

    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..n_trees {
        for b in a + 1..n_trees {
            total += pearson(&raw[a], &raw[b]);
            pairs += 1;
        }
    }
    let mean_correlation = total / pairs as f64;
    Ok(StrengthCorrelation {
        strength,
        mean_correlation,
        bound: bound_from(strength, mean_correlation),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryDiagnostics {
    pub n_trees: usize,
    pub margins: Vec<f64>,
    pub error_estimate: f64,
    pub strength: f64,
    pub mean_correlation: f64,
    pub bound: Option<f64>,
    pub bound_is_infinite: bool,
    pub bin_edges: Vec<f64>,
    /// Twenty equal-width bins over [-1, 1]; the last bin is closed.
    pub margin_histogram: Vec<HistogramBin>,
}

fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    const BINS: usize = 20;
    let width = 2.0 / BINS as f64;
    let mut out: Vec<HistogramBin> = (0..BINS)
        .map(|b| HistogramBin {
            lo: -1.0 + b as f64 * width,
            hi: -1.0 + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let b = (((v + 1.0) / width).floor() as isize).clamp(0, BINS as isize - 1) as usize;
        out[b].count += 1;
    }
    out
}

pub fn theory_diagnostics(
    f: &Forest,
    x: &Matrix,
    labels: &[usize],
    bin_edges: &[f64],
) -> Result<TheoryDiagnostics> {
    let sc = strength_correlation_bound(f, x, labels)?;
    let m = margins(f, x, labels)?;
    Ok(TheoryDiagnostics {
        n_trees: f.trees.len(),
        error_estimate: error_fraction(&m),
        margin_histogram: histogram(&m),
        margins: m,
        strength: sc.strength,
        mean_correlation: sc.mean_correlation,
        bound: sc.bound,
        bound_is_infinite: sc.bound.is_none(),
        bin_edges: bin_edges.to_vec(),
    })
}

/// Evaluation MSE of the forests made of the first `n` trees, for each `n` in
/// `tree_counts` (strictly increasing). All prefixes come from one fit.
pub fn convergence_curve(
    x_train: &Matrix,
    y_train: &[f64],
    x_eval: &Matrix,
    y_eval: &[f64],
    tree_counts: &[usize],
    config: &ForestConfig,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let Some(&largest) = tree_counts.last() else {
        return Err(Error::invalid("tree count list is empty"));
    };
    if tree_counts[0] == 0 || tree_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "tree counts must be positive and strictly increasing",
        ));
    }
    if x_eval.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if y_eval.len() != x_eval.n_rows() {
        return Err(Error::LengthMismatch(x_eval.n_rows(), y_eval.len()));
    }
    let cfg = ForestConfig {
        n_trees: largest,
        master_seed: seed,
        ..config.clone()
    };
    let forest = fit_forest_mode(x_train, y_train, &cfg, TreeMode::Regression)?;

    let mut sums = vec![0.0; x_eval.n_rows()];
    let mut out = Vec::with_capacity(tree_counts.len());
    let mut next = tree_counts.iter().peekable();
    for (t, tree) in forest.trees.iter().enumerate() {
        for (s, row) in sums.iter_mut().zip(x_eval.rows()) {
            *s += tree.predict(row)?;
        }
        if next.peek() == Some(&&(t + 1)) {
            next.next();
            let n = (t + 1) as f64;
            let mse = sums
                .iter()
                .zip(y_eval)
                .map(|(s, y)| (s / n - y).powi(2))
                .sum::<f64>()
                / y_eval.len() as f64;
            out.push((t + 1, mse));
        }
    }
    Ok(out)
}
