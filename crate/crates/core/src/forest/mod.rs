//! Bagged regression forests with mean aggregation.

mod diagnostics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tree::{fit_tree_on, RegressionTree, TreeConfig, TreeMode};

pub use diagnostics::{
    bin_targets, convergence_curve, fit_classification_forest, generalization_error_estimate,
    margin, margins, strength_correlation_bound, theory_diagnostics, Binning, StrengthCorrelation,
    TheoryDiagnostics,
};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Template for every tree; its `seed` is replaced by the per-tree seed.
    pub tree: TreeConfig,
    pub bootstrap: bool,
    pub master_seed: u64,
}

impl ForestConfig {
    pub fn new(n_features: usize) -> Self {
        ForestConfig {
            n_trees: 500,
            tree: TreeConfig {
                m_try: (n_features / 3).max(1),
                ..TreeConfig::full(n_features)
            },
            bootstrap: true,
            master_seed: 0,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        self.tree.validate(n_features)
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of tree `k`: element `k + 1` of the SplitMix64 stream started at `master_seed`.
pub fn tree_seed(master_seed: u64, k: usize) -> u64 {
    mix64(master_seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub mode: TreeMode,
    pub n_features: usize,
    pub n_train: usize,
    pub trees: Vec<RegressionTree>,
    /// Training rows each tree did not see; empty without bootstrap.
    pub oob_indices: Vec<Vec<usize>>,
}

fn fit_one(
    x: &Matrix,
    y: &[f64],
    config: &ForestConfig,
    mode: TreeMode,
    k: usize,
) -> Result<(RegressionTree, Vec<usize>)> {
    let seed = tree_seed(config.master_seed, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.n_rows();
    let (rows, oob) = if config.bootstrap {
        let mut seen = vec![false; n];
        let rows: Vec<usize> = (0..n)
            .map(|_| {
                let i = rng.random_range(0..n);
                seen[i] = true;
                i
            })
            .collect();
        let oob = (0..n).filter(|&i| !seen[i]).collect();
        (rows, oob)
    } else {
        ((0..n).collect(), Vec::new())
    };
    let tree_cfg = TreeConfig {
        seed,
        ..config.tree.clone()
    };
    let tree = fit_tree_on(x, y, rows, &tree_cfg, mode, &mut rng)?;
    Ok((tree, oob))
}

pub(crate) fn fit_forest_mode(
    x: &Matrix,
    y: &[f64],
    config: &ForestConfig,
    mode: TreeMode,
) -> Result<Forest> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch(x.n_rows(), y.len()));
    }
    config.validate(x.n_cols())?;
    // per-tree seeds are fixed up front, so the result does not depend on scheduling
    let fitted: Vec<(RegressionTree, Vec<usize>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|k| fit_one(x, y, config, mode, k))
        .collect::<Result<_>>()?;
    let (trees, oob_indices) = fitted.into_iter().unzip();
    Ok(Forest {
        config: config.clone(),
        mode,
        n_features: x.n_cols(),
        n_train: x.n_rows(),
        trees,
        oob_indices,
    })
}

pub fn fit_forest(x: &Matrix, y: &[f64], config: &ForestConfig) -> Result<Forest> {
    fit_forest_mode(x, y, config, TreeMode::Regression)
}

/// Fits on a dedicated pool of `workers` threads.
pub fn fit_forest_with_workers(
    x: &Matrix,
    y: &[f64],
    config: &ForestConfig,
    workers: usize,
) -> Result<Forest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| fit_forest(x, y, config))
}

impl Forest {
    fn check_arity(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Arity {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Mean of the tree predictions.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_arity(x)?;
        let sum: f64 = self.trees.iter().map(|t| t.predict_unchecked(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn tree_predictions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_arity(x)?;
        Ok(self.trees.iter().map(|t| t.predict_unchecked(x)).collect())
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.rows().map(|r| self.predict(r)).collect()
    }

    /// The forest made of the first `n` trees.
    pub fn prefix(&self, n: usize) -> Forest {
        let n = n.clamp(1, self.trees.len());
        Forest {
            config: ForestConfig {
                n_trees: n,
                ..self.config.clone()
            },
            mode: self.mode,
            n_features: self.n_features,
            n_train: self.n_train,
            trees: self.trees[..n].to_vec(),
            oob_indices: self.oob_indices.iter().take(n).cloned().collect(),
        }
    }

    /// Out-of-bag mean squared error over the training set.
    pub fn oob_error(&self, x: &Matrix, y: &[f64]) -> Result<f64> {
        if !self.config.bootstrap {
            return Err(Error::invalid(
                "out-of-bag error needs bootstrap sampling; every tree saw every sample",
            ));
        }
        if x.n_rows() != self.n_train || y.len() != self.n_train {
            return Err(Error::invalid(format!(
                "forest was trained on {} samples, got {}",
                self.n_train,
                x.n_rows()
            )));
        }
        let mut sum = vec![0.0; self.n_train];
        let mut hits = vec![0usize; self.n_train];
        for (tree, oob) in self.trees.iter().zip(&self.oob_indices) {
            for &i in oob {
                sum[i] += tree.predict(x.row(i))?;
                hits[i] += 1;
            }
        }
        let mut sq = 0.0;
        for i in 0..self.n_train {
            if hits[i] == 0 {
                return Err(Error::NoOobTrees(i));
            }
            sq += (sum[i] / hits[i] as f64 - y[i]).powi(2);
        }
        Ok(sq / self.n_train as f64)
    }

    /// Total impurity reduction per feature, normalized to sum to one.
    ///
    /// A forest without any split returns all zeros.
    pub fn impurity_importance(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features];
        for t in &self.trees {
            t.accumulate_importance(&mut acc);
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter_mut().for_each(|v| *v /= total);
        }
        acc
    }

    pub fn to_json(&self, schema_fingerprint: &str) -> Result<String> {
        Ok(serde_json::to_string(&ForestDocumentRef {
            version: FOREST_FORMAT_VERSION,
            schema_fingerprint,
            forest: self,
        })?)
    }

    /// Parses a forest document, returning the forest and its schema fingerprint.
    pub fn from_json(s: &str) -> Result<(Forest, String)> {
        let doc: ForestDocument = crate::persist::from_json_str(s)?;
        if doc.version != FOREST_FORMAT_VERSION {
            return Err(Error::Version(doc.version));
        }
        Ok((doc.forest, doc.schema_fingerprint))
    }
}

#[derive(Serialize)]
struct ForestDocumentRef<'a> {
    version: u32,
    schema_fingerprint: &'a str,
    #[serde(flatten)]
    forest: &'a Forest,
}

#[derive(Deserialize)]
struct ForestDocument {
    version: u32,
    schema_fingerprint: String,
    #[serde(flatten)]
    forest: Forest,
}
