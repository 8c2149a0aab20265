//! Epsilon-insensitive support vector regression.

mod grid;
mod kernel;
mod smo;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::hex16;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use grid::{grid_search, kfold_indices, GridRow, GridSearch};
pub use kernel::{scaled_gamma, KernelSpec};

pub const SVR_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrConfig {
    /// Penalty on tube violations.
    pub c: f64,
    /// Tube half-width in target units.
    pub epsilon: f64,
    pub kernel: KernelSpec,
    pub kkt_tolerance: f64,
    /// Iteration budget in passes; one pass is `2N` pair updates.
    pub max_passes: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            c: 1.0,
            epsilon: 0.01,
            kernel: KernelSpec::Rbf { gamma: 1.0 },
            kkt_tolerance: 1e-3,
            max_passes: 1000,
        }
    }
}

impl SvrConfig {
    /// Defaults with the RBF width scaled to the training features.
    pub fn scaled_for(x: &Matrix) -> Self {
        SvrConfig {
            kernel: KernelSpec::Rbf {
                gamma: scaled_gamma(x),
            },
            ..SvrConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if !(self.kkt_tolerance.is_finite() && self.kkt_tolerance > 0.0) {
            return Err(Error::invalid("kkt_tolerance must be positive"));
        }
        if self.max_passes < 1 {
            return Err(Error::invalid("max_passes must be at least 1"));
        }
        self.kernel.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `beta_i = alpha_i - alpha_i*` for each support vector.
    pub dual_coefficients: Vec<f64>,
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub config: SvrConfig,
    pub n_features: usize,
    pub training_size: usize,
    pub training_fingerprint: String,
    pub converged: bool,
    pub max_violation: f64,
    pub iterations: usize,
    pub dual_objective: f64,
}

/// Digest of a training set, used to pair a model with its data.
pub fn training_fingerprint(x: &Matrix, z: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update((x.n_rows() as u64).to_le_bytes());
    h.update((x.n_cols() as u64).to_le_bytes());
    for v in x.as_slice().iter().chain(z) {
        h.update(v.to_bits().to_le_bytes());
    }
    hex16(&h.finalize())
}

/// `sum z_i b_i - eps * sum |b_i| - 1/2 b'Kb`, maximized by the fit.
pub fn dual_objective(gram: &[f64], z: &[f64], epsilon: f64, beta: &[f64]) -> f64 {
    let n = z.len();
    let mut quad = 0.0;
    for i in 0..n {
        if beta[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += beta[i] * beta[j] * gram[i * n + j];
        }
    }
    let lin: f64 = z
        .iter()
        .zip(beta)
        .map(|(z, b)| z * b - epsilon * b.abs())
        .sum();
    lin - 0.5 * quad
}

/// Solves the dual problem. A run that exhausts its budget still returns a model,
/// with `converged == false` and the remaining violation recorded.
pub fn fit_svr(x: &Matrix, z: &[f64], config: &SvrConfig) -> Result<SvrModel> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if z.len() != x.n_rows() {
        return Err(Error::LengthMismatch(x.n_rows(), z.len()));
    }
    config.validate()?;
    let n = x.n_rows();
    let gram = config.kernel.gram(x);
    let out = smo::solve(&smo::Problem {
        gram: &gram,
        targets: z,
        c: config.c,
        epsilon: config.epsilon,
        tolerance: config.kkt_tolerance,
        max_iterations: config.max_passes.saturating_mul(2 * n),
    });
    let dual = dual_objective(&gram, z, config.epsilon, &out.beta);

    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    let mut support_indices = Vec::new();
    for (i, &b) in out.beta.iter().enumerate() {
        if b != 0.0 {
            support_vectors.push(x.row(i).to_vec());
            dual_coefficients.push(b);
            support_indices.push(i);
        }
    }
    Ok(SvrModel {
        support_vectors,
        dual_coefficients,
        support_indices,
        bias: out.bias,
        config: config.clone(),
        n_features: x.n_cols(),
        training_size: n,
        training_fingerprint: training_fingerprint(x, z),
        converged: out.converged,
        max_violation: out.max_violation,
        iterations: out.iterations,
        dual_objective: dual,
    })
}

impl SvrModel {
    /// Kernel expansion over the support vectors plus bias.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Arity {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let k = &self.config.kernel;
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(sv, b)| b * k.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias)
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.rows().map(|r| self.predict(r)).collect()
    }

    /// Coefficient of every training sample, zero for non-support vectors.
    pub fn full_coefficients(&self) -> Vec<f64> {
        let mut beta = vec![0.0; self.training_size];
        for (&i, &b) in self.support_indices.iter().zip(&self.dual_coefficients) {
            if i < beta.len() {
                beta[i] = b;
            }
        }
        beta
    }

    pub fn to_json(&self, schema_fingerprint: &str) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            version: u32,
            schema_fingerprint: &'a str,
            #[serde(flatten)]
            model: &'a SvrModel,
        }
        Ok(serde_json::to_string(&Doc {
            version: SVR_FORMAT_VERSION,
            schema_fingerprint,
            model: self,
        })?)
    }

    pub fn from_json(s: &str) -> Result<(SvrModel, String)> {
        #[derive(Deserialize)]
        struct Doc {
            version: u32,
            schema_fingerprint: String,
            #[serde(flatten)]
            model: SvrModel,
        }
        let doc: Doc = crate::persist::from_json_str(s)?;
        if doc.version != SVR_FORMAT_VERSION {
            return Err(Error::Version(doc.version));
        }
        Ok((doc.model, doc.schema_fingerprint))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktSample {
    pub index: usize,
    pub beta: f64,
    /// `f(x_i) - z_i`
    pub residual: f64,
    pub box_violation: f64,
    pub slackness_violation: f64,
}

impl KktSample {
    pub fn violation(&self) -> f64 {
        self.box_violation.max(self.slackness_violation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub samples: Vec<KktSample>,
    /// `|sum beta_i|`
    pub equality_violation: f64,
    pub max_violation: f64,
    /// Sample with the largest per-sample violation.
    pub worst_index: Option<usize>,
}

/// Checks the optimality conditions of a fitted model on its own training set.
///
/// For residual `r = f(x) - z`: `beta = 0` needs `|r| <= eps`; `0 < |beta| < C`
/// needs `r = -eps * sign(beta)`; `beta = C` needs `r <= -eps`; `beta = -C`
/// needs `r >= eps`.
pub fn kkt_report(m: &SvrModel, x: &Matrix, z: &[f64]) -> Result<KktReport> {
    if x.n_rows() != m.training_size
        || z.len() != m.training_size
        || training_fingerprint(x, z) != m.training_fingerprint
    {
        return Err(Error::invalid(
            "training set does not match the model's training fingerprint",
        ));
    }
    let c = m.config.c;
    let eps = m.config.epsilon;
    let beta = m.full_coefficients();
    let mut samples = Vec::with_capacity(beta.len());
    for (i, (&b, &zi)) in beta.iter().zip(z).enumerate() {
        let r = m.predict(x.row(i))? - zi;
        let box_violation = (b.abs() - c).max(0.0);
        let slackness_violation = if b == 0.0 {
            (r.abs() - eps).max(0.0)
        } else if b.abs() >= c {
            if b > 0.0 {
                (r + eps).max(0.0)
            } else {
                (eps - r).max(0.0)
            }
        } else {
            (r + eps * b.signum()).abs()
        };
        samples.push(KktSample {
            index: i,
            beta: b,
            residual: r,
            box_violation,
            slackness_violation,
        });
    }
    let equality_violation = beta.iter().sum::<f64>().abs();
    let worst = samples.iter().max_by(|a, b| {
        a.violation()
            .total_cmp(&b.violation())
            .then(b.index.cmp(&a.index))
    });
    let worst_index = worst.map(|s| s.index);
    let max_violation = worst
        .map_or(0.0, KktSample::violation)
        .max(equality_violation);
    Ok(KktReport {
        samples,
        equality_violation,
        max_violation,
        worst_index,
    })
}
