use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-gamma * |x - x'|^2)`
    Rbf {
        gamma: f64,
    },
    Linear,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { gamma } if !(gamma.is_finite() && *gamma > 0.0) => Err(
                Error::invalid(format!("rbf gamma must be positive, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::Arity {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }

    /// Dense Gram matrix, row-major.
    pub fn gram(&self, x: &Matrix) -> Vec<f64> {
        let n = x.n_rows();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.eval_unchecked(x.row(i), x.row(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

/// `1 / (n_features * mean column variance)`, or 1 when every column is constant.
pub fn scaled_gamma(x: &Matrix) -> f64 {
    let (n, p) = (x.n_rows(), x.n_cols());
    if n == 0 || p == 0 {
        return 1.0;
    }
    let mean_var = (0..p)
        .map(|j| {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n as f64;
            col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64
        })
        .sum::<f64>()
        / p as f64;
    if mean_var > 0.0 {
        1.0 / (p as f64 * mean_var)
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbf_and_linear_values() {
        let rbf = KernelSpec::Rbf { gamma: 1.0 };
        assert_eq!(rbf.eval(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 1.0);
        assert!((rbf.eval(&[0.0], &[1.0]).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(
            KernelSpec::Linear.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(),
            11.0
        );
        assert!(rbf.eval(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(KernelSpec::Rbf { gamma: 0.0 }.validate().is_err());
        assert!(KernelSpec::Rbf { gamma: -1.0 }.validate().is_err());
        assert!(KernelSpec::Rbf { gamma: 0.5 }.validate().is_ok());
    }

    #[test]
    fn scaled_gamma_counts_constant_columns() {
        // variances 0.25 and 0 -> mean 0.125 -> 1 / (2 * 0.125)
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!((scaled_gamma(&x) - 4.0).abs() < 1e-12);
        let c = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        assert_eq!(scaled_gamma(&c), 1.0);
    }
}
