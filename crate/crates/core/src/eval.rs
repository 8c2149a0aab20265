//! Regression metrics, predicted-vs-actual reports and permutation importance.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ScaleTag;
use crate::error::{Error, Result};
use crate::forest::{tree_seed, Forest};
use crate::matrix::Matrix;
use crate::svr::SvrModel;
use crate::tree::RegressionTree;

/// Anything that maps one feature row to a prediction.
pub trait Predictor {
    fn predict_row(&self, x: &[f64]) -> Result<f64>;
}

impl Predictor for Forest {
    fn predict_row(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

impl Predictor for SvrModel {
    fn predict_row(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

impl Predictor for RegressionTree {
    fn predict_row(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

impl<F: Fn(&[f64]) -> Result<f64>> Predictor for F {
    fn predict_row(&self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

fn sq_residuals(y: &[f64], yhat: &[f64]) -> f64 {
    y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `1 - sum (y - yhat)^2 / sum y^2`, with an uncentered denominator.
pub fn r2_uncentered(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let denom: f64 = y.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::Degenerate("all actual values are zero".into()));
    }
    Ok(1.0 - sq_residuals(y, yhat) / denom)
}

/// Conventional coefficient of determination, `1 - SS_res / SS_tot`.
pub fn r2_centered(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::Degenerate(
            "centered R2 needs at least 2 samples".into(),
        ));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("actual values are constant".into()));
    }
    Ok(1.0 - sq_residuals(y, yhat) / ss_tot)
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(sq_residuals(y, yhat) / y.len() as f64)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Undefined (null) when every actual value is zero.
    pub r2_uncentered: Option<f64>,
    /// Undefined (null) for fewer than two samples or constant actual values.
    pub r2_centered: Option<f64>,
    pub mse: f64,
    pub mae: f64,
    pub n: usize,
    pub pairs: Vec<Pair>,
    pub scale_tag: ScaleTag,
}

impl EvalReport {
    pub fn from_predictions(y: &[f64], yhat: &[f64], scale_tag: ScaleTag) -> Result<Self> {
        check_pair(y, yhat)?;
        Ok(EvalReport {
            r2_uncentered: r2_uncentered(y, yhat).ok(),
            r2_centered: r2_centered(y, yhat).ok(),
            mse: mse(y, yhat)?,
            mae: mae(y, yhat)?,
            n: y.len(),
            pairs: y
                .iter()
                .zip(yhat)
                .map(|(&actual, &predicted)| Pair { actual, predicted })
                .collect(),
            scale_tag,
        })
    }

    pub fn write_pairs_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["actual", "predicted"])?;
        for p in &self.pairs {
            wr.write_record([p.actual.to_string(), p.predicted.to_string()])?;
        }
        wr.flush().map_err(|e| Error::io("<pairs csv>", e))?;
        Ok(())
    }
}

fn predict_all<P: Predictor + ?Sized>(model: &P, x: &Matrix) -> Result<Vec<f64>> {
    x.rows()
        .enumerate()
        .map(|(index, r)| {
            model.predict_row(r).map_err(|e| Error::Prediction {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Predicts every row and reports metrics plus (actual, predicted) pairs in input order.
pub fn evaluate<P: Predictor + ?Sized>(
    model: &P,
    x: &Matrix,
    y: &[f64],
    scale_tag: ScaleTag,
) -> Result<EvalReport> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch(y.len(), x.n_rows()));
    }
    let yhat = predict_all(model, x)?;
    EvalReport::from_predictions(y, &yhat, scale_tag)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: usize,
    pub name: Option<String>,
    /// Mean MSE increase under permutation, floored at zero.
    pub magnitude: f64,
    /// Magnitude as a share of the total; zero when nothing matters.
    pub relative: f64,
    pub sign: i8,
    pub spearman: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_mse: f64,
    pub repeats: usize,
    pub seed: u64,
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    /// Feature indices sorted by decreasing magnitude, stable on ties.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.features.len()).collect();
        idx.sort_by(|&a, &b| {
            self.features[b]
                .magnitude
                .total_cmp(&self.features[a].magnitude)
        });
        idx
    }
}

/// Correlations below this magnitude get sign 0.
pub const SIGN_THRESHOLD: f64 = 0.05;

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; zero when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Signed permutation importance.
///
/// Column `j` is shuffled `repeats` times with seeds derived from `(seed, j, r)`.
/// The sign comes from the Spearman correlation between the raw feature and the
/// model's predictions.
pub fn permutation_importance<P: Predictor + Sync + ?Sized>(
    model: &P,
    x: &Matrix,
    y: &[f64],
    seed: u64,
    repeats: usize,
) -> Result<ImportanceReport> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.n_rows() < 2 {
        return Err(Error::Degenerate(
            "permutation importance needs at least 2 samples".into(),
        ));
    }
    if repeats < 1 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch(y.len(), x.n_rows()));
    }
    let base_pred = predict_all(model, x)?;
    let baseline = mse(y, &base_pred)?;

    let per_feature: Vec<(f64, f64)> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| {
            let column = x.column(j);
            let rho = spearman(&column, &base_pred);
            let mut xp = x.clone();
            let mut increase = 0.0;
            for r in 0..repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, j * repeats + r));
                let mut perm = column.clone();
                perm.shuffle(&mut rng);
                for (i, v) in perm.into_iter().enumerate() {
                    xp.set(i, j, v);
                }
                let pred = predict_all(model, &xp)?;
                increase += mse(y, &pred)? - baseline;
            }
            Ok(((increase / repeats as f64).max(0.0), rho))
        })
        .collect::<Result<_>>()?;

    let total: f64 = per_feature.iter().map(|p| p.0).sum();
    let features = per_feature
        .into_iter()
        .enumerate()
        .map(|(feature, (magnitude, rho))| FeatureImportance {
            feature,
            name: None,
            magnitude,
            relative: if total > 0.0 { magnitude / total } else { 0.0 },
            sign: if rho.abs() < SIGN_THRESHOLD {
                0
            } else if rho > 0.0 {
                1
            } else {
                -1
            },
            spearman: rho,
        })
        .collect();
    Ok(ImportanceReport {
        baseline_mse: baseline,
        repeats,
        seed,
        features,
    })
}

impl ImportanceReport {
    pub fn with_names<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        for f in &mut self.features {
            f.name = names.get(f.feature).map(|s| s.as_ref().to_string());
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Y: [f64; 3] = [1.0, 2.0, 3.0];
    const YHAT: [f64; 3] = [1.0, 2.0, 4.0];

    #[test]
    fn metric_values() {
        assert!((r2_uncentered(&Y, &YHAT).unwrap() - (1.0 - 1.0 / 14.0)).abs() < 1e-12);
        assert!((r2_centered(&Y, &YHAT).unwrap() - 0.5).abs() < 1e-12);
        assert!((mse(&Y, &YHAT).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((mae(&Y, &YHAT).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r2_uncentered(&[1.0], &[0.0]).unwrap(), 0.0);
        assert!((mse(&[0.0], &[0.039]).unwrap() - 0.001521).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_mean_predictors() {
        assert_eq!(r2_uncentered(&Y, &Y).unwrap(), 1.0);
        assert_eq!(r2_centered(&Y, &Y).unwrap(), 1.0);
        assert_eq!(mse(&Y, &Y).unwrap(), 0.0);
        assert_eq!(mae(&Y, &Y).unwrap(), 0.0);
        assert_eq!(r2_centered(&Y, &[2.0; 3]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[0.7, -0.7]).unwrap(), 0.7);
    }

    #[test]
    fn metric_errors() {
        assert!(matches!(mse(&Y, &[1.0]), Err(Error::LengthMismatch(3, 1))));
        assert!(r2_uncentered(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(r2_centered(&[2.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn evaluate_keeps_pairs_in_order() {
        let x = Matrix::from_rows(&[[0.41], [0.2]]).unwrap();
        let model = |r: &[f64]| -> Result<f64> { Ok(if r[0] > 0.3 { 0.38 } else { 0.2 }) };
        let rep = evaluate(&model, &x, &[0.41, 0.2], ScaleTag::UnitFraction).unwrap();
        assert_eq!(
            rep.pairs[0],
            Pair {
                actual: 0.41,
                predicted: 0.38
            }
        );
        assert_eq!(rep.n, 2);
        let mut buf = Vec::new();
        rep.write_pairs_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("actual,predicted\n0.41,0.38\n"));
    }

    #[test]
    fn evaluate_reports_failing_index() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let model = |r: &[f64]| -> Result<f64> {
            if r[0] > 0.5 {
                Err(Error::invalid("boom"))
            } else {
                Ok(0.0)
            }
        };
        match evaluate(&model, &x, &[0.0, 1.0], ScaleTag::Percent) {
            Err(Error::Prediction { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), 0.0);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]), vec![1.5, 0.0, 1.5]);
    }

    #[test]
    fn ignored_and_constant_features_score_zero() {
        let rows: Vec<[f64; 3]> = (0..30)
            .map(|i| [i as f64 / 29.0, ((i * 17) % 30) as f64, 150.0])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let model = |r: &[f64]| -> Result<f64> { Ok(r[0]) };
        let rep = permutation_importance(&model, &x, &y, 3, 5).unwrap();
        assert_eq!(rep.features[1].magnitude, 0.0);
        assert_eq!(rep.features[2].magnitude, 0.0);
        assert_eq!(rep.features[2].sign, 0);
        assert_eq!(rep.features[0].sign, 1);
        assert_eq!(rep.ranking()[0], 0);
        assert_eq!(rep.features[0].relative, 1.0);
        assert_eq!(rep, permutation_importance(&model, &x, &y, 3, 5).unwrap());
    }

    #[test]
    fn importance_preconditions() {
        let x = Matrix::from_rows(&[[0.0]]).unwrap();
        let model = |r: &[f64]| -> Result<f64> { Ok(r[0]) };
        assert!(permutation_importance(&model, &x, &[0.0], 0, 1).is_err());
        let x = Matrix::new(0, 1, vec![]).unwrap();
        assert!(matches!(
            permutation_importance(&model, &x, &[], 0, 1),
            Err(Error::EmptyDataset)
        ));
    }
}
