//! The split, normalize, fit, evaluate protocol shared by the CLI and the FFI layer.

use serde::{Deserialize, Serialize};

use crate::data::{
    apply_normalizer, fit_normalizer, split_indices, Dataset, NormalizationParams, SplitIndices,
};
use crate::error::Result;
use crate::eval::{evaluate, EvalReport, Predictor};
use crate::forest::{fit_forest, Forest, ForestConfig};
use crate::svr::{fit_svr, SvrConfig, SvrModel};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

/// A dataset split in two, with a normalizer fitted on the training rows only.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub indices: SplitIndices,
    pub normalizer: NormalizationParams,
    pub train: Dataset,
    pub test: Dataset,
}

impl Prepared {
    pub fn new(d: &Dataset, train_fraction: f64, seed: u64) -> Result<Self> {
        let indices = split_indices(d.len(), train_fraction, seed)?;
        Self::from_indices(d, indices)
    }

    /// Rebuilds the protocol from persisted split indices.
    pub fn from_indices(d: &Dataset, indices: SplitIndices) -> Result<Self> {
        if indices.n() != d.len()
            || indices
                .train
                .iter()
                .chain(&indices.test)
                .any(|&i| i >= d.len())
        {
            return Err(crate::Error::SchemaMismatch(format!(
                "stored split covers {} rows, dataset has {}",
                indices.n(),
                d.len()
            )));
        }
        let raw_train = d.subset(&indices.train);
        let normalizer = fit_normalizer(&raw_train)?;
        let train = apply_normalizer(&normalizer, &raw_train)?;
        let test = apply_normalizer(&normalizer, &d.subset(&indices.test))?;
        Ok(Prepared {
            indices,
            normalizer,
            train,
            test,
        })
    }
}

/// Which scale metrics are computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricUnits {
    #[default]
    Normalized,
    Original,
}

impl std::str::FromStr for MetricUnits {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(MetricUnits::Normalized),
            "original" => Ok(MetricUnits::Original),
            other => Err(crate::Error::invalid(format!(
                "units must be normalized or original, got {other:?}"
            ))),
        }
    }
}

/// Evaluates a model trained on normalized data against a normalized dataset,
/// optionally mapping actual and predicted values back to original units.
pub fn evaluate_in<P: Predictor + ?Sized>(
    model: &P,
    normalized: &Dataset,
    normalizer: &NormalizationParams,
    units: MetricUnits,
    original_scale: crate::data::ScaleTag,
) -> Result<EvalReport> {
    let x = normalized.features();
    let y = normalized.targets();
    match units {
        MetricUnits::Normalized => evaluate(model, &x, &y, normalized.scale_tag),
        MetricUnits::Original => {
            let back = |v: f64| normalizer.denormalize_target(v);
            let wrapped = |r: &[f64]| model.predict_row(r).and_then(back);
            let y = y.into_iter().map(back).collect::<Result<Vec<_>>>()?;
            evaluate(&wrapped, &x, &y, original_scale)
        }
    }
}

pub fn train_forest(p: &Prepared, config: &ForestConfig) -> Result<Forest> {
    fit_forest(&p.train.features(), &p.train.targets(), config)
}

/// Fits an SVR; a config without an explicit kernel width gets one scaled to the training features.
pub fn train_svr(p: &Prepared, config: Option<&SvrConfig>) -> Result<SvrModel> {
    let x = p.train.features();
    let cfg = match config {
        Some(c) => c.clone(),
        None => SvrConfig::scaled_for(&x),
    };
    fit_svr(&x, &p.train.targets(), &cfg)
}
