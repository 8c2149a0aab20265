//! A trained model packaged with everything needed to reproduce its evaluation:
//! normalizer, split indices, data source and provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::synth::{synthesize, ScenarioId, SynthScenario};
use crate::data::{hex16, load_csv, Dataset, NormalizationParams, ScaleTag, SplitIndices};
use crate::error::{Error, Result};
use crate::eval::Predictor;
use crate::forest::Forest;
use crate::persist;
use crate::svr::SvrModel;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainedModel {
    Rfr(Forest),
    Svr(SvrModel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rfr,
    Svr,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rfr" | "forest" => Ok(ModelKind::Rfr),
            "svr" => Ok(ModelKind::Svr),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Rfr => "rfr",
            ModelKind::Svr => "svr",
        })
    }
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Rfr(_) => ModelKind::Rfr,
            TrainedModel::Svr(_) => ModelKind::Svr,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Rfr(f) => f.n_features,
            TrainedModel::Svr(m) => m.n_features,
        }
    }
}

impl Predictor for TrainedModel {
    fn predict_row(&self, x: &[f64]) -> Result<f64> {
        match self {
            TrainedModel::Rfr(f) => f.predict(x),
            TrainedModel::Svr(m) => m.predict(x),
        }
    }
}

/// Where the training data came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DataSource {
    Csv {
        path: String,
    },
    Synth {
        scenario: ScenarioId,
        n: usize,
        seed: u64,
    },
    /// Rows handed over by a caller; they are not kept with the model.
    Memory {
        rows: usize,
    },
}

impl DataSource {
    /// Loads the data, converting the target to `scale` when given.
    pub fn load(&self, scale: Option<ScaleTag>) -> Result<Dataset> {
        let d = match self {
            DataSource::Csv { path } => load_csv(path)?,
            DataSource::Synth { scenario, n, seed } => {
                synthesize(&SynthScenario::new(*scenario), *n, *seed)?
            }
            DataSource::Memory { rows } => {
                return Err(Error::invalid(format!(
                    "the {rows} in-memory training rows were not stored; pass a dataset explicitly"
                )))
            }
        };
        Ok(match scale {
            Some(s) => d.with_target_scale(s),
            None => d,
        })
    }
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSource::Csv { path } => write!(f, "csv:{path}"),
            DataSource::Synth { scenario, n, seed } => {
                write!(f, "synth:{scenario} n={n} seed={seed}")
            }
            DataSource::Memory { rows } => write!(f, "memory:{rows} rows"),
        }
    }
}

/// Digest of every value in a dataset, in order.
pub fn data_digest(d: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(d.schema.fingerprint().as_bytes());
    for s in &d.samples {
        for v in s.features.iter().chain(std::iter::once(&s.target)) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex16(&h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub schema_fingerprint: String,
    pub model: TrainedModel,
    pub normalizer: NormalizationParams,
    pub split: SplitIndices,
    pub source: DataSource,
    pub data_digest: String,
    /// Target units of the data before normalization.
    pub scale_tag: ScaleTag,
    pub config_digest: String,
    pub seed: u64,
}

impl ModelBundle {
    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    /// Prediction on the normalized scale for an already normalized row.
    pub fn predict_normalized(&self, x: &[f64]) -> Result<f64> {
        self.model.predict_row(x)
    }

    /// Prediction in original target units for a raw feature row.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let z = self.normalizer.normalize_features(x)?;
        self.normalizer
            .denormalize_target(self.model.predict_row(&z)?)
    }

    pub fn check_dataset(&self, d: &Dataset) -> Result<()> {
        let fp = d.schema.fingerprint();
        if fp != self.schema_fingerprint {
            return Err(Error::SchemaMismatch(format!(
                "model expects schema {}, data has {fp}",
                self.schema_fingerprint
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: ModelBundle = persist::from_json_str(s)?;
        if b.version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Version(b.version));
        }
        if b.normalizer.schema_fingerprint != b.schema_fingerprint {
            return Err(Error::SchemaMismatch(
                "normalizer and model disagree on the schema".into(),
            ));
        }
        if b.model.n_features() != b.normalizer.features.len() {
            return Err(Error::Arity {
                expected: b.normalizer.features.len(),
                got: b.model.n_features(),
            });
        }
        Ok(b)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        persist::write_text_file(path, &self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
