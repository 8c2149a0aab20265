//! Report documents written by `compare` and `diagnose`.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::bundle::{DataSource, ModelKind};
use crate::data::SplitIndices;
use crate::eval::{EvalReport, ImportanceReport};
use crate::forest::TheoryDiagnostics;
use crate::pipeline::MetricUnits;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub settings: BTreeMap<String, String>,
    pub source: DataSource,
    /// Excluded from reproducibility comparisons.
    pub created_unix_seconds: u64,
}

impl RunMetadata {
    pub fn new(
        seed: u64,
        config_digest: String,
        settings: BTreeMap<String, String>,
        source: DataSource,
    ) -> Self {
        RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_digest,
            settings,
            source,
            created_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

pub const METRIC_ROWS: [&str; 4] = ["R2 (uncentered)", "R2 (centered)", "MSE", "MAE"];

/// Metrics by row, models by column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl MetricTable {
    pub fn from_reports(columns: &[(String, &EvalReport)]) -> Self {
        let pick = |r: &EvalReport, row: usize| match row {
            0 => r.r2_uncentered,
            1 => r.r2_centered,
            2 => Some(r.mse),
            _ => Some(r.mae),
        };
        MetricTable {
            rows: METRIC_ROWS.iter().map(|s| s.to_string()).collect(),
            columns: columns.iter().map(|c| c.0.clone()).collect(),
            values: (0..METRIC_ROWS.len())
                .map(|row| columns.iter().map(|c| pick(c.1, row)).collect())
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<16}", "");
        for c in &self.columns {
            out.push_str(&format!("{c:>14}"));
        }
        out.push('\n');
        for (name, vals) in self.rows.iter().zip(&self.values) {
            out.push_str(&format!("{name:<16}"));
            for v in vals {
                match v {
                    Some(v) => out.push_str(&format!("{v:>14.6}")),
                    None => out.push_str(&format!("{:>14}", "n/a")),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedScore {
    pub feature: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub train: EvalReport,
    pub validation: EvalReport,
    pub permutation_importance: ImportanceReport,
    /// Forest only: normalized impurity decrease per feature.
    pub impurity_importance: Option<Vec<NamedScore>>,
    /// SVR only: whether the solver met its KKT tolerance.
    pub converged: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub metadata: RunMetadata,
    pub units: MetricUnits,
    pub split: SplitIndices,
    /// Validation metrics.
    pub table: MetricTable,
    pub models: Vec<ModelSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub metadata: RunMetadata,
    pub n_bins: usize,
    pub split: SplitIndices,
    pub diagnostics: TheoryDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalDocument {
    pub model_kind: ModelKind,
    pub subset: String,
    pub units: MetricUnits,
    pub config_digest: String,
    pub seed: u64,
    pub report: EvalReport,
}
