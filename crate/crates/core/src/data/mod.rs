//! Dataset ingestion, summary statistics, min-max scaling and seeded splits.

pub mod synth;

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use synth::{
    synthesize, ColumnGenerator, LevelJitter, ResponseSpec, ScenarioId, SynthScenario,
};

/// Column names of the filtration experiments, in CSV order.
pub const FEATURE_NAMES: [&str; 7] = [
    "solids_concentration",
    "temperature",
    "ph",
    "pressure",
    "air_blow_time",
    "cake_thickness",
    "filtration_time",
];

pub const TARGET_NAME: &str = "cake_moisture";

pub const N_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub target_name: String,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema {
            names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            target_name: TARGET_NAME.to_string(),
        }
    }
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        if self.names.len() != N_FEATURES {
            return Err(Error::SchemaMismatch(format!(
                "expected {N_FEATURES} feature names, got {}",
                self.names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for n in self.names.iter().chain(std::iter::once(&self.target_name)) {
            if !seen.insert(n.as_str()) {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate column name {n:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.names.len()
    }

    /// Every column name, features first, target last.
    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.names
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.target_name.as_str()))
    }

    /// Stable hex digest of the ordered column names.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for c in self.columns() {
            h.update(c.as_bytes());
            h.update([0u8]);
        }
        hex16(&h.finalize())
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScaleTag {
    #[default]
    Percent,
    UnitFraction,
}

impl FromStr for ScaleTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "percent" => Ok(ScaleTag::Percent),
            "fraction" | "unit_fraction" => Ok(ScaleTag::UnitFraction),
            other => Err(Error::invalid(format!("unknown scale {other:?}"))),
        }
    }
}

impl fmt::Display for ScaleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScaleTag::Percent => "percent",
            ScaleTag::UnitFraction => "fraction",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub samples: Vec<Sample>,
    pub scale_tag: ScaleTag,
}

impl Dataset {
    /// Builds a dataset under the default schema, checking arity and finiteness.
    pub fn new(samples: Vec<Sample>, scale_tag: ScaleTag) -> Result<Self> {
        Self::with_schema(FeatureSchema::default(), samples, scale_tag)
    }

    pub fn with_schema(
        schema: FeatureSchema,
        samples: Vec<Sample>,
        scale_tag: ScaleTag,
    ) -> Result<Self> {
        schema.validate()?;
        for (row, s) in samples.iter().enumerate() {
            if s.features.len() != schema.arity() {
                return Err(Error::Arity {
                    expected: schema.arity(),
                    got: s.features.len(),
                });
            }
            for (v, name) in s.features.iter().zip(&schema.names) {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row,
                        column: name.clone(),
                    });
                }
            }
            if !s.target.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: schema.target_name.clone(),
                });
            }
        }
        Ok(Dataset {
            schema,
            samples,
            scale_tag,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn features(&self) -> Matrix {
        let rows: Vec<&[f64]> = self.samples.iter().map(|s| s.features.as_slice()).collect();
        Matrix::from_rows(&rows).unwrap_or_else(|_| unreachable!("arity checked at construction"))
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    /// Values of column `j`; `j == arity` selects the target.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let arity = self.schema.arity();
        self.samples
            .iter()
            .map(|s| if j == arity { s.target } else { s.features[j] })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            scale_tag: self.scale_tag,
        }
    }

    /// Converts the target between percent and fraction units.
    pub fn with_target_scale(&self, scale: ScaleTag) -> Dataset {
        let factor = match (self.scale_tag, scale) {
            (ScaleTag::Percent, ScaleTag::UnitFraction) => 0.01,
            (ScaleTag::UnitFraction, ScaleTag::Percent) => 100.0,
            _ => 1.0,
        };
        let mut out = self.clone();
        if factor != 1.0 {
            for s in &mut out.samples {
                s.target *= factor;
            }
        }
        out.scale_tag = scale;
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.schema.columns())?;
        for s in &self.samples {
            let rec: Vec<String> = s
                .features
                .iter()
                .chain(std::iter::once(&s.target))
                .map(|v| v.to_string())
                .collect();
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .unwrap_or_else(|_| unreachable!("writing to memory"));
        String::from_utf8(buf).unwrap_or_else(|_| unreachable!("csv output is utf-8"))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

/// Reads a dataset from a CSV file with the default schema header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(f)
}

pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
    let schema = FeatureSchema::default();
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let expected: Vec<&str> = schema.columns().collect();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        let mut problems = Vec::new();
        for (i, want) in expected.iter().enumerate() {
            match got.get(i) {
                Some(g) if g == want => {}
                Some(g) => problems.push(format!("column {i}: expected {want:?}, found {g:?}")),
                None => problems.push(format!("missing column {want:?}")),
            }
        }
        for extra in got.iter().skip(expected.len()) {
            problems.push(format!("unexpected column {extra:?}"));
        }
        return Err(Error::HeaderMismatch(problems.join("; ")));
    }

    let mut samples = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        // 1-based data row numbering, header excluded.
        let row = i + 1;
        let mut values = Vec::with_capacity(expected.len());
        for (cell, name) in rec.iter().zip(&expected) {
            let v: f64 = cell.trim().parse().map_err(|_| Error::ParseCell {
                row,
                column: name.to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: name.to_string(),
                });
            }
            values.push(v);
        }
        let target = values.pop().unwrap_or(f64::NAN);
        samples.push(Sample {
            features: values,
            target,
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scale_tag = if samples.iter().any(|s| s.target.abs() > 1.0) {
        ScaleTag::Percent
    } else {
        ScaleTag::UnitFraction
    };
    Dataset::with_schema(schema, samples, scale_tag)
}

/// Quantile of an ascending-sorted slice, interpolating linearly at position (n-1)q.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl ColumnStats {
    pub fn from_values(column: impl Into<String>, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok(ColumnStats {
            column: column.into(),
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            // summation rounding can push the mean of a constant column off by an ulp
            mean: mean.clamp(sorted[0], sorted[sorted.len() - 1]),
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }

    /// The six statistics in table order.
    pub fn values(&self) -> [f64; 6] {
        [self.min, self.q1, self.median, self.mean, self.q3, self.max]
    }
}

pub const STAT_LABELS: [&str; 6] = [
    "Minimum",
    "1st Quartile",
    "Median",
    "Mean",
    "3rd Quartile",
    "Maximum",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub columns: Vec<ColumnStats>,
}

impl DescriptiveStats {
    pub fn get(&self, column: &str) -> Option<&ColumnStats> {
        self.columns.iter().find(|c| c.column == column)
    }
}

/// Six-number summary for every feature column and the target.
pub fn describe(d: &Dataset) -> Result<DescriptiveStats> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let columns = d
        .schema
        .columns()
        .enumerate()
        .map(|(j, name)| ColumnStats::from_values(name, &d.column(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DescriptiveStats { columns })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    pub fn is_constant(&self) -> bool {
        self.min == self.max
    }

    pub fn scale(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        }
    }

    pub fn unscale(&self, v: f64) -> Result<f64> {
        if self.is_constant() {
            return Err(Error::ConstantColumn(self.name.clone()));
        }
        Ok(self.min + v * (self.max - self.min))
    }
}

/// Per-column min/max fitted on training data. The target range comes last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub features: Vec<ColumnRange>,
    pub target: ColumnRange,
    pub schema_fingerprint: String,
}

impl NormalizationParams {
    pub fn normalize_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.features.len() {
            return Err(Error::Arity {
                expected: self.features.len(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.features)
            .map(|(&v, r)| r.scale(v))
            .collect())
    }

    pub fn normalize_target(&self, v: f64) -> f64 {
        self.target.scale(v)
    }

    pub fn denormalize_target(&self, v: f64) -> Result<f64> {
        self.target.unscale(v)
    }

    /// Column range by schema position; `arity` selects the target.
    pub fn range(&self, column: usize) -> Option<&ColumnRange> {
        if column == self.features.len() {
            Some(&self.target)
        } else {
            self.features.get(column)
        }
    }

    pub fn range_by_name(&self, name: &str) -> Option<&ColumnRange> {
        self.features
            .iter()
            .chain(std::iter::once(&self.target))
            .find(|r| r.name == name)
    }
}

pub fn fit_normalizer(train: &Dataset) -> Result<NormalizationParams> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let range = |j: usize, name: &str| {
        let col = train.column(j);
        let (min, max) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        ColumnRange {
            name: name.to_string(),
            min,
            max,
        }
    };
    let arity = train.schema.arity();
    Ok(NormalizationParams {
        features: train
            .schema
            .names
            .iter()
            .enumerate()
            .map(|(j, n)| range(j, n))
            .collect(),
        target: range(arity, &train.schema.target_name),
        schema_fingerprint: train.schema.fingerprint(),
    })
}

/// Maps every value into [0, 1]; out-of-range values clip, constant columns map to 0.
pub fn apply_normalizer(p: &NormalizationParams, d: &Dataset) -> Result<Dataset> {
    if p.schema_fingerprint != d.schema.fingerprint() {
        return Err(Error::SchemaMismatch(
            "normalizer was fitted on a different schema".into(),
        ));
    }
    let samples = d
        .samples
        .iter()
        .map(|s| {
            Ok(Sample {
                features: p.normalize_features(&s.features)?,
                target: p.normalize_target(s.target),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        schema: d.schema.clone(),
        samples,
        scale_tag: ScaleTag::UnitFraction,
    })
}

/// Maps a normalized value of `column` back to original units.
pub fn invert_normalizer(p: &NormalizationParams, v: f64, column: &str) -> Result<f64> {
    p.range_by_name(column)
        .ok_or_else(|| Error::invalid(format!("unknown column {column:?}")))?
        .unscale(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub seed: u64,
    pub train_fraction: f64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn n(&self) -> usize {
        self.train.len() + self.test.len()
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub indices: SplitIndices,
}

/// Row indices of a uniform random partition with `floor(fraction * n)` training rows.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = (train_fraction * n as f64).floor() as usize;
    let test = idx.split_off(n_train);
    Ok(SplitIndices {
        seed,
        train_fraction,
        train: idx,
        test,
    })
}

pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<Split> {
    let indices = split_indices(d.len(), train_fraction, seed)?;
    Ok(Split {
        train: d.subset(&indices.train),
        test: d.subset(&indices.test),
        indices,
    })
}
