//! Flat `key = value` run configuration. Command-line values override file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::bundle::{DataSource, ModelKind};
use crate::data::synth::ScenarioId;
use crate::data::{hex16, ScaleTag, N_FEATURES};
use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::pipeline::{MetricUnits, DEFAULT_TRAIN_FRACTION};
use crate::svr::{KernelSpec, SvrConfig};

pub const KNOWN_KEYS: &[&str] = &[
    "input",
    "scenario",
    "n",
    "model",
    "seed",
    "fraction",
    "scale",
    "units",
    "trees",
    "m_try",
    "max_depth",
    "min_samples_leaf",
    "min_samples_split",
    "bootstrap",
    "c",
    "epsilon",
    "gamma",
    "kernel",
    "kkt_tolerance",
    "max_passes",
    "repeats",
    "bins",
];

pub const DEFAULT_SYNTH_N: usize = 144;
pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_BINS: usize = 3;

/// Raw settings before validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse_file_text(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        let mut problems = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                problems.push(format!("line {}: expected key = value", i + 1));
                continue;
            };
            let key = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                problems.push(format!("line {}: unknown key {key:?}", i + 1));
                continue;
            }
            s.values.insert(key, v.trim().to_string());
        }
        if problems.is_empty() {
            Ok(s)
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_file_text(&text)
    }

    pub fn set<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Stable digest of the settings that influence results.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex16(&h.finalize())
    }
}

/// Validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub model: ModelKind,
    pub seed: u64,
    pub train_fraction: f64,
    pub scale: Option<ScaleTag>,
    pub units: MetricUnits,
    pub forest: ForestConfig,
    /// `None` when no SVR field was set, so the kernel width is scaled to the data.
    pub svr: SvrSettings,
    pub repeats: usize,
    pub bins: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvrSettings {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: Option<f64>,
    pub linear: bool,
    pub kkt_tolerance: f64,
    pub max_passes: usize,
}

impl SvrSettings {
    /// Full solver config; an unset RBF width falls back to `scaled_gamma`.
    pub fn resolve(&self, x: &crate::Matrix) -> SvrConfig {
        let kernel = if self.linear {
            KernelSpec::Linear
        } else {
            KernelSpec::Rbf {
                gamma: self.gamma.unwrap_or_else(|| crate::svr::scaled_gamma(x)),
            }
        };
        SvrConfig {
            c: self.c,
            epsilon: self.epsilon,
            kernel,
            kkt_tolerance: self.kkt_tolerance,
            max_passes: self.max_passes,
        }
    }
}

struct Resolver<'a> {
    s: &'a Settings,
    problems: Vec<String>,
}

impl Resolver<'_> {
    fn parse<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: Display,
    {
        let raw = self.s.get(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                self.problems
                    .push(format!("{key}: cannot parse {raw:?}: {e}"));
                None
            }
        }
    }

    fn check(&mut self, ok: bool, key: &str, msg: impl Display) {
        if !ok {
            self.problems.push(format!("{key}: {msg}"));
        }
    }
}

impl RunConfig {
    /// Validates every field and reports all problems at once.
    pub fn resolve(s: &Settings, needs_source: bool) -> Result<RunConfig> {
        let mut r = Resolver {
            s,
            problems: Vec::new(),
        };
        let seed: u64 = r.parse("seed").unwrap_or(0);
        let input = s.get("input").map(str::to_string);
        let scenario: Option<ScenarioId> = r.parse("scenario");
        let n: usize = r.parse("n").unwrap_or(DEFAULT_SYNTH_N);
        r.check(n >= 1, "n", "must be at least 1");
        let source = match (input, scenario, s.get("scenario").is_some()) {
            (Some(path), None, false) => DataSource::Csv { path },
            (None, Some(scenario), _) => DataSource::Synth { scenario, n, seed },
            (Some(_), _, true) => {
                r.problems
                    .push("input/scenario: give exactly one data source".into());
                DataSource::Csv {
                    path: String::new(),
                }
            }
            _ => {
                if needs_source && s.get("scenario").is_none() {
                    r.problems
                        .push("input/scenario: a data source is required".into());
                }
                DataSource::Csv {
                    path: String::new(),
                }
            }
        };
        let model: ModelKind = r.parse("model").unwrap_or(ModelKind::Rfr);
        let train_fraction: f64 = r.parse("fraction").unwrap_or(DEFAULT_TRAIN_FRACTION);
        r.check(
            train_fraction > 0.0 && train_fraction < 1.0,
            "fraction",
            format!("must lie in (0, 1), got {train_fraction}"),
        );
        let scale: Option<ScaleTag> = r.parse("scale");
        let units: MetricUnits = r.parse("units").unwrap_or_default();

        let mut forest = ForestConfig::new(N_FEATURES);
        forest.master_seed = seed;
        if let Some(v) = r.parse("trees") {
            forest.n_trees = v;
        }
        r.check(forest.n_trees >= 1, "trees", "must be at least 1");
        if let Some(v) = r.parse("m_try") {
            forest.tree.m_try = v;
        }
        r.check(
            (1..=N_FEATURES).contains(&forest.tree.m_try),
            "m_try",
            format!("must lie in 1..={N_FEATURES}, got {}", forest.tree.m_try),
        );
        if let Some(v) = r.parse::<usize>("max_depth") {
            forest.tree.max_depth = Some(v);
        }
        if let Some(v) = r.parse("min_samples_leaf") {
            forest.tree.min_samples_leaf = v;
        }
        r.check(
            forest.tree.min_samples_leaf >= 1,
            "min_samples_leaf",
            "must be at least 1",
        );
        if let Some(v) = r.parse("min_samples_split") {
            forest.tree.min_samples_split = v;
        }
        r.check(
            forest.tree.min_samples_split >= 2,
            "min_samples_split",
            "must be at least 2",
        );
        if let Some(v) = r.parse("bootstrap") {
            forest.bootstrap = v;
        }

        let defaults = SvrConfig::default();
        let kernel = s.get("kernel").unwrap_or("rbf").to_ascii_lowercase();
        r.check(
            kernel == "rbf" || kernel == "linear",
            "kernel",
            format!("must be rbf or linear, got {kernel:?}"),
        );
        let svr = SvrSettings {
            c: r.parse("c").unwrap_or(defaults.c),
            epsilon: r.parse("epsilon").unwrap_or(defaults.epsilon),
            gamma: r.parse("gamma"),
            linear: kernel == "linear",
            kkt_tolerance: r.parse("kkt_tolerance").unwrap_or(defaults.kkt_tolerance),
            max_passes: r.parse("max_passes").unwrap_or(defaults.max_passes),
        };
        r.check(
            svr.c.is_finite() && svr.c > 0.0,
            "c",
            format!("must be positive, got {}", svr.c),
        );
        r.check(
            svr.epsilon.is_finite() && svr.epsilon >= 0.0,
            "epsilon",
            format!("must be nonnegative, got {}", svr.epsilon),
        );
        if let Some(g) = svr.gamma {
            r.check(
                g.is_finite() && g > 0.0,
                "gamma",
                format!("must be positive, got {g}"),
            );
        }
        r.check(
            svr.kkt_tolerance.is_finite() && svr.kkt_tolerance > 0.0,
            "kkt_tolerance",
            "must be positive",
        );
        r.check(svr.max_passes >= 1, "max_passes", "must be at least 1");

        let repeats: usize = r.parse("repeats").unwrap_or(DEFAULT_REPEATS);
        r.check(repeats >= 1, "repeats", "must be at least 1");
        let bins: usize = r.parse("bins").unwrap_or(DEFAULT_BINS);
        r.check(bins >= 2, "bins", format!("must be at least 2, got {bins}"));

        if !r.problems.is_empty() {
            return Err(Error::invalid(r.problems.join("; ")));
        }
        Ok(RunConfig {
            source,
            model,
            seed,
            train_fraction,
            scale,
            units,
            forest,
            svr,
            repeats,
            bins,
        })
    }
}
