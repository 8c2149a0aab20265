//! Command-line front end: `stats`, `synth`, `train`, `eval`, `compare`, `diagnose`.

pub mod config;
pub mod report;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bundle::{data_digest, ModelBundle, ModelKind, TrainedModel, BUNDLE_FORMAT_VERSION};
use crate::data::synth::{synthesize, ScenarioId, SynthScenario};
use crate::data::{apply_normalizer, describe, load_csv, Dataset, ScaleTag, STAT_LABELS};
use crate::error::Error;
use crate::eval::permutation_importance;
use crate::forest::{bin_targets, fit_classification_forest, theory_diagnostics};
use crate::persist;
use crate::pipeline::{evaluate_in, train_forest, MetricUnits, Prepared};
use crate::svr::fit_svr;

use config::{RunConfig, Settings};
use report::{
    CompareReport, DiagnoseReport, EvalDocument, MetricTable, ModelSection, NamedScore, RunMetadata,
};

#[derive(Debug, Parser)]
#[command(
    name = "cake-moisture",
    version,
    about = "Random forest and SVR models for filter cake moisture"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Six-number summary of every column of a CSV dataset.
    Stats(StatsArgs),
    /// Write a synthetic dataset for a scenario.
    Synth(SynthArgs),
    /// Fit one model and save it with its normalizer and split.
    Train(TrainArgs),
    /// Evaluate a saved model.
    Eval(EvalArgs),
    /// Train both models on one split and compare them.
    Compare(CompareArgs),
    /// Margin, strength and correlation diagnostics on binned targets.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Validation,
    All,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Target units to report; the input scale is inferred.
    #[arg(long)]
    pub scale: Option<ScaleTag>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = config::DEFAULT_SYNTH_N)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "percent")]
    pub scale: ScaleTag,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// CSV dataset.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Synthetic scenario (s1 or s2) used instead of a CSV file.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Synthetic sample count.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Flat key = value file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training share of the split.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub scale: Option<String>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub m_try: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    #[arg(long)]
    pub bootstrap: Option<bool>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub kkt_tolerance: Option<f64>,
    #[arg(long)]
    pub max_passes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// rfr or svr.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Saved model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluate every row of this CSV instead of the stored split.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Part of the stored split to evaluate.
    #[arg(long, value_enum)]
    pub subset: Option<Subset>,
    /// normalized or original.
    #[arg(long, default_value = "normalized")]
    pub units: MetricUnits,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write actual,predicted pairs as CSV.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub units: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of equal-frequency target bins.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command: the stage that failed and why.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
    pub usage: bool,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> Stage<T> for crate::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure {
            stage,
            error,
            usage: stage == "config",
        })
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(if f.usage { 2 } else { 1 })
        }
    }
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Stats(a) => cmd_stats(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> crate::Result<()> {
    match out {
        Some(p) => persist::write_text_file(p, text),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())
                .and_then(|_| so.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> crate::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

pub fn cmd_stats(a: &StatsArgs) -> Result<(), Failure> {
    let mut d = load_csv(&a.input).stage("load")?;
    if let Some(s) = a.scale {
        d = d.with_target_scale(s);
    }
    let stats = describe(&d).stage("stats")?;
    let text = match a.format {
        Format::Json => {
            let mut t = serde_json::to_string_pretty(&stats.columns)
                .map_err(Error::from)
                .stage("stats")?;
            t.push('\n');
            t
        }
        Format::Csv => {
            let mut wr = csv::Writer::from_writer(Vec::new());
            let header: Vec<&str> = std::iter::once("statistic")
                .chain(stats.columns.iter().map(|c| c.column.as_str()))
                .collect();
            let mut rows = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
            for (k, label) in STAT_LABELS.iter().enumerate() {
                let mut row = vec![label.to_string()];
                row.extend(stats.columns.iter().map(|c| c.values()[k].to_string()));
                rows.push(row);
            }
            for r in rows {
                wr.write_record(&r).map_err(Error::from).stage("stats")?;
            }
            let bytes = wr
                .into_inner()
                .map_err(|e| Error::invalid(e.to_string()))
                .stage("stats")?;
            String::from_utf8(bytes)
                .map_err(|e| Error::invalid(e.to_string()))
                .stage("stats")?
        }
    };
    emit(a.out.as_deref(), &text).stage("write")
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), Failure> {
    let id: ScenarioId = a.scenario.parse().stage("config")?;
    if a.n == 0 {
        return Err(Error::invalid("n: must be at least 1")).stage("config");
    }
    let d = synthesize(&SynthScenario::new(id), a.n, a.seed)
        .stage("synth")?
        .with_target_scale(a.scale);
    emit(a.out.as_deref(), &d.to_csv_string()).stage("write")
}

fn settings_from(run: &RunArgs) -> Result<Settings, Failure> {
    let mut s = match &run.config {
        Some(p) => Settings::load_file(p).stage("config")?,
        None => Settings::default(),
    };
    if let Some(p) = &run.source.input {
        s.set("input", Some(p.display()));
    }
    s.set("scenario", run.source.scenario.as_ref());
    s.set("n", run.source.n);
    s.set("seed", run.seed);
    s.set("fraction", run.fraction);
    s.set("scale", run.scale.as_ref());
    s.set("trees", run.trees);
    s.set("m_try", run.m_try);
    s.set("max_depth", run.max_depth);
    s.set("min_samples_leaf", run.min_samples_leaf);
    s.set("min_samples_split", run.min_samples_split);
    s.set("bootstrap", run.bootstrap);
    s.set("c", run.c);
    s.set("epsilon", run.epsilon);
    s.set("gamma", run.gamma);
    s.set("kernel", run.kernel.as_ref());
    s.set("kkt_tolerance", run.kkt_tolerance);
    s.set("max_passes", run.max_passes);
    Ok(s)
}

fn load_source(cfg: &RunConfig) -> Result<Dataset, Failure> {
    cfg.source.load(cfg.scale).stage("load")
}

fn warn_unconverged(m: &crate::svr::SvrModel) {
    if !m.converged {
        eprintln!(
            "warning: svr solver stopped after {} iterations with KKT violation {:.3e}; model is flagged as not converged",
            m.iterations, m.max_violation
        );
    }
}

fn fit_kind(kind: ModelKind, cfg: &RunConfig, p: &Prepared) -> Result<TrainedModel, Failure> {
    match kind {
        ModelKind::Rfr => Ok(TrainedModel::Rfr(
            train_forest(p, &cfg.forest).stage("train rfr")?,
        )),
        ModelKind::Svr => {
            let x = p.train.features();
            let m = fit_svr(&x, &p.train.targets(), &cfg.svr.resolve(&x)).stage("train svr")?;
            warn_unconverged(&m);
            Ok(TrainedModel::Svr(m))
        }
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), Failure> {
    let mut s = settings_from(&a.run)?;
    s.set("model", a.model.as_ref());
    let cfg = RunConfig::resolve(&s, true).stage("config")?;
    let d = load_source(&cfg)?;
    let p = Prepared::new(&d, cfg.train_fraction, cfg.seed).stage("split")?;
    let model = fit_kind(cfg.model, &cfg, &p)?;
    let bundle = ModelBundle {
        version: BUNDLE_FORMAT_VERSION,
        schema_fingerprint: d.schema.fingerprint(),
        model,
        normalizer: p.normalizer,
        split: p.indices,
        source: cfg.source.clone(),
        data_digest: data_digest(&d),
        scale_tag: d.scale_tag,
        config_digest: s.digest(),
        seed: cfg.seed,
    };
    bundle.save(&a.out).stage("write")?;
    eprintln!(
        "trained {} on {} rows ({} held out); wrote {}",
        bundle.kind(),
        bundle.split.train.len(),
        bundle.split.test.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), Failure> {
    let bundle = ModelBundle::load(&a.model).stage("load model")?;
    let (rows, subset_name) = match &a.input {
        Some(path) => {
            if matches!(a.subset, Some(Subset::Train | Subset::Validation)) {
                return Err(Error::invalid(
                    "subset: only 'all' applies to an explicit input",
                ))
                .stage("config");
            }
            let d = load_csv(path).stage("load")?;
            bundle.check_dataset(&d).stage("check")?;
            (d.with_target_scale(bundle.scale_tag), "all".to_string())
        }
        None => {
            let d = bundle.source.load(Some(bundle.scale_tag)).stage("load")?;
            bundle.check_dataset(&d).stage("check")?;
            if data_digest(&d) != bundle.data_digest {
                return Err(Error::SchemaMismatch(format!(
                    "data from {} differs from the data the model was trained on",
                    bundle.source
                )))
                .stage("check");
            }
            let subset = a.subset.unwrap_or(Subset::Validation);
            let idx: Vec<usize> = match subset {
                Subset::Train => bundle.split.train.clone(),
                Subset::Validation => bundle.split.test.clone(),
                Subset::All => (0..d.len()).collect(),
            };
            let name = format!("{subset:?}").to_ascii_lowercase();
            (d.subset(&idx), name)
        }
    };
    let normalized = apply_normalizer(&bundle.normalizer, &rows).stage("normalize")?;
    let report = evaluate_in(
        &bundle.model,
        &normalized,
        &bundle.normalizer,
        a.units,
        bundle.scale_tag,
    )
    .stage("evaluate")?;
    if let Some(p) = &a.pairs {
        let mut buf = Vec::new();
        report.write_pairs_csv(&mut buf).stage("write")?;
        let text = String::from_utf8(buf)
            .map_err(|e| Error::invalid(e.to_string()))
            .stage("write")?;
        persist::write_text_file(p, &text).stage("write")?;
    }
    let doc = EvalDocument {
        model_kind: bundle.kind(),
        subset: subset_name,
        units: a.units,
        config_digest: bundle.config_digest.clone(),
        seed: bundle.seed,
        report,
    };
    emit_json(a.out.as_deref(), &doc).stage("write")
}

fn names_of(d: &Dataset) -> Vec<String> {
    d.schema.names.clone()
}

pub fn cmd_compare(a: &CompareArgs) -> Result<(), Failure> {
    let mut s = settings_from(&a.run)?;
    s.set("repeats", a.repeats);
    s.set("units", a.units.as_ref());
    let cfg = RunConfig::resolve(&s, true).stage("config")?;
    let d = load_source(&cfg)?;
    let p = Prepared::new(&d, cfg.train_fraction, cfg.seed).stage("split")?;
    let names = names_of(&d);
    let mut sections = Vec::new();
    for kind in [ModelKind::Rfr, ModelKind::Svr] {
        let model = fit_kind(kind, &cfg, &p)?;
        let train = evaluate_in(&model, &p.train, &p.normalizer, cfg.units, d.scale_tag)
            .stage("evaluate")?;
        let validation = evaluate_in(&model, &p.test, &p.normalizer, cfg.units, d.scale_tag)
            .stage("evaluate")?;
        let perm = permutation_importance(
            &model,
            &p.test.features(),
            &p.test.targets(),
            cfg.seed,
            cfg.repeats,
        )
        .stage("importance")?
        .with_names(&names);
        let (impurity, converged) = match &model {
            TrainedModel::Rfr(f) => (
                Some(
                    f.impurity_importance()
                        .into_iter()
                        .zip(&names)
                        .map(|(score, n)| NamedScore {
                            feature: n.clone(),
                            score,
                        })
                        .collect(),
                ),
                None,
            ),
            TrainedModel::Svr(m) => (None, Some(m.converged)),
        };
        sections.push(ModelSection {
            kind,
            train,
            validation,
            permutation_importance: perm,
            impurity_importance: impurity,
            converged,
        });
    }
    let table = MetricTable::from_reports(
        &sections
            .iter()
            .map(|m| (m.kind.to_string(), &m.validation))
            .collect::<Vec<_>>(),
    );
    eprint!("{}", table.render());
    let report = CompareReport {
        metadata: RunMetadata::new(
            cfg.seed,
            s.digest(),
            s.entries().clone(),
            cfg.source.clone(),
        ),
        units: cfg.units,
        split: p.indices,
        table,
        models: sections,
    };
    emit_json(a.out.as_deref(), &report).stage("write")
}

pub fn cmd_diagnose(a: &DiagnoseArgs) -> Result<(), Failure> {
    let mut s = settings_from(&a.run)?;
    s.set("bins", a.bins);
    let cfg = RunConfig::resolve(&s, true).stage("config")?;
    let d = load_source(&cfg)?;
    let p = Prepared::new(&d, cfg.train_fraction, cfg.seed).stage("split")?;
    let binning = bin_targets(&p.train.targets(), cfg.bins).stage("bin targets")?;
    let test_labels: Vec<usize> = p.test.targets().iter().map(|&v| binning.label(v)).collect();
    let forest =
        fit_classification_forest(&p.train.features(), &binning.labels, cfg.bins, &cfg.forest)
            .stage("train classifier")?;
    let diagnostics = theory_diagnostics(&forest, &p.test.features(), &test_labels, &binning.edges)
        .stage("diagnose")?;
    let report = DiagnoseReport {
        metadata: RunMetadata::new(
            cfg.seed,
            s.digest(),
            s.entries().clone(),
            cfg.source.clone(),
        ),
        n_bins: cfg.bins,
        split: p.indices,
        diagnostics,
    };
    emit_json(a.out.as_deref(), &report).stage("write")
}
