//! C ABI over the cake-moisture toolkit.
//!
//! Every function returns a [`CmStatus`]. On failure the message is available
//! from [`cm_last_error_message`] on the same thread until the next call.
//! Models are opaque [`CmModel`] handles released with [`cm_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cake_moisture::bundle::{
    data_digest, DataSource, ModelBundle, ModelKind, TrainedModel, BUNDLE_FORMAT_VERSION,
};
use cake_moisture::data::{Dataset, Sample, ScaleTag, SplitIndices};
use cake_moisture::eval::{mae, mse, r2_centered, r2_uncentered};
use cake_moisture::forest::ForestConfig;
use cake_moisture::pipeline::{train_forest, train_svr, Prepared};
use cake_moisture::svr::{KernelSpec, SvrConfig};
use cake_moisture::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    SchemaMismatch = 5,
    Arity = 6,
    Degenerate = 7,
    Version = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmModelKind {
    Rfr = 0,
    Svr = 1,
}

/// Forest hyperparameters. `max_depth == 0` means unlimited.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CmForestParams {
    pub n_trees: usize,
    pub m_try: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

/// SVR hyperparameters. `gamma <= 0` selects the width scaled to the data;
/// `linear` ignores `gamma`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CmSvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub linear: bool,
    pub kkt_tolerance: f64,
    pub max_passes: usize,
}

/// Undefined R² values are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct CmMetrics {
    pub r2_uncentered: f64,
    pub r2_centered: f64,
    pub mse: f64,
    pub mae: f64,
}

/// Trained model with its normalizer.
pub struct CmModel {
    bundle: ModelBundle,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => CmStatus::Io,
            Error::Csv(_) | Error::Json(_) | Error::ParseCell { .. } | Error::NonFinite { .. } => {
                CmStatus::Parse
            }
            Error::HeaderMismatch(_) | Error::SchemaMismatch(_) => CmStatus::SchemaMismatch,
            Error::Arity { .. } | Error::LengthMismatch(..) => CmStatus::Arity,
            Error::EmptyDataset
            | Error::ConstantColumn(_)
            | Error::Degenerate(_)
            | Error::NoOobTrees(_) => CmStatus::Degenerate,
            Error::Version(_) => CmStatus::Version,
            _ => CmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: CmStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: Option<String>) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    });
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            CmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(_) => {
            set_error(Some("internal panic".into()));
            CmStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(CmStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn model_ref<'a>(m: *const CmModel) -> Result<&'a CmModel, Failure> {
    non_null(m, "model")?;
    Ok(&*m)
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    non_null(p, "path")?;
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(CmStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn dataset(
    x: *const f64,
    y: *const f64,
    n_rows: usize,
    n_cols: usize,
) -> Result<Dataset, Failure> {
    let cells = n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| fail(CmStatus::InvalidArgument, "row count overflows"))?;
    let x = slice(x, cells, "features")?;
    let y = slice(y, n_rows, "targets")?;
    let samples = (0..n_rows)
        .map(|i| Sample {
            features: x[i * n_cols..(i + 1) * n_cols].to_vec(),
            target: y[i],
        })
        .collect();
    Ok(Dataset::new(samples, ScaleTag::Percent)?)
}

fn bundle_on_all_rows(
    d: &Dataset,
    seed: u64,
    fit: impl FnOnce(&Prepared) -> Result<TrainedModel, Failure>,
) -> Result<ModelBundle, Failure> {
    let indices = SplitIndices {
        seed,
        train_fraction: 1.0,
        train: (0..d.len()).collect(),
        test: Vec::new(),
    };
    let p = Prepared::from_indices(d, indices)?;
    let model = fit(&p)?;
    Ok(ModelBundle {
        version: BUNDLE_FORMAT_VERSION,
        schema_fingerprint: d.schema.fingerprint(),
        model,
        normalizer: p.normalizer,
        split: p.indices,
        source: DataSource::Memory { rows: d.len() },
        data_digest: data_digest(d),
        scale_tag: d.scale_tag,
        config_digest: String::new(),
        seed,
    })
}

unsafe fn store(out: *mut *mut CmModel, bundle: ModelBundle) {
    *out = Box::into_raw(Box::new(CmModel { bundle }));
}

/// Message for the last failed call on this thread, or null after a success.
///
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a model file written by `cm_model_save` or the `train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_model_load(path: *const c_char, out: *mut *mut CmModel) -> CmStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path)?;
        store(out, ModelBundle::load(path)?);
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `path` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cm_model_save(model: *const CmModel, path: *const c_char) -> CmStatus {
    guard(|| {
        let m = model_ref(model)?;
        m.bundle.save(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cm_model_free(model: *mut CmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_model_n_features(model: *const CmModel, out: *mut usize) -> CmStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = model_ref(model)?.bundle.model.n_features();
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_model_kind(model: *const CmModel, out: *mut CmModelKind) -> CmStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = match model_ref(model)?.bundle.kind() {
            ModelKind::Rfr => CmModelKind::Rfr,
            ModelKind::Svr => CmModelKind::Svr,
        };
        Ok(())
    })
}

/// Predicts `n_rows` raw feature rows (row-major, `n_cols` each) in original target units.
///
/// # Safety
/// `x` must hold `n_rows * n_cols` values and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn cm_model_predict(
    model: *const CmModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> CmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let expected = m.bundle.model.n_features();
        if n_cols != expected {
            return Err(Error::Arity {
                expected,
                got: n_cols,
            }
            .into());
        }
        let cells = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| fail(CmStatus::InvalidArgument, "row count overflows"))?;
        let x = slice(x, cells, "features")?;
        if n_rows > 0 {
            non_null(out, "out")?;
        }
        let preds = x
            .chunks_exact(n_cols)
            .map(|row| m.bundle.predict(row))
            .collect::<Result<Vec<f64>, Error>>()?;
        if n_rows > 0 {
            std::slice::from_raw_parts_mut(out, n_rows).copy_from_slice(&preds);
        }
        Ok(())
    })
}

/// Fits a forest on every supplied row. Features are min-max scaled internally.
///
/// # Safety
/// `x` must hold `n_rows * n_cols` values, `y` `n_rows` values, `params` a valid struct
/// and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_forest_fit(
    x: *const f64,
    y: *const f64,
    n_rows: usize,
    n_cols: usize,
    params: *const CmForestParams,
    out: *mut *mut CmModel,
) -> CmStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(params, "params")?;
        let p = *params;
        let d = dataset(x, y, n_rows, n_cols)?;
        let mut cfg = ForestConfig::new(n_cols);
        cfg.n_trees = p.n_trees;
        cfg.bootstrap = p.bootstrap;
        cfg.master_seed = p.seed;
        cfg.tree.m_try = p.m_try;
        cfg.tree.max_depth = (p.max_depth > 0).then_some(p.max_depth);
        cfg.tree.min_samples_leaf = p.min_samples_leaf;
        cfg.tree.min_samples_split = p.min_samples_split;
        let bundle = bundle_on_all_rows(&d, p.seed, |prep| {
            Ok(TrainedModel::Rfr(train_forest(prep, &cfg)?))
        })?;
        store(out, bundle);
        Ok(())
    })
}

/// Fits an ε-SVR on every supplied row. `converged` receives the solver outcome
/// when non-null; a model is returned either way.
///
/// # Safety
/// As for `cm_forest_fit`; `converged` may be null.
#[no_mangle]
pub unsafe extern "C" fn cm_svr_fit(
    x: *const f64,
    y: *const f64,
    n_rows: usize,
    n_cols: usize,
    params: *const CmSvrParams,
    out: *mut *mut CmModel,
    converged: *mut bool,
) -> CmStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(params, "params")?;
        let p = *params;
        let d = dataset(x, y, n_rows, n_cols)?;
        let mut ok = false;
        let bundle = bundle_on_all_rows(&d, 0, |prep| {
            let x = prep.train.features();
            let mut cfg = SvrConfig::scaled_for(&x);
            cfg.c = p.c;
            cfg.epsilon = p.epsilon;
            cfg.kkt_tolerance = p.kkt_tolerance;
            cfg.max_passes = p.max_passes;
            if p.linear {
                cfg.kernel = KernelSpec::Linear;
            } else if p.gamma > 0.0 {
                cfg.kernel = KernelSpec::Rbf { gamma: p.gamma };
            }
            let m = train_svr(prep, Some(&cfg))?;
            ok = m.converged;
            Ok(TrainedModel::Svr(m))
        })?;
        if !converged.is_null() {
            *converged = ok;
        }
        store(out, bundle);
        Ok(())
    })
}

/// Regression metrics of `predicted` against `actual`.
///
/// # Safety
/// Both arrays must hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_metrics(
    actual: *const f64,
    predicted: *const f64,
    n: usize,
    out: *mut CmMetrics,
) -> CmStatus {
    guard(|| {
        non_null(out, "out")?;
        let y = slice(actual, n, "actual")?;
        let p = slice(predicted, n, "predicted")?;
        *out = CmMetrics {
            r2_uncentered: r2_uncentered(y, p).unwrap_or(f64::NAN),
            r2_centered: r2_centered(y, p).unwrap_or(f64::NAN),
            mse: mse(y, p)?,
            mae: mae(y, p)?,
        };
        Ok(())
    })
}
