use std::ffi::{CStr, CString};
use std::ptr;

use cake_moisture::data::synth::{synthesize, ScenarioId, SynthScenario};
use cake_moisture_ffi::*;

fn s1() -> (Vec<f64>, Vec<f64>, usize) {
    let d = synthesize(&SynthScenario::new(ScenarioId::S1), 144, 0).unwrap();
    let x = d.samples.iter().flat_map(|s| s.features.clone()).collect();
    (x, d.targets(), d.len())
}

fn forest_params() -> CmForestParams {
    CmForestParams {
        n_trees: 50,
        m_try: 2,
        max_depth: 0,
        min_samples_leaf: 1,
        min_samples_split: 2,
        bootstrap: true,
        seed: 3,
    }
}

fn last_error() -> String {
    let p = cm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn forest_fit_predict_save_load() {
    let (x, y, n) = s1();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(
            cm_forest_fit(x.as_ptr(), y.as_ptr(), n, 7, &forest_params(), &mut model),
            CmStatus::Ok
        );
        assert!(cm_last_error_message().is_null());
        let mut k = CmModelKind::Svr;
        assert_eq!(cm_model_kind(model, &mut k), CmStatus::Ok);
        assert_eq!(k, CmModelKind::Rfr);
        let mut nf = 0usize;
        assert_eq!(cm_model_n_features(model, &mut nf), CmStatus::Ok);
        assert_eq!(nf, 7);

        let mut pred = vec![0.0; n];
        assert_eq!(
            cm_model_predict(model, x.as_ptr(), n, 7, pred.as_mut_ptr()),
            CmStatus::Ok
        );
        let mut m = CmMetrics::default();
        assert_eq!(
            cm_metrics(y.as_ptr(), pred.as_ptr(), n, &mut m),
            CmStatus::Ok
        );
        assert!(m.r2_centered > 0.8, "{m:?}");
        assert!((26.0..41.0).contains(&pred[0]));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(cm_model_save(model, path.as_ptr()), CmStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(cm_model_load(path.as_ptr(), &mut back), CmStatus::Ok);
        let mut again = vec![0.0; n];
        assert_eq!(
            cm_model_predict(back, x.as_ptr(), n, 7, again.as_mut_ptr()),
            CmStatus::Ok
        );
        assert_eq!(pred, again);
        cm_model_free(back);
        cm_model_free(model);
    }
}

#[test]
fn svr_fit_reports_convergence() {
    let (x, y, n) = s1();
    let params = CmSvrParams {
        c: 1.0,
        epsilon: 0.01,
        gamma: 0.0,
        linear: false,
        kkt_tolerance: 1e-3,
        max_passes: 1000,
    };
    let mut model = ptr::null_mut();
    let mut converged = false;
    unsafe {
        assert_eq!(
            cm_svr_fit(
                x.as_ptr(),
                y.as_ptr(),
                n,
                7,
                &params,
                &mut model,
                &mut converged
            ),
            CmStatus::Ok
        );
        assert!(converged);
        let mut k = CmModelKind::Rfr;
        cm_model_kind(model, &mut k);
        assert_eq!(k, CmModelKind::Svr);
        let mut out = [0.0];
        assert_eq!(
            cm_model_predict(model, x.as_ptr(), 1, 7, out.as_mut_ptr()),
            CmStatus::Ok
        );
        assert!(out[0].is_finite());
        cm_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    let (x, y, n) = s1();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            cm_forest_fit(x.as_ptr(), y.as_ptr(), n, 7, ptr::null(), &mut model),
            CmStatus::NullPointer
        );
        assert!(last_error().contains("params"));

        let mut bad = forest_params();
        bad.m_try = 9;
        assert_eq!(
            cm_forest_fit(x.as_ptr(), y.as_ptr(), n, 7, &bad, &mut model),
            CmStatus::InvalidArgument
        );
        assert!(model.is_null());

        assert_eq!(
            cm_forest_fit(
                x.as_ptr(),
                y.as_ptr(),
                n / 7,
                6,
                &forest_params(),
                &mut model
            ),
            CmStatus::Arity
        );

        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(cm_model_load(missing.as_ptr(), &mut model), CmStatus::Io);
        assert!(!last_error().is_empty());

        let mut nf = 0usize;
        assert_eq!(
            cm_model_n_features(ptr::null(), &mut nf),
            CmStatus::NullPointer
        );

        assert_eq!(
            cm_forest_fit(x.as_ptr(), y.as_ptr(), n, 7, &forest_params(), &mut model),
            CmStatus::Ok
        );
        let mut out = [0.0];
        assert_eq!(
            cm_model_predict(model, x.as_ptr(), 1, 3, out.as_mut_ptr()),
            CmStatus::Arity
        );
        cm_model_free(model);
        cm_model_free(ptr::null_mut());

        let mut m = CmMetrics::default();
        assert_eq!(
            cm_metrics(y.as_ptr(), y.as_ptr(), 0, &mut m),
            CmStatus::Degenerate
        );
        assert_eq!(cm_metrics(y.as_ptr(), y.as_ptr(), 1, &mut m), CmStatus::Ok);
        assert!(m.r2_centered.is_nan());
        assert_eq!(m.r2_uncentered, 1.0);
    }
}
