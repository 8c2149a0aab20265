//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero if any fail.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};

use cake_moisture::bundle::{
    data_digest, DataSource, ModelBundle, TrainedModel, BUNDLE_FORMAT_VERSION,
};
use cake_moisture::data::synth::{synthesize, ScenarioId, SynthScenario};
use cake_moisture::data::{describe, load_csv, read_csv, split_indices, Dataset, N_FEATURES};
use cake_moisture::eval::{mae, mse, permutation_importance, r2_centered, r2_uncentered};
use cake_moisture::forest::{bin_targets, fit_classification_forest, theory_diagnostics};
use cake_moisture::forest::{fit_forest_with_workers, Forest, ForestConfig};
use cake_moisture::pipeline::{train_forest, train_svr, Prepared};
use cake_moisture::svr::{fit_svr, kkt_report, KernelSpec, SvrConfig, SvrModel};
use cake_moisture::tree::{fit_tree, TreeConfig};
use cake_moisture::{Matrix, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn metric_oracle() -> Check {
    let y = [1.0, 2.0, 3.0];
    let p = [1.0, 2.0, 4.0];
    let got = [
        r2_uncentered(&y, &p).unwrap(),
        r2_centered(&y, &p).unwrap(),
        mse(&y, &p).unwrap(),
        mae(&y, &p).unwrap(),
    ];
    let want = [1.0 - 1.0 / 14.0, 0.5, 1.0 / 3.0, 1.0 / 3.0];
    for (g, w) in got.iter().zip(want) {
        ensure(close(*g, w, 1e-12), format!("{g} vs {w}"))?;
    }
    Ok(format!("{got:?}"))
}

fn split_protocol() -> Check {
    let s = split_indices(144, 0.7, 0).unwrap();
    ensure(
        s.train.len() == 100 && s.test.len() == 44,
        "sizes differ from 100/44",
    )?;
    for seed in 0..100 {
        let s = split_indices(144, 0.7, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        ensure(
            all == (0..144).collect::<Vec<_>>(),
            format!("seed {seed} is not a partition"),
        )?;
        ensure(
            s == split_indices(144, 0.7, seed).unwrap(),
            format!("seed {seed} not reproducible"),
        )?;
    }
    Ok("100/44 over 100 seeds".into())
}

// Rows: min, Q1, median, mean, Q3, max. Columns in schema order plus moisture.
const TARGET_SUMMARY_S1: [[f64; 8]; 6] = [
    [0.20, 32.00, 2.09, 150.0, 2.00, 14.00, 7.34, 26.09],
    [0.20, 35.0, 2.11, 150.0, 2.00, 15.50, 9.25, 31.94],
    [0.29, 49.50, 3.52, 150.0, 10.00, 23.50, 12.00, 33.11],
    [0.29, 50.00, 3.57, 150.0, 9.00, 23.00, 11.82, 33.17],
    [0.38, 63.75, 4.91, 150.0, 15.00, 32.00, 14.0, 34.47],
    [0.38, 68.00, 5.67, 150.0, 15.00, 34.00, 16.00, 39.76],
];
const TARGET_SUMMARY_S2: [[f64; 8]; 6] = [
    [0.20, 32.00, 2.00, 150.0, 2.00, 14.00, 6.50, 24.45],
    [0.20, 33.25, 2.10, 150.0, 2.00, 15.50, 10.00, 31.73],
    [0.29, 50.00, 3.45, 150.0, 10.00, 23.00, 10.00, 33.47],
    [0.29, 49.42, 3.47, 150.0, 9.00, 23.50, 9.96, 33.57],
    [0.38, 64.75, 4.74, 150.0, 15.00, 32.00, 10.38, 35.24],
    [0.38, 67.00, 5.10, 150.0, 15.00, 34.00, 11.50, 40.94],
];

fn synth_calibration() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut worst = 0.0f64;
    for (name, summary) in [("s1", TARGET_SUMMARY_S1), ("s2", TARGET_SUMMARY_S2)] {
        let path = dir.path().join(format!("{name}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_cake-moisture"))
            .args([
                "synth",
                "--scenario",
                name,
                "--n",
                "144",
                "--out",
                path.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        ensure(status.success(), format!("synth {name} failed"))?;
        let d = load_csv(&path).unwrap();
        ensure(d.len() == 144, "row count")?;
        let stats = describe(&d).unwrap();
        for (j, col) in stats.columns.iter().enumerate() {
            let got = col.values();
            for (r, row) in summary.iter().enumerate() {
                let want = row[j];
                if j == 3 {
                    ensure(got[r] == 150.0, format!("{name} pressure {}", got[r]))?;
                    continue;
                }
                let rel = (got[r] - want).abs() / want.abs();
                worst = worst.max(rel);
                ensure(
                    rel <= 0.05,
                    format!("{name} {} stat {r}: {} vs {want}", col.column, got[r]),
                )?;
            }
        }
    }
    Ok(format!("worst relative deviation {:.2}%", worst * 100.0))
}

fn validation_r2(p: &Prepared, predict: impl Fn(&Matrix) -> Result<Vec<f64>>) -> f64 {
    let x = p.test.features();
    r2_centered(&p.test.targets(), &predict(&x).unwrap()).unwrap()
}

fn model_ordering() -> Check {
    let mut lines = Vec::new();
    for id in [ScenarioId::S1, ScenarioId::S2] {
        let sc = SynthScenario::new(id);
        let mut worst_rfr = f64::INFINITY;
        let mut worst_gap = f64::INFINITY;
        for seed in 0..5u64 {
            let d = synthesize(&sc, 144, seed).unwrap();
            let p = Prepared::new(&d, 0.7, seed).unwrap();
            let cfg = ForestConfig {
                master_seed: seed,
                ..ForestConfig::new(N_FEATURES)
            };
            let f = train_forest(&p, &cfg).unwrap();
            let s = train_svr(&p, None).unwrap();
            let rf = validation_r2(&p, |x| f.predict_matrix(x));
            let sv = validation_r2(&p, |x| s.predict_matrix(x));
            worst_rfr = worst_rfr.min(rf);
            worst_gap = worst_gap.min(rf - sv);
            ensure(
                rf >= 0.90 && rf > sv,
                format!("{id:?} seed {seed}: rfr {rf:.4} svr {sv:.4}"),
            )?;
        }
        lines.push(format!(
            "{id:?} min rfr {worst_rfr:.3} min gap {worst_gap:.3}"
        ));
    }
    Ok(lines.join(", "))
}

fn tree_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases = 50;
    for case in 0..cases {
        let n = rng.random_range(2..=12);
        let p = rng.random_range(1..=N_FEATURES);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(0..6) as f64).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..40.0)).collect();
        let m = Matrix::from_rows(&x).unwrap();
        let tree = fit_tree(
            &m,
            &y,
            &TreeConfig::full(p),
            &mut ChaCha8Rng::seed_from_u64(case),
        )
        .unwrap();
        let reference = common::brute_force_tree(&x, &y, &(0..n).collect::<Vec<_>>());
        common::compare_tree(&tree.root, &reference, "root")
            .map_err(|e| format!("case {case}: {e}"))?;
    }
    Ok(format!("{cases} datasets identical"))
}

fn svr_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst = 0.0f64;
    let cases = 24;
    for case in 0..cases {
        let n = rng.random_range(2..=6);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let gamma = rng.random_range(0.2..3.0);
        let cfg = SvrConfig {
            c: [0.3, 1.0, 5.0][case % 3],
            epsilon: [0.0, 0.01, 0.1][(case / 3) % 3],
            kernel: KernelSpec::Rbf { gamma },
            kkt_tolerance: 1e-9,
            max_passes: 100_000,
        };
        let m = Matrix::from_rows(&x).unwrap();
        let model = fit_svr(&m, &z, &cfg).unwrap();
        let reference = common::dense_qp_dual(
            &common::rbf_gram(&x, gamma),
            &z,
            cfg.c,
            cfg.epsilon,
            200_000,
        );
        let diff = (model.dual_objective - reference).abs();
        worst = worst.max(diff);
        ensure(
            diff <= 1e-6,
            format!("case {case}: {} vs {reference}", model.dual_objective),
        )?;
        if model.converged {
            let v = kkt_report(&model, &m, &z).unwrap().max_violation;
            ensure(
                v <= cfg.kkt_tolerance,
                format!("case {case}: KKT violation {v}"),
            )?;
        }
    }
    Ok(format!("{cases} datasets, worst objective gap {worst:.1e}"))
}

fn normalized_s1(seed: u64) -> Prepared {
    let d = synthesize(&SynthScenario::new(ScenarioId::S1), 144, seed).unwrap();
    Prepared::new(&d, 0.7, seed).unwrap()
}

fn forest_determinism() -> Check {
    for seed in 0..10u64 {
        let p = normalized_s1(seed);
        let cfg = ForestConfig {
            n_trees: 100,
            master_seed: seed,
            ..ForestConfig::new(N_FEATURES)
        };
        let (x, y) = (p.train.features(), p.train.targets());
        let a = fit_forest_with_workers(&x, &y, &cfg, 1)
            .unwrap()
            .to_json("s")
            .unwrap();
        let b = fit_forest_with_workers(&x, &y, &cfg, 8)
            .unwrap()
            .to_json("s")
            .unwrap();
        ensure(a == b, format!("seed {seed}: serialized forests differ"))?;
    }
    Ok("10 seeds, 1 vs 8 workers".into())
}

fn more_trees_no_worse() -> Check {
    let mut small = Vec::new();
    let mut large = Vec::new();
    for seed in 0..5u64 {
        let p = normalized_s1(seed);
        let cfg = ForestConfig {
            master_seed: seed,
            ..ForestConfig::new(N_FEATURES)
        };
        let f: Forest = train_forest(&p, &cfg).unwrap();
        let x = p.test.features();
        let y = p.test.targets();
        large.push(mse(&y, &f.predict_matrix(&x).unwrap()).unwrap());
        small.push(mse(&y, &f.prefix(10).predict_matrix(&x).unwrap()).unwrap());
    }
    let violations = small.iter().zip(&large).filter(|(s, l)| l > s).count();
    let (ms, ml) = (
        small.iter().sum::<f64>() / 5.0,
        large.iter().sum::<f64>() / 5.0,
    );
    ensure(
        ml <= ms,
        format!("mean MSE {ml:.5} at 500 trees exceeds {ms:.5} at 10"),
    )?;
    ensure(violations <= 1, format!("{violations} seeds got worse"))?;
    Ok(format!(
        "mean MSE 10 trees {ms:.5}, 500 trees {ml:.5}, {violations} violations"
    ))
}

fn separable_bound() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut make = |n: usize| {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = (i % 3) as f64;
            let mut r: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            r[0] = c * 10.0 + rng.random_range(0.0..1.0);
            rows.push(r);
            y.push(c * 10.0 + rng.random_range(0.0..1.0));
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    };
    let (x, y) = make(150);
    let (xt, yt) = make(90);
    let bins = bin_targets(&y, 3).unwrap();
    let cfg = ForestConfig {
        n_trees: 200,
        master_seed: 1,
        ..ForestConfig::new(4)
    };
    let f = fit_classification_forest(&x, &bins.labels, 3, &cfg).unwrap();
    let labels: Vec<usize> = yt.iter().map(|&v| bins.label(v)).collect();
    let d = theory_diagnostics(&f, &xt, &labels, &bins.edges).unwrap();
    let bound = d.bound.ok_or("bound is infinite")?;
    ensure(bound >= 0.0, format!("bound {bound}"))?;
    ensure(
        d.error_estimate <= bound,
        format!("E* {} > bound {bound}", d.error_estimate),
    )?;
    Ok(format!(
        "E* {:.3} <= bound {bound:.3} (s {:.3}, rho {:.3})",
        d.error_estimate, d.strength, d.mean_correlation
    ))
}

fn importance_sanity() -> Check {
    for seed in 0..3u64 {
        let p = normalized_s1(seed);
        let cfg = ForestConfig {
            n_trees: 100,
            master_seed: seed,
            ..ForestConfig::new(N_FEATURES)
        };
        let f = train_forest(&p, &cfg).unwrap();
        let r = permutation_importance(&f, &p.test.features(), &p.test.targets(), seed, 5).unwrap();
        let pressure = &r.features[3];
        ensure(
            pressure.magnitude == 0.0 && pressure.sign == 0,
            format!(
                "seed {seed}: pressure {} / {}",
                pressure.magnitude, pressure.sign
            ),
        )?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rows: Vec<Vec<f64>> = (0..80)
        .map(|_| {
            (0..N_FEATURES)
                .map(|_| rng.random_range(0.0..1.0))
                .collect()
        })
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let oracle = |r: &[f64]| -> Result<f64> { Ok(r[0]) };
    let r = permutation_importance(&oracle, &x, &y, 0, 5).unwrap();
    ensure(
        r.ranking()[0] == 0,
        format!("top feature {}", r.ranking()[0]),
    )?;
    ensure(r.features[0].sign == 1, "oracle feature sign")?;
    Ok("pressure 0/0 on 3 seeds; identity oracle ranks feature 0 first with sign +1".into())
}

fn bundle_for(d: &Dataset, p: &Prepared, model: TrainedModel) -> ModelBundle {
    ModelBundle {
        version: BUNDLE_FORMAT_VERSION,
        schema_fingerprint: d.schema.fingerprint(),
        model,
        normalizer: p.normalizer.clone(),
        split: p.indices.clone(),
        source: DataSource::Synth {
            scenario: ScenarioId::S1,
            n: d.len(),
            seed: 0,
        },
        data_digest: data_digest(d),
        scale_tag: d.scale_tag,
        config_digest: "acceptance".into(),
        seed: 0,
    }
}

fn round_trips() -> Check {
    let d = synthesize(&SynthScenario::new(ScenarioId::S1), 144, 0).unwrap();
    let p = Prepared::new(&d, 0.7, 0).unwrap();
    let forest = train_forest(&p, &ForestConfig::new(N_FEATURES)).unwrap();
    let svr: SvrModel = train_svr(&p, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            p.normalizer
                .features
                .iter()
                .map(|r| r.min + rng.random_range(-0.1..1.1) * (r.max - r.min))
                .collect()
        })
        .collect();
    for (name, model) in [
        ("rfr", TrainedModel::Rfr(forest.clone())),
        ("svr", TrainedModel::Svr(svr.clone())),
    ] {
        let b = bundle_for(&d, &p, model);
        let path = dir.path().join(format!("{name}.json"));
        b.save(&path).unwrap();
        let back = ModelBundle::load(&path).unwrap();
        for x in &inputs {
            let (a, c) = (b.predict(x).unwrap(), back.predict(x).unwrap());
            ensure(close(a, c, 1e-12), format!("{name} bundle: {a} vs {c}"))?;
        }
    }
    let (f2, _) = Forest::from_json(&forest.to_json("s").unwrap()).unwrap();
    let (s2, _) = SvrModel::from_json(&svr.to_json("s").unwrap()).unwrap();
    for x in &inputs {
        let z = p.normalizer.normalize_features(x).unwrap();
        ensure(
            forest.predict(&z).unwrap() == f2.predict(&z).unwrap(),
            "forest json",
        )?;
        ensure(
            close(svr.predict(&z).unwrap(), s2.predict(&z).unwrap(), 1e-12),
            "svr json",
        )?;
    }
    for id in [ScenarioId::S1, ScenarioId::S2] {
        for seed in 0..5 {
            let d = synthesize(&SynthScenario::new(id), 144, seed).unwrap();
            let back = read_csv(d.to_csv_string().as_bytes()).unwrap();
            ensure(
                back == d,
                format!("{id:?} seed {seed}: CSV round trip differs"),
            )?;
        }
    }
    Ok("bundles, forest, svr and CSV identical".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("metric oracle", metric_oracle),
        ("split protocol", split_protocol),
        ("synthetic calibration", synth_calibration),
        ("model ordering", model_ordering),
        ("tree oracle", tree_oracle),
        ("svr oracle", svr_oracle),
        ("forest determinism", forest_determinism),
        ("more trees no worse", more_trees_no_worse),
        ("margin bound", separable_bound),
        ("importance sanity", importance_sanity),
        ("round trips", round_trips),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({secs:.1}s) {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
