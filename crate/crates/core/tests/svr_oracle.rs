mod common;

use cake_moisture::svr::{fit_svr, kkt_report, KernelSpec, SvrConfig};
use cake_moisture::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dense_qp_dual, rbf_gram};

#[test]
fn dual_objective_matches_dense_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..24 {
        let n = rng.random_range(2..=6);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = [0.5, 1.0, 10.0][case % 3];
        let epsilon = [0.01, 0.1][case % 2];
        let gamma = [0.5, 1.0, 2.0][(case / 2) % 3];
        let cfg = SvrConfig {
            c,
            epsilon,
            kernel: KernelSpec::Rbf { gamma },
            kkt_tolerance: 1e-9,
            max_passes: 100_000,
        };
        let m = Matrix::from_rows(&x).unwrap();
        let model = fit_svr(&m, &z, &cfg).unwrap();
        assert!(model.converged, "case {case} did not converge");
        let reference = dense_qp_dual(&rbf_gram(&x, gamma), &z, c, epsilon, 200_000);
        assert!(
            (model.dual_objective - reference).abs() <= 1e-6,
            "case {case}: {} vs {reference}",
            model.dual_objective
        );
        let kkt = kkt_report(&model, &m, &z).unwrap();
        assert!(
            kkt.max_violation <= cfg.kkt_tolerance,
            "case {case}: violation {}",
            kkt.max_violation
        );
    }
}

#[test]
fn coefficients_stay_in_box_and_balance() {
    let x = Matrix::from_rows(&[[0.0], [0.3], [0.6], [1.0]]).unwrap();
    let z = [0.0, 1.0, -1.0, 0.5];
    let cfg = SvrConfig {
        c: 0.7,
        kkt_tolerance: 1e-9,
        ..SvrConfig::default()
    };
    let model = fit_svr(&x, &z, &cfg).unwrap();
    let beta = model.full_coefficients();
    assert!(beta.iter().all(|b| b.abs() <= cfg.c + 1e-12));
    assert!(beta.iter().sum::<f64>().abs() < 1e-9);
}
