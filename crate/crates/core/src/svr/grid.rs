use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_svr, KernelSpec, SvrConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
    pub all_converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best: SvrConfig,
    pub table: Vec<GridRow>,
}

/// Shuffled fold assignment: fold `f` holds every `folds`-th shuffled index.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if n / folds < 1 {
        return Err(Error::invalid(format!(
            "{n} samples cannot fill {folds} folds"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (k, i) in idx.into_iter().enumerate() {
        out[k % folds].push(i);
    }
    Ok(out)
}

/// Cross-validated RBF grid over (C, epsilon, gamma).
///
/// The best row has the lowest mean fold MSE; ties prefer smaller C, then larger
/// epsilon, then smaller gamma. `base` supplies the solver tolerance and budget.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    x: &Matrix,
    z: &[f64],
    c_grid: &[f64],
    epsilon_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
    base: &SvrConfig,
) -> Result<GridSearch> {
    if c_grid.is_empty() || epsilon_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::invalid("every grid needs at least one value"));
    }
    if z.len() != x.n_rows() {
        return Err(Error::LengthMismatch(x.n_rows(), z.len()));
    }
    let fold_sets = kfold_indices(x.n_rows(), folds, seed)?;
    let splits: Vec<(Matrix, Vec<f64>, Matrix, Vec<f64>)> = fold_sets
        .iter()
        .map(|held| {
            let mut in_fold = vec![false; x.n_rows()];
            held.iter().for_each(|&i| in_fold[i] = true);
            let train: Vec<usize> = (0..x.n_rows()).filter(|&i| !in_fold[i]).collect();
            (
                x.select_rows(&train),
                train.iter().map(|&i| z[i]).collect(),
                x.select_rows(held),
                held.iter().map(|&i| z[i]).collect(),
            )
        })
        .collect();

    let mut combos = Vec::new();
    for &c in c_grid {
        for &epsilon in epsilon_grid {
            for &gamma in gamma_grid {
                combos.push(SvrConfig {
                    c,
                    epsilon,
                    kernel: KernelSpec::Rbf { gamma },
                    ..base.clone()
                });
            }
        }
    }
    for cfg in &combos {
        cfg.validate()?;
    }

    let table: Vec<GridRow> = combos
        .par_iter()
        .map(|cfg| {
            let mut fold_mse = Vec::with_capacity(splits.len());
            let mut all_converged = true;
            for (xt, zt, xv, zv) in &splits {
                let m = fit_svr(xt, zt, cfg)?;
                all_converged &= m.converged;
                let mse = xv
                    .rows()
                    .zip(zv)
                    .map(|(r, y)| Ok((m.predict(r)? - y).powi(2)))
                    .sum::<Result<f64>>()?
                    / zv.len() as f64;
                fold_mse.push(mse);
            }
            let gamma = match cfg.kernel {
                KernelSpec::Rbf { gamma } => gamma,
                KernelSpec::Linear => 0.0,
            };
            Ok(GridRow {
                c: cfg.c,
                epsilon: cfg.epsilon,
                gamma,
                mean_mse: fold_mse.iter().sum::<f64>() / fold_mse.len() as f64,
                fold_mse,
                all_converged,
            })
        })
        .collect::<Result<_>>()?;

    let best_row = table
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.mean_mse
                .total_cmp(&b.mean_mse)
                .then(a.c.total_cmp(&b.c))
                .then(b.epsilon.total_cmp(&a.epsilon))
                .then(a.gamma.total_cmp(&b.gamma))
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(GridSearch {
        best: combos[best_row].clone(),
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_indices() {
        let f = kfold_indices(10, 3, 1).unwrap();
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(kfold_indices(2, 3, 1).is_err());
        assert!(kfold_indices(10, 1, 1).is_err());
    }

    #[test]
    fn single_point_grid_returns_it() {
        let x = Matrix::from_rows(&[[0.0], [0.3], [0.6], [1.0]]).unwrap();
        let z = [0.1, 0.2, 0.4, 0.5];
        let g = grid_search(&x, &z, &[2.0], &[0.05], &[0.7], 2, 0, &SvrConfig::default()).unwrap();
        assert_eq!(g.best.c, 2.0);
        assert_eq!(g.best.epsilon, 0.05);
        assert_eq!(g.best.kernel, KernelSpec::Rbf { gamma: 0.7 });
        assert_eq!(g.table.len(), 1);
        assert_eq!(g.table[0].fold_mse.len(), 2);
    }

    #[test]
    fn empty_grid_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(grid_search(
            &x,
            &[0.0, 1.0],
            &[],
            &[0.1],
            &[1.0],
            2,
            0,
            &SvrConfig::default()
        )
        .is_err());
    }
}
