//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use cake_moisture::tree::{Node, TIE_TOLERANCE};
use cake_moisture::Matrix;

/// Reference tree node: `(feature, threshold, left, right)` or a leaf mean.
#[derive(Debug, Clone, PartialEq)]
pub enum RefNode {
    Leaf(f64),
    Split(usize, f64, Box<RefNode>, Box<RefNode>),
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sse_of(v: &[f64]) -> f64 {
    if v.iter().all(|&a| a == v[0]) {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|a| (a - m) * (a - m)).sum()
}

/// Exhaustive CART on every feature and every midpoint threshold, fully grown.
#[allow(clippy::needless_range_loop)]
pub fn brute_force_tree(x: &[Vec<f64>], y: &[f64], rows: &[usize]) -> RefNode {
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let parent = sse_of(&ys);
    if rows.len() < 2 || parent == 0.0 {
        return RefNode::Leaf(if ys.iter().all(|&a| a == ys[0]) {
            ys[0]
        } else {
            mean(&ys)
        });
    }
    let tol = TIE_TOLERANCE * parent;
    let mut best: Option<(f64, usize, f64)> = None;
    let n_features = x[0].len();
    for f in 0..n_features {
        let mut vals: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let t = if t >= w[1] { w[0] } else { t };
            let l: Vec<f64> = rows
                .iter()
                .filter(|&&i| x[i][f] <= t)
                .map(|&i| y[i])
                .collect();
            let r: Vec<f64> = rows
                .iter()
                .filter(|&&i| x[i][f] > t)
                .map(|&i| y[i])
                .collect();
            let gain = parent - sse_of(&l) - sse_of(&r);
            if gain <= tol {
                continue;
            }
            if best.is_none_or(|b| gain > b.0 + tol) {
                best = Some((gain, f, t));
            }
        }
    }
    match best {
        None => RefNode::Leaf(mean(&ys)),
        Some((_, f, t)) => {
            let l: Vec<usize> = rows.iter().copied().filter(|&i| x[i][f] <= t).collect();
            let r: Vec<usize> = rows.iter().copied().filter(|&i| x[i][f] > t).collect();
            RefNode::Split(
                f,
                t,
                Box::new(brute_force_tree(x, y, &l)),
                Box::new(brute_force_tree(x, y, &r)),
            )
        }
    }
}

/// Node-for-node comparison; returns a description of the first difference.
pub fn compare_tree(ours: &Node, reference: &RefNode, path: &str) -> Result<(), String> {
    match (ours, reference) {
        (Node::Leaf { value, .. }, RefNode::Leaf(v)) => {
            if (value - v).abs() <= 1e-12 * (1.0 + v.abs()) {
                Ok(())
            } else {
                Err(format!("{path}: leaf {value} vs {v}"))
            }
        }
        (
            Node::Split {
                rule, left, right, ..
            },
            RefNode::Split(f, t, l, r),
        ) => {
            if rule.feature != *f || rule.threshold != *t {
                return Err(format!(
                    "{path}: split ({}, {}) vs ({f}, {t})",
                    rule.feature, rule.threshold
                ));
            }
            compare_tree(left, l, &format!("{path}L"))?;
            compare_tree(right, r, &format!("{path}R"))
        }
        _ => Err(format!("{path}: node kind differs")),
    }
}

pub fn rbf_gram(x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            k[i * n + j] = (-gamma * d).exp();
        }
    }
    k
}

/// Dual objective in the split form, with `alpha` and `alpha_star` separate.
pub fn dual_alpha(k: &[f64], z: &[f64], eps: f64, a: &[f64], a_star: &[f64]) -> f64 {
    let n = z.len();
    let b: Vec<f64> = (0..n).map(|i| a[i] - a_star[i]).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += b[i] * b[j] * k[i * n + j];
        }
    }
    (0..n)
        .map(|i| z[i] * b[i] - eps * (a[i] + a_star[i]))
        .sum::<f64>()
        - 0.5 * quad
}

/// Projection onto `{u in [0, c]^m : sum s_i u_i = 0}` by bisection on the multiplier.
fn project(v: &[f64], s: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> f64 {
        v.iter()
            .zip(s)
            .map(|(&vi, &si)| si * (vi - lam * si).clamp(0.0, c))
            .sum()
    };
    let bound = v.iter().map(|a| a.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if at(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    v.iter()
        .zip(s)
        .map(|(&vi, &si)| (vi - lam * si).clamp(0.0, c))
        .collect()
}

/// Accelerated projected gradient on the `2N`-variable dual. Returns the optimal objective.
pub fn dense_qp_dual(k: &[f64], z: &[f64], c: f64, eps: f64, iterations: usize) -> f64 {
    let n = z.len();
    let m = 2 * n;
    let s: Vec<f64> = (0..m).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
    // Hessian of the negated objective is [[K, -K], [-K, K]]; 2 * trace(K) bounds its spectrum
    let lip = 2.0 * (0..n).map(|i| k[i * n + i]).sum::<f64>().max(1e-12);
    let grad = |u: &[f64]| -> Vec<f64> {
        let b: Vec<f64> = (0..n).map(|i| u[i] - u[n + i]).collect();
        let kb: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| k[i * n + j] * b[j]).sum())
            .collect();
        // gradient of the negated objective
        let mut g = vec![0.0; m];
        for i in 0..n {
            g[i] = -z[i] + eps + kb[i];
            g[n + i] = z[i] + eps - kb[i];
        }
        g
    };
    let objective = |u: &[f64]| dual_alpha(k, z, eps, &u[..n], &u[n..]);
    let mut u = vec![0.0; m];
    let mut yv = u.clone();
    let mut t = 1.0f64;
    let mut best = objective(&u);
    for _ in 0..iterations {
        let g = grad(&yv);
        let step: Vec<f64> = yv.iter().zip(&g).map(|(a, b)| a - b / lip).collect();
        let next = project(&step, &s, c);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let f_next = objective(&next);
        if f_next < objective(&u) {
            // restart momentum when the objective does not improve
            t = 1.0;
            yv = u.clone();
            continue;
        }
        let moved = next
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        yv = next
            .iter()
            .zip(&u)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        u = next;
        t = t_next;
        best = best.max(f_next);
        if moved < 1e-14 {
            break;
        }
    }
    best
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.rows().map(|r| r.to_vec()).collect()
}
