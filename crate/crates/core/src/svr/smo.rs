//! Pairwise coordinate ascent on the epsilon-SVR dual.
//!
//! The dual is written over `2N` bounded variables `a` in `[0, C]`:
//! minimize `1/2 a'Qa + p'a` subject to `y'a = 0`, with `y = (+1.., -1..)`,
//! `p = (eps - z, eps + z)` and `Q_st = y_s y_t K(x_s, x_t)`. The regression
//! coefficients are `beta_i = a_i - a_{i+N}`. Working pairs are chosen by the
//! maximal-violating-pair rule with second-order gain for the second index.

const TAU: f64 = 1e-12;

pub(crate) struct SolverOutput {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    /// Final maximal-violating-pair gap, clamped at zero.
    pub max_violation: f64,
    pub iterations: usize,
}

pub(crate) struct Problem<'a> {
    /// Row-major `N x N` Gram matrix.
    pub gram: &'a [f64],
    pub targets: &'a [f64],
    pub c: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

struct State<'a> {
    n: usize,
    gram: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl State<'_> {
    #[inline]
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn q(&self, s: usize, t: usize) -> f64 {
        self.sign(s) * self.sign(t) * self.gram[(s % self.n) * self.n + t % self.n]
    }

    #[inline]
    fn qd(&self, t: usize) -> f64 {
        let i = t % self.n;
        self.gram[i * self.n + i]
    }

    fn in_up(&self, t: usize) -> bool {
        if t < self.n {
            self.alpha[t] < self.c
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if t < self.n {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.c
        }
    }

    /// Returns the working pair, or `None` once the gap is below `tol`; also the gap.
    fn select(&self, tol: f64) -> (Option<(usize, usize)>, f64) {
        let m = 2 * self.n;
        let mut gmax = f64::NEG_INFINITY;
        let mut i = None;
        for t in 0..m {
            if self.in_up(t) {
                let v = -self.sign(t) * self.grad[t];
                if v >= gmax {
                    gmax = v;
                    i = Some(t);
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..m {
            if !self.in_low(t) {
                continue;
            }
            let yg = self.sign(t) * self.grad[t];
            if yg >= gmax2 {
                gmax2 = yg;
            }
            let Some(i) = i else { continue };
            let diff = gmax + yg;
            if diff > 0.0 {
                let mut quad =
                    self.qd(i) + self.qd(t) - 2.0 * self.sign(i) * self.sign(t) * self.q(i, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj <= best_obj {
                    best_obj = obj;
                    j = Some(t);
                }
            }
        }
        let gap = gmax + gmax2;
        match (i, j) {
            (Some(i), Some(j)) if gap >= tol => (Some((i, j)), gap),
            _ => (None, gap),
        }
    }

    /// Analytic two-variable update clipped to the box. Returns the change in the
    /// minimized objective, which is never positive.
    fn update(&mut self, i: usize, j: usize) -> f64 {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        let qij = self.q(i, j);
        if self.sign(i) != self.sign(j) {
            let mut quad = self.qd(i) + self.qd(j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = self.qd(i) + self.qd(j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        let change = self.grad[i] * di
            + self.grad[j] * dj
            + 0.5 * (self.qd(i) * di * di + self.qd(j) * dj * dj + 2.0 * qij * di * dj);
        if di != 0.0 || dj != 0.0 {
            for t in 0..2 * self.n {
                let g = self.q(t, i) * di + self.q(t, j) * dj;
                self.grad[t] += g;
            }
        }
        change
    }

    /// Offset from free variables, or the middle of the feasible interval.
    fn rho(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum_free, mut n_free) = (0.0, 0usize);
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            let positive = t < self.n;
            if self.alpha[t] >= self.c {
                if positive {
                    lb = lb.max(yg);
                } else {
                    ub = ub.min(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if positive {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                n_free += 1;
                sum_free += yg;
            }
        }
        if n_free > 0 {
            sum_free / n_free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}

pub(crate) fn solve(p: &Problem<'_>) -> SolverOutput {
    let n = p.targets.len();
    let mut grad = Vec::with_capacity(2 * n);
    grad.extend(p.targets.iter().map(|z| p.epsilon - z));
    grad.extend(p.targets.iter().map(|z| p.epsilon + z));
    let mut st = State {
        n,
        gram: p.gram,
        c: p.c,
        alpha: vec![0.0; 2 * n],
        grad,
    };

    let mut iterations = 0;
    let (converged, gap) = loop {
        let (pair, gap) = st.select(p.tolerance);
        let Some((i, j)) = pair else {
            break (true, gap);
        };
        if iterations >= p.max_iterations {
            break (false, gap);
        }
        let change = st.update(i, j);
        debug_assert!(
            change <= 1e-12 * (1.0 + change.abs()),
            "dual objective decreased by {change} at iteration {iterations}"
        );
        iterations += 1;
    };

    let beta = (0..n).map(|i| st.alpha[i] - st.alpha[i + n]).collect();
    SolverOutput {
        beta,
        bias: -st.rho(),
        converged,
        max_violation: gap.max(0.0),
        iterations,
    }
}
