//! RBF-kernel SVM trained by SMO, one-vs-one for multi-class.
//!
//! The binary solver follows the dual
//! `min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0` with `Q_ij = y_i y_j K_ij`,
//! selects working pairs with second-order information and stops when the
//! maximal KKT violation gap drops below `tol`.

use serde::{Deserialize, Serialize};

use super::{argmax_lowest, Gamma, Matrix, SvmParams};

const TAU: f64 = 1e-12;
/// Pairs up to this many rows keep every computed kernel row; larger ones
/// use a bounded row cache.
const FULL_STORE_MAX_ROWS: usize = 9000;
const CACHE_ROWS: usize = 2048;

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

/// `e^x` for `x <= 0` in single precision, written so that loops over it
/// vectorize. Relative error is below 5e-6.
#[inline]
fn exp_nonpos(x: f32) -> f32 {
    let t = x.max(-87.0) * std::f32::consts::LOG2_E;
    // truncation toward zero: n in (t - 1, t], r = t - n in (-1, 0]
    let n = t as i32;
    let r = t - n as f32;
    let z = r * std::f32::consts::LN_2;
    let p = 1.0
        + z * (1.0
            + z * (1.0 / 2.0
                + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z * (1.0 / 720.0 + z * (1.0 / 5040.0)))))));
    f32::from_bits(((n + 127) as u32) << 23) * p
}

enum Store {
    Full { k: Vec<f32>, ready: Vec<bool> },
    Cached(std::collections::HashMap<usize, Vec<f32>>),
}

/// Kernel rows of one binary subproblem, computed on first use in single
/// precision as `exp(-gamma * (|a|^2 + |b|^2 - 2 a.b))`.
struct Gram {
    n: usize,
    d: usize,
    gamma: f32,
    xt: Vec<f32>,
    norms: Vec<f32>,
    store: Store,
}

impl Gram {
    fn new(x: &Matrix, rows: &[usize], gamma: f64) -> Self {
        Self::with_store(x, rows, gamma, rows.len() <= FULL_STORE_MAX_ROWS)
    }

    fn with_store(x: &Matrix, rows: &[usize], gamma: f64, full: bool) -> Self {
        let n = rows.len();
        let d = x.ncols();
        // feature-major so that a kernel row is a sum of contiguous axpys
        let mut xt = vec![0f32; n * d];
        let mut norms = vec![0f32; n];
        for (j, &r) in rows.iter().enumerate() {
            for (k, &v) in x.row(r).iter().enumerate() {
                xt[k * n + j] = v as f32;
                norms[j] += v as f32 * v as f32;
            }
        }
        let store = if full {
            Store::Full {
                k: vec![0.0; n * n],
                ready: vec![false; n],
            }
        } else {
            Store::Cached(Default::default())
        };
        Self {
            n,
            d,
            gamma: gamma as f32,
            xt,
            norms,
            store,
        }
    }

    fn compute(&self, i: usize, out: &mut [f32]) {
        let n = self.n;
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..self.d {
            let col = &self.xt[k * n..(k + 1) * n];
            let c = col[i];
            for (o, v) in out.iter_mut().zip(col) {
                *o += c * v;
            }
        }
        let ni = self.norms[i];
        let g = self.gamma;
        for (o, nj) in out.iter_mut().zip(&self.norms) {
            *o = exp_nonpos(-g * (ni + nj - 2.0 * *o).max(0.0));
        }
        out[i] = 1.0;
    }

    fn has(&self, r: usize) -> bool {
        match &self.store {
            Store::Full { ready, .. } => ready[r],
            Store::Cached(cache) => cache.contains_key(&r),
        }
    }

    /// Makes rows `i` and `j` available together.
    fn ensure(&mut self, i: usize, j: usize) {
        let n = self.n;
        let mut fresh = Vec::new();
        for r in [i, j] {
            if !self.has(r) && fresh.iter().all(|(f, _)| *f != r) {
                let mut row = vec![0f32; n];
                self.compute(r, &mut row);
                fresh.push((r, row));
            }
        }
        match &mut self.store {
            Store::Full { k, ready } => {
                for (r, row) in fresh {
                    k[r * n..(r + 1) * n].copy_from_slice(&row);
                    ready[r] = true;
                }
            }
            Store::Cached(cache) => {
                if cache.len() + fresh.len() > CACHE_ROWS {
                    cache.retain(|&r, _| r == i || r == j);
                }
                cache.extend(fresh);
            }
        }
    }

    fn row(&self, i: usize) -> &[f32] {
        match &self.store {
            Store::Full { k, ready } => {
                debug_assert!(ready[i]);
                &k[i * self.n..(i + 1) * self.n]
            }
            Store::Cached(cache) => &cache[&i],
        }
    }
}

/// Dual solution of one binary subproblem.
pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Solves the binary dual over `rows` of `x` with labels `y` in {+1,-1}.
pub(crate) fn smo(x: &Matrix, rows: &[usize], y: &[f64], c: f64, gamma: f64, tol: f64, max_iter: usize) -> SmoSolution {
    let n = rows.len();
    let mut gram = Gram::new(x, rows, gamma);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut converged = false;
    let mut iter = 0;
    while iter < max_iter {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        if i_sel == usize::MAX {
            converged = true;
            break;
        }
        let i = i_sel;
        let yi = y[i];
        // j: second-order choice in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        {
            gram.ensure(i, i);
            let ki = gram.row(i);
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                if v > gmax2 {
                    gmax2 = v;
                }
                let b = gmax + v;
                if b > 0.0 {
                    let a = 2.0 - 2.0 * ki[t] as f64;
                    let a = if a > 0.0 { a } else { TAU };
                    let obj = -(b * b) / a;
                    if obj < obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if gmax + gmax2 < tol || j_sel == usize::MAX {
            converged = true;
            break;
        }
        let j = j_sel;
        let yj = y[j];
        iter += 1;

        gram.ensure(i, j);
        let kij = gram.row(i)[j] as f64;
        let quad = {
            let q = 2.0 - 2.0 * kij;
            if q > 0.0 {
                q
            } else {
                TAU
            }
        };
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let dai = (alpha[i] - old_ai) * yi;
        let daj = (alpha[j] - old_aj) * yj;
        // grad_k += y_k (K_ik y_i dai + K_jk y_j daj)
        let (ri, rj) = (gram.row(i), gram.row(j));
        for t in 0..n {
            grad[t] += y[t] * (ri[t] as f64 * dai + rj[t] as f64 * daj);
        }
    }

    // bias from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    SmoSolution {
        alpha,
        rho,
        converged,
        iterations: iter,
    }
}

/// One class pair: positive class `pos`, negative class `neg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub pos: u8,
    pub neg: u8,
    /// Indices into [`SvmModel`]'s support matrix.
    pub support: Vec<u32>,
    /// `y_i * alpha_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub c: f64,
    n_classes: usize,
    support: Matrix,
    pub pairs: Vec<BinarySvm>,
}

impl SvmModel {
    pub(crate) fn fit(x: &Matrix, y: &[u8], n_classes: usize, params: &SvmParams) -> Self {
        let gamma = match params.gamma {
            Gamma::Value(g) => g,
            Gamma::Auto => {
                let all = x.as_slice();
                let m = all.iter().sum::<f64>() / all.len() as f64;
                let var = all.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / all.len() as f64;
                1.0 / (x.ncols() as f64 * if var > 0.0 { var } else { 1.0 })
            }
        };
        let mut present: Vec<u8> = y.to_vec();
        present.sort_unstable();
        present.dedup();

        let mut sv_slot: Vec<Option<u32>> = vec![None; x.nrows()];
        let mut sv_rows: Vec<usize> = Vec::new();
        let mut pairs = Vec::new();
        for (a, &pos) in present.iter().enumerate() {
            for &neg in &present[a + 1..] {
                let rows: Vec<usize> = (0..x.nrows()).filter(|&i| y[i] == pos || y[i] == neg).collect();
                let ys: Vec<f64> = rows.iter().map(|&i| if y[i] == pos { 1.0 } else { -1.0 }).collect();
                let sol = smo(x, &rows, &ys, params.c, gamma, params.tol, params.max_iter_factor * rows.len());
                let mut support = Vec::new();
                let mut coef = Vec::new();
                for (t, &al) in sol.alpha.iter().enumerate() {
                    if al > 0.0 {
                        let r = rows[t];
                        let slot = *sv_slot[r].get_or_insert_with(|| {
                            sv_rows.push(r);
                            (sv_rows.len() - 1) as u32
                        });
                        support.push(slot);
                        coef.push(ys[t] * al);
                    }
                }
                pairs.push(BinarySvm {
                    pos,
                    neg,
                    support,
                    coef,
                    rho: sol.rho,
                    converged: sol.converged,
                    iterations: sol.iterations,
                });
            }
        }
        Self {
            gamma,
            c: params.c,
            n_classes,
            support: x.select_rows(&sv_rows),
            pairs,
        }
    }

    /// Decision value of every pair for one row.
    pub fn decision_values(&self, row: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = (0..self.support.nrows())
            .map(|s| rbf(self.gamma, row, self.support.row(s)))
            .collect();
        self.pairs
            .iter()
            .map(|p| p.support.iter().zip(&p.coef).map(|(&s, c)| c * k[s as usize]).sum::<f64>() - p.rho)
            .collect()
    }

    pub(crate) fn predict(&self, x: &Matrix) -> Vec<u8> {
        let mut votes = vec![0u32; self.n_classes];
        (0..x.nrows())
            .map(|i| {
                votes.iter_mut().for_each(|v| *v = 0);
                for (p, f) in self.pairs.iter().zip(self.decision_values(x.row(i))) {
                    let winner = if f >= 0.0 { p.pos } else { p.neg };
                    votes[winner as usize] += 1;
                }
                argmax_lowest(&votes) as u8
            })
            .collect()
    }

    pub fn support_count(&self) -> usize {
        self.support.nrows()
    }
}
