//! Linear discriminant analysis with covariance shrinkage.
//!
//! The pooled within-class covariance `S` is shrunk toward `mu * I`
//! (`mu = trace(S) / d`) with intensity `s`:
//! `Sigma = (1 - s) S + s mu I`. With `shrinkage=auto`, `s` is the
//! Ledoit-Wolf analytic estimate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, LdaParams, Matrix, Shrinkage};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub shrinkage: f64,
    /// Per class: weights `Sigma^-1 mu_k`, or `None` for absent classes.
    weights: Vec<Option<Vec<f64>>>,
    intercepts: Vec<f64>,
}

/// Ledoit-Wolf shrinkage intensity for already-centred rows.
pub fn ledoit_wolf_shrinkage(centred: &Matrix) -> f64 {
    let n = centred.nrows();
    let p = centred.ncols();
    if n == 0 || p == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let mut emp = vec![0.0; p * p];
    for i in 0..n {
        let r = centred.row(i);
        for a in 0..p {
            for b in 0..p {
                emp[a * p + b] += r[a] * r[b];
            }
        }
    }
    emp.iter_mut().for_each(|v| *v /= nf);
    let mu = (0..p).map(|a| emp[a * p + a]).sum::<f64>() / p as f64;
    // delta: squared distance of S to mu I
    let mut delta = 0.0;
    for a in 0..p {
        for b in 0..p {
            let t = emp[a * p + b] - if a == b { mu } else { 0.0 };
            delta += t * t;
        }
    }
    delta /= p as f64;
    // beta: mean squared distance of single-row outer products to S
    let mut beta = 0.0;
    for i in 0..n {
        let r = centred.row(i);
        for a in 0..p {
            for b in 0..p {
                let t = r[a] * r[b] - emp[a * p + b];
                beta += t * t;
            }
        }
    }
    beta /= p as f64 * nf * nf;
    let beta = beta.min(delta);
    if delta == 0.0 {
        0.0
    } else {
        beta / delta
    }
}

impl LdaModel {
    /// `x` is expected to be standardized; `y` holds class indices.
    pub(crate) fn fit(x: &Matrix, y: &[u8], n_classes: usize, params: &LdaParams) -> Result<Self> {
        let n = x.nrows();
        let d = x.ncols();
        let mut counts = vec![0usize; n_classes];
        let mut means = vec![vec![0.0; d]; n_classes];
        for i in 0..n {
            let c = y[i] as usize;
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            if c > 0 {
                m.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        let mut centred = Vec::with_capacity(n * d);
        for i in 0..n {
            let m = &means[y[i] as usize];
            centred.extend(x.row(i).iter().zip(m).map(|(v, m)| v - m));
        }
        let centred = Matrix::new(n, d, centred)?;
        let shrinkage = match params.shrinkage {
            Shrinkage::Auto => ledoit_wolf_shrinkage(&centred),
            Shrinkage::Fixed(s) => s,
        };

        let mut s = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let r = DVector::from_row_slice(centred.row(i));
            s += &r * r.transpose();
        }
        s /= n as f64;
        let mu = s.trace() / d as f64;
        let mut sigma = s * (1.0 - shrinkage);
        for a in 0..d {
            sigma[(a, a)] += shrinkage * mu;
        }
        let chol = match sigma.clone().cholesky() {
            Some(c) => c,
            None => {
                let ridge = 1e-6 * mu.max(1e-12);
                let mut reg = sigma;
                for a in 0..d {
                    reg[(a, a)] += ridge;
                }
                reg.cholesky()
                    .ok_or_else(|| Error::DegenerateInput("within-class covariance is singular".into()))?
            }
        };

        let mut weights = Vec::with_capacity(n_classes);
        let mut intercepts = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            if counts[c] == 0 {
                weights.push(None);
                intercepts.push(f64::NEG_INFINITY);
                continue;
            }
            let m = DVector::from_column_slice(&means[c]);
            let w = chol.solve(&m);
            let prior = counts[c] as f64 / n as f64;
            intercepts.push(-0.5 * m.dot(&w) + prior.ln());
            weights.push(Some(w.iter().copied().collect()));
        }
        Ok(Self {
            shrinkage,
            weights,
            intercepts,
        })
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| match w {
                Some(w) => w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>() + b,
                None => f64::NEG_INFINITY,
            })
            .collect()
    }

    pub(crate) fn predict(&self, x: &Matrix) -> Vec<u8> {
        (0..x.nrows()).map(|i| argmax_lowest(&self.scores(x.row(i))) as u8).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testdata::blobs;
    use super::super::Standardizer;
    use super::*;

    #[test]
    fn full_shrinkage_is_nearest_centroid() {
        let centers = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 1.0]];
        let (x, y) = blobs(&centers, 80, 0.8, 31);
        let z = Standardizer::fit(&x).transform(&x);
        let classes: Vec<u8> = y.iter().map(|l| l - 1).collect();
        let lda = LdaModel::fit(&z, &classes, 3, &LdaParams { shrinkage: Shrinkage::Fixed(1.0) }).unwrap();

        let mut means = vec![vec![0.0; 3]; 3];
        for i in 0..z.nrows() {
            for k in 0..3 {
                means[classes[i] as usize][k] += z.get(i, k) / 80.0;
            }
        }
        let (probe, _) = blobs(&[vec![0.3, 0.5, 0.4]], 300, 1.5, 32);
        let probe = Standardizer::fit(&x).transform(&probe);
        for i in 0..probe.nrows() {
            let r = probe.row(i);
            let dists: Vec<f64> = means
                .iter()
                .map(|m| -m.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .collect();
            assert_eq!(lda.predict(&Matrix::from_rows(&[r.to_vec()], 3).unwrap())[0] as usize, argmax_lowest(&dists));
        }
    }

    #[test]
    fn ledoit_wolf_matches_reference_formula() {
        // independent evaluation of the same estimator via explicit sums
        let (x, _) = blobs(&[vec![0.0, 0.0, 0.0]], 40, 1.0, 4);
        let n = x.nrows() as f64;
        let p = 3usize;
        let mut mean = [0.0; 3];
        for i in 0..x.nrows() {
            for a in 0..p {
                mean[a] += x.get(i, a) / n;
            }
        }
        let c: Vec<Vec<f64>> = (0..x.nrows()).map(|i| (0..p).map(|a| x.get(i, a) - mean[a]).collect()).collect();
        let cm = Matrix::from_rows(&c, p).unwrap();
        let s = |a: usize, b: usize| c.iter().map(|r| r[a] * r[b]).sum::<f64>() / n;
        let mu = (0..p).map(|a| s(a, a)).sum::<f64>() / p as f64;
        let d2: f64 = (0..p)
            .flat_map(|a| (0..p).map(move |b| (a, b)))
            .map(|(a, b)| (s(a, b) - if a == b { mu } else { 0.0 }).powi(2))
            .sum::<f64>()
            / p as f64;
        let b2: f64 = c
            .iter()
            .map(|r| {
                (0..p)
                    .flat_map(|a| (0..p).map(move |b| (a, b)))
                    .map(|(a, b)| (r[a] * r[b] - s(a, b)).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / (p as f64 * n * n);
        let expected = b2.min(d2) / d2;
        assert!((ledoit_wolf_shrinkage(&cm) - expected).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&expected));
    }

    #[test]
    fn shrinkage_is_high_for_tiny_samples() {
        let (x, _) = blobs(&[vec![0.0; 10]], 4, 1.0, 8);
        let s = ledoit_wolf_shrinkage(&x);
        assert!(s > 0.3, "{s}");
    }
}
