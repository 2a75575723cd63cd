//! Brute-force k-nearest neighbours on standardized features.

use serde::{Deserialize, Serialize};

use super::{argmax_lowest, KnnParams, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    k: usize,
    n_classes: usize,
    x: Matrix,
    y: Vec<u8>,
}

impl Knn {
    pub(crate) fn fit(x: Matrix, y: Vec<u8>, n_classes: usize, params: &KnnParams) -> Self {
        Self {
            k: params.k.min(x.nrows()).max(1),
            n_classes,
            x,
            y,
        }
    }

    /// The `k` nearest training rows as (squared distance, row) pairs,
    /// ordered by distance and then by row index.
    fn neighbours(&self, q: &[f64]) -> Vec<(f64, usize)> {
        let k = self.k;
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for i in 0..self.x.nrows() {
            let bound = if best.len() == k { best[k - 1].0 } else { f64::INFINITY };
            let row = self.x.row(i);
            let mut d = 0.0;
            let mut pruned = false;
            for (a, b) in row.chunks(4).zip(q.chunks(4)) {
                d += a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                if d > bound {
                    pruned = true;
                    break;
                }
            }
            // rows are visited in index order, so an equal distance never
            // displaces an earlier row
            if pruned || (best.len() == k && d >= bound) {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        best
    }

    pub(crate) fn predict(&self, x: &Matrix) -> Vec<u8> {
        let mut votes = vec![0u32; self.n_classes];
        (0..x.nrows())
            .map(|i| {
                votes.iter_mut().for_each(|v| *v = 0);
                for (_, j) in self.neighbours(x.row(i)) {
                    votes[self.y[j] as usize] += 1;
                }
                argmax_lowest(&votes) as u8
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knn(rows: &[f64], y: &[u8], k: usize) -> Knn {
        let x = Matrix::new(rows.len(), 1, rows.to_vec()).unwrap();
        Knn::fit(x, y.to_vec(), 3, &KnnParams { k })
    }

    #[test]
    fn brute_force_neighbours_match() {
        let rows: Vec<f64> = (0..50).map(|i| ((i * 17) % 23) as f64 * 0.5).collect();
        let y: Vec<u8> = (0..50).map(|i| (i % 3) as u8).collect();
        let m = knn(&rows, &y, 5);
        for q in [0.0, 3.3, 7.75, 11.0] {
            let mut all: Vec<(f64, usize)> = rows.iter().enumerate().map(|(i, v)| ((v - q) * (v - q), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            assert_eq!(m.neighbours(&[q]), all[..5].to_vec());
        }
    }

    #[test]
    fn distance_ties_prefer_lower_rows() {
        // rows 1 and 2 are both at distance 1 from the query
        let m = knn(&[0.0, 1.0, -1.0, 5.0], &[0, 1, 2, 2], 2);
        let n: Vec<usize> = m.neighbours(&[0.0]).into_iter().map(|(_, i)| i).collect();
        assert_eq!(n, vec![0, 1]);
    }

    #[test]
    fn vote_ties_go_to_lowest_class() {
        let m = knn(&[0.0, 0.1, 5.0], &[2, 1, 0], 2);
        assert_eq!(m.predict(&Matrix::new(1, 1, vec![0.0]).unwrap()), vec![1]);
    }
}
