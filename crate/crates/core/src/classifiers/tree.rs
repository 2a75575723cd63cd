//! CART decision tree with Gini impurity.
//!
//! Splits are searched exhaustively: for every candidate feature, every
//! midpoint between consecutive distinct values among the node's rows is
//! scored. Equal scores keep the first candidate seen, which is the lowest
//! feature index and then the lowest threshold.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, Matrix, TreeParams};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub(crate) enum Node {
    Leaf { class: u8 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

/// Column-major copy of the training matrix with every column's row order
/// sorted by value (ties by row index). Shared by all trees of a forest.
pub(crate) struct Presorted {
    n: usize,
    d: usize,
    cols: Vec<f64>,
    order: Vec<u32>,
}

impl Presorted {
    pub(crate) fn new(x: &Matrix) -> Self {
        let (n, d) = (x.nrows(), x.ncols());
        let mut cols = vec![0.0; n * d];
        for i in 0..n {
            for (j, v) in x.row(i).iter().enumerate() {
                cols[j * n + i] = *v;
            }
        }
        let mut order = Vec::with_capacity(n * d);
        for j in 0..d {
            let col = &cols[j * n..(j + 1) * n];
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            order.extend(idx);
        }
        Self { n, d, cols, order }
    }

    #[inline]
    fn value(&self, row: u32, feature: usize) -> f64 {
        self.cols[feature * self.n + row as usize]
    }
}

/// Grows a tree over the rows with non-zero weight. Every node owns the
/// same index range `lo..hi` in each per-feature list, and each list keeps
/// its rows sorted by that feature, so split search is a linear scan.
struct Builder<'a> {
    data: &'a Presorted,
    y: &'a [u8],
    w: &'a [u32],
    n_classes: usize,
    params: TreeParams,
    max_features: usize,
    rng: Option<&'a mut StreamRng>,
    nodes: Vec<Node>,
    /// Per-feature row lists, `m` entries each.
    lists: Vec<u32>,
    m: usize,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn list(&self, f: usize, lo: usize, hi: usize) -> &[u32] {
        &self.lists[f * self.m + lo..f * self.m + hi]
    }

    fn counts(&self, lo: usize, hi: usize) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in self.list(0, lo, hi) {
            c[self.y[i as usize] as usize] += self.w[i as usize];
        }
        c
    }

    fn leaf(&mut self, counts: &[u32]) -> u32 {
        self.nodes.push(Node::Leaf {
            class: argmax_lowest(counts) as u8,
        });
        (self.nodes.len() - 1) as u32
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.d;
        match self.rng.as_deref_mut() {
            Some(rng) if self.max_features < d => {
                let mut f = index::sample(rng, d, self.max_features).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    /// Higher score is better: `sum(cl^2)/nl + sum(cr^2)/nr`, which orders
    /// splits exactly like the weighted Gini impurity (lower is better).
    fn best_split(&mut self, lo: usize, hi: usize, counts: &[u32]) -> Option<BestSplit> {
        let n: u32 = counts.iter().sum();
        let min_leaf = self.params.min_samples_leaf.max(1) as u32;
        let features = self.candidate_features();
        let mut best: Option<BestSplit> = None;
        let mut left = vec![0u32; self.n_classes];
        let mut right = vec![0u32; self.n_classes];
        let sq_total: u64 = counts.iter().map(|&c| c as u64 * c as u64).sum();
        for f in features {
            let list = self.list(f, lo, hi);
            let first = self.data.value(list[0], f);
            if first == self.data.value(list[list.len() - 1], f) {
                continue;
            }
            left.iter_mut().for_each(|c| *c = 0);
            right.copy_from_slice(counts);
            let mut sq_left: u64 = 0;
            let mut sq_right = sq_total;
            let mut nl: u32 = 0;
            let mut prev = first;
            for (k, &row) in list.iter().enumerate() {
                let v = self.data.value(row, f);
                if k > 0 && v != prev && nl >= min_leaf && n - nl >= min_leaf {
                    let score = sq_left as f64 / nl as f64 + sq_right as f64 / (n - nl) as f64;
                    if best.as_ref().map_or(true, |b| score > b.score) {
                        let mut threshold = prev + (v - prev) / 2.0;
                        if threshold >= v {
                            threshold = prev;
                        }
                        best = Some(BestSplit {
                            feature: f,
                            threshold,
                            score,
                        });
                    }
                }
                let c = self.y[row as usize] as usize;
                let wt = self.w[row as usize];
                let (l, r) = (left[c] as u64, right[c] as u64);
                let wt64 = wt as u64;
                sq_left += 2 * l * wt64 + wt64 * wt64;
                sq_right = sq_right + wt64 * wt64 - 2 * r * wt64;
                left[c] += wt;
                right[c] -= wt;
                nl += wt;
                prev = v;
            }
        }
        best
    }

    /// Stable partition of every feature list; returns the split point.
    fn partition(&mut self, lo: usize, hi: usize, split: &BestSplit) -> usize {
        for k in lo..hi {
            let row = self.lists[split.feature * self.m + k];
            self.goes_left[row as usize] = self.data.value(row, split.feature) <= split.threshold;
        }
        let mut mid = lo;
        self.scratch.resize(hi - lo, 0);
        for f in 0..self.data.d {
            let base = f * self.m;
            // branch-free: write every row to both outputs, advance one
            let mut out = base + lo;
            let mut spill = 0;
            for k in lo..hi {
                let row = self.lists[base + k];
                let left = self.goes_left[row as usize] as usize;
                self.lists[out] = row;
                self.scratch[spill] = row;
                out += left;
                spill += 1 - left;
            }
            mid = out - base;
            self.lists[out..base + hi].copy_from_slice(&self.scratch[..spill]);
        }
        mid
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> u32 {
        let counts = self.counts(lo, hi);
        let total: u32 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || (total as usize) < 2 * self.params.min_samples_leaf.max(1) {
            return self.leaf(&counts);
        }
        let Some(split) = self.best_split(lo, hi, &counts) else {
            return self.leaf(&counts);
        };
        let mid = self.partition(lo, hi, &split);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { class: 0 });
        let left = self.grow(lo, mid, depth + 1);
        let right = self.grow(mid, hi, depth + 1);
        self.nodes[at] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left,
            right,
        };
        at as u32
    }
}

impl DecisionTree {
    /// `y` holds 0-based class indices below `n_classes`.
    pub(crate) fn fit(x: &Matrix, y: &[u8], n_classes: usize, params: &TreeParams) -> Self {
        let w = vec![1; x.nrows()];
        Self::fit_weighted(&Presorted::new(x), y, n_classes, params, &w, x.ncols(), None)
    }

    /// Grows a tree on a row multiset given as per-row multiplicities,
    /// sampling `max_features` candidate features per node from `rng` when
    /// fewer than all. Equivalent to training on the rows repeated.
    pub(crate) fn fit_weighted(
        data: &Presorted,
        y: &[u8],
        n_classes: usize,
        params: &TreeParams,
        weights: &[u32],
        max_features: usize,
        rng: Option<&mut StreamRng>,
    ) -> Self {
        let m = weights.iter().filter(|&&w| w > 0).count();
        let mut lists = Vec::with_capacity(m * data.d);
        for f in 0..data.d {
            lists.extend(
                data.order[f * data.n..(f + 1) * data.n]
                    .iter()
                    .filter(|&&r| weights[r as usize] > 0),
            );
        }
        let mut b = Builder {
            data,
            y,
            w: weights,
            n_classes,
            params: *params,
            max_features,
            rng,
            nodes: Vec::new(),
            lists,
            m,
            goes_left: vec![false; data.n],
            scratch: Vec::with_capacity(m),
        };
        if m == 0 || data.d == 0 {
            b.nodes.push(Node::Leaf { class: 0 });
        } else {
            b.grow(0, m, 0);
        }
        Self { nodes: b.nodes }
    }

    #[inline]
    pub(crate) fn predict_row(&self, row: &[f64]) -> u8 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub(crate) fn predict(&self, x: &Matrix) -> Vec<u8> {
        (0..x.nrows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}
