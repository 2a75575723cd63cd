//! Bagged random forest over [`DecisionTree`]s.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::Presorted;
use super::{argmax_lowest, DecisionTree, ForestParams, Matrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
}

impl RandomForest {
    /// Each tree draws from its own substream, so the forest does not
    /// depend on how trees are scheduled across threads.
    pub(crate) fn fit(x: &Matrix, y: &[u8], n_classes: usize, params: &ForestParams, seed: u64) -> Self {
        let n = x.nrows();
        let mtry = params.max_features.resolve(x.ncols());
        let data = Presorted::new(x);
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::substream(seed, &["forest-tree", &t.to_string()]);
                let mut weights = vec![0u32; n];
                if params.bootstrap {
                    for _ in 0..n {
                        weights[rng.random_range(0..n)] += 1;
                    }
                } else {
                    weights.iter_mut().for_each(|w| *w = 1);
                }
                DecisionTree::fit_weighted(&data, y, n_classes, &params.tree, &weights, mtry, Some(&mut rng))
            })
            .collect();
        Self { trees, n_classes }
    }

    pub(crate) fn predict(&self, x: &Matrix) -> Vec<u8> {
        let mut votes = vec![0u32; self.n_classes];
        (0..x.nrows())
            .map(|i| {
                votes.iter_mut().for_each(|v| *v = 0);
                let row = x.row(i);
                for tree in &self.trees {
                    votes[tree.predict_row(row) as usize] += 1;
                }
                argmax_lowest(&votes) as u8
            })
            .collect()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
