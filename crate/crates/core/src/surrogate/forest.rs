//! Random forests and extremely randomized trees.

use rand::Rng;

use super::tree::{grow, Presorted, SplitRule, Tree, TreeParams};
use super::{Dataset, Prediction, SurrogateConfig};
use crate::rng::{self, RandomSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ForestFlavor {
    /// Bootstrap resampling, best split over a random feature subset.
    Random,
    /// Full sample, one random threshold per feature.
    Extra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    min_std: f64,
}

impl ForestModel {
    pub(crate) fn fit(flavor: ForestFlavor, data: &Dataset, cfg: &SurrogateConfig, rng: &mut RandomSource) -> Self {
        let sorted = Presorted::new(data.inputs());
        let (n, d) = (sorted.n(), sorted.d());
        let params = match flavor {
            ForestFlavor::Random => TreeParams {
                rule: SplitRule::Best,
                max_depth: None,
                max_features: cfg.rf_max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d),
            },
            ForestFlavor::Extra => TreeParams { rule: SplitRule::RandomThreshold, max_depth: None, max_features: d },
        };
        let mut weights = vec![1.0; n];
        let trees = (0..cfg.n_trees.max(1))
            .map(|_| {
                let mut tree_rng = rng::fork(rng);
                if flavor == ForestFlavor::Random {
                    weights.fill(0.0);
                    for _ in 0..n {
                        weights[tree_rng.random_range(0..n)] += 1.0;
                    }
                }
                grow(&sorted, data.targets(), &weights, params, &mut tree_rng).tree
            })
            .collect();
        ForestModel { trees, min_std: cfg.min_std }
    }

    pub(crate) fn predict(&self, x: &[f64]) -> Prediction {
        per_tree_moments(self.trees.iter().map(|t| t.predict(x)), self.min_std)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

/// Mean and population standard deviation of the per-tree outputs.
pub(crate) fn per_tree_moments(outputs: impl Iterator<Item = f64>, min_std: f64) -> Prediction {
    let (mut count, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    for v in outputs {
        count += 1.0;
        let delta = v - mean;
        mean += delta / count;
        m2 += delta * (v - mean);
    }
    let std = if count > 0.0 { (m2 / count).max(0.0).sqrt() } else { 0.0 };
    Prediction { mean, std: std.max(min_std) }
}
