//! Gradient-boosted regression trees fitted at three quantiles with the
//! pinball loss. The median ensemble supplies the mean and the spread of the
//! outer two supplies the standard deviation.

use super::tree::{grow, Presorted, SplitRule, Tree, TreeParams};
use super::{Dataset, Prediction, SurrogateConfig};
use crate::rng::RandomSource;

pub const GBRT_QUANTILES: [f64; 3] = [0.16, 0.5, 0.84];

#[derive(Debug, Clone, PartialEq)]
struct QuantileEnsemble {
    init: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl QuantileEnsemble {
    fn fit(sorted: &Presorted, y: &[f64], q: f64, cfg: &SurrogateConfig, rng: &mut RandomSource) -> Self {
        let n = y.len();
        let init = quantile(&mut y.to_vec(), q);
        let mut current = vec![init; n];
        let mut gradient = vec![0.0; n];
        let weights = vec![1.0; n];
        let params = TreeParams {
            rule: SplitRule::Best,
            max_depth: Some(cfg.gbrt_max_depth),
            max_features: sorted.d(),
        };
        let mut trees = Vec::with_capacity(cfg.gbrt_stages);
        let mut leaf_residuals: Vec<Vec<f64>> = Vec::new();
        for _ in 0..cfg.gbrt_stages {
            for i in 0..n {
                gradient[i] = if y[i] > current[i] { q } else { q - 1.0 };
            }
            let grown = grow(sorted, &gradient, &weights, params, rng);
            let mut tree = grown.tree;
            // the least-squares leaf means are replaced by the q-quantile of the residuals
            let n_nodes = grown.leaf_of_sample.iter().flatten().max().map_or(0, |m| m + 1);
            leaf_residuals.iter_mut().for_each(Vec::clear);
            leaf_residuals.resize_with(n_nodes.max(leaf_residuals.len()), Vec::new);
            for (i, leaf) in grown.leaf_of_sample.iter().enumerate() {
                if let Some(leaf) = leaf {
                    leaf_residuals[*leaf].push(y[i] - current[i]);
                }
            }
            for (leaf, residuals) in leaf_residuals.iter_mut().enumerate() {
                if !residuals.is_empty() {
                    tree.set_leaf_value(leaf, quantile(residuals, q));
                }
            }
            for i in 0..n {
                current[i] += cfg.gbrt_learning_rate * tree.predict(sorted.row(i));
            }
            trees.push(tree);
        }
        QuantileEnsemble { init, learning_rate: cfg.gbrt_learning_rate, trees }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbrtModel {
    ensembles: [QuantileEnsemble; 3],
    min_std: f64,
}

impl GbrtModel {
    pub(crate) fn fit(data: &Dataset, cfg: &SurrogateConfig, rng: &mut RandomSource) -> Self {
        let sorted = Presorted::new(data.inputs());
        let y = data.targets();
        let ensembles = GBRT_QUANTILES.map(|q| QuantileEnsemble::fit(&sorted, y, q, cfg, rng));
        GbrtModel { ensembles, min_std: cfg.min_std }
    }

    /// The (q16, q50, q84) predictions, sorted so the triple is monotone.
    pub fn quantiles(&self, x: &[f64]) -> [f64; 3] {
        let mut q = [0, 1, 2].map(|i| self.ensembles[i].predict(x));
        q.sort_by(f64::total_cmp);
        q
    }

    pub(crate) fn predict(&self, x: &[f64]) -> Prediction {
        let [lo, mid, hi] = self.quantiles(x);
        Prediction { mean: mid, std: (0.5 * (hi - lo)).max(0.0).max(self.min_std) }
    }
}

/// Linearly interpolated sample quantile; reorders `values`.
pub(crate) fn quantile(values: &mut [f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    values[lo] + frac * (values[hi] - values[lo])
}
