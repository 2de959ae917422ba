//! Probabilistic regressors over the unit cube.
//!
//! Four families are supported: a Matérn-5/2 Gaussian process, random
//! forests, extra trees, and a quantile gradient-boosting triple. Every
//! model predicts a mean and a standard deviation in objective units.

mod forest;
mod gbrt;
mod gp;
mod linalg;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::space::UnitVector;

pub use forest::ForestModel;
pub use gbrt::{GbrtModel, GBRT_QUANTILES};
pub use gp::{matern52, GpHyperparameters, GpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SurrogateKind {
    #[serde(rename = "GP")]
    Gp,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "ET")]
    Et,
    #[serde(rename = "GBRT")]
    Gbrt,
}

impl SurrogateKind {
    pub const ALL: [SurrogateKind; 4] = [SurrogateKind::Gp, SurrogateKind::Rf, SurrogateKind::Et, SurrogateKind::Gbrt];

    pub fn label(self) -> &'static str {
        match self {
            SurrogateKind::Gp => "GP",
            SurrogateKind::Rf => "RF",
            SurrogateKind::Et => "ET",
            SurrogateKind::Gbrt => "GBRT",
        }
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SurrogateKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown surrogate `{s}`")))
    }
}

/// Predictive mean and standard deviation at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

/// Training data: unit-cube inputs and minimization-sign targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<UnitVector>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<UnitVector>, targets: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::validation("dataset is empty"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::validation(format!(
                "dataset has {} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let d = inputs[0].len();
        if d == 0 {
            return Err(Error::validation("dataset inputs have zero dimensions"));
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != d {
                return Err(Error::validation(format!("input {i} has {} coordinates, expected {d}", x.len())));
            }
            if x.iter().any(|c| !c.is_finite() || !(0.0..=1.0).contains(c)) {
                return Err(Error::validation(format!("input {i} lies outside the unit cube")));
            }
        }
        if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
            return Err(Error::validation(format!("target {i} is not finite ({})", targets[i])));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn inputs(&self) -> &[UnitVector] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Trees per RF/ET ensemble.
    pub n_trees: usize,
    /// Features tried per RF split; `None` means `ceil(sqrt(d))`.
    pub rf_max_features: Option<usize>,
    /// Lower bound applied to every tree-ensemble standard deviation.
    pub min_std: f64,
    pub gp_restarts: usize,
    /// Gradient steps per GP restart.
    pub gp_max_iters: usize,
    pub gp_noise: f64,
    pub gp_amplitude: f64,
    pub gp_length_scale_bounds: (f64, f64),
    pub gbrt_stages: usize,
    pub gbrt_learning_rate: f64,
    pub gbrt_max_depth: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            n_trees: 100,
            rf_max_features: None,
            min_std: 0.0,
            gp_restarts: 8,
            gp_max_iters: 20,
            gp_noise: 1e-6,
            gp_amplitude: 1.0,
            gp_length_scale_bounds: (1e-2, 1e2),
            gbrt_stages: 100,
            gbrt_learning_rate: 0.1,
            gbrt_max_depth: 3,
        }
    }
}

/// A fitted, immutable surrogate.
#[derive(Debug, Clone, PartialEq)]
pub enum Surrogate {
    Gp(GpModel),
    Forest(SurrogateKind, ForestModel),
    Gbrt(GbrtModel),
}

/// Fits `kind` on `data`. Deterministic given the data, config, and rng state.
pub fn fit(kind: SurrogateKind, data: &Dataset, rng: &mut RandomSource, cfg: &SurrogateConfig) -> Result<Surrogate> {
    Ok(match kind {
        SurrogateKind::Gp => Surrogate::Gp(GpModel::fit(data, cfg, rng)?),
        SurrogateKind::Rf => Surrogate::Forest(kind, ForestModel::fit(forest::ForestFlavor::Random, data, cfg, rng)),
        SurrogateKind::Et => Surrogate::Forest(kind, ForestModel::fit(forest::ForestFlavor::Extra, data, cfg, rng)),
        SurrogateKind::Gbrt => Surrogate::Gbrt(GbrtModel::fit(data, cfg, rng)),
    })
}

impl Surrogate {
    pub fn kind(&self) -> SurrogateKind {
        match self {
            Surrogate::Gp(_) => SurrogateKind::Gp,
            Surrogate::Forest(kind, _) => *kind,
            Surrogate::Gbrt(_) => SurrogateKind::Gbrt,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::validation(format!("query {x:?} lies outside the unit cube")));
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        match self {
            Surrogate::Gp(m) => m.predict(x),
            Surrogate::Forest(_, m) => m.predict(x),
            Surrogate::Gbrt(m) => m.predict(x),
        }
    }

    /// Refits on `data` while keeping any fitted GP kernel hyperparameters;
    /// tree models are regrown from scratch.
    pub fn refit_keeping_kernel(
        &self,
        data: &Dataset,
        rng: &mut RandomSource,
        cfg: &SurrogateConfig,
    ) -> Result<Surrogate> {
        match self {
            Surrogate::Gp(m) => Ok(Surrogate::Gp(m.recondition(data)?)),
            other => fit(other.kind(), data, rng, cfg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn sin_data(xs: &[f64]) -> Dataset {
        Dataset::new(xs.iter().map(|&x| vec![x]).collect(), xs.iter().map(|x| (6.0 * x).sin()).collect()).unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![vec![0.5]], vec![1.0, 2.0]).is_err());
        assert!(matches!(Dataset::new(vec![vec![0.5]], vec![f64::NAN]), Err(Error::Validation(_))));
        assert!(Dataset::new(vec![vec![1.5]], vec![1.0]).is_err());
    }

    #[test]
    fn gp_interpolates_single_point() {
        let data = Dataset::new(vec![vec![0.5]], vec![2.0]).unwrap();
        let m = fit(SurrogateKind::Gp, &data, &mut rng::stream(0, 0), &SurrogateConfig::default()).unwrap();
        assert!((m.predict(&[0.5]).unwrap().mean - 2.0).abs() < 1e-3);
    }

    #[test]
    fn gp_without_noise_collapses_at_data() {
        let data = sin_data(&[0.1, 0.5, 0.9]);
        let cfg = SurrogateConfig { gp_noise: 0.0, ..SurrogateConfig::default() };
        let m = fit(SurrogateKind::Gp, &data, &mut rng::stream(0, 0), &cfg).unwrap();
        for x in [0.1, 0.5, 0.9] {
            assert!(m.predict(&[x]).unwrap().std <= 1e-4);
        }
    }

    #[test]
    fn forest_on_constant_targets_is_exact() {
        let data = Dataset::new((0..12).map(|i| vec![i as f64 / 11.0]).collect(), vec![1.0; 12]).unwrap();
        for kind in [SurrogateKind::Rf, SurrogateKind::Et] {
            let m = fit(kind, &data, &mut rng::stream(0, 0), &SurrogateConfig::default()).unwrap();
            for x in [0.0, 0.37, 1.0] {
                let p = m.predict(&[x]).unwrap();
                assert_eq!(p.mean, 1.0);
                assert_eq!(p.std, 0.0);
            }
        }
    }

    #[test]
    fn gbrt_quantiles_are_ordered_on_symmetric_data() {
        let xs: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        let data = Dataset::new(xs.iter().map(|&x| vec![x]).collect(), xs.iter().map(|x| (x - 0.5).abs()).collect())
            .unwrap();
        let Surrogate::Gbrt(m) = fit(SurrogateKind::Gbrt, &data, &mut rng::stream(0, 0), &SurrogateConfig::default())
            .unwrap()
        else {
            panic!("expected gbrt");
        };
        for i in 0..=50 {
            let q = m.quantiles(&[i as f64 / 50.0]);
            assert!(q[0] <= q[1] && q[1] <= q[2]);
        }
    }

    #[test]
    fn gbrt_median_tracks_data() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let data = sin_data(&xs);
        let m = fit(SurrogateKind::Gbrt, &data, &mut rng::stream(0, 0), &SurrogateConfig::default()).unwrap();
        for &x in &xs {
            let p = m.predict(&[x]).unwrap();
            assert!((p.mean - (6.0 * x).sin()).abs() < 0.2, "{x}: {}", p.mean);
        }
    }

    #[test]
    fn predict_rejects_outside_cube() {
        let data = sin_data(&[0.2, 0.8]);
        for kind in SurrogateKind::ALL {
            let m = fit(kind, &data, &mut rng::stream(0, 0), &SurrogateConfig::default()).unwrap();
            assert!(m.predict(&[1.2]).is_err());
            assert_eq!(m.kind(), kind);
        }
    }

    #[test]
    fn kind_labels_round_trip() {
        for kind in SurrogateKind::ALL {
            assert_eq!(kind.label().parse::<SurrogateKind>().unwrap(), kind);
        }
        assert!("SVM".parse::<SurrogateKind>().is_err());
    }

    fn small_cfg() -> SurrogateConfig {
        SurrogateConfig { n_trees: 10, gbrt_stages: 20, gp_restarts: 2, ..SurrogateConfig::default() }
    }

    fn arb_data() -> impl Strategy<Value = (Dataset, Vec<f64>)> {
        (1usize..4, 1usize..15).prop_flat_map(|(d, n)| {
            (
                prop::collection::vec(prop::collection::vec(0.0f64..=1.0, d), n),
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(0.0f64..=1.0, d),
            )
                .prop_map(|(xs, ys, q)| (Dataset::new(xs, ys).unwrap(), q))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn predictions_are_finite_with_nonnegative_std((data, q) in arb_data(), seed in any::<u64>()) {
            for kind in SurrogateKind::ALL {
                let m = fit(kind, &data, &mut rng::stream(seed, 0), &small_cfg()).unwrap();
                let p = m.predict(&q).unwrap();
                prop_assert!(p.mean.is_finite() && p.std.is_finite() && p.std >= 0.0, "{kind}: {p:?}");
            }
        }

        #[test]
        fn tree_ensemble_mean_is_within_target_range((data, q) in arb_data(), seed in any::<u64>()) {
            let lo = data.targets().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = data.targets().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for kind in [SurrogateKind::Rf, SurrogateKind::Et] {
                let m = fit(kind, &data, &mut rng::stream(seed, 0), &small_cfg()).unwrap();
                let p = m.predict(&q).unwrap();
                prop_assert!(p.mean >= lo - 1e-9 && p.mean <= hi + 1e-9);
            }
        }

        #[test]
        fn fits_are_deterministic((data, q) in arb_data(), seed in any::<u64>()) {
            for kind in SurrogateKind::ALL {
                let a = fit(kind, &data, &mut rng::stream(seed, 3), &small_cfg()).unwrap();
                let b = fit(kind, &data, &mut rng::stream(seed, 3), &small_cfg()).unwrap();
                prop_assert_eq!(a.predict(&q).unwrap(), b.predict(&q).unwrap());
            }
        }
    }
}
