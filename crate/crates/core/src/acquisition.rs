//! Acquisition functions and their minimization over the unit cube.
//!
//! Every score follows one convention: lower is better. EI and PI are
//! therefore returned negated.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::rng::{self, RandomSource};
use crate::space::{ParamSpace, Point, UnitVector};
use crate::surrogate::{Prediction, Surrogate};

/// Standard deviations below this are treated as zero.
pub const STD_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AcquisitionKind {
    #[serde(rename = "LCB")]
    Lcb,
    #[serde(rename = "EI")]
    Ei,
    #[serde(rename = "PI")]
    Pi,
    #[serde(rename = "gp_hedge")]
    GpHedge,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 4] =
        [AcquisitionKind::Lcb, AcquisitionKind::Ei, AcquisitionKind::Pi, AcquisitionKind::GpHedge];

    /// The three kinds `gp_hedge` chooses between, in gain-slot order.
    pub const HEDGED: [AcquisitionKind; 3] = [AcquisitionKind::Lcb, AcquisitionKind::Ei, AcquisitionKind::Pi];

    pub fn label(self) -> &'static str {
        match self {
            AcquisitionKind::Lcb => "LCB",
            AcquisitionKind::Ei => "EI",
            AcquisitionKind::Pi => "PI",
            AcquisitionKind::GpHedge => "gp_hedge",
        }
    }

    fn hedge_slot(self) -> Option<usize> {
        AcquisitionKind::HEDGED.iter().position(|&k| k == self)
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AcquisitionKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown acquisition `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionParams {
    /// LCB exploration weight; the bound uses `sqrt(beta)`.
    pub beta: f64,
    /// Improvement margin for EI and PI.
    pub xi: f64,
    /// Softmax temperature of `gp_hedge`.
    pub hedge_eta: f64,
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        AcquisitionParams { beta: 1.96, xi: 0.01, hedge_eta: 1.0 }
    }
}

impl AcquisitionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::validation(format!("beta must be finite and > 0, got {}", self.beta)));
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(Error::validation(format!("xi must be finite and >= 0, got {}", self.xi)));
        }
        if !(self.hedge_eta.is_finite() && self.hedge_eta > 0.0) {
            return Err(Error::validation(format!("hedge_eta must be finite and > 0, got {}", self.hedge_eta)));
        }
        Ok(())
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `mu - sqrt(beta) * sigma`.
pub fn lcb(pred: Prediction, params: &AcquisitionParams) -> f64 {
    pred.mean - params.beta.sqrt() * pred.std
}

/// Negated expected improvement below `f_best - xi`.
pub fn ei(pred: Prediction, f_best: f64, params: &AcquisitionParams) -> f64 {
    let improvement = f_best - params.xi - pred.mean;
    if pred.std < STD_FLOOR {
        return -improvement.max(0.0);
    }
    let z = improvement / pred.std;
    -(improvement * normal_cdf(z) + pred.std * normal_pdf(z))
}

/// Negated probability of landing below `f_best - xi`.
pub fn pi(pred: Prediction, f_best: f64, params: &AcquisitionParams) -> f64 {
    let improvement = f_best - params.xi - pred.mean;
    if pred.std < STD_FLOOR {
        return if improvement > 0.0 { -1.0 } else { 0.0 };
    }
    -normal_cdf(improvement / pred.std)
}

/// Scores `pred` under a concrete kind; `gp_hedge` must be resolved first.
pub fn score(kind: AcquisitionKind, pred: Prediction, f_best: f64, params: &AcquisitionParams) -> Result<f64> {
    Ok(match kind {
        AcquisitionKind::Lcb => lcb(pred, params),
        AcquisitionKind::Ei => ei(pred, f_best, params),
        AcquisitionKind::Pi => pi(pred, f_best, params),
        AcquisitionKind::GpHedge => {
            return Err(Error::validation("gp_hedge must be resolved to LCB, EI or PI before scoring"))
        }
    })
}

/// Cumulative gains of the three hedged acquisitions.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeState {
    pub gains: [f64; 3],
    rng: RandomSource,
}

impl HedgeState {
    pub fn new(rng: RandomSource) -> Self {
        HedgeState { gains: [0.0; 3], rng }
    }

    pub fn with_gains(gains: [f64; 3], rng: RandomSource) -> Self {
        HedgeState { gains, rng }
    }

    /// Softmax of `eta * gains`, in [`AcquisitionKind::HEDGED`] order.
    pub fn probabilities(&self, params: &AcquisitionParams) -> [f64; 3] {
        let scaled = self.gains.map(|g| params.hedge_eta * g);
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = scaled.map(|s| (s - max).exp());
        let total: f64 = w.iter().sum();
        w.map(|v| v / total)
    }

    pub fn choose(&mut self, params: &AcquisitionParams) -> AcquisitionKind {
        let p = self.probabilities(params);
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return AcquisitionKind::HEDGED[i];
            }
        }
        AcquisitionKind::HEDGED[2]
    }

    /// Adds `-mu_at_point` to the chosen kind's gain.
    pub fn update(&mut self, chosen: AcquisitionKind, mu_at_point: f64) -> Result<()> {
        let slot = chosen
            .hedge_slot()
            .ok_or_else(|| Error::validation("hedge update needs LCB, EI or PI"))?;
        if !mu_at_point.is_finite() {
            return Err(Error::validation(format!("hedge gain update is not finite ({mu_at_point})")));
        }
        self.gains[slot] -= mu_at_point;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSearch {
    /// Uniform random candidates scored per search.
    pub candidates: usize,
    /// Gaussian perturbations tried around the best candidate.
    pub refine_steps: usize,
    pub refine_scale: f64,
}

impl Default for AcquisitionSearch {
    fn default() -> Self {
        AcquisitionSearch { candidates: 1000, refine_steps: 20, refine_scale: 0.05 }
    }
}

/// Winner of an acquisition search.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Point,
    /// Continuous location the search settled on, before integer rounding.
    pub unit: UnitVector,
    pub value: f64,
    pub prediction: Prediction,
}

/// Minimizes the acquisition by random candidates plus keep-if-better local
/// perturbation of the best one.
pub fn argmin_acquisition(
    model: &Surrogate,
    kind: AcquisitionKind,
    params: &AcquisitionParams,
    f_best: f64,
    space: &ParamSpace,
    search: &AcquisitionSearch,
    rng: &mut RandomSource,
) -> Result<Proposal> {
    score(kind, Prediction { mean: 0.0, std: 1.0 }, f_best, params)?;
    let d = space.len();
    let eval = |u: &[f64]| -> (f64, Prediction) {
        let pred = model.predict_unchecked(u);
        (score(kind, pred, f_best, params).unwrap_or(f64::INFINITY), pred)
    };

    let mut best_u = space.sample_unit(rng);
    let (mut best_v, mut best_pred) = eval(&best_u);
    let mut cand = vec![0.0; d];
    for _ in 1..search.candidates.max(1) {
        cand.iter_mut().for_each(|c| *c = rng.random());
        let (v, pred) = eval(&cand);
        if v < best_v {
            best_v = v;
            best_pred = pred;
            best_u.copy_from_slice(&cand);
        }
    }
    for _ in 0..search.refine_steps {
        for (c, b) in cand.iter_mut().zip(&best_u) {
            let step: f64 = rng.sample(StandardNormal);
            *c = (b + search.refine_scale * step).clamp(0.0, 1.0);
        }
        let (v, pred) = eval(&cand);
        if v < best_v {
            best_v = v;
            best_pred = pred;
            best_u.copy_from_slice(&cand);
        }
    }
    let point = space.denormalize(&best_u)?;
    Ok(Proposal { point, unit: best_u, value: best_v, prediction: best_pred })
}

/// Fresh hedge state whose sampling stream is split off `rng`.
pub fn hedge_from(rng: &mut RandomSource) -> HedgeState {
    HedgeState::new(rng::fork(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Dimension;
    use crate::surrogate::{self, Dataset, SurrogateConfig, SurrogateKind};

    fn pred(mean: f64, std: f64) -> Prediction {
        Prediction { mean, std }
    }

    fn xi0() -> AcquisitionParams {
        AcquisitionParams { xi: 0.0, ..AcquisitionParams::default() }
    }

    #[test]
    fn lcb_examples() {
        let p = AcquisitionParams::default();
        assert_eq!(lcb(pred(1.0, 0.0), &AcquisitionParams { beta: 17.0, ..p }), 1.0);
        assert_eq!(lcb(pred(1.0, 0.5), &AcquisitionParams { beta: 4.0, ..p }), 0.0);
        assert!((lcb(pred(0.0, 1.0), &AcquisitionParams { beta: 1.96, ..p }) + 1.4).abs() < 1e-15);
    }

    #[test]
    fn ei_examples() {
        assert_eq!(ei(pred(2.0, 0.0), 1.0, &xi0()), 0.0);
        assert!((ei(pred(1.0, 1.0), 1.0, &xi0()) + 0.398_942_280_401_432_7).abs() < 1e-12);
        // Phi(1) = 0.841344746068543, phi(1) = 0.241970724519143
        let v = ei(pred(0.0, 1.0), 1.0, &xi0());
        assert!((v + 1.083_315_470_587_686).abs() < 1e-12, "{v}");
    }

    #[test]
    fn pi_examples() {
        assert_eq!(pi(pred(1.0, 0.3), 1.0, &xi0()), -0.5);
        assert!((pi(pred(0.0, 1.0), 1.96, &xi0()) + 0.975).abs() < 1e-4);
        assert_eq!(pi(pred(0.5, 0.0), 1.0, &xi0()), -1.0);
        assert_eq!(pi(pred(1.5, 0.0), 1.0, &xi0()), 0.0);
    }

    #[test]
    fn hedge_is_uniform_at_init() {
        let mut h = HedgeState::new(rng::stream(11, 0));
        let params = AcquisitionParams::default();
        let mut counts = [0usize; 3];
        let draws = 10_000;
        for _ in 0..draws {
            let k = h.choose(&params);
            counts[k.hedge_slot().unwrap()] += 1;
        }
        let expected = draws as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square with 2 dof, p = 0.01 critical value
        assert!(chi2 < 9.21, "{counts:?} chi2 = {chi2}");
    }

    #[test]
    fn hedge_favours_large_gain() {
        let h = HedgeState::with_gains([10.0, -10.0, -10.0], rng::stream(0, 0));
        let p = h.probabilities(&AcquisitionParams::default());
        assert!(p[0] > 0.99);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hedge_update_is_local_and_additive() {
        let mut h = HedgeState::new(rng::stream(0, 0));
        h.update(AcquisitionKind::Ei, 2.0).unwrap();
        assert_eq!(h.gains, [0.0, -2.0, 0.0]);
        h.update(AcquisitionKind::Ei, 0.0).unwrap();
        assert_eq!(h.gains, [0.0, -2.0, 0.0]);
        h.update(AcquisitionKind::Lcb, -1.5).unwrap();
        h.update(AcquisitionKind::Ei, 1.0).unwrap();
        assert_eq!(h.gains, [1.5, -3.0, 0.0]);
        assert!(h.update(AcquisitionKind::GpHedge, 1.0).is_err());
    }

    #[test]
    fn ei_and_pi_are_monotone_in_mean() {
        let params = AcquisitionParams::default();
        for &std in &[0.0, 1e-3, 0.3, 2.0] {
            let mut prev_ei = f64::NEG_INFINITY;
            let mut prev_pi = f64::NEG_INFINITY;
            for i in 0..200 {
                let mu = -3.0 + 0.03 * i as f64;
                let (e, p) = (ei(pred(mu, std), 0.5, &params), pi(pred(mu, std), 0.5, &params));
                assert!(e >= prev_ei - 1e-15 && p >= prev_pi - 1e-15);
                prev_ei = e;
                prev_pi = p;
            }
        }
    }

    #[test]
    fn scoring_gp_hedge_directly_is_an_error() {
        assert!(score(AcquisitionKind::GpHedge, pred(0.0, 1.0), 0.0, &xi0()).is_err());
    }

    fn unit_space() -> ParamSpace {
        ParamSpace::new(vec![Dimension::real("x", 0.0, 1.0).unwrap()]).unwrap()
    }

    #[test]
    fn argmin_finds_the_mean_minimum_with_tiny_beta() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let data = Dataset::new(xs.iter().map(|&x| vec![x]).collect(), xs.iter().map(|x| (x - 0.37).powi(2)).collect())
            .unwrap();
        let model = surrogate::fit(SurrogateKind::Gp, &data, &mut rng::stream(0, 0), &SurrogateConfig::default()).unwrap();
        let params = AcquisitionParams { beta: 1e-12, ..AcquisitionParams::default() };
        // oracle: dense grid scan of the posterior mean
        let grid_best = (0..=10_000)
            .map(|i| i as f64 / 10_000.0)
            .min_by(|a, b| model.predict(&[*a]).unwrap().mean.total_cmp(&model.predict(&[*b]).unwrap().mean))
            .unwrap();
        let prop = argmin_acquisition(
            &model,
            AcquisitionKind::Lcb,
            &params,
            0.0,
            &unit_space(),
            &AcquisitionSearch::default(),
            &mut rng::stream(1, 0),
        )
        .unwrap();
        assert!((prop.point.0[0] - grid_best).abs() < 0.05, "{} vs {grid_best}", prop.point.0[0]);
    }

    #[test]
    fn argmin_on_flat_surface_returns_the_constant() {
        let data = Dataset::new(vec![vec![0.2], vec![0.8]], vec![3.0, 3.0]).unwrap();
        let model = surrogate::fit(SurrogateKind::Rf, &data, &mut rng::stream(0, 0), &SurrogateConfig::default()).unwrap();
        let prop = argmin_acquisition(
            &model,
            AcquisitionKind::Lcb,
            &AcquisitionParams::default(),
            3.0,
            &unit_space(),
            &AcquisitionSearch::default(),
            &mut rng::stream(0, 0),
        )
        .unwrap();
        assert_eq!(prop.value, 3.0);
    }

    #[test]
    fn argmin_respects_mixed_bounds() {
        let space = ParamSpace::new(vec![
            Dimension::integer("a", 4, 100).unwrap(),
            Dimension::real("b", 0.1, 1.0).unwrap(),
        ])
        .unwrap();
        let data = Dataset::new(vec![vec![0.1, 0.9], vec![0.7, 0.2], vec![0.4, 0.4]], vec![1.0, -2.0, 0.5]).unwrap();
        for kind in SurrogateKind::ALL {
            let model = surrogate::fit(kind, &data, &mut rng::stream(0, 0), &SurrogateConfig::default()).unwrap();
            for acq in AcquisitionKind::HEDGED {
                let prop = argmin_acquisition(
                    &model,
                    acq,
                    &AcquisitionParams::default(),
                    -2.0,
                    &space,
                    &AcquisitionSearch { candidates: 100, ..AcquisitionSearch::default() },
                    &mut rng::stream(5, 0),
                )
                .unwrap();
                space.validate(&prop.point).unwrap();
            }
        }
    }
}
