//! Gaussian-process regression with an ARD Matérn-5/2 kernel.
//!
//! Targets are standardized before fitting. Length scales are chosen by
//! maximizing the log marginal likelihood with projected gradient ascent in
//! log space from several starting points.

use rand::Rng;

use super::linalg::{cholesky_in_place, inverse_from_cholesky, solve_lower, solve_lower_transposed};
use super::{Dataset, Prediction, SurrogateConfig};
use crate::error::{Error, Result};
use crate::rng::RandomSource;

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MIN_JITTER: f64 = 1e-10;
const MAX_JITTER: f64 = 1e-2;
const DEFAULT_LENGTH_SCALE: f64 = 0.5;

/// Matérn-5/2 correlation at scaled distance `r`.
#[inline]
pub fn matern52(r: f64) -> f64 {
    (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
}

/// Kernel settings of a fitted model, in standardized target units.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparameters {
    pub length_scales: Vec<f64>,
    pub amplitude: f64,
    /// Diagonal term actually used: configured noise plus any jitter needed
    /// for a stable factorization.
    pub noise: f64,
    pub y_mean: f64,
    pub y_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    n: usize,
    d: usize,
    x: Vec<f64>,
    hyper: GpHyperparameters,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

/// Per-dimension squared differences, shared by every likelihood evaluation.
struct PairwiseSq {
    n: usize,
    d: usize,
    // [dim][i * n + j]
    sq: Vec<Vec<f64>>,
}

impl PairwiseSq {
    fn new(x: &[f64], n: usize, d: usize) -> Self {
        let sq = (0..d)
            .map(|f| {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..i {
                        let diff = x[i * d + f] - x[j * d + f];
                        m[i * n + j] = diff * diff;
                        m[j * n + i] = diff * diff;
                    }
                }
                m
            })
            .collect();
        PairwiseSq { n, d, sq }
    }

    fn scaled_r(&self, inv_ls2: &[f64], idx: usize) -> f64 {
        let mut r2 = 0.0;
        for f in 0..self.d {
            r2 += self.sq[f][idx] * inv_ls2[f];
        }
        r2.sqrt()
    }
}

struct Likelihood<'a> {
    pairs: &'a PairwiseSq,
    y: &'a [f64],
    amplitude: f64,
    noise: f64,
    bounds: (f64, f64),
}

impl Likelihood<'_> {
    fn kernel_matrix(&self, log_ls: &[f64]) -> Vec<f64> {
        let n = self.pairs.n;
        let inv_ls2: Vec<f64> = log_ls.iter().map(|l| (-2.0 * l).exp()).collect();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = self.amplitude + self.noise;
            for j in 0..i {
                let v = self.amplitude * matern52(self.pairs.scaled_r(&inv_ls2, i * n + j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    /// Log marginal likelihood, or `None` when the kernel matrix is not
    /// positive definite at these length scales.
    fn value(&self, log_ls: &[f64]) -> Option<f64> {
        let n = self.pairs.n;
        let mut l = self.kernel_matrix(log_ls);
        if !cholesky_in_place(&mut l, n) {
            return None;
        }
        let mut a = self.y.to_vec();
        solve_lower(&l, n, &mut a);
        let fit: f64 = a.iter().map(|v| v * v).sum();
        let logdet: f64 = (0..n).map(|i| l[i * n + i].ln()).sum();
        Some(-0.5 * fit - logdet - 0.5 * n as f64 * LN_2PI)
    }

    fn value_and_gradient(&self, log_ls: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (n, d) = (self.pairs.n, self.pairs.d);
        let mut l = self.kernel_matrix(log_ls);
        if !cholesky_in_place(&mut l, n) {
            return None;
        }
        let mut alpha = self.y.to_vec();
        solve_lower(&l, n, &mut alpha);
        let fit: f64 = alpha.iter().map(|v| v * v).sum();
        solve_lower_transposed(&l, n, &mut alpha);
        let logdet: f64 = (0..n).map(|i| l[i * n + i].ln()).sum();
        let value = -0.5 * fit - logdet - 0.5 * n as f64 * LN_2PI;

        // d lml / d log l_f = 1/2 tr((a a^T - K^-1) dK/dlog l_f), with
        // dK_ij/dlog l_f = amp * 5/3 (1 + sqrt5 r) exp(-sqrt5 r) * sq_f(i,j) / l_f^2
        let kinv = inverse_from_cholesky(&l, n);
        let inv_ls2: Vec<f64> = log_ls.iter().map(|v| (-2.0 * v).exp()).collect();
        let mut grad = vec![0.0; d];
        for i in 0..n {
            for j in 0..i {
                let idx = i * n + j;
                let r = self.pairs.scaled_r(&inv_ls2, idx);
                let g = self.amplitude * 5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp();
                let w = alpha[i] * alpha[j] - kinv[idx];
                // symmetric pair counted twice, times the 1/2
                let c = w * g;
                for (f, gf) in grad.iter_mut().enumerate() {
                    *gf += c * self.pairs.sq[f][idx] * inv_ls2[f];
                }
            }
        }
        Some((value, grad))
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.bounds.0, self.bounds.1)
    }

    /// Bounded gradient ascent with step doubling/backtracking.
    fn ascend(&self, start: Vec<f64>, max_iters: usize) -> Option<(f64, Vec<f64>)> {
        let (mut value, mut grad) = self.value_and_gradient(&start)?;
        let mut theta = start;
        let mut step = 0.5;
        for _ in 0..max_iters {
            let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if scale < 1e-9 {
                break;
            }
            let mut accepted = false;
            while step >= 1e-3 {
                let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| self.clamp(t + step * g / scale)).collect();
                if cand == theta {
                    break;
                }
                match self.value(&cand) {
                    Some(v) if v > value => {
                        theta = cand;
                        accepted = true;
                        break;
                    }
                    _ => step *= 0.25,
                }
            }
            if !accepted {
                break;
            }
            let Some((v, g)) = self.value_and_gradient(&theta) else { break };
            value = v;
            grad = g;
            step = (step * 2.0).min(2.0);
        }
        Some((value, theta))
    }
}

impl GpModel {
    pub(crate) fn fit(data: &Dataset, cfg: &SurrogateConfig, rng: &mut RandomSource) -> Result<Self> {
        let n = data.len();
        let d = data.dim();
        let x: Vec<f64> = data.inputs().iter().flat_map(|r| r.iter().copied()).collect();
        let targets = data.targets();
        let y_mean = targets.iter().sum::<f64>() / n as f64;
        let var = targets.iter().map(|t| (t - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
        let y: Vec<f64> = targets.iter().map(|t| (t - y_mean) / y_std).collect();

        let pairs = PairwiseSq::new(&x, n, d);
        let (lo, hi) = cfg.gp_length_scale_bounds;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::config(format!("invalid GP length-scale bounds ({lo}, {hi})")));
        }
        let bounds = (lo.ln(), hi.ln());

        // escalate jitter until the default kernel factorizes
        let mut noise = cfg.gp_noise.max(0.0) + MIN_JITTER;
        let default_theta = vec![DEFAULT_LENGTH_SCALE.clamp(lo, hi).ln(); d];
        loop {
            let lik = Likelihood { pairs: &pairs, y: &y, amplitude: cfg.gp_amplitude, noise, bounds };
            if lik.value(&default_theta).is_some() {
                break;
            }
            noise *= 10.0;
            if noise > MAX_JITTER {
                return Err(Error::Fit("GP kernel matrix is not positive definite".into()));
            }
        }
        let lik = Likelihood { pairs: &pairs, y: &y, amplitude: cfg.gp_amplitude, noise, bounds };

        let mut starts = vec![default_theta.clone()];
        for _ in 1..cfg.gp_restarts.max(1) {
            starts.push((0..d).map(|_| rng.random_range(bounds.0..=bounds.1)).collect());
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        if n > 1 {
            for start in starts {
                if let Some((v, theta)) = lik.ascend(start, cfg.gp_max_iters) {
                    if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                        best = Some((v, theta));
                    }
                }
            }
        }
        let theta = best.map_or(default_theta, |(_, t)| t);
        let hyper = GpHyperparameters {
            length_scales: theta.iter().map(|t| t.exp()).collect(),
            amplitude: cfg.gp_amplitude,
            noise,
            y_mean,
            y_std,
        };
        GpModel::condition(x, n, d, hyper, &y)
    }

    fn condition(x: Vec<f64>, n: usize, d: usize, mut hyper: GpHyperparameters, y: &[f64]) -> Result<Self> {
        let inv_ls2: Vec<f64> = hyper.length_scales.iter().map(|l| 1.0 / (l * l)).collect();
        loop {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                k[i * n + i] = hyper.amplitude + hyper.noise;
                for j in 0..i {
                    let v = hyper.amplitude * matern52(scaled_distance(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d], &inv_ls2));
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
            }
            if cholesky_in_place(&mut k, n) {
                let mut alpha = y.to_vec();
                solve_lower(&k, n, &mut alpha);
                solve_lower_transposed(&k, n, &mut alpha);
                return Ok(GpModel { n, d, x, hyper, chol: k, alpha });
            }
            hyper.noise *= 10.0;
            if hyper.noise > MAX_JITTER {
                return Err(Error::Fit("GP kernel matrix is not positive definite".into()));
            }
        }
    }

    /// Same kernel, conditioned on a different dataset.
    pub(crate) fn recondition(&self, data: &Dataset) -> Result<Self> {
        let n = data.len();
        let x: Vec<f64> = data.inputs().iter().flat_map(|r| r.iter().copied()).collect();
        let targets = data.targets();
        let y_mean = targets.iter().sum::<f64>() / n as f64;
        let var = targets.iter().map(|t| (t - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
        let y: Vec<f64> = targets.iter().map(|t| (t - y_mean) / y_std).collect();
        let hyper = GpHyperparameters { y_mean, y_std, ..self.hyper.clone() };
        GpModel::condition(x, n, data.dim(), hyper, &y)
    }

    pub fn hyperparameters(&self) -> &GpHyperparameters {
        &self.hyper
    }

    pub(crate) fn predict(&self, q: &[f64]) -> Prediction {
        let (n, d) = (self.n, self.d);
        let inv_ls2: Vec<f64> = self.hyper.length_scales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut kstar: Vec<f64> = (0..n)
            .map(|i| self.hyper.amplitude * matern52(scaled_distance(q, &self.x[i * d..(i + 1) * d], &inv_ls2)))
            .collect();
        let mean_std: f64 = kstar.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        solve_lower(&self.chol, n, &mut kstar);
        let explained: f64 = kstar.iter().map(|v| v * v).sum();
        let var = (self.hyper.amplitude - explained).max(0.0);
        Prediction {
            mean: self.hyper.y_mean + self.hyper.y_std * mean_std,
            std: self.hyper.y_std * var.sqrt(),
        }
    }
}

#[inline]
fn scaled_distance(a: &[f64], b: &[f64], inv_ls2: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for ((x, y), w) in a.iter().zip(b).zip(inv_ls2) {
        let diff = x - y;
        r2 += diff * diff * w;
    }
    r2.sqrt()
}
