//! A single base Bayesian optimizer: one (surrogate, acquisition) genome with
//! an ask/tell lifecycle over a history that may be shared with other
//! optimizers.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acquisition::{self, AcquisitionKind, AcquisitionParams, AcquisitionSearch, HedgeState};
use crate::error::{Error, Result};
use crate::rng::{self, RandomSource};
use crate::space::{ParamSpace, Point};
use crate::surrogate::{self, Dataset, Prediction, Surrogate, SurrogateConfig, SurrogateKind};

/// The identity of a base optimizer: which surrogate and which acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GenomeId {
    pub surrogate: SurrogateKind,
    pub acquisition: AcquisitionKind,
}

impl GenomeId {
    pub const fn new(surrogate: SurrogateKind, acquisition: AcquisitionKind) -> Self {
        GenomeId { surrogate, acquisition }
    }

    /// All 16 surrogate × acquisition combinations, surrogate-major.
    pub fn universe() -> Vec<GenomeId> {
        SurrogateKind::ALL
            .into_iter()
            .flat_map(|s| AcquisitionKind::ALL.into_iter().map(move |a| GenomeId::new(s, a)))
            .collect()
    }

    /// Position in [`GenomeId::universe`].
    pub fn index(self) -> usize {
        let s = SurrogateKind::ALL.iter().position(|&k| k == self.surrogate).unwrap();
        let a = AcquisitionKind::ALL.iter().position(|&k| k == self.acquisition).unwrap();
        s * AcquisitionKind::ALL.len() + a
    }
}

impl fmt::Display for GenomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.surrogate, self.acquisition)
    }
}

impl FromStr for GenomeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (sur, acq) = s
            .split_once('_')
            .ok_or_else(|| Error::validation(format!("genome label `{s}` is not of the form SURROGATE_ACQUISITION")))?;
        Ok(GenomeId::new(sur.parse()?, acq.parse()?))
    }
}

impl Serialize for GenomeId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GenomeId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A base optimizer's full parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Genome {
    pub surrogate: SurrogateKind,
    pub acquisition: AcquisitionKind,
    pub params: AcquisitionParams,
}

impl Genome {
    pub fn new(surrogate: SurrogateKind, acquisition: AcquisitionKind, params: AcquisitionParams) -> Self {
        Genome { surrogate, acquisition, params }
    }

    pub fn from_id(id: GenomeId, params: AcquisitionParams) -> Self {
        Genome::new(id.surrogate, id.acquisition, params)
    }

    pub fn id(&self) -> GenomeId {
        GenomeId::new(self.surrogate, self.acquisition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialSource {
    /// Uniform point from the initial design.
    Initial,
    /// Minimizer of the acquisition on a fitted surrogate.
    Model,
    /// Uniform point drawn because the surrogate could not be fitted.
    Fallback,
    /// Placeholder objective inserted by the constant-liar strategy.
    Liar,
}

/// One evaluated point. `objective` always has minimization sign.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub point: Point,
    pub objective: f64,
    pub iteration: usize,
    pub genome: GenomeId,
    pub source: TrialSource,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Random points before the first model-based suggestion; `None` means `max(10, 2d)`.
    pub n_init: Option<usize>,
    pub surrogate: SurrogateConfig,
    pub search: AcquisitionSearch,
    /// Re-estimate GP kernel hyperparameters at every constant-liar step
    /// instead of once per batch.
    pub refit_kernel_in_batch: bool,
}

impl OptimizerConfig {
    pub fn resolved_n_init(&self, space: &ParamSpace) -> usize {
        self.n_init.unwrap_or_else(|| (2 * space.len()).max(10))
    }
}

/// A point proposed by [`BaseOptimizer::ask`].
#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub point: Point,
    pub source: TrialSource,
    pub genome: GenomeId,
    /// Concrete acquisition used, after resolving `gp_hedge`.
    pub acquisition: Option<AcquisitionKind>,
    /// Surrogate prediction at `point`.
    pub prediction: Option<Prediction>,
}

#[derive(Debug, Clone)]
struct PendingHedge {
    point: Point,
    chosen: AcquisitionKind,
    mean: f64,
}

/// Mutable state of one base optimizer. The trial history lives outside so
/// several optimizers can share it.
#[derive(Debug, Clone)]
pub struct BaseOptimizer {
    genome: Genome,
    space: ParamSpace,
    config: OptimizerConfig,
    hedge: Option<HedgeState>,
    rng: RandomSource,
    pending: Vec<PendingHedge>,
}

impl BaseOptimizer {
    pub fn new(genome: Genome, space: ParamSpace, config: OptimizerConfig, mut rng: RandomSource) -> Result<Self> {
        genome.params.validate()?;
        let hedge = (genome.acquisition == AcquisitionKind::GpHedge).then(|| acquisition::hedge_from(&mut rng));
        Ok(BaseOptimizer { genome, space, config, hedge, rng, pending: Vec::new() })
    }

    /// Optimizer for `genome` on the conventional stream for `seed`.
    pub fn seeded(genome: Genome, space: ParamSpace, config: OptimizerConfig, seed: u64) -> Result<Self> {
        let stream = rng::GENOME_STREAM_BASE + genome.id().index() as u64;
        BaseOptimizer::new(genome, space, config, rng::stream(seed, stream))
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn hedge(&self) -> Option<&HedgeState> {
        self.hedge.as_ref()
    }

    pub fn n_init(&self) -> usize {
        self.config.resolved_n_init(&self.space)
    }

    /// Next point given `history`.
    pub fn ask(&mut self, history: &[Trial]) -> Suggestion {
        self.ask_with_kernel(history, None).0
    }

    fn random(&mut self, source: TrialSource) -> Suggestion {
        Suggestion {
            point: self.space.sample(&mut self.rng),
            source,
            genome: self.genome.id(),
            acquisition: None,
            prediction: None,
        }
    }

    fn dataset(&self, history: &[Trial]) -> Result<Dataset> {
        let inputs = history.iter().map(|t| self.space.normalize(&t.point)).collect::<Result<Vec<_>>>()?;
        Dataset::new(inputs, history.iter().map(|t| t.objective).collect())
    }

    /// `ask`, optionally reusing the GP kernel of a model fitted earlier in the same batch.
    fn ask_with_kernel(&mut self, history: &[Trial], kernel: Option<&Surrogate>) -> (Suggestion, Option<Surrogate>) {
        let n_real = history.iter().filter(|t| t.source != TrialSource::Liar).count();
        if n_real < self.n_init() {
            return (self.random(TrialSource::Initial), None);
        }
        let mut fit_rng = rng::fork(&mut self.rng);
        let model = self.dataset(history).and_then(|data| match kernel {
            Some(previous) => previous.refit_keeping_kernel(&data, &mut fit_rng, &self.config.surrogate),
            None => surrogate::fit(self.genome.surrogate, &data, &mut fit_rng, &self.config.surrogate),
        });
        let Ok(model) = model else {
            return (self.random(TrialSource::Fallback), None);
        };
        let kind = match self.hedge.as_mut() {
            Some(h) => h.choose(&self.genome.params),
            None => self.genome.acquisition,
        };
        let f_best = history.iter().map(|t| t.objective).fold(f64::INFINITY, f64::min);
        let proposal = acquisition::argmin_acquisition(
            &model,
            kind,
            &self.genome.params,
            f_best,
            &self.space,
            &self.config.search,
            &mut self.rng,
        );
        let Ok(proposal) = proposal else {
            return (self.random(TrialSource::Fallback), None);
        };
        let prediction = self
            .space
            .normalize(&proposal.point)
            .and_then(|u| model.predict(&u))
            .unwrap_or(proposal.prediction);
        if self.hedge.is_some() {
            self.pending.push(PendingHedge { point: proposal.point.clone(), chosen: kind, mean: prediction.mean });
        }
        let suggestion = Suggestion {
            point: proposal.point,
            source: TrialSource::Model,
            genome: self.genome.id(),
            acquisition: Some(kind),
            prediction: Some(prediction),
        };
        (suggestion, Some(model))
    }

    /// `n_points` suggestions via the constant-liar strategy; `history` is not modified.
    pub fn ask_batch(&mut self, history: &[Trial], n_points: usize) -> Result<Vec<Suggestion>> {
        if n_points == 0 {
            return Err(Error::validation("ask_batch needs at least one point"));
        }
        let mut batch = LiarBatch::new(history);
        Ok((0..n_points).map(|_| batch.ask(self)).collect())
    }

    /// Validates `trial`, applies any pending hedge gain for its point, and
    /// appends it to `history`. On error nothing changes.
    pub fn tell(&mut self, history: &mut Vec<Trial>, trial: Trial) -> Result<()> {
        validate_trial(&self.space, history, &trial)?;
        if let Some(pos) = self.pending.iter().position(|p| p.point == trial.point) {
            let pending = self.pending.remove(pos);
            if let Some(h) = self.hedge.as_mut() {
                h.update(pending.chosen, pending.mean)?;
            }
        }
        history.push(trial);
        Ok(())
    }

    /// Drops hedge bookkeeping for suggestions that will never be told.
    pub fn discard_pending(&mut self) {
        self.pending.clear();
    }
}

pub(crate) fn validate_trial(space: &ParamSpace, history: &[Trial], trial: &Trial) -> Result<()> {
    if !trial.objective.is_finite() {
        return Err(Error::validation(format!("objective must be finite, got {}", trial.objective)));
    }
    if trial.iteration == 0 {
        return Err(Error::validation("trial iteration starts at 1"));
    }
    if let Some(last) = history.last() {
        if trial.iteration < last.iteration {
            return Err(Error::validation(format!(
                "trial iteration {} precedes last recorded iteration {}",
                trial.iteration, last.iteration
            )));
        }
    }
    space.validate(&trial.point)
}

/// Scratch copy of a history that grows by one fake trial per suggestion.
///
/// The fake objective is the minimum real objective at batch creation, or 0
/// when there is no real observation.
pub struct LiarBatch {
    scratch: Vec<Trial>,
    fake: f64,
    kernels: HashMap<GenomeId, Surrogate>,
}

impl LiarBatch {
    pub fn new(history: &[Trial]) -> Self {
        let fake = history.iter().map(|t| t.objective).fold(f64::INFINITY, f64::min);
        LiarBatch {
            scratch: history.to_vec(),
            fake: if fake.is_finite() { fake } else { 0.0 },
            kernels: HashMap::new(),
        }
    }

    pub fn fake_objective(&self) -> f64 {
        self.fake
    }

    pub fn ask(&mut self, opt: &mut BaseOptimizer) -> Suggestion {
        let id = opt.genome.id();
        let kernel = if opt.config.refit_kernel_in_batch { None } else { self.kernels.get(&id) };
        let (suggestion, model) = opt.ask_with_kernel(&self.scratch, kernel);
        if let Some(model) = model {
            self.kernels.entry(id).or_insert(model);
        }
        let iteration = self.scratch.last().map_or(1, |t| t.iteration);
        self.scratch.push(Trial {
            point: suggestion.point.clone(),
            objective: self.fake,
            iteration,
            genome: id,
            source: TrialSource::Liar,
        });
        suggestion
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Dimension;

    fn line() -> ParamSpace {
        ParamSpace::new(vec![Dimension::real("x", 0.0, 1.0).unwrap()]).unwrap()
    }

    fn history(n: usize, f: impl Fn(f64) -> f64) -> Vec<Trial> {
        (0..n)
            .map(|i| {
                let x = (i as f64 * 0.618_034).fract();
                Trial {
                    point: Point(vec![x]),
                    objective: f(x),
                    iteration: i + 1,
                    genome: GenomeId::new(SurrogateKind::Gp, AcquisitionKind::Lcb),
                    source: TrialSource::Initial,
                }
            })
            .collect()
    }

    fn opt(s: SurrogateKind, a: AcquisitionKind, seed: u64) -> BaseOptimizer {
        BaseOptimizer::seeded(Genome::new(s, a, AcquisitionParams::default()), line(), OptimizerConfig::default(), seed)
            .unwrap()
    }

    #[test]
    fn genome_universe_and_labels() {
        let all = GenomeId::universe();
        assert_eq!(all.len(), 16);
        for (i, g) in all.iter().enumerate() {
            assert_eq!(g.index(), i);
            assert_eq!(g.to_string().parse::<GenomeId>().unwrap(), *g);
        }
        assert_eq!(GenomeId::new(SurrogateKind::Rf, AcquisitionKind::GpHedge).to_string(), "RF_gp_hedge");
        assert!("GP-LCB".parse::<GenomeId>().is_err());
    }

    #[test]
    fn cold_start_is_random_and_in_bounds() {
        let mut o = opt(SurrogateKind::Gp, AcquisitionKind::Ei, 0);
        assert_eq!(o.n_init(), 10);
        let s = o.ask(&[]);
        assert_eq!(s.source, TrialSource::Initial);
        line().validate(&s.point).unwrap();
    }

    #[test]
    fn model_ask_matches_stepwise_pipeline() {
        let hist = history(15, |x| (x - 0.3).powi(2));
        let mut o = opt(SurrogateKind::Gp, AcquisitionKind::Lcb, 4);
        let mut rng = o.rng.clone();
        let s = o.ask(&hist);
        assert_eq!(s.source, TrialSource::Model);

        let data = Dataset::new(hist.iter().map(|t| t.point.0.clone()).collect(), hist.iter().map(|t| t.objective).collect())
            .unwrap();
        let mut fit_rng = rng::fork(&mut rng);
        let model = surrogate::fit(SurrogateKind::Gp, &data, &mut fit_rng, &SurrogateConfig::default()).unwrap();
        let f_best = hist.iter().map(|t| t.objective).fold(f64::INFINITY, f64::min);
        let expect = acquisition::argmin_acquisition(
            &model,
            AcquisitionKind::Lcb,
            &AcquisitionParams::default(),
            f_best,
            &line(),
            &AcquisitionSearch::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(s.point, expect.point);
    }

    #[test]
    fn identical_state_gives_identical_asks() {
        let hist = history(12, |x| x.sin());
        for kind in SurrogateKind::ALL {
            let a = opt(kind, AcquisitionKind::GpHedge, 9).ask(&hist);
            let b = opt(kind, AcquisitionKind::GpHedge, 9).ask(&hist);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn batch_of_one_equals_ask() {
        let hist = history(12, |x| (x - 0.5).abs());
        let single = opt(SurrogateKind::Et, AcquisitionKind::Ei, 1).ask(&hist);
        let batch = opt(SurrogateKind::Et, AcquisitionKind::Ei, 1).ask_batch(&hist, 1).unwrap();
        assert_eq!(batch, vec![single]);
    }

    #[test]
    fn batch_points_are_distinct_and_history_untouched() {
        let hist = history(15, |x| -(-(x - 0.42).powi(2) / 0.002).exp());
        let before = hist.clone();
        let mut o = opt(SurrogateKind::Gp, AcquisitionKind::Ei, 2);
        let pts = o.ask_batch(&hist, 3).unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(hist, before);
        for i in 0..3 {
            for j in 0..i {
                assert!((pts[i].point.0[0] - pts[j].point.0[0]).abs() > 1e-6, "{pts:?}");
            }
        }
        assert!(o.ask_batch(&hist, 0).is_err());
    }

    #[test]
    fn liar_uses_minimum_or_zero() {
        assert_eq!(LiarBatch::new(&[]).fake_objective(), 0.0);
        let hist = history(5, |x| 3.0 + x);
        let min = hist.iter().map(|t| t.objective).fold(f64::INFINITY, f64::min);
        assert_eq!(LiarBatch::new(&hist).fake_objective(), min);
    }

    #[test]
    fn tell_appends_and_rejects_bad_trials() {
        let mut o = opt(SurrogateKind::Rf, AcquisitionKind::Pi, 0);
        let mut hist = Vec::new();
        let g = o.genome().id();
        let trial = |obj: f64, it: usize| Trial {
            point: Point(vec![0.5]),
            objective: obj,
            iteration: it,
            genome: g,
            source: TrialSource::Initial,
        };
        o.tell(&mut hist, trial(1.0, 1)).unwrap();
        o.tell(&mut hist, trial(2.0, 2)).unwrap();
        assert_eq!(hist.len(), 2);
        assert!(o.tell(&mut hist, trial(f64::NAN, 3)).is_err());
        assert!(o.tell(&mut hist, trial(1.0, 1)).is_err());
        assert!(o.tell(&mut hist, trial(1.0, 0)).is_err());
        assert_eq!(hist.len(), 2);
    }

    #[test]
    fn hedge_gain_changes_only_for_chosen_kind() {
        let mut hist = history(12, |x| 2.0 + x);
        let mut o = opt(SurrogateKind::Gp, AcquisitionKind::GpHedge, 3);
        let s = o.ask(&hist);
        let chosen = s.acquisition.unwrap();
        let mu = s.prediction.unwrap().mean;
        o.tell(
            &mut hist,
            Trial { point: s.point, objective: 2.5, iteration: 13, genome: s.genome, source: s.source },
        )
        .unwrap();
        let gains = o.hedge().unwrap().gains;
        for (i, k) in AcquisitionKind::HEDGED.iter().enumerate() {
            if *k == chosen {
                assert_eq!(gains[i], -mu);
            } else {
                assert_eq!(gains[i], 0.0);
            }
        }
    }
}
