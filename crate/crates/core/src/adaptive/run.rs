use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ga_select, select_one, update_ledger_round, GaConfig, RewardConfig, RewardLedger};
use crate::acquisition::AcquisitionParams;
use crate::error::{Error, Result};
use crate::optimizer::{BaseOptimizer, Genome, GenomeId, LiarBatch, OptimizerConfig, Suggestion, Trial, TrialSource};
use crate::rng;
use crate::space::{ParamSpace, Point};

/// A black-box function returning a raw score. Errors are tolerated per trial.
pub trait Objective: Sync {
    fn evaluate(&self, point: &Point) -> std::result::Result<f64, String>;
}

impl<F> Objective for F
where
    F: Fn(&Point) -> std::result::Result<f64, String> + Sync,
{
    fn evaluate(&self, point: &Point) -> std::result::Result<f64, String> {
        self(point)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub reward: RewardConfig,
    pub ga: GaConfig,
    pub params: AcquisitionParams,
    pub optimizer: OptimizerConfig,
    /// Raw scores are maximized; they are negated before reaching the optimizers.
    pub maximize: bool,
}

impl RunSettings {
    pub fn to_minimization(&self, raw: f64) -> f64 {
        if self.maximize {
            -raw
        } else {
            raw
        }
    }
}

/// One objective evaluation as it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub round: usize,
    pub slot: usize,
    pub genome: GenomeId,
    pub source: TrialSource,
    pub point: Point,
    pub raw_score: Option<f64>,
    /// Value told to the optimizer (minimization sign). For failures this is
    /// the worst objective seen so far, or absent when nothing was seen.
    pub objective: Option<f64>,
    pub adjusted_reward: Option<f64>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl EvaluationRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTrial {
    pub point: Point,
    pub objective: f64,
    pub raw_score: f64,
}

/// Best successful evaluation plus the full trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub best: Option<BestTrial>,
    pub trials: Vec<EvaluationRecord>,
}

impl BestRecord {
    pub fn from_trials(trials: Vec<EvaluationRecord>) -> Self {
        let mut best: Option<BestTrial> = None;
        for t in trials.iter().filter(|t| !t.failed()) {
            let (Some(objective), Some(raw_score)) = (t.objective, t.raw_score) else { continue };
            if best.as_ref().is_none_or(|b| objective < b.objective) {
                best = Some(BestTrial { point: t.point.clone(), objective, raw_score });
            }
        }
        BestRecord { best, trials }
    }
}

struct Outcome {
    raw: std::result::Result<f64, String>,
    seconds: f64,
}

fn evaluate_one<O: Objective + ?Sized>(objective: &O, point: &Point) -> Outcome {
    let start = Instant::now();
    let raw = match objective.evaluate(point) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(format!("objective returned non-finite value {v}")),
        Err(e) => Err(e),
    };
    Outcome { raw, seconds: start.elapsed().as_secs_f64() }
}

fn evaluate_all<O: Objective + ?Sized>(objective: &O, suggestions: &[Suggestion]) -> Vec<Outcome> {
    if suggestions.len() == 1 {
        return vec![evaluate_one(objective, &suggestions[0].point)];
    }
    thread::scope(|scope| {
        let handles: Vec<_> = suggestions
            .iter()
            .map(|s| scope.spawn(move || evaluate_one(objective, &s.point)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join().unwrap_or_else(|_| Outcome { raw: Err("objective panicked".into()), seconds: 0.0 })
            })
            .collect()
    })
}

/// Asks `owners[slot]` for each slot over a shared constant-liar scratch
/// history, evaluates, and tells results in slot order. Returns the round's
/// records and, per record, the index of its told trial in `history` when
/// the evaluation succeeded.
fn play_round<O: Objective + ?Sized>(
    objective: &O,
    settings: &RunSettings,
    opts: &mut [BaseOptimizer],
    owners: &[usize],
    history: &mut Vec<Trial>,
    round: usize,
) -> Result<Vec<(EvaluationRecord, Option<usize>)>> {
    let mut batch = LiarBatch::new(history);
    let suggestions: Vec<Suggestion> = owners.iter().map(|&o| batch.ask(&mut opts[o])).collect();
    let outcomes = evaluate_all(objective, &suggestions);

    let mut out = Vec::with_capacity(owners.len());
    for (slot, ((s, outcome), &owner)) in suggestions.into_iter().zip(outcomes).zip(owners).enumerate() {
        let (raw_score, value, error) = match outcome.raw {
            Ok(raw) => (Some(raw), Some(settings.to_minimization(raw)), None),
            Err(e) => {
                let worst = history.iter().map(|t| t.objective).fold(f64::NEG_INFINITY, f64::max);
                (None, worst.is_finite().then_some(worst), Some(e))
            }
        };
        if let Some(v) = value {
            let trial = Trial { point: s.point.clone(), objective: v, iteration: round, genome: s.genome, source: s.source };
            opts[owner].tell(history, trial)?;
        }
        let told = (error.is_none()).then(|| history.len() - 1);
        let record = EvaluationRecord {
            round,
            slot,
            genome: s.genome,
            source: s.source,
            point: s.point,
            raw_score,
            objective: value,
            adjusted_reward: None,
            error,
            wall_time_s: outcome.seconds,
        };
        out.push((record, told));
    }
    for o in opts.iter_mut() {
        o.discard_pending();
    }
    Ok(out)
}

fn check_settings(space: &ParamSpace, settings: &RunSettings) -> Result<()> {
    settings.reward.validate()?;
    settings.params.validate()?;
    if space.is_empty() {
        return Err(Error::config("search space has no dimensions"));
    }
    Ok(())
}

/// Runs one base genome alone for the same budget as the meta-loop:
/// `n_rounds` rounds of `n_suggest` constant-liar points.
pub fn run_base<O: Objective + ?Sized>(
    objective: &O,
    space: &ParamSpace,
    genome: GenomeId,
    settings: &RunSettings,
    seed: u64,
) -> Result<BestRecord> {
    check_settings(space, settings)?;
    let genome = Genome::from_id(genome, settings.params);
    let mut opts = [BaseOptimizer::seeded(genome, space.clone(), settings.optimizer.clone(), seed)?];
    let owners = vec![0; settings.reward.n_suggest];
    let mut history = Vec::new();
    let mut trials = Vec::new();
    for round in 1..=settings.reward.n_rounds {
        let played = play_round(objective, settings, &mut opts, &owners, &mut history, round)?;
        trials.extend(played.into_iter().map(|(r, _)| r));
    }
    Ok(BestRecord::from_trials(trials))
}

/// The adaptive meta-loop over `pool`. With one suggestion per round the
/// genome is sampled by weight; otherwise the GA picks distinct genomes. A
/// singleton pool owns every slot of each round.
pub fn run_adaptive<O: Objective + ?Sized>(
    objective: &O,
    space: &ParamSpace,
    pool: &[GenomeId],
    settings: &RunSettings,
    seed: u64,
) -> Result<BestRecord> {
    check_settings(space, settings)?;
    super::check_pool(pool)?;
    let cfg = &settings.reward;
    if cfg.n_suggest > 1 && pool.len() > 1 {
        settings.ga.validate()?;
        if settings.ga.n_parents > pool.len() || cfg.n_suggest > pool.len() {
            return Err(Error::config(format!(
                "pool of {} genomes cannot supply n_parents = {} and n_suggest = {}",
                pool.len(),
                settings.ga.n_parents,
                cfg.n_suggest
            )));
        }
    }

    let mut opts = pool
        .iter()
        .map(|&g| {
            BaseOptimizer::seeded(Genome::from_id(g, settings.params), space.clone(), settings.optimizer.clone(), seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut selection_rng = rng::stream(seed, rng::SELECTION_STREAM);
    let mut ledger = RewardLedger::new();
    let mut history = Vec::new();
    let mut trials = Vec::new();

    for round in 1..=cfg.n_rounds {
        let chosen: Vec<GenomeId> = if pool.len() == 1 {
            vec![pool[0]; cfg.n_suggest]
        } else if cfg.n_suggest == 1 {
            vec![select_one(&ledger, pool, cfg, &mut selection_rng)?]
        } else {
            ga_select(&ledger, pool, &settings.ga, cfg, &mut selection_rng)?
        };
        let owners: Vec<usize> = chosen.iter().map(|g| pool.iter().position(|p| p == g).unwrap()).collect();
        let mut played = play_round(objective, settings, &mut opts, &owners, &mut history, round)?;

        let told: Vec<usize> = played.iter().filter_map(|(_, t)| *t).collect();
        let scored: Vec<&Trial> = told.iter().map(|&i| &history[i]).collect();
        let rewards = update_ledger_round(&mut ledger, &scored, round, cfg)?;
        let mut rewards = rewards.into_iter();
        for (record, t) in played.iter_mut() {
            if t.is_some() {
                record.adjusted_reward = rewards.next().flatten();
            }
        }
        trials.extend(played.into_iter().map(|(r, _)| r));
    }
    Ok(BestRecord::from_trials(trials))
}
