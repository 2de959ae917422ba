//! Repeated-seed comparison of the adaptive optimizer against base genomes.

use adaptive_smbo::adaptive::{run_adaptive, run_base, BestRecord};
use adaptive_smbo::optimizer::{GenomeId, TrialSource};
use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Only, RunConfig};
use crate::objective::request_json;
use crate::summary::{summarize, SummaryRow};

pub const ADAPTIVE_LABEL: &str = "adaptive";

/// One line of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLogRecord {
    pub run_id: String,
    pub optimizer: String,
    pub seed: u64,
    pub round: usize,
    pub slot: usize,
    pub genome: GenomeId,
    pub source: TrialSource,
    pub params: serde_json::Value,
    pub raw_score: Option<f64>,
    pub objective: Option<f64>,
    pub adjusted_reward: Option<f64>,
    pub error: Option<String>,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contender {
    Adaptive,
    Base(GenomeId),
}

impl Contender {
    pub fn label(&self) -> String {
        match self {
            Contender::Adaptive => ADAPTIVE_LABEL.to_string(),
            Contender::Base(g) => g.to_string(),
        }
    }
}

/// Result of one (contender, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub contender: Contender,
    pub seed: u64,
    pub record: BestRecord,
}

impl RunResult {
    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.contender.label(), self.seed)
    }

    /// Raw score of the best successful trial.
    pub fn best_score(&self) -> Option<f64> {
        self.record.best.as_ref().map(|b| b.raw_score)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

pub fn contenders(cfg: &RunConfig) -> Vec<Contender> {
    let mut out = Vec::new();
    if cfg.only != Only::Base {
        out.push(Contender::Adaptive);
    }
    if cfg.only != Only::Adaptive {
        out.extend(cfg.pool.iter().map(|&g| Contender::Base(g)));
    }
    out
}

/// Runs every contender on every seed. Jobs may run in parallel; results
/// come back in contender-major, seed-minor order.
pub fn run_experiment(cfg: &RunConfig) -> anyhow::Result<ExperimentResult> {
    cfg.validate()?;
    let objective = cfg.bind_objective()?;
    let space = cfg.param_space()?;
    let settings = cfg.settings();
    let jobs: Vec<(Contender, u64)> =
        contenders(cfg).into_iter().flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();

    let runs = jobs
        .into_par_iter()
        .map(|(contender, seed)| {
            let record = match contender {
                Contender::Adaptive => run_adaptive(&objective, &space, &cfg.pool, &settings, seed),
                Contender::Base(g) => run_base(&objective, &space, g, &settings, seed),
            }
            .with_context(|| format!("{} on seed {seed}", contender.label()))?;
            Ok(RunResult { contender, seed, record })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let summary = summarize(runs.iter().map(|r| (r.contender.label(), r.best_score())), cfg.maximize);
    Ok(ExperimentResult { runs, summary })
}

pub fn trial_log(cfg: &RunConfig, result: &ExperimentResult) -> anyhow::Result<Vec<TrialLogRecord>> {
    let space = cfg.param_space()?;
    let mut out = Vec::new();
    for run in &result.runs {
        let run_id = run.run_id();
        let optimizer = run.contender.label();
        for t in &run.record.trials {
            out.push(TrialLogRecord {
                run_id: run_id.clone(),
                optimizer: optimizer.clone(),
                seed: run.seed,
                round: t.round,
                slot: t.slot,
                genome: t.genome,
                source: t.source,
                params: request_json(&space, &t.point),
                raw_score: t.raw_score,
                objective: t.objective,
                adjusted_reward: t.adjusted_reward,
                error: t.error.clone(),
                wall_time_s: cfg.output.record_wall_time.then_some(t.wall_time_s),
            });
        }
    }
    Ok(out)
}
