//! Meta-layer: scores base optimizers with an adjusted reward and picks the
//! genome(s) for the next round, either by weight-proportional sampling or
//! by a small genetic algorithm.

mod run;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionKind;
use crate::error::{Error, Result};
use crate::optimizer::{GenomeId, Trial, TrialSource};
use crate::rng::RandomSource;
use crate::surrogate::SurrogateKind;

pub use run::{run_adaptive, run_base, BestRecord, BestTrial, EvaluationRecord, Objective, RunSettings};

/// Below this the history std is treated as zero and z as 0.
pub const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Minimum weight.
    pub epsilon: f64,
    /// Round penalty slope numerator; the per-round penalty is `c / n_rounds`.
    pub c: f64,
    /// Extra penalty applied to parallel fitness.
    pub b: f64,
    pub n_rounds: usize,
    pub n_suggest: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { epsilon: 0.01, c: 1.96, b: 0.1, n_rounds: 100, n_suggest: 1 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::config(format!("c must be >= 0, got {}", self.c)));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(Error::config(format!("b must be >= 0, got {}", self.b)));
        }
        if self.n_rounds == 0 {
            return Err(Error::config("n_rounds must be >= 1"));
        }
        if self.n_suggest == 0 {
            return Err(Error::config("n_suggest must be >= 1"));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.c / self.n_rounds as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub n_parents: usize,
    pub retain_prob: f64,
    pub mutate_prob: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig { n_parents: 4, retain_prob: 0.5, mutate_prob: 0.1 }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_parents < 2 {
            return Err(Error::config(format!("n_parents must be >= 2, got {}", self.n_parents)));
        }
        for (name, p) in [("retain_prob", self.retain_prob), ("mutate_prob", self.mutate_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Observed objectives (larger is better) and each genome's best reward.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardLedger {
    pub all_objectives: Vec<f64>,
    pub per_genome_best: BTreeMap<GenomeId, f64>,
    pub per_genome_count: BTreeMap<GenomeId, usize>,
}

impl RewardLedger {
    pub fn new() -> Self {
        RewardLedger::default()
    }

    pub fn push_objective(&mut self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::validation(format!("ledger objectives must be finite, got {value}")));
        }
        self.all_objectives.push(value);
        Ok(())
    }

    /// Credits `reward` to `genome`, keeping only its historical maximum.
    pub fn attribute(&mut self, genome: GenomeId, reward: f64) {
        let best = self.per_genome_best.entry(genome).or_insert(reward);
        *best = best.max(reward);
        *self.per_genome_count.entry(genome).or_insert(0) += 1;
    }

    /// Population mean and std of the recorded objectives.
    pub fn moments(&self) -> (f64, f64) {
        let n = self.all_objectives.len();
        if n == 0 {
            return (0.0, 0.0);
        }
        let mean = self.all_objectives.iter().sum::<f64>() / n as f64;
        let var = self.all_objectives.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    }

    fn z_score(&self, f: f64) -> f64 {
        let (mean, std) = self.moments();
        if std < DEGENERATE_STD {
            0.0
        } else {
            (f - mean) / std
        }
    }
}

/// `max(epsilon, z - alpha * n)`, z taken against the ledger's objectives.
pub fn adjusted_reward(f_new: f64, ledger: &RewardLedger, n: usize, cfg: &RewardConfig) -> f64 {
    (ledger.z_score(f_new) - cfg.alpha() * n as f64).max(cfg.epsilon)
}

/// [`adjusted_reward`] with the additional `-b` penalty.
pub fn adjusted_fitness_parallel(f_j: f64, ledger: &RewardLedger, n: usize, cfg: &RewardConfig) -> f64 {
    (ledger.z_score(f_j) - cfg.alpha() * n as f64 - cfg.b).max(cfg.epsilon)
}

/// Appends one round's trials, then scores each model-proposed trial and
/// credits its genome. Returns the score per trial (`None` if not credited).
pub fn update_ledger_round(
    ledger: &mut RewardLedger,
    trials: &[&Trial],
    n: usize,
    cfg: &RewardConfig,
) -> Result<Vec<Option<f64>>> {
    for t in trials {
        ledger.push_objective(-t.objective)?;
    }
    Ok(trials
        .iter()
        .map(|t| {
            (t.source == TrialSource::Model).then(|| {
                let f = -t.objective;
                let reward = if cfg.n_suggest > 1 {
                    adjusted_fitness_parallel(f, ledger, n, cfg)
                } else {
                    adjusted_reward(f, ledger, n, cfg)
                };
                ledger.attribute(t.genome, reward);
                reward
            })
        })
        .collect())
}

pub fn update_ledger(ledger: &mut RewardLedger, trial: &Trial, n: usize, cfg: &RewardConfig) -> Result<Option<f64>> {
    Ok(update_ledger_round(ledger, &[trial], n, cfg)?[0])
}

/// Selection probabilities over `pool`. Unscored genomes receive the mean of
/// the attained bests (epsilon when there are none); every weight is floored
/// at epsilon before normalizing.
pub fn selection_weights(ledger: &RewardLedger, pool: &[GenomeId], cfg: &RewardConfig) -> Vec<f64> {
    let attained: Vec<f64> = pool.iter().filter_map(|g| ledger.per_genome_best.get(g).copied()).collect();
    let fill = if attained.is_empty() {
        cfg.epsilon
    } else {
        attained.iter().sum::<f64>() / attained.len() as f64
    };
    let raw: Vec<f64> = pool
        .iter()
        .map(|g| ledger.per_genome_best.get(g).copied().unwrap_or(fill).max(cfg.epsilon))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Index drawn with probability proportional to `weights`.
pub fn sample_index(weights: &[f64], rng: &mut RandomSource) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

fn check_pool(pool: &[GenomeId]) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::config("genome pool is empty"));
    }
    let distinct: BTreeSet<_> = pool.iter().collect();
    if distinct.len() != pool.len() {
        return Err(Error::config("genome pool contains duplicates"));
    }
    Ok(())
}

pub fn select_one(ledger: &RewardLedger, pool: &[GenomeId], cfg: &RewardConfig, rng: &mut RandomSource) -> Result<GenomeId> {
    check_pool(pool)?;
    Ok(pool[sample_index(&selection_weights(ledger, pool, cfg), rng)])
}

fn mutate(child: GenomeId, rng: &mut RandomSource) -> GenomeId {
    if rng.random_bool(0.5) {
        let others: Vec<_> = SurrogateKind::ALL.into_iter().filter(|&k| k != child.surrogate).collect();
        GenomeId::new(others[rng.random_range(0..others.len())], child.acquisition)
    } else {
        let others: Vec<_> = AcquisitionKind::ALL.into_iter().filter(|&k| k != child.acquisition).collect();
        GenomeId::new(child.surrogate, others[rng.random_range(0..others.len())])
    }
}

/// Genomes for the next parallel round: parents by weight, then retention,
/// crossover, mutation and duplicate replacement. Returns the first
/// `cfg.n_suggest` children in generation order.
pub fn ga_select(
    ledger: &RewardLedger,
    pool: &[GenomeId],
    ga: &GaConfig,
    cfg: &RewardConfig,
    rng: &mut RandomSource,
) -> Result<Vec<GenomeId>> {
    ga.validate()?;
    check_pool(pool)?;
    if ga.n_parents > pool.len() {
        return Err(Error::config(format!(
            "n_parents ({}) exceeds the pool size ({})",
            ga.n_parents,
            pool.len()
        )));
    }
    if cfg.n_suggest > pool.len() {
        return Err(Error::config(format!(
            "n_suggest ({}) exceeds the pool size ({}); children must be distinct",
            cfg.n_suggest,
            pool.len()
        )));
    }

    let mut weights = selection_weights(ledger, pool, cfg);
    let mut parents = Vec::with_capacity(ga.n_parents);
    for _ in 0..ga.n_parents {
        let i = sample_index(&weights, rng);
        parents.push(pool[i]);
        weights[i] = 0.0;
    }

    let n_children = ga.n_parents.max(cfg.n_suggest);
    let mut children = Vec::with_capacity(n_children);
    for slot in 0..n_children {
        let mut child = if rng.random_bool(ga.retain_prob) {
            parents[slot % parents.len()]
        } else {
            let a = rng.random_range(0..parents.len());
            let mut b = rng.random_range(0..parents.len() - 1);
            if b >= a {
                b += 1;
            }
            let surrogate = if rng.random_bool(0.5) { parents[a] } else { parents[b] }.surrogate;
            let acquisition = if rng.random_bool(0.5) { parents[a] } else { parents[b] }.acquisition;
            GenomeId::new(surrogate, acquisition)
        };
        if rng.random_bool(ga.mutate_prob) {
            child = mutate(child, rng);
        }
        children.push(child);
    }

    for i in 0..children.len() {
        let earlier = &children[..i];
        if earlier.contains(&children[i]) || !pool.contains(&children[i]) {
            let free: Vec<GenomeId> = pool.iter().copied().filter(|g| !earlier.contains(g)).collect();
            children[i] = free[rng.random_range(0..free.len())];
        }
    }
    children.truncate(cfg.n_suggest);
    Ok(children)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::space::Point;
    use proptest::prelude::*;

    fn ledger_of(values: &[f64]) -> RewardLedger {
        RewardLedger { all_objectives: values.to_vec(), ..Default::default() }
    }

    fn cfg(epsilon: f64, c: f64, b: f64, n_rounds: usize) -> RewardConfig {
        RewardConfig { epsilon, c, b, n_rounds, n_suggest: 1 }
    }

    fn g(s: SurrogateKind, a: AcquisitionKind) -> GenomeId {
        GenomeId::new(s, a)
    }

    fn model_trial(genome: GenomeId, objective: f64) -> Trial {
        Trial { point: Point(vec![0.0]), objective, iteration: 1, genome, source: TrialSource::Model }
    }

    #[test]
    fn reward_uses_population_std() {
        let r = adjusted_reward(0.9, &ledger_of(&[0.5, 0.7, 0.9]), 3, &cfg(0.01, 1.96, 0.0, 100));
        assert!((r - 1.165_944_871_391_588_8).abs() < 1e-12, "{r}");
    }

    #[test]
    fn parallel_fitness_example() {
        let r = adjusted_fitness_parallel(1.0, &ledger_of(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]), 2, &cfg(0.01, 0.0, 0.2, 50));
        assert!((r - 0.8).abs() < 1e-12, "{r}");
    }

    #[test]
    fn degenerate_history_hits_floor() {
        let c = cfg(0.01, 1.96, 0.0, 100);
        assert_eq!(adjusted_reward(5.0, &ledger_of(&[2.0, 2.0, 2.0]), 4, &c), 0.01);
        assert_eq!(adjusted_reward(5.0, &ledger_of(&[]), 1, &c), 0.01);
        assert_eq!(adjusted_reward(100.0, &ledger_of(&[0.0, 1.0]), 100, &cfg(0.01, 500.0, 0.0, 100)), 0.01);
        assert_eq!(adjusted_fitness_parallel(1.0, &ledger_of(&[0.0, 1.0]), 1, &cfg(0.01, 0.0, 1e9, 10)), 0.01);
    }

    #[test]
    fn parallel_reduces_to_single_when_b_is_zero() {
        let l = ledger_of(&[0.1, 0.4, -0.3, 0.8]);
        let c = cfg(0.01, 1.96, 0.0, 20);
        assert_eq!(adjusted_fitness_parallel(0.5, &l, 3, &c), adjusted_reward(0.5, &l, 3, &c));
    }

    #[test]
    fn ledger_keeps_max_and_counts() {
        let c = cfg(0.01, 0.0, 0.0, 10);
        let a = g(SurrogateKind::Gp, AcquisitionKind::Ei);
        let mut l = ledger_of(&[0.0, 1.0]);
        let first = update_ledger(&mut l, &model_trial(a, -2.0), 1, &c).unwrap().unwrap();
        assert_eq!(l.per_genome_best[&a], first);
        update_ledger(&mut l, &model_trial(a, 5.0), 2, &c).unwrap();
        assert_eq!(l.per_genome_best[&a], first);
        assert_eq!(l.per_genome_count[&a], 2);
        assert_eq!(l.all_objectives, vec![0.0, 1.0, 2.0, -5.0]);

        let mut init = model_trial(a, 1.0);
        init.source = TrialSource::Initial;
        assert_eq!(update_ledger(&mut l, &init, 3, &c).unwrap(), None);
        assert_eq!(l.per_genome_count[&a], 2);
        assert_eq!(l.all_objectives.len(), 5);
    }

    #[test]
    fn weights_examples() {
        let c = cfg(0.01, 1.96, 0.0, 100);
        let pool = [
            g(SurrogateKind::Gp, AcquisitionKind::Lcb),
            g(SurrogateKind::Rf, AcquisitionKind::Ei),
            g(SurrogateKind::Et, AcquisitionKind::Pi),
        ];
        let w = selection_weights(&RewardLedger::new(), &pool, &c);
        assert!(w.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));

        let mut l = RewardLedger::new();
        l.attribute(pool[0], 0.9);
        l.attribute(pool[1], 0.1);
        let w = selection_weights(&l, &pool, &c);
        for (p, e) in w.iter().zip([0.6, 0.066_666_666_666_666_67, 0.333_333_333_333_333_3]) {
            assert!((p - e).abs() < 1e-12, "{w:?}");
        }
    }

    #[test]
    fn select_one_concentration() {
        let c = cfg(0.01, 1.96, 0.0, 100);
        let pool = [g(SurrogateKind::Gp, AcquisitionKind::Lcb), g(SurrogateKind::Rf, AcquisitionKind::Ei)];
        let mut l = RewardLedger::new();
        l.attribute(pool[0], 0.99);
        l.attribute(pool[1], 0.01);
        let mut rng = rng::stream(3, rng::SELECTION_STREAM);
        let hits = (0..10_000).filter(|_| select_one(&l, &pool, &c, &mut rng).unwrap() == pool[0]).count();
        assert!(hits >= 9_700, "{hits}");
        assert_eq!(select_one(&l, &pool[1..], &c, &mut rng).unwrap(), pool[1]);
        assert!(select_one(&l, &[], &c, &mut rng).is_err());
    }

    #[test]
    fn restricted_pool_replaces_foreign_children() {
        let a = g(SurrogateKind::Gp, AcquisitionKind::Lcb);
        let b = g(SurrogateKind::Rf, AcquisitionKind::Ei);
        let pool = [a, b];
        let ga = GaConfig { n_parents: 2, retain_prob: 0.0, mutate_prob: 0.5 };
        let c = RewardConfig { n_suggest: 2, ..Default::default() };
        let mut rng = rng::stream(0, 7);
        for _ in 0..400 {
            let out = ga_select(&RewardLedger::new(), &pool, &ga, &c, &mut rng).unwrap();
            assert!(out == [a, b] || out == [b, a], "{out:?}");
        }
    }

    #[test]
    fn crossover_children_mix_parent_genes() {
        let p1 = g(SurrogateKind::Gp, AcquisitionKind::Lcb);
        let p2 = g(SurrogateKind::Rf, AcquisitionKind::Ei);
        let universe = GenomeId::universe();
        let mut l = RewardLedger::new();
        for genome in &universe {
            l.attribute(*genome, if *genome == p1 || *genome == p2 { 1e6 } else { 1e-9 });
        }
        let ga = GaConfig { n_parents: 2, retain_prob: 0.0, mutate_prob: 0.0 };
        let c = RewardConfig { n_suggest: 1, epsilon: 1e-12, ..Default::default() };
        let allowed = [p1, p2, g(SurrogateKind::Gp, AcquisitionKind::Ei), g(SurrogateKind::Rf, AcquisitionKind::Lcb)];
        let mut rng = rng::stream(5, 7);
        let mut seen = BTreeSet::new();
        for _ in 0..400 {
            let out = ga_select(&l, &universe, &ga, &c, &mut rng).unwrap();
            assert!(allowed.contains(&out[0]), "{}", out[0]);
            seen.insert(out[0]);
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn ga_rejects_bad_configs() {
        let c = RewardConfig { n_suggest: 3, ..Default::default() };
        let pool = &GenomeId::universe()[..3];
        let mut rng = rng::stream(0, 0);
        let ga = GaConfig::default();
        assert!(ga_select(&RewardLedger::new(), pool, &ga, &c, &mut rng).is_err());
        let ga = GaConfig { n_parents: 1, ..Default::default() };
        assert!(ga_select(&RewardLedger::new(), &GenomeId::universe(), &ga, &c, &mut rng).is_err());
        let ga = GaConfig { retain_prob: 1.5, ..Default::default() };
        assert!(ga_select(&RewardLedger::new(), &GenomeId::universe(), &ga, &c, &mut rng).is_err());
    }

    fn arb_ledger() -> impl Strategy<Value = RewardLedger> {
        (prop::collection::vec(-5.0f64..5.0, 0..30), prop::collection::vec(prop::option::of(0.01f64..4.0), 16)).prop_map(
            |(objs, bests)| {
                let mut l = ledger_of(&objs);
                for (genome, best) in GenomeId::universe().into_iter().zip(bests) {
                    if let Some(b) = best {
                        l.attribute(genome, b);
                    }
                }
                l
            },
        )
    }

    proptest! {
        #[test]
        fn reward_floor_and_monotonicity(
            hist in prop::collection::vec(-10.0f64..10.0, 0..20),
            f1 in -20.0f64..20.0, df in 0.0f64..5.0, n in 1usize..100, dn in 0usize..50,
        ) {
            let c = cfg(0.01, 1.96, 0.0, 100);
            let l = ledger_of(&hist);
            let r = adjusted_reward(f1, &l, n, &c);
            prop_assert!(r >= c.epsilon);
            prop_assert!(adjusted_reward(f1 + df, &l, n, &c) >= r);
            prop_assert!(adjusted_reward(f1, &l, n + dn, &c) <= r);
        }

        #[test]
        fn weights_are_a_probability_vector(l in arb_ledger(), k in 1usize..=16) {
            let c = RewardConfig::default();
            let pool = &GenomeId::universe()[..k];
            let w = selection_weights(&l, pool, &c);
            prop_assert!(w.iter().all(|&p| p >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..k {
                for j in 0..k {
                    let fi = l.per_genome_best.get(&pool[i]).copied();
                    let fj = l.per_genome_best.get(&pool[j]).copied();
                    if let (Some(a), Some(b)) = (fi, fj) {
                        if a.max(c.epsilon) > b.max(c.epsilon) {
                            prop_assert!(w[i] > w[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn ga_output_is_distinct_and_in_pool(
            l in arb_ledger(), seed in any::<u64>(), ns in 1usize..=6, ng in 2usize..=8,
            retain in 0.0f64..=1.0, mutate in 0.0f64..=1.0,
        ) {
            let universe = GenomeId::universe();
            let c = RewardConfig { n_suggest: ns, ..Default::default() };
            let ga = GaConfig { n_parents: ng, retain_prob: retain, mutate_prob: mutate };
            let out = ga_select(&l, &universe, &ga, &c, &mut rng::stream(seed, 1)).unwrap();
            prop_assert_eq!(out.len(), ns);
            let set: BTreeSet<_> = out.iter().collect();
            prop_assert_eq!(set.len(), ns);
            prop_assert!(out.iter().all(|g| universe.contains(g)));
        }
    }
}
