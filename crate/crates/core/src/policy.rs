//! The round loop shared by every policy.
//!
//! The loop owns the environment lanes, so a policy can only influence which
//! item is chosen, never which user arrives, which items are offered or which
//! noise is drawn.

use crate::environment::{EnvStreams, Round, World};
use crate::error::Result;
use crate::trace::{Trace, TraceRecord};

pub trait Policy {
    fn name(&self) -> &str;

    /// Called before the round is played; phase-based policies run
    /// detection here.
    fn begin_round(&mut self, _t: u64) -> Result<()> {
        Ok(())
    }

    fn choose(&mut self, world: &World, round: &Round) -> Result<usize>;

    fn observe(&mut self, world: &World, round: &Round, chosen: usize, reward: f64) -> Result<()>;

    fn comm_count(&self) -> u64 {
        0
    }

    fn num_clusters(&self) -> usize;

    /// Whether the user grouping the policy shares statistics over equals
    /// the ground-truth clustering.
    fn partition_correct(&self, world: &World) -> bool;
}

/// What happened in one round, handed to observers.
#[derive(Debug, Clone)]
pub struct RoundReport<'a> {
    pub round: &'a Round,
    pub chosen: usize,
    pub reward: f64,
    pub record: TraceRecord,
}

/// Plays `horizon` rounds with `k` items each and returns the trace.
pub fn simulate<P: Policy + ?Sized>(
    policy: &mut P,
    world: &World,
    horizon: u64,
    k: usize,
    seed: u64,
    mut observer: impl FnMut(&P, &RoundReport<'_>) -> Result<()>,
) -> Result<Trace> {
    let mut streams = EnvStreams::new(seed);
    let mut trace = Trace::new(policy.name(), seed);
    let mut cumulative = 0.0;
    for t in 1..=horizon {
        policy.begin_round(t)?;
        let round = world.sample_round(t, k, &mut streams);
        let chosen = policy.choose(world, &round)?;
        let reward = world.sample_reward(round.user, &round.items[chosen], &mut streams.noise);
        let regret = world.instant_regret(round.user, &round.items, chosen)?;
        policy.observe(world, &round, chosen, reward)?;
        cumulative += regret;
        let record = TraceRecord {
            t,
            instant_regret: regret,
            cumulative_regret: cumulative,
            comm_count_cumulative: policy.comm_count(),
            num_global_clusters: policy.num_clusters(),
            partition_correct: policy.partition_correct(world),
        };
        observer(policy, &RoundReport { round: &round, chosen, reward, record: record.clone() })?;
        trace.rows.push(record);
    }
    Ok(trace)
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax_first(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}
