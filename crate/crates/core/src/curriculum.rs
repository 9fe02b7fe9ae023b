//! Reverse curriculum: grow start states outwards from the goal with random
//! action rollouts, train on them, and keep the ones of intermediate difficulty.

use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvState, GoalEnv};
use crate::error::{Error, Result};
use crate::policy::GaussianPolicy;
use crate::rng::{stream, Component, RngStream};
use crate::rollout::{SuccessMap, ValueBaseline};
use crate::trpo::{train_pol, InnerDiagnostics, TrainStreams, TrpoConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub n_new: usize,
    pub n_old: usize,
    /// Pool size `M` accumulated by [`sample_nearby`] before subsampling.
    pub pool_size: usize,
    /// Brownian rollout horizon `T_B`.
    pub brownian_horizon: usize,
    /// Per-axis standard deviation of the random actions.
    pub brownian_std: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub iterations: usize,
    pub min_visits: usize,
}

impl CurriculumConfig {
    pub fn desk() -> Self {
        Self {
            n_new: 60,
            n_old: 30,
            pool_size: 2000,
            ..Self::paper()
        }
    }

    pub fn paper() -> Self {
        Self {
            n_new: 200,
            n_old: 100,
            pool_size: 10_000,
            brownian_horizon: 50,
            brownian_std: 1.0,
            r_min: 0.1,
            r_max: 0.9,
            iterations: 100,
            min_visits: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.r_min && self.r_min < self.r_max && self.r_max <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= r_min < r_max <= 1, got r_min={} r_max={}",
                self.r_min, self.r_max
            )));
        }
        if self.n_new == 0 || self.pool_size == 0 || self.brownian_horizon == 0 {
            return Err(Error::Config("n_new, pool_size and brownian_horizon must be positive".into()));
        }
        if !(self.brownian_std >= 0.0 && self.brownian_std.is_finite()) {
            return Err(Error::Config("brownian_std must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

/// One random-action rollout inside [`sample_nearby`]: it started from pool
/// entry `origin` and its visited states occupy `first..first + actions.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianRollout {
    pub origin: usize,
    pub first: usize,
    pub actions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearbyTrace {
    /// Seeds followed by every visited state, velocities zeroed.
    pub pool: Vec<EnvState>,
    pub rollouts: Vec<BrownianRollout>,
    /// Pool indices of the returned subsample.
    pub chosen: Vec<usize>,
}

impl NearbyTrace {
    pub fn selected(&self) -> Vec<EnvState> {
        self.chosen.iter().map(|&i| self.pool[i]).collect()
    }
}

/// Draws `n` indices out of `len`, without replacement when `n <= len`.
pub fn subsample_indices(len: usize, n: usize, rng: &mut RngStream) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    if n <= len {
        index::sample(rng, len, n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..len)).collect()
    }
}

pub fn sample_nearby<E: GoalEnv>(
    env: &E,
    starts: &[EnvState],
    n_new: usize,
    std: f64,
    horizon: usize,
    pool_size: usize,
    rng: &mut RngStream,
) -> Result<Vec<EnvState>> {
    Ok(sample_nearby_traced(env, starts, n_new, std, horizon, pool_size, rng)?.selected())
}

/// [`sample_nearby`] that also returns how every pool state was produced.
pub fn sample_nearby_traced<E: GoalEnv>(
    env: &E,
    starts: &[EnvState],
    n_new: usize,
    std: f64,
    horizon: usize,
    pool_size: usize,
    rng: &mut RngStream,
) -> Result<NearbyTrace> {
    if starts.is_empty() {
        return Err(Error::Config("sample_nearby needs at least one seed state".into()));
    }
    if let Some(bad) = starts.iter().find(|s| !env.is_feasible(s)) {
        return Err(Error::InfeasibleState {
            x: bad.pos[0],
            y: bad.pos[1],
        });
    }
    let act_dim = env.act_dim();
    let mut pool: Vec<EnvState> = starts.iter().map(EnvState::at_rest_copy).collect();
    let mut rollouts = Vec::new();
    while pool.len() < pool_size {
        let origin = rng.random_range(0..pool.len());
        let mut state = pool[origin];
        let mut actions = Vec::with_capacity(horizon);
        let first = pool.len();
        for _ in 0..horizon {
            let a: Vec<f64> = (0..act_dim).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
            state = env.transition(&state, &a)?;
            pool.push(state.at_rest_copy());
            actions.push(a);
        }
        rollouts.push(BrownianRollout { origin, first, actions });
    }
    let chosen = subsample_indices(pool.len(), n_new, rng);
    Ok(NearbyTrace { pool, rollouts, chosen })
}

pub fn is_good(estimate: f64, r_min: f64, r_max: f64) -> bool {
    r_min < estimate && estimate < r_max
}

/// Keeps well-visited starts with `r_min < estimate < r_max`, and every start
/// visited fewer than `min_visits` times.
pub fn select(starts: &[EnvState], rews: &SuccessMap, r_min: f64, r_max: f64, min_visits: usize) -> Vec<EnvState> {
    starts
        .iter()
        .enumerate()
        .filter(|(i, _)| match rews.get(i) {
            Some(e) if e.visits >= min_visits => is_good(e.fraction(), r_min, r_max),
            _ => true,
        })
        .map(|(_, s)| *s)
        .collect()
}

/// Share of well-visited starts that are good; `None` when none is well visited.
pub fn good_starts_fraction(rews: &SuccessMap, r_min: f64, r_max: f64, min_visits: usize) -> Option<f64> {
    let visited: Vec<f64> = rews
        .values()
        .filter(|e| e.visits >= min_visits)
        .map(|e| e.fraction())
        .collect();
    if visited.is_empty() {
        return None;
    }
    let good = visited.iter().filter(|&&f| is_good(f, r_min, r_max)).count();
    Some(good as f64 / visited.len() as f64)
}

/// Append-only store of past good starts, seeded with the goal state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    states: Vec<EnvState>,
}

impl ReplayBuffer {
    pub fn new(goal: EnvState) -> Self {
        Self { states: vec![goal] }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[EnvState] {
        &self.states
    }

    pub fn extend(&mut self, states: &[EnvState]) {
        self.states.extend_from_slice(states);
    }

    pub fn contains(&self, state: &EnvState) -> bool {
        self.states.contains(state)
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<EnvState> {
        subsample_indices(self.states.len(), n, rng)
            .into_iter()
            .map(|i| self.states[i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartEntry {
    pub state: EnvState,
    pub estimate: Option<f64>,
    pub visits: usize,
}

/// The starts of one iteration with their success estimates.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StartBuffer {
    pub entries: Vec<StartEntry>,
}

impl StartBuffer {
    pub fn from_rews(starts: &[EnvState], rews: &SuccessMap) -> Self {
        let entries = starts
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let e = rews.get(&i);
                StartEntry {
                    state: *s,
                    estimate: e.map(|e| e.fraction()),
                    visits: e.map_or(0, |e| e.visits),
                }
            })
            .collect();
        Self { entries }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,vx,vy,estimate,visits")?;
        for e in &self.entries {
            let est = e.estimate.map(|v| format!("{v:?}")).unwrap_or_default();
            let s = &e.state;
            writeln!(
                out,
                "{:?},{:?},{:?},{:?},{est},{}",
                s.pos[0], s.pos[1], s.vel[0], s.vel[1], e.visits
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let err = || Error::Format(format!("start buffer line {}: {line:?}", i + 1));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(err());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err());
            entries.push(StartEntry {
                state: EnvState {
                    pos: [num(cols[0])?, num(cols[1])?],
                    vel: [num(cols[2])?, num(cols[3])?],
                },
                estimate: if cols[4].is_empty() { None } else { Some(num(cols[4])?) },
                visits: cols[5].parse().map_err(|_| err())?,
            });
        }
        Ok(Self { entries })
    }
}

/// Start states handed to one `train_pol` call.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub starts: Vec<EnvState>,
    /// Environment steps spent choosing them (oracle evaluation only).
    pub extra_timesteps: usize,
}

/// Strategy that picks the start distribution of every outer iteration.
pub trait StartProposer<E: GoalEnv> {
    fn algorithm(&self) -> &'static str;

    fn propose(&mut self, env: &E, policy: &GaussianPolicy, rng: &mut RngStream) -> Result<Proposal>;

    /// Called with the success estimates `train_pol` produced for the proposal.
    fn feedback(&mut self, starts: &[EnvState], rews: &SuccessMap, rng: &mut RngStream) -> Result<()>;

    fn replay_len(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectRule {
    /// Keep only good starts.
    Filter,
    /// Keep every trained-on start.
    Identity,
}

/// Brownian expansion from the previous iteration's kept starts plus replay.
#[derive(Debug, Clone)]
pub struct ReverseCurriculum {
    pub config: CurriculumConfig,
    pub rule: SelectRule,
    seeds: Vec<EnvState>,
    replay: ReplayBuffer,
    proposed_new: usize,
}

impl ReverseCurriculum {
    pub fn new(goal: EnvState, config: CurriculumConfig, rule: SelectRule) -> Self {
        Self {
            config,
            rule,
            seeds: vec![goal],
            replay: ReplayBuffer::new(goal),
            proposed_new: 0,
        }
    }

    pub fn seeds(&self) -> &[EnvState] {
        &self.seeds
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }
}

impl<E: GoalEnv> StartProposer<E> for ReverseCurriculum {
    fn algorithm(&self) -> &'static str {
        match self.rule {
            SelectRule::Filter => "revcur",
            SelectRule::Identity => "brownian-all",
        }
    }

    fn propose(&mut self, env: &E, _policy: &GaussianPolicy, rng: &mut RngStream) -> Result<Proposal> {
        let c = &self.config;
        let mut starts = sample_nearby(env, &self.seeds, c.n_new, c.brownian_std, c.brownian_horizon, c.pool_size, rng)?;
        self.proposed_new = starts.len();
        starts.extend(self.replay.sample(c.n_old, rng));
        Ok(Proposal {
            starts,
            extra_timesteps: 0,
        })
    }

    /// Without a well-visited good start, expansion continues from the
    /// mastered new starts as well; if nothing was kept or mastered the seeds stay.
    fn feedback(&mut self, starts: &[EnvState], rews: &SuccessMap, _rng: &mut RngStream) -> Result<()> {
        let c = &self.config;
        let kept = match self.rule {
            SelectRule::Filter => select(starts, rews, c.r_min, c.r_max, c.min_visits),
            SelectRule::Identity => starts.to_vec(),
        };
        self.replay.extend(&kept);
        let well_visited_good = rews
            .values()
            .any(|e| e.visits >= c.min_visits && is_good(e.fraction(), c.r_min, c.r_max));
        let mut seeds = kept;
        if self.rule == SelectRule::Filter && !well_visited_good {
            seeds.extend(
                starts
                    .iter()
                    .enumerate()
                    .take(self.proposed_new)
                    .filter(|(i, _)| rews.get(i).is_some_and(|e| e.visits >= c.min_visits && e.fraction() >= c.r_max))
                    .map(|(_, s)| *s),
            );
        }
        if !seeds.is_empty() {
            self.seeds = seeds;
        }
        Ok(())
    }

    fn replay_len(&self) -> Option<usize> {
        Some(self.replay.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationSummary {
    pub algorithm: &'static str,
    pub iteration: usize,
    pub train_timesteps: usize,
    pub oracle_timesteps: usize,
    pub good_starts_fraction: Option<f64>,
    pub num_starts: usize,
    pub replay_len: Option<usize>,
    pub diagnostics: Vec<InnerDiagnostics>,
    pub start_buffer: StartBuffer,
}

/// Observer called after every outer iteration.
pub trait IterationHook {
    fn after_iteration(&mut self, policy: &GaussianPolicy, summary: &IterationSummary) -> Result<()>;
}

impl IterationHook for () {
    fn after_iteration(&mut self, _: &GaussianPolicy, _: &IterationSummary) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&GaussianPolicy, &IterationSummary) -> Result<()>> IterationHook for F {
    fn after_iteration(&mut self, policy: &GaussianPolicy, summary: &IterationSummary) -> Result<()> {
        self(policy, summary)
    }
}

/// Shared training loop for every start-distribution strategy.
#[allow(clippy::too_many_arguments)]
pub fn run_training<E, P, H>(
    env: &E,
    policy: &mut GaussianPolicy,
    baseline: &mut ValueBaseline,
    proposer: &mut P,
    curriculum: &CurriculumConfig,
    trpo: &TrpoConfig,
    seed: u64,
    hook: &mut H,
) -> Result<Vec<IterationSummary>>
where
    E: GoalEnv,
    P: StartProposer<E>,
    H: IterationHook,
{
    curriculum.validate()?;
    trpo.validate()?;
    let mut rollout_rng = stream(seed, Component::Rollout, 0);
    let mut baseline_rng = stream(seed, Component::BaselineInit, 1);
    let mut proposal_rng = stream(seed, Component::Curriculum, 0);
    let mut train_timesteps = 0;
    let mut oracle_timesteps = 0;
    let mut summaries = Vec::with_capacity(curriculum.iterations);
    for iteration in 1..=curriculum.iterations {
        let proposal = proposer.propose(env, policy, &mut proposal_rng)?;
        oracle_timesteps += proposal.extra_timesteps;
        let out = train_pol(
            env,
            policy,
            baseline,
            &proposal.starts,
            trpo,
            TrainStreams {
                rollout: &mut rollout_rng,
                baseline: &mut baseline_rng,
            },
        )?;
        train_timesteps += out.timesteps;
        let fraction = good_starts_fraction(&out.rews, curriculum.r_min, curriculum.r_max, curriculum.min_visits);
        proposer.feedback(&proposal.starts, &out.rews, &mut proposal_rng)?;
        let summary = IterationSummary {
            algorithm: proposer.algorithm(),
            iteration,
            train_timesteps,
            oracle_timesteps,
            good_starts_fraction: fraction,
            num_starts: proposal.starts.len(),
            replay_len: proposer.replay_len(),
            diagnostics: out.diagnostics,
            start_buffer: StartBuffer::from_rews(&proposal.starts, &out.rews),
        };
        hook.after_iteration(policy, &summary)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

/// Algorithm 1 with the good-start filter.
#[allow(clippy::too_many_arguments)]
pub fn reverse_curriculum_train<E: GoalEnv, H: IterationHook>(
    env: &E,
    policy: &mut GaussianPolicy,
    baseline: &mut ValueBaseline,
    goal: EnvState,
    curriculum: &CurriculumConfig,
    trpo: &TrpoConfig,
    seed: u64,
    hook: &mut H,
) -> Result<Vec<IterationSummary>> {
    let mut proposer = ReverseCurriculum::new(goal, curriculum.clone(), SelectRule::Filter);
    run_training(env, policy, baseline, &mut proposer, curriculum, trpo, seed, hook)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{MazeSpec, PointMassMaze};
    use crate::rollout::SuccessEstimate;

    fn est(successes: usize, visits: usize) -> SuccessEstimate {
        SuccessEstimate { successes, visits }
    }

    fn states(n: usize) -> Vec<EnvState> {
        (0..n).map(|i| EnvState::at_rest(i as f64, 0.0)).collect()
    }

    #[test]
    fn select_examples() {
        let s = states(3);
        let rews: SuccessMap = [(0, est(5, 10)), (1, est(19, 20)), (2, est(0, 10))].into_iter().collect();
        assert_eq!(select(&s, &rews, 0.1, 0.9, 2), vec![s[0]]);

        let rews: SuccessMap = [(0, est(1, 10)), (1, est(9, 10)), (2, est(2, 10))].into_iter().collect();
        assert_eq!(select(&s, &rews, 0.1, 0.9, 2), vec![s[2]]);

        let rews: SuccessMap = [(0, est(0, 1)), (2, est(0, 4))].into_iter().collect();
        assert_eq!(select(&s, &rews, 0.1, 0.9, 2), vec![s[0], s[1]]);
    }

    #[test]
    fn select_is_idempotent_on_its_output() {
        let s = states(6);
        let rews: SuccessMap = [(0, est(1, 2)), (1, est(2, 2)), (2, est(0, 1)), (4, est(3, 4)), (5, est(0, 3))]
            .into_iter()
            .collect();
        let kept = select(&s, &rews, 0.1, 0.9, 2);
        // Re-key the estimates by position in the kept list.
        let rekeyed: SuccessMap = kept
            .iter()
            .enumerate()
            .filter_map(|(j, k)| {
                let i = s.iter().position(|x| x == k).unwrap();
                rews.get(&i).map(|e| (j, *e))
            })
            .collect();
        assert_eq!(select(&kept, &rekeyed, 0.1, 0.9, 2), kept);
        assert!(kept.iter().all(|k| s.contains(k)));
    }

    #[test]
    fn good_fraction_examples() {
        let all_half: SuccessMap = (0..4).map(|i| (i, est(1, 2))).collect();
        assert_eq!(good_starts_fraction(&all_half, 0.1, 0.9, 2), Some(1.0));
        let all_one: SuccessMap = (0..4).map(|i| (i, est(3, 3))).collect();
        assert_eq!(good_starts_fraction(&all_one, 0.1, 0.9, 2), Some(0.0));
        let mixed: SuccessMap = (0..4).map(|i| (i, if i < 2 { est(1, 2) } else { est(2, 2) })).collect();
        assert_eq!(good_starts_fraction(&mixed, 0.1, 0.9, 2), Some(0.5));
        let sparse: SuccessMap = (0..4).map(|i| (i, est(0, 1))).collect();
        assert_eq!(good_starts_fraction(&sparse, 0.1, 0.9, 2), None);
    }

    #[test]
    fn replay_sampling() {
        let mut rb = ReplayBuffer::new(EnvState::at_rest(4.0, 4.0));
        let mut rng = stream(0, Component::Curriculum, 0);
        assert_eq!(rb.sample(3, &mut rng).len(), 3);
        rb.extend(&states(10));
        let drawn = rb.sample(11, &mut rng);
        let mut sorted: Vec<_> = drawn.iter().map(|s| (s.pos[0].to_bits(), s.pos[1].to_bits())).collect();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 11, "without replacement");
        assert!(rb.contains(&EnvState::at_rest(4.0, 4.0)));
    }

    #[test]
    fn zero_noise_stays_on_seeds() {
        let env = PointMassMaze::new(MazeSpec::default_maze());
        let seeds = vec![env.goal_state(), EnvState::at_rest(0.0, 0.0)];
        let mut rng = stream(1, Component::Curriculum, 0);
        let out = sample_nearby(&env, &seeds, 30, 0.0, 10, 200, &mut rng).unwrap();
        assert_eq!(out.len(), 30);
        assert!(out.iter().all(|s| seeds.contains(s)));
    }

    #[test]
    fn trace_re_simulates_exactly() {
        let env = PointMassMaze::new(MazeSpec::default_maze());
        let mut rng = stream(2, Component::Curriculum, 0);
        let trace = sample_nearby_traced(&env, &[env.goal_state()], 20, 1.0, 50, 500, &mut rng).unwrap();
        assert!(trace.pool.len() >= 500);
        for r in &trace.rollouts {
            let mut s = trace.pool[r.origin];
            assert!(r.origin < r.first);
            for (k, a) in r.actions.iter().enumerate() {
                s = env.transition(&s, a).unwrap();
                assert_eq!(s.at_rest_copy(), trace.pool[r.first + k]);
            }
        }
        assert!(trace.selected().iter().all(|s| env.is_feasible(s)));
    }

    #[test]
    fn start_buffer_csv_round_trip() {
        let s = states(3);
        let rews: SuccessMap = [(0, est(1, 3)), (2, est(0, 1))].into_iter().collect();
        let buf = StartBuffer::from_rews(&s, &rews);
        assert_eq!(buf.entries[1].estimate, None);
        let mut out = Vec::new();
        buf.write_csv(&mut out).unwrap();
        assert_eq!(StartBuffer::read_csv(out.as_slice()).unwrap(), buf);
    }

    #[test]
    fn config_validation() {
        assert!(CurriculumConfig::desk().validate().is_ok());
        let bad = CurriculumConfig {
            r_min: 0.9,
            r_max: 0.1,
            ..CurriculumConfig::desk()
        };
        assert!(bad.validate().is_err());
    }
}
