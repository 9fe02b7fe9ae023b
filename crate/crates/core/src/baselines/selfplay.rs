//! Asymmetric self-play against a synthetic Bob.
//!
//! Alice walks away from the goal and decides when to stop; she is paid
//! `max(0, t_B - t_A)`. Bob reaches the goal in closed-form time from inside
//! his radius and takes the maximal time from outside it. Once Bob's radius is
//! enlarged past everything Alice can reach, every episode pays zero and her
//! policy gradient vanishes.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::SyntheticBobWorld;
use crate::error::{Error, Result};
use crate::numerics::MlpArch;
use crate::rng::RngStream;

pub fn alice_reward(t_b: f64, t_a: f64) -> f64 {
    (t_b - t_a).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfPlayConfig {
    pub iterations: usize,
    pub episodes_per_iter: usize,
    /// Alice's step length is at most `alice_speed * alice_dt`.
    pub alice_speed: f64,
    pub alice_dt: f64,
    pub alice_max_steps: usize,
    pub bob_speed: f64,
    pub initial_bob_radius: f64,
    pub expanded_bob_radius: f64,
    /// First iteration (1-based) that uses the expanded radius.
    pub expand_at: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub initial_stop_logit: f64,
    pub half_width: f64,
}

impl Default for SelfPlayConfig {
    fn default() -> Self {
        Self {
            iterations: 32,
            episodes_per_iter: 200,
            alice_speed: 1.0,
            alice_dt: 0.1,
            alice_max_steps: 40,
            bob_speed: 2.0,
            initial_bob_radius: 0.5,
            expanded_bob_radius: 4.0,
            expand_at: 11,
            learning_rate: 0.3,
            hidden: vec![32, 32],
            initial_stop_logit: -3.0,
            half_width: 5.0,
        }
    }
}

impl SelfPlayConfig {
    pub fn bob_radius(&self, iteration: usize) -> f64 {
        if iteration >= self.expand_at {
            self.expanded_bob_radius
        } else {
            self.initial_bob_radius
        }
    }

    /// Bob's time cap equals Alice's longest possible episode.
    pub fn t_max(&self) -> f64 {
        self.alice_max_steps as f64 * self.alice_dt
    }

    pub fn world(&self, iteration: usize) -> Result<SyntheticBobWorld> {
        let w = self.half_width;
        SyntheticBobWorld::new([0.0, 0.0], self.bob_radius(iteration), self.bob_speed, [-w, w, -w, w], self.t_max())
    }
}

/// Gaussian movement head plus a Bernoulli stop head sharing one MLP.
/// Parameters are the MLP's followed by two movement log-stds.
#[derive(Debug, Clone, PartialEq)]
pub struct AlicePolicy {
    arch: MlpArch,
    params: Vec<f64>,
}

struct Decision {
    stop: bool,
    step: [f64; 2],
}

impl AlicePolicy {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], initial_stop_logit: f64, rng: &mut R) -> Result<Self> {
        let arch = MlpArch::with_hidden(3, hidden, 3)?;
        let mut params = arch.init_params_zero_output(rng);
        // Output bias layout: the last three MLP parameters.
        let n = arch.num_params();
        params[n - 1] = initial_stop_logit;
        params.extend([0.0, 0.0]);
        Ok(Self { arch, params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn observe(world: &SyntheticBobWorld, pos: [f64; 2], t: usize, max_steps: usize) -> [f64; 3] {
        let w = 0.5 * (world.bounds[1] - world.bounds[0]);
        [
            (pos[0] - world.goal[0]) / w,
            (pos[1] - world.goal[1]) / w,
            t as f64 / max_steps as f64,
        ]
    }

    /// Samples one decision and accumulates `d log p(decision) / d params * weight` into `grad`.
    fn decide(&self, obs: &[f64; 3], rng: &mut RngStream, grad: Option<(&mut [f64], f64)>) -> Result<Decision> {
        let n = self.arch.num_params();
        let out = self.arch.forward(&self.params[..n], obs)?;
        let log_std = &self.params[n..];
        let p_stop = 1.0 / (1.0 + (-out[2]).exp());
        let stop = rng.random::<f64>() < p_stop;
        let mut step = [0.0; 2];
        let mut d_out = [0.0; 3];
        let mut d_ls = [0.0; 2];
        d_out[2] = if stop { 1.0 - p_stop } else { -p_stop };
        if !stop {
            for k in 0..2 {
                let z: f64 = rng.sample(StandardNormal);
                let sigma = log_std[k].exp();
                step[k] = out[k] + sigma * z;
                d_out[k] = z / sigma;
                d_ls[k] = z * z - 1.0;
            }
        }
        if let Some((g, weight)) = grad {
            let (gp, _) = self.arch.backward(&self.params[..n], obs, &d_out)?;
            for (gi, v) in g[..n].iter_mut().zip(&gp) {
                *gi += weight * v;
            }
            for k in 0..2 {
                g[n + k] += weight * d_ls[k];
            }
        }
        Ok(Decision { stop, step })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Episode {
    stop: [f64; 2],
    steps: usize,
    decisions: Vec<([f64; 3], u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfPlayRecord {
    pub iteration: usize,
    pub bob_radius: f64,
    pub mean_reward: f64,
    pub max_stop_distance: f64,
    pub mean_stop_distance: f64,
    pub stop_states: Vec<[f64; 2]>,
}

fn run_episode(
    policy: &AlicePolicy,
    world: &SyntheticBobWorld,
    config: &SelfPlayConfig,
    rng: &mut RngStream,
) -> Result<Episode> {
    let mut pos = world.goal;
    let mut decisions = Vec::new();
    let max_step = config.alice_speed * config.alice_dt;
    for t in 0..config.alice_max_steps {
        let obs = AlicePolicy::observe(world, pos, t, config.alice_max_steps);
        // Record the RNG seed of each decision so gradients can be replayed.
        let seed: u64 = rng.random();
        let mut local = <RngStream as rand::SeedableRng>::seed_from_u64(seed);
        let d = policy.decide(&obs, &mut local, None)?;
        decisions.push((obs, seed));
        if d.stop {
            return Ok(Episode {
                stop: pos,
                steps: t,
                decisions,
            });
        }
        let norm = d.step[0].hypot(d.step[1]);
        let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
        pos = world.clamp_to_bounds([
            pos[0] + d.step[0] * scale * max_step,
            pos[1] + d.step[1] * scale * max_step,
        ]);
    }
    Ok(Episode {
        stop: pos,
        steps: config.alice_max_steps,
        decisions,
    })
}

/// Trains Alice with REINFORCE (plain gradient ascent, mean-reward baseline)
/// while Bob's radius follows the configured schedule. Episodes use common
/// random numbers across iterations.
pub fn asym_selfplay_demo(
    config: &SelfPlayConfig,
    alice: &mut AlicePolicy,
    rng: &mut RngStream,
) -> Result<Vec<SelfPlayRecord>> {
    if config.episodes_per_iter == 0 || config.alice_max_steps == 0 {
        return Err(Error::Config("self-play needs episodes and steps".into()));
    }
    // Episode k of every iteration replays the same random stream, so stop
    // states move only when Alice's parameters do.
    let base: u64 = rng.random();
    let mut records = Vec::with_capacity(config.iterations);
    for iteration in 1..=config.iterations {
        let world = config.world(iteration)?;
        let episodes: Vec<Episode> = (0..config.episodes_per_iter)
            .map(|k| {
                let mut episode_rng = <RngStream as rand::SeedableRng>::seed_from_u64(base);
                episode_rng.set_stream(k as u64);
                run_episode(alice, &world, config, &mut episode_rng)
            })
            .collect::<Result<_>>()?;
        let rewards: Vec<f64> = episodes
            .iter()
            .map(|e| alice_reward(world.bob_time(e.stop), e.steps as f64 * config.alice_dt))
            .collect();
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let distances: Vec<f64> = episodes.iter().map(|e| world.distance_to_goal(e.stop)).collect();
        records.push(SelfPlayRecord {
            iteration,
            bob_radius: world.bob_radius,
            mean_reward: mean,
            max_stop_distance: distances.iter().copied().fold(0.0, f64::max),
            mean_stop_distance: distances.iter().sum::<f64>() / n,
            stop_states: episodes.iter().map(|e| e.stop).collect(),
        });

        let mut grad = vec![0.0; alice.params.len()];
        for (e, r) in episodes.iter().zip(&rewards) {
            let adv = r - mean;
            if adv == 0.0 {
                continue;
            }
            for (obs, seed) in &e.decisions {
                let mut local = <RngStream as rand::SeedableRng>::seed_from_u64(*seed);
                alice.decide(obs, &mut local, Some((&mut grad, adv / n)))?;
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("Alice policy gradient"));
        }
        let split = alice.arch.num_params();
        for (p, g) in alice.params.iter_mut().zip(&grad) {
            *p += config.learning_rate * g;
        }
        for ls in &mut alice.params[split..] {
            *ls = ls.clamp(crate::policy::LOG_STD_MIN, crate::policy::LOG_STD_MAX);
        }
    }
    Ok(records)
}

/// One CSV row per stop state: `iteration,bob_radius,x,y`.
pub fn write_stop_states_csv<W: Write>(records: &[SelfPlayRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,bob_radius,x,y")?;
    for r in records {
        for s in &r.stop_states {
            writeln!(out, "{},{:?},{:?},{:?}", r.iteration, r.bob_radius, s[0], s[1])?;
        }
    }
    Ok(())
}
