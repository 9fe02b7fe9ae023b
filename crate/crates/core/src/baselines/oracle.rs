use log::warn;

use crate::curriculum::{is_good, run_training, CurriculumConfig, IterationHook, IterationSummary, Proposal, StartProposer};
use crate::envs::{EnvState, GoalEnv};
use crate::error::Result;
use crate::policy::GaussianPolicy;
use crate::rng::RngStream;
use crate::rollout::{rollout, SuccessMap, ValueBaseline};
use crate::trpo::TrpoConfig;

/// Rejection sampling of good starts with rollouts of the current policy.
#[derive(Debug, Clone)]
pub struct OracleProposer {
    pub target: usize,
    pub eval_rollouts: usize,
    pub max_draws: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl OracleProposer {
    pub fn from_config(curriculum: &CurriculumConfig, eval_rollouts: usize, max_draws: usize) -> Self {
        Self {
            target: curriculum.n_new + curriculum.n_old,
            eval_rollouts,
            max_draws,
            r_min: curriculum.r_min,
            r_max: curriculum.r_max,
        }
    }

    /// Empirical success fraction of `start` and the steps it cost.
    pub fn estimate<E: GoalEnv>(
        &self,
        env: &mut E,
        policy: &GaussianPolicy,
        start: &EnvState,
        rng: &mut RngStream,
    ) -> Result<(f64, usize)> {
        let mut successes = 0;
        let mut steps = 0;
        for _ in 0..self.eval_rollouts {
            let path = rollout(env, policy, 0, start, rng)?;
            steps += path.len();
            successes += path.success as usize;
        }
        Ok((successes as f64 / self.eval_rollouts as f64, steps))
    }
}

impl<E: GoalEnv> StartProposer<E> for OracleProposer {
    fn algorithm(&self) -> &'static str {
        "oracle"
    }

    fn propose(&mut self, env: &E, policy: &GaussianPolicy, rng: &mut RngStream) -> Result<Proposal> {
        let mut env = env.clone();
        let mut accepted = Vec::with_capacity(self.target);
        let mut drawn = Vec::new();
        let mut steps = 0;
        while accepted.len() < self.target && drawn.len() < self.max_draws {
            let candidate = env.sample_uniform_feasible(1, rng)[0];
            let (fraction, used) = self.estimate(&mut env, policy, &candidate, rng)?;
            steps += used;
            drawn.push(candidate);
            if is_good(fraction, self.r_min, self.r_max) {
                accepted.push(candidate);
            }
        }
        if accepted.len() < self.target {
            warn!(
                "oracle accepted {} of {} starts within {} draws",
                accepted.len(),
                self.target,
                self.max_draws
            );
        }
        let starts = if accepted.is_empty() { drawn } else { accepted };
        Ok(Proposal {
            starts,
            extra_timesteps: steps,
        })
    }

    fn feedback(&mut self, _: &[EnvState], _: &SuccessMap, _: &mut RngStream) -> Result<()> {
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
pub fn oracle_rejection_train<E: GoalEnv, H: IterationHook>(
    env: &E,
    policy: &mut GaussianPolicy,
    baseline: &mut ValueBaseline,
    curriculum: &CurriculumConfig,
    trpo: &TrpoConfig,
    eval_rollouts: usize,
    max_draws: usize,
    seed: u64,
    hook: &mut H,
) -> Result<Vec<IterationSummary>> {
    let mut proposer = OracleProposer::from_config(curriculum, eval_rollouts, max_draws);
    run_training(env, policy, baseline, &mut proposer, curriculum, trpo, seed, hook)
}
