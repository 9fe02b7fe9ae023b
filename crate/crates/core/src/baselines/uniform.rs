use crate::curriculum::{run_training, CurriculumConfig, IterationHook, IterationSummary, Proposal, StartProposer};
use crate::envs::{EnvState, GoalEnv};
use crate::error::Result;
use crate::policy::GaussianPolicy;
use crate::rng::RngStream;
use crate::rollout::{SuccessMap, ValueBaseline};
use crate::trpo::TrpoConfig;

/// Fresh uniformly distributed feasible starts every iteration.
#[derive(Debug, Clone)]
pub struct UniformProposer {
    pub count: usize,
}

impl<E: GoalEnv> StartProposer<E> for UniformProposer {
    fn algorithm(&self) -> &'static str {
        "uniform"
    }

    fn propose(&mut self, env: &E, _policy: &GaussianPolicy, rng: &mut RngStream) -> Result<Proposal> {
        Ok(Proposal {
            starts: env.sample_uniform_feasible(self.count, rng),
            extra_timesteps: 0,
        })
    }

    fn feedback(&mut self, _: &[EnvState], _: &SuccessMap, _: &mut RngStream) -> Result<()> {
        Ok(())
    }
}

/// Plain TRPO on the uniform start distribution. Uses `n_new + n_old` starts
/// per iteration so every method trains on equally many distinct states.
pub fn uniform_sampling_train<E: GoalEnv, H: IterationHook>(
    env: &E,
    policy: &mut GaussianPolicy,
    baseline: &mut ValueBaseline,
    curriculum: &CurriculumConfig,
    trpo: &TrpoConfig,
    seed: u64,
    hook: &mut H,
) -> Result<Vec<IterationSummary>> {
    let mut proposer = UniformProposer {
        count: curriculum.n_new + curriculum.n_old,
    };
    run_training(env, policy, baseline, &mut proposer, curriculum, trpo, seed, hook)
}
