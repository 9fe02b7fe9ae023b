//! Comparison methods: uniform start sampling, Brownian expansion without the
//! good-start filter, oracle rejection sampling, and the synthetic self-play demo.

mod oracle;
mod selfplay;
mod uniform;

pub use oracle::{oracle_rejection_train, OracleProposer};
pub use selfplay::{alice_reward, asym_selfplay_demo, write_stop_states_csv, AlicePolicy, SelfPlayConfig, SelfPlayRecord};
pub use uniform::{uniform_sampling_train, UniformProposer};

use crate::curriculum::{run_training, CurriculumConfig, IterationHook, IterationSummary, ReverseCurriculum, SelectRule};
use crate::envs::{EnvState, GoalEnv};
use crate::error::Result;
use crate::policy::GaussianPolicy;
use crate::rollout::ValueBaseline;
use crate::trpo::TrpoConfig;

/// The curriculum loop with `select` replaced by the identity.
#[allow(clippy::too_many_arguments)]
pub fn brownian_all_starts_train<E: GoalEnv, H: IterationHook>(
    env: &E,
    policy: &mut GaussianPolicy,
    baseline: &mut ValueBaseline,
    goal: EnvState,
    curriculum: &CurriculumConfig,
    trpo: &TrpoConfig,
    seed: u64,
    hook: &mut H,
) -> Result<Vec<IterationSummary>> {
    let mut proposer = ReverseCurriculum::new(goal, curriculum.clone(), SelectRule::Identity);
    run_training(env, policy, baseline, &mut proposer, curriculum, trpo, seed, hook)
}
