use std::path::Path;

use revcur::envs::{EnvState, GoalEnv, MazeSpec, PointMassMaze};
use revcur::evalkit::{evaluate_policy, run_experiment, Algorithm, ExperimentConfig, Preset};
use revcur::numerics::MlpArch;
use revcur::policy::GaussianPolicy;
use revcur::rng::{stream, Component};
use revcur::rollout::rollout;

fn tiny_config(algorithm: Algorithm, iterations: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(Preset::Desk);
    c.algorithm = algorithm;
    c.iterations = iterations;
    c.batch_timesteps = 1500;
    c.inner_iters = 2;
    c.n_new = 20;
    c.n_old = 10;
    c.pool_size = 300;
    c.policy_hidden = vec![16, 16];
    c.baseline_hidden = vec![16];
    c.baseline_steps = 20;
    c.test_size = 60;
    c.eval_subsample = 20;
    c.oracle_eval_rollouts = 2;
    c.oracle_max_draws = 30;
    c
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn same_seed_gives_byte_identical_records() {
    for algorithm in [Algorithm::Revcur, Algorithm::Uniform, Algorithm::Oracle] {
        let config = tiny_config(algorithm, 2);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run_experiment(&config, a.path()).unwrap();
        let rb = run_experiment(&config, b.path()).unwrap();
        assert_eq!(ra.records.len(), 2);
        assert_eq!(read(&ra.dir, "records.ndjson"), read(&rb.dir, "records.ndjson"));
        assert_eq!(read(&ra.dir, "policy.ckpt"), read(&rb.dir, "policy.ckpt"));
        assert_eq!(read(&ra.dir, "run.json"), read(&rb.dir, "run.json"));
    }
}

#[test]
fn different_seeds_give_different_records() {
    let mut config = tiny_config(Algorithm::Revcur, 1);
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&config, dir.path()).unwrap();
    config.seed = 1;
    let b = run_experiment(&config, dir.path()).unwrap();
    assert_ne!(read(&a.dir, "records.ndjson"), read(&b.dir, "records.ndjson"));
}

#[test]
fn zero_iterations_leave_the_initial_policy() {
    let config = tiny_config(Algorithm::Revcur, 0);
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config, dir.path()).unwrap();
    assert!(out.records.is_empty());
    assert!(read(&out.dir, "records.ndjson").is_empty());
    let saved = GaussianPolicy::read_checkpoint(read(&out.dir, "policy.ckpt").as_slice()).unwrap();
    let env = PointMassMaze::new(MazeSpec::default_maze());
    let init = GaussianPolicy::new(env.obs_dim(), &config.policy_hidden, env.act_dim(), &mut stream(config.seed, Component::PolicyInit, 0)).unwrap();
    assert_eq!(saved, init);
}

#[test]
fn oracle_records_count_evaluation_timesteps() {
    let config = tiny_config(Algorithm::Oracle, 2);
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config, dir.path()).unwrap();
    for r in &out.records {
        assert!(r.oracle_timesteps > 0);
        assert_eq!(r.total_timesteps, r.train_timesteps + r.oracle_timesteps);
    }
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"iterations\": 3,\n  \"r_min\": 0.95\n}\n").unwrap();
    let err = ExperimentConfig::load(&path, None).unwrap_err().to_string();
    assert!(err.contains(":3:"), "{err}");
}

fn policy_pointing(act: [f64; 2]) -> GaussianPolicy {
    let arch = MlpArch::with_hidden(4, &[], 2).unwrap();
    // Zero weights, bias = act, minimum log-std.
    let mut params = vec![0.0; arch.num_params() + 2];
    params[8] = act[0];
    params[9] = act[1];
    params[10] = -5.0;
    params[11] = -5.0;
    GaussianPolicy::from_params(arch, revcur::numerics::FlatParams::new(params).unwrap()).unwrap()
}

#[test]
fn goal_only_test_set_is_always_solved() {
    let env = PointMassMaze::new(MazeSpec::default_maze());
    let policy = policy_pointing([1.0, 0.0]);
    let eval = evaluate_policy(&env, &policy, &[env.goal_state()], 3, &mut stream(0, Component::Evaluation, 0), false).unwrap();
    assert_eq!(eval.mean, 1.0);
}

#[test]
fn policy_stuck_against_a_wall_never_succeeds() {
    let env = PointMassMaze::new(MazeSpec::default_maze());
    assert_eq!(env.obs_dim(), 4);
    let policy = policy_pointing([0.0, -1.0]);
    let far = [EnvState::at_rest(0.0, 0.0), EnvState::at_rest(3.0, 0.0)];
    let eval = evaluate_policy(&env, &policy, &far, 2, &mut stream(0, Component::Evaluation, 0), true).unwrap();
    assert_eq!(eval.per_state, vec![0.0, 0.0]);
}

#[test]
fn evaluation_matches_a_recount_and_leaves_the_policy_alone() {
    let env = PointMassMaze::new(MazeSpec::default_maze());
    let policy = GaussianPolicy::new(4, &[8], 2, &mut stream(3, Component::PolicyInit, 0)).unwrap();
    let before = policy.clone();
    let goal = env.goal_state().pos;
    let states: Vec<EnvState> = (0..10).map(|i| EnvState::at_rest(goal[0] - 0.05 * i as f64, goal[1])).collect();
    let eval = evaluate_policy(&env, &policy, &states, 4, &mut stream(5, Component::Evaluation, 0), false).unwrap();
    assert_eq!(policy, before);

    let mut e = env.clone();
    let mut rng = stream(5, Component::Evaluation, 0);
    let mut per_state = Vec::new();
    for (i, s) in states.iter().enumerate() {
        let wins: usize = (0..4).map(|_| rollout(&mut e, &policy, i, s, &mut rng).unwrap().success as usize).sum();
        per_state.push(wins as f64 / 4.0);
    }
    assert_eq!(eval.per_state, per_state);
    assert!((eval.mean - per_state.iter().sum::<f64>() / 10.0).abs() < 1e-12);
}

#[test]
fn selfplay_demo_writes_its_artifacts() {
    let mut config = tiny_config(Algorithm::SelfplayDemo, 1);
    config.selfplay_iterations = 4;
    config.selfplay_expand_at = 2;
    config.selfplay_episodes = 20;
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config, dir.path()).unwrap();
    for name in ["selfplay.ndjson", "stop_states.csv", "alice.csv", "run.json"] {
        assert!(out.dir.join(name).exists(), "{name}");
    }
    let lines = String::from_utf8(read(&out.dir, "selfplay.ndjson")).unwrap();
    assert_eq!(lines.lines().count(), 4);
}
