use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::record::{evaluate_policy, TrainRecord, SCHEMA_VERSION};
use super::testset::{generate_test_set, TestSet};
use crate::baselines::{asym_selfplay_demo, write_stop_states_csv, AlicePolicy, OracleProposer, UniformProposer};
use crate::curriculum::{run_training, IterationHook, IterationSummary, ReverseCurriculum, SelectRule};
use crate::envs::{GoalEnv, MazeSpec, PointMassMaze};
use crate::error::{Error, Result};
use crate::policy::GaussianPolicy;
use crate::rng::{stream, Component, RngStream};
use crate::rollout::ValueBaseline;

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub tag: String,
    pub algorithm: String,
    pub seed: u64,
    pub env: String,
    pub test_set_hash: Option<String>,
    pub iterations: usize,
    pub final_success: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub info: RunInfo,
    pub records: Vec<TrainRecord>,
    pub wall_clock_s: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_env(config: &ExperimentConfig) -> Result<PointMassMaze> {
    let env = PointMassMaze::new(MazeSpec::from_name_or_path(&config.env)?);
    Ok(match config.horizon {
        Some(h) => env.with_horizon(h),
        None => env,
    })
}

pub fn load_or_generate_test_set(config: &ExperimentConfig, env: &PointMassMaze) -> Result<TestSet> {
    match &config.test_set {
        Some(path) => TestSet::load(Path::new(path)),
        None => generate_test_set(
            env,
            env.spec().name(),
            config.test_mode,
            config.test_size,
            config.test_brownian_horizon,
            config.test_seed,
        ),
    }
}

struct Recorder<'a> {
    config: &'a ExperimentConfig,
    env: &'a PointMassMaze,
    test_set: &'a TestSet,
    eval_rng: RngStream,
    subsample_rng: RngStream,
    records: Vec<TrainRecord>,
    records_out: BufWriter<File>,
    records_path: PathBuf,
    diagnostics_out: BufWriter<File>,
    diagnostics_path: PathBuf,
    last_summary: Option<IterationSummary>,
    started: Instant,
    iteration_seconds: Vec<f64>,
}

impl IterationHook for Recorder<'_> {
    fn after_iteration(&mut self, policy: &GaussianPolicy, summary: &IterationSummary) -> Result<()> {
        let last = summary.iteration == self.config.iterations;
        let n = if last { self.test_set.len() } else { self.config.eval_subsample };
        let indices = self.test_set.subsample(n, &mut self.subsample_rng);
        let states: Vec<_> = indices.iter().map(|&i| self.test_set.states()[i]).collect();
        let eval = evaluate_policy(
            self.env,
            policy,
            &states,
            self.config.eval_traj_per_state,
            &mut self.eval_rng,
            self.config.eval_deterministic,
        )?;
        let elapsed = self.started.elapsed().as_secs_f64();
        self.iteration_seconds.push(elapsed);
        let record = TrainRecord {
            schema_version: SCHEMA_VERSION,
            algorithm: summary.algorithm.to_string(),
            seed: self.config.seed,
            iteration: summary.iteration,
            train_timesteps: summary.train_timesteps,
            oracle_timesteps: summary.oracle_timesteps,
            total_timesteps: summary.train_timesteps + summary.oracle_timesteps,
            test_success: eval.mean,
            per_state_success: eval.per_state,
            test_indices: indices,
            good_starts_fraction: summary.good_starts_fraction,
            wall_clock_s: self.config.record_wall_clock.then_some(elapsed),
        };
        record.write_line(&mut self.records_out)?;
        self.records_out
            .flush()
            .map_err(|e| Error::io(&self.records_path, e))?;
        for d in &summary.diagnostics {
            let mut line = serde_json::to_value(d)?;
            line["iteration"] = summary.iteration.into();
            serde_json::to_writer(&mut self.diagnostics_out, &line)?;
            self.diagnostics_out
                .write_all(b"\n")
                .map_err(|e| Error::io(&self.diagnostics_path, e))?;
        }
        self.diagnostics_out
            .flush()
            .map_err(|e| Error::io(&self.diagnostics_path, e))?;
        log::info!(
            "{} seed {} iteration {}: success {:.3} on {} states, {} timesteps",
            record.algorithm,
            record.seed,
            record.iteration,
            record.test_success,
            states.len(),
            record.total_timesteps
        );
        self.records.push(record);
        self.last_summary = Some(summary.clone());
        Ok(())
    }
}

/// Runs one configured experiment into `<out_root>/<tag>-seed<seed>/`.
///
/// Records are flushed every iteration, so a failed run keeps what it had.
pub fn run_experiment(config: &ExperimentConfig, out_root: &Path) -> Result<RunOutcome> {
    config.validate().map_err(|(k, m)| Error::Config(format!("{k}: {m}")))?;
    let dir = out_root.join(config.run_dir_name());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&dir.join("config.json"), config)?;
    let started = Instant::now();

    if config.algorithm == Algorithm::SelfplayDemo {
        return run_selfplay(config, dir, started);
    }

    let env = load_env(config)?;
    let test_set = load_or_generate_test_set(config, &env)?;
    let mut info = RunInfo {
        tag: config.tag.clone(),
        algorithm: config.algorithm.as_str().to_string(),
        seed: config.seed,
        env: env.spec().name().to_string(),
        test_set_hash: Some(test_set.hash().to_string()),
        iterations: config.iterations,
        final_success: None,
    };
    write_json(&dir.join("run.json"), &info)?;

    let mut policy_rng = stream(config.seed, Component::PolicyInit, 0);
    let mut policy = GaussianPolicy::new(env.obs_dim(), &config.policy_hidden, env.act_dim(), &mut policy_rng)?;
    let mut baseline_rng = stream(config.seed, Component::BaselineInit, 0);
    let mut baseline = ValueBaseline::new(
        env.obs_dim(),
        &config.baseline_hidden,
        config.baseline_lr,
        config.baseline_steps,
        config.baseline_minibatch,
        &mut baseline_rng,
    )?;

    let records_path = dir.join("records.ndjson");
    let diagnostics_path = dir.join("diagnostics.ndjson");
    let mut recorder = Recorder {
        config,
        env: &env,
        test_set: &test_set,
        eval_rng: stream(config.seed, Component::Evaluation, 0),
        subsample_rng: stream(config.seed, Component::EvalSubsample, 0),
        records: Vec::new(),
        records_out: create(&records_path)?,
        records_path,
        diagnostics_out: create(&diagnostics_path)?,
        diagnostics_path,
        last_summary: None,
        started,
        iteration_seconds: Vec::new(),
    };

    let curriculum = config.curriculum();
    let trpo = config.trpo();
    let goal = env.goal_state();
    let result = match config.algorithm {
        Algorithm::Revcur => {
            let mut p = ReverseCurriculum::new(goal, curriculum.clone(), SelectRule::Filter);
            run_training(&env, &mut policy, &mut baseline, &mut p, &curriculum, &trpo, config.seed, &mut recorder)
        }
        Algorithm::BrownianAll => {
            let mut p = ReverseCurriculum::new(goal, curriculum.clone(), SelectRule::Identity);
            run_training(&env, &mut policy, &mut baseline, &mut p, &curriculum, &trpo, config.seed, &mut recorder)
        }
        Algorithm::Uniform => {
            let mut p = UniformProposer {
                count: curriculum.n_new + curriculum.n_old,
            };
            run_training(&env, &mut policy, &mut baseline, &mut p, &curriculum, &trpo, config.seed, &mut recorder)
        }
        Algorithm::Oracle => {
            let mut p = OracleProposer::from_config(&curriculum, config.oracle_eval_rollouts, config.oracle_max_draws);
            run_training(&env, &mut policy, &mut baseline, &mut p, &curriculum, &trpo, config.seed, &mut recorder)
        }
        Algorithm::SelfplayDemo => unreachable!("handled above"),
    };

    let ckpt = dir.join("policy.ckpt");
    let mut w = create(&ckpt)?;
    policy
        .write_checkpoint(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&ckpt, e))?;
    if let Some(summary) = &recorder.last_summary {
        let path = dir.join("starts.csv");
        let mut w = create(&path)?;
        summary
            .start_buffer
            .write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
    }
    let wall_clock_s = started.elapsed().as_secs_f64();
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({
            "wall_clock_s": wall_clock_s,
            "iteration_end_s": recorder.iteration_seconds,
        }),
    )?;
    result?;

    info.final_success = recorder.records.last().map(|r| r.test_success);
    write_json(&dir.join("run.json"), &info)?;
    Ok(RunOutcome {
        dir,
        info,
        records: recorder.records,
        wall_clock_s,
    })
}

fn run_selfplay(config: &ExperimentConfig, dir: PathBuf, started: Instant) -> Result<RunOutcome> {
    let sp = config.selfplay();
    let mut rng = stream(config.seed, Component::SelfPlay, 0);
    let mut alice = AlicePolicy::new(&sp.hidden, sp.initial_stop_logit, &mut rng)?;
    let records = asym_selfplay_demo(&sp, &mut alice, &mut rng)?;

    let path = dir.join("selfplay.ndjson");
    let mut w = create(&path)?;
    for r in &records {
        serde_json::to_writer(&mut w, &serde_json::json!({
            "iteration": r.iteration,
            "bob_radius": r.bob_radius,
            "mean_reward": r.mean_reward,
            "max_stop_distance": r.max_stop_distance,
            "mean_stop_distance": r.mean_stop_distance,
        }))?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("stop_states.csv");
    let mut w = create(&path)?;
    write_stop_states_csv(&records, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;

    let path = dir.join("alice.csv");
    let mut w = create(&path)?;
    crate::numerics::FlatParams::new(alice.params().to_vec())?
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;

    let info = RunInfo {
        tag: config.tag.clone(),
        algorithm: config.algorithm.as_str().to_string(),
        seed: config.seed,
        env: "synthetic-bob".into(),
        test_set_hash: None,
        iterations: sp.iterations,
        final_success: None,
    };
    write_json(&dir.join("run.json"), &info)?;
    let wall_clock_s = started.elapsed().as_secs_f64();
    write_json(&dir.join("timing.json"), &serde_json::json!({ "wall_clock_s": wall_clock_s }))?;
    Ok(RunOutcome {
        dir,
        info,
        records: Vec::new(),
        wall_clock_s,
    })
}
