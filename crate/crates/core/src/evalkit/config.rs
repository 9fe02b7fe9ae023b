use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::baselines::SelfPlayConfig;
use crate::curriculum::CurriculumConfig;
use crate::error::{Error, Result};
use crate::trpo::TrpoConfig;

use super::TestSetMode;

pub const DESK_PRESET: &str = include_str!("../../presets/desk.json");
pub const PAPER_PRESET: &str = include_str!("../../presets/paper.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Revcur,
    Uniform,
    BrownianAll,
    Oracle,
    SelfplayDemo,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Revcur => "revcur",
            Algorithm::Uniform => "uniform",
            Algorithm::BrownianAll => "brownian-all",
            Algorithm::Oracle => "oracle",
            Algorithm::SelfplayDemo => "selfplay-demo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn text(self) -> &'static str {
        match self {
            Preset::Desk => DESK_PRESET,
            Preset::Paper => PAPER_PRESET,
        }
    }
}

/// Every knob of one experiment. Files are flat JSON objects; keys left out
/// fall back to the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub tag: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// `gmaze`, `open`, or a path to a maze file.
    pub env: String,
    /// Overrides the maze file's horizon.
    pub horizon: Option<usize>,
    pub iterations: usize,

    pub n_new: usize,
    pub n_old: usize,
    pub pool_size: usize,
    pub brownian_horizon: usize,
    pub brownian_std: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub min_visits: usize,

    pub batch_timesteps: usize,
    pub inner_iters: usize,
    pub step_kl: f64,
    pub kl_slack: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
    pub gamma: f64,
    pub train_log_std: bool,
    pub fvp_stride: usize,

    pub policy_hidden: Vec<usize>,
    pub baseline_hidden: Vec<usize>,
    pub baseline_lr: f64,
    pub baseline_steps: usize,
    pub baseline_minibatch: Option<usize>,

    pub oracle_eval_rollouts: usize,
    pub oracle_max_draws: usize,

    /// Existing test-set file; generated from the fields below when null.
    pub test_set: Option<String>,
    pub test_mode: TestSetMode,
    pub test_size: usize,
    pub test_brownian_horizon: usize,
    pub test_seed: u64,
    pub eval_subsample: usize,
    pub eval_traj_per_state: usize,
    pub eval_deterministic: bool,
    pub record_wall_clock: bool,

    pub selfplay_iterations: usize,
    pub selfplay_episodes: usize,
    pub selfplay_expand_at: usize,
    pub selfplay_initial_radius: f64,
    pub selfplay_expanded_radius: f64,
    pub selfplay_learning_rate: f64,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        serde_json::from_str(preset.text()).expect("bundled preset is valid")
    }

    pub fn load(path: &Path, preset: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, preset).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}:{msg}", path.display())),
            other => other,
        })
    }

    /// Overlays `text` on a preset. `preset` wins over a `"preset"` key in the
    /// text; the desk preset is used when neither is given.
    pub fn parse(text: &str, preset: Option<Preset>) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{}:{}: {e}", e.line(), e.column())))?;
        let Value::Object(overrides) = value else {
            return Err(Error::Config("1:1: configuration must be a JSON object".into()));
        };
        let preset = match (preset, overrides.get("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => serde_json::from_value(v.clone()).map_err(|e| at_key(text, "preset", &e.to_string()))?,
            (None, None) => Preset::Desk,
        };
        let base: Map<String, Value> = serde_json::from_str(preset.text()).expect("bundled preset is an object");
        for key in overrides.keys() {
            if !base.contains_key(key) {
                return Err(at_key(text, key, &format!("unknown key {key:?}")));
            }
        }
        let mut merged = base.clone();
        merged.extend(overrides.clone());
        merged.insert("preset".into(), serde_json::to_value(preset)?);
        let config: Self = match serde_json::from_value(Value::Object(merged)) {
            Ok(c) => c,
            Err(e) => {
                // Find the offending key by overriding one key at a time.
                for (key, v) in &overrides {
                    let mut probe = base.clone();
                    probe.insert(key.clone(), v.clone());
                    if let Err(err) = serde_json::from_value::<Self>(Value::Object(probe)) {
                        return Err(at_key(text, key, &err.to_string()));
                    }
                }
                return Err(Error::Config(format!("1:1: {e}")));
            }
        };
        config
            .validate()
            .map_err(|(key, msg)| at_key(text, key, &msg))?;
        Ok(config)
    }

    /// Semantic checks; the error names the offending key.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let checks: [(&'static str, Result<()>); 2] = [
            ("r_min", self.curriculum().validate()),
            ("step_kl", self.trpo().validate()),
        ];
        for (key, r) in checks {
            if let Err(e) = r {
                let key = guess_key(&e.to_string()).unwrap_or(key);
                return Err((key, e.to_string()));
            }
        }
        let positive: [(&'static str, usize); 6] = [
            ("test_size", self.test_size),
            ("eval_traj_per_state", self.eval_traj_per_state),
            ("oracle_eval_rollouts", self.oracle_eval_rollouts),
            ("baseline_steps", self.baseline_steps),
            ("selfplay_episodes", self.selfplay_episodes),
            ("test_brownian_horizon", self.test_brownian_horizon),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err((key, format!("{key} must be positive")));
            }
        }
        if self.policy_hidden.contains(&0) {
            return Err(("policy_hidden", "hidden layer sizes must be positive".into()));
        }
        if self.baseline_hidden.contains(&0) {
            return Err(("baseline_hidden", "hidden layer sizes must be positive".into()));
        }
        if self.baseline_minibatch == Some(0) {
            return Err(("baseline_minibatch", "baseline_minibatch must be positive or null".into()));
        }
        if !(self.baseline_lr > 0.0 && self.baseline_lr.is_finite()) {
            return Err(("baseline_lr", "baseline_lr must be positive".into()));
        }
        if self.horizon == Some(0) {
            return Err(("horizon", "horizon must be positive or null".into()));
        }
        if self.tag.is_empty() || self.tag.contains(['/', '\\']) {
            return Err(("tag", "tag must be a non-empty name without path separators".into()));
        }
        Ok(())
    }

    pub fn curriculum(&self) -> CurriculumConfig {
        CurriculumConfig {
            n_new: self.n_new,
            n_old: self.n_old,
            pool_size: self.pool_size,
            brownian_horizon: self.brownian_horizon,
            brownian_std: self.brownian_std,
            r_min: self.r_min,
            r_max: self.r_max,
            iterations: self.iterations,
            min_visits: self.min_visits,
        }
    }

    pub fn trpo(&self) -> TrpoConfig {
        TrpoConfig {
            step_kl: self.step_kl,
            cg_iters: self.cg_iters,
            cg_damping: self.cg_damping,
            backtrack_ratio: self.backtrack_ratio,
            max_backtracks: self.max_backtracks,
            inner_iters: self.inner_iters,
            gamma: self.gamma,
            kl_slack: self.kl_slack,
            train_log_std: self.train_log_std,
            batch_timesteps: self.batch_timesteps,
            fvp_stride: self.fvp_stride,
        }
    }

    pub fn selfplay(&self) -> SelfPlayConfig {
        SelfPlayConfig {
            iterations: self.selfplay_iterations,
            episodes_per_iter: self.selfplay_episodes,
            expand_at: self.selfplay_expand_at,
            initial_bob_radius: self.selfplay_initial_radius,
            expanded_bob_radius: self.selfplay_expanded_radius,
            learning_rate: self.selfplay_learning_rate,
            ..SelfPlayConfig::default()
        }
    }

    pub fn run_dir_name(&self) -> String {
        format!("{}-seed{}", self.tag, self.seed)
    }
}

fn guess_key(message: &str) -> Option<&'static str> {
    const KEYS: [&str; 14] = [
        "r_min",
        "r_max",
        "n_new",
        "pool_size",
        "brownian_horizon",
        "brownian_std",
        "step_kl",
        "cg_iters",
        "cg_damping",
        "backtrack_ratio",
        "gamma",
        "kl_slack",
        "batch_timesteps",
        "fvp_stride",
    ];
    KEYS.into_iter().find(|k| message.contains(k))
}

/// `line:col: message`, pointing at the key's first occurrence in `text`.
fn at_key(text: &str, key: &str, message: &str) -> Error {
    let needle = format!("\"{key}\"");
    let (line, col) = text
        .lines()
        .enumerate()
        .find_map(|(i, l)| l.find(&needle).map(|c| (i + 1, c + 1)))
        .unwrap_or((1, 1));
    Error::Config(format!("{line}:{col}: {message}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        let desk = ExperimentConfig::preset(Preset::Desk);
        assert_eq!((desk.n_new, desk.n_old, desk.pool_size), (60, 30, 2000));
        assert_eq!(desk.batch_timesteps, 10_000);
        let paper = ExperimentConfig::preset(Preset::Paper);
        assert_eq!((paper.n_new, paper.n_old, paper.pool_size), (200, 100, 10_000));
        assert_eq!(paper.batch_timesteps, 50_000);
        assert_eq!(paper.horizon, Some(500));
        assert!(desk.validate().is_ok() && paper.validate().is_ok());
    }

    #[test]
    fn overrides_apply() {
        let c = ExperimentConfig::parse("{\"seed\": 4, \"algorithm\": \"brownian-all\"}", None).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.algorithm, Algorithm::BrownianAll);
        assert_eq!(c.preset, Preset::Desk);
        let p = ExperimentConfig::parse("{\"preset\": \"paper\"}", None).unwrap();
        assert_eq!(p.n_new, 200);
        let forced = ExperimentConfig::parse("{\"preset\": \"paper\"}", Some(Preset::Desk)).unwrap();
        assert_eq!(forced.n_new, 60);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let unknown = ExperimentConfig::parse("{\n  \"seed\": 1,\n  \"sede\": 2\n}", None).unwrap_err();
        assert!(unknown.to_string().contains("3:3: unknown key"), "{unknown}");
        let wrong_type = ExperimentConfig::parse("{\n\n  \"n_new\": \"many\"\n}", None).unwrap_err();
        assert!(wrong_type.to_string().contains("3:3:"), "{wrong_type}");
        let syntax = ExperimentConfig::parse("{\n  \"seed\": 1,\n}", None).unwrap_err();
        assert!(syntax.to_string().contains("3:1"), "{syntax}");
        let semantic = ExperimentConfig::parse("{\n \"r_min\": 0.95\n}", None).unwrap_err();
        assert!(semantic.to_string().contains("2:2:"), "{semantic}");
    }
}
