use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use revcur::envs::{MazeSpec, PointMassMaze};
use revcur::evalkit::{evaluate_policy, generate_test_set, plot, run_experiment, ExperimentConfig, Preset, TestSet, TestSetMode};
use revcur::policy::GaussianPolicy;
use revcur::rng::{stream, Component};

#[derive(Parser)]
#[command(name = "revcur", version, about = "Reverse curriculum generation for goal-reaching tasks")]
struct Cli {
    /// Overrides the seed of the config or command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one configured run; JSON keys override the preset.
    Run { config: PathBuf },
    /// Success of a checkpoint on a stored test set.
    Eval {
        checkpoint: PathBuf,
        testset: PathBuf,
        /// Maze name or file; defaults to the env recorded in the test set.
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 1)]
        traj_per_state: usize,
        #[arg(long)]
        deterministic: bool,
    },
    /// Generate and save a test set.
    GenTestset {
        env: String,
        /// uniform-feasible or brownian-aggregate
        mode: String,
        #[arg(long, default_value_t = 5000)]
        size: usize,
        #[arg(long, default_value_t = 200)]
        brownian_horizon: usize,
    },
    /// Learning-curve SVGs from run directories.
    Plot {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let out = cli.out.unwrap_or_else(|| PathBuf::from("runs"));
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config, cli.preset.map(Into::into))?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let outcome = run_experiment(&cfg, &out)?;
            println!("{}", outcome.dir.display());
            if let Some(s) = outcome.info.final_success {
                println!("final success {s:.4}");
            }
        }
        Command::Eval {
            checkpoint,
            testset,
            env,
            traj_per_state,
            deterministic,
        } => {
            let set = TestSet::load(&testset)?;
            let file = std::fs::File::open(&checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?;
            let policy = GaussianPolicy::read_checkpoint(std::io::BufReader::new(file))?;
            let env = PointMassMaze::new(MazeSpec::from_name_or_path(env.as_deref().unwrap_or(&set.env))?);
            let mut rng = stream(cli.seed.unwrap_or(0), Component::Evaluation, 0);
            let eval = evaluate_policy(&env, &policy, set.states(), traj_per_state, &mut rng, deterministic)?;
            println!(
                "{}",
                serde_json::json!({
                    "checkpoint": checkpoint,
                    "test_set_sha256": set.hash(),
                    "states": set.len(),
                    "success": eval.mean,
                })
            );
        }
        Command::GenTestset {
            env,
            mode,
            size,
            brownian_horizon,
        } => {
            let mode = TestSetMode::parse(&mode)?;
            let maze = PointMassMaze::new(MazeSpec::from_name_or_path(&env)?);
            let set = generate_test_set(&maze, maze.spec().name(), mode, size, brownian_horizon, cli.seed.unwrap_or(0))?;
            let path = if out.extension().is_some() {
                out
            } else {
                std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
                out.join(format!("{}-{}.csv", maze.spec().name(), mode.as_str()))
            };
            set.save(&path)?;
            println!("{} ({} states, sha256 {})", path.display(), set.len(), set.hash());
        }
        Command::Plot { dirs } => {
            for path in plot(&dirs, Path::new(&out))? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}
