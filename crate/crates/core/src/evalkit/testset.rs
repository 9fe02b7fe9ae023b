use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curriculum::{sample_nearby_traced, subsample_indices};
use crate::envs::{EnvState, GoalEnv};
use crate::error::{Error, Result};
use crate::rng::{stream, Component, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestSetMode {
    UniformFeasible,
    BrownianAggregate,
}

impl TestSetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TestSetMode::UniformFeasible => "uniform-feasible",
            TestSetMode::BrownianAggregate => "brownian-aggregate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform-feasible" | "uniform" => Ok(TestSetMode::UniformFeasible),
            "brownian-aggregate" | "brownian" => Ok(TestSetMode::BrownianAggregate),
            other => Err(Error::Config(format!("unknown test-set mode {other:?}"))),
        }
    }
}

/// Fixed evaluation states with their provenance and a content hash.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub mode: TestSetMode,
    pub env: String,
    pub size: usize,
    pub brownian_horizon: usize,
    pub seed: u64,
    states: Vec<EnvState>,
    hash: String,
}

impl TestSet {
    pub fn new(
        mode: TestSetMode,
        env: &str,
        size: usize,
        brownian_horizon: usize,
        seed: u64,
        states: Vec<EnvState>,
    ) -> Result<Self> {
        if env.contains(char::is_whitespace) {
            return Err(Error::Config("test-set env name must not contain whitespace".into()));
        }
        let hash = content_hash(&states);
        Ok(Self {
            mode,
            env: env.to_string(),
            size,
            brownian_horizon,
            seed,
            states,
            hash,
        })
    }

    pub fn states(&self) -> &[EnvState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// SHA-256 of the CSV body, hex encoded.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Indices of `n` states drawn without replacement; all of them when `n >= len`.
    pub fn subsample(&self, n: usize, rng: &mut RngStream) -> Vec<usize> {
        if n >= self.states.len() {
            return (0..self.states.len()).collect();
        }
        let mut idx = subsample_indices(self.states.len(), n, rng);
        idx.sort_unstable();
        idx
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# testset mode={} env={} size={} brownian_horizon={} seed={} sha256={}",
            self.mode.as_str(),
            self.env,
            self.size,
            self.brownian_horizon,
            self.seed,
            self.hash
        )?;
        out.write_all(csv_body(&self.states).as_bytes())
    }

    /// Parses and re-verifies the hash and the row count.
    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let bad = |m: String| Error::Format(format!("test set: {m}"));
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let fields = header
            .strip_prefix("# testset ")
            .ok_or_else(|| bad("missing '# testset' header".into()))?;
        let mut mode = None;
        let mut env = None;
        let mut size = None;
        let mut horizon = None;
        let mut seed = None;
        let mut hash = None;
        for pair in fields.split_whitespace() {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| bad(format!("header entry {pair:?}")))?;
            let int = || v.parse::<u64>().map_err(|_| bad(format!("{k} is not an integer")));
            match k {
                "mode" => mode = Some(TestSetMode::parse(v)?),
                "env" => env = Some(v.to_string()),
                "size" => size = Some(int()? as usize),
                "brownian_horizon" => horizon = Some(int()? as usize),
                "seed" => seed = Some(int()?),
                "sha256" => hash = Some(v.to_string()),
                other => return Err(bad(format!("unknown header key {other:?}"))),
            }
        }
        let column = lines
            .next()
            .ok_or_else(|| bad("missing column header".into()))?
            .map_err(|e| bad(e.to_string()))?;
        if column != "x,y,vx,vy" {
            return Err(bad(format!("unexpected columns {column:?}")));
        }
        let mut states = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("row {} is not numeric", i + 1)))?;
            if v.len() != 4 {
                return Err(bad(format!("row {} has {} columns", i + 1, v.len())));
            }
            states.push(EnvState {
                pos: [v[0], v[1]],
                vel: [v[2], v[3]],
            });
        }
        let expected = hash.ok_or_else(|| bad("header lacks sha256".into()))?;
        let set = Self::new(
            mode.ok_or_else(|| bad("header lacks mode".into()))?,
            &env.ok_or_else(|| bad("header lacks env".into()))?,
            size.ok_or_else(|| bad("header lacks size".into()))?,
            horizon.unwrap_or(0),
            seed.unwrap_or(0),
            states,
        )?;
        if set.hash != expected {
            return Err(bad(format!("hash mismatch: header {expected}, content {}", set.hash)));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }
}

fn csv_body(states: &[EnvState]) -> String {
    let mut s = String::from("x,y,vx,vy\n");
    for st in states {
        writeln!(s, "{:?},{:?},{:?},{:?}", st.pos[0], st.pos[1], st.vel[0], st.vel[1]).expect("string write");
    }
    s
}

fn content_hash(states: &[EnvState]) -> String {
    let digest = Sha256::digest(csv_body(states).as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").expect("string write");
        s
    })
}

/// Uniform mode draws `size` feasible states; Brownian mode keeps the whole
/// pool grown from the goal with `brownian_horizon`-step random rollouts.
pub fn generate_test_set<E: GoalEnv>(
    env: &E,
    env_name: &str,
    mode: TestSetMode,
    size: usize,
    brownian_horizon: usize,
    seed: u64,
) -> Result<TestSet> {
    let mut rng = stream(seed, Component::TestSet, 0);
    let states = match mode {
        TestSetMode::UniformFeasible => env.sample_uniform_feasible(size, &mut rng),
        TestSetMode::BrownianAggregate => {
            sample_nearby_traced(env, &[env.goal_state()], 0, 1.0, brownian_horizon, size, &mut rng)?.pool
        }
    };
    TestSet::new(mode, env_name, size, brownian_horizon, seed, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{MazeSpec, PointMassMaze};

    #[test]
    fn round_trip_keeps_hash() {
        let env = PointMassMaze::new(MazeSpec::default_maze());
        let set = generate_test_set(&env, "gmaze", TestSetMode::UniformFeasible, 50, 0, 3).unwrap();
        let mut buf = Vec::new();
        set.write(&mut buf).unwrap();
        let back = TestSet::read(buf.as_slice()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.hash().len(), 64);
    }

    #[test]
    fn tampering_is_detected() {
        let env = PointMassMaze::new(MazeSpec::default_maze());
        let set = generate_test_set(&env, "gmaze", TestSetMode::UniformFeasible, 5, 0, 3).unwrap();
        let mut buf = Vec::new();
        set.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let changed = lines[2].replacen('.', ".5", 1);
        lines[2] = &changed;
        assert!(TestSet::read(lines.join("\n").as_bytes()).is_err());
    }

    #[test]
    fn brownian_mode_is_feasible_and_at_rest() {
        let env = PointMassMaze::new(MazeSpec::default_maze());
        let set = generate_test_set(&env, "gmaze", TestSetMode::BrownianAggregate, 500, 20, 1).unwrap();
        assert!(set.len() >= 500);
        assert!(set.states().iter().all(|s| env.is_feasible(s) && s.vel == [0.0, 0.0]));
        assert_eq!(set.states()[0], env.goal_state());
    }
}
