//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The ordering criteria train 20 desk-preset runs and take most of an hour on
//! one core. Run artifacts and plots land in `<target>/tmp/acceptance/`.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use revcur::baselines::{asym_selfplay_demo, AlicePolicy};
use revcur::curriculum::{sample_nearby, select, CurriculumConfig, ReverseCurriculum, SelectRule, StartProposer};
use revcur::envs::{EnvState, GoalEnv, MazeSpec, PointMassMaze};
use revcur::evalkit::{plot, run_experiment, Algorithm, ExperimentConfig, Preset};
use revcur::numerics::{cg_solve, dense_solve, dot, Matrix};
use revcur::policy::{batch_log_probs, diag_gaussian_kl, GaussianPolicy};
use revcur::rng::{stream, Component};
use revcur::rollout::{normalize, SuccessEstimate, SuccessMap};
use revcur::trpo::{trpo_step, SurrogateProblem, TrpoConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn report(id: usize, name: &str, started: Instant, v: Verdict) -> bool {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("{tag} [{id}] {name}: {} ({:.1}s)", v.detail, started.elapsed().as_secs_f64());
    v.pass
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn random_problem(seed: u64, n: usize) -> (GaussianPolicy, SurrogateProblem) {
    let mut rng = stream(seed, Component::PolicyInit, 0);
    let mut policy = GaussianPolicy::new(3, &[8, 8], 2, &mut rng).unwrap();
    let mut p = policy.params().to_vec();
    let k = p.len();
    p[k - 2] = rng.random_range(-1.0..0.5);
    p[k - 1] = rng.random_range(-1.0..0.5);
    policy.set_params(&p).unwrap();
    let obs = Matrix::from_vec(n, 3, (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let act = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap();
    let adv: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let problem = SurrogateProblem::new(policy.arch(), policy.params(), obs, act, adv, true).unwrap();
    (policy, problem)
}

fn numerics_suite() -> Verdict {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut check = |analytic: f64, fd: f64| {
        if (analytic - fd).abs() > 1e-9 {
            worst = worst.max(rel_err(analytic, fd));
        }
    };
    // Log-prob gradient: the surrogate gradient at the old parameters with a
    // single unit advantage is the score function.
    let (policy, _) = random_problem(1, 1);
    let params = policy.params().to_vec();
    let obs = Matrix::from_rows(&[vec![0.3, -0.2, 0.8]]).unwrap();
    let act = Matrix::from_rows(&[vec![0.5, -1.1]]).unwrap();
    let score = SurrogateProblem::new(policy.arch(), &params, obs.clone(), act.clone(), vec![1.0], true).unwrap();
    let (_, g) = score.surrogate_and_grad(&params).unwrap();
    for k in 0..params.len() {
        let (mut a, mut b) = (params.clone(), params.clone());
        a[k] += h;
        b[k] -= h;
        let lp = |p: &[f64]| batch_log_probs(policy.arch(), p, &obs, &act).unwrap()[0];
        check(g[k], (lp(&a) - lp(&b)) / (2.0 * h));
    }
    // Surrogate gradient away from the old parameters.
    let (policy, problem) = random_problem(2, 40);
    let mut rng = stream(3, Component::PolicyInit, 0);
    let theta: Vec<f64> = policy.params().iter().map(|p| p + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect();
    let (_, g) = problem.surrogate_and_grad(&theta).unwrap();
    for k in 0..theta.len() {
        let (mut a, mut b) = (theta.clone(), theta.clone());
        a[k] += h;
        b[k] -= h;
        check(g[k], (problem.surrogate(&a).unwrap() - problem.surrogate(&b).unwrap()) / (2.0 * h));
    }
    let grad_ok = worst < 1e-5;

    // Fisher-vector product symmetry and positivity.
    let n = theta.len();
    let mut sym_err = 0.0f64;
    let mut psd = true;
    for _ in 0..20 {
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let hu = problem.fisher_vector_product(&u, 0.0).unwrap();
        let hv = problem.fisher_vector_product(&v, 0.0).unwrap();
        sym_err = sym_err.max((dot(&u, &hv) - dot(&v, &hu)).abs());
        psd &= dot(&v, &hv) >= -1e-12;
    }
    let sym_ok = sym_err < 1e-8 && psd;

    // CG against a dense solve.
    let m = 20;
    let mm = Matrix::from_vec(m, m, (0..m * m).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
    let mut a = mm.transpose().matmul(&mm).unwrap();
    for i in 0..m {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    let b: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let x = cg_solve(|v| a.matvec(v), &b, 200, 1e-20).unwrap().x;
    let d = dense_solve(&a, &b).unwrap();
    let cg_err = x.iter().zip(&d).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let cg_ok = cg_err < 1e-8;

    // KL identities.
    let mut kl_ok = true;
    for _ in 0..1000 {
        let dim = rng.random_range(1..5);
        let mut r = || (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
        let (m1, l1, m2, l2) = (r(), r(), r(), r());
        kl_ok &= diag_gaussian_kl(&m1, &l1, &m1, &l1).abs() < 1e-12 && diag_gaussian_kl(&m1, &l1, &m2, &l2) >= 0.0;
    }

    // Accepted steps respect the trust region.
    let config = TrpoConfig::default();
    let mut max_kl = 0.0f64;
    let mut accepted = 0;
    for seed in 10..40 {
        let (_, p) = random_problem(seed, 200);
        let (new, info) = trpo_step(&p, &config).unwrap();
        if info.accepted {
            accepted += 1;
            max_kl = max_kl.max(p.kl(&new).unwrap());
        }
    }
    let step_ok = accepted > 0 && max_kl <= config.kl_slack * config.step_kl;

    verdict(
        grad_ok && sym_ok && cg_ok && kl_ok && step_ok,
        format!(
            "max grad rel err {worst:.2e}, FVP asymmetry {sym_err:.1e}, CG err {cg_err:.1e}, KL identities {}, max accepted KL {max_kl:.4} over {accepted} steps",
            if kl_ok { "hold" } else { "violated" }
        ),
    )
}

fn curriculum_suite() -> Verdict {
    let env = PointMassMaze::new(MazeSpec::default_maze());
    let mut rng = stream(0, Component::Curriculum, 0);
    let mut fuzzed = 0;
    let mut infeasible = 0;
    while fuzzed < 1_000_000 {
        let seeds = env.sample_uniform_feasible(rng.random_range(1..20), &mut rng);
        let std = rng.random_range(0.1..3.0);
        let horizon = rng.random_range(1..100);
        let pool_size = 20_000;
        let out = sample_nearby(&env, &seeds, pool_size, std, horizon, pool_size, &mut rng).unwrap();
        infeasible += out.iter().filter(|s| !env.is_feasible(s)).count();
        fuzzed += out.len();
    }

    let s = |x: f64| EnvState::at_rest(x, 4.0);
    let est = |successes, visits| SuccessEstimate { successes, visits };
    let starts = [s(3.0), s(3.5), s(5.0), s(5.5), s(6.0)];
    let rews = SuccessMap::from([(0, est(5, 10)), (1, est(19, 20)), (2, est(0, 4)), (3, est(1, 10)), (4, est(0, 1))]);
    let kept = select(&starts, &rews, 0.1, 0.9, 2);
    let select_ok = kept == vec![s(3.0), s(6.0)];

    let goal = env.goal_state();
    let mut rc = ReverseCurriculum::new(goal, CurriculumConfig::desk(), SelectRule::Filter);
    let policy = GaussianPolicy::new(4, &[8], 2, &mut stream(0, Component::PolicyInit, 0)).unwrap();
    let mut replay_ok = rc.replay().contains(&goal);
    let mut prev: Vec<EnvState> = rc.replay().states().to_vec();
    for _ in 0..20 {
        let starts = rc.propose(&env, &policy, &mut rng).unwrap().starts;
        let rews: SuccessMap = (0..starts.len())
            .map(|i| {
                let visits = rng.random_range(0..6);
                (i, est(rng.random_range(0..=visits), visits))
            })
            .filter(|(_, e)| e.visits > 0)
            .collect();
        StartProposer::<PointMassMaze>::feedback(&mut rc, &starts, &rews, &mut rng).unwrap();
        let now = rc.replay().states();
        replay_ok &= now.len() >= prev.len() && now[..prev.len()] == prev[..] && rc.replay().contains(&goal);
        prev = now.to_vec();
    }

    let mut config = ExperimentConfig::preset(Preset::Desk);
    config.iterations = 2;
    config.batch_timesteps = 2000;
    config.inner_iters = 2;
    config.test_size = 100;
    config.eval_subsample = 50;
    let dirs = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run_experiment(&config, dirs.0.path()).unwrap();
    let b = run_experiment(&config, dirs.1.path()).unwrap();
    let ndjson_ok = std::fs::read(a.dir.join("records.ndjson")).unwrap() == std::fs::read(b.dir.join("records.ndjson")).unwrap()
        && !a.records.is_empty();

    verdict(
        infeasible == 0 && select_ok && replay_ok && ndjson_ok,
        format!(
            "{infeasible} infeasible of {fuzzed} fuzzed states, select {}, replay {}, NDJSON {}",
            if select_ok { "exact" } else { "wrong" },
            if replay_ok { "monotone with goal" } else { "broken" },
            if ndjson_ok { "byte-identical" } else { "differs" }
        ),
    )
}

fn bandit() -> Verdict {
    let mut rng = stream(0, Component::PolicyInit, 0);
    let mut policy = GaussianPolicy::new(1, &[], 1, &mut rng).unwrap();
    let config = TrpoConfig::default();
    let n = 1000;
    let obs = Matrix::zeros(n, 1);
    let mut converged_at = None;
    let mut mean = 0.0;
    for step in 1..=50 {
        let actions: Vec<f64> = (0..n).map(|_| policy.act(&[0.0], &mut rng).unwrap()[0]).collect();
        let mut adv: Vec<f64> = actions.iter().map(|a| -(a - 3.0).powi(2)).collect();
        normalize(&mut adv);
        let problem =
            SurrogateProblem::new(policy.arch(), policy.params(), obs.clone(), Matrix::from_vec(n, 1, actions).unwrap(), adv, true)
                .unwrap();
        let (new, _) = trpo_step(&problem, &config).unwrap();
        policy.set_params(&new).unwrap();
        mean = policy.mean(&[0.0]).unwrap()[0];
        if (mean - 3.0).abs() <= 0.1 && converged_at.is_none() {
            converged_at = Some(step);
        }
    }
    let ok = converged_at.is_some() && (mean - 3.0).abs() <= 0.1;
    verdict(
        ok,
        match converged_at {
            Some(s) => format!("mean within 0.1 of 3 at step {s}, final {mean:.3}"),
            None => format!("final mean {mean:.3} after 50 steps"),
        },
    )
}

fn selfplay() -> Verdict {
    let config = ExperimentConfig::preset(Preset::Desk).selfplay();
    let mut rng = stream(0, Component::SelfPlay, 0);
    let mut alice = AlicePolicy::new(&config.hidden, config.initial_stop_logit, &mut rng).unwrap();
    let records = asym_selfplay_demo(&config, &mut alice, &mut rng).unwrap();
    let (pre, after) = records.split_at(config.expand_at - 1);
    let before = pre.last().unwrap();
    // The pre-expansion proposal region: every stop state Alice produced before the jump.
    let region = pre.iter().map(|r| r.max_stop_distance).fold(0.0, f64::max);
    let zero = after.iter().all(|r| r.mean_reward == 0.0);
    let non_increasing = after.windows(2).all(|w| w[1].max_stop_distance <= w[0].max_stop_distance)
        && after[0].max_stop_distance <= region;
    let max_reward_after = after.iter().map(|r| r.mean_reward).fold(0.0, f64::max);
    verdict(
        before.mean_reward > 0.0 && zero && non_increasing,
        format!(
            "reward before expansion {:.3}, max after {max_reward_after:.3}; max stop distance {:.2} -> {:.2} (pre-expansion region {region:.2})",
            before.mean_reward,
            after[0].max_stop_distance,
            after.last().unwrap().max_stop_distance,
        ),
    )
}

struct Ordering {
    finals: Vec<(Algorithm, Vec<f64>)>,
    good: Vec<(Algorithm, Vec<f64>)>,
    seconds: f64,
}

fn ordering_runs(out: &std::path::Path) -> Ordering {
    let started = Instant::now();
    let algorithms = [Algorithm::Oracle, Algorithm::Revcur, Algorithm::BrownianAll, Algorithm::Uniform];
    let mut finals = Vec::new();
    let mut good = Vec::new();
    let mut dirs = Vec::new();
    for alg in algorithms {
        let mut f = Vec::new();
        let mut g = Vec::new();
        for seed in 0..5 {
            let mut config = ExperimentConfig::preset(Preset::Desk);
            config.algorithm = alg;
            config.seed = seed;
            config.tag = alg.as_str().to_string();
            let run = run_experiment(&config, out).unwrap();
            let last = run.records.last().expect("desk preset has iterations");
            eprintln!("  {} seed {seed}: final success {:.3} ({:.0}s)", alg.as_str(), last.test_success, run.wall_clock_s);
            f.push(last.test_success);
            g.push(last.good_starts_fraction.unwrap_or(0.0));
            dirs.push(run.dir);
        }
        finals.push((alg, f));
        good.push((alg, g));
    }
    if let Err(e) = plot(&dirs, &out.join("plots")) {
        eprintln!("  plotting failed: {e}");
    }
    Ordering {
        finals,
        good,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn get(v: &[(Algorithm, Vec<f64>)], a: Algorithm) -> &[f64] {
    &v.iter().find(|(x, _)| *x == a).unwrap().1
}

fn main() {
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&out);
    std::fs::create_dir_all(&out).unwrap();
    let mut passed = 0;

    let t = Instant::now();
    let v = numerics_suite();
    let v = Verdict {
        pass: v.pass && t.elapsed().as_secs_f64() <= 60.0,
        ..v
    };
    passed += report(5, "numerics suite", t, v) as usize;

    let t = Instant::now();
    let v = curriculum_suite();
    let v = Verdict {
        pass: v.pass && t.elapsed().as_secs_f64() <= 120.0,
        ..v
    };
    passed += report(6, "curriculum invariants", t, v) as usize;

    let t = Instant::now();
    let v = bandit();
    let v = Verdict {
        pass: v.pass && t.elapsed().as_secs_f64() <= 10.0,
        ..v
    };
    passed += report(7, "TRPO Gaussian bandit", t, v) as usize;

    let t = Instant::now();
    let v = selfplay();
    let v = Verdict {
        pass: v.pass && t.elapsed().as_secs_f64() <= 120.0,
        ..v
    };
    passed += report(4, "self-play stuck demo", t, v) as usize;

    let t = Instant::now();
    let runs = ordering_runs(&out);
    let med = |a| median(get(&runs.finals, a));
    let (o, r, b, u) = (
        med(Algorithm::Oracle),
        med(Algorithm::Revcur),
        med(Algorithm::BrownianAll),
        med(Algorithm::Uniform),
    );
    let in_budget = runs.seconds <= 3600.0;
    let v = verdict(
        o >= r && r >= b && b >= u && r >= 0.75 && u <= 0.5 && in_budget,
        format!(
            "median final success oracle {o:.3}, revcur {r:.3}, brownian-all {b:.3}, uniform {u:.3}; 20 runs in {:.0} min",
            runs.seconds / 60.0
        ),
    );
    passed += report(1, "ordering on the G-maze", t, v) as usize;

    let uni = get(&runs.finals, Algorithm::Uniform);
    let rev = get(&runs.finals, Algorithm::Revcur);
    let (su, sr) = (sample_std(uni), sample_std(rev));
    let min_u = uni.iter().copied().fold(f64::INFINITY, f64::min);
    let min_r = rev.iter().copied().fold(f64::INFINITY, f64::min);
    let v = verdict(
        su >= 2.0 * sr || (min_u < 0.3 && min_r > 0.6),
        format!("std uniform {su:.3} vs revcur {sr:.3}; min uniform {min_u:.3}, min revcur {min_r:.3}"),
    );
    passed += report(2, "uniform-sampling variance", t, v) as usize;

    let gr = median(get(&runs.good, Algorithm::Revcur));
    let gb = median(get(&runs.good, Algorithm::BrownianAll));
    let v = verdict(gr > gb, format!("median final good-starts fraction revcur {gr:.3} vs brownian-all {gb:.3}"));
    passed += report(3, "good-starts fraction", t, v) as usize;

    println!("{passed}/7 criteria passed; artifacts in {}", out.display());
}
