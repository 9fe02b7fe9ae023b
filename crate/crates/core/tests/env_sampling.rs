use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::StandardNormal;
use revcur::curriculum::sample_nearby_traced;
use revcur::envs::{EnvState, GoalEnv, MazeSpec, PointMassMaze};
use revcur::evalkit::{generate_test_set, TestSetMode};
use revcur::rng::{stream, Component};

fn cell_of(spec: &MazeSpec, s: &EnvState) -> (isize, isize) {
    (spec.cell_index(s.pos[0]), spec.cell_index(s.pos[1]))
}

/// Upper 1% point of chi-square with `k` degrees of freedom (Wilson-Hilferty).
fn chi2_crit_99(k: f64) -> f64 {
    let z = 2.326_347_874;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

#[test]
fn uniform_feasible_is_uniform_over_cells() {
    let env = PointMassMaze::new(MazeSpec::default_maze());
    let spec = env.spec();
    let n = 100_000;
    let mut rng = stream(1, Component::TestSet, 0);
    let mut counts: BTreeMap<(isize, isize), usize> = BTreeMap::new();
    for s in env.sample_uniform_feasible(n, &mut rng) {
        assert!(env.is_feasible(&s));
        *counts.entry(cell_of(spec, &s)).or_default() += 1;
    }
    let cells = spec.free_cells();
    assert_eq!(counts.len(), cells.len());
    let expected = n as f64 / cells.len() as f64;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let crit = chi2_crit_99((cells.len() - 1) as f64);
    assert!(chi2 < crit, "chi2 {chi2:.2} >= {crit:.2}");
}

#[test]
fn random_steps_never_leave_the_feasible_set() {
    let env = PointMassMaze::new(MazeSpec::default_maze());
    let mut rng = stream(2, Component::Rollout, 0);
    let bound = 5.0;
    let mut steps = 0;
    while steps < 1_000_000 {
        let mut s = env.sample_uniform_feasible(1, &mut rng)[0];
        s.vel = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        for _ in 0..100 {
            let a = [rng.random_range(-bound..bound), rng.random_range(-bound..bound)];
            s = env.transition(&s, &a).unwrap();
            assert!(env.is_feasible(&s), "{s:?}");
            steps += 1;
        }
    }
}

#[test]
fn sample_nearby_outputs_are_feasible_under_fuzz() {
    let env = PointMassMaze::new(MazeSpec::default_maze());
    let mut rng = stream(3, Component::Curriculum, 0);
    let mut checked = 0;
    while checked < 1_000_000 {
        let seeds = env.sample_uniform_feasible(rng.random_range(1..20), &mut rng);
        let std = rng.random_range(0.1..3.0);
        let horizon = rng.random_range(1..100);
        let trace = sample_nearby_traced(&env, &seeds, 50, std, horizon, 20_000, &mut rng).unwrap();
        for s in &trace.pool {
            assert!(env.is_feasible(s), "{s:?}");
            assert_eq!(s.vel, [0.0, 0.0]);
        }
        for s in trace.selected() {
            assert!(trace.pool.contains(&s));
        }
        checked += trace.pool.len();
    }
}

#[test]
fn brownian_mean_squared_displacement_follows_the_double_integrator() {
    let env = PointMassMaze::new(MazeSpec::open_arena());
    let origin = EnvState::at_rest(3.0, 3.0);
    let horizon = 20;
    let rollouts = 10_000;
    let mut rng = stream(4, Component::Curriculum, 0);
    let mut msd = vec![0.0; horizon];
    for _ in 0..rollouts {
        // A pool of exactly one rollout keeps every state on a path from the origin.
        let trace = sample_nearby_traced(&env, &[origin], 1, 1.0, horizon, horizon + 1, &mut rng).unwrap();
        for (t, s) in trace.pool[1..].iter().enumerate() {
            let d = s.distance_to(origin.pos);
            msd[t] += d * d / rollouts as f64;
        }
    }
    // Zero initial velocity and no damping: MSD grows like t^3 until walls or v_max bite.
    let ts: Vec<f64> = (1..=horizon).map(|t| (t as f64).powi(3)).collect();
    let r2 = r_squared(&ts, &msd);
    assert!(r2 > 0.9, "R^2 = {r2:.3}");
    assert!(msd.windows(2).all(|w| w[1] > w[0]));

    // Independent re-simulation of the same double integrator in open space.
    let spec = env.spec();
    let mut rng = stream(5, Component::Curriculum, 0);
    let mut indep = vec![0.0; horizon];
    for _ in 0..rollouts {
        let (mut p, mut v) = ([0.0f64; 2], [0.0f64; 2]);
        for slot in indep.iter_mut() {
            for vk in v.iter_mut() {
                let a = rng.sample::<f64, _>(StandardNormal).clamp(-spec.action_bound, spec.action_bound);
                *vk += (a - spec.drag * *vk) * spec.dt;
            }
            let speed = v[0].hypot(v[1]);
            if speed > spec.v_max {
                v = [v[0] * spec.v_max / speed, v[1] * spec.v_max / speed];
            }
            p = [p[0] + v[0] * spec.dt, p[1] + v[1] * spec.dt];
            *slot += (p[0] * p[0] + p[1] * p[1]) / rollouts as f64;
        }
    }
    let last = horizon - 1;
    assert!((msd[last] - indep[last]).abs() < 0.1 * indep[last], "{} vs {}", msd[last], indep[last]);
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

#[test]
fn brownian_test_set_covers_the_maze() {
    let env = PointMassMaze::new(MazeSpec::default_maze());
    let set = generate_test_set(&env, "gmaze-v1", TestSetMode::BrownianAggregate, 50_000, 200, 0).unwrap();
    let spec = env.spec();
    let covered: BTreeSet<_> = set.states().iter().map(|s| cell_of(spec, s)).collect();
    let free = spec.free_cells().len();
    let fraction = covered.len() as f64 / free as f64;
    assert!(fraction >= 0.95, "covered {} of {free} cells", covered.len());
}
