//! Frozen-progeny means against their exact quenched values.
//!
//! A particle at `k` sends `v_minus` particles straight to the barrier,
//! `v_zero` particles that each restart at `k`, and `v_plus` particles that
//! each first return to `k`. Taking means,
//! `m_k = mu_minus(k) / (1 - mu_zero(k) - mu_plus(k) m_{k+1})`,
//! a continued fraction that converges fast from the right.

use brwre_core::criteria::expected_log_drift;
use brwre_core::lyapunov::second_exponent_via_det;
use brwre_core::simulator::{frozen_mean_profile, FrozenOptions};
use brwre_core::{
    lambda_feasible_set, state_at, top_lyapunov, EnvironmentLaw, LyapunovOptions, MatrixKind,
    OffspringLaw, OffspringVector,
};

fn law(atoms: &[(f64, [u32; 3])]) -> OffspringLaw {
    OffspringLaw::new(
        atoms
            .iter()
            .map(|&(p, [a, b, c])| (p, OffspringVector::new(a, b, c)))
            .collect(),
    )
    .unwrap()
}

fn two_state() -> EnvironmentLaw {
    EnvironmentLaw::new(vec![
        (0.5, law(&[(0.7, [2, 0, 0]), (0.05, [0, 0, 1]), (0.25, [0, 0, 0])])),
        (0.5, law(&[(0.45, [2, 0, 0]), (0.08, [0, 0, 1]), (0.47, [0, 0, 0])])),
    ])
    .unwrap()
}

/// Exact `m_k` for `k = 1..=levels` in the environment `seed`.
fn exact_means(env: &EnvironmentLaw, seed: u64, levels: i64, depth: i64) -> Vec<f64> {
    let mut m_next = 0.0;
    let mut out = vec![0.0; levels as usize];
    for x in (1..=levels + depth).rev() {
        let mm = env.moments()[state_at(env, seed, x)];
        let m = mm.mu_minus / (1.0 - mm.mu_zero - mm.mu_plus * m_next);
        if x <= levels {
            out[x as usize - 1] = m;
        }
        m_next = m;
    }
    out
}

#[test]
fn level_means_match_the_continued_fraction() {
    let env = two_state();
    let mut opts = FrozenOptions::new(30, 4_000);
    opts.env_seed = 21;
    opts.trial_seed = 22;
    let p = frozen_mean_profile(&env, &opts).unwrap();
    let exact = exact_means(&env, 21, 30, 200);
    for (l, m) in p.levels.iter().zip(&exact) {
        let z = (l.mean - m) / l.stderr;
        assert!(z.abs() <= 4.0, "level {}: {} vs exact {m} ({z:.2} sigma)", l.k, l.mean);
    }
    // The two states really differ, so the profile is not flat.
    let (lo, hi) = exact.iter().fold((f64::MAX, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    assert!(hi / lo > 1.2);
}

#[test]
fn exact_log_means_average_to_drift_minus_gamma1() {
    // The ergodic average of ln m_k over a long stretch, with no Monte Carlo
    // in the frozen part at all.
    let env = two_state();
    let n = 200_000;
    let logs: Vec<f64> = exact_means(&env, 5, n, 200).iter().map(|m| m.ln()).collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    let sd = (logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let g1 = top_lyapunov(&env, MatrixKind::A, &LyapunovOptions::with_seed(6)).unwrap();
    let target = expected_log_drift(&env) - g1.value;
    let se = (sd / (n as f64).sqrt()).hypot(g1.stderr);
    assert!((mean - target).abs() <= 3.0 * se, "{mean} vs {target} (se {se})");
}

#[test]
fn constant_environment_gives_the_lower_root() {
    let env = EnvironmentLaw::constant(law(&[(0.6, [2, 0, 0]), (0.05, [0, 0, 1]), (0.35, [0, 0, 0])]));
    let exact = exact_means(&env, 0, 1, 100)[0];
    let (lo, _) = lambda_feasible_set(&env).unwrap().bounds().unwrap();
    assert!((exact - lo).abs() < 1e-12);
    // Each m_k is at most lambda_lo, the smallest feasible weight.
    let mut opts = FrozenOptions::new(10, 10_000);
    opts.trial_seed = 1;
    let p = frozen_mean_profile(&env, &opts).unwrap();
    for l in &p.levels {
        assert!(l.mean <= lo + 4.0 * l.stderr, "level {}: {}", l.k, l.mean);
    }
}

#[test]
fn slope_law_and_delta_sign() {
    let env = two_state();
    let (lo, hi) = lambda_feasible_set(&env).unwrap().bounds().unwrap();
    let lambda = (lo * hi).sqrt();
    let mut opts = FrozenOptions::new(150, 1_500);
    opts.env_seed = 8;
    opts.trial_seed = 9;
    opts.lambda = Some(lambda);
    let p = frozen_mean_profile(&env, &opts).unwrap();

    let g = top_lyapunov(&env, MatrixKind::ALambda { lambda }, &LyapunovOptions::with_seed(10)).unwrap();
    let target = lambda.ln() + second_exponent_via_det(&env, lambda, g.value);
    let se = p.log_average_stderr.hypot(g.stderr);
    assert!((p.log_average - target).abs() <= 3.0 * se, "{} vs {target}", p.log_average);
    let se = p.slope_stderr.hypot(g.stderr);
    assert!((p.slope - target).abs() <= 3.0 * se, "slope {} vs {target}", p.slope);

    let (delta, dse) = (p.delta.unwrap(), p.delta_stderr.unwrap());
    for (k, (d, s)) in delta.iter().zip(&dse).enumerate() {
        assert!(*d <= 3.0 * s + 1e-12, "Delta({}) = {d} > 3 * {s}", k + 1);
    }
}
