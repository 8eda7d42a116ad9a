use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{step, Configuration, CountOverflow};
use crate::envmodel::{realize_window, EnvironmentLaw};
use crate::error::{Error, Result};
use crate::lyapunov::FEASIBILITY_TOL;
use crate::seed::derive;

/// `ln h` with `h = sum_x eta(x) lambda^x`, by log-sum-exp over occupied
/// sites. `-inf` for the empty configuration.
pub fn log_h(config: &Configuration, lambda: f64) -> f64 {
    let ln_l = lambda.ln();
    let terms: Vec<f64> = config
        .iter()
        .map(|(x, c)| (c as f64).ln() + x as f64 * ln_l)
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Per-time averages of `h(n)` over independent trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupermartingaleTrace {
    pub lambda: f64,
    pub trials: usize,
    /// `mean_h[n]` for `n = 0..=horizon`.
    pub mean_h: Vec<f64>,
    pub stderr_h: Vec<f64>,
    /// Mean and standard error of the increments `h(n+1) - h(n)`.
    pub mean_increment: Vec<f64>,
    pub stderr_increment: Vec<f64>,
}

impl SupermartingaleTrace {
    /// Largest increment in units of its standard error; a zero standard
    /// error maps to 0 for a nonpositive increment and `+inf` otherwise.
    pub fn max_increment_sigma(&self) -> f64 {
        self.mean_increment
            .iter()
            .zip(&self.stderr_increment)
            .map(|(&d, &s)| {
                if s > 0.0 {
                    d / s
                } else if d <= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether every increment is at most `k` standard errors above zero.
    pub fn is_nonincreasing_within(&self, k: f64) -> bool {
        self.mean_increment
            .iter()
            .zip(&self.stderr_increment)
            .all(|(&d, &s)| d <= k * s)
    }
}

/// Empirical mean of `h(n) = sum_x eta_n(x) lambda^x` in the quenched
/// environment `env_seed`, starting from one particle at the origin.
///
/// `lambda` must satisfy the lambda-criterion for every state of the law.
pub fn supermartingale_trace(
    envlaw: &EnvironmentLaw,
    env_seed: u64,
    lambda: f64,
    trials: usize,
    horizon: u64,
    trial_seed: u64,
) -> Result<SupermartingaleTrace> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InfeasibleLambda {
            lambda,
            reason: "lambda must be positive and finite".into(),
        });
    }
    if let Some((i, m)) = envlaw
        .moments()
        .iter()
        .enumerate()
        .find(|(_, m)| m.lambda_mean(lambda) > 1.0 + FEASIBILITY_TOL)
    {
        return Err(Error::InfeasibleLambda {
            lambda,
            reason: format!("state {i} has mean weight {} > 1", m.lambda_mean(lambda)),
        });
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials".into()));
    }
    let reach = i64::try_from(horizon).unwrap_or(i64::MAX / 2).min(1 << 20);
    let window = realize_window(envlaw, env_seed, -reach, reach)?;

    let paths: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(trial_seed, i as u64));
            let mut cfg = Configuration::single(0);
            let mut path = Vec::with_capacity(horizon as usize + 1);
            path.push(1.0);
            for _ in 0..horizon {
                if !cfg.is_empty() {
                    cfg = step(&cfg, envlaw, &window, &mut rng).map_err(|CountOverflow| {
                        Error::InvalidArgument(format!(
                            "particle count overflow in trial {i}; reduce the horizon"
                        ))
                    })?;
                }
                path.push(log_h(&cfg, lambda).exp());
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;

    let len = horizon as usize + 1;
    let column = |f: &dyn Fn(&[f64]) -> f64| -> Vec<(f64, f64)> {
        (0..len)
            .map(|n| {
                let xs: Vec<f64> = paths.iter().map(|p| f(&p[n..])).collect();
                let (m, sd) = crate::lyapunov::mean_sd(&xs);
                (m, sd / (trials as f64).sqrt())
            })
            .collect()
    };
    let (mean_h, stderr_h) = column(&|p| p[0]).into_iter().unzip();
    let (mean_increment, stderr_increment) = column(&|p| if p.len() > 1 { p[1] - p[0] } else { 0.0 })
        .into_iter()
        .take(len - 1)
        .unzip();

    Ok(SupermartingaleTrace {
        lambda,
        trials,
        mean_h,
        stderr_h,
        mean_increment,
        stderr_increment,
    })
}
