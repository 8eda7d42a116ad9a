//! Freezing at a barrier.
//!
//! Starting from one particle at level `k`, every particle reaching `k - 1`
//! is frozen there. When no free particle remains, the frozen count is one
//! sample of the level-`k` progeny. In a process vanishing on the right this
//! happens after finitely many steps. The quenched means `m_k` of these
//! counts multiply to the mean number of particles ever reaching the origin
//! from level `k`, and their log-average decides global survival.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{step, Configuration};
use crate::envmodel::{realize_window, EnvironmentLaw, EnvironmentWindow};
use crate::error::{Error, Result};
use crate::lyapunov::mean_sd;
use crate::seed::derive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenCaps {
    pub max_time: u64,
    /// Bound on the number of free particles.
    pub max_population: u64,
}

impl Default for FrozenCaps {
    fn default() -> Self {
        Self {
            max_time: 100_000,
            max_population: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FrozenSample {
    Frozen(u64),
    /// A cap was hit before all particles froze.
    Censored,
}

/// One sample of the frozen count at `level - 1` in a given environment.
pub fn frozen_progeny_in<R: Rng + ?Sized>(
    envlaw: &EnvironmentLaw,
    window: &EnvironmentWindow,
    level: i64,
    rng: &mut R,
    caps: FrozenCaps,
) -> FrozenSample {
    let barrier = level - 1;
    let mut free = Configuration::single(level);
    let mut frozen: u64 = 0;
    while !free.is_empty() {
        if free.time() >= caps.max_time || free.total() > caps.max_population {
            return FrozenSample::Censored;
        }
        free = match step(&free, envlaw, window, rng) {
            Ok(c) => c,
            Err(_) => return FrozenSample::Censored,
        };
        match frozen.checked_add(free.take(barrier)) {
            Some(f) => frozen = f,
            None => return FrozenSample::Censored,
        }
    }
    FrozenSample::Frozen(frozen)
}

pub fn frozen_progeny_trial(
    envlaw: &EnvironmentLaw,
    env_seed: u64,
    level: i64,
    trial_seed: u64,
    caps: FrozenCaps,
) -> Result<FrozenSample> {
    let window = realize_window(envlaw, env_seed, level - 1, level + 256)?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    Ok(frozen_progeny_in(envlaw, &window, level, &mut rng, caps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrozenOptions {
    pub levels: u32,
    pub trials_per_level: usize,
    pub env_seed: u64,
    pub trial_seed: u64,
    pub caps: FrozenCaps,
    /// Largest tolerated fraction of censored trials.
    pub max_censoring: f64,
    /// Weight for the `g` and `Delta` series, if any.
    pub lambda: Option<f64>,
}

impl FrozenOptions {
    pub fn new(levels: u32, trials_per_level: usize) -> Self {
        Self {
            levels,
            trials_per_level,
            env_seed: 0,
            trial_seed: 0,
            caps: FrozenCaps::default(),
            max_censoring: 0.01,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelStats {
    pub k: u32,
    /// Sample mean of the frozen count (`m_k`).
    pub mean: f64,
    pub stderr: f64,
    pub used: usize,
    pub censored: usize,
    /// Zero sample mean: excluded from the log series.
    pub flagged: bool,
}

impl LevelStats {
    pub fn relative_stderr(&self) -> f64 {
        self.stderr / self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenProfile {
    pub levels: Vec<LevelStats>,
    /// `m_k` for `k = 1..=K`.
    pub level_means: Vec<f64>,
    /// Mean of `ln m_k` over unflagged levels.
    pub log_average: f64,
    /// Standard error of `log_average` from the spread of `ln m_k` across
    /// levels; covers trial noise and environment fluctuations together.
    pub log_average_stderr: f64,
    /// Standard error of `log_average` from trial noise alone (delta method).
    pub log_average_mc_stderr: f64,
    /// `ln f(k) = sum_{j <= k} ln m_j` for `k = 0..=K`, unflagged levels only.
    pub ln_f: Vec<f64>,
    /// Least-squares slope of `ln f(k)` against `k`.
    pub slope: f64,
    /// Standard error of `slope`, treating the `ln m_k` as independent with
    /// the spread seen across levels.
    pub slope_stderr: f64,
    pub lambda: Option<f64>,
    /// `g(k) = lambda^-k f(k)`, `k = 0..=K`.
    pub g: Option<Vec<f64>>,
    /// `Delta(k) = g(k) - g(k-1)`, `k = 1..=K`.
    pub delta: Option<Vec<f64>>,
    /// Trial-noise standard error of each `Delta(k)` given `g(k-1)`.
    pub delta_stderr: Option<Vec<f64>>,
    pub censoring_rate: f64,
    pub flagged_levels: Vec<u32>,
}

/// Quenched means of the frozen counts at levels `1..=K` of one environment.
///
/// Intended for laws whose process vanishes on the right; otherwise trials
/// will hit the caps and the run fails on censoring.
pub fn frozen_mean_profile(envlaw: &EnvironmentLaw, opts: &FrozenOptions) -> Result<FrozenProfile> {
    if opts.levels == 0 || opts.trials_per_level < 2 {
        return Err(Error::InvalidArgument(
            "need at least one level and two trials per level".into(),
        ));
    }
    if let Some(l) = opts.lambda {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InfeasibleLambda {
                lambda: l,
                reason: "lambda must be positive and finite".into(),
            });
        }
    }
    let window = realize_window(envlaw, opts.env_seed, 0, opts.levels as i64 + 256)?;
    let levels: Vec<LevelStats> = (1..=opts.levels)
        .map(|k| {
            let level_seed = derive(opts.trial_seed, k as u64);
            let samples: Vec<FrozenSample> = (0..opts.trials_per_level)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive(level_seed, i as u64));
                    frozen_progeny_in(envlaw, &window, k as i64, &mut rng, opts.caps)
                })
                .collect();
            let values: Vec<f64> = samples
                .iter()
                .filter_map(|s| match s {
                    FrozenSample::Frozen(n) => Some(*n as f64),
                    FrozenSample::Censored => None,
                })
                .collect();
            let censored = samples.len() - values.len();
            let (mean, sd) = if values.is_empty() {
                (0.0, 0.0)
            } else {
                mean_sd(&values)
            };
            LevelStats {
                k,
                mean,
                stderr: sd / (values.len().max(1) as f64).sqrt(),
                used: values.len(),
                censored,
                flagged: mean <= 0.0,
            }
        })
        .collect();

    let total = opts.levels as usize * opts.trials_per_level;
    let censoring_rate = levels.iter().map(|l| l.censored).sum::<usize>() as f64 / total as f64;
    if censoring_rate > opts.max_censoring {
        return Err(Error::Censored {
            rate: censoring_rate,
            threshold: opts.max_censoring,
        });
    }

    let valid: Vec<&LevelStats> = levels.iter().filter(|l| !l.flagged).collect();
    let logs: Vec<f64> = valid.iter().map(|l| l.mean.ln()).collect();
    let (log_average, log_sd) = if logs.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_sd(&logs)
    };
    let nv = logs.len() as f64;
    let log_average_stderr = log_sd / nv.sqrt();
    let log_average_mc_stderr =
        valid.iter().map(|l| l.relative_stderr().powi(2)).sum::<f64>().sqrt() / nv;

    let mut ln_f = vec![0.0];
    for l in &logs {
        ln_f.push(ln_f.last().unwrap() + l);
    }
    let slope = ols_slope(&ln_f);
    let slope_stderr = log_sd * slope_weights(logs.len()).iter().map(|w| w * w).sum::<f64>().sqrt();

    let (g, delta, delta_stderr) = match opts.lambda {
        Some(lambda) => {
            let ln_l = lambda.ln();
            let g: Vec<f64> = ln_f
                .iter()
                .enumerate()
                .map(|(k, lf)| (lf - k as f64 * ln_l).exp())
                .collect();
            let delta = g.windows(2).map(|w| w[1] - w[0]).collect();
            let delta_se = g
                .iter()
                .zip(&valid)
                .map(|(g_prev, l)| g_prev * l.stderr / lambda)
                .collect();
            (Some(g), Some(delta), Some(delta_se))
        }
        None => (None, None, None),
    };

    Ok(FrozenProfile {
        level_means: levels.iter().map(|l| l.mean).collect(),
        flagged_levels: levels.iter().filter(|l| l.flagged).map(|l| l.k).collect(),
        levels,
        log_average,
        log_average_stderr,
        log_average_mc_stderr,
        ln_f,
        slope,
        slope_stderr,
        lambda: opts.lambda,
        g,
        delta,
        delta_stderr,
        censoring_rate,
    })
}

/// Least-squares slope of `ys[k]` against `k`.
fn ols_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return f64::NAN;
    }
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (num, den) = ys
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(num, den), (k, y)| {
            let dx = k as f64 - x_mean;
            (num + dx * (y - y_mean), den + dx * dx)
        });
    num / den
}

/// Coefficients `w_j` with `ols_slope(partial sums of x) = sum_j w_j x_j`
/// for `n` increments.
fn slope_weights(n: usize) -> Vec<f64> {
    let m = n as f64;
    let x_mean = m / 2.0;
    let den: f64 = (0..=n).map(|k| (k as f64 - x_mean).powi(2)).sum();
    // x_j enters every partial sum S_k with k >= j.
    let mut w = vec![0.0; n];
    let mut tail = 0.0;
    for k in (1..=n).rev() {
        tail += (k as f64 - x_mean) / den;
        w[k - 1] = tail;
    }
    w
}
