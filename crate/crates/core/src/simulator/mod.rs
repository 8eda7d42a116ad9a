//! Quenched Monte Carlo for the branching random walk.
//!
//! Particles are stored as counts per site. One step splits the count at each
//! site multinomially over the atoms of the local offspring law, which has the
//! same law as letting every particle draw independently.

mod frozen;
mod supermartingale;

pub use frozen::{
    frozen_mean_profile, frozen_progeny_in, frozen_progeny_trial, FrozenCaps, FrozenOptions,
    FrozenProfile, FrozenSample, LevelStats,
};
pub use supermartingale::{log_h, supermartingale_trace, SupermartingaleTrace};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envmodel::{realize_window, EnvironmentLaw, EnvironmentWindow, OffspringLaw};
use crate::error::{Error, Result};
use crate::seed::derive;

/// Half-width of the environment stretch stored around the start site;
/// sites beyond it are realized on demand.
const WINDOW_HALF_WIDTH: i64 = 512;

/// Occupation numbers `eta_n` at time `n`. Zero counts are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Configuration {
    counts: BTreeMap<i64, u64>,
    total: u64,
    time: u64,
}

impl Configuration {
    pub fn single(site: i64) -> Self {
        Self::from_counts([(site, 1)]).expect("one particle")
    }

    /// Builds a configuration at time 0, dropping zero entries. `None` if
    /// the total overflows.
    pub fn from_counts(counts: impl IntoIterator<Item = (i64, u64)>) -> Option<Self> {
        let mut cfg = Self::default();
        for (x, c) in counts {
            cfg.add(x, c)?;
        }
        Some(cfg)
    }

    fn add(&mut self, site: i64, count: u64) -> Option<()> {
        if count == 0 {
            return Some(());
        }
        let slot = self.counts.entry(site).or_insert(0);
        *slot = slot.checked_add(count)?;
        self.total = self.total.checked_add(count)?;
        Some(())
    }

    /// Removes and returns the particles at `site`.
    pub fn take(&mut self, site: i64) -> u64 {
        let c = self.counts.remove(&site).unwrap_or(0);
        self.total -= c;
        c
    }

    pub fn count(&self, site: i64) -> u64 {
        self.counts.get(&site).copied().unwrap_or(0)
    }

    /// `Z_n`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Occupied sites in increasing order with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().map(|(&x, &c)| (x, c))
    }

    pub fn leftmost(&self) -> Option<i64> {
        self.counts.keys().next().copied()
    }

    pub fn rightmost(&self) -> Option<i64> {
        self.counts.keys().next_back().copied()
    }
}

/// Splits `count` particles over the atoms of `law`; returns the number of
/// particles choosing each atom.
pub fn split_count<R: Rng + ?Sized>(law: &OffspringLaw, count: u64, rng: &mut R) -> Vec<u64> {
    let atoms = law.atoms();
    let mut out = vec![0u64; atoms.len()];
    if count == 0 {
        return out;
    }
    if count == 1 || atoms.len() == 1 {
        if atoms.len() == 1 {
            out[0] = count;
            return out;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let idx = atoms
            .iter()
            .position(|(p, _)| {
                acc += p;
                u < acc
            })
            .unwrap_or(atoms.len() - 1);
        out[idx] = 1;
        return out;
    }
    let mut remaining = count;
    let mut mass_left = 1.0;
    for (i, (p, _)) in atoms.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == atoms.len() {
            out[i] = remaining;
            break;
        }
        let q = (p / mass_left).clamp(0.0, 1.0);
        let n = Binomial::new(remaining, q)
            .expect("probability clamped to [0, 1]")
            .sample(rng);
        out[i] = n;
        remaining -= n;
        mass_left -= p;
    }
    out
}

/// One generation. `Err(CountOverflow)` if some count or the total leaves
/// the 64-bit range.
pub fn step<R: Rng + ?Sized>(
    config: &Configuration,
    envlaw: &EnvironmentLaw,
    window: &EnvironmentWindow,
    rng: &mut R,
) -> std::result::Result<Configuration, CountOverflow> {
    let mut next = Configuration {
        counts: BTreeMap::new(),
        total: 0,
        time: config.time + 1,
    };
    for (x, c) in config.iter() {
        let law = envlaw.law(window.state(envlaw, x));
        let split = split_count(law, c, rng);
        for (&n, (_, v)) in split.iter().zip(law.atoms()) {
            if n == 0 {
                continue;
            }
            for (dx, k) in [(-1, v.minus), (0, v.zero), (1, v.plus)] {
                let add = n.checked_mul(k as u64).ok_or(CountOverflow)?;
                next.add(x + dx, add).ok_or(CountOverflow)?;
            }
        }
    }
    Ok(next)
}

/// A particle count left the 64-bit range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountOverflow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrialStatus {
    Extinct,
    CapReached,
    AliveAtHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    pub status: TrialStatus,
    pub extinction_time: Option<u64>,
    /// Last time the origin was occupied (time 0 counts when starting there).
    pub last_origin_visit: Option<u64>,
    pub peak_population: u64,
    /// Time at which the trial stopped.
    pub end_time: u64,
}

impl TrialOutcome {
    pub fn survived(&self) -> bool {
        self.status != TrialStatus::Extinct
    }

    /// Finite-horizon proxy for local survival: alive at the end and the
    /// origin occupied during the second half of the run.
    pub fn locally_alive(&self) -> bool {
        self.survived()
            && self
                .last_origin_visit
                .is_some_and(|t| 2 * t >= self.end_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialLimits {
    pub horizon: u64,
    pub cap: u64,
}

/// Runs one trial in a given environment with a given generator.
pub fn run_trial_in<R: Rng + ?Sized>(
    envlaw: &EnvironmentLaw,
    window: &EnvironmentWindow,
    rng: &mut R,
    limits: TrialLimits,
    start_site: i64,
) -> Result<TrialOutcome> {
    if limits.horizon == 0 || limits.cap == 0 {
        return Err(Error::InvalidArgument("horizon and cap must be >= 1".into()));
    }
    let mut config = Configuration::single(start_site);
    let mut last_origin_visit = (start_site == 0).then_some(0);
    let mut peak = 1u64;
    loop {
        let next = match step(&config, envlaw, window, rng) {
            Ok(c) => c,
            Err(CountOverflow) => {
                return Ok(TrialOutcome {
                    status: TrialStatus::CapReached,
                    extinction_time: None,
                    last_origin_visit,
                    peak_population: u64::MAX,
                    end_time: config.time + 1,
                })
            }
        };
        config = next;
        let t = config.time;
        if config.is_empty() {
            return Ok(TrialOutcome {
                status: TrialStatus::Extinct,
                extinction_time: Some(t),
                last_origin_visit,
                peak_population: peak,
                end_time: t,
            });
        }
        if config.count(0) > 0 {
            last_origin_visit = Some(t);
        }
        peak = peak.max(config.total());
        let status = if config.total() >= limits.cap {
            Some(TrialStatus::CapReached)
        } else if t >= limits.horizon {
            Some(TrialStatus::AliveAtHorizon)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(TrialOutcome {
                status,
                extinction_time: None,
                last_origin_visit,
                peak_population: peak,
                end_time: t,
            });
        }
    }
}

/// One trial from one particle at `start_site`, fully determined by the two
/// seeds.
pub fn run_trial(
    envlaw: &EnvironmentLaw,
    env_seed: u64,
    trial_seed: u64,
    limits: TrialLimits,
    start_site: i64,
) -> Result<TrialOutcome> {
    let window = realize_window(
        envlaw,
        env_seed,
        start_site - WINDOW_HALF_WIDTH,
        start_site + WINDOW_HALF_WIDTH,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    run_trial_in(envlaw, &window, &mut rng, limits, start_site)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// One environment for all trials.
    Quenched,
    /// A fresh environment per trial.
    Annealed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McOptions {
    pub trials: usize,
    pub limits: TrialLimits,
    pub mode: SamplingMode,
    pub env_seed: u64,
    pub trial_seed: u64,
    pub start_site: i64,
}

impl McOptions {
    pub fn new(trials: usize, horizon: u64, cap: u64) -> Self {
        Self {
            trials,
            limits: TrialLimits { horizon, cap },
            mode: SamplingMode::Quenched,
            env_seed: 0,
            trial_seed: 0,
            start_site: 0,
        }
    }

    pub fn seeds(mut self, env_seed: u64, trial_seed: u64) -> Self {
        self.env_seed = env_seed;
        self.trial_seed = trial_seed;
        self
    }
}

/// A frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub freq: f64,
    pub stderr: f64,
    pub hits: usize,
    pub trials: usize,
}

impl Proportion {
    pub fn from_hits(hits: usize, trials: usize) -> Self {
        let freq = hits as f64 / trials as f64;
        Self {
            freq,
            stderr: (freq * (1.0 - freq) / trials as f64).sqrt(),
            hits,
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    /// Non-extinct trials; cap hits and horizon survivors both count.
    pub global: Proportion,
    /// Trials with [`TrialOutcome::locally_alive`].
    pub local_proxy: Proportion,
    pub mode: SamplingMode,
    #[serde(skip)]
    pub outcomes: Vec<TrialOutcome>,
}

/// Global and local survival frequencies over independent trials.
pub fn survival_probabilities(envlaw: &EnvironmentLaw, opts: &McOptions) -> Result<SurvivalEstimate> {
    if opts.trials < 100 {
        return Err(Error::InvalidArgument(format!(
            "trials = {} < 100",
            opts.trials
        )));
    }
    let lo = opts.start_site - WINDOW_HALF_WIDTH;
    let hi = opts.start_site + WINDOW_HALF_WIDTH;
    let shared = realize_window(envlaw, opts.env_seed, lo, hi)?;
    let outcomes = (0..opts.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(opts.trial_seed, i as u64));
            match opts.mode {
                SamplingMode::Quenched => {
                    run_trial_in(envlaw, &shared, &mut rng, opts.limits, opts.start_site)
                }
                SamplingMode::Annealed => {
                    let w = realize_window(envlaw, derive(opts.env_seed, i as u64), lo, hi)?;
                    run_trial_in(envlaw, &w, &mut rng, opts.limits, opts.start_site)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let global = outcomes.iter().filter(|o| o.survived()).count();
    let local = outcomes.iter().filter(|o| o.locally_alive()).count();
    Ok(SurvivalEstimate {
        global: Proportion::from_hits(global, opts.trials),
        local_proxy: Proportion::from_hits(local, opts.trials),
        mode: opts.mode,
        outcomes,
    })
}

fn size_pgf(law: &OffspringLaw, s: f64) -> f64 {
    law.atoms()
        .iter()
        .map(|(p, v)| p * s.powi(v.size() as i32))
        .sum()
}

/// Extinction probability of the Galton-Watson process with offspring
/// numbers `|v|`: the smallest fixed point of the generating function,
/// reached by iterating from 0.
pub fn galton_watson_extinction(law: &OffspringLaw) -> f64 {
    let mut q = 0.0;
    for _ in 0..1_000_000 {
        let next = size_pgf(law, q);
        if (next - q).abs() < 1e-15 {
            return next;
        }
        q = next;
    }
    q
}

/// Probability that the same Galton-Watson process is still alive at
/// generation `n`: `1 - f^n(0)`.
pub fn galton_watson_alive_at(law: &OffspringLaw, n: u64) -> f64 {
    let mut q = 0.0;
    for _ in 0..n {
        let next = size_pgf(law, q);
        if next == q {
            break;
        }
        q = next;
    }
    1.0 - q
}
