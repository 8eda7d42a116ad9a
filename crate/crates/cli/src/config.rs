//! Experiment configuration: a JSON file with the environment law and the
//! options of every stage. Every section but `environment` is optional.

use std::path::Path;

use brwre_core::simulator::SamplingMode;
use brwre_core::{EnvironmentLaw, OffspringLaw, OffspringVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Tolerance on `sum p = 1` and `sum weight = 1`, matching the core crate.
const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub frozen: FrozenConfig,
    #[serde(default)]
    pub supermartingale: SupermartingaleConfig,
    #[serde(default)]
    pub thresholds: ThresholdsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub states: Vec<StateConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub weight: f64,
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub p: f64,
    /// `[v_minus, v_zero, v_plus]`.
    pub v: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub steps: u64,
    pub replicas: usize,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            steps: 100_000,
            replicas: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub n_values: Vec<u64>,
    pub tol: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            n_values: vec![1, 2, 4, 8, 16, 32, 64, 128],
            tol: brwre_core::spectral::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub trials: usize,
    pub horizon: u64,
    pub cap: u64,
    pub mode: SamplingMode,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            horizon: 400,
            cap: 1_000_000,
            mode: SamplingMode::Quenched,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrozenConfig {
    pub levels: u32,
    pub trials_per_level: usize,
}

impl Default for FrozenConfig {
    fn default() -> Self {
        Self {
            levels: 20,
            trials_per_level: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupermartingaleConfig {
    /// Weight of `h`; `None` picks the geometric midpoint of the feasible set.
    pub lambda: Option<f64>,
    pub trials: usize,
    pub horizon: u64,
}

impl Default for SupermartingaleConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            trials: 10_000,
            horizon: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdsConfig {
    pub sigma_margin: f64,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        Self { sigma_margin: 3.0 }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = match e.path().to_string() {
                p if p == "." => "<root>".to_string(),
                p => p,
            };
            CliError::config(path, e.into_inner().to_string())
        })?;
        config.check()?;
        Ok(config)
    }

    /// Range checks that the types alone do not express.
    fn check(&self) -> Result<()> {
        let states = &self.environment.states;
        if states.is_empty() {
            return Err(CliError::config("environment.states", "at least one state is required"));
        }
        for (i, s) in states.iter().enumerate() {
            let at = format!("environment.states[{i}]");
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(CliError::config(format!("{at}.weight"), "must be positive"));
            }
            if s.atoms.is_empty() {
                return Err(CliError::config(format!("{at}.atoms"), "at least one atom is required"));
            }
            for (j, a) in s.atoms.iter().enumerate() {
                if !(a.p.is_finite() && a.p > 0.0 && a.p <= 1.0) {
                    return Err(CliError::config(
                        format!("{at}.atoms[{j}].p"),
                        format!("{} is not in (0, 1]", a.p),
                    ));
                }
                if let Some(k) = s.atoms[..j].iter().position(|b| b.v == a.v) {
                    return Err(CliError::config(
                        format!("{at}.atoms[{j}].v"),
                        format!("duplicates atoms[{k}].v"),
                    ));
                }
            }
            let total: f64 = s.atoms.iter().map(|a| a.p).sum();
            if (total - 1.0).abs() > SUM_TOL {
                return Err(CliError::config(
                    format!("{at}.atoms"),
                    format!("probabilities sum to {total}, not 1"),
                ));
            }
        }
        let total: f64 = states.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(CliError::config(
                "environment.states",
                format!("weights sum to {total}, not 1"),
            ));
        }

        require(self.lyapunov.steps >= 1_000, "lyapunov.steps", "must be at least 1000")?;
        require(self.lyapunov.replicas >= 2, "lyapunov.replicas", "must be at least 2")?;

        let n = &self.spectral.n_values;
        require(!n.is_empty(), "spectral.n_values", "must not be empty")?;
        if let Some(i) = (1..n.len()).find(|&i| n[i] <= n[i - 1]) {
            return Err(CliError::config(
                format!("spectral.n_values[{i}]"),
                "values must be strictly increasing",
            ));
        }
        require(n[0] > 0, "spectral.n_values[0]", POSITIVE)?;
        let tol = self.spectral.tol;
        require(tol.is_finite() && tol > 0.0, "spectral.tol", POSITIVE)?;

        require(self.simulate.trials >= 100, "simulate.trials", "must be at least 100")?;
        require(self.simulate.horizon > 0, "simulate.horizon", POSITIVE)?;
        require(self.simulate.cap > 0, "simulate.cap", POSITIVE)?;

        require(self.frozen.levels > 0, "frozen.levels", POSITIVE)?;
        require(self.frozen.trials_per_level >= 2, "frozen.trials_per_level", "must be at least 2")?;

        if let Some(l) = self.supermartingale.lambda {
            require(l.is_finite() && l > 0.0, "supermartingale.lambda", POSITIVE)?;
        }
        require(self.supermartingale.trials >= 2, "supermartingale.trials", "must be at least 2")?;
        require(self.supermartingale.horizon > 0, "supermartingale.horizon", POSITIVE)?;

        let s = self.thresholds.sigma_margin;
        require(s.is_finite() && s > 0.0, "thresholds.sigma_margin", POSITIVE)?;
        Ok(())
    }

    pub fn environment_law(&self) -> Result<EnvironmentLaw> {
        let states = self
            .environment
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let atoms = s
                    .atoms
                    .iter()
                    .map(|a| (a.p, OffspringVector::from(a.v)))
                    .collect();
                OffspringLaw::new(atoms)
                    .map(|law| (s.weight, law))
                    .map_err(|e| CliError::config(format!("environment.states[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        EnvironmentLaw::new(states).map_err(|e| CliError::config("environment", e.to_string()))
    }

    /// SHA-256 of the compact JSON of the config with defaults filled in.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&canonical))
    }
}

const POSITIVE: &str = "must be positive";

fn require(ok: bool, path: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(path, message))
    }
}
