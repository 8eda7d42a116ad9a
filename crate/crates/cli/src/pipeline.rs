//! Runs the stages a subcommand asks for and assembles the report.

use brwre_core::criteria::{
    classify, decision_branch, expected_log_drift, lambda_feasible_set, state_feasible_interval,
    GammaEstimates, LambdaInterval, Regime, Thresholds,
};
use brwre_core::lyapunov::{conjugacy_residual, second_exponent_via_det, top_lyapunov};
use brwre_core::seed::{derive, stream};
use brwre_core::simulator::{
    frozen_mean_profile, galton_watson_alive_at, supermartingale_trace, survival_probabilities,
    FrozenOptions, McOptions, TrialLimits,
};
use brwre_core::spectral::rho_sweep;
use brwre_core::{
    validate_conditions, EnvironmentLaw, LyapunovEstimate, LyapunovOptions, MatrixKind,
};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::report::{
    CrosscheckRow, FrozenSection, LambdaPoint, LyapunovSection, Relation, RunReport, Seeds,
    SurvivalSection,
};

/// Slack for exact identities evaluated in floating point, and for
/// statistical ones whose standard error is exactly zero.
const FP_TOL: f64 = 1e-9;

/// Frequency below which a run counts as extinct or locally extinct.
const EXTINCT_FREQ: f64 = 0.01;
/// Frequency above which a run counts as surviving.
const SURVIVING_FREQ: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    Classify,
    Lyapunov,
    Spectral,
    Simulate,
    Frozen,
    Crosscheck,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Classify => "classify",
            Stage::Lyapunov => "lyapunov",
            Stage::Spectral => "spectral",
            Stage::Simulate => "simulate",
            Stage::Frozen => "frozen",
            Stage::Crosscheck => "crosscheck",
            Stage::All => "all",
        }
    }

    fn everything(self) -> bool {
        matches!(self, Stage::Crosscheck | Stage::All)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    ConditionsViolated,
    Inconclusive,
}

pub fn seeds(root: u64) -> Seeds {
    Seeds {
        root,
        environment: derive(root, stream::ENVIRONMENT),
        lyapunov: derive(root, stream::LYAPUNOV),
        simulate: derive(root, stream::TRIALS),
        frozen: derive(root, stream::FROZEN),
        supermartingale: derive(root, stream::SUPERMARTINGALE),
    }
}

struct Run<'a> {
    config: &'a Config,
    env: EnvironmentLaw,
    seeds: Seeds,
    thresholds: Thresholds,
    lambda_set: LambdaInterval,
    notes: Vec<String>,
}

pub fn run(stage: Stage, config: &Config) -> Result<(RunReport, Status)> {
    let env = config.environment_law()?;
    let seeds = seeds(config.seed);
    let condition_report = validate_conditions(&env);
    let mut report = RunReport {
        tool: "brwre",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: stage.name(),
        config_hash: config.hash(),
        seeds,
        config: config.clone(),
        moments: env.moments().to_vec(),
        condition_report: condition_report.clone(),
        lambda_set: None,
        regime_report: None,
        lyapunov: None,
        rho_series: None,
        survival: None,
        frozen: None,
        supermartingale: None,
        crosscheck: None,
        notes: vec![],
    };
    if !condition_report.all_hold() {
        return Ok((report, Status::ConditionsViolated));
    }

    let lambda_set = lambda_feasible_set(&env)?;
    report.lambda_set = Some(lambda_set);
    let mut run = Run {
        config,
        env,
        seeds,
        thresholds: Thresholds {
            sigma_margin: config.thresholds.sigma_margin,
            ..Thresholds::default()
        },
        lambda_set,
        notes: vec![],
    };

    let all = stage.everything();
    if all || stage == Stage::Lyapunov {
        report.lyapunov = Some(run.lyapunov_section()?);
    }
    if all || stage == Stage::Classify {
        let gammas = match &report.lyapunov {
            Some(l) => GammaEstimates {
                gamma1: l.gamma1,
                gamma1_tilde: l.gamma1_tilde,
            },
            None => run.required_gammas()?,
        };
        report.regime_report = Some(classify(&run.env, &gammas, &run.thresholds)?);
    }
    if all || stage == Stage::Spectral {
        let s = &config.spectral;
        report.rho_series = Some(rho_sweep(&run.env, seeds.environment, &s.n_values, s.tol)?);
    }
    if all || stage == Stage::Simulate {
        report.survival = Some(run.survival_section()?);
    }
    if all || stage == Stage::Frozen {
        // A dedicated run reports failures; a full run records them and goes on.
        match run.frozen_section() {
            Ok(f) => report.frozen = f,
            Err(e) if all => run.notes.push(format!("frozen profile skipped: {e}")),
            Err(e) => return Err(e),
        }
        match run.supermartingale() {
            Ok(t) => report.supermartingale = t,
            Err(e @ CliError::Config { .. }) => return Err(e),
            Err(e) if all => run.notes.push(format!("supermartingale trace skipped: {e}")),
            Err(e) => return Err(e),
        }
    }
    if all {
        report.crosscheck = Some(run.crosscheck(&report)?);
    }
    report.notes = run.notes;

    let inconclusive = report
        .regime_report
        .as_ref()
        .is_some_and(|r| r.regime == Regime::Inconclusive);
    let status = if inconclusive {
        Status::Inconclusive
    } else {
        Status::Ok
    };
    Ok((report, status))
}

/// Largest possible gap between the finite-length exponent estimates of `A`
/// and of `lambda A_lambda` over the same matrix sequence: the two products
/// are conjugate by `B`, so their max-abs norms differ by at most a factor
/// `2 cond(B)` at both ends of the measured stretch.
fn conjugation_bias(lambda: f64, steps: u64) -> f64 {
    let cond = (1.0 + lambda) * (2.0 / lambda).max(1.0);
    2.0 * (2.0 * cond).ln() / steps as f64
}

fn widen(row: &mut CrosscheckRow, extra: f64) {
    row.tolerance += extra;
    row.pass = (row.lhs - row.rhs).abs() <= row.tolerance;
}

impl Run<'_> {
    fn lyapunov_options(&self, key: u64) -> LyapunovOptions {
        LyapunovOptions {
            steps: self.config.lyapunov.steps,
            replicas: self.config.lyapunov.replicas,
            seed: derive(self.seeds.lyapunov, key),
            warmup: None,
        }
    }

    fn estimate(&self, env: &EnvironmentLaw, kind: MatrixKind, key: u64) -> Result<LyapunovEstimate> {
        Ok(top_lyapunov(env, kind, &self.lyapunov_options(key))?)
    }

    /// Only the exponent the decision procedure needs, with the same seed the
    /// full Lyapunov stage uses.
    fn required_gammas(&self) -> Result<GammaEstimates> {
        let mut g = GammaEstimates::default();
        match decision_branch(&self.env, &self.lambda_set, &self.thresholds).required_family() {
            Some(MatrixKind::A) => g.gamma1 = Some(self.estimate(&self.env, MatrixKind::A, 0)?),
            Some(MatrixKind::ATilde) => {
                g.gamma1_tilde = Some(self.estimate(&self.env, MatrixKind::ATilde, 1)?)
            }
            _ => {}
        }
        Ok(g)
    }

    /// Two interior points of the feasible set, or its only point.
    fn lambda_points(&self) -> Vec<f64> {
        match self.lambda_set.bounds() {
            None => vec![],
            Some((lo, hi)) if lo == hi => vec![lo],
            Some((lo, hi)) => vec![lo.powf(0.75) * hi.powf(0.25), lo.powf(0.25) * hi.powf(0.75)],
        }
    }

    fn lyapunov_section(&self) -> Result<LyapunovSection> {
        let gamma1 = Some(self.estimate(&self.env, MatrixKind::A, 0)?);
        let gamma1_tilde = Some(self.estimate(&self.env, MatrixKind::ATilde, 1)?);
        let lambda_points = self
            .lambda_points()
            .into_iter()
            .enumerate()
            .map(|(i, lambda)| {
                let est = self.estimate(&self.env, MatrixKind::ALambda { lambda }, 2 + i as u64)?;
                Ok(LambdaPoint {
                    lambda,
                    gamma1_lambda: est,
                    gamma2_lambda: second_exponent_via_det(&self.env, lambda, est.value),
                })
            })
            .collect::<Result<_>>()?;
        Ok(LyapunovSection {
            drift: expected_log_drift(&self.env),
            gamma1,
            gamma1_tilde,
            lambda_points,
        })
    }

    fn survival_section(&self) -> Result<SurvivalSection> {
        let s = &self.config.simulate;
        let opts = McOptions {
            trials: s.trials,
            limits: TrialLimits {
                horizon: s.horizon,
                cap: s.cap,
            },
            mode: s.mode,
            env_seed: self.seeds.environment,
            trial_seed: self.seeds.simulate,
            start_site: 0,
        };
        let estimate = survival_probabilities(&self.env, &opts)?;
        let galton_watson = (self.env.len() == 1)
            .then(|| galton_watson_alive_at(self.env.law(0), s.horizon));
        Ok(SurvivalSection {
            estimate,
            galton_watson,
        })
    }

    /// The law on which freezing terminates, whether it is mirrored, and the
    /// weight for its `g` series. `None` without a feasible `lambda`.
    fn frozen_law(&self) -> Option<(EnvironmentLaw, bool, f64)> {
        let (lo, hi) = self.lambda_set.bounds()?;
        let (env, mirrored, lo, hi) = if hi >= 1.0 {
            (self.env.clone(), false, lo, hi)
        } else {
            (self.env.reflected(), true, 1.0 / hi, 1.0 / lo)
        };
        Some((env, mirrored, (lo.max(1.0) * hi).sqrt()))
    }

    fn frozen_section(&mut self) -> Result<Option<FrozenSection>> {
        let Some((env, mirrored, lambda)) = self.frozen_law() else {
            self.notes
                .push("frozen profile skipped: empty feasible set, no side vanishes".into());
            return Ok(None);
        };
        let f = &self.config.frozen;
        let mut opts = FrozenOptions::new(f.levels, f.trials_per_level);
        opts.env_seed = self.seeds.environment;
        opts.trial_seed = self.seeds.frozen;
        opts.lambda = Some(lambda);
        let profile = frozen_mean_profile(&env, &opts)?;
        if !profile.flagged_levels.is_empty() {
            self.notes.push(format!(
                "frozen levels {:?} had zero sample mean and were excluded; rerun with more trials per level",
                profile.flagged_levels
            ));
        }
        Ok(Some(FrozenSection { mirrored, profile }))
    }

    fn supermartingale(&mut self) -> Result<Option<brwre_core::simulator::SupermartingaleTrace>> {
        let c = &self.config.supermartingale;
        let lambda = match (c.lambda, self.lambda_set.geometric_mid()) {
            (Some(l), _) => l,
            (None, Some(l)) => l,
            (None, None) => {
                self.notes
                    .push("supermartingale trace skipped: empty feasible set".into());
                return Ok(None);
            }
        };
        let trace = supermartingale_trace(
            &self.env,
            self.seeds.environment,
            lambda,
            c.trials,
            c.horizon,
            self.seeds.supermartingale,
        )
        .map_err(|e| match e {
            brwre_core::Error::InfeasibleLambda { .. } => {
                CliError::config("supermartingale.lambda", e.to_string())
            }
            e => e.into(),
        })?;
        Ok(Some(trace))
    }

    fn statistical(&self, identity: String, lhs: f64, rhs: f64, stderr: f64) -> CrosscheckRow {
        let mut row = CrosscheckRow::statistical(identity, lhs, rhs, stderr, self.thresholds.sigma_margin);
        row.tolerance += FP_TOL;
        row.pass = (lhs - rhs).abs() <= row.tolerance;
        row
    }

    fn crosscheck(&mut self, report: &RunReport) -> Result<Vec<CrosscheckRow>> {
        let k = self.thresholds.sigma_margin;
        let mut rows = vec![];

        // Conjugacy at the common feasible point, or per state at its own.
        let common = self.lambda_set.geometric_mid();
        let mut worst: Option<f64> = None;
        for m in self.env.moments() {
            let lambda = match common {
                Some(l) => Some(l),
                None => state_feasible_interval(m)?.geometric_mid(),
            };
            if let Some(l) = lambda {
                let r = conjugacy_residual(m, l)?;
                worst = Some(worst.map_or(r, |w: f64| w.max(r)));
            }
        }
        match worst {
            Some(w) => rows.push(CrosscheckRow::new("conjugacy".into(), Relation::Le, w, 0.0, FP_TOL)),
            None => self.notes.push("conjugacy row skipped: no state has a feasible lambda".into()),
        }

        if let Some(ly) = &report.lyapunov {
            let g1 = ly.gamma1.expect("lyapunov section estimates gamma1");
            let steps = self.config.lyapunov.steps;
            for p in &ly.lambda_points {
                let g = p.gamma1_lambda;
                let mut row = self.statistical(
                    format!("sum_rule(lambda={:.6})", p.lambda),
                    g1.value,
                    g.value + p.lambda.ln(),
                    g1.combined_stderr(&g),
                );
                widen(&mut row, conjugation_bias(p.lambda, steps));
                rows.push(row);
            }
            if let [a, b] = ly.lambda_points.as_slice() {
                let mut row = self.statistical(
                    "lambda_independence".into(),
                    a.lambda.ln() + a.gamma2_lambda,
                    b.lambda.ln() + b.gamma2_lambda,
                    a.gamma1_lambda.combined_stderr(&b.gamma1_lambda),
                );
                widen(&mut row, conjugation_bias(a.lambda, steps) + conjugation_bias(b.lambda, steps));
                rows.push(row);
            }
        }

        if let (Some(fz), Some((env, _, lambda))) = (&report.frozen, self.frozen_law()) {
            let p = &fz.profile;
            // ln lambda + gamma2_lambda on the law that was frozen.
            let g = self.estimate(&env, MatrixKind::ALambda { lambda }, 10)?;
            let target = lambda.ln() + second_exponent_via_det(&env, lambda, g.value);
            rows.push(self.statistical(
                "slope_law(log_average)".into(),
                p.log_average,
                target,
                p.log_average_stderr.hypot(g.stderr),
            ));
            rows.push(self.statistical(
                "slope_law(regression)".into(),
                p.slope,
                target,
                p.slope_stderr.hypot(g.stderr),
            ));
            let (_, hi) = if fz.mirrored {
                self.lambda_set.inverted().bounds().expect("nonempty")
            } else {
                self.lambda_set.bounds().expect("nonempty")
            };
            let ratio = p
                .levels
                .iter()
                .filter(|l| !l.flagged)
                .map(|l| l.mean / (hi * (1.0 + k * l.relative_stderr())))
                .fold(0.0, f64::max);
            rows.push(CrosscheckRow::new("frozen_mean_bound".into(), Relation::Le, ratio, 1.0, 0.0));
            if let (Some(d), Some(se)) = (&p.delta, &p.delta_stderr) {
                let excess = d
                    .iter()
                    .zip(se)
                    .map(|(d, s)| d - k * s)
                    .fold(f64::NEG_INFINITY, f64::max);
                rows.push(CrosscheckRow::new("delta_nonpositive".into(), Relation::Le, excess, 0.0, FP_TOL));
            }
        }

        if let Some(tr) = &report.supermartingale {
            // Union bound over the steps: a Gaussian tail beyond
            // sqrt(k^2 + 2 ln n) is at most the k-sigma tail divided by n.
            let n = tr.mean_increment.len().max(1) as f64;
            rows.push(CrosscheckRow::new(
                format!("supermartingale(lambda={:.6})", tr.lambda),
                Relation::Le,
                tr.max_increment_sigma(),
                (k * k + 2.0 * n.ln()).sqrt(),
                0.0,
            ));
        }

        if let Some(sv) = &report.survival {
            let est = &sv.estimate;
            if let Some(gw) = sv.galton_watson {
                rows.push(self.statistical(
                    "galton_watson_survival".into(),
                    est.global.freq,
                    gw,
                    est.global.stderr,
                ));
            }
            if let Some(r) = &report.regime_report {
                let global = est.global.freq;
                let local = est.local_proxy.freq;
                match r.regime {
                    Regime::StrongLocalSurvival => {
                        rows.push(CrosscheckRow::new("survival_concordance".into(), Relation::Ge, global, SURVIVING_FREQ, 0.0));
                        rows.push(self.statistical(
                            "local_equals_global".into(),
                            local,
                            global,
                            est.global.stderr.hypot(est.local_proxy.stderr),
                        ));
                    }
                    Regime::GlobalSurvivalLocalExtinction => {
                        rows.push(CrosscheckRow::new("survival_concordance".into(), Relation::Ge, global, SURVIVING_FREQ, 0.0));
                        rows.push(CrosscheckRow::new("local_extinction".into(), Relation::Le, local, EXTINCT_FREQ, 0.0));
                    }
                    Regime::GlobalExtinction => {
                        rows.push(CrosscheckRow::new("survival_concordance".into(), Relation::Le, global, EXTINCT_FREQ, 0.0));
                    }
                    Regime::Inconclusive => {}
                }
            }
        }

        if let (Some(rho), Some(r)) = (&report.rho_series, &report.regime_report) {
            let max = rho.iter().map(|p| p.rho).fold(0.0, f64::max);
            match r.regime {
                Regime::StrongLocalSurvival => {
                    rows.push(CrosscheckRow::new("spectral_concordance".into(), Relation::Ge, max, 1.0, 0.0))
                }
                Regime::Inconclusive => {}
                _ => rows.push(CrosscheckRow::new("spectral_concordance".into(), Relation::Le, max, 1.0, FP_TOL)),
            }
        }
        Ok(rows)
    }
}
