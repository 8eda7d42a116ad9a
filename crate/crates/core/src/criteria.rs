//! Survival regime decision: the lambda-criterion for local extinction, the
//! `lambda = 1` global-extinction case, and the Lyapunov test for global
//! survival once the process is known to vanish on one side.

use serde::Serialize;

use crate::envmodel::{validate_conditions, EnvironmentLaw, MomentTriple};
use crate::error::{Error, Result};
use crate::lyapunov::{top_lyapunov, LyapunovEstimate, LyapunovOptions, MatrixKind};

/// The closed set of `lambda > 0` with `mu_minus/lambda + mu_zero + mu_plus*lambda <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaInterval {
    Empty,
    Interval { lo: f64, hi: f64 },
}

impl LambdaInterval {
    pub fn is_empty(&self) -> bool {
        matches!(self, LambdaInterval::Empty)
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            LambdaInterval::Empty => None,
            LambdaInterval::Interval { lo, hi } => Some((lo, hi)),
        }
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.bounds()
            .is_some_and(|(lo, hi)| lo <= lambda && lambda <= hi)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        match (self.bounds(), other.bounds()) {
            (Some((a, b)), Some((c, d))) if a.max(c) <= b.min(d) => LambdaInterval::Interval {
                lo: a.max(c),
                hi: b.min(d),
            },
            _ => LambdaInterval::Empty,
        }
    }

    /// Geometric midpoint, a convenient interior point.
    pub fn geometric_mid(&self) -> Option<f64> {
        self.bounds().map(|(lo, hi)| (lo * hi).sqrt())
    }

    /// Image under `lambda -> 1/lambda`.
    pub fn inverted(&self) -> Self {
        match *self {
            LambdaInterval::Empty => LambdaInterval::Empty,
            LambdaInterval::Interval { lo, hi } => LambdaInterval::Interval {
                lo: hi.recip(),
                hi: lo.recip(),
            },
        }
    }
}

/// Feasible lambdas for one state, from the roots of
/// `mu_plus l^2 - (1 - mu_zero) l + mu_minus = 0`.
pub fn state_feasible_interval(m: &MomentTriple) -> Result<LambdaInterval> {
    if m.mu_minus <= 0.0 || m.mu_plus <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "feasible interval needs mu_minus > 0 and mu_plus > 0, got {m:?}"
        )));
    }
    let b = 1.0 - m.mu_zero;
    let disc = b * b - 4.0 * m.mu_minus * m.mu_plus;
    if b <= 0.0 || disc < 0.0 {
        return Ok(LambdaInterval::Empty);
    }
    // Larger root directly, smaller one through the product of roots.
    let hi = (b + disc.sqrt()) / (2.0 * m.mu_plus);
    let lo = m.mu_minus / (m.mu_plus * hi);
    Ok(LambdaInterval::Interval { lo, hi })
}

/// Intersection of the per-state intervals over the support of the law.
pub fn lambda_feasible_set(envlaw: &EnvironmentLaw) -> Result<LambdaInterval> {
    let mut acc: Option<LambdaInterval> = None;
    for m in envlaw.moments() {
        let iv = state_feasible_interval(m)?;
        acc = Some(match acc {
            None => iv,
            Some(prev) => prev.intersect(&iv),
        });
    }
    Ok(acc.unwrap_or(LambdaInterval::Empty))
}

/// `E ln(mu_minus / mu_plus)` under the state weights.
pub fn expected_log_drift(envlaw: &EnvironmentLaw) -> f64 {
    envlaw.expect(|m| (m.mu_minus / m.mu_plus).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    StrongLocalSurvival,
    GlobalSurvivalLocalExtinction,
    GlobalExtinction,
    Inconclusive,
}

impl Regime {
    pub fn survives(&self) -> bool {
        matches!(
            self,
            Regime::StrongLocalSurvival | Regime::GlobalSurvivalLocalExtinction
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Right,
    Left,
    Both,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Required criterion gap in standard errors.
    pub sigma_margin: f64,
    /// Absolute tolerance when testing `mu_minus + mu_zero + mu_plus <= 1`.
    pub unit_tol: f64,
    /// How far the feasible set must sit from 1 to pick a side.
    pub side_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            sigma_margin: 3.0,
            unit_tol: 1e-9,
            side_tol: 1e-9,
        }
    }
}

/// Lyapunov estimates available to the classifier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GammaEstimates {
    pub gamma1: Option<LyapunovEstimate>,
    pub gamma1_tilde: Option<LyapunovEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub vanishing_direction: Direction,
    pub lambda_set: LambdaInterval,
    /// `E ln(mu_minus / mu_plus)`.
    pub drift: f64,
    /// The estimate used for the side that vanishes, if any.
    pub gamma1: Option<LyapunovEstimate>,
    /// Criterion gap in units of the estimate's standard error (signed,
    /// positive means survival). `None` when no statistical test was made.
    pub margin: Option<f64>,
}

/// Where the decision procedure lands before any Lyapunov input is needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// Empty feasible set: local, hence strong local, survival.
    NoFeasibleLambda,
    /// `lambda = 1` is feasible for every state: global extinction.
    UnitFeasible,
    /// Feasible set inside `(1, inf)`: vanishing on the right, test with `A`.
    Right,
    /// Feasible set inside `(0, 1)`: vanishing on the left, test with `A_tilde`.
    Left,
    /// Feasible set touches 1 only within tolerance.
    Ambiguous,
}

impl Branch {
    pub fn required_family(&self) -> Option<MatrixKind> {
        match self {
            Branch::Right => Some(MatrixKind::A),
            Branch::Left => Some(MatrixKind::ATilde),
            _ => None,
        }
    }
}

/// Deterministic branch selection; the `lambda = 1` case is checked before
/// either side.
pub fn decision_branch(
    envlaw: &EnvironmentLaw,
    lambda_set: &LambdaInterval,
    thresholds: &Thresholds,
) -> Branch {
    let Some((lo, hi)) = lambda_set.bounds() else {
        return Branch::NoFeasibleLambda;
    };
    let unit = envlaw
        .moments()
        .iter()
        .all(|m| m.total() <= 1.0 + thresholds.unit_tol);
    if unit {
        Branch::UnitFeasible
    } else if lo > 1.0 + thresholds.side_tol {
        Branch::Right
    } else if hi < 1.0 - thresholds.side_tol {
        Branch::Left
    } else {
        Branch::Ambiguous
    }
}

/// Classifies the law. Conditions E, B and S are checked first.
pub fn classify(
    envlaw: &EnvironmentLaw,
    gammas: &GammaEstimates,
    thresholds: &Thresholds,
) -> Result<RegimeReport> {
    validate_conditions(envlaw).require_all()?;
    let lambda_set = lambda_feasible_set(envlaw)?;
    let drift = expected_log_drift(envlaw);
    let report = |regime, vanishing_direction, gamma1, margin| RegimeReport {
        regime,
        vanishing_direction,
        lambda_set,
        drift,
        gamma1,
        margin,
    };

    let (estimate, target, side) = match decision_branch(envlaw, &lambda_set, thresholds) {
        Branch::NoFeasibleLambda => {
            return Ok(report(Regime::StrongLocalSurvival, Direction::None, None, None))
        }
        Branch::UnitFeasible => {
            return Ok(report(Regime::GlobalExtinction, Direction::Both, None, None))
        }
        Branch::Ambiguous => {
            return Ok(report(Regime::Inconclusive, Direction::None, None, None))
        }
        Branch::Right => (
            gammas.gamma1.ok_or(Error::MissingEstimate("A"))?,
            drift,
            Direction::Right,
        ),
        Branch::Left => (
            gammas.gamma1_tilde.ok_or(Error::MissingEstimate("A_tilde"))?,
            -drift,
            Direction::Left,
        ),
    };

    let margin = sigma_distance(target - estimate.value, estimate.stderr);
    let regime = if margin > thresholds.sigma_margin {
        Regime::GlobalSurvivalLocalExtinction
    } else if margin < -thresholds.sigma_margin {
        Regime::GlobalExtinction
    } else {
        Regime::Inconclusive
    };
    Ok(report(regime, side, Some(estimate), Some(margin)))
}

/// Runs the Lyapunov estimator only for the family the decision needs.
pub fn classify_estimating(
    envlaw: &EnvironmentLaw,
    opts: &LyapunovOptions,
    thresholds: &Thresholds,
) -> Result<RegimeReport> {
    validate_conditions(envlaw).require_all()?;
    let lambda_set = lambda_feasible_set(envlaw)?;
    let mut gammas = GammaEstimates::default();
    match decision_branch(envlaw, &lambda_set, thresholds).required_family() {
        Some(kind @ MatrixKind::A) => gammas.gamma1 = Some(top_lyapunov(envlaw, kind, opts)?),
        Some(kind) => gammas.gamma1_tilde = Some(top_lyapunov(envlaw, kind, opts)?),
        None => {}
    }
    classify(envlaw, &gammas, thresholds)
}

/// `gap / stderr`, with a zero standard error mapping to `+-inf` (or 0 for a
/// zero gap).
pub fn sigma_distance(gap: f64, stderr: f64) -> f64 {
    if stderr > 0.0 {
        gap / stderr
    } else if gap == 0.0 {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmodel::{OffspringLaw, OffspringVector};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(a: u32, b: u32, c: u32) -> OffspringVector {
        OffspringVector::new(a, b, c)
    }

    /// A single-state law with prescribed moments and a branching atom.
    fn law_with_moments(mm: f64, m0: f64, mp: f64) -> OffspringLaw {
        // Atoms (4,0,0), (0,4,0), (0,0,4) plus a null atom; dividing by 4 is exact.
        let (a, b, c) = (mm / 4.0, m0 / 4.0, mp / 4.0);
        let mut atoms = vec![];
        for (p, vec) in [(a, v(4, 0, 0)), (b, v(0, 4, 0)), (c, v(0, 0, 4))] {
            if p > 0.0 {
                atoms.push((p, vec));
            }
        }
        let rest = 1.0 - a - b - c;
        if rest > 0.0 {
            atoms.push((rest, v(0, 0, 0)));
        }
        OffspringLaw::new(atoms).unwrap()
    }

    #[test]
    fn interval_examples() {
        let iv = state_feasible_interval(&MomentTriple::new(0.5, 0.0, 0.5)).unwrap();
        assert_eq!(iv, LambdaInterval::Interval { lo: 1.0, hi: 1.0 });

        let (lo, hi) = state_feasible_interval(&MomentTriple::new(1.2, 0.0, 0.05))
            .unwrap()
            .bounds()
            .unwrap();
        assert_relative_eq!(lo, (1.0 - 0.76f64.sqrt()) / 0.1, max_relative = 1e-12);
        assert_relative_eq!(hi, (1.0 + 0.76f64.sqrt()) / 0.1, max_relative = 1e-12);
        assert_relative_eq!(lo, 1.282_202, epsilon = 1e-6);
        assert_relative_eq!(hi, 18.717_798, epsilon = 1e-6);

        assert!(state_feasible_interval(&MomentTriple::new(0.5, 0.5, 0.5))
            .unwrap()
            .is_empty());
        assert!(state_feasible_interval(&MomentTriple::new(0.1, 1.2, 0.1))
            .unwrap()
            .is_empty());
        assert!(state_feasible_interval(&MomentTriple::new(0.0, 0.0, 0.5)).is_err());
    }

    #[test]
    fn feasible_set_examples() {
        let two = EnvironmentLaw::new(vec![
            (0.5, law_with_moments(1.4, 0.0, 0.05)),
            (0.5, law_with_moments(0.9, 0.0, 0.08)),
        ])
        .unwrap();
        let (lo, hi) = lambda_feasible_set(&two).unwrap().bounds().unwrap();
        assert_relative_eq!(lo, 1.514_72, epsilon = 1e-5);
        assert_relative_eq!(hi, 11.523_75, epsilon = 1e-5);

        let one = EnvironmentLaw::constant(law_with_moments(0.6, 0.0, 0.15));
        let (lo, hi) = lambda_feasible_set(&one).unwrap().bounds().unwrap();
        assert_relative_eq!(lo, 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(hi, 6.0, max_relative = 1e-12);

        let with_empty = EnvironmentLaw::new(vec![
            (0.5, law_with_moments(0.6, 0.0, 0.15)),
            (0.5, law_with_moments(0.5, 0.5, 0.5)),
        ])
        .unwrap();
        assert!(lambda_feasible_set(&with_empty).unwrap().is_empty());
    }

    #[test]
    fn drift_examples() {
        let one = EnvironmentLaw::constant(law_with_moments(1.2, 0.0, 0.05));
        assert_relative_eq!(expected_log_drift(&one), 24f64.ln(), max_relative = 1e-12);
        let sym = EnvironmentLaw::constant(law_with_moments(0.3, 0.1, 0.3));
        assert_eq!(expected_log_drift(&sym), 0.0);
        let two = EnvironmentLaw::new(vec![
            (0.5, law_with_moments(1.4, 0.0, 0.05)),
            (0.5, law_with_moments(0.9, 0.0, 0.08)),
        ])
        .unwrap();
        let expected = 0.5 * 28f64.ln() + 0.5 * 11.25f64.ln();
        assert_relative_eq!(expected_log_drift(&two), expected, max_relative = 1e-12);
        assert_relative_eq!(expected, 2.876_286, epsilon = 1e-6);
    }

    fn exact_gamma(value: f64, kind: MatrixKind) -> GammaEstimates {
        let est = LyapunovEstimate {
            value,
            stderr: 0.0,
            steps: 1,
            replicas: 1,
            matrix_kind: kind,
        };
        GammaEstimates {
            gamma1: Some(est),
            gamma1_tilde: Some(est),
        }
    }

    #[test]
    fn classify_closed_form_cases() {
        let t = Thresholds::default();
        let none = GammaEstimates::default();

        let r = classify(&EnvironmentLaw::constant(law_with_moments(0.5, 0.5, 0.5)), &none, &t)
            .unwrap();
        assert_eq!(r.regime, Regime::StrongLocalSurvival);
        assert_eq!(r.vanishing_direction, Direction::None);
        assert!(r.lambda_set.is_empty());

        let half = OffspringLaw::new(vec![(0.25, v(1, 0, 1)), (0.125, v(2, 0, 2)), (0.625, v(0, 0, 0))])
            .unwrap();
        let r = classify(&EnvironmentLaw::constant(half), &none, &t).unwrap();
        assert_eq!(r.regime, Regime::GlobalExtinction);
        assert_eq!(r.vanishing_direction, Direction::Both);
        assert_eq!(r.lambda_set, LambdaInterval::Interval { lo: 1.0, hi: 1.0 });

        let r = classify(&EnvironmentLaw::constant(law_with_moments(0.6, 0.0, 0.15)), &none, &t)
            .unwrap();
        assert_eq!(r.regime, Regime::GlobalExtinction);
        assert!(r.lambda_set.contains(1.0));
    }

    #[test]
    fn classify_right_vanishing() {
        let t = Thresholds::default();
        let env = EnvironmentLaw::constant(law_with_moments(1.2, 0.0, 0.05));
        assert!(matches!(
            classify(&env, &GammaEstimates::default(), &t),
            Err(Error::MissingEstimate("A"))
        ));
        let gamma = (10.0 + 76f64.sqrt()).ln();
        let r = classify(&env, &exact_gamma(gamma, MatrixKind::A), &t).unwrap();
        assert_eq!(r.regime, Regime::GlobalSurvivalLocalExtinction);
        assert_eq!(r.vanishing_direction, Direction::Right);
        assert_eq!(r.margin, Some(f64::INFINITY));

        let mut g = exact_gamma(3.5, MatrixKind::A);
        let r = classify(&env, &g, &t).unwrap();
        assert_eq!(r.regime, Regime::GlobalExtinction);
        assert_eq!(r.vanishing_direction, Direction::Right);

        // Gap of 0.01 at stderr 0.01 is one sigma: undecided.
        let mut est = g.gamma1.unwrap();
        est.value = 24f64.ln() - 0.01;
        est.stderr = 0.01;
        g.gamma1 = Some(est);
        let r = classify(&env, &g, &t).unwrap();
        assert_eq!(r.regime, Regime::Inconclusive);
        assert!(r.margin.unwrap().abs() < t.sigma_margin);
    }

    #[test]
    fn classify_rejects_condition_failures() {
        let env = EnvironmentLaw::constant(OffspringLaw::point_mass(v(1, 0, 0)));
        match classify(&env, &GammaEstimates::default(), &Thresholds::default()) {
            Err(Error::ConditionsViolated(r)) => assert!(!r.cond_e),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn branch_precedence_is_unit_first() {
        // Total mean exactly 1 with the double root at 1.
        let env = EnvironmentLaw::constant(law_with_moments(0.5, 0.0, 0.5));
        let t = Thresholds::default();
        let set = lambda_feasible_set(&env).unwrap();
        assert_eq!(decision_branch(&env, &set, &t), Branch::UnitFeasible);
        // A set ending a hair above 1 with the unit test passing still maps to
        // the unit branch, whatever the side tolerance says.
        let nudged = LambdaInterval::Interval { lo: 1.0 + 1e-12, hi: 1.0 + 1e-12 };
        assert_eq!(decision_branch(&env, &nudged, &t), Branch::UnitFeasible);
    }

    fn arb_moments() -> impl Strategy<Value = MomentTriple> {
        (0.01f64..1.5, 0.0f64..0.8, 0.01f64..1.5).prop_map(|(a, b, c)| MomentTriple::new(a, b, c))
    }

    proptest! {
        #[test]
        fn interval_is_sublevel_set(m in arb_moments(), t in 0.0f64..1.0, out in 1e-5f64..0.5) {
            match state_feasible_interval(&m).unwrap() {
                LambdaInterval::Empty => {
                    let best = m.mu_zero + 2.0 * (m.mu_minus * m.mu_plus).sqrt();
                    prop_assert!(best > 1.0 - 1e-12);
                }
                LambdaInterval::Interval { lo, hi } => {
                    let l = lo + t * (hi - lo);
                    prop_assert!(m.lambda_mean(l) <= 1.0 + 1e-9);
                    prop_assert!(m.lambda_mean(lo * (1.0 - out)) > 1.0);
                    prop_assert!(m.lambda_mean(hi * (1.0 + out)) > 1.0);
                    let vieta = m.mu_minus / m.mu_plus;
                    prop_assert!((lo * hi - vieta).abs() <= 1e-9 * vieta);
                }
            }
        }

        #[test]
        fn mirror_symmetry(a in arb_moments(), b in arb_moments(), w in 0.1f64..0.9) {
            let env = EnvironmentLaw::new(vec![
                (w, law_with_moments(a.mu_minus, a.mu_zero, a.mu_plus)),
                (1.0 - w, law_with_moments(b.mu_minus, b.mu_zero, b.mu_plus)),
            ]).unwrap();
            let refl = env.reflected();
            let s = lambda_feasible_set(&env).unwrap();
            let r = lambda_feasible_set(&refl).unwrap();
            match (s.bounds(), r.bounds()) {
                (None, None) => {}
                (Some((lo, hi)), Some((rlo, rhi))) => {
                    prop_assert!((rlo - 1.0 / hi).abs() <= 1e-9 * rlo);
                    prop_assert!((rhi - 1.0 / lo).abs() <= 1e-9 * rhi);
                }
                _ => prop_assert!(false, "emptiness differs: {:?} vs {:?}", s, r),
            }
            prop_assert!((expected_log_drift(&env) + expected_log_drift(&refl)).abs() <= 1e-12);

            let t = Thresholds::default();
            let g = exact_gamma(0.7, MatrixKind::A);
            if let (Ok(x), Ok(y)) = (classify(&env, &g, &t), classify(&refl, &g, &t)) {
                prop_assert_eq!(x.regime, y.regime);
                let swapped = match x.vanishing_direction {
                    Direction::Right => Direction::Left,
                    Direction::Left => Direction::Right,
                    d => d,
                };
                prop_assert_eq!(swapped, y.vanishing_direction);
            }
        }
    }
}
