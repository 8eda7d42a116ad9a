//! Offspring laws, the i.i.d. environment law, and quenched realizations.
//!
//! An environment assigns to every site of the integer line one offspring law
//! drawn from a finite mixture. Realizations are never stored in full: the
//! state at a site is a pure function of `(seed, site)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::{mix64, unit_from_bits, zigzag};

/// Tolerance on probability normalisation at construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Offspring placed at `x - 1`, `x` and `x + 1` by one particle at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct OffspringVector {
    pub minus: u32,
    pub zero: u32,
    pub plus: u32,
}

impl OffspringVector {
    pub const fn new(minus: u32, zero: u32, plus: u32) -> Self {
        Self { minus, zero, plus }
    }

    /// Total number of offspring `|v|`.
    pub fn size(&self) -> u64 {
        self.minus as u64 + self.zero as u64 + self.plus as u64
    }

    /// Mirror image under `x -> -x`.
    pub fn reflected(&self) -> Self {
        Self::new(self.plus, self.zero, self.minus)
    }
}

impl From<[u32; 3]> for OffspringVector {
    fn from(v: [u32; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Mean offspring sent left, kept in place and sent right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentTriple {
    pub mu_minus: f64,
    pub mu_zero: f64,
    pub mu_plus: f64,
}

impl MomentTriple {
    pub const fn new(mu_minus: f64, mu_zero: f64, mu_plus: f64) -> Self {
        Self {
            mu_minus,
            mu_zero,
            mu_plus,
        }
    }

    pub fn total(&self) -> f64 {
        self.mu_minus + self.mu_zero + self.mu_plus
    }

    pub fn reflected(&self) -> Self {
        Self::new(self.mu_plus, self.mu_zero, self.mu_minus)
    }

    /// `mu_minus / lambda + mu_zero + mu_plus * lambda`, the one-step mean of
    /// the exponential weight `lambda^x`.
    pub fn lambda_mean(&self, lambda: f64) -> f64 {
        self.mu_minus / lambda + self.mu_zero + self.mu_plus * lambda
    }
}

/// A finite-support probability law on offspring vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringLaw {
    atoms: Vec<(f64, OffspringVector)>,
}

impl OffspringLaw {
    /// Validates and builds a law. Probabilities must lie in `(0, 1]` and sum
    /// to one within [`NORMALIZATION_TOL`]; vectors must be pairwise distinct.
    pub fn new(atoms: Vec<(f64, OffspringVector)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidLaw("no atoms".into()));
        }
        for (i, &(p, _)) in atoms.iter().enumerate() {
            if !p.is_finite() || p <= 0.0 || p > 1.0 {
                return Err(Error::InvalidLaw(format!(
                    "atom {i} has probability {p}, expected a value in (0, 1]"
                )));
            }
        }
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if atoms[i].1 == atoms[j].1 {
                    return Err(Error::InvalidLaw(format!(
                        "atoms {i} and {j} carry the same vector {:?}",
                        atoms[i].1
                    )));
                }
            }
        }
        let total: f64 = atoms.iter().map(|(p, _)| p).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidLaw(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let atoms = atoms.into_iter().map(|(p, v)| (p / total, v)).collect();
        Ok(Self { atoms })
    }

    /// The law putting mass one on `v`.
    pub fn point_mass(v: OffspringVector) -> Self {
        Self {
            atoms: vec![(1.0, v)],
        }
    }

    pub fn atoms(&self) -> &[(f64, OffspringVector)] {
        &self.atoms
    }

    pub fn moments(&self) -> MomentTriple {
        moments(self)
    }

    /// Probability of the event `{v : pred(v)}`.
    pub fn mass_where(&self, pred: impl Fn(&OffspringVector) -> bool) -> f64 {
        self.atoms
            .iter()
            .filter(|(_, v)| pred(v))
            .map(|(p, _)| p)
            .sum()
    }

    pub fn max_size(&self) -> u64 {
        self.atoms.iter().map(|(_, v)| v.size()).max().unwrap_or(0)
    }

    pub fn reflected(&self) -> Self {
        Self {
            atoms: self.atoms.iter().map(|&(p, v)| (p, v.reflected())).collect(),
        }
    }
}

/// Probability-weighted sums of the three offspring components.
pub fn moments(law: &OffspringLaw) -> MomentTriple {
    let mut m = MomentTriple::new(0.0, 0.0, 0.0);
    for &(p, v) in law.atoms() {
        m.mu_minus += p * v.minus as f64;
        m.mu_zero += p * v.zero as f64;
        m.mu_plus += p * v.plus as f64;
    }
    m
}

/// One-site marginal of the environment: a finite mixture of offspring laws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvironmentLaw {
    states: Vec<(f64, OffspringLaw)>,
    #[serde(skip)]
    cumulative: Vec<f64>,
    #[serde(skip)]
    moments: Vec<MomentTriple>,
}

impl EnvironmentLaw {
    pub fn new(states: Vec<(f64, OffspringLaw)>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidEnvironment("no states".into()));
        }
        for (i, &(w, _)) in states.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 || w > 1.0 {
                return Err(Error::InvalidEnvironment(format!(
                    "state {i} has weight {w}, expected a value in (0, 1]"
                )));
            }
        }
        let total: f64 = states.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidEnvironment(format!(
                "state weights sum to {total}, not 1"
            )));
        }
        let states: Vec<_> = states.into_iter().map(|(w, l)| (w / total, l)).collect();
        let mut acc = 0.0;
        let cumulative = states
            .iter()
            .map(|(w, _)| {
                acc += w;
                acc
            })
            .collect();
        let moments = states.iter().map(|(_, l)| l.moments()).collect();
        Ok(Self {
            states,
            cumulative,
            moments,
        })
    }

    /// A deterministic environment: every site carries `law`.
    pub fn constant(law: OffspringLaw) -> Self {
        Self::new(vec![(1.0, law)]).expect("single state with weight one is valid")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[(f64, OffspringLaw)] {
        &self.states
    }

    pub fn weight(&self, state: usize) -> f64 {
        self.states[state].0
    }

    pub fn law(&self, state: usize) -> &OffspringLaw {
        &self.states[state].1
    }

    /// Moment triple of each state, in state order.
    pub fn moments(&self) -> &[MomentTriple] {
        &self.moments
    }

    /// `E f(mu)` under the state weights.
    pub fn expect(&self, f: impl Fn(&MomentTriple) -> f64) -> f64 {
        self.states
            .iter()
            .zip(&self.moments)
            .map(|((w, _), m)| w * f(m))
            .sum()
    }

    /// Weight-table lookup of a uniform in `[0, 1)`.
    pub fn state_for_uniform(&self, u: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.states.len() - 1)
    }

    /// The law with every offspring vector mirrored (`minus <-> plus`).
    pub fn reflected(&self) -> Self {
        let states = self
            .states
            .iter()
            .map(|(w, l)| (*w, l.reflected()))
            .collect();
        Self::new(states).expect("reflection preserves validity")
    }
}

/// The standing condition a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    E,
    B,
    S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub condition: Condition,
    /// `None` for conditions on the law as a whole (B).
    pub state: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub cond_e: bool,
    pub cond_b: bool,
    pub cond_s: bool,
    pub violations: Vec<Violation>,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.cond_e && self.cond_b && self.cond_s
    }

    pub fn summary(&self) -> String {
        if self.violations.is_empty() {
            return "none".into();
        }
        self.violations
            .iter()
            .map(|v| match v.state {
                Some(s) => format!("{:?} (state {s}): {}", v.condition, v.reason),
                None => format!("{:?}: {}", v.condition, v.reason),
            })
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// `Err(ConditionsViolated)` unless E, B and S all hold.
    pub fn require_all(self) -> Result<Self> {
        if self.all_hold() {
            Ok(self)
        } else {
            Err(Error::ConditionsViolated(self))
        }
    }
}

/// Checks ellipticity (E), branching (B) and the integrability condition (S).
///
/// For a finite mixture, S reduces to every state giving positive mass to
/// `{v_plus >= 1}` and to `{v_minus >= 1}`.
pub fn validate_conditions(envlaw: &EnvironmentLaw) -> ConditionReport {
    let mut violations = Vec::new();
    for (i, ((_, law), m)) in envlaw.states().iter().zip(envlaw.moments()).enumerate() {
        if m.mu_minus <= 0.0 {
            violations.push(Violation {
                condition: Condition::E,
                state: Some(i),
                reason: "mu_minus = 0".into(),
            });
        }
        if m.mu_plus <= 0.0 {
            violations.push(Violation {
                condition: Condition::E,
                state: Some(i),
                reason: "mu_plus = 0".into(),
            });
        }
        if law.mass_where(|v| v.plus >= 1) <= 0.0 {
            violations.push(Violation {
                condition: Condition::S,
                state: Some(i),
                reason: "no atom with v_plus >= 1".into(),
            });
        }
        if law.mass_where(|v| v.minus >= 1) <= 0.0 {
            violations.push(Violation {
                condition: Condition::S,
                state: Some(i),
                reason: "no atom with v_minus >= 1".into(),
            });
        }
    }
    let cond_b = envlaw.states().iter().any(|(_, l)| l.max_size() >= 2);
    if !cond_b {
        violations.push(Violation {
            condition: Condition::B,
            state: None,
            reason: "no atom with |v| >= 2 in any state".into(),
        });
    }
    let has = |c: Condition| violations.iter().any(|v| v.condition == c);
    ConditionReport {
        cond_e: !has(Condition::E),
        cond_b,
        cond_s: !has(Condition::S),
        violations,
    }
}

/// State index of the quenched environment `seed` at `site`.
pub fn state_at(envlaw: &EnvironmentLaw, seed: u64, site: i64) -> usize {
    if envlaw.len() == 1 {
        return 0;
    }
    let bits = mix64(mix64(seed) ^ zigzag(site).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    envlaw.state_for_uniform(unit_from_bits(bits))
}

/// A stored stretch `[lo, hi]` of a quenched environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnvironmentWindow {
    lo: i64,
    hi: i64,
    states: Vec<usize>,
    seed: u64,
}

impl EnvironmentWindow {
    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn contains(&self, site: i64) -> bool {
        (self.lo..=self.hi).contains(&site)
    }

    /// State at `site`; sites outside the stored range are realized on
    /// demand from the same seed, so the window behaves as the whole line.
    #[inline]
    pub fn state(&self, envlaw: &EnvironmentLaw, site: i64) -> usize {
        if self.contains(site) {
            self.states[(site - self.lo) as usize]
        } else {
            state_at(envlaw, self.seed, site)
        }
    }
}

pub fn realize_window(
    envlaw: &EnvironmentLaw,
    seed: u64,
    lo: i64,
    hi: i64,
) -> Result<EnvironmentWindow> {
    if hi < lo {
        return Err(Error::InvalidArgument(format!(
            "window [{lo}, {hi}] is empty"
        )));
    }
    let states = (lo..=hi).map(|x| state_at(envlaw, seed, x)).collect();
    Ok(EnvironmentWindow {
        lo,
        hi,
        states,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(a: u32, b: u32, c: u32) -> OffspringVector {
        OffspringVector::new(a, b, c)
    }

    fn supercritical_left() -> OffspringLaw {
        OffspringLaw::new(vec![(0.6, v(2, 0, 0)), (0.05, v(0, 0, 1)), (0.35, v(0, 0, 0))]).unwrap()
    }

    #[test]
    fn moments_of_examples() {
        assert_eq!(
            OffspringLaw::point_mass(v(1, 0, 1)).moments(),
            MomentTriple::new(1.0, 0.0, 1.0)
        );
        assert_eq!(
            OffspringLaw::point_mass(v(0, 0, 0)).moments(),
            MomentTriple::new(0.0, 0.0, 0.0)
        );
        let m = supercritical_left().moments();
        assert!((m.mu_minus - 1.2).abs() < 1e-15);
        assert_eq!(m.mu_zero, 0.0);
        assert!((m.mu_plus - 0.05).abs() < 1e-15);
    }

    #[test]
    fn law_construction_errors() {
        assert!(OffspringLaw::new(vec![]).is_err());
        assert!(OffspringLaw::new(vec![(0.5, v(1, 0, 0))]).is_err());
        assert!(OffspringLaw::new(vec![(0.5, v(1, 0, 0)), (0.5, v(1, 0, 0))]).is_err());
        assert!(OffspringLaw::new(vec![(0.0, v(1, 0, 0)), (1.0, v(0, 0, 1))]).is_err());
        assert!(OffspringLaw::new(vec![(f64::NAN, v(1, 0, 0))]).is_err());
        // Within tolerance: accepted and renormalised.
        let law = OffspringLaw::new(vec![(0.5 + 4e-13, v(1, 0, 0)), (0.5, v(0, 0, 1))]).unwrap();
        let total: f64 = law.atoms().iter().map(|a| a.0).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(OffspringLaw::new(vec![(0.5 + 1e-9, v(1, 0, 0)), (0.5, v(0, 0, 1))]).is_err());
        assert!(EnvironmentLaw::new(vec![]).is_err());
        assert!(EnvironmentLaw::new(vec![(0.7, supercritical_left())]).is_err());
    }

    #[test]
    fn conditions_hold_for_branching_example() {
        let r = validate_conditions(&EnvironmentLaw::constant(supercritical_left()));
        assert!(r.cond_e && r.cond_b && r.cond_s);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn conditions_fail_for_left_step() {
        let r = validate_conditions(&EnvironmentLaw::constant(OffspringLaw::point_mass(v(1, 0, 0))));
        assert!(!r.cond_e && !r.cond_b && !r.cond_s);
        assert!(r.violations.iter().any(|x| x.condition == Condition::E));
        assert!(r.violations.iter().any(|x| x.condition == Condition::B));
        assert!(r.violations.iter().any(|x| x.condition == Condition::S));
        assert!(r.require_all().is_err());
    }

    #[test]
    fn condition_s_fails_for_single_state() {
        let no_right = OffspringLaw::new(vec![(0.5, v(2, 0, 0)), (0.5, v(0, 1, 0))]).unwrap();
        let env = EnvironmentLaw::new(vec![(0.5, supercritical_left()), (0.5, no_right)]).unwrap();
        let r = validate_conditions(&env);
        assert!(!r.cond_s);
        assert!(r
            .violations
            .iter()
            .all(|x| x.state == Some(1) || x.condition == Condition::B));
        assert!(r.violations.iter().any(|x| x.condition == Condition::S && x.state == Some(1)));
    }

    #[test]
    fn state_at_single_state_is_zero() {
        let env = EnvironmentLaw::constant(supercritical_left());
        for (seed, site) in [(0, 0), (1, -5), (u64::MAX, i64::MAX)] {
            assert_eq!(state_at(&env, seed, site), 0);
        }
    }

    #[test]
    fn state_at_frequencies() {
        let env = EnvironmentLaw::new(vec![
            (0.5, supercritical_left()),
            (0.5, OffspringLaw::point_mass(v(1, 1, 1))),
        ])
        .unwrap();
        let n = 200_001;
        let ones = (-100_000..=100_000).filter(|&x| state_at(&env, 42, x) == 1).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
        assert_eq!(state_at(&env, 42, 17), state_at(&env, 42, 17));
    }

    #[test]
    fn windows() {
        let env = EnvironmentLaw::new(vec![
            (0.3, supercritical_left()),
            (0.7, OffspringLaw::point_mass(v(1, 1, 1))),
        ])
        .unwrap();
        assert_eq!(realize_window(&env, 1, 0, 0).unwrap().len(), 1);
        assert!(realize_window(&env, 1, 1, 0).is_err());
        let small = realize_window(&env, 9, -5, 5).unwrap();
        let big = realize_window(&env, 9, -10, 10).unwrap();
        for x in -5..=5 {
            assert_eq!(small.state(&env, x), big.state(&env, x));
        }
        // Outside the stored range the window falls back to state_at.
        assert_eq!(small.state(&env, 50), state_at(&env, 9, 50));
        let constant = EnvironmentLaw::constant(supercritical_left());
        assert!(realize_window(&constant, 3, -4, 4).unwrap().states().iter().all(|&s| s == 0));
    }

    fn arb_vector() -> impl Strategy<Value = OffspringVector> {
        (0u32..4, 0u32..4, 0u32..4).prop_map(|(a, b, c)| v(a, b, c))
    }

    fn arb_law() -> impl Strategy<Value = OffspringLaw> {
        prop::collection::btree_set(arb_vector(), 1..5).prop_flat_map(|set| {
            let n = set.len();
            (Just(set), prop::collection::vec(0.05f64..1.0, n))
        })
        .prop_map(|(set, w)| {
            let total: f64 = w.iter().sum();
            OffspringLaw::new(set.into_iter().zip(w).map(|(v, p)| (p / total, v)).collect())
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn moments_bounded_by_largest_atom(law in arb_law()) {
            let m = law.moments();
            let max = law.max_size() as f64;
            prop_assert!(m.mu_minus >= 0.0 && m.mu_zero >= 0.0 && m.mu_plus >= 0.0);
            prop_assert!(m.total() <= max + 1e-12);
        }

        #[test]
        fn condition_e_iff_condition_s(laws in prop::collection::vec(arb_law(), 1..4)) {
            let w = 1.0 / laws.len() as f64;
            let env = EnvironmentLaw::new(laws.into_iter().map(|l| (w, l)).collect()).unwrap();
            let r = validate_conditions(&env);
            prop_assert_eq!(r.cond_e, r.cond_s);
        }

        #[test]
        fn windows_are_restriction_compatible(seed: u64, lo in -50i64..50, len in 0i64..40, shift in 0i64..10) {
            let env = EnvironmentLaw::new(vec![
                (0.25, supercritical_left()),
                (0.75, OffspringLaw::point_mass(v(1, 1, 1))),
            ]).unwrap();
            let inner = realize_window(&env, seed, lo, lo + len).unwrap();
            let outer = realize_window(&env, seed, lo - shift, lo + len + shift).unwrap();
            for x in inner.sites() {
                prop_assert_eq!(inner.state(&env, x), outer.state(&env, x));
                prop_assert_eq!(inner.state(&env, x), state_at(&env, seed, x));
            }
        }
    }
}
