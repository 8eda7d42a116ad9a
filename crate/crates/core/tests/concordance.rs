//! Simulated survival frequencies agree with the classifier on the worked
//! examples.

use brwre_core::criteria::{classify_estimating, Regime, Thresholds};
use brwre_core::simulator::survival_probabilities;
use brwre_core::{EnvironmentLaw, LyapunovOptions, McOptions, OffspringLaw, OffspringVector};

fn law(atoms: &[(f64, [u32; 3])]) -> OffspringLaw {
    OffspringLaw::new(
        atoms
            .iter()
            .map(|&(p, [a, b, c])| (p, OffspringVector::new(a, b, c)))
            .collect(),
    )
    .unwrap()
}

fn examples() -> Vec<(&'static str, EnvironmentLaw)> {
    vec![
        ("halves", EnvironmentLaw::constant(law(&[(0.5, [1, 1, 1]), (0.5, [0, 0, 0])]))),
        ("critical", EnvironmentLaw::constant(law(&[(0.5, [1, 0, 1]), (0.5, [0, 0, 0])]))),
        (
            "left subcritical",
            EnvironmentLaw::constant(law(&[(0.3, [2, 0, 0]), (0.15, [0, 0, 1]), (0.55, [0, 0, 0])])),
        ),
        (
            "left drift",
            EnvironmentLaw::constant(law(&[(0.6, [2, 0, 0]), (0.05, [0, 0, 1]), (0.35, [0, 0, 0])])),
        ),
        (
            "two-state",
            EnvironmentLaw::new(vec![
                (0.5, law(&[(0.7, [2, 0, 0]), (0.05, [0, 0, 1]), (0.25, [0, 0, 0])])),
                (0.5, law(&[(0.45, [2, 0, 0]), (0.08, [0, 0, 1]), (0.47, [0, 0, 0])])),
            ])
            .unwrap(),
        ),
    ]
}

#[test]
fn survival_frequency_matches_verdict() {
    let opts = LyapunovOptions::with_seed(1);
    for (i, (name, env)) in examples().into_iter().enumerate() {
        let verdict = classify_estimating(&env, &opts, &Thresholds::default()).unwrap();
        let mc = McOptions::new(4_000, 400, 100_000).seeds(100 + i as u64, 200 + i as u64);
        let est = survival_probabilities(&env, &mc).unwrap();
        let f = est.global.freq;
        match verdict.regime {
            Regime::StrongLocalSurvival | Regime::GlobalSurvivalLocalExtinction => {
                assert!(f > 0.05, "{name}: {f} for {:?}", verdict.regime)
            }
            Regime::GlobalExtinction => assert!(f <= 0.01, "{name}: {f}"),
            Regime::Inconclusive => panic!("{name}: inconclusive"),
        }
        if verdict.regime == Regime::GlobalSurvivalLocalExtinction {
            assert!(est.local_proxy.freq <= 0.01, "{name}: local {}", est.local_proxy.freq);
        }
    }
}

#[test]
fn trials_are_reproducible() {
    let (_, env) = &examples()[4];
    let mc = McOptions::new(300, 200, 10_000).seeds(4, 5);
    let a = survival_probabilities(env, &mc).unwrap();
    let b = survival_probabilities(env, &mc).unwrap();
    assert_eq!(a.outcomes, b.outcomes);
}
