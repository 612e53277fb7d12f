mod common;

use common::{chain3, lin, small_network};
use ibia_core::oracle::{brute_force_max_marginal, brute_force_mpe, forward_sample};
use ibia_core::{Assignment, DiscreteNetwork, Error, Factor};
use proptest::prelude::*;

/// `b` copies `a`, a fair coin.
fn copy_net() -> DiscreteNetwork {
    DiscreteNetwork::new(
        vec![2, 2],
        vec![vec![], vec![0]],
        vec![lin(vec![0], vec![2], &[0.5, 0.5]), lin(vec![0, 1], vec![2, 2], &[1.0, 0.0, 0.0, 1.0])],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn simplify_keeps_the_maximum(seed in 0u64..1_000_000, stride in 2usize..5) {
        let net = small_network(seed, 8);
        let sample = forward_sample(&net, seed);
        let known: Assignment = sample.iter().filter(|(v, _)| v % stride == 0).collect();
        let reduced = net.simplify(&known).unwrap();
        prop_assert!(known.iter().all(|(v, s)| reduced.known.get(v) == Some(s)));
        for fam in &reduced.families {
            prop_assert!(fam.scope().iter().all(|&v| !reduced.known.contains(v)));
        }
        let factors: Vec<Factor> = reduced.families.iter().map(|f| f.factor.clone()).collect();
        let rest = brute_force_max_marginal(&factors, net.cards(), &[]).unwrap().values()[0];
        let (_, exact) = brute_force_mpe(&net, &known).unwrap();
        prop_assert!((reduced.log_constant + rest - exact).abs() < 1e-9);
    }
}

#[test]
fn inconsistent_known_states_are_rejected() {
    let net = chain3();
    let det = copy_net();
    let bad = Assignment::from_pairs([(0, 0), (1, 1)]).unwrap();
    assert!(matches!(det.simplify(&bad), Err(Error::ZeroProbabilityEvidence { .. })));
    assert!(net.simplify(&Assignment::from_pairs([(2, 1)]).unwrap()).is_ok());
}

#[test]
fn determinism_promotes_children() {
    let det = copy_net();
    let reduced = det.simplify(&Assignment::from_pairs([(0, 1)]).unwrap()).unwrap();
    assert_eq!(reduced.known.get(1), Some(1));
    assert!(reduced.families.is_empty());
    assert!((reduced.log_constant - 0.5f64.ln()).abs() < 1e-12);
}
