#![allow(dead_code)]

use std::collections::BTreeSet;

use ibia_core::build::build_partition;
use ibia_core::calibrate::calibrate;
use ibia_core::oracle::{random_network, RandomNetworkParams};
use ibia_core::{Assignment, Ctf, DiscreteNetwork, Factor, VarId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn lin(scope: Vec<VarId>, cards: Vec<usize>, probs: &[f64]) -> Factor {
    Factor::new(scope, cards, probs.iter().map(|p| p.ln()).collect()).unwrap()
}

/// P(a) = (.6,.4), P(b|a) = (.9,.1 / .2,.8), P(c|b) = (.7,.3 / .5,.5).
pub fn chain3() -> DiscreteNetwork {
    DiscreteNetwork::new(
        vec![2, 2, 2],
        vec![vec![], vec![0], vec![1]],
        vec![
            lin(vec![0], vec![2], &[0.6, 0.4]),
            lin(vec![0, 1], vec![2, 2], &[0.9, 0.1, 0.2, 0.8]),
            lin(vec![1, 2], vec![2, 2], &[0.7, 0.3, 0.5, 0.5]),
        ],
    )
    .unwrap()
}

pub fn small_network(seed: u64, n_vars: usize) -> DiscreteNetwork {
    random_network(&RandomNetworkParams { n_vars, max_parents: 3, max_card: 3, determinism_frac: 0.1, window: 0, seed })
}

/// Whole network in one calibrated forest; `None` if it does not fit `mcs_p`.
pub fn calibrated_forest(net: &DiscreteNetwork, mcs_p: f64) -> Option<Ctf> {
    let reduced = net.simplify(&Assignment::new()).unwrap();
    let built = build_partition(Ctf::new(net.cards().to_vec()), reduced.families, mcs_p).ok()?;
    if !built.remaining.is_empty() {
        return None;
    }
    let mut ctf = built.ctf;
    calibrate(&mut ctf).ok()?;
    Some(ctf)
}

pub fn random_subset(vars: &BTreeSet<VarId>, frac: f64, seed: u64) -> BTreeSet<VarId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vars.iter().copied().filter(|_| rng.random::<f64>() < frac).collect()
}
