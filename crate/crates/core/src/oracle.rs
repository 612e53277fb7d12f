//! Reference answers for small networks and random test instances.
//!
//! Enumeration here walks configurations with its own mixed-radix counter and
//! evaluates CPDs entry by entry, so it shares no indexing code with the
//! factor operations it is used to check.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assignment::Assignment;
use crate::factor::{Factor, VarId};
use crate::network::DiscreteNetwork;
use crate::{Error, Result};

/// Largest state space, in bits, the enumerators accept.
pub const STATE_SPACE_CAP: f64 = 24.0;

fn bits(vars: &[VarId], cards: &[usize]) -> f64 {
    vars.iter().map(|&v| libm::log2(cards[v] as f64)).sum()
}

/// Advances `states` as a mixed-radix counter over `cards`, last position
/// fastest. Returns `false` after the final configuration.
fn next_config(states: &mut [usize], cards: &[usize]) -> bool {
    for i in (0..states.len()).rev() {
        states[i] += 1;
        if states[i] < cards[i] {
            return true;
        }
        states[i] = 0;
    }
    false
}

fn entry(f: &Factor, full: &[usize]) -> f64 {
    let mut idx = 0;
    for (&v, &c) in f.scope().iter().zip(f.cards()) {
        idx = idx * c + full[v];
    }
    f.values()[idx]
}

/// Exhaustive MPE. Among maximizers the lexicographically smallest
/// configuration of the free variables (in id order) wins.
pub fn brute_force_mpe(net: &DiscreteNetwork, evidence: &Assignment) -> Result<(Assignment, f64)> {
    evidence.check_against(net.cards())?;
    let free: Vec<VarId> = (0..net.num_vars()).filter(|&v| !evidence.contains(v)).collect();
    let b = bits(&free, net.cards());
    if b > STATE_SPACE_CAP {
        return Err(Error::StateSpaceTooLarge { bits: b, cap: STATE_SPACE_CAP });
    }
    let free_cards: Vec<usize> = free.iter().map(|&v| net.cards()[v]).collect();
    let mut full = vec![0; net.num_vars()];
    for (v, s) in evidence.iter() {
        full[v] = s;
    }
    let mut states = vec![0; free.len()];
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    loop {
        for (&v, &s) in free.iter().zip(&states) {
            full[v] = s;
        }
        let p: f64 = net.cpds().iter().map(|f| entry(f, &full)).sum();
        if p > best.1 || best.0.is_empty() {
            best = (full.clone(), p);
        }
        if !next_config(&mut states, &free_cards) {
            break;
        }
    }
    Ok((best.0.into_iter().enumerate().collect(), best.1))
}

/// Max-marginal of the product of `factors` onto `keep` (sorted ids), by
/// enumerating every variable in the union of their scopes.
pub fn brute_force_max_marginal(factors: &[Factor], cards: &[usize], keep: &[VarId]) -> Result<Factor> {
    let mut all: Vec<VarId> =
        factors.iter().flat_map(|f| f.scope().iter().copied()).chain(keep.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    let b = bits(&all, cards);
    if b > STATE_SPACE_CAP {
        return Err(Error::StateSpaceTooLarge { bits: b, cap: STATE_SPACE_CAP });
    }
    let all_cards: Vec<usize> = all.iter().map(|&v| cards[v]).collect();
    let keep_cards: Vec<usize> = keep.iter().map(|&v| cards[v]).collect();
    let mut out = vec![f64::NEG_INFINITY; keep_cards.iter().product()];
    let mut full = vec![0; cards.len()];
    let mut states = vec![0; all.len()];
    loop {
        for (&v, &s) in all.iter().zip(&states) {
            full[v] = s;
        }
        let p: f64 = factors.iter().map(|f| entry(f, &full)).sum();
        let mut idx = 0;
        for (&v, &c) in keep.iter().zip(&keep_cards) {
            idx = idx * c + full[v];
        }
        if p > out[idx] {
            out[idx] = p;
        }
        if !next_config(&mut states, &all_cards) {
            break;
        }
    }
    Factor::new(keep.to_vec(), keep_cards, out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomNetworkParams {
    pub n_vars: usize,
    pub max_parents: usize,
    /// Cardinalities are drawn from `2..=max_card`.
    pub max_card: usize,
    /// Fraction of CPD columns made deterministic.
    pub determinism_frac: f64,
    /// Parents are drawn among the previous `window` variables; `0` means all.
    pub window: usize,
    pub seed: u64,
}

impl Default for RandomNetworkParams {
    fn default() -> Self {
        Self { n_vars: 10, max_parents: 2, max_card: 3, determinism_frac: 0.0, window: 0, seed: 0 }
    }
}

/// Random DAG with normalized CPDs. Variable ids follow a topological order.
pub fn random_network(p: &RandomNetworkParams) -> DiscreteNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let max_card = p.max_card.max(2);
    let cards: Vec<usize> = (0..p.n_vars).map(|_| rng.random_range(2..=max_card)).collect();
    let mut parents = Vec::with_capacity(p.n_vars);
    let mut cpds = Vec::with_capacity(p.n_vars);
    for v in 0..p.n_vars {
        let lo = if p.window == 0 { 0 } else { v.saturating_sub(p.window) };
        let mut pool: Vec<VarId> = (lo..v).collect();
        let k = rng.random_range(0..=p.max_parents.min(pool.len()));
        let mut ps = Vec::with_capacity(k);
        for _ in 0..k {
            ps.push(pool.swap_remove(rng.random_range(0..pool.len())));
        }
        ps.sort_unstable();
        let columns: usize = ps.iter().map(|&u| cards[u]).product();
        let mut values = Vec::with_capacity(columns * cards[v]);
        for _ in 0..columns {
            if rng.random::<f64>() < p.determinism_frac {
                let hot = rng.random_range(0..cards[v]);
                values.extend((0..cards[v]).map(|s| if s == hot { 0.0 } else { f64::NEG_INFINITY }));
            } else {
                let w: Vec<f64> = (0..cards[v]).map(|_| rng.random::<f64>() + 0.05).collect();
                let total: f64 = w.iter().sum();
                values.extend(w.iter().map(|x| libm::log(x / total)));
            }
        }
        let mut scope = ps.clone();
        scope.push(v);
        let mut fcards: Vec<usize> = ps.iter().map(|&u| cards[u]).collect();
        fcards.push(cards[v]);
        // the child varies fastest in the column layout above; parents all
        // precede it, so the sorted scope already puts it last
        cpds.push(Factor::new(scope, fcards, values).expect("well-formed CPD"));
        parents.push(ps);
    }
    DiscreteNetwork::new(cards, parents, cpds).expect("acyclic by construction")
}

/// Ancestral sample of every variable.
pub fn forward_sample(net: &DiscreteNetwork, seed: u64) -> Assignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = net.topological_order().expect("acyclic");
    let mut out = Assignment::new();
    for v in order {
        let cpd = net.cpd(v).reduce(&out);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = cpd.values().iter().rposition(|&x| x > f64::NEG_INFINITY).unwrap_or(0);
        for (s, &x) in cpd.values().iter().enumerate() {
            acc += libm::exp(x);
            if u < acc {
                pick = s;
                break;
            }
        }
        out.insert(v, pick);
    }
    out
}
