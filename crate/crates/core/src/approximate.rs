//! Shrinking a calibrated clique tree forest below a clique-size bound.
//!
//! Variables that no later family needs (non-interface) are first removed
//! exactly: dropped from the only clique holding them, or by collapsing the
//! subtree that holds them when the collapsed clique fits the bound. Cliques
//! that are still too large are then trimmed by local max-marginalization,
//! which keeps each variable in one connected subtree of small cliques and
//! maximizes it out of the rest. Both steps keep the forest valid and
//! max-calibrated and leave every remaining clique belief equal to the
//! max-marginal of the input joint. Finally the clique factors are
//! re-parameterized from the beliefs so the next partition can be built on top.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ctf::{clique_size, Clique, CliqueId, Ctf, Sepset};
use crate::factor::VarId;
use crate::Result;

/// Order in which variables are considered for local max-marginalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariablePriority {
    /// Fewest containing cliques first, ties by variable id.
    FewestCliques,
    /// A seeded shuffle, without prioritization.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxConfig {
    pub mcs_im: f64,
    pub tie_seed: u64,
    pub priority: VariablePriority,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self { mcs_im: 15.0, tie_seed: 0, priority: VariablePriority::FewestCliques }
    }
}

/// Approximates a valid, max-calibrated forest. The result keeps every
/// interface variable, is valid and max-calibrated, and carries
/// re-parameterized clique factors. Clique sizes are reduced to
/// `cfg.mcs_im` where the interface allows it.
pub fn approximate_ctf(ctf_in: &Ctf, interface: &BTreeSet<VarId>, cfg: &ApproxConfig) -> Result<Ctf> {
    let mut ctf = ctf_in.minimal_connecting_subgraph(interface);
    let ids: Vec<CliqueId> = ctf.clique_ids().collect();
    for c in ids {
        ctf.clique_mut(c).factors.clear();
    }

    // exact max-marginalization of non-interface variables
    loop {
        let mut progress = false;
        for v in by_fewest_cliques(&ctf, non_interface(&ctf, interface)) {
            progress |= exact_max_marginalize_var(&mut ctf, v, cfg.mcs_im)?;
        }
        if !progress {
            break;
        }
    }

    // local max-marginalization of variables in oversized cliques
    let oversized = |ctf: &Ctf| ctf.clique_ids().any(|c| ctf.size_of(c) > cfg.mcs_im);
    if oversized(&ctf) {
        let in_large: BTreeSet<VarId> = ctf
            .clique_ids()
            .filter(|&c| ctf.size_of(c) > cfg.mcs_im)
            .flat_map(|c| ctf.clique(c).scope.clone())
            .collect();
        let (mut nivs, mut ivs): (Vec<VarId>, Vec<VarId>) = in_large.into_iter().partition(|v| !interface.contains(v));
        if cfg.priority == VariablePriority::Random {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.tie_seed);
            nivs.shuffle(&mut rng);
            ivs.shuffle(&mut rng);
        }
        let mut nivs = VecDeque::from(nivs);
        let mut ivs = VecDeque::from(ivs);
        while oversized(&ctf) {
            let next = match cfg.priority {
                VariablePriority::FewestCliques => pop_fewest(&ctf, &mut nivs)
                    .map(|v| (v, false))
                    .or_else(|| pop_fewest(&ctf, &mut ivs).map(|v| (v, true))),
                VariablePriority::Random => {
                    nivs.pop_front().map(|v| (v, false)).or_else(|| ivs.pop_front().map(|v| (v, true)))
                }
            };
            let Some((v, is_interface)) = next else { break };
            local_max_marginalize_var(&mut ctf, v, is_interface, cfg.mcs_im)?;
        }
    }

    ctf.set_interface(interface.iter().copied().filter(|v| ctf_has(&ctf, *v)).collect());
    reparameterize(&mut ctf)?;
    Ok(ctf)
}

fn ctf_has(ctf: &Ctf, v: VarId) -> bool {
    ctf.clique_ids().any(|c| ctf.clique(c).scope.binary_search(&v).is_ok())
}

fn non_interface(ctf: &Ctf, interface: &BTreeSet<VarId>) -> Vec<VarId> {
    ctf.vars().into_iter().filter(|v| !interface.contains(v)).collect()
}

fn holder_counts(ctf: &Ctf) -> BTreeMap<VarId, usize> {
    let mut counts = BTreeMap::new();
    for c in ctf.clique_ids() {
        for &v in &ctf.clique(c).scope {
            *counts.entry(v).or_insert(0) += 1;
        }
    }
    counts
}

fn by_fewest_cliques(ctf: &Ctf, mut vars: Vec<VarId>) -> Vec<VarId> {
    let counts = holder_counts(ctf);
    vars.sort_by_key(|v| (counts.get(v).copied().unwrap_or(0), *v));
    vars
}

fn pop_fewest(ctf: &Ctf, list: &mut VecDeque<VarId>) -> Option<VarId> {
    let counts = holder_counts(ctf);
    let (pos, _) = list.iter().enumerate().min_by_key(|(_, v)| (counts.get(v).copied().unwrap_or(0), **v))?;
    list.remove(pos)
}

/// Removes `v` without changing the joint over the remaining variables.
/// Held by one clique, `v` is maximized out of its belief. Held by several,
/// their subtree is collapsed into one clique whose belief is the maximum over
/// `v` of the subtree's clique beliefs divided by its sepset beliefs; this is
/// skipped, returning `false`, when that clique would exceed `mcs_im`.
pub fn exact_max_marginalize_var(ctf: &mut Ctf, v: VarId, mcs_im: f64) -> Result<bool> {
    let holders = ctf.cliques_containing(v);
    match holders.as_slice() {
        [] => return Ok(false),
        [only] => {
            let clique = ctf.clique_mut(*only);
            clique.scope.retain(|&u| u != v);
            clique.belief = clique.belief.as_ref().map(|b| b.max_marginalize(&[v]));
            ctf.remove_non_maximal();
            return Ok(true);
        }
        _ => {}
    }
    let mut scope: Vec<VarId> = holders.iter().flat_map(|&c| ctf.clique(c).scope.clone()).collect();
    scope.sort_unstable();
    scope.dedup();
    scope.retain(|&u| u != v);
    if clique_size(&scope, ctf.cards()) > mcs_im {
        return Ok(false);
    }
    let members: BTreeSet<CliqueId> = holders.iter().copied().collect();
    let mut joint = ctf.clique(holders[0]).belief.clone().expect("calibrated");
    for &c in &holders[1..] {
        joint = joint.product(ctf.clique(c).belief.as_ref().expect("calibrated"))?;
    }
    let mut boundary: Vec<(CliqueId, Sepset)> = Vec::new();
    for &c in &holders {
        for n in ctf.neighbors(c) {
            let sep = ctf.sepset(c, n).expect("edge exists");
            if members.contains(&n) {
                if c < n {
                    joint = joint.divide(sep.belief.as_ref().expect("calibrated"))?;
                }
            } else {
                boundary.push((n, sep.clone()));
            }
        }
    }
    let belief = joint.max_marginalize(&[v]);
    for &c in &holders {
        ctf.remove_clique(c);
    }
    let merged = ctf.push(Clique { scope, belief: Some(belief), factors: Vec::new() });
    for (n, sep) in boundary {
        ctf.connect_with(merged, n, sep);
    }
    ctf.remove_non_maximal();
    Ok(true)
}

/// Keeps `v` only in the largest connected group of its cliques that fit
/// `mcs_im` and maximizes it out of the other cliques and their sepsets.
/// Skipped, returning `false`, when that would empty a sepset (splitting a
/// tree), or when `v` is an interface variable with no small clique to keep it.
pub fn local_max_marginalize_var(ctf: &mut Ctf, v: VarId, is_interface: bool, mcs_im: f64) -> Result<bool> {
    let holders: BTreeSet<CliqueId> = ctf.cliques_containing(v).into_iter().collect();
    if holders.is_empty() {
        return Ok(false);
    }
    let small: BTreeSet<CliqueId> = holders.iter().copied().filter(|&c| ctf.size_of(c) <= mcs_im).collect();
    let retained = largest_group(ctf, &small);
    let trimmed: Vec<CliqueId> = holders.iter().copied().filter(|c| !retained.contains(c)).collect();
    if trimmed.is_empty() {
        return Ok(false);
    }
    let mut touched_edges = BTreeSet::new();
    for &c in &trimmed {
        for n in ctf.neighbors(c) {
            if holders.contains(&n) {
                if ctf.sepset(c, n).expect("edge exists").scope == [v] {
                    return Ok(false);
                }
                touched_edges.insert(if c < n { (c, n) } else { (n, c) });
            }
        }
    }
    if retained.is_empty() && is_interface {
        return Ok(false);
    }
    for &c in &trimmed {
        let clique = ctf.clique_mut(c);
        clique.scope.retain(|&u| u != v);
        clique.belief = clique.belief.as_ref().map(|b| b.max_marginalize(&[v]));
    }
    for (a, b) in touched_edges {
        let sep = ctf.sepset_mut(a, b).expect("edge exists");
        sep.scope.retain(|&u| u != v);
        sep.belief = sep.belief.as_ref().map(|m| m.max_marginalize(&[v]));
    }
    ctf.remove_non_maximal();
    Ok(true)
}

/// Largest connected group within `set`: most cliques, then smallest total
/// clique size, then smallest member id.
fn largest_group(ctf: &Ctf, set: &BTreeSet<CliqueId>) -> BTreeSet<CliqueId> {
    let mut seen = BTreeSet::new();
    let mut best: Option<(BTreeSet<CliqueId>, f64)> = None;
    for &start in set {
        if !seen.insert(start) {
            continue;
        }
        let mut group = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for n in ctf.neighbors(c) {
                if set.contains(&n) && seen.insert(n) {
                    group.insert(n);
                    queue.push_back(n);
                }
            }
        }
        let total: f64 = group.iter().map(|&c| ctf.size_of(c)).sum();
        // groups are discovered in order of their smallest id, so ties keep the earlier one
        let better = match &best {
            None => true,
            Some((g, t)) => group.len() > g.len() || (group.len() == g.len() && total < *t),
        };
        if better {
            best = Some((group, total));
        }
    }
    best.map(|(g, _)| g).unwrap_or_default()
}

/// Rewrites clique factors from calibrated beliefs: the root of each tree
/// (largest id) gets its belief, every other clique its belief divided by the
/// sepset toward its parent.
pub fn reparameterize(ctf: &mut Ctf) -> Result<()> {
    for tree in ctf.trees() {
        let root = *tree.iter().max().expect("nonempty tree");
        for (c, parent) in ctf.preorder(root) {
            let belief = ctf.clique(c).belief.as_ref().expect("calibrated");
            let factor = match parent {
                None => belief.clone(),
                Some(p) => belief.divide(ctf.sepset(c, p).and_then(|s| s.belief.as_ref()).expect("calibrated"))?,
            };
            ctf.clique_mut(c).factors = vec![factor];
        }
    }
    Ok(())
}
