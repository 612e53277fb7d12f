//! Incremental clique tree construction and the partition sequence.
//!
//! Families are fed in topological order. A family whose parents all sit in
//! one clique gets a new clique attached there. Otherwise the subtree
//! spanning the cliques that hold its variables is re-triangulated with
//! min-fill and spliced back in. Once nothing else fits under the build
//! bound, the forest is calibrated, emitted as a partition and approximated
//! to seed the next one.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::approximate::{approximate_ctf, ApproxConfig};
use crate::calibrate::calibrate;
use crate::ctf::{clique_size, intersect, is_subset, Clique, CliqueId, Ctf, Sepset};
use crate::factor::{Factor, VarId};
use crate::network::{Family, ReducedNetwork};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AddOutcome {
    Added,
    /// The family would push a clique past the bound; the forest is unchanged.
    Rejected,
}

/// Adds one family whose parents are already in `ctf`.
pub fn add_family(ctf: &mut Ctf, family: &Family, mcs_p: f64) -> AddOutcome {
    let scope = family.scope();
    if clique_size(scope, ctf.cards()) > mcs_p {
        return AddOutcome::Rejected;
    }
    let present: Vec<VarId> = ctf.vars().into_iter().filter(|v| scope.binary_search(v).is_ok()).collect();
    if present.is_empty() {
        let id = ctf.add_clique(scope.to_vec());
        ctf.clique_mut(id).factors.push(family.factor.clone());
        return AddOutcome::Added;
    }
    let host = ctf
        .clique_ids()
        .filter(|&c| is_subset(&present, &ctf.clique(c).scope))
        .min_by(|&a, &b| ctf.size_of(a).total_cmp(&ctf.size_of(b)).then(a.cmp(&b)));
    if let Some(host) = host {
        if present.len() == scope.len() {
            ctf.clique_mut(host).factors.push(family.factor.clone());
        } else {
            let id = ctf.add_clique(scope.to_vec());
            ctf.clique_mut(id).factors.push(family.factor.clone());
            ctf.connect(id, host);
            ctf.remove_non_maximal();
        }
        return AddOutcome::Added;
    }
    retriangulate(ctf, family, &present, mcs_p)
}

fn retriangulate(ctf: &mut Ctf, family: &Family, present: &[VarId], mcs_p: f64) -> AddOutcome {
    let marked: BTreeSet<CliqueId> =
        ctf.clique_ids().filter(|&c| !intersect(&ctf.clique(c).scope, present).is_empty()).collect();
    let impacted = ctf.steiner(&marked);

    let mut graph: BTreeMap<VarId, BTreeSet<VarId>> = BTreeMap::new();
    let mut complete = |vars: &[VarId]| {
        for &u in vars {
            let entry = graph.entry(u).or_default();
            entry.extend(vars.iter().copied().filter(|&w| w != u));
        }
    };
    for &c in &impacted {
        complete(&ctf.clique(c).scope);
    }
    complete(family.scope());

    let cliques = min_fill_cliques(graph, ctf.cards());
    if cliques.iter().any(|c| clique_size(c, ctf.cards()) > mcs_p) {
        return AddOutcome::Rejected;
    }

    let mut boundary: Vec<(CliqueId, Sepset)> = Vec::new();
    let mut factors: Vec<Factor> = Vec::new();
    for &c in &impacted {
        for n in ctf.neighbors(c) {
            if !impacted.contains(&n) {
                boundary.push((n, ctf.sepset(c, n).expect("edge exists").clone()));
            }
        }
    }
    for &c in &impacted {
        factors.extend(ctf.remove_clique(c).expect("live clique").factors);
    }
    factors.push(family.factor.clone());

    let ids: Vec<CliqueId> = cliques
        .iter()
        .map(|scope| ctf.push(Clique { scope: scope.clone(), belief: None, factors: Vec::new() }))
        .collect();
    for (a, b) in spanning_tree(&cliques) {
        ctf.connect(ids[a], ids[b]);
    }
    for (n, sep) in boundary {
        let host = cliques.iter().position(|c| is_subset(&sep.scope, c)).expect("sepset lies inside a new clique");
        ctf.connect_with(ids[host], n, Sepset { scope: sep.scope, belief: None });
    }
    for f in factors {
        let host = cliques.iter().position(|c| is_subset(f.scope(), c)).expect("factor scope lies inside a new clique");
        ctf.clique_mut(ids[host]).factors.push(f);
    }
    ctf.remove_non_maximal();
    AddOutcome::Added
}

/// Maximal cliques of the min-fill triangulation of `graph`. Ties between
/// elimination candidates go to the smaller clique size, then the lower id.
fn min_fill_cliques(mut graph: BTreeMap<VarId, BTreeSet<VarId>>, cards: &[usize]) -> Vec<Vec<VarId>> {
    let mut cliques: Vec<Vec<VarId>> = Vec::new();
    while !graph.is_empty() {
        let mut best: Option<(usize, f64, VarId)> = None;
        for (&v, nbrs) in &graph {
            let nb: Vec<VarId> = nbrs.iter().copied().collect();
            let mut fill = 0;
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if !graph[&a].contains(&b) {
                        fill += 1;
                    }
                }
            }
            let size = clique_size(&nb, cards) + libm::log2(cards[v] as f64);
            let better = match best {
                None => true,
                Some((f, s, _)) => fill.cmp(&f).then(size.total_cmp(&s)).is_lt(),
            };
            if better {
                best = Some((fill, size, v));
            }
        }
        let (_, _, v) = best.expect("graph is nonempty");
        let nbrs = graph.remove(&v).expect("vertex present");
        for &a in &nbrs {
            let entry = graph.get_mut(&a).expect("neighbor present");
            entry.remove(&v);
            entry.extend(nbrs.iter().copied().filter(|&b| b != a));
        }
        let mut clique: Vec<VarId> = nbrs.into_iter().collect();
        clique.push(v);
        clique.sort_unstable();
        if !cliques.iter().any(|c| is_subset(&clique, c)) {
            cliques.retain(|c| !is_subset(c, &clique));
            cliques.push(clique);
        }
    }
    cliques
}

/// Maximum-weight spanning tree over cliques, weighted by intersection size.
/// Prim's algorithm from clique 0; ties go to the lowest index pair.
fn spanning_tree(cliques: &[Vec<VarId>]) -> Vec<(usize, usize)> {
    let n = cliques.len();
    let mut in_tree = vec![false; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n == 0 {
        return edges;
    }
    in_tree[0] = true;
    for _ in 1..n {
        let mut best: Option<(usize, usize, usize)> = None;
        for a in (0..n).filter(|&a| in_tree[a]) {
            for b in (0..n).filter(|&b| !in_tree[b]) {
                let w = intersect(&cliques[a], &cliques[b]).len();
                if best.is_none_or(|(bw, _, _)| w > bw) {
                    best = Some((w, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("unvisited clique remains");
        in_tree[b] = true;
        edges.push((a, b));
    }
    edges
}

/// Result of one build step.
#[derive(Clone, Debug)]
pub struct Built {
    pub ctf: Ctf,
    pub added: Vec<Family>,
    pub remaining: Vec<Family>,
}

/// Adds as many pending families to `seed` as fit under `mcs_p`, in order.
/// A family is only tried once its parents are in the forest.
pub fn build_partition(seed: Ctf, pending: Vec<Family>, mcs_p: f64) -> Result<Built> {
    let mut ctf = seed;
    ctf.clear_beliefs();
    let mut present = ctf.vars();
    let mut added = Vec::new();
    let mut remaining = Vec::new();
    for fam in pending {
        let size = clique_size(fam.scope(), ctf.cards());
        if size > mcs_p {
            return Err(Error::InfeasibleBound { var: fam.child, size, bound: mcs_p });
        }
        if !fam.parents().all(|p| present.contains(&p)) {
            remaining.push(fam);
            continue;
        }
        match add_family(&mut ctf, &fam, mcs_p) {
            AddOutcome::Added => {
                present.extend(fam.scope().iter().copied());
                added.push(fam);
            }
            AddOutcome::Rejected => remaining.push(fam),
        }
    }
    Ok(Built { ctf, added, remaining })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IbiaConfig {
    pub mcs_p: f64,
    pub approx: ApproxConfig,
    /// Lowest value the approximation bound is lowered to when the next
    /// partition cannot be started.
    pub mcs_im_floor: f64,
    /// Keep the calibrated forest of every partition, not just the last.
    pub keep_all: bool,
}

impl Default for IbiaConfig {
    fn default() -> Self {
        Self { mcs_p: 20.0, approx: ApproxConfig::default(), mcs_im_floor: 2.0, keep_all: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartitionStats {
    pub cliques: usize,
    pub max_clique_size: f64,
    pub added_vars: usize,
    /// Clique counts bucketed by `floor(clique size)`.
    pub size_histogram: Vec<usize>,
    /// Largest belief table in the calibrated forest.
    pub peak_table_len: usize,
    /// Approximation bound finally used, if this partition was approximated.
    pub mcs_im_used: Option<f64>,
    /// Times the approximation bound was lowered to start the next partition.
    pub soft_retries: usize,
    /// Cliques left above the approximation bound.
    pub residual_oversized: usize,
}

impl PartitionStats {
    fn of(ctf: &Ctf, added_vars: usize) -> Self {
        let mut size_histogram = Vec::new();
        let mut peak_table_len = 0;
        for c in ctf.clique_ids() {
            let bucket = libm::floor(ctf.size_of(c) + 1e-9) as usize;
            if size_histogram.len() <= bucket {
                size_histogram.resize(bucket + 1, 0);
            }
            size_histogram[bucket] += 1;
            if let Some(b) = &ctf.clique(c).belief {
                peak_table_len = peak_table_len.max(b.len());
            }
        }
        Self {
            cliques: ctf.num_cliques(),
            max_clique_size: ctf.max_clique_size(),
            added_vars,
            size_histogram,
            peak_table_len,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Partition {
    /// Variables first added in this partition.
    pub added: Vec<VarId>,
    pub stats: PartitionStats,
    /// Calibrated forest; always kept for the last partition.
    pub ctf: Option<Ctf>,
}

/// Partitions of each connected component, in build order.
#[derive(Clone, Debug, Default)]
pub struct PartitionSequence {
    pub components: Vec<Vec<Partition>>,
    /// Log of the constant factored out when the network was reduced.
    pub log_constant: f64,
}

impl PartitionSequence {
    /// Calibrated forest of each component's last partition.
    pub fn last_forests(&self) -> impl Iterator<Item = &Ctf> + '_ {
        self.components.iter().filter_map(|parts| parts.last().and_then(|p| p.ctf.as_ref()))
    }

    pub fn max_partitions(&self) -> usize {
        self.components.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Builds, calibrates and approximates partitions of one connected component
/// until every family is placed. When nothing fits on top of an approximated
/// forest, the approximation bound is lowered by one and the previous
/// partition re-approximated, down to `cfg.mcs_im_floor`.
pub fn partition_component(
    families: Vec<Family>,
    cards: &[usize],
    cfg: &IbiaConfig,
    stop: &mut dyn FnMut() -> bool,
) -> Result<Vec<Partition>> {
    let mut parts: Vec<Partition> = Vec::new();
    let mut seed = Ctf::new(cards.to_vec());
    let mut pending = families;
    let mut previous: Option<(Ctf, BTreeSet<VarId>)> = None;
    let mut mcs_im = cfg.approx.mcs_im;
    loop {
        if stop() {
            return Err(Error::TimedOut);
        }
        let built = build_partition(seed, pending, cfg.mcs_p)?;
        if built.added.is_empty() {
            let stuck = built.remaining.first().expect("pending families remain");
            let (calibrated, interface) = match &previous {
                Some(p) if mcs_im - 1.0 >= cfg.mcs_im_floor => p,
                _ => {
                    return Err(Error::InfeasibleBound {
                        var: stuck.child,
                        size: clique_size(stuck.scope(), cards),
                        bound: cfg.mcs_p,
                    })
                }
            };
            mcs_im -= 1.0;
            let approx = ApproxConfig { mcs_im, ..cfg.approx.clone() };
            seed = approximate_ctf(calibrated, interface, &approx)?;
            let last = parts.last_mut().expect("a partition was emitted");
            last.stats.soft_retries += 1;
            last.stats.mcs_im_used = Some(mcs_im);
            last.stats.residual_oversized = seed.clique_ids().filter(|&c| seed.size_of(c) > mcs_im).count();
            pending = built.remaining;
            continue;
        }
        let mut ctf = built.ctf;
        calibrate(&mut ctf)?;
        let added: Vec<VarId> = built.added.iter().filter_map(|f| f.child).collect();
        let mut stats = PartitionStats::of(&ctf, added.len());
        if built.remaining.is_empty() {
            parts.push(Partition { added, stats, ctf: Some(ctf) });
            return Ok(parts);
        }
        let needed: BTreeSet<VarId> = built.remaining.iter().flat_map(|f| f.scope().iter().copied()).collect();
        let interface: BTreeSet<VarId> = ctf.vars().intersection(&needed).copied().collect();
        mcs_im = cfg.approx.mcs_im;
        seed = approximate_ctf(&ctf, &interface, &cfg.approx)?;
        stats.mcs_im_used = Some(mcs_im);
        stats.residual_oversized = seed.clique_ids().filter(|&c| seed.size_of(c) > mcs_im).count();
        parts.push(Partition { added, stats, ctf: cfg.keep_all.then(|| ctf.clone()) });
        previous = Some((ctf, interface));
        pending = built.remaining;
    }
}

/// Runs [`partition_component`] on every connected component of `reduced`.
pub fn run_ibia(
    reduced: &ReducedNetwork,
    cfg: &IbiaConfig,
    stop: &mut dyn FnMut() -> bool,
) -> Result<PartitionSequence> {
    let mut seq = PartitionSequence { components: Vec::new(), log_constant: reduced.log_constant };
    for families in reduced.components() {
        seq.components.push(partition_component(families, &reduced.cards, cfg, stop)?);
    }
    Ok(seq)
}
