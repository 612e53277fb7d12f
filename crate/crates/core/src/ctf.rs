//! Clique tree forests with clique and sepset beliefs.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::factor::{Factor, VarId};
use crate::network::UnionFind;

pub type CliqueId = usize;

/// `log2` of the product of member cardinalities.
pub fn clique_size(scope: &[VarId], cards: &[usize]) -> f64 {
    scope.iter().map(|&v| libm::log2(cards[v] as f64)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clique {
    pub scope: Vec<VarId>,
    pub belief: Option<Factor>,
    /// Factors whose product is this clique's initial potential.
    pub factors: Vec<Factor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sepset {
    pub scope: Vec<VarId>,
    pub belief: Option<Factor>,
}

fn edge_key(a: CliqueId, b: CliqueId) -> (CliqueId, CliqueId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn intersect(a: &[VarId], b: &[VarId]) -> Vec<VarId> {
    a.iter().copied().filter(|v| b.binary_search(v).is_ok()).collect()
}

pub(crate) fn is_subset(a: &[VarId], b: &[VarId]) -> bool {
    a.iter().all(|v| b.binary_search(v).is_ok())
}

/// A forest of clique trees over global variable ids.
///
/// Clique ids are never reused, so iteration order is stable across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Ctf {
    cards: Vec<usize>,
    cliques: Vec<Option<Clique>>,
    adjacency: Vec<BTreeSet<CliqueId>>,
    sepsets: BTreeMap<(CliqueId, CliqueId), Sepset>,
    interface: BTreeSet<VarId>,
}

/// One problem found by [`Ctf::check_valid`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Cycle { a: CliqueId, b: CliqueId },
    RunningIntersection { var: VarId },
    NonMaximal { clique: CliqueId, within: CliqueId },
    SepsetScope { a: CliqueId, b: CliqueId },
    BeliefScope { clique: CliqueId },
}

/// An edge whose endpoint beliefs disagree with the sepset belief.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationViolation {
    pub a: CliqueId,
    pub b: CliqueId,
    pub deviation: f64,
}

impl Ctf {
    pub fn new(cards: Vec<usize>) -> Self {
        Self { cards, cliques: Vec::new(), adjacency: Vec::new(), sepsets: BTreeMap::new(), interface: BTreeSet::new() }
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// Adds an isolated clique; `scope` is sorted and deduplicated.
    pub fn add_clique(&mut self, mut scope: Vec<VarId>) -> CliqueId {
        scope.sort_unstable();
        scope.dedup();
        self.push(Clique { scope, belief: None, factors: Vec::new() })
    }

    pub(crate) fn push(&mut self, clique: Clique) -> CliqueId {
        self.cliques.push(Some(clique));
        self.adjacency.push(BTreeSet::new());
        self.cliques.len() - 1
    }

    pub fn remove_clique(&mut self, id: CliqueId) -> Option<Clique> {
        let clique = self.cliques.get_mut(id)?.take()?;
        for n in core::mem::take(&mut self.adjacency[id]) {
            self.adjacency[n].remove(&id);
            self.sepsets.remove(&edge_key(id, n));
        }
        Some(clique)
    }

    /// Joins two cliques with a sepset over their scope intersection.
    pub fn connect(&mut self, a: CliqueId, b: CliqueId) {
        let scope = intersect(&self.clique(a).scope, &self.clique(b).scope);
        self.connect_with(a, b, Sepset { scope, belief: None });
    }

    /// Joins two cliques with the given sepset, unchecked.
    pub fn connect_with(&mut self, a: CliqueId, b: CliqueId, sepset: Sepset) {
        assert!(a != b, "self loop on clique {a}");
        self.adjacency[a].insert(b);
        self.adjacency[b].insert(a);
        self.sepsets.insert(edge_key(a, b), sepset);
    }

    pub fn disconnect(&mut self, a: CliqueId, b: CliqueId) -> Option<Sepset> {
        self.adjacency[a].remove(&b);
        self.adjacency[b].remove(&a);
        self.sepsets.remove(&edge_key(a, b))
    }

    pub fn contains_clique(&self, id: CliqueId) -> bool {
        matches!(self.cliques.get(id), Some(Some(_)))
    }

    pub fn clique(&self, id: CliqueId) -> &Clique {
        self.cliques[id].as_ref().expect("live clique id")
    }

    pub fn clique_mut(&mut self, id: CliqueId) -> &mut Clique {
        self.cliques[id].as_mut().expect("live clique id")
    }

    pub fn clique_ids(&self) -> impl Iterator<Item = CliqueId> + '_ {
        self.cliques.iter().enumerate().filter(|(_, c)| c.is_some()).map(|(i, _)| i)
    }

    pub fn num_cliques(&self) -> usize {
        self.cliques.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.num_cliques() == 0
    }

    pub fn neighbors(&self, id: CliqueId) -> impl Iterator<Item = CliqueId> + '_ {
        self.adjacency[id].iter().copied()
    }

    pub fn degree(&self, id: CliqueId) -> usize {
        self.adjacency[id].len()
    }

    pub fn sepset(&self, a: CliqueId, b: CliqueId) -> Option<&Sepset> {
        self.sepsets.get(&edge_key(a, b))
    }

    pub fn sepset_mut(&mut self, a: CliqueId, b: CliqueId) -> Option<&mut Sepset> {
        self.sepsets.get_mut(&edge_key(a, b))
    }

    /// Edges as `(low id, high id)` pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = ((CliqueId, CliqueId), &Sepset)> + '_ {
        self.sepsets.iter().map(|(k, s)| (*k, s))
    }

    pub fn interface(&self) -> &BTreeSet<VarId> {
        &self.interface
    }

    pub fn set_interface(&mut self, vars: BTreeSet<VarId>) {
        self.interface = vars;
    }

    pub fn size_of(&self, id: CliqueId) -> f64 {
        clique_size(&self.clique(id).scope, &self.cards)
    }

    pub fn max_clique_size(&self) -> f64 {
        self.clique_ids().map(|c| self.size_of(c)).fold(0.0, f64::max)
    }

    /// Variables present in any clique.
    pub fn vars(&self) -> BTreeSet<VarId> {
        self.cliques.iter().flatten().flat_map(|c| c.scope.iter().copied()).collect()
    }

    pub fn cliques_containing(&self, var: VarId) -> Vec<CliqueId> {
        self.clique_ids().filter(|&c| self.clique(c).scope.binary_search(&var).is_ok()).collect()
    }

    /// Connected components, each listed in breadth-first order from its
    /// smallest clique id; components ordered by that id.
    pub fn trees(&self) -> Vec<Vec<CliqueId>> {
        let mut seen = vec![false; self.cliques.len()];
        let mut out = Vec::new();
        for start in self.clique_ids() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut tree = Vec::new();
            let mut queue = VecDeque::from([start]);
            while let Some(c) = queue.pop_front() {
                tree.push(c);
                for n in self.neighbors(c) {
                    if !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
            out.push(tree);
        }
        out
    }

    /// Pre-order from `root` with children visited in ascending id order.
    /// Each entry carries its parent.
    pub fn preorder(&self, root: CliqueId) -> Vec<(CliqueId, Option<CliqueId>)> {
        let mut out = Vec::new();
        let mut stack = vec![(root, None)];
        while let Some((c, parent)) = stack.pop() {
            out.push((c, parent));
            let children: Vec<CliqueId> = self.neighbors(c).filter(|&n| Some(n) != parent).collect();
            for &n in children.iter().rev() {
                stack.push((n, Some(c)));
            }
        }
        out
    }

    /// Largest clique belief over the cliques of `tree`.
    pub fn tree_max(&self, tree: &[CliqueId]) -> Option<f64> {
        tree.iter()
            .map(|&c| self.clique(c).belief.as_ref().map(Factor::max_value))
            .try_fold(f64::NEG_INFINITY, |acc, m| m.map(|m| acc.max(m)))
    }

    pub fn clear_beliefs(&mut self) {
        for c in self.cliques.iter_mut().flatten() {
            c.belief = None;
        }
        for s in self.sepsets.values_mut() {
            s.belief = None;
        }
    }

    /// Lists structural problems; an empty list means the forest is valid.
    pub fn check_valid(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut uf = UnionFind::new(self.cliques.len());
        for ((a, b), sep) in self.edges() {
            if !uf.union(a, b) {
                out.push(Violation::Cycle { a, b });
            }
            if sep.scope != intersect(&self.clique(a).scope, &self.clique(b).scope) {
                out.push(Violation::SepsetScope { a, b });
            }
            if let Some(belief) = &sep.belief {
                if belief.scope() != sep.scope.as_slice() {
                    out.push(Violation::SepsetScope { a, b });
                }
            }
        }
        for c in self.clique_ids() {
            let clique = self.clique(c);
            if let Some(belief) = &clique.belief {
                if belief.scope() != clique.scope.as_slice() {
                    out.push(Violation::BeliefScope { clique: c });
                }
            }
            for n in self.neighbors(c) {
                let other = &self.clique(n).scope;
                if is_subset(&clique.scope, other) && (clique.scope.len() < other.len() || c > n) {
                    out.push(Violation::NonMaximal { clique: c, within: n });
                }
            }
        }
        for var in self.vars() {
            let holders = self.cliques_containing(var);
            if !self.induces_connected(&holders) {
                out.push(Violation::RunningIntersection { var });
            }
        }
        out
    }

    fn induces_connected(&self, set: &[CliqueId]) -> bool {
        let Some(&start) = set.first() else { return true };
        let members: BTreeSet<CliqueId> = set.iter().copied().collect();
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for n in self.neighbors(c) {
                if members.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len() == members.len()
    }

    /// Edges whose endpoint beliefs, max-marginalized onto the sepset, differ
    /// from the sepset belief by more than `tol` in log space. Missing beliefs
    /// count as infinite deviation.
    pub fn check_max_calibrated(&self, tol: f64) -> Vec<CalibrationViolation> {
        let mut out = Vec::new();
        for ((a, b), sep) in self.edges() {
            let mut deviation: f64 = 0.0;
            for end in [a, b] {
                let d = match (&self.clique(end).belief, &sep.belief) {
                    (Some(belief), Some(mu)) => belief.max_onto(&sep.scope).max_abs_diff(mu).unwrap_or(f64::INFINITY),
                    _ => f64::INFINITY,
                };
                deviation = deviation.max(d);
            }
            if deviation > tol {
                out.push(CalibrationViolation { a, b, deviation });
            }
        }
        out
    }

    /// Per tree, the smallest subtree spanning every clique that holds a
    /// variable of `vars`. Trees holding none of them are dropped. Ids are
    /// preserved.
    pub fn minimal_connecting_subgraph(&self, vars: &BTreeSet<VarId>) -> Ctf {
        let marked: BTreeSet<CliqueId> =
            self.clique_ids().filter(|&c| self.clique(c).scope.iter().any(|v| vars.contains(v))).collect();
        let keep = self.steiner(&marked);
        let mut out = self.clone();
        for c in self.clique_ids() {
            if !keep.contains(&c) {
                out.remove_clique(c);
            }
        }
        out.interface = self.interface.iter().copied().filter(|v| vars.contains(v)).collect();
        out
    }

    /// Cliques of the subtrees spanning `marked`, found by stripping unmarked
    /// leaves. Trees without marked cliques contribute nothing.
    pub(crate) fn steiner(&self, marked: &BTreeSet<CliqueId>) -> BTreeSet<CliqueId> {
        let mut keep = BTreeSet::new();
        for tree in self.trees() {
            if !tree.iter().any(|c| marked.contains(c)) {
                continue;
            }
            let mut degree: BTreeMap<CliqueId, usize> = tree.iter().map(|&c| (c, self.degree(c))).collect();
            let mut alive: BTreeSet<CliqueId> = tree.iter().copied().collect();
            let mut leaves: VecDeque<CliqueId> =
                tree.iter().copied().filter(|c| degree[c] <= 1 && !marked.contains(c)).collect();
            while let Some(c) = leaves.pop_front() {
                if !alive.remove(&c) {
                    continue;
                }
                for n in self.neighbors(c) {
                    if alive.contains(&n) {
                        let d = degree.get_mut(&n).expect("tree member");
                        *d -= 1;
                        if *d <= 1 && !marked.contains(&n) {
                            leaves.push_back(n);
                        }
                    }
                }
            }
            keep.extend(alive);
        }
        keep
    }

    /// Folds every clique whose scope lies inside a neighbor's into that
    /// neighbor. The absorbed clique's other neighbors are reattached to the
    /// container keeping their sepsets, and its factors move with it.
    pub fn remove_non_maximal(&mut self) {
        loop {
            let mut found = None;
            'search: for c in self.clique_ids() {
                let scope = &self.clique(c).scope;
                for n in self.neighbors(c) {
                    let other = &self.clique(n).scope;
                    if is_subset(scope, other) && (scope.len() < other.len() || c > n) {
                        found = Some((c, n));
                        break 'search;
                    }
                }
            }
            let Some((small, big)) = found else { return };
            self.absorb(small, big);
        }
    }

    fn absorb(&mut self, small: CliqueId, big: CliqueId) {
        let others: Vec<CliqueId> = self.neighbors(small).filter(|&n| n != big).collect();
        let moved: Vec<(CliqueId, Sepset)> =
            others.into_iter().map(|n| (n, self.disconnect(small, n).expect("edge exists"))).collect();
        let clique = self.remove_clique(small).expect("live clique");
        self.clique_mut(big).factors.extend(clique.factors);
        for (n, sep) in moved {
            self.connect_with(n, big, sep);
        }
    }

    /// Line-oriented dump: one `clique` line per clique, one `edge` line per
    /// sepset.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for c in self.clique_ids() {
            let _ = write!(s, "clique {c} size={:.4} scope=", self.size_of(c));
            write_vars(&mut s, &self.clique(c).scope);
            s.push('\n');
        }
        for ((a, b), sep) in self.edges() {
            let _ = write!(s, "edge {a} {b} size={:.4} scope=", clique_size(&sep.scope, &self.cards));
            write_vars(&mut s, &sep.scope);
            s.push('\n');
        }
        s
    }
}

fn write_vars(s: &mut String, vars: &[VarId]) {
    for (i, v) in vars.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clique_size_examples() {
        assert_eq!(clique_size(&[0, 1, 2], &[2, 2, 2]), 3.0);
        assert!((clique_size(&[0, 1, 2], &[2, 3, 4]) - 24f64.log2()).abs() < 1e-12);
        assert!((clique_size(&[0, 1, 2], &[2, 3, 4]) - 4.585).abs() < 1e-3);
        assert_eq!(clique_size(&[], &[2]), 0.0);
    }

    #[test]
    fn single_clique_is_valid() {
        let mut ctf = Ctf::new(vec![2; 3]);
        ctf.add_clique(vec![0, 1, 2]);
        assert!(ctf.check_valid().is_empty());
    }

    #[test]
    fn rip_violation_reported() {
        let mut ctf = Ctf::new(vec![2; 3]);
        let ab = ctf.add_clique(vec![0, 1]);
        let bc = ctf.add_clique(vec![1, 2]);
        ctf.connect(ab, bc);
        assert!(ctf.check_valid().is_empty());
        let ac = ctf.add_clique(vec![0, 2]);
        ctf.connect(bc, ac);
        let report = ctf.check_valid();
        assert!(report.contains(&Violation::RunningIntersection { var: 0 }), "{report:?}");
    }

    #[test]
    fn cycle_maximality_and_sepset_violations() {
        let mut ctf = Ctf::new(vec![2; 3]);
        let a = ctf.add_clique(vec![0, 1]);
        let b = ctf.add_clique(vec![1, 2]);
        let c = ctf.add_clique(vec![1]);
        ctf.connect(a, b);
        ctf.connect(b, c);
        ctf.connect(c, a);
        let report = ctf.check_valid();
        assert!(report.iter().any(|v| matches!(v, Violation::Cycle { .. })));
        assert!(report.contains(&Violation::NonMaximal { clique: c, within: a }));
        ctf.disconnect(c, a);
        ctf.remove_clique(c);
        ctf.disconnect(a, b);
        ctf.connect_with(a, b, Sepset { scope: vec![], belief: None });
        assert_eq!(ctf.check_valid(), vec![Violation::SepsetScope { a, b }]);
    }

    #[test]
    fn perturbed_belief_breaks_calibration() {
        let mut ctf = Ctf::new(vec![2; 3]);
        let a = ctf.add_clique(vec![0, 1]);
        let b = ctf.add_clique(vec![1, 2]);
        ctf.connect(a, b);
        let flat = |s: Vec<VarId>| Factor::constant(s.clone(), vec![2; s.len()], -1.0).unwrap();
        ctf.clique_mut(a).belief = Some(flat(vec![0, 1]));
        ctf.clique_mut(b).belief = Some(flat(vec![1, 2]));
        ctf.sepset_mut(a, b).unwrap().belief = Some(flat(vec![1]));
        assert!(ctf.check_max_calibrated(1e-9).is_empty());
        let mut values = ctf.clique(a).belief.clone().unwrap().values().to_vec();
        values[0] += 0.1;
        ctf.clique_mut(a).belief = Some(Factor::new(vec![0, 1], vec![2, 2], values).unwrap());
        let report = ctf.check_max_calibrated(1e-9);
        assert_eq!(report.len(), 1);
        assert!((report[0].deviation - 0.1).abs() < 1e-12);
    }

    fn path(len: usize) -> (Ctf, Vec<CliqueId>) {
        // C_i = {i, i+1}
        let mut ctf = Ctf::new(vec![2; len + 1]);
        let ids: Vec<CliqueId> = (0..len).map(|i| ctf.add_clique(vec![i, i + 1])).collect();
        for w in ids.windows(2) {
            ctf.connect(w[0], w[1]);
        }
        (ctf, ids)
    }

    #[test]
    fn connecting_subgraph_keeps_path() {
        let (ctf, ids) = path(3);
        let all: BTreeSet<VarId> = ctf.vars();
        assert_eq!(ctf.minimal_connecting_subgraph(&all), ctf);
        // var 0 only in C1, var 3 only in C3
        let sub = ctf.minimal_connecting_subgraph(&BTreeSet::from([0, 3]));
        assert_eq!(sub.clique_ids().collect::<Vec<_>>(), ids);
        let sub = ctf.minimal_connecting_subgraph(&BTreeSet::from([3]));
        assert_eq!(sub.clique_ids().collect::<Vec<_>>(), vec![ids[2]]);
        assert!(sub.check_valid().is_empty());
    }

    #[test]
    fn absorbing_non_maximal_reconnects_neighbors() {
        let mut ctf = Ctf::new(vec![2; 4]);
        let big = ctf.add_clique(vec![0, 1, 2]);
        let small = ctf.add_clique(vec![1, 2]);
        let leaf = ctf.add_clique(vec![2, 3]);
        ctf.connect(big, small);
        ctf.connect(small, leaf);
        ctf.clique_mut(small).factors.push(Factor::scalar(-1.0));
        ctf.remove_non_maximal();
        assert!(!ctf.contains_clique(small));
        assert_eq!(ctf.sepset(big, leaf).unwrap().scope, vec![2]);
        assert_eq!(ctf.clique(big).factors.len(), 1);
        assert!(ctf.check_valid().is_empty());
    }

    #[test]
    fn dump_is_line_oriented() {
        let (ctf, _) = path(2);
        let d = ctf.dump();
        assert_eq!(d, "clique 0 size=2.0000 scope=0,1\nclique 1 size=2.0000 scope=1,2\nedge 0 1 size=1.0000 scope=1\n");
    }
}
