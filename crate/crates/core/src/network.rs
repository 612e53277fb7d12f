//! Discrete Bayesian networks and their simplification under known states.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::assignment::Assignment;
use crate::factor::{Factor, VarId};
use crate::{Error, Result};

/// A DAG of discrete variables with one CPD per variable, in log space.
///
/// The CPD of variable `v` has scope `{v} ∪ parents(v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteNetwork {
    cards: Vec<usize>,
    parents: Vec<Vec<VarId>>,
    cpds: Vec<Factor>,
}

impl DiscreteNetwork {
    /// Validates structure: scopes, cardinalities and acyclicity.
    /// Normalization is checked separately by [`Self::normalization_error`].
    pub fn new(cards: Vec<usize>, parents: Vec<Vec<VarId>>, cpds: Vec<Factor>) -> Result<Self> {
        let n = cards.len();
        if parents.len() != n || cpds.len() != n {
            return Err(Error::Shape("one parent list and one CPD per variable required"));
        }
        if cards.contains(&0) {
            return Err(Error::Shape("cardinality must be at least 1"));
        }
        for (v, (pa, cpd)) in parents.iter().zip(&cpds).enumerate() {
            let mut family: Vec<VarId> = pa.clone();
            family.push(v);
            for &u in &family {
                if u >= n {
                    return Err(Error::UnknownVariable(u));
                }
            }
            family.sort_unstable();
            if family.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::DuplicateVariable(v));
            }
            if cpd.scope() != family.as_slice() {
                return Err(Error::Shape("CPD scope differs from the variable's family"));
            }
            for (u, c) in cpd.scope().iter().zip(cpd.cards()) {
                if cards[*u] != *c {
                    return Err(Error::CardinalityMismatch { var: *u, left: cards[*u], right: *c });
                }
            }
        }
        let net = Self { cards, parents, cpds };
        net.topological_order()?;
        Ok(net)
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn parents(&self, v: VarId) -> &[VarId] {
        &self.parents[v]
    }

    pub fn cpd(&self, v: VarId) -> &Factor {
        &self.cpds[v]
    }

    pub fn cpds(&self) -> &[Factor] {
        &self.cpds
    }

    /// Kahn's algorithm, ties broken by lowest id.
    pub fn topological_order(&self) -> Result<Vec<VarId>> {
        let n = self.num_vars();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (v, pa) in self.parents.iter().enumerate() {
            for &p in pa {
                children[p].push(v);
            }
        }
        let mut ready: BinaryHeap<Reverse<VarId>> = (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&v| indegree[v] > 0).unwrap_or(0);
            return Err(Error::Cyclic(stuck));
        }
        Ok(order)
    }

    /// Largest deviation of any CPD column from summing to one, in linear space.
    pub fn normalization_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, cpd) in self.cpds.iter().enumerate() {
            let parents: Vec<VarId> = cpd.scope().iter().copied().filter(|&u| u != v).collect();
            let mut order = parents.clone();
            order.push(v);
            let table = cpd.values_in_order(&order).expect("order is a permutation of the scope");
            let card = self.cards[v];
            for column in table.chunks(card) {
                let total: f64 = column.iter().map(|&x| libm::exp(x)).sum();
                worst = worst.max(libm::fabs(total - 1.0));
            }
        }
        worst
    }

    /// Sum of CPD entries at a complete assignment; `-inf` for zero probability.
    pub fn log_probability(&self, states: &Assignment) -> Option<f64> {
        let mut total = 0.0;
        for cpd in &self.cpds {
            total += cpd.value_at(states)?;
        }
        Some(total)
    }

    /// Variables grouped into weakly connected components of the DAG, each
    /// sorted, components ordered by smallest member.
    pub fn component_vars(&self) -> Vec<Vec<VarId>> {
        let mut uf = UnionFind::new(self.num_vars());
        for (v, pa) in self.parents.iter().enumerate() {
            for &p in pa {
                uf.union(v, p);
            }
        }
        uf.groups()
    }

    /// Splits into weakly connected components. Each component is renumbered
    /// densely; the second element maps new ids back to the original ones.
    pub fn connected_dag_components(&self) -> Vec<(DiscreteNetwork, Vec<VarId>)> {
        self.component_vars()
            .into_iter()
            .map(|vars| {
                let index: BTreeMap<VarId, VarId> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
                let cards = vars.iter().map(|&v| self.cards[v]).collect();
                let parents = vars.iter().map(|&v| self.parents[v].iter().map(|p| index[p]).collect()).collect();
                let cpds = vars
                    .iter()
                    .map(|&v| {
                        let cpd = &self.cpds[v];
                        let scope = cpd.scope().iter().map(|u| index[u]).collect();
                        let order: Vec<VarId> = cpd.scope().to_vec();
                        let values = cpd.values_in_order(&order).expect("identity order");
                        Factor::new(scope, cpd.cards().to_vec(), values).expect("renumbered CPD is well formed")
                    })
                    .collect();
                let net = DiscreteNetwork { cards, parents, cpds };
                (net, vars)
            })
            .collect()
    }

    /// Reduces the network under `known` states. See [`ReducedNetwork`].
    ///
    /// Outgoing edges of known variables disappear because every CPD is
    /// sliced at the known states. A variable whose sliced CPD keeps no parent
    /// and has a single nonzero entry is promoted to known, repeated to a
    /// fixed point. A known variable whose fully sliced CPD is zero makes the
    /// known set inconsistent.
    pub fn simplify(&self, known: &Assignment) -> Result<ReducedNetwork> {
        known.check_against(&self.cards)?;
        let order = self.topological_order()?;
        let mut known = known.clone();
        loop {
            let mut promoted = false;
            for &v in &order {
                if known.contains(v) {
                    continue;
                }
                let r = self.cpds[v].reduce(&known);
                if r.scope() != [v] {
                    continue;
                }
                let mut support = r.values().iter().enumerate().filter(|(_, x)| **x > f64::NEG_INFINITY);
                if let (Some((s, _)), None) = (support.next(), support.next()) {
                    known.insert(v, s);
                    promoted = true;
                }
            }
            if !promoted {
                break;
            }
        }

        let position: BTreeMap<VarId, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut families: Vec<(usize, Family)> = Vec::new();
        let mut owner: BTreeMap<VarId, usize> = BTreeMap::new();
        let mut residuals = Vec::new();
        let mut log_constant = 0.0;
        for &v in &order {
            let r = self.cpds[v].reduce(&known);
            if !known.contains(v) {
                owner.insert(v, families.len());
                families.push((position[&v], Family { child: Some(v), factor: r }));
            } else if r.scope().is_empty() {
                let c = r.values()[0];
                if c == f64::NEG_INFINITY {
                    return Err(Error::ZeroProbabilityEvidence { var: v });
                }
                log_constant += c;
            } else {
                if r.max_value() == f64::NEG_INFINITY {
                    return Err(Error::ZeroProbabilityEvidence { var: v });
                }
                residuals.push(r);
            }
        }
        // fold each residual into the family of its topologically last variable
        // when that family covers it, otherwise keep it as a child-less family
        for r in residuals {
            let last = *r.scope().iter().max_by_key(|u| position[u]).expect("nonempty residual scope");
            let slot = owner[&last];
            let fam = &mut families[slot].1;
            if r.scope().iter().all(|u| fam.factor.contains(*u)) {
                fam.factor = fam.factor.product(&r)?;
            } else {
                families.push((position[&last], Family { child: None, factor: r }));
            }
        }
        families.sort_by_key(|(pos, fam)| (*pos, fam.child.is_none()));
        Ok(ReducedNetwork {
            cards: self.cards.clone(),
            known,
            families: families.into_iter().map(|(_, f)| f).collect(),
            log_constant,
        })
    }
}

/// A factor to be placed into a clique tree: the reduced CPD of `child`, or a
/// child-less factor left over from a known variable with unknown parents.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub child: Option<VarId>,
    pub factor: Factor,
}

impl Family {
    pub fn scope(&self) -> &[VarId] {
        self.factor.scope()
    }

    /// Scope variables other than the child.
    pub fn parents(&self) -> impl Iterator<Item = VarId> + '_ {
        self.factor.scope().iter().copied().filter(move |&u| Some(u) != self.child)
    }
}

/// Result of [`DiscreteNetwork::simplify`]: the families over unknown
/// variables in topological feed order, the enlarged known set and the log
/// of the constant factored out by the slicing.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedNetwork {
    pub cards: Vec<usize>,
    pub known: Assignment,
    pub families: Vec<Family>,
    pub log_constant: f64,
}

impl ReducedNetwork {
    pub fn unknown_vars(&self) -> Vec<VarId> {
        self.families.iter().filter_map(|f| f.child).collect()
    }

    /// Families grouped by connected components of their scopes, preserving
    /// feed order inside each group.
    pub fn components(&self) -> Vec<Vec<Family>> {
        let mut uf = UnionFind::new(self.cards.len());
        for fam in &self.families {
            for w in fam.scope().windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        let mut groups: BTreeMap<VarId, Vec<Family>> = BTreeMap::new();
        let mut order: Vec<VarId> = Vec::new();
        for fam in &self.families {
            let root = uf.find(fam.scope()[0]);
            if !groups.contains_key(&root) {
                order.push(root);
            }
            groups.entry(root).or_default().push(fam.clone());
        }
        order.into_iter().map(|r| groups.remove(&r).unwrap_or_default()).collect()
    }

    /// Scope variables of every family; the unknown variables in the reduced model.
    pub fn scope_vars(&self) -> BTreeSet<VarId> {
        self.families.iter().flat_map(|f| f.scope().iter().copied()).collect()
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }

    fn groups(&mut self) -> Vec<Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..self.parent.len() {
            let r = self.find(x);
            map.entry(r).or_default().push(x);
        }
        map.into_values().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn ln(x: f64) -> f64 {
        libm::log(x)
    }

    /// A -> B with P(A) = (.6,.4), P(B|A) rows (.9,.1),(.2,.8).
    fn chain() -> DiscreteNetwork {
        let pa = Factor::new(vec![0], vec![2], vec![ln(0.6), ln(0.4)]).unwrap();
        let pb = Factor::new(vec![0, 1], vec![2, 2], [0.9, 0.1, 0.2, 0.8].map(ln).to_vec()).unwrap();
        DiscreteNetwork::new(vec![2, 2], vec![vec![], vec![0]], vec![pa, pb]).unwrap()
    }

    #[test]
    fn rejects_cycles_and_bad_scopes() {
        let f01 = Factor::constant(vec![0, 1], vec![2, 2], ln(0.5)).unwrap();
        let cyc = DiscreteNetwork::new(vec![2, 2], vec![vec![1], vec![0]], vec![f01.clone(), f01.clone()]);
        assert!(matches!(cyc, Err(Error::Cyclic(_))));
        let bad = DiscreteNetwork::new(vec![2, 2], vec![vec![], vec![]], vec![f01.clone(), f01]);
        assert!(matches!(bad, Err(Error::Shape(_))));
    }

    #[test]
    fn simplify_without_knowns_is_identity() {
        let net = chain();
        let red = net.simplify(&Assignment::new()).unwrap();
        assert!(red.known.is_empty());
        assert_eq!(red.log_constant, 0.0);
        assert_eq!(red.families.len(), 2);
        for (fam, v) in red.families.iter().zip([0, 1]) {
            assert_eq!(fam.child, Some(v));
            assert_eq!(&fam.factor, net.cpd(v));
        }
    }

    #[test]
    fn evidence_on_child_leaves_factor_over_parent() {
        let net = chain();
        let red = net.simplify(&Assignment::from_pairs([(1, 0)]).unwrap()).unwrap();
        assert_eq!(red.families.len(), 1);
        let fam = &red.families[0];
        assert_eq!(fam.child, Some(0));
        assert_eq!(fam.scope(), &[0]);
        // P(A) * P(B=0|A) folded into A's family
        let expect = [ln(0.6) + ln(0.9), ln(0.4) + ln(0.2)];
        assert_eq!(fam.factor.values(), &expect);
        assert!(red.families.iter().all(|f| !f.scope().contains(&1)));
    }

    #[test]
    fn determinism_promotes_and_cascades() {
        // A -> C with P(C|A) = identity, C -> D identity, A evidence 1
        let pa = Factor::new(vec![0], vec![2], vec![ln(0.3), ln(0.7)]).unwrap();
        let delta = [0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0].to_vec();
        let pc = Factor::new(vec![0, 1], vec![2, 2], delta.clone()).unwrap();
        let pd = Factor::new(vec![1, 2], vec![2, 2], delta).unwrap();
        let net = DiscreteNetwork::new(vec![2, 2, 2], vec![vec![], vec![0], vec![1]], vec![pa, pc, pd]).unwrap();
        let evidence = Assignment::from_pairs([(0, 1)]).unwrap();
        let red = net.simplify(&evidence).unwrap();
        assert_eq!(red.known.get(1), Some(1));
        assert_eq!(red.known.get(2), Some(1));
        assert!(red.families.is_empty());
        // brute force: every configuration with C != 1 has zero mass given A=1
        let (best, value) = oracle::brute_force_mpe(&net, &evidence).unwrap();
        assert_eq!(best.get(1), Some(1));
        assert!((value - red.log_constant).abs() < 1e-12);
        for c in 0..2 {
            for d in 0..2 {
                let a = Assignment::from_pairs([(0, 1), (1, c), (2, d)]).unwrap();
                let p = net.log_probability(&a).unwrap();
                assert_eq!(p > f64::NEG_INFINITY, c == 1 && d == 1);
            }
        }
    }

    #[test]
    fn zero_probability_evidence_detected() {
        let pa = Factor::new(vec![0], vec![2], vec![0.0, f64::NEG_INFINITY]).unwrap();
        let net = DiscreteNetwork::new(vec![2], vec![vec![]], vec![pa]).unwrap();
        let err = net.simplify(&Assignment::from_pairs([(0, 1)]).unwrap());
        assert_eq!(err, Err(Error::ZeroProbabilityEvidence { var: 0 }));
    }

    #[test]
    fn residual_spanning_two_parents_becomes_childless_family() {
        // A, B -> C; C known. Residual over {A,B} is not covered by A's or B's family.
        let pa = Factor::new(vec![0], vec![2], vec![ln(0.5); 2]).unwrap();
        let pb = Factor::new(vec![1], vec![2], vec![ln(0.5); 2]).unwrap();
        let pc = Factor::new(vec![0, 1, 2], vec![2, 2, 2], [0.9, 0.1, 0.5, 0.5, 0.4, 0.6, 0.2, 0.8].map(ln).to_vec())
            .unwrap();
        let net = DiscreteNetwork::new(vec![2, 2, 2], vec![vec![], vec![], vec![0, 1]], vec![pa, pb, pc]).unwrap();
        let red = net.simplify(&Assignment::from_pairs([(2, 1)]).unwrap()).unwrap();
        assert_eq!(red.families.len(), 3);
        let last = red.families.last().unwrap();
        assert_eq!(last.child, None);
        assert_eq!(last.scope(), &[0, 1]);
        assert_eq!(red.components().len(), 1);
    }

    #[test]
    fn components_of_independent_variables() {
        let f0 = Factor::new(vec![0], vec![2], vec![ln(0.5); 2]).unwrap();
        let f1 = Factor::new(vec![1], vec![2], vec![ln(0.5); 2]).unwrap();
        let net = DiscreteNetwork::new(vec![2, 2], vec![vec![], vec![]], vec![f0, f1]).unwrap();
        let comps = net.connected_dag_components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[1].1, vec![1]);
        let one = chain().connected_dag_components();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].0, chain());
    }
}
