use alloc::collections::btree_map::{self, BTreeMap};
use alloc::vec::Vec;

use crate::factor::VarId;
use crate::{Error, Result};

/// Partial or complete mapping from variable to state index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Assignment {
    states: BTreeMap<VarId, usize>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an assignment from pairs, rejecting duplicate variables.
    pub fn from_pairs<I: IntoIterator<Item = (VarId, usize)>>(pairs: I) -> Result<Self> {
        let mut a = Self::new();
        for (v, s) in pairs {
            if a.states.insert(v, s).is_some() {
                return Err(Error::DuplicateVariable(v));
            }
        }
        Ok(a)
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.states.get(&var).copied()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.states.contains_key(&var)
    }

    pub fn insert(&mut self, var: VarId, state: usize) -> Option<usize> {
        self.states.insert(var, state)
    }

    pub fn remove(&mut self, var: VarId) -> Option<usize> {
        self.states.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.states.iter().map(|(&v, &s)| (v, s))
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.states.keys().copied()
    }

    /// Copies every entry of `other` into `self`, overwriting shared keys.
    pub fn extend_from(&mut self, other: &Assignment) {
        for (v, s) in other.iter() {
            self.states.insert(v, s);
        }
    }

    /// Checks every state against `cards`, indexed by variable id.
    pub fn check_against(&self, cards: &[usize]) -> Result<()> {
        for (v, s) in self.iter() {
            let card = *cards.get(v).ok_or(Error::UnknownVariable(v))?;
            if s >= card {
                return Err(Error::StateOutOfRange { var: v, state: s, card });
            }
        }
        Ok(())
    }

    /// Dense vector of states for variables `0..n`, or `None` if any is missing.
    pub fn to_dense(&self, n: usize) -> Option<Vec<usize>> {
        (0..n).map(|v| self.get(v)).collect()
    }
}

impl FromIterator<(VarId, usize)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (VarId, usize)>>(iter: I) -> Self {
        Self { states: iter.into_iter().collect() }
    }
}

impl<'a> IntoIterator for &'a Assignment {
    type Item = (&'a VarId, &'a usize);
    type IntoIter = btree_map::Iter<'a, VarId, usize>;

    fn into_iter(self) -> Self::IntoIter {
        self.states.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_pairs_rejected() {
        assert_eq!(Assignment::from_pairs([(1, 0), (1, 1)]), Err(Error::DuplicateVariable(1)));
    }

    #[test]
    fn state_range_checked() {
        let a = Assignment::from_pairs([(0, 2)]).unwrap();
        assert!(matches!(a.check_against(&[2]), Err(Error::StateOutOfRange { .. })));
        assert!(matches!(a.check_against(&[]), Err(Error::UnknownVariable(0))));
        assert!(a.check_against(&[3]).is_ok());
    }
}
