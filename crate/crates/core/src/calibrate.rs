//! Two-pass max-product belief propagation on clique tree forests.

use alloc::vec::Vec;

use crate::ctf::{CliqueId, Ctf};
use crate::factor::Factor;
use crate::{Error, Result};

/// Sets every clique belief to the product of its assigned factors, then
/// max-calibrates each tree.
pub fn calibrate(ctf: &mut Ctf) -> Result<()> {
    let ids: Vec<CliqueId> = ctf.clique_ids().collect();
    for c in ids {
        let clique = ctf.clique(c);
        let cards: Vec<usize> = clique.scope.iter().map(|&v| ctf.cards()[v]).collect();
        let mut belief = Factor::constant(clique.scope.clone(), cards, 0.0)?;
        for f in &clique.factors {
            belief = belief.product(f)?;
        }
        if belief.max_value() == f64::NEG_INFINITY {
            return Err(Error::ZeroBelief { clique: Some(c) });
        }
        ctf.clique_mut(c).belief = Some(belief);
    }
    let edges: Vec<(CliqueId, CliqueId)> = ctf.edges().map(|(k, _)| k).collect();
    for (a, b) in edges {
        ctf.sepset_mut(a, b).expect("edge exists").belief = None;
    }
    propagate(ctf)
}

/// Runs the upward and downward passes on the current beliefs. Missing sepset
/// beliefs start at one. Running it on a calibrated forest leaves the beliefs
/// unchanged up to rounding.
pub fn propagate(ctf: &mut Ctf) -> Result<()> {
    for tree in ctf.trees() {
        let root = *tree.iter().max().expect("nonempty tree");
        let order = ctf.preorder(root);
        for &(c, parent) in order.iter().rev() {
            if let Some(p) = parent {
                pass_message(ctf, c, p)?;
            }
        }
        for &(c, parent) in &order {
            if let Some(p) = parent {
                pass_message(ctf, p, c)?;
            }
        }
    }
    Ok(())
}

/// Max-marginal of `belief` onto `sepset_scope`.
pub fn max_message(belief: &Factor, sepset_scope: &[usize]) -> Factor {
    belief.max_onto(sepset_scope)
}

/// Belief-update message: the receiver is multiplied by the new sepset
/// belief divided by the old one.
fn pass_message(ctf: &mut Ctf, from: CliqueId, to: CliqueId) -> Result<()> {
    let sep_scope = ctf.sepset(from, to).expect("edge exists").scope.clone();
    let msg =
        max_message(ctf.clique(from).belief.as_ref().ok_or(Error::ZeroBelief { clique: Some(from) })?, &sep_scope);
    let update = match &ctf.sepset(from, to).expect("edge exists").belief {
        Some(old) => msg.divide(old)?,
        None => msg.clone(),
    };
    let target = ctf.clique_mut(to);
    let belief = target.belief.as_ref().ok_or(Error::ZeroBelief { clique: Some(to) })?;
    target.belief = Some(belief.product(&update)?);
    ctf.sepset_mut(from, to).expect("edge exists").belief = Some(msg);
    Ok(())
}
