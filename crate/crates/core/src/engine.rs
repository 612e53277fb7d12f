//! Decoding and the outer MPE loop.
//!
//! Each iteration reduces the network by everything known so far, builds the
//! partition sequence and decodes the last partition of every component by
//! traceback. The decoded states join the known set and the loop repeats
//! until every variable has a state.

use alloc::vec::Vec;

use crate::approximate::{ApproxConfig, VariablePriority};
use crate::assignment::Assignment;
use crate::build::{run_ibia, IbiaConfig, PartitionSequence, PartitionStats};
use crate::ctf::{CliqueId, Ctf};
use crate::factor::{Factor, TieBreak};
use crate::network::DiscreteNetwork;
use crate::{Error, Result};

/// Beliefs closer than this to the tree maximum count as attaining it when
/// picking the traceback root.
const ROOT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub mcs_p: f64,
    pub mcs_im: f64,
    pub mcs_im_floor: f64,
    pub seed: u64,
    pub priority: VariablePriority,
    /// Retry a dead-end decode with another root, then restart with the random
    /// ordering.
    pub fallback: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mcs_p: 20.0,
            mcs_im: 15.0,
            mcs_im_floor: 2.0,
            seed: 0,
            priority: VariablePriority::FewestCliques,
            fallback: true,
        }
    }
}

impl EngineConfig {
    pub fn ibia(&self, priority: VariablePriority) -> IbiaConfig {
        IbiaConfig {
            mcs_p: self.mcs_p,
            approx: ApproxConfig { mcs_im: self.mcs_im, tie_seed: self.seed, priority },
            mcs_im_floor: self.mcs_im_floor,
            keep_all: false,
        }
    }

    fn tie_break(&self, priority: VariablePriority, salt: u64) -> TieBreak {
        match priority {
            VariablePriority::Random => TieBreak::seeded(self.seed.wrapping_add(salt)),
            VariablePriority::FewestCliques => TieBreak::Lowest,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    /// Known variables (evidence included) when the iteration started.
    pub known_before: usize,
    /// Known variables after merging the decoded states.
    pub known_after: usize,
    /// Partition count of each component.
    pub partitions: Vec<usize>,
    /// Stats of every partition, component by component.
    pub stats: Vec<PartitionStats>,
    /// Traceback needed the second root.
    pub decode_retried: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpeResult {
    /// States of every variable, evidence included.
    pub assignment: Assignment,
    /// Log-probability of `assignment` under the input network; `-inf` when zero.
    pub log_mpe: f64,
    /// Estimate of the log max-marginal from the first iteration.
    pub log_maxmarg_estimate: f64,
    pub iterations: usize,
    /// Most partitions of any component in any iteration.
    pub max_partitions: usize,
    pub trace: Vec<IterationTrace>,
    /// The run was restarted with the random variable ordering.
    pub restarted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpeFailure {
    pub error: Error,
    /// States known when the run stopped, evidence included.
    pub partial: Assignment,
    pub trace: Vec<IterationTrace>,
    pub log_maxmarg_estimate: Option<f64>,
}

impl From<Error> for MpeFailure {
    fn from(error: Error) -> Self {
        MpeFailure { error, partial: Assignment::new(), trace: Vec::new(), log_maxmarg_estimate: None }
    }
}

/// Signed log-space errors against an exact optimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaMetrics {
    pub delta_maxmarg: f64,
    /// `None` when the decoded assignment has zero probability.
    pub delta_mpe: Option<f64>,
}

pub fn delta_metrics(result: &MpeResult, exact: f64) -> DeltaMetrics {
    DeltaMetrics {
        delta_maxmarg: result.log_maxmarg_estimate - exact,
        delta_mpe: (result.log_mpe > f64::NEG_INFINITY).then_some(result.log_mpe - exact),
    }
}

/// Sum over components of the largest belief in their last partition, plus
/// the constant factored out by the reduction.
pub fn find_max_marg(parts: &PartitionSequence) -> f64 {
    let mut total = parts.log_constant;
    for ctf in parts.last_forests() {
        for tree in ctf.trees() {
            total += ctf.tree_max(&tree).unwrap_or(f64::NEG_INFINITY);
        }
    }
    total
}

/// Decodes every variable of a max-calibrated forest. States already in
/// `known` are kept and reduce the beliefs they touch.
pub fn traceback(ctf: &Ctf, known: &Assignment, tie: &mut TieBreak) -> Result<Assignment> {
    traceback_from(ctf, known, tie, 0)
}

/// Like [`traceback`], with each tree rooted at its `rank`-th root candidate
/// (wrapping around).
pub fn traceback_from(ctf: &Ctf, known: &Assignment, tie: &mut TieBreak, rank: usize) -> Result<Assignment> {
    let mut out = known.clone();
    for tree in ctf.trees() {
        let candidates = root_candidates(ctf, &tree, known);
        let root = candidates[rank % candidates.len()];
        for (c, _) in ctf.preorder(root) {
            let belief: &Factor = ctf.clique(c).belief.as_ref().ok_or(Error::ZeroBelief { clique: Some(c) })?;
            let reduced = belief.reduce(&out);
            if reduced.scope().is_empty() {
                if reduced.values()[0] == f64::NEG_INFINITY {
                    return Err(Error::DeadEndDecode { clique: c });
                }
                continue;
            }
            let (states, _) = reduced.argmax(tie).map_err(|_| Error::DeadEndDecode { clique: c })?;
            out.extend_from(&states);
        }
    }
    Ok(out)
}

/// Cliques of `tree` ordered as traceback roots: attaining the tree maximum
/// first, then most unassigned variables, then lowest id.
fn root_candidates(ctf: &Ctf, tree: &[CliqueId], known: &Assignment) -> Vec<CliqueId> {
    let best = ctf.tree_max(tree).unwrap_or(f64::NEG_INFINITY);
    let mut order: Vec<(bool, usize, CliqueId)> = tree
        .iter()
        .map(|&c| {
            let clique = ctf.clique(c);
            let attains = clique.belief.as_ref().is_some_and(|b| b.max_value() >= best - ROOT_TOLERANCE);
            let free = clique.scope.iter().filter(|&&v| !known.contains(v)).count();
            (!attains, usize::MAX - free, c)
        })
        .collect();
    order.sort_unstable();
    order.into_iter().map(|(_, _, c)| c).collect()
}

/// Approximate MPE of `net` given `evidence`. `stop` is polled between
/// partitions; returning `true` aborts with [`Error::TimedOut`].
pub fn infer_mpe(
    net: &DiscreteNetwork,
    evidence: &Assignment,
    cfg: &EngineConfig,
    stop: &mut dyn FnMut() -> bool,
) -> core::result::Result<MpeResult, MpeFailure> {
    evidence.check_against(net.cards())?;
    match run(net, evidence, cfg, cfg.priority, stop) {
        Err(f) if cfg.fallback && cfg.priority != VariablePriority::Random && is_dead_end(&f.error) => {
            let mut result = run(net, evidence, cfg, VariablePriority::Random, stop)?;
            result.restarted = true;
            Ok(result)
        }
        other => other,
    }
}

fn is_dead_end(e: &Error) -> bool {
    matches!(e, Error::DeadEndDecode { .. } | Error::ZeroProbabilityEvidence { .. } | Error::ZeroBelief { .. })
}

fn run(
    net: &DiscreteNetwork,
    evidence: &Assignment,
    cfg: &EngineConfig,
    priority: VariablePriority,
    stop: &mut dyn FnMut() -> bool,
) -> core::result::Result<MpeResult, MpeFailure> {
    let ibia = cfg.ibia(priority);
    let mut known = evidence.clone();
    let mut trace: Vec<IterationTrace> = Vec::new();
    let mut estimate: Option<f64> = None;

    macro_rules! bail {
        ($e:expr) => {
            return Err(MpeFailure { error: $e, partial: known, trace, log_maxmarg_estimate: estimate })
        };
    }

    loop {
        let reduced = match net.simplify(&known) {
            Ok(r) => r,
            Err(e) => bail!(e),
        };
        let known_before = known.len();
        known = reduced.known.clone();
        if reduced.families.is_empty() {
            if estimate.is_none() {
                estimate = Some(reduced.log_constant);
            }
            break;
        }
        let parts = match run_ibia(&reduced, &ibia, stop) {
            Ok(p) => p,
            Err(e) => bail!(e),
        };
        if estimate.is_none() {
            estimate = Some(find_max_marg(&parts));
        }

        let mut decode_retried = false;
        let mut decoded = known.clone();
        for (i, ctf) in parts.last_forests().enumerate() {
            let salt = (trace.len() as u64) << 32 | i as u64;
            let mut tie = cfg.tie_break(priority, salt);
            let states = match traceback(ctf, &decoded, &mut tie) {
                Ok(s) => s,
                Err(Error::DeadEndDecode { .. }) if cfg.fallback => {
                    decode_retried = true;
                    let mut tie = TieBreak::seeded(cfg.seed.wrapping_add(salt).wrapping_add(1));
                    match traceback_from(ctf, &decoded, &mut tie, 1) {
                        Ok(s) => s,
                        Err(e) => bail!(e),
                    }
                }
                Err(e) => bail!(e),
            };
            decoded = states;
        }
        if decoded.len() <= known.len() {
            bail!(Error::Shape("traceback assigned no new variable"));
        }
        known = decoded;
        trace.push(IterationTrace {
            known_before,
            known_after: known.len(),
            partitions: parts.components.iter().map(Vec::len).collect(),
            stats: parts.components.iter().flat_map(|c| c.iter().map(|p| p.stats.clone())).collect(),
            decode_retried,
        });
    }

    let log_mpe = net.log_probability(&known).unwrap_or(f64::NEG_INFINITY);
    let max_partitions = trace.iter().flat_map(|t| t.partitions.iter().copied()).max().unwrap_or(0);
    Ok(MpeResult {
        assignment: known,
        log_mpe,
        log_maxmarg_estimate: estimate.unwrap_or(f64::NEG_INFINITY),
        iterations: trace.len(),
        max_partitions,
        trace,
        restarted: false,
    })
}
