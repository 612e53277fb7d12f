use core::fmt;

use crate::ctf::CliqueId;
use crate::factor::VarId;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A shared variable has different cardinalities in two factors.
    CardinalityMismatch {
        var: VarId,
        left: usize,
        right: usize,
    },
    /// Table length, scope or cardinality list are inconsistent.
    Shape(&'static str),
    /// A table entry is NaN.
    NaN,
    /// The denominator scope is not a subset of the numerator scope.
    NotSubset,
    /// Finite value divided by a zero (log `-inf`) entry.
    DivideByZero,
    /// Every entry of a belief is zero.
    ZeroBelief {
        clique: Option<CliqueId>,
    },
    /// The known states have zero probability under the network.
    ZeroProbabilityEvidence {
        var: VarId,
    },
    UnknownVariable(VarId),
    StateOutOfRange {
        var: VarId,
        state: usize,
        card: usize,
    },
    DuplicateVariable(VarId),
    /// The parent relation has a cycle through this variable.
    Cyclic(VarId),
    /// A single family does not fit under the build bound.
    InfeasibleBound {
        var: Option<VarId>,
        size: f64,
        bound: f64,
    },
    /// The oracle refuses networks above its state-space cap.
    StateSpaceTooLarge {
        bits: f64,
        cap: f64,
    },
    /// Traceback reached a clique whose reduced belief is all zero.
    DeadEndDecode {
        clique: CliqueId,
    },
    TimedOut,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::CardinalityMismatch { var, left, right } => {
                write!(f, "variable {var} has cardinality {left} in one factor and {right} in another")
            }
            Error::Shape(msg) => write!(f, "malformed factor: {msg}"),
            Error::NaN => f.write_str("factor contains NaN"),
            Error::NotSubset => f.write_str("denominator scope is not contained in numerator scope"),
            Error::DivideByZero => f.write_str("finite value divided by zero; beliefs are not calibrated"),
            Error::ZeroBelief { clique: Some(c) } => write!(f, "belief of clique {c} is identically zero"),
            Error::ZeroBelief { clique: None } => f.write_str("belief is identically zero"),
            Error::ZeroProbabilityEvidence { var } => {
                write!(f, "known states have zero probability (at variable {var})")
            }
            Error::UnknownVariable(v) => write!(f, "unknown variable {v}"),
            Error::StateOutOfRange { var, state, card } => {
                write!(f, "state {state} out of range for variable {var} with {card} states")
            }
            Error::DuplicateVariable(v) => write!(f, "variable {v} given more than once"),
            Error::Cyclic(v) => write!(f, "parent relation is cyclic through variable {v}"),
            Error::InfeasibleBound { var, size, bound } => {
                match var {
                    Some(v) => write!(f, "family of variable {v} has clique size {size:.3}")?,
                    None => write!(f, "evidence factor has clique size {size:.3}")?,
                }
                write!(f, " which exceeds the bound {bound}; increase the build bound")
            }
            Error::StateSpaceTooLarge { bits, cap } => {
                write!(f, "state space of {bits:.1} bits exceeds the enumeration cap of {cap} bits")
            }
            Error::DeadEndDecode { clique } => {
                write!(f, "decoding reached clique {clique} with an all-zero reduced belief")
            }
            Error::TimedOut => f.write_str("time limit exceeded"),
        }
    }
}

impl core::error::Error for Error {}
