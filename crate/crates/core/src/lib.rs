//! Exact analysis lab for finite two-party secure function evaluation (SFE) in the
//! random-oracle model.
//!
//! The crate decides Kushilevitz decomposability of finite function tables and
//! synthesizes perfectly secure plain-model protocols, enumerates small
//! random-oracle protocols into an exact augmented transcript tree (including a
//! deterministic heavy-query eavesdropper), computes distinguishing frontiers on
//! that tree, and mounts the curious-Bob oracle-editing attack to measure
//! distinguishing advantage — everything on exact rational arithmetic.
//!
//! Modules:
//! * [`prob`] — exact finite distributions, statistical distance, and reusable
//!   probability-lemma checkers.
//! * [`func`] — function tables, cuts, decomposition, protocol synthesis,
//!   common-information, redundancy removal, classification.
//! * [`dsl`] — the `.sfe` s-expression protocol language (parser, printer,
//!   next-message evaluation).
//! * [`exec`] — lazy random-oracle simulation and exact transcript-tree
//!   construction with per-node view posteriors.
//! * [`eve`] — the heavy-query eavesdropper strategy and its contract audits.
//! * [`frontier`] — distinguishing frontiers and the associated inequality checks.
//! * [`attack`] — minor selection, the oracle-editing curious-Bob attack, and
//!   advantage measurement.

pub mod attack;
pub mod bits;
pub mod dsl;
pub mod eve;
pub mod exec;
pub mod frontier;
pub mod func;
pub mod prob;
pub mod ratio;

/// Exact rational scalar used on every probability path in this crate.
pub type Rational = num::BigRational;

/// The two protocol parties. Alice speaks on odd rounds, Bob on even rounds.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
pub enum Side {
    Alice,
    Bob,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Alice => Side::Bob,
            Side::Bob => Side::Alice,
        }
    }

    /// Which party speaks at a given 1-based protocol round.
    pub fn speaker(round: usize) -> Side {
        if round % 2 == 1 {
            Side::Alice
        } else {
            Side::Bob
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Alice => write!(f, "alice"),
            Side::Bob => write!(f, "bob"),
        }
    }
}

pub use bits::Bits;
pub use prob::{FiniteDistribution, JointDistribution};
