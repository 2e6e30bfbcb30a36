//! Exact bisimilarity checking for probabilistic pushdown automata.
//!
//! The library provides:
//!
//! - an exact-rational data model for probabilistic pushdown automata
//!   (pPDA) and their one-counter (pOCA), single-state (pBPA) and visibly
//!   (pvPDA) subclasses, with validation and classification
//!   ([`automata`], [`format`]);
//! - bounded bisimilarity via deterministic ball unfolding and partition
//!   refinement ([`semantics`]);
//! - a weight-erasing reduction from probabilistic to nondeterministic
//!   pushdown automata that preserves bisimilarity ([`reduction`]);
//! - structural analysis of one-counter automata: the underlying finite
//!   system, incompatibility distances, a bounded-grid decision procedure
//!   and a periodic-colouring certificate verifier ([`oca`], [`cert`]);
//! - an exact decision procedure for visibly pushdown automata built on
//!   antichain-represented forcing relations and Kleene iteration
//!   ([`vpda`]);
//! - executable hardness gadgets: AND/OR probabilistic gadgets, the
//!   alternating-automaton to one-counter reduction and the
//!   reachability-game to visibly-pushdown reduction ([`gadgets`]).
//!
//! All arithmetic is exact; there are no tolerances anywhere. Data-parallel
//! inner loops run on rayon when the `parallel` feature (default) is
//! enabled and fall back to sequential execution otherwise, with identical
//! results either way.

pub mod automata;
pub mod examples;
pub mod exec;
pub mod format;
pub mod oca;
pub mod rational;
pub mod reduction;
pub mod semantics;

pub use automata::{
    ActionId, Configuration, Distribution, Plts, PpdaSpec, Rule, StackWord, StateId, SubclassSet,
    SymId, ValidationReport, Visibility,
};
pub use rational::Rational;
