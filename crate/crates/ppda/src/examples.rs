//! Built-in instances used across the test suite and shipped under
//! `assets/` for the CLI.

use crate::automata::PpdaSpec;
use crate::format::parse_spec;

/// A three-state fully probabilistic pPDA whose configurations `pXZ` and
/// `rX` are bisimilar. The `p,q`-part over `{X,Z}` is a one-counter
/// automaton; the `r`-part over `{X,X',Y}` is a single-state pPDA.
pub const EXAMPLE1_TEXT: &str = "\
states: p q r
stack: X X' Y Z
actions: a
p X a -> 0.5 q X X | 0.5 p .
q X a -> 1 p X X
r X a -> 0.3 r Y X | 0.2 r Y X' | 0.5 r .
r X' a -> 0.4 r Y X | 0.1 r Y X' | 0.5 r .
r Y a -> 1 r X X
";

/// Restriction of [`EXAMPLE1_TEXT`] to states `p,q` and symbols `X,Z`.
pub const EXAMPLE1_POCA_TEXT: &str = "\
states: p q
stack: X Z
actions: a
p X a -> 0.5 q X X | 0.5 p .
q X a -> 1 p X X
";

/// Restriction of [`EXAMPLE1_TEXT`] to state `r` and symbols `X,X',Y`.
pub const EXAMPLE1_PBPA_TEXT: &str = "\
states: r
stack: X X' Y
actions: a
r X a -> 0.3 r Y X | 0.2 r Y X' | 0.5 r .
r X' a -> 0.4 r Y X | 0.1 r Y X' | 0.5 r .
r Y a -> 1 r X X
";

pub fn example1() -> PpdaSpec {
    parse_spec(EXAMPLE1_TEXT).expect("built-in spec parses")
}

pub fn example1_poca() -> PpdaSpec {
    parse_spec(EXAMPLE1_POCA_TEXT).expect("built-in spec parses")
}

pub fn example1_pbpa() -> PpdaSpec {
    parse_spec(EXAMPLE1_PBPA_TEXT).expect("built-in spec parses")
}
