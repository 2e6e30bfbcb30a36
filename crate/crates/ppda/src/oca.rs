//! Structural analysis of probabilistic one-counter automata.
//!
//! A one-counter automaton is a pushdown automaton over `{X, Z}` with `Z`
//! pinned to the stack bottom, so a configuration is a control state plus a
//! counter value. The analysis built here:
//!
//! - folds the counter away into the *underlying finite system* (each rule
//!   contributes its successor-state marginal);
//! - computes the configurations *incompatible* with that finite system at
//!   depth `k = |Q|`, and exact shortest distances into that set;
//! - classifies points of the `(m, n, state-pair)` grid: away from the
//!   initial region and the finitely many linear belts, equal distances and
//!   depth-`k` equivalence settle bisimilarity outright;
//! - decides bisimilarity on a bounded grid region by a deterministic
//!   greatest fixpoint that erases locally inconsistent points, certifying
//!   positives via the consistency principle (a consistent relation is
//!   contained in bisimilarity) and refuting negatives by bounded
//!   refinement.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::collections::hash_map::Entry;

use thiserror::Error;

use crate::automata::{ActionId, Configuration, Distribution, Plts, PpdaSpec, StateId, SymId};
use crate::exec::{map_collect, Exec};
use crate::rational::Rational;
use crate::semantics::{
    bisim_depth, refine_levels, unfold_from, DepthVerdict, InternedTransitions, LevelStep, Limits,
    SemanticsError,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OcaError {
    #[error("spec is not a one-counter automaton")]
    NotPoca,
    #[error("configuration is not of the form qX^mZ")]
    BadShape,
    #[error("distance computation unresolved within {max_steps} steps")]
    DistBudget { max_steps: u64 },
    #[error("consistency check hit an unexpanded state")]
    Frontier,
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// A validated one-counter view of a spec.
pub struct Poca<'a> {
    pub spec: &'a PpdaSpec,
    pub x: SymId,
    pub z: SymId,
    /// `|Q|`; the depth at which the underlying finite system stabilizes.
    pub k: u32,
}

impl<'a> Poca<'a> {
    pub fn new(spec: &'a PpdaSpec) -> Result<Self, OcaError> {
        let classes = spec.classify().map_err(|_| OcaError::NotPoca)?;
        if !classes.poca {
            return Err(OcaError::NotPoca);
        }
        Ok(Poca {
            spec,
            x: spec.sym_id("X").expect("poca has X"),
            z: spec.sym_id("Z").expect("poca has Z"),
            k: spec.control_states.len() as u32,
        })
    }

    /// The configuration `q X^m Z`.
    pub fn config(&self, q: StateId, m: u32) -> Configuration {
        let mut stack = vec![self.x; m as usize];
        stack.push(self.z);
        Configuration::new(q, stack)
    }

    /// Inverse of [`Poca::config`]; `None` when the stack is not `X^m Z`.
    pub fn counter_of(&self, c: &Configuration) -> Option<(StateId, u32)> {
        let (last, init) = c.stack.split_last()?;
        if *last != self.z || init.iter().any(|s| *s != self.x) {
            return None;
        }
        Some((c.state, init.len() as u32))
    }

    /// Outgoing transitions of `(q, m)` in counter form, one entry per rule.
    pub fn transitions_at(&self, q: StateId, m: u32) -> Vec<(ActionId, Vec<(StateId, u32, Rational)>)> {
        let sym = if m > 0 { self.x } else { self.z };
        self.spec
            .rules_for_head(q, sym)
            .map(|(_, rule)| {
                let targets = rule
                    .targets
                    .iter()
                    .map(|(q2, w, p)| {
                        let m2 = if m > 0 {
                            m - 1 + w.len() as u32
                        } else {
                            // Z-rules push Z (counter 0) or XZ (counter 1).
                            w.len() as u32 - 1
                        };
                        (*q2, m2, p.clone())
                    })
                    .collect();
                (rule.action, targets)
            })
            .collect()
    }
}

/// The underlying finite system: the automaton run as if the counter were
/// always positive. Each X-rule contributes the marginal over successor
/// states, summing the probabilities of popping, staying and pushing.
pub fn underlying_flts(poca: &Poca) -> Plts {
    let spec = poca.spec;
    let mut plts = Plts::new(spec.control_states.clone(), spec.actions.clone());
    for (_, rule) in spec
        .rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.sym == poca.x)
    {
        let dist = Distribution::new(
            rule.targets.iter().map(|(q, _, p)| (*q, p.clone())),
        )
        .expect("marginal of a unit-mass distribution");
        plts.add_transition(rule.state, rule.action, dist);
    }
    plts
}

/// Builds a combined refinement input: the ball's states followed by the
/// finite system's states, sharing action identifiers.
fn union_with_flts(
    ball: &crate::semantics::Ball,
    flts: &Plts,
) -> (Vec<InternedTransitions>, Vec<u32>, u32) {
    let offset = ball.len() as u32;
    let mut transitions: Vec<InternedTransitions> = ball.transitions.clone();
    let mut budget: Vec<u32> = if ball.closed {
        vec![u32::MAX; ball.len()]
    } else {
        ball.depth.iter().map(|d| ball.radius - d).collect()
    };
    for ts in &flts.transitions {
        transitions.push(Some(
            ts.iter()
                .map(|(a, d)| {
                    (*a, d.iter().map(|(t, p)| (offset + t.0, p.clone())).collect::<Vec<_>>())
                })
                .collect(),
        ));
        budget.push(u32::MAX);
    }
    (transitions, budget, offset)
}

/// Is `q X^m Z` distinguishable from every state of the underlying finite
/// system within `k` steps? Decided on the disjoint union of the depth-`k`
/// ball and the finite system.
pub fn is_incompatible(poca: &Poca, q: StateId, m: u32, limits: &Limits) -> Result<bool, OcaError> {
    let flts = underlying_flts(poca);
    let center = poca.config(q, m);
    let ball = unfold_from(poca.spec, &[center.clone()], poca.k, limits)?;
    let (transitions, budget, offset) = union_with_flts(&ball, &flts);
    let parts = refine_levels(&transitions, &budget, poca.k, limits.exec, |_, _| LevelStep::Continue);
    let last = parts.last().unwrap();
    let center_idx = ball.index[&center];
    Ok((0..flts.n_states() as u32).all(|s| last.same_block(center_idx, offset + s) == Some(false)))
}

/// The set of configurations incompatible with the underlying finite
/// system. Membership forces the counter below `k`, so the scan is
/// complete.
pub fn incompatible_set(poca: &Poca, limits: &Limits) -> Result<Vec<Configuration>, OcaError> {
    let mut out = Vec::new();
    for m in 0..poca.k {
        for q in 0..poca.k {
            let q = StateId(q);
            if is_incompatible(poca, q, m, limits)? {
                out.push(poca.config(q, m));
            }
        }
    }
    Ok(out)
}

/// Result of a shortest-distance query into the incompatible set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DistResult {
    Finite(u64),
    /// The reachable counter graph was exhausted without meeting the set:
    /// the distance is infinite, provably.
    InfiniteProven { explored: usize },
    /// Neither a path nor saturation within the step budget.
    Unresolved { max_steps: u64 },
}

impl DistResult {
    pub fn is_infinite_proven(&self) -> bool {
        matches!(self, DistResult::InfiniteProven { .. })
    }
}

/// Shortest number of transitions (probabilities ignored) from `c` into the
/// incompatible set, by breadth-first search over the counter graph.
pub fn distance_to_incompatible(
    poca: &Poca,
    inc: &BTreeSet<(StateId, u32)>,
    c: &Configuration,
    max_steps: u64,
) -> Result<DistResult, OcaError> {
    let Some(start) = poca.counter_of(c) else {
        return Err(OcaError::BadShape);
    };
    if inc.contains(&start) {
        return Ok(DistResult::Finite(0));
    }
    let mut visited: HashSet<(StateId, u32)> = HashSet::new();
    visited.insert(start);
    let mut frontier = vec![start];
    let mut steps = 0u64;
    while !frontier.is_empty() {
        if steps >= max_steps {
            return Ok(DistResult::Unresolved { max_steps });
        }
        steps += 1;
        let mut next = Vec::new();
        for (q, m) in frontier {
            for (_, targets) in poca.transitions_at(q, m) {
                for (q2, m2, _) in targets {
                    let node = (q2, m2);
                    if inc.contains(&node) {
                        return Ok(DistResult::Finite(steps));
                    }
                    if visited.insert(node) {
                        next.push(node);
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(DistResult::InfiniteProven { explored: visited.len() })
}

/// Precomputed incompatibility data reused across grid queries.
pub struct IncAnalysis {
    pub members: Vec<Configuration>,
    pub set: BTreeSet<(StateId, u32)>,
}

pub fn analyze_incompatible(poca: &Poca, limits: &Limits) -> Result<IncAnalysis, OcaError> {
    let members = incompatible_set(poca, limits)?;
    let set = members
        .iter()
        .map(|c| poca.counter_of(c).expect("members have counter shape"))
        .collect();
    Ok(IncAnalysis { members, set })
}

/// A point of the colouring grid: the pair `(p X^m Z, q X^n Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GridPoint {
    pub m: u32,
    pub n: u32,
    pub p: StateId,
    pub q: StateId,
}

/// Verdict of the background case analysis at a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundVerdict {
    /// Both distances infinite and the pair depth-`k` equivalent: bisimilar.
    Colour1,
    /// Distances differ (or equivalence fails with both infinite): not
    /// bisimilar.
    Colour0,
    /// Both distances finite and equal; the point may lie on a belt, so the
    /// background shortcut does not apply.
    NotBackground,
}

/// Background classification of a single grid point.
pub fn classify_background(
    poca: &Poca,
    inc: &IncAnalysis,
    g: GridPoint,
    k_depth: u32,
    dist_budget: u64,
    limits: &Limits,
) -> Result<BackgroundVerdict, OcaError> {
    let c1 = poca.config(g.p, g.m);
    let c2 = poca.config(g.q, g.n);
    let d1 = distance_to_incompatible(poca, &inc.set, &c1, dist_budget)?;
    let d2 = distance_to_incompatible(poca, &inc.set, &c2, dist_budget)?;
    match (&d1, &d2) {
        (DistResult::Unresolved { max_steps }, _) | (_, DistResult::Unresolved { max_steps }) => {
            Err(OcaError::DistBudget { max_steps: *max_steps })
        }
        (DistResult::Finite(a), DistResult::Finite(b)) => {
            if a == b {
                Ok(BackgroundVerdict::NotBackground)
            } else {
                Ok(BackgroundVerdict::Colour0)
            }
        }
        (DistResult::Finite(_), DistResult::InfiniteProven { .. })
        | (DistResult::InfiniteProven { .. }, DistResult::Finite(_)) => Ok(BackgroundVerdict::Colour0),
        (DistResult::InfiniteProven { .. }, DistResult::InfiniteProven { .. }) => {
            let v = bisim_depth(poca.spec, &c1, &c2, k_depth, limits)?;
            Ok(if v.is_equivalent() {
                BackgroundVerdict::Colour1
            } else {
                BackgroundVerdict::Colour0
            })
        }
    }
}

/// Outcome of a consistency check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consistency {
    Consistent,
    /// First failing pair, with the unmatched action and the side whose
    /// transition could not be answered (true = first component moved).
    Witness { pair: (u32, u32), action: ActionId, from_first: bool },
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, a: u32) -> u32 {
        let mut a = a;
        while self.parent[a as usize] != a {
            let gp = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = gp;
            a = gp;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

fn successor_set(rules: &[(ActionId, Vec<(u32, Rational)>)]) -> BTreeSet<u32> {
    rules
        .iter()
        .flat_map(|(_, ts)| ts.iter().map(|(t, _)| *t))
        .collect()
}

/// Checks each related pair against the local closure condition: every
/// transition of one side must be answered by an equally-labelled
/// transition of the other with matching block masses, where the blocks are
/// the least equivalence generated by the related joint successors.
///
/// `transitions[s]` must be present for every state of a checked pair.
pub fn consistency_check(
    transitions: &[InternedTransitions],
    related: &[(u32, u32)],
) -> Result<Consistency, OcaError> {
    let pair_set: HashSet<(u32, u32)> = related.iter().copied().collect();
    for &(s, t) in related {
        let (Some(s_rules), Some(t_rules)) = (
            transitions[s as usize].as_ref(),
            transitions[t as usize].as_ref(),
        ) else {
            return Err(OcaError::Frontier);
        };
        let s_succ = successor_set(s_rules);
        let t_succ = successor_set(t_rules);
        // Least equivalence containing the related joint successors.
        let mut domain: Vec<u32> = s_succ.union(&t_succ).copied().collect();
        domain.sort_unstable();
        let idx_of: HashMap<u32, u32> = domain
            .iter()
            .enumerate()
            .map(|(i, v)| (*v, i as u32))
            .collect();
        let mut uf = UnionFind::new(domain.len());
        for &a in &s_succ {
            for &b in &t_succ {
                if pair_set.contains(&(a, b)) {
                    uf.union(idx_of[&a], idx_of[&b]);
                }
            }
        }
        let reduced = |rules: &[(ActionId, Vec<(u32, Rational)>)], uf: &mut UnionFind| {
            rules
                .iter()
                .map(|(a, ts)| {
                    let mut mass: BTreeMap<u32, Rational> = BTreeMap::new();
                    for (target, p) in ts {
                        let b = uf.find(idx_of[target]);
                        let e = mass.entry(b).or_insert_with(Rational::zero);
                        *e = &*e + p;
                    }
                    (*a, mass.into_iter().collect::<Vec<_>>())
                })
                .collect::<Vec<_>>()
        };
        let s_red = reduced(s_rules, &mut uf);
        let t_red = reduced(t_rules, &mut uf);
        for (dir_first, from, to) in [(true, &s_red, &t_red), (false, &t_red, &s_red)] {
            for (a, mass) in from {
                if !to.iter().any(|(b, m2)| b == a && m2 == mass) {
                    return Ok(Consistency::Witness { pair: (s, t), action: *a, from_first: dir_first });
                }
            }
        }
    }
    Ok(Consistency::Consistent)
}

/// Bounds and budgets of the grid decision procedure. The polynomial sizes
/// behind the geometric picture are existential, so the region is user
/// configuration; results outside it are reported inconclusive rather than
/// guessed.
#[derive(Debug, Clone)]
pub struct GridBounds {
    pub m_max: u32,
    pub n_max: u32,
    pub k_depth: u32,
    pub dist_budget: u64,
}

impl GridBounds {
    /// Defaults: region `k^2` in both axes, depth `k`, distance budget
    /// scaled to clear the region.
    pub fn for_poca(poca: &Poca) -> Self {
        let k = poca.k;
        GridBounds {
            m_max: k * k,
            n_max: k * k,
            k_depth: k,
            dist_budget: (4 * (k * k + 2) + 16) as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridOutcome {
    /// The pair survived the greatest fixpoint and every colour-1 point of
    /// the final relation is either consistency-checked or a proven
    /// background point: the pair is bisimilar.
    BisimilarCertified,
    /// Bounded refinement distinguished the pair at this level.
    NotBisimilar { level: u32 },
    Inconclusive { reason: String },
}

/// The grid decision data: final colouring of the bounded region plus the
/// verdict for the queried pair.
pub struct GridAnalysis {
    pub bounds: GridBounds,
    pub k: u32,
    /// Colour of every in-bounds point (m <= m_max, n <= n_max).
    pub colour: BTreeMap<GridPoint, bool>,
    pub outcome: GridOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PointState {
    Out,
    Checked,
    /// Background colour 1: bisimilar by the distance argument, kept
    /// without local checks.
    Trusted,
}

/// Decides bounded-grid bisimilarity of `c1` and `c2`.
///
/// Negative answers come from bounded refinement. Positive answers come
/// from the greatest relation on the (margin-extended) grid that survives
/// background refutation and pointwise consistency erasure; margin points
/// that are not background-resolvable are pessimistically dropped, which
/// keeps certification sound and turns pairs whose evidence leaves the
/// region into `Inconclusive`.
pub fn decide_bounded_grid(
    poca: &Poca,
    c1: &Configuration,
    c2: &Configuration,
    bounds: &GridBounds,
    limits: &Limits,
) -> Result<GridAnalysis, OcaError> {
    let (p0, m0) = poca.counter_of(c1).ok_or(OcaError::BadShape)?;
    let (q0, n0) = poca.counter_of(c2).ok_or(OcaError::BadShape)?;
    if m0 > bounds.m_max || n0 > bounds.n_max {
        return Err(OcaError::BadShape);
    }

    // Refutation first: a distinguishing level within the region size.
    let refute_depth = bounds.k_depth + bounds.m_max + bounds.n_max + 2;
    if let DepthVerdict::DistinguishedAt(level) = bisim_depth(poca.spec, c1, c2, refute_depth, limits)? {
        let outcome = GridOutcome::NotBisimilar { level };
        return Ok(GridAnalysis { bounds: bounds.clone(), k: poca.k, colour: BTreeMap::new(), outcome });
    }

    let inc = analyze_incompatible(poca, limits)?;
    let k = poca.k;
    let me = bounds.m_max + 1;
    let ne = bounds.n_max + 1;
    let idx = |m: u32, n: u32, p: u32, q: u32| -> usize {
        (((m * (ne + 1) + n) * k + p) * k + q) as usize
    };

    // Initial relation: background-0 points (and unresolvable margin
    // points) are out, background-1 points are trusted, the rest are
    // subject to consistency.
    let points: Vec<(u32, u32, u32, u32)> = (0..=me)
        .flat_map(|m| {
            (0..=ne).flat_map(move |n| {
                (0..k).flat_map(move |p| (0..k).map(move |q| (m, n, p, q)))
            })
        })
        .collect();
    let init = map_collect(limits.exec, points.clone(), |(m, n, p, q)| {
        let margin = m > bounds.m_max || n > bounds.n_max;
        let g = GridPoint { m, n, p: StateId(p), q: StateId(q) };
        match classify_background(poca, &inc, g, bounds.k_depth, bounds.dist_budget, limits) {
            Ok(BackgroundVerdict::Colour1) => PointState::Trusted,
            Ok(BackgroundVerdict::Colour0) => PointState::Out,
            Ok(BackgroundVerdict::NotBackground) | Err(OcaError::DistBudget { .. }) => {
                if margin {
                    PointState::Out
                } else {
                    PointState::Checked
                }
            }
            // Exploration errors inside classification are rare; treat the
            // point pessimistically rather than aborting the whole grid.
            Err(_) => PointState::Out,
        }
    });
    let mut state: Vec<PointState> = vec![PointState::Out; (me as usize + 1) * (ne as usize + 1) * (k * k) as usize];
    for ((m, n, p, q), s) in points.iter().zip(init) {
        state[idx(*m, *n, *p, *q)] = s;
    }

    // Greatest fixpoint: erase checked points that fail local consistency
    // against the current relation, in deterministic row-major sweeps.
    loop {
        let snapshot = state.clone();
        let verdicts = map_collect(limits.exec, points.clone(), |(m, n, p, q)| {
            if snapshot[idx(m, n, p, q)] != PointState::Checked {
                return true;
            }
            point_consistent(poca, &snapshot, &idx, m, n, StateId(p), StateId(q))
        });
        let mut changed = false;
        for ((m, n, p, q), ok) in points.iter().zip(verdicts) {
            if !ok {
                state[idx(*m, *n, *p, *q)] = PointState::Out;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut colour = BTreeMap::new();
    for (m, n, p, q) in &points {
        if *m <= bounds.m_max && *n <= bounds.n_max {
            colour.insert(
                GridPoint { m: *m, n: *n, p: StateId(*p), q: StateId(*q) },
                state[idx(*m, *n, *p, *q)] != PointState::Out,
            );
        }
    }
    let outcome = if state[idx(m0, n0, p0.0, q0.0)] != PointState::Out {
        GridOutcome::BisimilarCertified
    } else {
        GridOutcome::Inconclusive {
            reason: "pair erased by the bounded fixpoint; its evidence may leave the region".into(),
        }
    };
    Ok(GridAnalysis { bounds: bounds.clone(), k, colour, outcome })
}

/// Local consistency of one grid point against a relation snapshot.
fn point_consistent(
    poca: &Poca,
    state: &[PointState],
    idx: &dyn Fn(u32, u32, u32, u32) -> usize,
    m: u32,
    n: u32,
    p: StateId,
    q: StateId,
) -> bool {
    let s_rules = poca.transitions_at(p, m);
    let t_rules = poca.transitions_at(q, n);
    let s_succ: BTreeSet<(StateId, u32)> = s_rules
        .iter()
        .flat_map(|(_, ts)| ts.iter().map(|(q2, m2, _)| (*q2, *m2)))
        .collect();
    let t_succ: BTreeSet<(StateId, u32)> = t_rules
        .iter()
        .flat_map(|(_, ts)| ts.iter().map(|(q2, m2, _)| (*q2, *m2)))
        .collect();
    let mut domain: Vec<(StateId, u32)> = s_succ.union(&t_succ).copied().collect();
    domain.sort_unstable();
    let pos: HashMap<(StateId, u32), u32> = domain
        .iter()
        .enumerate()
        .map(|(i, v)| (*v, i as u32))
        .collect();
    let mut uf = UnionFind::new(domain.len());
    for &(a, am) in &s_succ {
        for &(b, bm) in &t_succ {
            if state[idx(am, bm, a.0, b.0)] != PointState::Out {
                uf.union(pos[&(a, am)], pos[&(b, bm)]);
            }
        }
    }
    let reduced = |rules: &[(ActionId, Vec<(StateId, u32, Rational)>)], uf: &mut UnionFind| {
        rules
            .iter()
            .map(|(a, ts)| {
                let mut mass: BTreeMap<u32, Rational> = BTreeMap::new();
                for (q2, m2, prob) in ts {
                    let b = uf.find(pos[&(*q2, *m2)]);
                    let e = mass.entry(b).or_insert_with(Rational::zero);
                    *e = &*e + prob;
                }
                (*a, mass.into_iter().collect::<Vec<_>>())
            })
            .collect::<Vec<_>>()
    };
    let s_red = reduced(&s_rules, &mut uf);
    let t_red = reduced(&t_rules, &mut uf);
    for (from, to) in [(&s_red, &t_red), (&t_red, &s_red)] {
        for (a, mass) in from {
            if !to.iter().any(|(b, m2)| b == a && m2 == mass) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::example1_poca;
    use crate::format::{parse_configuration, parse_spec};
    use crate::semantics::plts_bisim_levels;

    fn poca_fixture() -> PpdaSpec {
        example1_poca()
    }

    #[test]
    fn underlying_system_of_the_example() {
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let flts = underlying_flts(&poca);
        let p = flts.state_id("p").unwrap();
        let q = flts.state_id("q").unwrap();
        assert_eq!(flts.transitions[p.0 as usize].len(), 1);
        let (_, d) = &flts.transitions[p.0 as usize][0];
        assert_eq!(d.get(&p), Some(&Rational::new(1, 2)));
        assert_eq!(d.get(&q), Some(&Rational::new(1, 2)));
        let (_, d) = &flts.transitions[q.0 as usize][0];
        assert_eq!(d.get(&p), Some(&Rational::one()));
        assert!(d.is_dirac());
    }

    #[test]
    fn underlying_system_empty_without_x_rules() {
        let spec = parse_spec("states: p\nstack: X Z\nactions: a\np Z a -> 1 p Z\n").unwrap();
        let poca = Poca::new(&spec).unwrap();
        let flts = underlying_flts(&poca);
        assert!(flts.transitions.iter().all(|t| t.is_empty()));
    }

    #[test]
    fn not_poca_is_rejected() {
        let spec = crate::examples::example1();
        assert!(matches!(Poca::new(&spec), Err(OcaError::NotPoca)));
    }

    #[test]
    fn incompatible_set_of_the_example() {
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let inc = analyze_incompatible(&poca, &Limits::default()).unwrap();
        let names: Vec<String> = inc
            .members
            .iter()
            .map(|c| spec.render_configuration(c))
            .collect();
        // pZ and qZ are dead while the finite system is live; pXZ leaks
        // half its mass into the dead class, which no finite state can
        // match at depth two.
        assert_eq!(names, vec!["pZ", "pXZ", "qZ"]);
    }

    #[test]
    fn incompatibility_needs_small_counters() {
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        for m in poca.k..poca.k + 4 {
            for q in 0..poca.k {
                assert!(!is_incompatible(&poca, StateId(q), m, &Limits::default()).unwrap());
            }
        }
    }

    #[test]
    fn distances_in_the_example() {
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let inc = analyze_incompatible(&poca, &Limits::default()).unwrap();
        let p = spec.state_id("p").unwrap();
        let q = spec.state_id("q").unwrap();
        // Frozen from the breadth-first oracle, and matching the linear
        // form: one pop per step down to pXZ.
        for m in 1..=20u32 {
            let d = distance_to_incompatible(&poca, &inc.set, &poca.config(p, m), 200).unwrap();
            assert_eq!(d, DistResult::Finite((m - 1) as u64), "m={m}");
        }
        for m in 1..=20u32 {
            let d = distance_to_incompatible(&poca, &inc.set, &poca.config(q, m), 200).unwrap();
            assert_eq!(d, DistResult::Finite((m + 1) as u64), "m={m}");
        }
        // Members themselves are at distance zero.
        let d = distance_to_incompatible(&poca, &inc.set, &poca.config(p, 0), 200).unwrap();
        assert_eq!(d, DistResult::Finite(0));
    }

    #[test]
    fn empty_incompatible_set_gives_proven_infinity() {
        // Z-rules mirror the X-rule, so counter-zero behaves like the
        // underlying system and nothing is incompatible.
        let spec = parse_spec(
            "states: p\nstack: X Z\nactions: a\np X a -> 1 p X X\np Z a -> 1 p X Z\n",
        )
        .unwrap();
        let poca = Poca::new(&spec).unwrap();
        let inc = analyze_incompatible(&poca, &Limits::default()).unwrap();
        assert!(inc.members.is_empty());
        let p = spec.state_id("p").unwrap();
        let d = distance_to_incompatible(&poca, &inc.set, &poca.config(p, 3), 50).unwrap();
        assert!(matches!(d, DistResult::Unresolved { .. } | DistResult::InfiniteProven { .. }));
    }

    #[test]
    fn background_classification_cases() {
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let inc = analyze_incompatible(&poca, &Limits::default()).unwrap();
        let p = spec.state_id("p").unwrap();
        let q = spec.state_id("q").unwrap();
        let limits = Limits::default();
        // Equal finite distances: possibly a belt point.
        let v = classify_background(
            &poca,
            &inc,
            GridPoint { m: 4, n: 4, p, q: p },
            poca.k,
            100,
            &limits,
        )
        .unwrap();
        assert_eq!(v, BackgroundVerdict::NotBackground);
        // Different finite distances: refuted outright.
        let v = classify_background(
            &poca,
            &inc,
            GridPoint { m: 4, n: 6, p, q },
            poca.k,
            100,
            &limits,
        )
        .unwrap();
        assert_eq!(v, BackgroundVerdict::Colour0);
    }

    #[test]
    fn background_with_empty_incompatible_set_uses_depth_k() {
        let spec = parse_spec(
            "states: p\nstack: X Z\nactions: a\np X a -> 1 p X X\np Z a -> 1 p X Z\n",
        )
        .unwrap();
        let poca = Poca::new(&spec).unwrap();
        let inc = analyze_incompatible(&poca, &Limits::default()).unwrap();
        let p = spec.state_id("p").unwrap();
        let v = classify_background(
            &poca,
            &inc,
            GridPoint { m: 2, n: 7, p, q: p },
            poca.k,
            100,
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(v, BackgroundVerdict::Colour1);
    }

    #[test]
    fn consistency_accepts_identity_and_stabilized_partitions() {
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let flts = underlying_flts(&poca);
        let levels = plts_bisim_levels(&flts, Exec::default());
        let last = levels.last().unwrap();
        let mut related = Vec::new();
        for a in 0..flts.n_states() as u32 {
            for b in 0..flts.n_states() as u32 {
                if last.same_block(a, b) == Some(true) {
                    related.push((a, b));
                }
            }
        }
        let transitions: Vec<InternedTransitions> = flts
            .transitions
            .iter()
            .map(|ts| {
                Some(
                    ts.iter()
                        .map(|(a, d)| (*a, d.iter().map(|(t, p)| (t.0, p.clone())).collect::<Vec<_>>()))
                        .collect(),
                )
            })
            .collect();
        assert_eq!(
            consistency_check(&transitions, &related),
            Ok(Consistency::Consistent)
        );
    }

    #[test]
    fn consistency_rejects_a_bad_pair() {
        // pXZ vs qXZ differ one step in: q is Dirac into a live class, p
        // splits into a dead one.
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let c1 = parse_configuration(&spec, "pXZ").unwrap();
        let c2 = parse_configuration(&spec, "qXZ").unwrap();
        let ball = crate::semantics::explore_closure(&spec, &[c1.clone(), c2.clone()], &Limits::default()).unwrap();
        let a = ball.index[&c1];
        let b = ball.index[&c2];
        let _ = poca;
        match consistency_check(&ball.transitions, &[(a, b)]) {
            Ok(Consistency::Witness { pair, .. }) => assert_eq!(pair, (a, b)),
            other => panic!("expected witness, got {other:?}"),
        }
        // Identity pairs are always consistent.
        assert_eq!(
            consistency_check(&ball.transitions, &[(a, a), (b, b)]),
            Ok(Consistency::Consistent)
        );
    }

    #[test]
    fn consistency_frontier_error() {
        let spec = poca_fixture();
        let c1 = parse_configuration(&spec, "pXZ").unwrap();
        let ball = crate::semantics::unfold_from(&spec, &[c1.clone()], 0, &Limits::default()).unwrap();
        assert_eq!(
            consistency_check(&ball.transitions, &[(0, 0)]),
            Err(OcaError::Frontier)
        );
    }

    #[test]
    fn grid_certifies_identity_pair() {
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let c = parse_configuration(&spec, "pXZ").unwrap();
        let bounds = GridBounds::for_poca(&poca);
        let out = decide_bounded_grid(&poca, &c, &c, &bounds, &Limits::default()).unwrap();
        assert_eq!(out.outcome, GridOutcome::BisimilarCertified);
        // The whole diagonal of both states survives.
        for m in 0..=bounds.m_max {
            for s in 0..poca.k {
                let g = GridPoint { m, n: m, p: StateId(s), q: StateId(s) };
                assert_eq!(out.colour.get(&g), Some(&true), "diagonal {m} {s}");
            }
        }
    }

    #[test]
    fn grid_refutes_distinct_states() {
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let c1 = parse_configuration(&spec, "pXZ").unwrap();
        let c2 = parse_configuration(&spec, "qXZ").unwrap();
        let bounds = GridBounds::for_poca(&poca);
        let out = decide_bounded_grid(&poca, &c1, &c2, &bounds, &Limits::default()).unwrap();
        assert_eq!(out.outcome, GridOutcome::NotBisimilar { level: 2 });
    }

    #[test]
    fn off_diagonal_points_are_erased() {
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let c = parse_configuration(&spec, "pXZ").unwrap();
        let bounds = GridBounds::for_poca(&poca);
        let out = decide_bounded_grid(&poca, &c, &c, &bounds, &Limits::default()).unwrap();
        let p = spec.state_id("p").unwrap();
        let q = spec.state_id("q").unwrap();
        for m in 0..=bounds.m_max {
            for n in 0..=bounds.n_max {
                if m != n {
                    let g = GridPoint { m, n, p, q: p };
                    assert_eq!(out.colour.get(&g), Some(&false), "point {m},{n}");
                }
                let g = GridPoint { m, n, p, q };
                assert_eq!(out.colour.get(&g), Some(&false), "cross point {m},{n}");
            }
        }
    }

    #[test]
    fn simple_cycle_effects_divide_k_factorial() {
        // Counter effects of simple cycles are at most k in absolute value,
        // so they divide k!.
        let spec = poca_fixture();
        let poca = Poca::new(&spec).unwrap();
        let k = poca.k as i64;
        let psi: i64 = (1..=k).product();
        // Enumerate simple cycles over the X-rule state graph.
        let mut edges: Vec<Vec<(u32, i64)>> = vec![Vec::new(); poca.k as usize];
        for rule in spec.rules.iter().filter(|r| r.sym == poca.x) {
            for (q2, w, _) in &rule.targets {
                edges[rule.state.0 as usize].push((q2.0, w.len() as i64 - 1));
            }
        }
        fn dfs(
            edges: &[Vec<(u32, i64)>],
            start: u32,
            node: u32,
            effect: i64,
            visited: &mut Vec<bool>,
            cycles: &mut Vec<i64>,
        ) {
            for (next, delta) in &edges[node as usize] {
                if *next == start {
                    cycles.push(effect + delta);
                } else if !visited[*next as usize] {
                    visited[*next as usize] = true;
                    dfs(edges, start, *next, effect + delta, visited, cycles);
                    visited[*next as usize] = false;
                }
            }
        }
        let mut cycles = Vec::new();
        for s in 0..poca.k {
            let mut visited = vec![false; poca.k as usize];
            visited[s as usize] = true;
            dfs(&edges, s, s, 0, &mut visited, &mut cycles);
        }
        assert!(!cycles.is_empty());
        for effect in cycles {
            assert!(effect.abs() <= k);
            if effect != 0 {
                assert_eq!(psi % effect, 0, "effect {effect} must divide {psi}");
            }
        }
    }
}
