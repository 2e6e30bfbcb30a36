//! Induced transition system of a pushdown automaton, bounded unfolding,
//! distribution equivalence, and the depth-indexed bisimilarity sequence
//! computed by partition refinement.
//!
//! The refinement engine is budget-aware: in a radius-`n` ball a state at
//! distance `d` from a center only has enough explored context for verdicts
//! up to level `n - d`. Verdicts are only ever produced within that budget,
//! which makes the center verdict exactly the depth-`n` equivalence rather
//! than an approximation of it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::automata::{
    ActionId, Configuration, Distribution, Plts, PpdaSpec, StackWord, StateId, SymId,
};
use crate::exec::{map_collect, Exec};
use crate::rational::Rational;

/// Exploration limits. The state cap exists because pushdown balls can grow
/// exponentially with the radius.
#[derive(Debug, Clone)]
pub struct Limits {
    pub max_states: usize,
    pub exec: Exec,
}

pub const DEFAULT_MAX_STATES: usize = 1_000_000;

impl Default for Limits {
    fn default() -> Self {
        Limits { max_states: DEFAULT_MAX_STATES, exec: Exec::default() }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("exploration budget exceeded after {explored} configurations")]
    BudgetExceeded { explored: usize },
    #[error("spec fails validation:\n{0}")]
    Unvalidated(String),
    #[error("ball radius {radius} is smaller than the requested level {level}")]
    RadiusTooSmall { radius: u32, level: u32 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EquivalenceError {
    #[error("distribution mentions a state outside the partition")]
    UnknownState,
    #[error("subset enumeration over {0} support elements is not feasible")]
    SupportTooLarge(usize),
}

/// The transition oracle of the induced transition system: transitions of a
/// configuration depend only on its head, so one table per head serves every
/// stack. A rule `qX -a-> d` induces `qXw -a-> d'` with `d'(pvw) = d(pv)`.
pub struct InducedPlts<'a> {
    pub spec: &'a PpdaSpec,
    /// Indexed by `state * |Γ| + symbol`; one entry per rule on that head.
    heads: Vec<Vec<(ActionId, Vec<(StateId, StackWord, Rational)>)>>,
}

impl<'a> InducedPlts<'a> {
    pub fn new(spec: &'a PpdaSpec) -> Result<Self, SemanticsError> {
        let report = spec.validate();
        if !report.is_ok() {
            return Err(SemanticsError::Unvalidated(report.to_string()));
        }
        let nsym = spec.stack_syms.len();
        let mut heads = vec![Vec::new(); spec.control_states.len() * nsym];
        for rule in &spec.rules {
            let dist = rule.dist();
            let entry = dist
                .iter()
                .map(|((q, w), p)| (*q, *w, p.clone()))
                .collect();
            heads[rule.state.0 as usize * nsym + rule.sym.0 as usize].push((rule.action, entry));
        }
        Ok(InducedPlts { spec, heads })
    }

    fn head_rules(&self, q: StateId, x: SymId) -> &[(ActionId, Vec<(StateId, StackWord, Rational)>)] {
        &self.heads[q.0 as usize * self.spec.stack_syms.len() + x.0 as usize]
    }

    /// Outgoing transitions of a configuration; empty-stack configurations
    /// terminate.
    pub fn transitions_of(&self, c: &Configuration) -> Vec<(ActionId, Distribution<Configuration>)> {
        let Some(top) = c.top() else {
            return Vec::new();
        };
        self.head_rules(c.state, top)
            .iter()
            .map(|(a, targets)| {
                let d = Distribution::new(
                    targets.iter().map(|(q, w, p)| (c.apply(*q, w), p.clone())),
                )
                .expect("rule distributions stay normalized under lifting");
                (*a, d)
            })
            .collect()
    }
}

/// Per-state outgoing transitions with interned target indices. `None`
/// means the state sits on the unexpanded frontier.
pub type InternedTransitions = Option<Vec<(ActionId, Vec<(u32, Rational)>)>>;

/// A finite fragment of the induced transition system: every configuration
/// within `radius` steps of the centers, with transitions for all states
/// that were expanded.
#[derive(Debug)]
pub struct Ball {
    pub configs: Vec<Configuration>,
    pub index: HashMap<Configuration, u32>,
    /// Distance from the nearest center.
    pub depth: Vec<u32>,
    pub transitions: Vec<InternedTransitions>,
    pub centers: Vec<u32>,
    pub radius: u32,
    /// True iff every state was expanded, i.e. the reachable graph is
    /// finite and fully contained in this ball.
    pub closed: bool,
}

impl Ball {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Refinement budget per state: how many levels of verdicts the
    /// explored context can support.
    fn budgets(&self) -> Vec<u32> {
        if self.closed {
            vec![u32::MAX; self.len()]
        } else {
            self.depth.iter().map(|d| self.radius - d).collect()
        }
    }
}

enum Horizon {
    Radius(u32),
    Closure,
}

fn explore(
    ind: &InducedPlts,
    centers: &[Configuration],
    horizon: Horizon,
    limits: &Limits,
) -> Result<Ball, SemanticsError> {
    let mut configs: Vec<Configuration> = Vec::new();
    let mut index: HashMap<Configuration, u32> = HashMap::new();
    let mut depth: Vec<u32> = Vec::new();
    let mut transitions: Vec<InternedTransitions> = Vec::new();
    let mut center_ids = Vec::new();

    for c in centers {
        if let Some(&i) = index.get(c) {
            center_ids.push(i);
            continue;
        }
        let i = configs.len() as u32;
        index.insert(c.clone(), i);
        configs.push(c.clone());
        depth.push(0);
        transitions.push(None);
        center_ids.push(i);
    }

    let mut level: Vec<u32> = (0..configs.len() as u32).collect();
    let mut d = 0u32;
    let mut closed = false;
    loop {
        match horizon {
            Horizon::Radius(r) if d >= r => break,
            _ => {}
        }
        if level.is_empty() {
            closed = true;
            break;
        }
        // Expand the whole level in one batch; order is preserved, so the
        // interning below is deterministic.
        let batch: Vec<Configuration> = level.iter().map(|&s| configs[s as usize].clone()).collect();
        let expanded = map_collect(limits.exec, batch, |c| {
            ind.transitions_of(&c)
                .into_iter()
                .map(|(a, dist)| {
                    let targets: Vec<(Configuration, Rational)> =
                        dist.iter().map(|(t, p)| (t.clone(), p.clone())).collect();
                    (a, targets)
                })
                .collect::<Vec<_>>()
        });
        let mut next_level = Vec::new();
        for (&s, rules) in level.iter().zip(expanded) {
            let mut interned = Vec::with_capacity(rules.len());
            for (a, targets) in rules {
                let mut row = Vec::with_capacity(targets.len());
                for (c, p) in targets {
                    let i = match index.get(&c) {
                        Some(&i) => i,
                        None => {
                            let i = configs.len() as u32;
                            index.insert(c.clone(), i);
                            configs.push(c);
                            depth.push(d + 1);
                            transitions.push(None);
                            next_level.push(i);
                            i
                        }
                    };
                    row.push((i, p));
                }
                interned.push((a, row));
            }
            transitions[s as usize] = Some(interned);
        }
        if configs.len() > limits.max_states {
            return Err(SemanticsError::BudgetExceeded { explored: configs.len() });
        }
        level = next_level;
        d += 1;
    }

    let radius = match horizon {
        Horizon::Radius(r) => r,
        Horizon::Closure => d,
    };
    Ok(Ball { configs, index, depth, transitions, centers: center_ids, radius, closed })
}

/// The complete radius-`n` ball around two configurations, with
/// deterministic state and transition order.
pub fn unfold(
    spec: &PpdaSpec,
    c1: &Configuration,
    c2: &Configuration,
    n: u32,
    limits: &Limits,
) -> Result<Ball, SemanticsError> {
    let ind = InducedPlts::new(spec)?;
    explore(&ind, &[c1.clone(), c2.clone()], Horizon::Radius(n), limits)
}

/// Radius-`n` ball around an arbitrary set of centers.
pub fn unfold_from(
    spec: &PpdaSpec,
    centers: &[Configuration],
    n: u32,
    limits: &Limits,
) -> Result<Ball, SemanticsError> {
    let ind = InducedPlts::new(spec)?;
    explore(&ind, centers, Horizon::Radius(n), limits)
}

/// Explores until the reachable graph closes (no unexpanded states); errors
/// with the budget if it keeps growing. A closed ball supports exact
/// bisimilarity via refinement to the fixpoint.
pub fn explore_closure(
    spec: &PpdaSpec,
    centers: &[Configuration],
    limits: &Limits,
) -> Result<Ball, SemanticsError> {
    let ind = InducedPlts::new(spec)?;
    explore(&ind, centers, Horizon::Closure, limits)
}

/// A partition of (a subset of) the states of a finite fragment. Block
/// identifiers are canonical: the least member index. `None` marks states
/// with no verdict at this level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub block: Vec<Option<u32>>,
}

impl Partition {
    pub fn same_block(&self, a: u32, b: u32) -> Option<bool> {
        match (self.block[a as usize], self.block[b as usize]) {
            (Some(x), Some(y)) => Some(x == y),
            _ => None,
        }
    }

    /// Blocks as sorted member lists, keyed by canonical id.
    pub fn blocks(&self) -> BTreeMap<u32, Vec<u32>> {
        let mut out: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (i, b) in self.block.iter().enumerate() {
            if let Some(b) = b {
                out.entry(*b).or_default().push(i as u32);
            }
        }
        out
    }

    /// True iff every block of `self` is contained in a block of `coarser`,
    /// over the states active in `self`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        let mut rep: HashMap<u32, u32> = HashMap::new();
        for (i, b) in self.block.iter().enumerate() {
            let Some(b) = b else { continue };
            let Some(cb) = coarser.block[i] else { return false };
            match rep.entry(*b) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(cb);
                }
                std::collections::hash_map::Entry::Occupied(e) => {
                    if *e.get() != cb {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Signature of a state against the previous level: per action, the set of
/// block-mass fingerprints of its outgoing distributions. Two states get
/// the same next-level block iff their signatures agree.
type Signature = BTreeSet<(ActionId, Vec<(u32, Rational)>)>;

fn signature(
    transitions: &[InternedTransitions],
    prev: &Partition,
    s: u32,
) -> Signature {
    let mut sig = Signature::new();
    let rules = transitions[s as usize]
        .as_ref()
        .expect("active state must be expanded");
    for (a, targets) in rules {
        let mut mass: BTreeMap<u32, Rational> = BTreeMap::new();
        for (t, p) in targets {
            let block = prev.block[*t as usize].expect("successor must carry a verdict");
            let e = mass.entry(block).or_insert_with(Rational::zero);
            *e = &*e + p;
        }
        sig.insert((*a, mass.into_iter().collect()));
    }
    sig
}

/// What the level driver decides after seeing each computed level.
pub enum LevelStep {
    Continue,
    Stop,
}

/// Runs level-by-level refinement. `budget[s]` caps the level at which `s`
/// still receives a verdict. Calls `visit` after each level (including
/// level zero); stops at `max_level`, when `visit` says stop, or when no
/// state is active.
pub fn refine_levels(
    transitions: &[InternedTransitions],
    budget: &[u32],
    max_level: u32,
    exec: Exec,
    mut visit: impl FnMut(u32, &Partition) -> LevelStep,
) -> Vec<Partition> {
    let n = budget.len();
    let mut parts: Vec<Partition> = Vec::new();
    let base = Partition { block: vec![Some(0); n] };
    let stop = matches!(visit(0, &base), LevelStep::Stop);
    parts.push(base);
    if stop {
        return parts;
    }
    for k in 1..=max_level {
        let active: Vec<u32> = (0..n as u32).filter(|s| budget[*s as usize] >= k).collect();
        if active.is_empty() {
            break;
        }
        let prev = parts.last().unwrap();
        let sigs = map_collect(exec, active.clone(), |s| signature(transitions, prev, s));
        let mut groups: BTreeMap<&Signature, u32> = BTreeMap::new();
        let mut block = vec![None; n];
        for (s, sig) in active.iter().zip(sigs.iter()) {
            // Ascending state order makes the first member the least one.
            let canonical = *groups.entry(sig).or_insert(*s);
            block[*s as usize] = Some(canonical);
        }
        let part = Partition { block };
        let stop = matches!(visit(k, &part), LevelStep::Stop);
        parts.push(part);
        if stop {
            break;
        }
    }
    parts
}

/// Verdict of a bounded bisimilarity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthVerdict {
    /// The configurations are equivalent at depth `n` (bounded claim only).
    EquivalentAt(u32),
    /// The least level distinguishing the configurations.
    DistinguishedAt(u32),
}

impl DepthVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, DepthVerdict::EquivalentAt(_))
    }
}

/// Computes the depth-`n` bisimilarity verdict for two configurations.
pub fn bisim_depth(
    spec: &PpdaSpec,
    c1: &Configuration,
    c2: &Configuration,
    n: u32,
    limits: &Limits,
) -> Result<DepthVerdict, SemanticsError> {
    let ball = unfold(spec, c1, c2, n, limits)?;
    let (a, b) = (ball.centers[0], *ball.centers.last().unwrap());
    let budget = ball.budgets();
    let mut verdict = DepthVerdict::EquivalentAt(n);
    let mut prev: Option<Partition> = None;
    refine_levels(&ball.transitions, &budget, n, limits.exec, |k, part| {
        if part.same_block(a, b) == Some(false) {
            verdict = DepthVerdict::DistinguishedAt(k);
            return LevelStep::Stop;
        }
        // On a closed ball the partition sequence reaches a fixpoint; once
        // stable it can never split the centers at deeper levels.
        if ball.closed {
            if let Some(p) = &prev {
                if *p == *part {
                    return LevelStep::Stop;
                }
            }
            prev = Some(part.clone());
        }
        LevelStep::Continue
    });
    Ok(verdict)
}

/// The level-`n` partition of the ball states whose exploration budget
/// suffices (distance at most `radius - n` from a center).
pub fn bisim_classes(ball: &Ball, n: u32, exec: Exec) -> Result<Partition, SemanticsError> {
    if !ball.closed && n > ball.radius {
        return Err(SemanticsError::RadiusTooSmall { radius: ball.radius, level: n });
    }
    let budget = ball.budgets();
    let parts = refine_levels(&ball.transitions, &budget, n, exec, |_, _| LevelStep::Continue);
    Ok(parts.into_iter().last().expect("level zero always exists"))
}

/// Exact bisimilarity analysis of a finite (closed) reachable fragment:
/// refinement run to its fixpoint, which on a finite system is full
/// bisimilarity.
pub struct ClosureAnalysis {
    pub ball: Ball,
    pub levels: Vec<Partition>,
}

/// An unbounded verdict, available when the reachable graph is finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactVerdict {
    Bisimilar,
    NotBisimilar { level: u32 },
}

impl ClosureAnalysis {
    pub fn new(spec: &PpdaSpec, centers: &[Configuration], limits: &Limits) -> Result<Self, SemanticsError> {
        let ball = explore_closure(spec, centers, limits)?;
        let budget = ball.budgets();
        let cap = ball.len() as u32 + 1;
        let mut prev: Option<Partition> = None;
        let mut levels = refine_levels(&ball.transitions, &budget, cap, limits.exec, |_, part| {
            let stable = prev.as_ref() == Some(part);
            prev = Some(part.clone());
            if stable {
                LevelStep::Stop
            } else {
                LevelStep::Continue
            }
        });
        // Drop the duplicated fixpoint level.
        if levels.len() >= 2 && levels[levels.len() - 1] == levels[levels.len() - 2] {
            levels.pop();
        }
        Ok(ClosureAnalysis { ball, levels })
    }

    pub fn stabilization_level(&self) -> u32 {
        self.levels.len() as u32 - 1
    }

    /// Exact verdict for two configurations inside the closure.
    pub fn verdict(&self, c1: &Configuration, c2: &Configuration) -> Option<ExactVerdict> {
        let a = *self.ball.index.get(c1)?;
        let b = *self.ball.index.get(c2)?;
        for (k, part) in self.levels.iter().enumerate() {
            if part.same_block(a, b) == Some(false) {
                return Some(ExactVerdict::NotBisimilar { level: k as u32 });
            }
        }
        Some(ExactVerdict::Bisimilar)
    }
}

/// Distribution equivalence with respect to a partition: equal mass on
/// every block, compared exactly.
pub fn r_equivalent<K: Ord + Clone>(
    d: &Distribution<K>,
    e: &Distribution<K>,
    partition: &BTreeMap<K, u32>,
) -> Result<bool, EquivalenceError> {
    let mut lhs: BTreeMap<u32, Rational> = BTreeMap::new();
    let mut rhs: BTreeMap<u32, Rational> = BTreeMap::new();
    for (map, dist) in [(&mut lhs, d), (&mut rhs, e)] {
        for (k, p) in dist.iter() {
            let block = partition.get(k).ok_or(EquivalenceError::UnknownState)?;
            let entry = map.entry(*block).or_insert_with(Rational::zero);
            *entry = &*entry + p;
        }
    }
    Ok(lhs == rhs)
}

/// The subset-mass characterization of distribution equivalence: for every
/// subset `A` of the joint support, `d(A) <= e(R(A))` and `e(A) <= d(R(A))`
/// where `R(A)` is the union of blocks met by `A`. Agrees with
/// [`r_equivalent`]; intended for small supports since it enumerates
/// subsets.
pub fn r_equivalent_subsets<K: Ord + Clone>(
    d: &Distribution<K>,
    e: &Distribution<K>,
    partition: &BTreeMap<K, u32>,
) -> Result<bool, EquivalenceError> {
    let mut support: Vec<&K> = d.support().chain(e.support()).collect();
    support.sort();
    support.dedup();
    if support.len() > 24 {
        return Err(EquivalenceError::SupportTooLarge(support.len()));
    }
    let blocks: Vec<u32> = support
        .iter()
        .map(|k| partition.get(k).copied().ok_or(EquivalenceError::UnknownState))
        .collect::<Result<_, _>>()?;
    let masses = |dist: &Distribution<K>| -> Vec<Rational> {
        support
            .iter()
            .map(|k| dist.get(k).cloned().unwrap_or_else(Rational::zero))
            .collect()
    };
    let dm = masses(d);
    let em = masses(e);
    for mask in 0u32..(1u32 << support.len()) {
        let mut touched: BTreeSet<u32> = BTreeSet::new();
        let mut d_mass = Rational::zero();
        let mut e_mass = Rational::zero();
        for i in 0..support.len() {
            if mask & (1 << i) != 0 {
                touched.insert(blocks[i]);
                d_mass = &d_mass + &dm[i];
                e_mass = &e_mass + &em[i];
            }
        }
        let mut d_image = Rational::zero();
        let mut e_image = Rational::zero();
        for i in 0..support.len() {
            if touched.contains(&blocks[i]) {
                d_image = &d_image + &dm[i];
                e_image = &e_image + &em[i];
            }
        }
        if d_mass > e_image || e_mass > d_image {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Embeds a finite pLTS as a pushdown spec with a single stack symbol and
/// no stack motion; state `s` corresponds to the configuration `s S`.
pub fn embed_plts(plts: &Plts) -> (PpdaSpec, Vec<Configuration>) {
    let spec = PpdaSpec {
        control_states: plts.states.clone(),
        stack_syms: vec!["S".into()],
        actions: plts.actions.clone(),
        rules: plts
            .transitions
            .iter()
            .enumerate()
            .flat_map(|(s, ts)| {
                ts.iter().map(move |(a, dist)| crate::automata::Rule {
                    state: StateId(s as u32),
                    sym: SymId(0),
                    action: *a,
                    targets: dist
                        .iter()
                        .map(|(t, p)| (*t, vec![SymId(0)], p.clone()))
                        .collect(),
                })
            })
            .collect(),
        visibility: None,
    };
    let configs = (0..plts.n_states())
        .map(|s| Configuration::new(StateId(s as u32), vec![SymId(0)]))
        .collect();
    (spec, configs)
}

/// Bisimilarity levels of an explicit finite pLTS, run to the fixpoint.
/// The final partition is full bisimilarity.
pub fn plts_bisim_levels(plts: &Plts, exec: Exec) -> Vec<Partition> {
    let transitions: Vec<InternedTransitions> = plts
        .transitions
        .iter()
        .map(|ts| {
            Some(
                ts.iter()
                    .map(|(a, d)| {
                        (*a, d.iter().map(|(t, p)| (t.0, p.clone())).collect::<Vec<_>>())
                    })
                    .collect(),
            )
        })
        .collect();
    let budget = vec![u32::MAX; plts.n_states()];
    let cap = plts.n_states() as u32 + 1;
    let mut prev: Option<Partition> = None;
    let mut levels = refine_levels(&transitions, &budget, cap, exec, |_, part| {
        let stable = prev.as_ref() == Some(part);
        prev = Some(part.clone());
        if stable {
            LevelStep::Stop
        } else {
            LevelStep::Continue
        }
    });
    if levels.len() >= 2 && levels[levels.len() - 1] == levels[levels.len() - 2] {
        levels.pop();
    }
    levels
}

/// Stable text dump of a ball and an optional partition: one state per
/// line with its depth, block and transitions.
pub fn dump_ball(spec: &PpdaSpec, ball: &Ball, partition: Option<&Partition>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# ball radius={} states={} closed={}",
        ball.radius,
        ball.len(),
        ball.closed
    );
    for (i, c) in ball.configs.iter().enumerate() {
        let block = partition
            .and_then(|p| p.block[i])
            .map(|b| b.to_string())
            .unwrap_or_else(|| "-".into());
        let _ = write!(
            out,
            "{} {} depth={} block={}",
            i,
            spec.render_configuration(c),
            ball.depth[i],
            block
        );
        match &ball.transitions[i] {
            None => {
                let _ = writeln!(out, " frontier");
            }
            Some(rules) => {
                for (a, targets) in rules {
                    let body = targets
                        .iter()
                        .map(|(t, p)| format!("{} {}", p, spec.render_configuration(&ball.configs[*t as usize])))
                        .collect::<Vec<_>>()
                        .join(" | ");
                    let _ = write!(out, " {}->[{}]", spec.action_name(*a), body);
                }
                let _ = writeln!(out);
            }
        }
    }
    out
}
