//! Data model for probabilistic labelled transition systems and
//! probabilistic pushdown automata, with validation and subclass
//! classification.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::rational::Rational;

/// Index of a control state in a [`PpdaSpec`] or of a state in a [`Plts`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u32);

/// Index of a stack symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymId(pub u32);

/// Index of an input action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub u32);

/// A stack word of length at most two, the only shape a pushdown rule may
/// emit. Longer words can be *represented* in a raw rule (so that validation
/// can report them) but never in a compiled word.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StackWord {
    len: u8,
    syms: [SymId; 2],
}

impl StackWord {
    pub const EMPTY: StackWord = StackWord { len: 0, syms: [SymId(0), SymId(0)] };

    pub fn one(a: SymId) -> Self {
        StackWord { len: 1, syms: [a, SymId(0)] }
    }

    pub fn two(a: SymId, b: SymId) -> Self {
        StackWord { len: 2, syms: [a, b] }
    }

    /// Builds from a slice; `None` if longer than two symbols.
    pub fn from_slice(w: &[SymId]) -> Option<Self> {
        match w {
            [] => Some(Self::EMPTY),
            [a] => Some(Self::one(*a)),
            [a, b] => Some(Self::two(*a, *b)),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn syms(&self) -> &[SymId] {
        &self.syms[..self.len as usize]
    }
}

impl fmt::Debug for StackWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StackWord({:?})", self.syms())
    }
}

/// A finite probability distribution: positive rational weights summing
/// exactly to one, stored sorted by key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Distribution<T: Ord> {
    entries: Vec<(T, Rational)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DistributionError {
    #[error("distribution weights sum to {0}, expected 1")]
    BadSum(String),
    #[error("distribution contains a non-positive weight")]
    NonPositive,
    #[error("empty distribution")]
    Empty,
}

impl<T: Ord> Distribution<T> {
    /// Builds a distribution, merging duplicate keys by summing their
    /// weights. Errors unless all weights are positive and sum to one.
    pub fn new(entries: impl IntoIterator<Item = (T, Rational)>) -> Result<Self, DistributionError> {
        let mut map: BTreeMap<T, Rational> = BTreeMap::new();
        for (k, v) in entries {
            if v.is_zero() {
                return Err(DistributionError::NonPositive);
            }
            match map.entry(k) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(v);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let sum = &*e.get() + &v;
                    *e.get_mut() = sum;
                }
            }
        }
        if map.is_empty() {
            return Err(DistributionError::Empty);
        }
        let total = map.values().fold(Rational::zero(), |acc, v| &acc + v);
        if !total.is_one() {
            return Err(DistributionError::BadSum(total.to_string()));
        }
        Ok(Distribution { entries: map.into_iter().collect() })
    }

    pub fn dirac(key: T) -> Self {
        Distribution { entries: vec![(key, Rational::one())] }
    }

    pub fn is_dirac(&self) -> bool {
        self.entries.len() == 1
    }

    pub fn support(&self) -> impl Iterator<Item = &T> {
        self.entries.iter().map(|(k, _)| k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, &Rational)> {
        self.entries.iter().map(|(k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &T) -> Option<&Rational> {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(key))
            .ok()
            .map(|i| &self.entries[i].1)
    }

    /// Total mass of a set of keys.
    pub fn mass<'a>(&'a self, keys: impl IntoIterator<Item = &'a T>) -> Rational {
        let mut acc = Rational::zero();
        for k in keys {
            if let Some(v) = self.get(k) {
                acc = &acc + v;
            }
        }
        acc
    }

    /// Maps keys through `f`, merging entries that collapse to the same
    /// image. The result still sums to one.
    pub fn map_keys<U: Ord>(&self, mut f: impl FnMut(&T) -> U) -> Distribution<U> {
        let mut map: BTreeMap<U, Rational> = BTreeMap::new();
        for (k, v) in &self.entries {
            let e = map.entry(f(k)).or_insert_with(Rational::zero);
            *e = &*e + v;
        }
        Distribution { entries: map.into_iter().collect() }
    }
}

/// One pushdown rule `qX -a-> d` with an uncompiled right-hand side so that
/// malformed rules (bad sums, long words, unknown ids) stay representable
/// for validation to report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub state: StateId,
    pub sym: SymId,
    pub action: ActionId,
    /// Target alternatives `(state, pushed word, probability)`.
    pub targets: Vec<(StateId, Vec<SymId>, Rational)>,
}

impl Rule {
    /// The rule head `(q, X)`.
    pub fn head(&self) -> (StateId, SymId) {
        (self.state, self.sym)
    }

    /// The right-hand side as a checked distribution. Only meaningful on
    /// validated specs.
    pub fn dist(&self) -> Distribution<(StateId, StackWord)> {
        Distribution::new(self.targets.iter().map(|(q, w, p)| {
            ((*q, StackWord::from_slice(w).expect("validated rule")), p.clone())
        }))
        .expect("validated rule")
    }
}

/// Visibility partition of the input alphabet into return, internal and
/// call actions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Visibility {
    pub returns: BTreeSet<ActionId>,
    pub internals: BTreeSet<ActionId>,
    pub calls: BTreeSet<ActionId>,
}

/// The class of an action under a visibility partition, which fixes the
/// length of every word its rules may push.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionClass {
    Return,
    Internal,
    Call,
}

impl ActionClass {
    pub fn push_len(self) -> usize {
        match self {
            ActionClass::Return => 0,
            ActionClass::Internal => 1,
            ActionClass::Call => 2,
        }
    }
}

impl Visibility {
    pub fn class_of(&self, a: ActionId) -> Option<ActionClass> {
        if self.returns.contains(&a) {
            Some(ActionClass::Return)
        } else if self.internals.contains(&a) {
            Some(ActionClass::Internal)
        } else if self.calls.contains(&a) {
            Some(ActionClass::Call)
        } else {
            None
        }
    }
}

/// A probabilistic pushdown automaton `(Q, Γ, Σ, rules)` with an optional
/// visibility partition of the alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PpdaSpec {
    pub control_states: Vec<String>,
    pub stack_syms: Vec<String>,
    pub actions: Vec<String>,
    pub rules: Vec<Rule>,
    pub visibility: Option<Visibility>,
}

/// A configuration: a control state plus a finite stack word, leftmost
/// symbol on top. The empty stack is a terminating state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub state: StateId,
    pub stack: Vec<SymId>,
}

impl Configuration {
    pub fn new(state: StateId, stack: Vec<SymId>) -> Self {
        Configuration { state, stack }
    }

    pub fn top(&self) -> Option<SymId> {
        self.stack.first().copied()
    }

    /// The configuration after firing a rule target: the top symbol is
    /// replaced by the pushed word.
    pub fn apply(&self, state: StateId, pushed: &StackWord) -> Configuration {
        let mut stack = Vec::with_capacity(pushed.len() + self.stack.len().saturating_sub(1));
        stack.extend_from_slice(pushed.syms());
        stack.extend_from_slice(&self.stack[1..]);
        Configuration { state, stack }
    }
}

/// One problem found by [`PpdaSpec::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    /// Index into `rules`, when the issue is rule-local.
    pub rule: Option<usize>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            Some(i) => write!(f, "rule {}: {}", i, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Everything `validate` found; empty iff the spec is well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            writeln!(f, "ok")
        } else {
            for issue in &self.issues {
                writeln!(f, "{issue}")?;
            }
            Ok(())
        }
    }
}

/// Which subclasses a validated spec belongs to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SubclassSet {
    /// Single control state.
    pub pbpa: bool,
    /// Stack alphabet `{X, Z}` with `Z` kept at the bottom.
    pub poca: bool,
    /// Visibility partition supplied and respected by every rule.
    pub pvpda: bool,
    /// At most one distribution per head and action.
    pub fully_probabilistic: bool,
    /// Every rule is Dirac, i.e. the spec is a classical PDA.
    pub dirac_only: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("spec fails validation:\n{0}")]
    Unvalidated(String),
}

impl PpdaSpec {
    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.control_states.iter().position(|s| s == name).map(|i| StateId(i as u32))
    }

    pub fn sym_id(&self, name: &str) -> Option<SymId> {
        self.stack_syms.iter().position(|s| s == name).map(|i| SymId(i as u32))
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|s| s == name).map(|i| ActionId(i as u32))
    }

    pub fn state_name(&self, q: StateId) -> &str {
        &self.control_states[q.0 as usize]
    }

    pub fn sym_name(&self, x: SymId) -> &str {
        &self.stack_syms[x.0 as usize]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a.0 as usize]
    }

    pub fn render_configuration(&self, c: &Configuration) -> String {
        let mut s = self.state_name(c.state).to_string();
        for x in &c.stack {
            s.push_str(self.sym_name(*x));
        }
        s
    }

    /// Reports every violated structural invariant. Total: problems become
    /// report content, never errors.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let mut seen_names: HashMap<&str, &str> = HashMap::new();
        for (kind, names) in [
            ("state", &self.control_states),
            ("stack symbol", &self.stack_syms),
            ("action", &self.actions),
        ] {
            for name in names {
                if name.is_empty()
                    || name.contains(char::is_whitespace)
                    || name.contains(',')
                    || name == "|"
                    || name == "->"
                    || name == "."
                {
                    issues.push(ValidationIssue {
                        rule: None,
                        message: format!("bad {kind} identifier `{name}`"),
                    });
                }
                if let Some(prev) = seen_names.insert(name, kind) {
                    if prev == kind {
                        issues.push(ValidationIssue {
                            rule: None,
                            message: format!("duplicate {kind} identifier `{name}`"),
                        });
                    }
                }
            }
        }
        if let Some(v) = &self.visibility {
            let mut all: Vec<ActionId> = Vec::new();
            all.extend(&v.returns);
            all.extend(&v.internals);
            all.extend(&v.calls);
            for a in &all {
                if a.0 as usize >= self.actions.len() {
                    issues.push(ValidationIssue {
                        rule: None,
                        message: format!("visibility mentions undeclared action index {}", a.0),
                    });
                }
            }
            let distinct: BTreeSet<ActionId> = all.iter().copied().collect();
            if distinct.len() != all.len() {
                issues.push(ValidationIssue {
                    rule: None,
                    message: "visibility classes overlap".into(),
                });
            }
            for (i, _) in self.actions.iter().enumerate() {
                if !distinct.contains(&ActionId(i as u32)) {
                    issues.push(ValidationIssue {
                        rule: None,
                        message: format!(
                            "visibility does not cover action `{}`",
                            self.actions[i]
                        ),
                    });
                }
            }
        }
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.state.0 as usize >= self.control_states.len() {
                issues.push(ValidationIssue {
                    rule: Some(i),
                    message: format!("undeclared control state index {}", rule.state.0),
                });
            }
            if rule.sym.0 as usize >= self.stack_syms.len() {
                issues.push(ValidationIssue {
                    rule: Some(i),
                    message: format!("undeclared stack symbol index {}", rule.sym.0),
                });
            }
            if rule.action.0 as usize >= self.actions.len() {
                issues.push(ValidationIssue {
                    rule: Some(i),
                    message: format!("undeclared action index {}", rule.action.0),
                });
            }
            let mut sum = Rational::zero();
            for (q, w, p) in &rule.targets {
                if q.0 as usize >= self.control_states.len() {
                    issues.push(ValidationIssue {
                        rule: Some(i),
                        message: format!("target references undeclared state index {}", q.0),
                    });
                }
                for x in w {
                    if x.0 as usize >= self.stack_syms.len() {
                        issues.push(ValidationIssue {
                            rule: Some(i),
                            message: format!("target references undeclared symbol index {}", x.0),
                        });
                    }
                }
                if w.len() > 2 {
                    issues.push(ValidationIssue {
                        rule: Some(i),
                        message: format!("pushed word has length {}, limit is 2", w.len()),
                    });
                }
                if p.is_zero() {
                    issues.push(ValidationIssue {
                        rule: Some(i),
                        message: "zero probability in distribution".into(),
                    });
                }
                sum = &sum + p;
            }
            if rule.targets.is_empty() {
                issues.push(ValidationIssue {
                    rule: Some(i),
                    message: "rule has no targets".into(),
                });
            } else if !sum.is_one() {
                issues.push(ValidationIssue {
                    rule: Some(i),
                    message: format!("distribution sums to {sum}, expected 1"),
                });
            }
        }
        ValidationReport { issues }
    }

    /// True iff every rule carries a Dirac distribution, i.e. the spec is a
    /// classical (nondeterministic) PDA.
    pub fn is_dirac_only(&self) -> bool {
        self.rules.iter().all(|r| r.targets.len() == 1)
    }

    /// Determines subclass membership. Requires a validated spec.
    pub fn classify(&self) -> Result<SubclassSet, ClassifyError> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(ClassifyError::Unvalidated(report.to_string()));
        }
        let mut set = SubclassSet {
            pbpa: self.control_states.len() == 1,
            dirac_only: self.is_dirac_only(),
            ..SubclassSet::default()
        };

        // Fully probabilistic: at most one distribution per (head, action).
        let mut seen: BTreeSet<(StateId, SymId, ActionId)> = BTreeSet::new();
        set.fully_probabilistic = self
            .rules
            .iter()
            .all(|r| seen.insert((r.state, r.sym, r.action)));

        set.poca = self.check_poca();

        if let Some(vis) = &self.visibility {
            set.pvpda = self.rules.iter().all(|r| {
                vis.class_of(r.action).is_some_and(|class| {
                    r.targets.iter().all(|(_, w, _)| w.len() == class.push_len())
                })
            });
        }
        Ok(set)
    }

    /// One-counter discipline: the alphabet is exactly `{X, Z}` (by those
    /// names); rules on `X` push words over `{X}` only; rules on `Z` push
    /// exactly `Z` or `XZ`, so the bottom marker is never popped, duplicated
    /// or buried.
    fn check_poca(&self) -> bool {
        if self.stack_syms.len() != 2 {
            return false;
        }
        let (Some(x), Some(z)) = (self.sym_id("X"), self.sym_id("Z")) else {
            return false;
        };
        self.rules.iter().all(|r| {
            if r.sym == x {
                r.targets.iter().all(|(_, w, _)| w.iter().all(|s| *s == x))
            } else {
                // Z-rules: allowed pushes are Z and XZ.
                r.targets
                    .iter()
                    .all(|(_, w, _)| w.as_slice() == [z] || w.as_slice() == [x, z])
            }
        })
    }

    /// Rules grouped by head, in declaration order.
    pub fn rules_for_head(&self, state: StateId, sym: SymId) -> impl Iterator<Item = (usize, &Rule)> {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.state == state && r.sym == sym)
    }
}

/// An explicit finite probabilistic labelled transition system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plts {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    /// Outgoing transitions per state.
    pub transitions: Vec<Vec<(ActionId, Distribution<StateId>)>>,
}

impl Plts {
    pub fn new(states: Vec<String>, actions: Vec<String>) -> Self {
        let n = states.len();
        Plts { states, actions, transitions: vec![Vec::new(); n] }
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(|i| StateId(i as u32))
    }

    pub fn add_state(&mut self, name: impl Into<String>) -> StateId {
        self.states.push(name.into());
        self.transitions.push(Vec::new());
        StateId(self.states.len() as u32 - 1)
    }

    pub fn add_action(&mut self, name: impl Into<String>) -> ActionId {
        let name = name.into();
        if let Some(a) = self.actions.iter().position(|s| *s == name) {
            return ActionId(a as u32);
        }
        self.actions.push(name);
        ActionId(self.actions.len() as u32 - 1)
    }

    pub fn add_transition(&mut self, from: StateId, action: ActionId, dist: Distribution<StateId>) {
        self.transitions[from.0 as usize].push((action, dist));
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn has_transition(&self, s: StateId) -> bool {
        !self.transitions[s.0 as usize].is_empty()
    }

    /// True iff per (state, action) there is at most one distribution.
    pub fn fully_probabilistic(&self) -> bool {
        self.transitions.iter().all(|ts| {
            let mut seen = BTreeSet::new();
            ts.iter().all(|(a, _)| seen.insert(*a))
        })
    }
}
