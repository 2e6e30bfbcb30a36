//! Reduction from probabilistic to nondeterministic pushdown automata.
//!
//! Probabilities are erased by turning them into input letters: each rule
//! `qX -a-> d` becomes a three-step gadget `qX -a-> q<d> -w-> q<T> -#-> pv`
//! where `<d>` names the distribution, `<T>` a nonempty subset of its
//! support reachable under any weight `w` with `d(T) >= w`, and `#` picks an
//! element of `T`. Two configurations of the original automaton are
//! bisimilar iff they are bisimilar in the constructed one, with depth `n`
//! corresponding to depth `3n`.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::automata::{ActionId, Configuration, PpdaSpec, Rule, StateId, SymId, Visibility};
use crate::rational::Rational;
use crate::semantics::{bisim_depth, Limits, SemanticsError};

pub const DEFAULT_SUPPORT_CAP: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReduceError {
    #[error("spec fails validation:\n{0}")]
    Unvalidated(String),
    #[error("rule {rule} has support size {size}, above the cap {cap}")]
    SupportTooLarge { rule: usize, size: usize, cap: usize },
    #[error("action name `{0}` collides with a generated weight or marker action")]
    ActionCollision(String),
    #[error("spec is not a visibly pushdown automaton")]
    NotVisibly,
}

/// The set of relevant transition weights: every sum `d(A)` over a nonempty
/// subset `A` of a rule's support. The empty subset (weight zero) is
/// excluded; zero-weight moves are matched symmetrically on both sides
/// whenever distributions are equivalent, so dropping them shrinks the
/// construction without affecting the correspondence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightSet {
    pub weights: BTreeSet<Rational>,
}

/// Where a generated stack symbol came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymbolOrigin {
    /// Symbol for the distribution of the rule with this index.
    Dist { rule: usize },
    /// Symbol for a nonempty support subset of that rule, as a bitmask over
    /// the rule's sorted support.
    Subset { rule: usize, mask: u32 },
}

/// The constructed nondeterministic automaton plus provenance back into the
/// source spec. Original states, symbols and actions keep their indices, so
/// source configurations are valid configurations here verbatim.
#[derive(Debug)]
pub struct ReducedPda {
    pub spec: PpdaSpec,
    pub weights: WeightSet,
    /// Origin of every symbol index at or above the original alphabet size.
    pub new_symbols: Vec<(SymId, SymbolOrigin)>,
    /// Weight value of every weight action.
    pub weight_actions: Vec<(ActionId, Rational)>,
    /// The element-picking marker action(s). One for the plain reduction,
    /// three (return/internal/call) for the visibly one.
    pub marker_actions: Vec<ActionId>,
}

fn validated(spec: &PpdaSpec) -> Result<(), ReduceError> {
    let report = spec.validate();
    if report.is_ok() {
        Ok(())
    } else {
        Err(ReduceError::Unvalidated(report.to_string()))
    }
}

/// Computes the weight set, deduplicated, with the support cap enforced.
pub fn compute_weights(spec: &PpdaSpec, support_cap: usize) -> Result<WeightSet, ReduceError> {
    validated(spec)?;
    let mut weights = BTreeSet::new();
    for (i, rule) in spec.rules.iter().enumerate() {
        let masses: Vec<&Rational> = rule.targets.iter().map(|(_, _, p)| p).collect();
        if masses.len() > support_cap {
            return Err(ReduceError::SupportTooLarge {
                rule: i,
                size: masses.len(),
                cap: support_cap,
            });
        }
        for mask in 1u32..(1u32 << masses.len()) {
            let mut sum = Rational::zero();
            for (j, p) in masses.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    sum = &sum + p;
                }
            }
            weights.insert(sum);
        }
    }
    Ok(WeightSet { weights })
}

/// Marker flavour for the element-picking step.
enum Markers {
    Single,
    /// Split by the push length of the consumed rule's targets, preserving
    /// a visibility partition.
    Visibly,
}

fn build(spec: &PpdaSpec, support_cap: usize, markers: Markers) -> Result<ReducedPda, ReduceError> {
    validated(spec)?;
    let weights = compute_weights(spec, support_cap)?;

    let mut out = PpdaSpec {
        control_states: spec.control_states.clone(),
        stack_syms: spec.stack_syms.clone(),
        actions: spec.actions.clone(),
        rules: Vec::new(),
        visibility: None,
    };

    // Weight actions, named by their exact rational rendering, then the
    // marker action(s). Collisions with user-chosen action names would make
    // the construction ambiguous, so they are rejected.
    let mut weight_actions = Vec::new();
    for w in &weights.weights {
        let name = w.to_string();
        if spec.actions.contains(&name) {
            return Err(ReduceError::ActionCollision(name));
        }
        out.actions.push(name);
        weight_actions.push((ActionId(out.actions.len() as u32 - 1), w.clone()));
    }
    let marker_names: &[&str] = match markers {
        Markers::Single => &["#"],
        Markers::Visibly => &["#_r", "#_int", "#_c"],
    };
    let mut marker_actions = Vec::new();
    for name in marker_names {
        if spec.actions.iter().any(|a| a == name) {
            return Err(ReduceError::ActionCollision(name.to_string()));
        }
        out.actions.push(name.to_string());
        marker_actions.push(ActionId(out.actions.len() as u32 - 1));
    }

    let marker_for = |rule: &Rule| -> ActionId {
        match markers {
            Markers::Single => marker_actions[0],
            Markers::Visibly => {
                // In a visibly automaton every target of a rule pushes the
                // same length, fixed by the action class.
                let len = rule.targets[0].1.len();
                marker_actions[len]
            }
        }
    };

    let mut new_symbols = Vec::new();
    for (i, rule) in spec.rules.iter().enumerate() {
        // Sorted support: subset bitmasks refer to this order.
        let mut support: Vec<(StateId, Vec<SymId>, Rational)> = rule.targets.clone();
        support.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));

        let dist_sym = SymId(out.stack_syms.len() as u32);
        out.stack_syms.push(format!("<d{i}>"));
        new_symbols.push((dist_sym, SymbolOrigin::Dist { rule: i }));

        // qX -a-> q<d>
        out.rules.push(Rule {
            state: rule.state,
            sym: rule.sym,
            action: rule.action,
            targets: vec![(rule.state, vec![dist_sym], Rational::one())],
        });

        let marker = marker_for(rule);
        for mask in 1u32..(1u32 << support.len()) {
            let subset_sym = SymId(out.stack_syms.len() as u32);
            out.stack_syms.push(format!("<T{i}:{mask}>"));
            new_symbols.push((subset_sym, SymbolOrigin::Subset { rule: i, mask }));

            let mut subset_mass = Rational::zero();
            for (j, (_, _, p)) in support.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    subset_mass = &subset_mass + p;
                }
            }
            // q<d> -w-> q<T> for every weight w <= d(T).
            for (wa, w) in &weight_actions {
                if *w <= subset_mass {
                    out.rules.push(Rule {
                        state: rule.state,
                        sym: dist_sym,
                        action: *wa,
                        targets: vec![(rule.state, vec![subset_sym], Rational::one())],
                    });
                }
            }
            // q<T> -#-> pv for every pv in T.
            for (j, (q, word, _)) in support.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    out.rules.push(Rule {
                        state: rule.state,
                        sym: subset_sym,
                        action: marker,
                        targets: vec![(*q, word.clone(), Rational::one())],
                    });
                }
            }
        }
    }

    if let Markers::Visibly = markers {
        let mut vis = Visibility::default();
        vis.returns.insert(marker_actions[0]);
        vis.calls.insert(marker_actions[2]);
        vis.internals.insert(marker_actions[1]);
        for a in 0..spec.actions.len() {
            vis.internals.insert(ActionId(a as u32));
        }
        for (wa, _) in &weight_actions {
            vis.internals.insert(*wa);
        }
        out.visibility = Some(vis);
    }

    debug_assert!(out.validate().is_ok(), "{}", out.validate());
    Ok(ReducedPda { spec: out, weights, new_symbols, weight_actions, marker_actions })
}

/// The weight-erasing construction with a single `#` marker.
pub fn build_reduced(spec: &PpdaSpec, support_cap: usize) -> Result<ReducedPda, ReduceError> {
    build(spec, support_cap, Markers::Single)
}

/// The visibly-preserving variant: the marker is split into `#_r`, `#_int`
/// and `#_c` by the push length of the consumed rule's targets, and all
/// original actions and weights become internal. Requires a visibly input.
pub fn build_reduced_visibly(spec: &PpdaSpec, support_cap: usize) -> Result<ReducedPda, ReduceError> {
    let classes = spec
        .classify()
        .map_err(|e| ReduceError::Unvalidated(e.to_string()))?;
    if !classes.pvpda {
        return Err(ReduceError::NotVisibly);
    }
    build(spec, support_cap, Markers::Visibly)
}

/// Size audit quantities of a construction, as reported by the CLI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionStats {
    pub source_rules: usize,
    pub max_support: usize,
    pub stack_syms: usize,
    pub actions: usize,
    pub weight_count: usize,
    pub rules_original_actions: usize,
    pub rules_weight_actions: usize,
    pub rules_marker_actions: usize,
}

impl ReducedPda {
    pub fn stats(&self, source: &PpdaSpec) -> ReductionStats {
        let weight_set: BTreeSet<ActionId> = self.weight_actions.iter().map(|(a, _)| *a).collect();
        let marker_set: BTreeSet<ActionId> = self.marker_actions.iter().copied().collect();
        let mut orig = 0;
        let mut weight = 0;
        let mut marker = 0;
        for rule in &self.spec.rules {
            if weight_set.contains(&rule.action) {
                weight += 1;
            } else if marker_set.contains(&rule.action) {
                marker += 1;
            } else {
                orig += 1;
            }
        }
        ReductionStats {
            source_rules: source.rules.len(),
            max_support: source.rules.iter().map(|r| r.targets.len()).max().unwrap_or(0),
            stack_syms: self.spec.stack_syms.len(),
            actions: self.spec.actions.len(),
            weight_count: self.weights.weights.len(),
            rules_original_actions: orig,
            rules_weight_actions: weight,
            rules_marker_actions: marker,
        }
    }
}

/// Checks the depth correspondence on one instance: equivalence at depth
/// `n` in the source iff equivalence at depth `3n` in the construction.
/// Both sides are computed independently by the refinement engine.
pub fn cross_check_reduction(
    spec: &PpdaSpec,
    c1: &Configuration,
    c2: &Configuration,
    n: u32,
    support_cap: usize,
    limits: &Limits,
) -> Result<bool, CrossCheckError> {
    let reduced = build_reduced(spec, support_cap)?;
    let source = bisim_depth(spec, c1, c2, n, limits)?;
    let image = bisim_depth(&reduced.spec, c1, c2, 3 * n, limits)?;
    Ok(source.is_equivalent() == image.is_equivalent())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CrossCheckError {
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{example1, example1_poca};
    use crate::format::{parse_configuration, parse_spec};
    use crate::semantics::unfold;

    fn cfg(spec: &PpdaSpec, text: &str) -> Configuration {
        parse_configuration(spec, text).unwrap()
    }

    #[test]
    fn weights_of_the_example_rules() {
        let spec = example1();
        let w = compute_weights(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        // The r-rule with masses 3/10, 1/5, 1/2 contributes
        // {1/5, 3/10, 1/2, 7/10, 4/5, 1}; the p-rule adds nothing new.
        for expect in [(1u64, 5u64), (3, 10), (1, 2), (7, 10), (4, 5), (1, 1)] {
            assert!(w.weights.contains(&Rational::new(expect.0, expect.1)), "{expect:?}");
        }
        // 0.4 and 0.1 come from the rX' rule only.
        assert!(w.weights.contains(&Rational::new(2, 5)));
        assert!(w.weights.contains(&Rational::new(1, 10)));
    }

    #[test]
    fn dirac_only_spec_has_weight_one() {
        let spec = parse_spec("states: p q\nstack: X Y\nactions: a\np X a -> 1 q Y\n").unwrap();
        let w = compute_weights(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        assert_eq!(w.weights.len(), 1);
        assert!(w.weights.contains(&Rational::one()));
    }

    #[test]
    fn support_cap_is_enforced() {
        let spec = example1();
        assert!(matches!(
            compute_weights(&spec, 2),
            Err(ReduceError::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn single_dirac_rule_yields_three_rules() {
        let spec = parse_spec("states: p q\nstack: X Y\nactions: a\np X a -> 1 q Y\n").unwrap();
        let reduced = build_reduced(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        assert_eq!(reduced.spec.rules.len(), 3);
        assert!(reduced.spec.is_dirac_only());
        let rendered = crate::format::render_spec(&reduced.spec);
        assert!(rendered.contains("p X a -> 1 p <d0>"));
        assert!(rendered.contains("p <d0> 1 -> 1 p <T0:1>"));
        assert!(rendered.contains("p <T0:1> # -> 1 q Y"));
    }

    #[test]
    fn reduced_is_dirac_and_preserves_bpa() {
        let reduced = build_reduced(&example1(), DEFAULT_SUPPORT_CAP).unwrap();
        assert!(reduced.spec.is_dirac_only());
        let bpa = build_reduced(&crate::examples::example1_pbpa(), DEFAULT_SUPPORT_CAP).unwrap();
        assert!(bpa.spec.classify().unwrap().pbpa);
    }

    #[test]
    fn example1_pxz_successor_structure() {
        // One a-edge to p<d>, weight edges to the three nonempty subsets,
        // then #-edges back to qXXZ and pZ.
        let spec = example1();
        let reduced = build_reduced(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        let c1 = cfg(&reduced.spec, "pXZ");
        let ball = unfold(&reduced.spec, &c1, &c1, 3, &Limits::default()).unwrap();
        let trans_of = |c: &Configuration| ball.transitions[ball.index[c] as usize].clone().unwrap();

        let first = trans_of(&c1);
        assert_eq!(first.len(), 1, "exactly one a-edge");
        let dsym_cfg = ball.configs[first[0].1[0].0 as usize].clone();
        assert_eq!(reduced.spec.sym_name(dsym_cfg.top().unwrap()), "<d0>");

        let second = trans_of(&dsym_cfg);
        let mut subset_targets = BTreeSet::new();
        for (_, targets) in &second {
            for (t, _) in targets {
                subset_targets.insert(reduced.spec.sym_name(ball.configs[*t as usize].top().unwrap()).to_string());
            }
        }
        assert_eq!(
            subset_targets,
            BTreeSet::from(["<T0:1>".to_string(), "<T0:2>".to_string(), "<T0:3>".to_string()])
        );

        // The full-support subset reaches both qXXZ and pZ under #.
        let full = ball
            .configs
            .iter()
            .find(|c| reduced.spec.render_configuration(c).starts_with("p<T0:3>"))
            .unwrap();
        let third = trans_of(full);
        let mut finals = BTreeSet::new();
        for (_, targets) in &third {
            for (t, _) in targets {
                finals.insert(reduced.spec.render_configuration(&ball.configs[*t as usize]));
            }
        }
        assert_eq!(finals, BTreeSet::from(["qXXZ".to_string(), "pZ".to_string()]));
    }

    #[test]
    fn figure_weight_labels_reachable_from_r() {
        let spec = example1();
        let reduced = build_reduced(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        let c = cfg(&reduced.spec, "rX");
        let ball = unfold(&reduced.spec, &c, &c, 2, &Limits::default()).unwrap();
        // Edge labels out of r<d..> include the weights 1/2, 7/10, 4/5, 1.
        let mut labels = BTreeSet::new();
        for t in ball.transitions.iter().flatten() {
            for (a, _) in t {
                labels.insert(reduced.spec.action_name(*a).to_string());
            }
        }
        for w in ["1/2", "7/10", "4/5", "1"] {
            assert!(labels.contains(w), "missing weight label {w}");
        }
    }

    #[test]
    fn step_tripling_grades_the_unfolding() {
        // Topmost symbol class determines distance-from-source mod 3.
        let spec = example1();
        let reduced = build_reduced(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        let ball = unfold(&reduced.spec, &cfg(&reduced.spec, "pXZ"), &cfg(&reduced.spec, "rX"), 6, &Limits::default()).unwrap();
        let n_original = spec.stack_syms.len() as u32;
        for (i, c) in ball.configs.iter().enumerate() {
            let phase = match c.top() {
                None => 0,
                Some(s) if s.0 < n_original => 0,
                Some(s) => match &reduced.new_symbols[(s.0 - n_original) as usize].1 {
                    SymbolOrigin::Dist { .. } => 1,
                    SymbolOrigin::Subset { .. } => 2,
                },
            };
            assert_eq!(ball.depth[i] % 3, phase, "config {}", reduced.spec.render_configuration(c));
        }
    }

    #[test]
    fn original_heads_only_start_into_dist_symbols() {
        let spec = example1();
        let reduced = build_reduced(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        let n_original = spec.stack_syms.len() as u32;
        for rule in &reduced.spec.rules {
            if rule.sym.0 < n_original {
                assert!((rule.action.0 as usize) < spec.actions.len());
                assert_eq!(rule.targets.len(), 1);
                let (_, w, _) = &rule.targets[0];
                assert_eq!(w.len(), 1);
                assert!(w[0].0 >= n_original);
                assert!(matches!(
                    reduced.new_symbols[(w[0].0 - n_original) as usize].1,
                    SymbolOrigin::Dist { .. }
                ));
            }
        }
    }

    #[test]
    fn monotone_weight_availability() {
        let spec = example1();
        let reduced = build_reduced(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        let weight_of: std::collections::BTreeMap<ActionId, Rational> =
            reduced.weight_actions.iter().cloned().collect();
        for rule in &reduced.spec.rules {
            let Some(w) = weight_of.get(&rule.action) else { continue };
            let target = &rule.targets[0];
            for (wa, w2) in &reduced.weight_actions {
                if w2 <= w {
                    assert!(reduced.spec.rules.iter().any(|r| r.state == rule.state
                        && r.sym == rule.sym
                        && r.action == *wa
                        && r.targets == vec![target.clone()]));
                }
            }
        }
    }

    #[test]
    fn cross_check_example1_at_depth_3() {
        let spec = example1();
        let ok = cross_check_reduction(
            &spec,
            &cfg(&spec, "pXZ"),
            &cfg(&spec, "rX"),
            3,
            DEFAULT_SUPPORT_CAP,
            &Limits::default(),
        )
        .unwrap();
        assert!(ok);
    }

    #[test]
    fn cross_check_depth_zero_always_agrees() {
        let spec = example1_poca();
        let ok = cross_check_reduction(
            &spec,
            &cfg(&spec, "pXZ"),
            &cfg(&spec, "qXZ"),
            0,
            DEFAULT_SUPPORT_CAP,
            &Limits::default(),
        )
        .unwrap();
        assert!(ok);
    }

    #[test]
    fn visibly_variant_classifies_visibly() {
        let text = "states: p q\nstack: X Y\nactions: c i r\nvisibility: r=r int=i c=c\n\
                    p X c -> 1/2 q Y X | 1/2 p X X\np X i -> 1 q Y\nq Y r -> 1 p .\n";
        let spec = parse_spec(text).unwrap();
        assert!(spec.classify().unwrap().pvpda);
        let reduced = build_reduced_visibly(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        let classes = reduced.spec.classify().unwrap();
        assert!(classes.pvpda && classes.dirac_only);

        // A call rule's marker is #_c; the two preceding steps are internal.
        let vis = reduced.spec.visibility.as_ref().unwrap();
        let hash_c = reduced.spec.action_id("#_c").unwrap();
        assert!(vis.calls.contains(&hash_c));
        for a in 0..spec.actions.len() {
            assert!(vis.internals.contains(&ActionId(a as u32)));
        }
        for (wa, _) in &reduced.weight_actions {
            assert!(vis.internals.contains(wa));
        }
    }

    #[test]
    fn visibly_rejects_non_visibly_input() {
        assert_eq!(
            build_reduced_visibly(&example1(), DEFAULT_SUPPORT_CAP).unwrap_err(),
            ReduceError::NotVisibly
        );
    }

    #[test]
    fn empty_rule_visibly_spec_reduces_to_no_rules() {
        let spec = parse_spec("states: p\nstack: X\nactions: c\nvisibility: r= int= c=c\n").unwrap();
        let reduced = build_reduced_visibly(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        assert!(reduced.spec.rules.is_empty());
    }

    #[test]
    fn action_collision_is_rejected() {
        let spec = parse_spec("states: p\nstack: X\nactions: #\np X # -> 1 p .\n").unwrap();
        assert!(matches!(
            build_reduced(&spec, DEFAULT_SUPPORT_CAP),
            Err(ReduceError::ActionCollision(_))
        ));
    }

    #[test]
    fn stats_respect_size_bounds() {
        let spec = example1();
        let reduced = build_reduced(&spec, DEFAULT_SUPPORT_CAP).unwrap();
        let s = reduced.stats(&spec);
        let rho = s.source_rules;
        let m = s.max_support;
        assert!(s.stack_syms <= spec.stack_syms.len() + rho + rho * (1 << m));
        assert!(s.actions <= spec.actions.len() + s.weight_count + 1);
        assert!(s.rules_marker_actions <= rho * (1 << m) * m);
        assert!(s.rules_original_actions <= rho);
    }
}
