//! Line-oriented text format for pushdown automaton specs.
//!
//! ```text
//! # Example
//! states: p q r
//! stack: X X' Y Z
//! actions: a
//! visibility: r=a_r int=a,a_int c=a_c
//! p X a -> 1/2 q X X | 1/2 p .
//! ```
//!
//! Header lines declare states, stack symbols, actions and (optionally) a
//! visibility partition. Every other non-comment line is a rule: head state,
//! head symbol, action, `->`, then `|`-separated alternatives, each being a
//! probability followed by a target state and zero to two stack symbols
//! (`.` denotes the empty word). Probabilities may be integers, fractions
//! or decimals; decimals are converted exactly. A line whose first
//! non-blank character is `#` is a comment -- `#` elsewhere is an ordinary
//! token, which the constructions in this crate use as an action name.

use std::fmt::Write as _;

use thiserror::Error;

use crate::automata::{ActionId, Configuration, PpdaSpec, Rule, StateId, SymId, Visibility};
use crate::rational::Rational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing `{0}:` header")]
    MissingHeader(&'static str),
}

fn err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

/// Parses the text format. Name resolution is strict: rule lines may only
/// mention declared identifiers. Structural problems that are representable
/// (bad sums, long words) are left for `validate` to report.
pub fn parse_spec(input: &str) -> Result<PpdaSpec, ParseError> {
    let mut states: Option<Vec<String>> = None;
    let mut stack: Option<Vec<String>> = None;
    let mut actions: Option<Vec<String>> = None;
    let mut visibility_line: Option<(usize, String)> = None;
    let mut rule_lines: Vec<(usize, Vec<String>)> = Vec::new();

    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("states:") {
            states = Some(rest.split_whitespace().map(String::from).collect());
        } else if let Some(rest) = line.strip_prefix("stack:") {
            stack = Some(rest.split_whitespace().map(String::from).collect());
        } else if let Some(rest) = line.strip_prefix("actions:") {
            actions = Some(rest.split_whitespace().map(String::from).collect());
        } else if let Some(rest) = line.strip_prefix("visibility:") {
            visibility_line = Some((line_no, rest.to_string()));
        } else {
            rule_lines.push((line_no, line.split_whitespace().map(String::from).collect()));
        }
    }

    let control_states = states.ok_or(ParseError::MissingHeader("states"))?;
    let stack_syms = stack.ok_or(ParseError::MissingHeader("stack"))?;
    let action_names = actions.ok_or(ParseError::MissingHeader("actions"))?;

    let mut spec = PpdaSpec {
        control_states,
        stack_syms,
        actions: action_names,
        rules: Vec::new(),
        visibility: None,
    };

    if let Some((line_no, text)) = visibility_line {
        spec.visibility = Some(parse_visibility(&spec, line_no, &text)?);
    }

    for (line_no, tokens) in rule_lines {
        spec.rules.push(parse_rule(&spec, line_no, &tokens)?);
    }
    Ok(spec)
}

fn parse_visibility(spec: &PpdaSpec, line: usize, text: &str) -> Result<Visibility, ParseError> {
    let mut vis = Visibility::default();
    for part in text.split_whitespace() {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected class=actions, got `{part}`")))?;
        let target = match key {
            "r" => &mut vis.returns,
            "int" => &mut vis.internals,
            "c" => &mut vis.calls,
            _ => return Err(err(line, format!("unknown visibility class `{key}`"))),
        };
        for name in value.split(',').filter(|s| !s.is_empty()) {
            let a = spec
                .action_id(name)
                .ok_or_else(|| err(line, format!("undeclared action `{name}` in visibility")))?;
            target.insert(a);
        }
    }
    Ok(vis)
}

fn parse_rule(spec: &PpdaSpec, line: usize, tokens: &[String]) -> Result<Rule, ParseError> {
    if tokens.len() < 4 || tokens[3] != "->" {
        return Err(err(line, "expected `state symbol action -> alternatives`"));
    }
    let state = spec
        .state_id(&tokens[0])
        .ok_or_else(|| err(line, format!("undeclared state `{}`", tokens[0])))?;
    let sym = spec
        .sym_id(&tokens[1])
        .ok_or_else(|| err(line, format!("undeclared stack symbol `{}`", tokens[1])))?;
    let action = spec
        .action_id(&tokens[2])
        .ok_or_else(|| err(line, format!("undeclared action `{}`", tokens[2])))?;

    let mut targets: Vec<(StateId, Vec<SymId>, Rational)> = Vec::new();
    for alt in tokens[4..].split(|t| t == "|") {
        if alt.len() < 2 {
            return Err(err(line, "alternative needs a probability and a target state"));
        }
        let prob: Rational = alt[0]
            .parse()
            .map_err(|e| err(line, format!("bad probability `{}`: {e}", alt[0])))?;
        let target_state = spec
            .state_id(&alt[1])
            .ok_or_else(|| err(line, format!("undeclared state `{}`", alt[1])))?;
        let mut word = Vec::new();
        for tok in &alt[2..] {
            if tok == "." {
                if alt[2..].len() != 1 {
                    return Err(err(line, "`.` must stand alone as the empty word"));
                }
                break;
            }
            let s = spec
                .sym_id(tok)
                .ok_or_else(|| err(line, format!("undeclared stack symbol `{tok}`")))?;
            word.push(s);
        }
        // Merge duplicate targets: a distribution is a function.
        if let Some(existing) = targets
            .iter_mut()
            .find(|(q, w, _)| *q == target_state && *w == word)
        {
            existing.2 = &existing.2 + &prob;
        } else {
            targets.push((target_state, word, prob));
        }
    }
    Ok(Rule { state, sym, action, targets })
}

/// Renders a spec in the text format. `parse_spec(render_spec(s))`
/// reproduces `s` up to duplicate-target merging.
pub fn render_spec(spec: &PpdaSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states: {}", spec.control_states.join(" "));
    let _ = writeln!(out, "stack: {}", spec.stack_syms.join(" "));
    let _ = writeln!(out, "actions: {}", spec.actions.join(" "));
    if let Some(vis) = &spec.visibility {
        let join = |set: &std::collections::BTreeSet<ActionId>| {
            set.iter()
                .map(|a| spec.action_name(*a))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(
            out,
            "visibility: r={} int={} c={}",
            join(&vis.returns),
            join(&vis.internals),
            join(&vis.calls)
        );
    }
    for rule in &spec.rules {
        let alts = rule
            .targets
            .iter()
            .map(|(q, w, p)| {
                let word = if w.is_empty() {
                    ".".to_string()
                } else {
                    w.iter().map(|s| spec.sym_name(*s)).collect::<Vec<_>>().join(" ")
                };
                format!("{} {} {}", p, spec.state_name(*q), word)
            })
            .collect::<Vec<_>>()
            .join(" | ");
        let _ = writeln!(
            out,
            "{} {} {} -> {}",
            spec.state_name(rule.state),
            spec.sym_name(rule.sym),
            spec.action_name(rule.action),
            alts
        );
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigParseError {
    #[error("cannot parse `{0}` as a configuration of this spec")]
    NoParse(String),
}

/// Parses a configuration written either with dots (`p.X.Z`) or
/// concatenated (`pXZ`). Concatenated form is resolved by backtracking over
/// declared names: the first match must be a state, the rest stack symbols.
pub fn parse_configuration(spec: &PpdaSpec, text: &str) -> Result<Configuration, ConfigParseError> {
    let no_parse = || ConfigParseError::NoParse(text.to_string());
    if text.contains('.') {
        let mut parts = text.split('.');
        let state = parts.next().ok_or_else(no_parse)?;
        let state = spec.state_id(state).ok_or_else(no_parse)?;
        let mut stack = Vec::new();
        for part in parts {
            if part.is_empty() {
                continue;
            }
            stack.push(spec.sym_id(part).ok_or_else(no_parse)?);
        }
        return Ok(Configuration::new(state, stack));
    }

    // Longest-match with backtracking over symbol names.
    fn match_stack(spec: &PpdaSpec, rest: &str, acc: &mut Vec<SymId>) -> bool {
        if rest.is_empty() {
            return true;
        }
        let mut candidates: Vec<(usize, SymId)> = spec
            .stack_syms
            .iter()
            .enumerate()
            .filter(|(_, name)| rest.starts_with(name.as_str()))
            .map(|(i, name)| (name.len(), SymId(i as u32)))
            .collect();
        candidates.sort_by(|a, b| b.0.cmp(&a.0));
        for (len, sym) in candidates {
            acc.push(sym);
            if match_stack(spec, &rest[len..], acc) {
                return true;
            }
            acc.pop();
        }
        false
    }

    let mut states: Vec<(usize, StateId)> = spec
        .control_states
        .iter()
        .enumerate()
        .filter(|(_, name)| text.starts_with(name.as_str()))
        .map(|(i, name)| (name.len(), StateId(i as u32)))
        .collect();
    states.sort_by(|a, b| b.0.cmp(&a.0));
    for (len, state) in states {
        let mut stack = Vec::new();
        if match_stack(spec, &text[len..], &mut stack) {
            return Ok(Configuration::new(state, stack));
        }
    }
    Err(no_parse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{example1, EXAMPLE1_TEXT};

    #[test]
    fn parses_example1() {
        let spec = example1();
        assert_eq!(spec.control_states, vec!["p", "q", "r"]);
        assert_eq!(spec.stack_syms, vec!["X", "X'", "Y", "Z"]);
        assert_eq!(spec.actions, vec!["a"]);
        assert_eq!(spec.rules.len(), 5);
        // Decimals converted exactly: 0.3 -> 3/10.
        let r_rule = &spec.rules[2];
        assert_eq!(r_rule.targets[0].2, Rational::new(3, 10));
    }

    #[test]
    fn round_trips_through_render() {
        let spec = example1();
        let rendered = render_spec(&spec);
        let reparsed = parse_spec(&rendered).unwrap();
        assert_eq!(spec, reparsed);
    }

    #[test]
    fn rejects_undeclared_tokens() {
        let bad = EXAMPLE1_TEXT.replace("q X a -> 1 p X X", "q W a -> 1 p X X");
        assert!(parse_spec(&bad).is_err());
    }

    #[test]
    fn comment_lines_and_hash_tokens() {
        let text = "# top comment\nstates: p\nstack: X\nactions: #\n  # indented comment\np X # -> 1 p .\n";
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.actions, vec!["#"]);
        assert_eq!(spec.rules.len(), 1);
    }

    #[test]
    fn configuration_parsing_backtracks() {
        let spec = example1();
        let c = parse_configuration(&spec, "pXZ").unwrap();
        assert_eq!(spec.render_configuration(&c), "pXZ");
        // X' requires longest-match care: rXX'Z would greedily try X, X.
        let c = parse_configuration(&spec, "rXX'Y").unwrap();
        assert_eq!(c.stack.len(), 3);
        let c2 = parse_configuration(&spec, "r.X.X'.Y").unwrap();
        assert_eq!(c, c2);
        assert!(parse_configuration(&spec, "wXZ").is_err());
    }

    #[test]
    fn duplicate_targets_merge() {
        let text = "states: p\nstack: X\nactions: a\np X a -> 1/2 p X | 1/2 p X\n";
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.rules[0].targets.len(), 1);
        assert!(spec.rules[0].targets[0].2.is_one());
    }
}
