//! Reactive strategy automata produced by the solvers and run by the enactors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::predicate::Predicate;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyState {
    /// Name of the arena state this strategy state tracks.
    pub name: String,
    /// Holds on the world snapshots from which the strategy may be entered here.
    pub entry: Predicate,
    /// Controllable label the strategy issues from this state, if any.
    pub choice: Option<String>,
    /// Permitted controllable moves and handled uncontrollable events.
    pub moves: BTreeMap<String, usize>,
    pub rank: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyAutomaton {
    pub id: String,
    pub states: Vec<StrategyState>,
    pub initial: usize,
    pub controllable: BTreeSet<String>,
    pub uncontrollable: BTreeSet<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StrategyParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown strategy state `{0}`")]
    UnknownState(String),
}

/// Entry predicate for an arena state: its observable propositions
/// (`key=value`, `cap:tag`, `nocap:tag`) must all hold on the snapshot.
/// States without observable propositions match `state=<name>`.
pub fn entry_from_props(name: &str, props: &BTreeSet<String>) -> Predicate {
    let atoms: Vec<Predicate> = props
        .iter()
        .filter_map(|p| {
            if let Some(tag) = p.strip_prefix("nocap:") {
                Some(Predicate::prop(format!("cap:{tag}")).negate())
            } else if p.contains('=') || p.starts_with("cap:") {
                Some(Predicate::prop(p.clone()))
            } else {
                None
            }
        })
        .collect();
    if atoms.is_empty() {
        Predicate::prop(format!("state={name}"))
    } else {
        Predicate::and(atoms)
    }
}

impl StrategyAutomaton {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn is_controllable(&self, label: &str) -> bool {
        self.controllable.contains(label)
    }

    pub fn step(&self, q: usize, label: &str) -> Option<usize> {
        self.states[q].moves.get(label).copied()
    }

    /// Uncontrollable events the strategy expects in state `q`.
    pub fn monitor(&self, q: usize) -> impl Iterator<Item = &str> + '_ {
        self.states[q]
            .moves
            .keys()
            .filter(|l| !self.controllable.contains(*l))
            .map(String::as_str)
    }

    pub fn expects(&self, q: usize, label: &str) -> bool {
        !self.controllable.contains(label) && self.states[q].moves.contains_key(label)
    }

    /// Follows the strategy's own choices from `q` until it waits for an
    /// event. A controllable cycle stops just before revisiting a state.
    pub fn settle(&self, mut q: usize) -> (usize, Vec<String>) {
        let mut commands = Vec::new();
        let mut seen = BTreeSet::from([q]);
        while let Some(c) = &self.states[q].choice {
            let Some(next) = self.step(q, c) else { break };
            commands.push(c.clone());
            q = next;
            if !seen.insert(q) {
                break;
            }
        }
        (q, commands)
    }

    /// The step function: advance on an observed event, then emit commands.
    pub fn react(&self, q: usize, observed: &str) -> Option<(usize, Vec<String>)> {
        self.step(q, observed).map(|next| self.settle(next))
    }

    /// States whose entry predicate holds on `facts`.
    pub fn matching_entries(&self, facts: &BTreeSet<String>) -> Vec<usize> {
        (0..self.states.len())
            .filter(|&q| self.states[q].entry.eval_facts(facts))
            .collect()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    pub fn max_out_degree(&self) -> usize {
        self.states.iter().map(|s| s.moves.len()).max().unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "strategy {}", self.id);
        for s in &self.states {
            let _ = writeln!(out, "state {}", s.name);
        }
        let _ = writeln!(out, "init {}", self.states[self.initial].name);
        if !self.controllable.is_empty() {
            let _ = writeln!(
                out,
                "ctrl {}",
                self.controllable.iter().cloned().collect::<Vec<_>>().join(" ")
            );
        }
        if !self.uncontrollable.is_empty() {
            let _ = writeln!(
                out,
                "unctrl {}",
                self.uncontrollable.iter().cloned().collect::<Vec<_>>().join(" ")
            );
        }
        for s in &self.states {
            for (l, t) in &s.moves {
                let _ = writeln!(out, "t {} {} {}", s.name, l, self.states[*t].name);
            }
        }
        for (q, s) in self.states.iter().enumerate() {
            if let Some(c) = &s.choice {
                let _ = writeln!(out, "emit {} * {}", s.name, c);
            }
            for l in self.monitor(q) {
                if let Some((_, cmds)) = self.react(q, l) {
                    if !cmds.is_empty() {
                        let _ = writeln!(out, "emit {} {} {}", s.name, l, cmds.join(" "));
                    }
                }
            }
            if let Some(r) = s.rank {
                let _ = writeln!(out, "rank {} {}", s.name, r);
            }
            let _ = writeln!(out, "entry {} {}", s.name, s.entry);
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. `emit <state> <event> ...`
    /// records are derived and ignored; `emit <state> * <label>` sets the choice.
    pub fn parse(text: &str) -> Result<StrategyAutomaton, StrategyParseError> {
        let mut id = String::new();
        let mut states: Vec<StrategyState> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut init = None;
        let mut ctrl = BTreeSet::new();
        let mut unctrl = BTreeSet::new();
        let lookup = |index: &BTreeMap<String, usize>, n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| StrategyParseError::UnknownState(n.to_string()))
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |msg: &str| StrategyParseError::Syntax {
                line: i + 1,
                msg: msg.to_string(),
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            match words[0] {
                "strategy" => id = words.get(1).ok_or_else(|| syntax("missing id"))?.to_string(),
                "state" => {
                    let name = words.get(1).ok_or_else(|| syntax("missing state"))?.to_string();
                    index.insert(name.clone(), states.len());
                    states.push(StrategyState {
                        entry: Predicate::prop(format!("state={name}")),
                        name,
                        choice: None,
                        moves: BTreeMap::new(),
                        rank: None,
                    });
                }
                "init" => init = Some(lookup(&index, words.get(1).ok_or_else(|| syntax("missing init"))?)?),
                "ctrl" => ctrl.extend(words[1..].iter().map(|w| w.to_string())),
                "unctrl" => unctrl.extend(words[1..].iter().map(|w| w.to_string())),
                "t" if words.len() == 4 => {
                    let (f, t) = (lookup(&index, words[1])?, lookup(&index, words[3])?);
                    states[f].moves.insert(words[2].to_string(), t);
                }
                "emit" if words.len() >= 4 => {
                    if words[2] == "*" {
                        let q = lookup(&index, words[1])?;
                        states[q].choice = Some(words[3].to_string());
                    }
                }
                "rank" if words.len() == 3 => {
                    let q = lookup(&index, words[1])?;
                    states[q].rank = Some(words[2].parse().map_err(|_| syntax("bad rank"))?);
                }
                "entry" if words.len() >= 3 => {
                    let q = lookup(&index, words[1])?;
                    let rest = line.splitn(3, char::is_whitespace).nth(2).unwrap_or("").trim();
                    states[q].entry = Predicate::parse(rest).map_err(|e| syntax(&e.to_string()))?;
                }
                _ => return Err(syntax("unrecognised record")),
            }
        }
        let initial = init.ok_or(StrategyParseError::Syntax {
            line: 0,
            msg: "missing init".into(),
        })?;
        Ok(StrategyAutomaton {
            id,
            states,
            initial,
            controllable: ctrl,
            uncontrollable: unctrl,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle() -> StrategyAutomaton {
        let mk = |name: &str, choice: Option<&str>, moves: &[(&str, usize)]| StrategyState {
            name: name.into(),
            entry: Predicate::prop(format!("state={name}")),
            choice: choice.map(Into::into),
            moves: moves.iter().map(|(l, t)| (l.to_string(), *t)).collect(),
            rank: None,
        };
        StrategyAutomaton {
            id: "c".into(),
            states: vec![
                mk("a", Some("go"), &[("go", 1)]),
                mk("b", None, &[("arrived", 2)]),
                mk("c", Some("back"), &[("back", 0)]),
            ],
            initial: 0,
            controllable: ["go".to_string(), "back".to_string()].into(),
            uncontrollable: ["arrived".to_string()].into(),
        }
    }

    #[test]
    fn settle_stops_at_waiting_state() {
        let s = cycle();
        assert_eq!(s.settle(0), (1, vec!["go".to_string()]));
        assert_eq!(
            s.react(1, "arrived"),
            Some((1, vec!["back".to_string(), "go".to_string()]))
        );
        assert_eq!(s.react(1, "other"), None);
        assert!(s.expects(1, "arrived"));
        assert!(!s.expects(0, "go"));
    }

    #[test]
    fn text_roundtrip() {
        let s = cycle();
        assert_eq!(StrategyAutomaton::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn entry_predicates_from_props() {
        let props: BTreeSet<String> = ["pos=s1".into(), "nocap:ir".into(), "goal".into()].into();
        let p = entry_from_props("x", &props);
        let mut facts: BTreeSet<String> = ["pos=s1".into()].into();
        assert!(p.eval_facts(&facts));
        facts.insert("cap:ir".into());
        assert!(!p.eval_facts(&facts));
        assert_eq!(entry_from_props("x", &BTreeSet::new()), Predicate::prop("state=x"));
    }
}
