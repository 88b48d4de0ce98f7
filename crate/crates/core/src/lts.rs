//! Finite labelled transition systems with a controllability partition.
//!
//! Labels are interned and kept in lexicographic order, so a label index
//! comparison is the same as a label string comparison. Every tie-break in
//! the solvers relies on that.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::predicate::Predicate;

/// Prefix reserved for reconfiguration commands and their responses.
pub const CFG_PREFIX: &str = "cfg.";
/// The controllable event a behaviour strategy uses to request reconfiguration.
pub const RECONFIGURE: &str = "cfg.reconfigure";
pub const RECONF_OK: &str = "cfg.reconf_ok";
pub const RECONF_FAIL: &str = "cfg.reconf_fail";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LtsError {
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("label `{0}` used but never declared controllable or uncontrollable")]
    UndeclaredLabel(String),
    #[error("label `{0}` declared both controllable and uncontrollable")]
    PartitionClash(String),
    #[error("state `{state}` has two successors on `{label}`")]
    Nondeterministic { state: String, label: String },
    #[error("no initial state")]
    NoInitial,
    #[error("no pre-state satisfies the switch guard")]
    EmptyGuard,
    #[error("switch label `{0}` already occurs in a component model")]
    SwitchLabelInUse(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A deterministic LTS. Built through [`LtsBuilder`] or [`Lts::parse`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lts {
    names: Vec<String>,
    props: Vec<BTreeSet<String>>,
    initial: usize,
    labels: Vec<String>,
    controllable: Vec<bool>,
    /// Outgoing transitions per state as `(label, target)`, sorted by label.
    out: Vec<Vec<(u32, u32)>>,
}

impl Lts {
    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn state_props(&self, s: usize) -> &BTreeSet<String> {
        &self.props[s]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, l: u32) -> &str {
        &self.labels[l as usize]
    }

    pub fn label_index(&self, label: &str) -> Option<u32> {
        self.labels
            .binary_search_by(|x| x.as_str().cmp(label))
            .ok()
            .map(|i| i as u32)
    }

    pub fn is_controllable(&self, l: u32) -> bool {
        self.controllable[l as usize]
    }

    pub fn is_controllable_label(&self, label: &str) -> Option<bool> {
        self.label_index(label).map(|l| self.is_controllable(l))
    }

    pub fn controllable_labels(&self) -> impl Iterator<Item = &str> + '_ {
        self.labels
            .iter()
            .zip(&self.controllable)
            .filter(|(_, c)| **c)
            .map(|(l, _)| l.as_str())
    }

    pub fn uncontrollable_labels(&self) -> impl Iterator<Item = &str> + '_ {
        self.labels
            .iter()
            .zip(&self.controllable)
            .filter(|(_, c)| !**c)
            .map(|(l, _)| l.as_str())
    }

    pub fn outgoing(&self, s: usize) -> &[(u32, u32)] {
        &self.out[s]
    }

    pub fn successor(&self, s: usize, l: u32) -> Option<usize> {
        self.out[s]
            .binary_search_by_key(&l, |(x, _)| *x)
            .ok()
            .map(|i| self.out[s][i].1 as usize)
    }

    pub fn successor_by_name(&self, s: usize, label: &str) -> Option<usize> {
        self.label_index(label).and_then(|l| self.successor(s, l))
    }

    /// Evaluates `p` on every state.
    pub fn mask(&self, p: &Predicate) -> Vec<bool> {
        (0..self.num_states())
            .map(|s| p.eval_state(&self.names[s], &self.props[s]))
            .collect()
    }

    /// Predecessor lists: for each state, the `(source, label)` pairs reaching it.
    pub fn predecessors(&self) -> Vec<Vec<(u32, u32)>> {
        let mut pre = vec![Vec::new(); self.num_states()];
        for (s, out) in self.out.iter().enumerate() {
            for &(l, t) in out {
                pre[t as usize].push((s as u32, l));
            }
        }
        pre
    }

    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(s) = queue.pop_front() {
            for &(_, t) in &self.out[s] {
                if !seen[t as usize] {
                    seen[t as usize] = true;
                    queue.push_back(t as usize);
                }
            }
        }
        seen
    }

    /// Text form: `state`, `init`, `ctrl`, `unctrl` and `t` records.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, props) in self.names.iter().zip(&self.props) {
            let _ = write!(out, "state {name}");
            for p in props {
                let _ = write!(out, " {p}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "init {}", self.names[self.initial]);
        let ctrl: Vec<&str> = self.controllable_labels().collect();
        let unctrl: Vec<&str> = self.uncontrollable_labels().collect();
        if !ctrl.is_empty() {
            let _ = writeln!(out, "ctrl {}", ctrl.join(" "));
        }
        if !unctrl.is_empty() {
            let _ = writeln!(out, "unctrl {}", unctrl.join(" "));
        }
        for (s, trans) in self.out.iter().enumerate() {
            for &(l, t) in trans {
                let _ = writeln!(
                    out,
                    "t {} {} {}",
                    self.names[s], self.labels[l as usize], self.names[t as usize]
                );
            }
        }
        out
    }

    /// Parses the text form. Extra words after `state <id>` are propositions.
    pub fn parse(text: &str) -> Result<Lts, LtsError> {
        let mut b = LtsBuilder::new();
        let mut pending = Vec::new();
        let mut init = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| LtsError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut words = line.split_whitespace();
            match words.next() {
                Some("state") => {
                    let name = words.next().ok_or_else(|| err("missing state id"))?;
                    b.add_state(name, words.map(str::to_string))?;
                }
                Some("init") => init = Some(words.next().ok_or_else(|| err("missing init id"))?),
                Some("ctrl") => words.try_for_each(|w| b.declare(w, true))?,
                Some("unctrl") => words.try_for_each(|w| b.declare(w, false))?,
                Some("t") => {
                    let parts: Vec<&str> = words.collect();
                    if parts.len() != 3 {
                        return Err(err("expected `t <from> <label> <to>`"));
                    }
                    pending.push((parts[0], parts[1], parts[2]));
                }
                Some(other) => return Err(err(&format!("unknown record `{other}`"))),
                None => {}
            }
        }
        for (from, label, to) in pending {
            b.add_transition_by_name(from, label, to)?;
        }
        if let Some(init) = init {
            b.set_initial_by_name(init)?;
        }
        b.build()
    }
}

impl fmt::Display for Lts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Incremental construction of an [`Lts`]; labels are interned at `build`.
#[derive(Default, Debug, Clone)]
pub struct LtsBuilder {
    names: Vec<String>,
    index: HashMap<String, usize>,
    props: Vec<BTreeSet<String>>,
    initial: Option<usize>,
    declared: BTreeMap<String, bool>,
    trans: Vec<(usize, String, usize)>,
}

impl LtsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_state<I, S>(&mut self, name: &str, props: I) -> Result<usize, LtsError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if self.index.contains_key(name) {
            return Err(LtsError::DuplicateState(name.to_string()));
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.props.push(props.into_iter().map(Into::into).collect());
        if self.initial.is_none() {
            self.initial = Some(id);
        }
        Ok(id)
    }

    pub fn state(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn set_initial(&mut self, s: usize) {
        self.initial = Some(s);
    }

    pub fn set_initial_by_name(&mut self, name: &str) -> Result<(), LtsError> {
        let s = self
            .state(name)
            .ok_or_else(|| LtsError::UnknownState(name.to_string()))?;
        self.initial = Some(s);
        Ok(())
    }

    pub fn declare(&mut self, label: &str, controllable: bool) -> Result<(), LtsError> {
        match self.declared.get(label) {
            Some(&c) if c != controllable => Err(LtsError::PartitionClash(label.to_string())),
            _ => {
                self.declared.insert(label.to_string(), controllable);
                Ok(())
            }
        }
    }

    pub fn add_transition(&mut self, from: usize, label: &str, to: usize) {
        self.trans.push((from, label.to_string(), to));
    }

    pub fn add_transition_by_name(&mut self, from: &str, label: &str, to: &str) -> Result<(), LtsError> {
        let f = self
            .state(from)
            .ok_or_else(|| LtsError::UnknownState(from.to_string()))?;
        let t = self.state(to).ok_or_else(|| LtsError::UnknownState(to.to_string()))?;
        self.add_transition(f, label, t);
        Ok(())
    }

    pub fn build(self) -> Result<Lts, LtsError> {
        let initial = self.initial.ok_or(LtsError::NoInitial)?;
        let labels: Vec<String> = self.declared.keys().cloned().collect();
        let controllable: Vec<bool> = self.declared.values().copied().collect();
        let mut out: Vec<Vec<(u32, u32)>> = vec![Vec::new(); self.names.len()];
        for (from, label, to) in self.trans {
            let l = labels
                .binary_search(&label)
                .map_err(|_| LtsError::UndeclaredLabel(label.clone()))?;
            out[from].push((l as u32, to as u32));
        }
        for (s, trans) in out.iter_mut().enumerate() {
            trans.sort_unstable();
            trans.dedup();
            if let Some(w) = trans.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(LtsError::Nondeterministic {
                    state: self.names[s].clone(),
                    label: labels[w[0].0 as usize].clone(),
                });
            }
        }
        Ok(Lts {
            names: self.names,
            props: self.props,
            initial,
            labels,
            controllable,
            out,
        })
    }
}

/// Synchronous product: shared labels move jointly, private labels interleave.
/// Only the reachable part is built.
pub fn compose(a: &Lts, b: &Lts) -> Result<Lts, LtsError> {
    let mut builder = LtsBuilder::new();
    for (l, c) in a.labels.iter().zip(&a.controllable) {
        builder.declare(l, *c)?;
    }
    for (l, c) in b.labels.iter().zip(&b.controllable) {
        builder.declare(l, *c)?;
    }
    // Map each a-label to the b-label index it synchronises with, if shared.
    let a_to_b: Vec<Option<u32>> = a.labels.iter().map(|l| b.label_index(l)).collect();
    let b_shared: Vec<bool> = b.labels.iter().map(|l| a.label_index(l).is_some()).collect();

    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut queue = VecDeque::new();
    let visit = |ids: &mut HashMap<(usize, usize), usize>,
                 builder: &mut LtsBuilder,
                 queue: &mut VecDeque<(usize, usize)>,
                 pair: (usize, usize)| {
        if let Some(&id) = ids.get(&pair) {
            return id;
        }
        let name = format!("{}|{}", a.names[pair.0], b.names[pair.1]);
        let props: BTreeSet<String> = a.props[pair.0].union(&b.props[pair.1]).cloned().collect();
        let id = builder
            .add_state(&name, props)
            .expect("product state names are unique per pair");
        ids.insert(pair, id);
        queue.push_back(pair);
        id
    };
    let init = visit(&mut ids, &mut builder, &mut queue, (a.initial, b.initial));
    builder.set_initial(init);
    while let Some((sa, sb)) = queue.pop_front() {
        let from = ids[&(sa, sb)];
        for &(l, ta) in &a.out[sa] {
            let label = &a.labels[l as usize];
            match a_to_b[l as usize] {
                Some(lb) => {
                    if let Some(tb) = b.successor(sb, lb) {
                        let to = visit(&mut ids, &mut builder, &mut queue, (ta as usize, tb));
                        builder.add_transition(from, label, to);
                    }
                }
                None => {
                    let to = visit(&mut ids, &mut builder, &mut queue, (ta as usize, sb));
                    builder.add_transition(from, label, to);
                }
            }
        }
        for &(l, tb) in &b.out[sb] {
            if !b_shared[l as usize] {
                let to = visit(&mut ids, &mut builder, &mut queue, (sa, tb as usize));
                builder.add_transition(from, &b.labels[l as usize], to);
            }
        }
    }
    builder.build()
}

/// Pre- and post-reconfiguration capability models bridged by a guarded
/// controllable switch event.
#[derive(Clone, Debug)]
pub struct ModeSwitchSpec {
    pub pre_model: Lts,
    pub post_model: Lts,
    pub switch_label: String,
    pub guard: Predicate,
}

/// Disjoint union of both models plus a switch transition from every guarded
/// pre-state to the post model's initial state. State names are prefixed with
/// `pre:`/`post:` only when the two models share a name.
pub fn mode_switch_compose(spec: &ModeSwitchSpec) -> Result<Lts, LtsError> {
    let (pre, post) = (&spec.pre_model, &spec.post_model);
    if pre.label_index(&spec.switch_label).is_some() || post.label_index(&spec.switch_label).is_some() {
        return Err(LtsError::SwitchLabelInUse(spec.switch_label.clone()));
    }
    let guard = pre.mask(&spec.guard);
    if !guard.iter().any(|g| *g) {
        return Err(LtsError::EmptyGuard);
    }
    let clash = pre.names.iter().any(|n| post.state_index(n).is_some());
    let rename = |prefix: &str, n: &str| {
        if clash {
            format!("{prefix}:{n}")
        } else {
            n.to_string()
        }
    };

    let mut b = LtsBuilder::new();
    for m in [pre, post] {
        for (l, c) in m.labels.iter().zip(&m.controllable) {
            b.declare(l, *c)?;
        }
    }
    b.declare(&spec.switch_label, true)?;
    let offset = pre.num_states();
    for s in 0..pre.num_states() {
        b.add_state(&rename("pre", &pre.names[s]), pre.props[s].iter().cloned())?;
    }
    for s in 0..post.num_states() {
        b.add_state(&rename("post", &post.names[s]), post.props[s].iter().cloned())?;
    }
    b.set_initial(pre.initial);
    for s in 0..pre.num_states() {
        for &(l, t) in &pre.out[s] {
            b.add_transition(s, &pre.labels[l as usize], t as usize);
        }
        if guard[s] {
            b.add_transition(s, &spec.switch_label, offset + post.initial);
        }
    }
    for s in 0..post.num_states() {
        for &(l, t) in &post.out[s] {
            b.add_transition(offset + s, &post.labels[l as usize], offset + t as usize);
        }
    }
    b.build()
}
