//! Reconfiguration planning: breadth-first search over configurations.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::config::{
    capability_profile, check_invariants, CapabilityProfile, CommandError, Configuration, ConstraintViolation,
    ReconfigCommand, Status, StructuralConstraint, TargetSpec, CMD_FAIL,
};
use crate::predicate::Predicate;
use crate::strategy::{StrategyAutomaton, StrategyState};

/// Search gives up after this many configurations.
pub const DEFAULT_NODE_LIMIT: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReconfigStrategy {
    pub id: String,
    pub automaton: StrategyAutomaton,
    pub plan: Vec<ReconfigCommand>,
    /// Status-report label expected after each plan command.
    pub expected: Vec<String>,
    pub target: TargetSpec,
    pub target_profile: CapabilityProfile,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("no constraint-respecting path reaches the target")]
    Infeasible,
    #[error("current configuration violates constraints: {0:?}")]
    CurrentViolates(Vec<ConstraintViolation>),
    #[error("search exceeded {0} configurations")]
    SearchLimit(usize),
}

/// Search node: the configuration plus the instances last observed to be
/// passive and unbound. Removal is only offered for observed instances.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Node {
    config: Configuration,
    isolated: BTreeSet<String>,
}

fn candidates(n: &Node, target: &TargetSpec) -> Vec<ReconfigCommand> {
    let c = &n.config;
    let mut out = Vec::new();
    for (t, (_, spares)) in &c.pool {
        if *spares > 0 {
            out.push(ReconfigCommand::Add(t.clone()));
        }
    }
    for (id, inst) in &c.instances {
        match inst.status {
            Status::Active => out.push(ReconfigCommand::Passivate(id.clone())),
            st => {
                if st != Status::Killed {
                    out.push(ReconfigCommand::Activate(id.clone()));
                }
                // A passive instance still has to be observed isolated.
                if !n.isolated.contains(id) {
                    out.push(ReconfigCommand::Passivate(id.clone()));
                }
            }
        }
        if n.isolated.contains(id) && inst.status != Status::Active && c.binding_count(id) == 0 {
            out.push(ReconfigCommand::Remove(id.clone()));
        }
        if inst.status != Status::Killed {
            for tag in &inst.ctype.requires {
                if c.is_bound(id, tag) {
                    continue;
                }
                for (pid, p) in &c.instances {
                    if pid != id && p.status != Status::Killed && p.ctype.provides.contains(tag) {
                        out.push(ReconfigCommand::Bind {
                            inst: id.clone(),
                            tag: tag.clone(),
                            provider: pid.clone(),
                        });
                    }
                }
            }
        }
    }
    for b in &c.bindings {
        out.push(ReconfigCommand::Unbind {
            inst: b.from.clone(),
            tag: b.tag.clone(),
        });
    }
    for ((i, k), v) in &target.params {
        if let Some(inst) = c.instances.get(i) {
            if inst.params.get(k) != Some(v) {
                out.push(ReconfigCommand::SetParam {
                    inst: i.clone(),
                    key: k.clone(),
                    value: v.clone(),
                });
            }
        }
    }
    let mut keyed: Vec<(String, ReconfigCommand)> = out.into_iter().map(|c| (c.to_string(), c)).collect();
    keyed.sort();
    keyed.dedup_by(|a, b| a.0 == b.0);
    keyed.into_iter().map(|(_, c)| c).collect()
}

fn step(n: &Node, cmd: &ReconfigCommand) -> Option<(Node, String)> {
    let mut next = n.clone();
    let report = next.config.apply(cmd).ok()?;
    match cmd {
        ReconfigCommand::Remove(i) => {
            next.isolated.remove(i);
        }
        ReconfigCommand::Bind { provider, .. } => {
            next.isolated.remove(provider);
        }
        _ => {}
    }
    if report.status != Status::Active && report.bindings == 0 && !matches!(cmd, ReconfigCommand::Remove(_)) {
        next.isolated.insert(report.instance.clone());
    } else {
        next.isolated.remove(&report.instance);
    }
    Some((next, report.label()))
}

/// Tags any reachable configuration could provide: the least fixpoint over
/// types that are present and not killed, or still have spares in the pool.
/// A requirement cycle provides nothing, as in [`capability_profile`].
fn obtainable_tags(c: &Configuration) -> BTreeSet<String> {
    let mut types: Vec<_> = c
        .instances
        .values()
        .filter(|i| i.status != Status::Killed)
        .map(|i| &i.ctype)
        .collect();
    types.extend(c.pool.values().filter(|(_, n)| *n > 0).map(|(t, _)| t));
    let mut tags = BTreeSet::new();
    loop {
        let before = tags.len();
        for t in &types {
            if t.requires.is_subset(&tags) {
                tags.extend(t.provides.iter().cloned());
            }
        }
        if tags.len() == before {
            return tags;
        }
    }
}

/// Shortest constraint-respecting command sequence from `current` to a
/// configuration satisfying `target`; among shortest plans, the
/// lexicographically smallest command sequence.
pub fn plan_reconfiguration(
    current: &Configuration,
    target: &TargetSpec,
    cs: &[StructuralConstraint],
) -> Result<ReconfigStrategy, PlanError> {
    plan_with_limit(current, target, cs, DEFAULT_NODE_LIMIT)
}

pub fn plan_with_limit(
    current: &Configuration,
    target: &TargetSpec,
    cs: &[StructuralConstraint],
    limit: usize,
) -> Result<ReconfigStrategy, PlanError> {
    let violations = check_invariants(current, cs);
    if !violations.is_empty() {
        return Err(PlanError::CurrentViolates(violations));
    }
    if !target.required.is_subset(&obtainable_tags(current)) {
        return Err(PlanError::Infeasible);
    }
    let start = Node {
        config: current.clone(),
        isolated: BTreeSet::new(),
    };
    let mut nodes = vec![start.clone()];
    let mut parent: Vec<Option<(usize, ReconfigCommand, String)>> = vec![None];
    let mut index: HashMap<Node, usize> = HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([0usize]);
    let mut goal = target.satisfied_by(current).then_some(0);
    while goal.is_none() {
        let Some(v) = queue.pop_front() else {
            return Err(PlanError::Infeasible);
        };
        for cmd in candidates(&nodes[v], target) {
            let Some((next, label)) = step(&nodes[v], &cmd) else {
                continue;
            };
            if index.contains_key(&next) || !check_invariants(&next.config, cs).is_empty() {
                continue;
            }
            if nodes.len() >= limit {
                return Err(PlanError::SearchLimit(limit));
            }
            let done = target.satisfied_by(&next.config);
            let w = nodes.len();
            index.insert(next.clone(), w);
            nodes.push(next);
            parent.push(Some((v, cmd, label)));
            if done {
                goal = Some(w);
                break;
            }
            queue.push_back(w);
        }
    }
    let mut v = goal.expect("loop exits with a goal");
    log::debug!("plan found after {} configurations", nodes.len());
    let final_config = nodes[v].config.clone();
    let mut steps = Vec::new();
    while let Some((p, cmd, label)) = &parent[v] {
        steps.push((cmd.clone(), label.clone()));
        v = *p;
    }
    steps.reverse();
    let (plan, expected): (Vec<_>, Vec<_>) = steps.into_iter().unzip();
    Ok(build_strategy(
        plan,
        expected,
        target.clone(),
        capability_profile(&final_config),
    ))
}

/// Automaton over the happy path: `p<i>` issues command i, `w<i>` waits for
/// its report; `cfg.cmd_fail` or any other report leads to the `fail` sink.
pub fn build_strategy(
    plan: Vec<ReconfigCommand>,
    expected: Vec<String>,
    target: TargetSpec,
    target_profile: CapabilityProfile,
) -> ReconfigStrategy {
    let n = plan.len();
    let fail = 2 * n + 1;
    let mut states = Vec::with_capacity(2 * n + 2);
    let mk = |name: String, choice: Option<String>, moves: BTreeMap<String, usize>| StrategyState {
        entry: Predicate::prop(format!("state={name}")),
        name,
        choice,
        moves,
        rank: None,
    };
    for (i, cmd) in plan.iter().enumerate() {
        let label = cmd.to_string();
        states.push(mk(
            format!("p{i}"),
            Some(label.clone()),
            BTreeMap::from([(label, 2 * i + 1)]),
        ));
        states.push(mk(
            format!("w{i}"),
            None,
            BTreeMap::from([(expected[i].clone(), 2 * i + 2), (CMD_FAIL.to_string(), fail)]),
        ));
    }
    states.push(mk(format!("p{n}"), None, BTreeMap::new()));
    states.push(mk("fail".to_string(), None, BTreeMap::new()));
    let id = format!(
        "reconf/{}",
        if target_profile.is_empty() {
            "none".to_string()
        } else {
            target.required.iter().cloned().collect::<Vec<_>>().join("+")
        }
    );
    let automaton = StrategyAutomaton {
        id: id.clone(),
        states,
        initial: 0,
        controllable: plan.iter().map(|c| c.to_string()).collect(),
        uncontrollable: expected.iter().cloned().chain([CMD_FAIL.to_string()]).collect(),
    };
    ReconfigStrategy {
        id,
        automaton,
        plan,
        expected,
        target,
        target_profile,
    }
}

impl ReconfigStrategy {
    pub fn is_success(&self, q: usize) -> bool {
        q == 2 * self.plan.len()
    }

    pub fn is_failure(&self, q: usize) -> bool {
        q == 2 * self.plan.len() + 1
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self.automaton.id = self.id.clone();
        self
    }
}

/// Executes `plan` from `current` with system-level checks only.
pub fn replay(current: &Configuration, plan: &[ReconfigCommand]) -> Result<Configuration, (usize, CommandError)> {
    let mut c = current.clone();
    for (i, cmd) in plan.iter().enumerate() {
        c.apply(cmd).map_err(|e| (i, e))?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ComponentType;

    fn uav(spares: usize) -> Configuration {
        let mut c = Configuration::default();
        c.add_instance(
            "attitude",
            ComponentType::new("attitude", &["attitude"], &[]),
            Status::Active,
        );
        c.add_instance(
            "gps",
            ComponentType::new("gps", &["positioning"], &[]),
            Status::Inactive,
        );
        for (t, p, r) in [
            ("wifi", vec!["wifi_sig"], vec![]),
            ("bt", vec!["bt_sig"], vec![]),
            ("cell", vec!["cell_sig"], vec![]),
            ("hybrid", vec!["positioning"], vec!["wifi_sig", "bt_sig", "cell_sig"]),
        ] {
            c.pool.insert(t.to_string(), (ComponentType::new(t, &p, &r), spares));
        }
        c
    }

    #[test]
    fn activate_inactive_gps() {
        let s = plan_reconfiguration(&uav(0), &TargetSpec::requiring(["positioning".to_string()]), &[]).unwrap();
        assert_eq!(s.plan, vec![ReconfigCommand::Activate("gps".into())]);
        assert_eq!(s.expected, vec!["st(gps,active,0)".to_string()]);
    }

    #[test]
    fn hybrid_from_pool() {
        let mut c = uav(1);
        c.kill("gps");
        let cs = [StructuralConstraint::NeverDisabled("attitude".into())];
        let s = plan_reconfiguration(&c, &TargetSpec::requiring(["positioning".to_string()]), &cs).unwrap();
        // 4 adds, 3 binds, 4 activations.
        assert_eq!(s.plan.len(), 11);
        let end = replay(&c, &s.plan).unwrap();
        assert!(capability_profile(&end).contains("positioning"));
    }

    #[test]
    fn contradiction_is_infeasible() {
        let mut c = uav(0);
        c.instances.get_mut("gps").unwrap().status = Status::Active;
        let mut t = TargetSpec::requiring(["positioning".to_string()]);
        t.forbidden.insert("gps".into());
        let cs = [StructuralConstraint::AlwaysPresent("positioning".into())];
        assert_eq!(plan_reconfiguration(&c, &t, &cs), Err(PlanError::Infeasible));
    }

    #[test]
    fn removal_follows_observation() {
        let mut c = uav(0);
        c.kill("gps");
        let mut t = TargetSpec::default();
        t.forbidden.insert("gps".into());
        let s = plan_reconfiguration(&c, &t, &[]).unwrap();
        let labels: Vec<String> = s.plan.iter().map(|c| c.to_string()).collect();
        assert_eq!(labels, vec!["cfg.passivate(gps)", "cfg.remove(gps)"]);
        assert_eq!(s.automaton.settle(0).1, vec!["cfg.passivate(gps)"]);
        assert_eq!(
            s.automaton.react(1, "st(gps,killed,0)"),
            Some((3, vec!["cfg.remove(gps)".to_string()]))
        );
    }
}
