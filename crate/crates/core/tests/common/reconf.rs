//! Random reconfiguration problems and a brute-force shortest-plan search.
//!
//! The search enumerates every syntactically possible command and lets
//! `Configuration::apply` reject the invalid ones. Removal is only allowed
//! for an instance whose last status report said passive with no bindings.

use std::collections::{BTreeSet, HashSet, VecDeque};

use adapt_core::config::{
    check_invariants, ComponentType, Configuration, ReconfigCommand, Status, StructuralConstraint, TargetSpec,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const TAGS: [&str; 4] = ["a", "b", "c", "d"];

#[derive(Clone, Debug)]
pub struct Problem {
    pub current: Configuration,
    pub target: TargetSpec,
    pub constraints: Vec<StructuralConstraint>,
}

impl Problem {
    pub fn generate(rng: &mut ChaCha8Rng) -> Problem {
        loop {
            let p = Self::attempt(rng);
            if check_invariants(&p.current, &p.constraints).is_empty() {
                return p;
            }
        }
    }

    fn attempt(rng: &mut ChaCha8Rng) -> Problem {
        let ntypes = rng.gen_range(2..=4);
        let mut types = Vec::new();
        for k in 0..ntypes {
            let provides = *TAGS.choose(rng).unwrap();
            let requires: Vec<&str> = if rng.gen_bool(0.5) {
                let r = *TAGS.choose(rng).unwrap();
                if r == provides {
                    vec![]
                } else {
                    vec![r]
                }
            } else {
                vec![]
            };
            let mut t = ComponentType::new(&format!("t{k}"), &[provides], &requires);
            if k == 0 {
                t.params.insert("mode".into(), "lo".into());
            }
            types.push(t);
        }
        let mut c = Configuration::default();
        let ninst = rng.gen_range(1..=4);
        for _ in 0..ninst {
            let t = types.choose(rng).unwrap().clone();
            let id = c.fresh_id(&t.name);
            let st = match rng.gen_range(0..20) {
                0..=9 => Status::Active,
                10..=16 => Status::Inactive,
                _ => Status::Killed,
            };
            c.add_instance(&id, t, st);
        }
        let mut budget = 6 - ninst;
        for t in &types {
            let spare = if budget > 0 && rng.gen_bool(0.5) { 1 } else { 0 };
            budget -= spare;
            c.pool.insert(t.name.clone(), (t.clone(), spare));
        }
        if rng.gen_bool(0.7) {
            c.autowire();
        }
        let ids: Vec<String> = c.instances.keys().cloned().collect();
        let mut constraints = Vec::new();
        if rng.gen_bool(0.3) {
            constraints.push(StructuralConstraint::MaxActive(rng.gen_range(1..=4)));
        }
        if rng.gen_bool(0.3) {
            constraints.push(StructuralConstraint::AlwaysPresent(
                TAGS.choose(rng).unwrap().to_string(),
            ));
        }
        if rng.gen_bool(0.2) {
            constraints.push(StructuralConstraint::NeverDisabled(ids.choose(rng).unwrap().clone()));
        }
        if rng.gen_bool(0.3) {
            constraints.push(StructuralConstraint::RequireBound(
                types.choose(rng).unwrap().name.clone(),
            ));
        }
        let mut target = TargetSpec::default();
        for _ in 0..rng.gen_range(1..=2) {
            target.required.insert(TAGS.choose(rng).unwrap().to_string());
        }
        if rng.gen_bool(0.4) {
            target.forbidden.insert(ids.choose(rng).unwrap().clone());
        }
        if rng.gen_bool(0.2) {
            if let Some(i) = c.instances.values().find(|i| i.ctype.name == "t0") {
                target.params.insert((i.id.clone(), "mode".into()), "hi".into());
            }
        }
        Problem {
            current: c,
            target,
            constraints,
        }
    }
}

fn all_commands(c: &Configuration, target: &TargetSpec) -> Vec<ReconfigCommand> {
    let mut out: Vec<ReconfigCommand> = c.pool.keys().map(|t| ReconfigCommand::Add(t.clone())).collect();
    for (id, inst) in &c.instances {
        out.push(ReconfigCommand::Activate(id.clone()));
        out.push(ReconfigCommand::Passivate(id.clone()));
        out.push(ReconfigCommand::Remove(id.clone()));
        for tag in &inst.ctype.requires {
            out.push(ReconfigCommand::Unbind {
                inst: id.clone(),
                tag: tag.clone(),
            });
            for p in c.instances.keys() {
                out.push(ReconfigCommand::Bind {
                    inst: id.clone(),
                    tag: tag.clone(),
                    provider: p.clone(),
                });
            }
        }
    }
    for ((i, k), v) in &target.params {
        out.push(ReconfigCommand::SetParam {
            inst: i.clone(),
            key: k.clone(),
            value: v.clone(),
        });
    }
    out
}

/// Tracks which instances were last reported passive and unbound.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Observed(pub BTreeSet<String>);

impl Observed {
    /// Applies `cmd`, or returns `None` if the system refuses it or the
    /// removal is not backed by an observation.
    pub fn step(&self, c: &Configuration, cmd: &ReconfigCommand) -> Option<(Observed, Configuration, String)> {
        if let ReconfigCommand::Remove(i) = cmd {
            if !self.0.contains(i) {
                return None;
            }
        }
        let mut next = c.clone();
        let rep = next.apply(cmd).ok()?;
        let mut seen = self.0.clone();
        if let ReconfigCommand::Bind { provider, .. } = cmd {
            seen.remove(provider);
        }
        let removal = matches!(cmd, ReconfigCommand::Remove(_));
        if !removal && rep.status != Status::Active && rep.bindings == 0 {
            seen.insert(rep.instance.clone());
        } else {
            seen.remove(&rep.instance);
        }
        Some((Observed(seen), next, rep.label()))
    }
}

pub enum OracleResult {
    Shortest(usize),
    Infeasible,
    TooLarge,
}

/// Whether some usable type could serve `tag` through a finite chain of
/// requirements. Instances are never revived once killed, and new ones come
/// only from pool spares, so a tag failing this is never provided.
fn derivable(c: &Configuration, tag: &str, path: &mut Vec<String>) -> bool {
    if path.iter().any(|t| t == tag) {
        return false;
    }
    path.push(tag.to_string());
    let usable = c
        .instances
        .values()
        .filter(|i| i.status != Status::Killed)
        .map(|i| &i.ctype)
        .chain(c.pool.values().filter(|(_, n)| *n > 0).map(|(t, _)| t));
    let mut found = false;
    for t in usable {
        if t.provides.contains(tag) && t.requires.iter().all(|r| derivable(c, r, path)) {
            found = true;
            break;
        }
    }
    path.pop();
    found
}

pub fn shortest_plan(p: &Problem, limit: usize) -> OracleResult {
    if p.target.satisfied_by(&p.current) {
        return OracleResult::Shortest(0);
    }
    if p.target
        .required
        .iter()
        .any(|t| !derivable(&p.current, t, &mut Vec::new()))
    {
        return OracleResult::Infeasible;
    }
    let start = (p.current.clone(), Observed::default());
    let mut seen: HashSet<(Configuration, Observed)> = HashSet::from([start.clone()]);
    let mut frontier = VecDeque::from([(start, 0usize)]);
    while let Some(((c, obs), d)) = frontier.pop_front() {
        for cmd in all_commands(&c, &p.target) {
            let Some((o2, c2, _)) = obs.step(&c, &cmd) else {
                continue;
            };
            if !check_invariants(&c2, &p.constraints).is_empty() {
                continue;
            }
            if p.target.satisfied_by(&c2) {
                return OracleResult::Shortest(d + 1);
            }
            if seen.insert((c2.clone(), o2.clone())) {
                if seen.len() > limit {
                    return OracleResult::TooLarge;
                }
                frontier.push_back(((c2, o2), d + 1));
            }
        }
    }
    OracleResult::Infeasible
}

/// Replays `plan`, checking reports, constraints at every step, observed
/// quiescence before removal and the target at the end.
pub fn check_plan(p: &Problem, plan: &[ReconfigCommand], expected: &[String]) -> Result<(), String> {
    if plan.len() != expected.len() {
        return Err("plan and expected reports differ in length".into());
    }
    let mut c = p.current.clone();
    let mut obs = Observed::default();
    for (k, cmd) in plan.iter().enumerate() {
        let (o2, c2, label) = obs
            .step(&c, cmd)
            .ok_or_else(|| format!("step {k}: {cmd} refused or removal without observed quiescence"))?;
        if label != expected[k] {
            return Err(format!("step {k}: report {label}, expected {}", expected[k]));
        }
        let v = check_invariants(&c2, &p.constraints);
        if !v.is_empty() {
            return Err(format!("step {k}: {cmd} violates {v:?}"));
        }
        c = c2;
        obs = o2;
    }
    if !p.target.satisfied_by(&c) {
        return Err("final configuration misses the target".into());
    }
    Ok(())
}
