//! Top layer: resolves the goal model, decomposes each resolution into a
//! behaviour game and reconfiguration targets, and precomputes a portfolio.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::behaviour_goal::{BehaviourGoal, GoalError, GoalRegistry};
use crate::config::{capability_profile, CapabilityProfile, Configuration, Status, StructuralConstraint, TargetSpec};
use crate::goal_model::{rank_resolutions, viable_resolutions, GoalModel, GoalModelError, Resolution};
use crate::knowledge::WorldSnapshot;
use crate::mission::{build_arena, build_mode_switch_arena, MissionError, MissionSpec, Start, Task, SWITCH_SLACK};
use crate::planner::{plan_reconfiguration, PlanError, ReconfigStrategy};
use crate::solver::{check_simulation, solve, verify_closed_loop, GameProblem, Synthesis};
use crate::strategy::StrategyAutomaton;

pub const CURRENT: &str = "current";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GoalManagerError {
    #[error("no behaviour goal registered for assertion `{0}`")]
    UnknownAssertion(String),
    #[error("nothing realizable: {}", .0.join("; "))]
    EmptyPortfolio(Vec<String>),
    #[error(transparent)]
    Model(#[from] GoalModelError),
    #[error(transparent)]
    Mission(#[from] MissionError),
    #[error(transparent)]
    Goal(GoalError),
}

/// A consumption-rate assumption under which behaviour strategies are built.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoalManagerConfig {
    pub mission: MissionSpec,
    pub variants: Vec<Variant>,
    pub k: usize,
    pub delay: u64,
    pub constraints: Vec<StructuralConstraint>,
}

#[derive(Clone, Debug)]
pub struct AdaptationProblem {
    pub behaviour: GameProblem,
    pub reconfig_targets: Vec<TargetSpec>,
    pub resolution: Resolution,
}

impl AdaptationProblem {
    pub fn needs_reconfiguration(&self) -> bool {
        !self.reconfig_targets.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BehaviourEntry {
    pub id: String,
    pub strategy: StrategyAutomaton,
    pub variant: String,
    /// Consumption-rate bound the strategy assumes.
    pub bound: f64,
    pub required: CapabilityProfile,
    pub resolution: String,
    /// Position of the resolution in preference order; 0 is best.
    pub rank: usize,
    /// The strategy itself issues `cfg.reconfigure`.
    pub mode_switch: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Portfolio {
    pub generation: u64,
    pub behaviours: BTreeMap<String, BehaviourEntry>,
    pub reconfigs: BTreeMap<String, ReconfigStrategy>,
    /// (behaviour id, reconfig id or `current`)
    pub consistency: BTreeSet<(String, String)>,
    /// Behaviour ids per resolution, strongest assumption first.
    pub hierarchy: Vec<Vec<String>>,
    pub skipped: Vec<String>,
    pub snapshot_profile: CapabilityProfile,
}

impl Portfolio {
    pub fn partners(&self, behaviour: &str) -> impl Iterator<Item = &str> + '_ {
        let b = behaviour.to_string();
        self.consistency
            .range((b.clone(), String::new())..)
            .take_while(move |(x, _)| *x == b)
            .map(|(_, r)| r.as_str())
    }

    /// Checks the pairing invariant; returns the offending pairs.
    pub fn ill_formed_pairs(&self) -> Vec<(String, String)> {
        self.consistency
            .iter()
            .filter(|(b, r)| {
                let Some(e) = self.behaviours.get(b) else { return true };
                let profile = if r == CURRENT {
                    Some(&self.snapshot_profile)
                } else {
                    self.reconfigs.get(r).map(|s| &s.target_profile)
                };
                !profile.is_some_and(|p| e.required.is_subset(p))
            })
            .cloned()
            .collect()
    }
}

/// Profile reachable by activating every live instance and adding spares,
/// ignoring wiring; the planner later confirms it.
pub fn optimistic_profile(c: &Configuration, unavailable: &BTreeSet<String>) -> CapabilityProfile {
    let mut tags: CapabilityProfile = c
        .instances
        .values()
        .filter(|i| i.status != Status::Killed)
        .flat_map(|i| i.ctype.provides.iter().cloned())
        .collect();
    for (ty, spares) in c.pool.values() {
        if *spares > 0 {
            tags.extend(ty.provides.iter().cloned());
        }
    }
    tags.retain(|t| !unavailable.contains(t));
    tags
}

fn killed(c: &Configuration) -> BTreeSet<String> {
    c.instances
        .iter()
        .filter(|(_, i)| i.status == Status::Killed)
        .map(|(id, _)| id.clone())
        .collect()
}

fn target_for(res: &Resolution, c: &Configuration) -> TargetSpec {
    let mut t = TargetSpec::requiring(res.capabilities.iter().cloned());
    t.forbidden = killed(c);
    t
}

/// Behaviour game plus the reconfiguration targets that close the gap to the
/// resolution's capabilities.
pub fn decompose(
    res: &Resolution,
    snapshot: &WorldSnapshot,
    current: &Configuration,
    registry: &GoalRegistry,
    cfg: &GoalManagerConfig,
    bound: f64,
    plan_len: usize,
) -> Result<AdaptationProblem, GoalManagerError> {
    let mut goals = Vec::new();
    for a in res.requirements.iter().chain(&res.assumptions) {
        let g = registry
            .get(a)
            .map_err(|_| GoalManagerError::UnknownAssertion(a.clone()))?;
        goals.push(g.clone());
    }
    let goal = BehaviourGoal::conjoin(&goals).map_err(GoalManagerError::Goal)?;
    let profile = capability_profile(current);
    let gap = !res.capabilities.is_subset(&profile);
    let task = Task::for_capabilities(&res.capabilities);
    let arena = if gap {
        let horizon = cfg.delay as i64 + plan_len as i64 + SWITCH_SLACK;
        build_mode_switch_arena(&cfg.mission, snapshot, bound, horizon)?
    } else {
        build_arena(&cfg.mission, task, Start::from_snapshot(&cfg.mission, snapshot)?, bound)?
    };
    Ok(AdaptationProblem {
        behaviour: GameProblem::new(arena, goal),
        reconfig_targets: if gap {
            vec![target_for(res, current)]
        } else {
            Vec::new()
        },
        resolution: res.clone(),
    })
}

/// Plans for every live provider of a required capability failing.
fn contingencies(
    current: &Configuration,
    required: &CapabilityProfile,
    cs: &[StructuralConstraint],
    out: &mut BTreeMap<String, ReconfigStrategy>,
) -> Vec<String> {
    let mut ids = Vec::new();
    for (id, inst) in &current.instances {
        if inst.status != Status::Active || inst.ctype.provides.is_disjoint(required) {
            continue;
        }
        let mut what_if = current.clone();
        what_if.kill(id);
        let mut target = TargetSpec::requiring(required.iter().cloned());
        target.forbidden = killed(&what_if);
        let cid = format!("contingency/{id}");
        if let Ok(s) = plan_reconfiguration(&what_if, &target, cs) {
            out.insert(cid.clone(), s.with_id(cid.clone()));
            ids.push(cid);
        }
    }
    ids
}

/// Up to `k` top-ranked viable resolutions, each solved under every
/// assumption variant.
pub fn precompute_portfolio(
    model: &GoalModel,
    snapshot: &WorldSnapshot,
    current: &Configuration,
    registry: &GoalRegistry,
    cfg: &GoalManagerConfig,
    unavailable: &BTreeSet<String>,
) -> Result<Portfolio, GoalManagerError> {
    let achievable = optimistic_profile(current, unavailable);
    let ranked = match viable_resolutions(model, &[achievable]) {
        Ok(v) => rank_resolutions(v, &model.soft)?,
        Err(GoalModelError::EmptyResolutionSet) => {
            return Err(GoalManagerError::EmptyPortfolio(vec!["no viable resolution".into()]))
        }
        Err(e) => return Err(e.into()),
    };
    let profile = capability_profile(current);
    let mut p = Portfolio {
        snapshot_profile: profile.clone(),
        ..Portfolio::default()
    };
    for (rank, res) in ranked.into_iter().take(cfg.k.max(1)).enumerate() {
        let tag = res.tag();
        let mut partners = Vec::new();
        let mut plan_len = 0;
        if res.capabilities.is_subset(&profile) {
            partners.push(CURRENT.to_string());
            partners.extend(contingencies(
                current,
                &res.capabilities,
                &cfg.constraints,
                &mut p.reconfigs,
            ));
        } else {
            match plan_reconfiguration(current, &target_for(&res, current), &cfg.constraints) {
                Ok(s) => {
                    let rid = format!("reconf/{tag}");
                    plan_len = s.plan.len();
                    p.reconfigs.insert(rid.clone(), s.with_id(rid.clone()));
                    partners.push(rid);
                }
                Err(e) => {
                    let why = match e {
                        PlanError::Infeasible => "infeasible".to_string(),
                        other => other.to_string(),
                    };
                    p.skipped.push(format!("{tag}: reconfiguration {why}"));
                    continue;
                }
            }
        }
        let mut chain: Vec<String> = Vec::new();
        for (j, v) in cfg.variants.iter().enumerate() {
            let problem = decompose(&res, snapshot, current, registry, cfg, v.bound, plan_len)?;
            let id = format!("{tag}/{j}-{}", v.name);
            let strategy = match solve(&problem.behaviour) {
                Synthesis::Realizable(s) => s,
                Synthesis::Unrealizable => {
                    p.skipped.push(format!("{id}: unrealizable"));
                    continue;
                }
            };
            let mut strategy = strategy;
            strategy.id = id.clone();
            let report = verify_closed_loop(&problem.behaviour.arena, &strategy, &problem.behaviour.goal, None);
            if !report.passed() {
                p.skipped.push(format!("{id}: failed verification"));
                continue;
            }
            if let Some(prev) = chain.last() {
                if !check_simulation(&p.behaviours[prev].strategy, &strategy) {
                    p.skipped.push(format!("{id}: does not simulate {prev}"));
                    continue;
                }
            }
            for r in &partners {
                p.consistency.insert((id.clone(), r.clone()));
            }
            p.behaviours.insert(
                id.clone(),
                BehaviourEntry {
                    id: id.clone(),
                    strategy,
                    variant: v.name.clone(),
                    bound: v.bound,
                    required: res.capabilities.clone(),
                    resolution: tag.clone(),
                    rank,
                    mode_switch: problem.needs_reconfiguration(),
                },
            );
            chain.push(id);
        }
        if !chain.is_empty() {
            p.hierarchy.push(chain);
        }
    }
    let used: BTreeSet<&str> = p.consistency.iter().map(|(_, r)| r.as_str()).collect();
    p.reconfigs.retain(|id, _| used.contains(id.as_str()));
    if p.behaviours.is_empty() {
        return Err(GoalManagerError::EmptyPortfolio(p.skipped));
    }
    Ok(p)
}

/// Capability whose absence an observed failure event reveals.
pub fn capability_of_failure(observed: &str) -> Option<&'static str> {
    let cmd = observed.strip_suffix("_fail")?;
    Some(match cmd {
        "goto" => "positioning",
        "pickup" => "grip",
        "analyse" => "ir_camera",
        "land" | "takeoff" | "fold" | "recharge" => "attitude",
        _ => return None,
    })
}

/// The top-layer component. Recomputations complete `delay` ticks after
/// they are requested.
#[derive(Clone, Debug)]
pub struct GoalManager {
    pub cfg: GoalManagerConfig,
    pub registry: GoalRegistry,
    pub unavailable: BTreeSet<String>,
    generation: u64,
}

impl GoalManager {
    pub fn new(cfg: GoalManagerConfig, registry: GoalRegistry) -> Self {
        Self {
            cfg,
            registry,
            unavailable: BTreeSet::new(),
            generation: 0,
        }
    }

    pub fn compute(
        &mut self,
        model: &GoalModel,
        snapshot: &WorldSnapshot,
        current: &Configuration,
    ) -> Result<Portfolio, GoalManagerError> {
        let mut p = precompute_portfolio(model, snapshot, current, &self.registry, &self.cfg, &self.unavailable)?;
        self.generation += 1;
        p.generation = self.generation;
        Ok(p)
    }

    /// Recomputes after an escalation, first marking the capability the
    /// failure revealed as unavailable.
    pub fn handle_escalation(
        &mut self,
        observed: &str,
        model: &GoalModel,
        snapshot: &WorldSnapshot,
        current: &Configuration,
    ) -> Result<Portfolio, GoalManagerError> {
        if let Some(c) = capability_of_failure(observed) {
            self.unavailable.insert(c.to_string());
        }
        self.compute(model, snapshot, current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ComponentType;
    use crate::mission::{registry, GOAL_MODEL};

    fn cfg(variants: &[(&str, f64)], k: usize) -> GoalManagerConfig {
        GoalManagerConfig {
            mission: MissionSpec {
                width: 8,
                height: 8,
                base: (0, 0),
                samples: vec![(3, 3), (7, 7), (7, 4)],
                capacity: 150,
                threshold: 30,
            },
            variants: variants
                .iter()
                .map(|(n, b)| Variant {
                    name: n.to_string(),
                    bound: *b,
                })
                .collect(),
            k,
            delay: 3,
            constraints: vec![StructuralConstraint::NeverDisabled("attitude".into())],
        }
    }

    fn uav() -> Configuration {
        let mut c = Configuration::default();
        for (id, p, st) in [
            ("attitude", "attitude", Status::Active),
            ("gps", "positioning", Status::Active),
            ("gripper", "grip", Status::Active),
            ("ir_cam", "ir_camera", Status::Inactive),
        ] {
            c.add_instance(id, ComponentType::new(id, &[p], &[]), st);
        }
        c
    }

    fn snap(pairs: &[(&str, &str)]) -> WorldSnapshot {
        let mut s = WorldSnapshot::default();
        for (k, v) in pairs {
            s.vars.insert(k.to_string(), v.to_string());
        }
        s
    }

    fn start() -> WorldSnapshot {
        snap(&[
            ("phase", "ready"),
            ("at", "base"),
            ("pos", "base"),
            ("done", "none"),
            ("bat", "150"),
            ("battery", "150"),
            ("arm", "extended"),
            ("airborne", "yes"),
        ])
    }

    #[test]
    fn two_variants_share_current() {
        let m = GoalModel::parse(GOAL_MODEL).unwrap();
        let p = precompute_portfolio(
            &m,
            &start(),
            &uav(),
            &registry(),
            &cfg(&[("nominal", 1.5), ("conservative", 2.5)], 1),
            &BTreeSet::new(),
        )
        .unwrap();
        let ids: Vec<&String> = p.behaviours.keys().collect();
        assert_eq!(ids, vec!["collect_at_base/0-nominal", "collect_at_base/1-conservative"]);
        assert!(p
            .consistency
            .contains(&("collect_at_base/0-nominal".into(), CURRENT.into())));
        assert!(!p
            .consistency
            .contains(&("collect_at_base/1-conservative".into(), "contingency/gps".into())));
        assert!(p.ill_formed_pairs().is_empty());
        assert_eq!(p.hierarchy.len(), 1);
    }

    #[test]
    fn k2_holds_both_resolutions() {
        let m = GoalModel::parse(GOAL_MODEL).unwrap();
        let p = precompute_portfolio(
            &m,
            &start(),
            &uav(),
            &registry(),
            &cfg(&[("nominal", 1.5)], 2),
            &BTreeSet::new(),
        )
        .unwrap();
        let e = &p.behaviours["analyse_in_situ/0-nominal"];
        assert!(e.mode_switch);
        assert_eq!(
            p.partners("analyse_in_situ/0-nominal").collect::<Vec<_>>(),
            vec!["reconf/analyse_in_situ"]
        );
        assert!(p.ill_formed_pairs().is_empty());
    }

    #[test]
    fn escalation_marks_capability_and_empty_portfolio() {
        let m = GoalModel::parse(GOAL_MODEL).unwrap();
        let mut gm = GoalManager::new(cfg(&[("nominal", 1.5)], 1), registry());
        let mut c = uav();
        c.kill("gripper");
        let s = snap(&[
            ("phase", "ready"),
            ("at", "s1"),
            ("pos", "s1"),
            ("done", "s0"),
            ("bat", "110"),
            ("battery", "110"),
            ("arm", "extended"),
            ("airborne", "yes"),
        ]);
        let p = gm.handle_escalation("pickup_fail", &m, &s, &c).unwrap();
        assert_eq!(
            p.behaviours.keys().collect::<Vec<_>>(),
            vec!["analyse_in_situ/0-nominal"]
        );
        let plan: Vec<String> = p.reconfigs["reconf/analyse_in_situ"]
            .plan
            .iter()
            .map(|c| c.to_string())
            .collect();
        assert_eq!(
            plan,
            vec!["cfg.activate(ir_cam)", "cfg.passivate(gripper)", "cfg.remove(gripper)"]
        );
        c.kill("ir_cam");
        assert!(matches!(
            gm.handle_escalation("x", &m, &s, &c),
            Err(GoalManagerError::EmptyPortfolio(_))
        ));
    }

    #[test]
    fn unknown_assertion() {
        let mut m = GoalModel::parse(GOAL_MODEL).unwrap();
        m.apply_record(&["assign", "locate", "cap:positioning", "assert:teleport"].map(String::from))
            .unwrap();
        let r = precompute_portfolio(
            &m,
            &start(),
            &uav(),
            &registry(),
            &cfg(&[("nominal", 1.5)], 1),
            &BTreeSet::new(),
        );
        assert_eq!(r.unwrap_err(), GoalManagerError::UnknownAssertion("teleport".into()));
    }
}
