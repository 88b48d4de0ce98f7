//! Deterministic executive. Each tick runs the target, the knowledge
//! repository, both enactors, the strategy managers and the goal manager,
//! in that order, and records everything observable in the trace.

use std::collections::VecDeque;

use thiserror::Error;

use crate::config::{capability_profile, CMD_FAIL};
use crate::enactment::{BehaviourEnactor, ExceptionKind, ExceptionRecord, Mode, ReconfigEnactor, ReconfigStep};
use crate::goal_manager::{BehaviourEntry, GoalManager, GoalManagerConfig, GoalManagerError, Portfolio, CURRENT};
use crate::goal_model::{GoalModel, GoalModelError};
use crate::knowledge::{ChangeNotification, KnowledgeRepo, LogRecord, NotifyKind, Payload};
use crate::lts::{RECONFIGURE, RECONF_FAIL, RECONF_OK};
use crate::managers::{hot_swap, StrategyManagers, Trigger};
use crate::mission::{registry, MissionSpec};
use crate::scenario::Scenario;
use crate::sim::{command_capability, SimError, TickOutput, World, HOLD};
use crate::trace::TraceRecord;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("goal model: {0}")]
    Model(#[from] GoalModelError),
    #[error("goal manager: {0}")]
    Goal(GoalManagerError),
    #[error("target: {0}")]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    Aborted(String),
    Timeout,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Complete => 0,
            Outcome::Aborted(_) => 2,
            Outcome::Timeout => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: Vec<TraceRecord>,
    pub outcome: Outcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Owner {
    Behaviour,
    Manager,
}

struct Runtime {
    world: World,
    sc: Scenario,
    repo: KnowledgeRepo,
    gm: GoalManager,
    mgrs: StrategyManagers,
    benact: BehaviourEnactor,
    renact: ReconfigEnactor,
    owner: Option<Owner>,
    /// Portfolio computed but not yet delivered: (due, requested, result).
    incoming: Option<(u64, u64, Result<Portfolio, GoalManagerError>)>,
    /// Behaviour strategy awaiting a swap point, with the trigger.
    pending_swap: Option<(String, String)>,
    /// Manager-staged plan waiting for the reconfiguration enactor.
    pending_stage: bool,
    hold: bool,
    exceptions: Vec<ExceptionRecord>,
    notes: VecDeque<ChangeNotification>,
    escalate: Option<String>,
    trace: Vec<TraceRecord>,
}

pub fn run(sc: &Scenario, seed: u64, max_ticks: u64) -> Result<RunResult, RunError> {
    if max_ticks == 0 {
        return Ok(RunResult {
            trace: Vec::new(),
            outcome: Outcome::Timeout,
        });
    }
    let mut rt = Runtime::new(sc)?;
    rt.rec(
        0,
        "goal",
        "notify",
        &[("msg", "start".into()), ("seed", seed.to_string())],
    );
    rt.ingest_probe(0)?;
    rt.repo.capability_change();
    let first = rt.compute(None);
    rt.incoming = Some((0, 0, first));
    if let Some(outcome) = rt.phase_managers(0) {
        return Ok(rt.finish(outcome));
    }
    for t in 1..=max_ticks {
        let out = rt.phase_target()?;
        if out.battery == 0 {
            rt.rec(t, "target", "notify", &[("msg", "battery_depleted".into())]);
            return Ok(rt.finish(Outcome::Aborted("battery depleted".into())));
        }
        rt.phase_repo(t, &out)?;
        rt.phase_enact(t, &out);
        if let Some(outcome) = rt.phase_managers(t) {
            return Ok(rt.finish(outcome));
        }
        rt.phase_goal(t);
        if rt.world.mission_complete() {
            rt.rec(t, "target", "notify", &[("msg", "mission_complete".into())]);
            return Ok(rt.finish(Outcome::Complete));
        }
    }
    Ok(rt.finish(Outcome::Timeout))
}

/// The portfolio the goal manager computes before the first tick.
pub fn initial_portfolio(sc: &Scenario) -> Result<Portfolio, RunError> {
    let mut rt = Runtime::new(sc)?;
    rt.ingest_probe(0)?;
    rt.repo.capability_change();
    rt.compute(None).map_err(RunError::Goal)
}

impl Runtime {
    fn new(sc: &Scenario) -> Result<Runtime, RunError> {
        let model = GoalModel::parse(&sc.goal_model)?;
        let world = sc.world();
        let mut repo = KnowledgeRepo::new(model, sc.consumption);
        for v in &sc.variants {
            repo.register_bound(&v.name, v.bound);
        }
        let cfg = GoalManagerConfig {
            mission: MissionSpec::from_world(&world),
            variants: sc.variants.clone(),
            k: sc.portfolio_k,
            delay: sc.delay,
            constraints: sc.constraints.clone(),
        };
        Ok(Runtime {
            world,
            sc: sc.clone(),
            repo,
            gm: GoalManager::new(cfg, registry()),
            mgrs: StrategyManagers::default(),
            benact: BehaviourEnactor::default(),
            renact: ReconfigEnactor::default(),
            owner: None,
            incoming: None,
            pending_swap: None,
            pending_stage: false,
            hold: false,
            exceptions: Vec::new(),
            notes: VecDeque::new(),
            escalate: None,
            trace: Vec::new(),
        })
    }

    fn rec(&mut self, t: u64, layer: &str, kind: &str, fields: &[(&str, String)]) {
        let mut r = TraceRecord::new(t, layer, kind);
        for (k, v) in fields {
            r = r.with(k, v);
        }
        self.trace.push(r);
    }

    fn finish(self, outcome: Outcome) -> RunResult {
        RunResult {
            trace: self.trace,
            outcome,
        }
    }

    fn compute(&mut self, observed: Option<&str>) -> Result<Portfolio, GoalManagerError> {
        let model = self.repo.model().clone();
        let snap = self.repo.snapshot().clone();
        match observed {
            Some(o) => self.gm.handle_escalation(o, &model, &snap, &self.world.config),
            None => self.gm.compute(&model, &snap, &self.world.config),
        }
    }

    fn ingest_probe(&mut self, t: u64) -> Result<(), SimError> {
        let probe = self.world.probe();
        for (k, v) in probe {
            if self.repo.snapshot().get(&k) != Some(v.as_str()) {
                self.log(t, "probe", Payload::Fact { key: k, value: v });
            }
        }
        Ok(())
    }

    fn log(&mut self, t: u64, source: &str, payload: Payload) {
        self.repo
            .append_log(LogRecord {
                tick: t,
                source: source.to_string(),
                payload,
            })
            .expect("ticks are monotone");
    }

    /// Phase 1: one target step.
    fn phase_target(&mut self) -> Result<TickOutput, SimError> {
        let profile = capability_profile(&self.world.config);
        let bcmd: Option<String> = if self.hold {
            self.hold = false;
            Some(HOLD.to_string())
        } else {
            match self.benact.pending_command() {
                Some(c) => {
                    let staged = self.owner == Some(Owner::Manager) && self.renact.mode() == Mode::Running;
                    let blocked = staged && command_capability(c).is_some_and(|cap| !profile.contains(cap));
                    if blocked {
                        None
                    } else {
                        self.benact.acknowledge()
                    }
                }
                None => None,
            }
        };
        let rcmd = self.renact.acknowledge();
        let out = self.world.tick(bcmd.as_deref(), rcmd.as_ref(), &self.sc.faults)?;
        let t = self.world.tick;
        for f in &out.faults {
            self.rec(
                t,
                "target",
                "event",
                &[("event", "component_fault".into()), ("component", f.clone())],
            );
        }
        for s in &out.statuses {
            self.rec(
                t,
                "target",
                "status",
                &[
                    ("inst", s.instance.clone()),
                    ("status", s.status.as_str().into()),
                    ("bindings", s.bindings.to_string()),
                ],
            );
        }
        if let Some(Err(e)) = &out.reconfig {
            self.rec(
                t,
                "target",
                "event",
                &[("event", CMD_FAIL.into()), ("reason", e.to_string())],
            );
        }
        for e in &out.events {
            self.rec(t, "target", "event", &[("event", e.clone())]);
        }
        if out.battery_low {
            self.rec(t, "target", "event", &[("event", "battery_low".into())]);
        }
        self.rec(
            t,
            "target",
            "event",
            &[("event", "battery_sample".into()), ("battery", out.battery.to_string())],
        );
        Ok(out)
    }

    /// Phase 2: log ingestion and inference.
    fn phase_repo(&mut self, t: u64, out: &TickOutput) -> Result<(), SimError> {
        for e in &out.events {
            self.log(t, "target", Payload::Event(e.clone()));
        }
        if out.battery_low {
            self.log(t, "target", Payload::Event("battery_low".into()));
        }
        for s in &out.statuses {
            self.log(
                t,
                "target",
                Payload::Status {
                    instance: s.instance.clone(),
                    status: s.status.as_str().into(),
                    bindings: s.bindings,
                },
            );
        }
        for (label, surcharge) in &out.executed {
            self.log(
                t,
                "target",
                Payload::Command {
                    label: label.clone(),
                    surcharge: *surcharge,
                },
            );
        }
        self.log(t, "target", Payload::Battery(out.battery));
        self.ingest_probe(t)?;
        if !self.sc.knowledge {
            return Ok(());
        }
        let mut notes = Vec::new();
        if let Ok((_, n)) = self.repo.infer_consumption_rate(self.sc.window) {
            notes.extend(n);
        }
        notes.extend(self.repo.capability_change());
        for n in notes {
            self.rec(
                t,
                "repo",
                "notify",
                &[
                    ("note", n.kind.to_string()),
                    ("subject", n.subject.clone()),
                    ("old", n.old.clone()),
                    ("new", n.new.clone()),
                ],
            );
            self.notes.push_back(n);
        }
        Ok(())
    }

    fn trace_bcmds(&mut self, t: u64, cmds: &[String]) {
        for c in cmds {
            let fields = [
                ("cmd", c.clone()),
                ("state", self.benact.state_name().to_string()),
                ("strategy", self.benact.strategy_id().to_string()),
            ];
            self.rec(t, "enact_b", "command", &fields);
        }
    }

    fn trace_exception(&mut self, t: u64, layer: &str, e: &ExceptionRecord) {
        let fields = [
            ("exc", e.kind.to_string()),
            ("observed", e.observed.clone()),
            ("strategy", e.strategy.clone()),
            ("state", e.state.clone()),
        ];
        self.rec(t, layer, "exception", &fields);
    }

    /// Feeds one event to the behaviour enactor and handles what it emits.
    fn feed_behaviour(&mut self, t: u64, ev: &str) -> bool {
        match self.benact.step(t, ev) {
            Ok(cmds) => {
                self.trace_bcmds(t, &cmds);
                if cmds.iter().any(|c| c == RECONFIGURE) {
                    self.owner = Some(Owner::Behaviour);
                    self.start_reconfig(t);
                }
                true
            }
            Err(e) => {
                self.trace_exception(t, "enact_b", &e);
                self.exceptions.push(e);
                false
            }
        }
    }

    fn start_reconfig(&mut self, t: u64) {
        match self.renact.start() {
            ReconfigStep::Issue(cmds) => {
                for c in cmds {
                    let f = [
                        ("cmd", c.to_string()),
                        ("strategy", self.renact.strategy_id().to_string()),
                    ];
                    self.rec(t, "enact_r", "command", &f);
                }
            }
            ReconfigStep::Completed => self.reconfig_done(t),
        }
    }

    fn reconfig_done(&mut self, t: u64) {
        let f = [
            ("event", RECONF_OK.into()),
            ("strategy", self.renact.strategy_id().to_string()),
        ];
        self.rec(t, "enact_r", "event", &f);
        if self.owner.take() == Some(Owner::Behaviour) {
            let bat = self.world.report_battery();
            if self.feed_behaviour(t, RECONF_OK) {
                self.feed_behaviour(t, &bat);
            }
        }
    }

    /// Phase 3: reconfiguration enactor, then behaviour enactor.
    fn phase_enact(&mut self, t: u64, out: &TickOutput) {
        if let Some(r) = &out.reconfig {
            let label = match r {
                Ok(rep) => rep.label(),
                Err(_) => CMD_FAIL.to_string(),
            };
            match self.renact.step(t, &label) {
                Ok(ReconfigStep::Issue(cmds)) => {
                    for c in cmds {
                        let f = [
                            ("cmd", c.to_string()),
                            ("strategy", self.renact.strategy_id().to_string()),
                        ];
                        self.rec(t, "enact_r", "command", &f);
                    }
                }
                Ok(ReconfigStep::Completed) => self.reconfig_done(t),
                Err(e) => {
                    self.trace_exception(t, "enact_r", &e);
                    if self.owner.take() == Some(Owner::Behaviour) {
                        self.feed_behaviour(t, RECONF_FAIL);
                    }
                    self.exceptions.push(e);
                }
            }
        }
        let mut events: Vec<String> = out.events.clone();
        if out.battery_low {
            events.push("battery_low".into());
        }
        for ev in events {
            if !self.feed_behaviour(t, &ev) {
                break;
            }
        }
    }

    /// Delivers a due portfolio. `Err` carries the abort outcome.
    fn deliver_portfolio(&mut self, t: u64) -> Result<bool, Outcome> {
        match &self.incoming {
            Some((due, _, _)) if *due <= t => {}
            _ => return Ok(false),
        }
        let (_, requested, result) = self.incoming.take().expect("checked");
        match result {
            Ok(p) => {
                log::debug!(
                    "t={t}: portfolio {} with {} behaviours, {} reconfigurations",
                    p.generation,
                    p.behaviours.len(),
                    p.reconfigs.len()
                );
                let gen = p.generation.to_string();
                self.rec(
                    t,
                    "goal",
                    "notify",
                    &[
                        ("msg", "portfolio_ready".into()),
                        ("gen", gen.clone()),
                        ("requested", requested.to_string()),
                    ],
                );
                for (b, r) in p.consistency.clone() {
                    let f = [
                        ("msg", "pair".into()),
                        ("gen", gen.clone()),
                        ("behaviour", b),
                        ("reconfig", r),
                    ];
                    self.rec(t, "goal", "notify", &f);
                }
                for why in p.skipped.clone() {
                    self.rec(
                        t,
                        "goal",
                        "notify",
                        &[("msg", "skipped".into()), ("gen", gen.clone()), ("reason", why)],
                    );
                }
                self.mgrs.install(p);
                Ok(true)
            }
            Err(e) => {
                let exc = match e {
                    GoalManagerError::EmptyPortfolio(_) => "EmptyPortfolio",
                    _ => "GoalManagerFailure",
                };
                self.rec(
                    t,
                    "goal",
                    "exception",
                    &[("exc", exc.into()), ("reason", e.to_string())],
                );
                // Without an initial portfolio there is nothing to run. Later
                // failures leave the lower layers on whatever they hold.
                if t == 0 {
                    Err(Outcome::Aborted(e.to_string()))
                } else {
                    Ok(false)
                }
            }
        }
    }

    fn generation(&self) -> u64 {
        self.mgrs.portfolio.as_ref().map_or(0, |p| p.generation)
    }

    /// Knowledge notifications that call for renegotiation.
    fn relevant(&self, n: &ChangeNotification) -> bool {
        match n.kind {
            NotifyKind::CapabilityAvailabilityChanged => {
                let (Some((b, _)), Some(p)) = (&self.mgrs.deployed, &self.mgrs.portfolio) else {
                    return true;
                };
                let profile = capability_profile(&self.world.config);
                p.behaviours.get(b).map_or(true, |e| !e.required.is_subset(&profile))
            }
            _ => true,
        }
    }

    /// Phase 4: trigger handling, negotiation and swaps.
    fn phase_managers(&mut self, t: u64) -> Option<Outcome> {
        let delivered = match self.deliver_portfolio(t) {
            Ok(d) => d,
            Err(o) => return Some(o),
        };
        let mut cause = String::new();
        let trigger = if let Some(first) = self.exceptions.first().cloned() {
            self.exceptions.clear();
            for n in std::mem::take(&mut self.notes) {
                self.rec(
                    t,
                    "mgr",
                    "notify",
                    &[("msg", "preempted".into()), ("note", n.kind.to_string())],
                );
            }
            cause = first.observed.clone();
            Some(Trigger::Exception(first.kind))
        } else if delivered {
            Some(if t == 0 { Trigger::Deploy } else { Trigger::Portfolio })
        } else if !self.notes.is_empty() && self.renact.mode() != Mode::Running && self.owner.is_none() {
            let notes: Vec<ChangeNotification> = self.notes.drain(..).collect();
            notes.into_iter().find(|n| self.relevant(n)).map(|n| {
                cause = n.subject.clone();
                Trigger::Knowledge(n.kind.to_string())
            })
        } else {
            None
        };
        if let Some(trigger) = trigger {
            self.negotiate(t, trigger, cause);
        }
        self.try_swap(t);
        if self.pending_stage && self.renact.mode() != Mode::Running {
            self.pending_stage = false;
            self.owner = Some(Owner::Manager);
            self.start_reconfig(t);
        }
        None
    }

    fn negotiate(&mut self, t: u64, trigger: Trigger, cause: String) {
        let repo = &self.repo;
        let facts = repo.snapshot().facts();
        // The rate assumption must hold and the strategy must have a state
        // for the situation at hand.
        let viable = |e: &BehaviourEntry| repo.within_bound(e.bound) && !e.strategy.matching_entries(&facts).is_empty();
        let tr = self.mgrs.negotiate(&viable, &self.world.config, trigger.clone());
        let gen = self.generation().to_string();
        for m in &tr.messages {
            let mut f = vec![
                ("msg", m.name().to_string()),
                ("trigger", trigger.to_string()),
                ("channel", trigger.channel().to_string()),
                ("gen", gen.clone()),
            ];
            f.extend(m.fields());
            if let (crate::managers::Message::Commit, Some((b, r))) = (m, &tr.committed) {
                f.push(("behaviour", b.clone()));
                f.push(("reconfig", r.clone()));
            }
            self.rec(t, "mgr", "negotiate", &f);
        }
        match tr.committed {
            Some((b, r)) => self.commit(t, &trigger, b, r),
            None => self.abort(t, &trigger, cause),
        }
    }

    fn commit(&mut self, _t: u64, trigger: &Trigger, b: String, r: String) {
        let p = self.mgrs.portfolio.as_ref().expect("commit implies a portfolio");
        let mode_switch = p.behaviours[&b].mode_switch;
        if r != CURRENT && self.renact.mode() != Mode::Running {
            self.renact.load(p.reconfigs[&r].clone());
            self.pending_stage = !mode_switch;
        }
        let live =
            self.benact.strategy_id() == b && matches!(self.benact.mode(), Mode::Running | Mode::AwaitingReconfig);
        self.pending_swap = if live { None } else { Some((b, trigger.to_string())) };
    }

    fn abort(&mut self, t: u64, trigger: &Trigger, cause: String) {
        self.rec(
            t,
            "mgr",
            "exception",
            &[
                ("exc", ExceptionKind::NoViableStrategy.to_string()),
                ("trigger", trigger.to_string()),
            ],
        );
        let escalate = match trigger {
            Trigger::Exception(_) => {
                self.hold = true;
                self.benact.suspend();
                self.pending_swap = None;
                self.rec(t, "mgr", "command", &[("cmd", HOLD.into())]);
                true
            }
            Trigger::Knowledge(k) => *k != NotifyKind::CapabilityAvailabilityChanged.to_string(),
            Trigger::Deploy => true,
            Trigger::Portfolio => false,
        };
        if escalate && self.incoming.is_none() && self.escalate.is_none() {
            self.escalate = Some(if cause.is_empty() { trigger.to_string() } else { cause });
        }
    }

    fn try_swap(&mut self, t: u64) {
        let Some((b, trig)) = self.pending_swap.clone() else {
            return;
        };
        let ready = match self.benact.mode() {
            Mode::Idle | Mode::Faulted => true,
            _ => self.benact.swap_point() && !self.benact.state_name().starts_with("a."),
        };
        if !ready {
            log::debug!("t={t}: swap to {b} waits for a swap point");
            return;
        }
        let strategy = self
            .mgrs
            .portfolio
            .as_ref()
            .expect("pending swap implies a portfolio")
            .behaviours[&b]
            .strategy
            .clone();
        let facts = self.repo.snapshot().facts();
        match hot_swap(&mut self.benact, &strategy, &facts, t) {
            Ok(sw) => {
                self.pending_swap = None;
                self.hold = false;
                self.rec(
                    t,
                    "mgr",
                    "swap",
                    &[("old", sw.old), ("new", sw.new), ("entry", sw.entry), ("trigger", trig)],
                );
                self.trace_bcmds(t, &sw.commands);
                if sw.commands.iter().any(|c| c == RECONFIGURE) {
                    self.owner = Some(Owner::Behaviour);
                    self.start_reconfig(t);
                }
            }
            Err(e) => {
                self.trace_exception(t, "mgr", &e);
                self.pending_swap = None;
            }
        }
    }

    /// Phase 5: escalations reach the goal manager, which answers after
    /// the configured delay.
    fn phase_goal(&mut self, t: u64) {
        let Some(cause) = self.escalate.take() else { return };
        let due = t + self.sc.delay;
        self.rec(
            t,
            "goal",
            "notify",
            &[
                ("msg", "escalation".into()),
                ("cause", cause.clone()),
                ("ready", due.to_string()),
            ],
        );
        let r = self.compute(Some(&cause));
        self.incoming = Some((due, t, r));
    }
}
