//! UAV mission domain: behaviour arenas built from world snapshots, the goal
//! model and the assertion registry.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::behaviour_goal::{BehaviourGoal, GoalRegistry};
use crate::knowledge::WorldSnapshot;
use crate::lts::{mode_switch_compose, Lts, LtsBuilder, LtsError, ModeSwitchSpec, RECONFIGURE, RECONF_FAIL, RECONF_OK};
use crate::predicate::Predicate;
use crate::sim::{bat_label, Cell, World};

pub const GOAL_MODEL: &str = "\
goal mission
goal handle
goal collect_at_base
goal analyse_in_situ
goal grip_samples
goal ir_inspect
goal locate
goal keep_charge
softgoal analysis_quality weight 1
refine mission AND handle locate keep_charge
refine handle OR collect_at_base analyse_in_situ
refine collect_at_base AND grip_samples
refine analyse_in_situ AND ir_inspect
assign grip_samples cap:grip assert:samples_collected
assign ir_inspect cap:ir_camera assert:samples_analysed
assign locate cap:positioning assert:positioned
assign keep_charge cap:attitude assert:battery_safe
score collect_at_base analysis_quality 0.9
score analyse_in_situ analysis_quality 0.4
";

/// Reach target shared by both mission variants. A failed reconfiguration
/// ends the game so the upper layers can take over.
pub fn mission_target() -> Predicate {
    Predicate::or([Predicate::prop("complete"), Predicate::prop("reconf_failed")])
}

pub fn registry() -> GoalRegistry {
    let mut r = GoalRegistry::new();
    r.register(BehaviourGoal::reach("samples_collected", mission_target()));
    r.register(BehaviourGoal::reach("samples_analysed", mission_target()));
    r.register(BehaviourGoal::safety("positioned", Predicate::False));
    r.register(BehaviourGoal::safety("battery_safe", Predicate::prop("low")));
    r
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissionError {
    #[error("snapshot lacks `{0}`")]
    MissingFact(String),
    #[error("unknown location `{0}`")]
    UnknownLocation(String),
    #[error(transparent)]
    Lts(#[from] LtsError),
}

/// What the UAV does at a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Collect,
    InSitu,
}

impl Task {
    pub fn for_capabilities(caps: &BTreeSet<String>) -> Task {
        if caps.contains("grip") {
            Task::Collect
        } else {
            Task::InSitu
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MissionSpec {
    pub width: i32,
    pub height: i32,
    pub base: Cell,
    pub samples: Vec<Cell>,
    pub capacity: i64,
    pub threshold: i64,
}

impl MissionSpec {
    pub fn from_world(w: &World) -> MissionSpec {
        MissionSpec {
            width: w.width,
            height: w.height,
            base: w.base,
            samples: w.samples.iter().map(|s| s.cell).collect(),
            capacity: w.capacity,
            threshold: w.threshold,
        }
    }

    pub fn cell_name(&self, c: Cell) -> String {
        if c == self.base {
            return "base".into();
        }
        match self.samples.iter().position(|s| *s == c) {
            Some(i) => format!("s{i}"),
            None => format!("{}_{}", c.0, c.1),
        }
    }

    pub fn resolve(&self, name: &str) -> Result<Cell, MissionError> {
        let bad = || MissionError::UnknownLocation(name.to_string());
        if name == "base" {
            return Ok(self.base);
        }
        if let Some(i) = name.strip_prefix('s').and_then(|i| i.parse::<usize>().ok()) {
            return self.samples.get(i).copied().ok_or_else(bad);
        }
        let (x, y) = name.split_once('_').ok_or_else(bad)?;
        let c: Cell = (x.parse().map_err(|_| bad())?, y.parse().map_err(|_| bad())?);
        if c.0 < 0 || c.1 < 0 || c.0 >= self.width || c.1 >= self.height {
            return Err(bad());
        }
        Ok(c)
    }

    fn done_label(&self, done: u32) -> String {
        let parts: Vec<String> = (0..self.samples.len())
            .filter(|i| done & (1 << i) != 0)
            .map(|i| format!("s{i}"))
            .collect();
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }

    fn parse_done(&self, label: &str) -> Result<u32, MissionError> {
        if label == "none" {
            return Ok(0);
        }
        let mut d = 0;
        for p in label.split('+') {
            let c = self.resolve(p)?;
            let i = self
                .samples
                .iter()
                .position(|s| *s == c)
                .ok_or_else(|| MissionError::UnknownLocation(p.into()))?;
            d |= 1 << i;
        }
        Ok(d)
    }

    fn all_done(&self) -> u32 {
        (1u32 << self.samples.len()) - 1
    }

    fn sample_at(&self, c: Cell) -> Option<usize> {
        self.samples.iter().position(|s| *s == c)
    }

    /// Every event label the behaviour layer can observe.
    fn declare_events(&self, b: &mut LtsBuilder) -> Result<(), LtsError> {
        for x in 0..self.width {
            for y in 0..self.height {
                b.declare(&format!("arrived_{}", self.cell_name((x, y))), false)?;
            }
        }
        for k in 0..=self.capacity {
            b.declare(&bat_label(k), false)?;
        }
        for e in [
            "goto_fail",
            "pickup_ok",
            "pickup_fail",
            "analysed",
            "analyse_fail",
            "landed",
            "land_fail",
            "took_off",
            "takeoff_fail",
            "arm_folded",
            "fold_fail",
            "recharged",
            "recharge_fail",
        ] {
            b.declare(e, false)?;
        }
        Ok(())
    }
}

fn dist(a: Cell, b: Cell) -> i64 {
    ((a.0 - b.0).abs() + (a.1 - b.1).abs()) as i64
}

fn worst(n: i64, beta: f64) -> i64 {
    (n as f64 * beta).ceil() as i64
}

/// Where an arena starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Start {
    Ready { at: Cell, done: u32, bat: i64 },
    Fly { from: Cell, to: Cell, done: u32, bat: i64 },
}

impl Start {
    /// Reads phase, at/from/to, done and the last reported battery level.
    pub fn from_snapshot(m: &MissionSpec, s: &WorldSnapshot) -> Result<Start, MissionError> {
        let get = |k: &str| s.get(k).ok_or_else(|| MissionError::MissingFact(k.to_string()));
        let done = m.parse_done(get("done")?)?;
        let bat: i64 = get("bat")?
            .parse()
            .map_err(|_| MissionError::MissingFact("bat".into()))?;
        if get("phase")? == "fly" {
            Ok(Start::Fly {
                from: m.resolve(get("from")?)?,
                to: m.resolve(get("to")?)?,
                done,
                bat,
            })
        } else {
            Ok(Start::Ready {
                at: m.resolve(get("at")?)?,
                done,
                bat,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Node {
    Ready {
        at: Cell,
        done: u32,
        bat: i64,
        air: bool,
    },
    Fly {
        from: Cell,
        to: Cell,
        done: u32,
        bat: i64,
    },
    Act {
        at: Cell,
        done: u32,
        bat: i64,
        air: bool,
        act: &'static str,
    },
    Report {
        at: Cell,
        done: u32,
        lo: i64,
        hi: i64,
        air: bool,
    },
    Hub,
    Failed,
}

struct Builder<'a> {
    m: &'a MissionSpec,
    task: Task,
    beta: f64,
    /// Post-reconfiguration arena: arm folded, airborne flag tracked.
    post: bool,
    b: LtsBuilder,
    ids: HashMap<Node, usize>,
    queue: VecDeque<Node>,
}

impl<'a> Builder<'a> {
    fn name(&self, n: &Node) -> String {
        let m = self.m;
        let air = |a: bool| if a { "up" } else { "down" };
        match *n {
            Node::Ready { at, done, bat, air: a } => {
                format!("r.{}.{}.{}.{}", m.cell_name(at), m.done_label(done), bat, air(a))
            }
            Node::Fly { from, to, done, bat } => {
                format!(
                    "f.{}.{}.{}.{}",
                    m.cell_name(from),
                    m.cell_name(to),
                    m.done_label(done),
                    bat
                )
            }
            Node::Act {
                at,
                done,
                bat,
                air: a,
                act,
            } => {
                format!(
                    "a.{}.{}.{}.{}.{}",
                    act,
                    m.cell_name(at),
                    m.done_label(done),
                    bat,
                    air(a)
                )
            }
            Node::Report {
                at,
                done,
                lo,
                hi,
                air: a,
            } => {
                format!("p.{}.{}.{}.{}.{}", m.cell_name(at), m.done_label(done), lo, hi, air(a))
            }
            Node::Hub => "hub".into(),
            Node::Failed => "reconf_failed".into(),
        }
    }

    fn props(&self, n: &Node) -> Vec<String> {
        let m = self.m;
        let mut p = Vec::new();
        match *n {
            Node::Ready { at, done, bat, air } => {
                p.push("phase=ready".to_string());
                p.push(format!("at={}", m.cell_name(at)));
                p.push(format!("done={}", m.done_label(done)));
                p.push(format!("bat={bat}"));
                p.push(format!("airborne={}", if air { "yes" } else { "no" }));
                if bat < m.threshold {
                    p.push("low".into());
                }
                if done == m.all_done() && at == m.base {
                    p.push("complete".into());
                }
            }
            Node::Fly { from, to, done, bat } => {
                p.push("phase=fly".to_string());
                p.push(format!("from={}", m.cell_name(from)));
                p.push(format!("to={}", m.cell_name(to)));
                p.push(format!("done={}", m.done_label(done)));
                p.push(format!("bat={bat}"));
            }
            Node::Act { act, .. } => {
                p.push("phase=act".into());
                p.push(format!("act={act}"));
            }
            Node::Report { .. } => p.push("phase=report".into()),
            Node::Hub => p.push("phase=reconf".into()),
            Node::Failed => p.push("reconf_failed".into()),
        }
        if self.post {
            p.push("arm=folded".into());
        }
        p
    }

    fn id(&mut self, n: Node) -> Result<usize, LtsError> {
        if let Some(&i) = self.ids.get(&n) {
            return Ok(i);
        }
        let i = self.b.add_state(&self.name(&n), self.props(&n))?;
        self.ids.insert(n, i);
        self.queue.push_back(n);
        Ok(i)
    }

    fn edge(&mut self, from: usize, label: &str, to: Node) -> Result<(), LtsError> {
        let t = self.id(to)?;
        self.b.add_transition(from, label, t);
        Ok(())
    }

    fn action(
        &mut self,
        s: usize,
        at: Cell,
        done: u32,
        bat: i64,
        air: bool,
        cmd: &'static str,
        ok: &str,
        surcharge: i64,
        next_done: u32,
        next_air: bool,
    ) -> Result<(), LtsError> {
        let act = Node::Act {
            at,
            done,
            bat,
            air,
            act: cmd,
        };
        self.edge(s, cmd, act)?;
        let a = self.id(act)?;
        let hi = bat - surcharge;
        self.edge(
            a,
            ok,
            Node::Report {
                at,
                done: next_done,
                lo: hi - worst(1, self.beta),
                hi,
                air: next_air,
            },
        )
    }

    fn recharge(&mut self, s: usize, at: Cell, done: u32, bat: i64) -> Result<(), LtsError> {
        let act = Node::Act {
            at,
            done,
            bat,
            air: false,
            act: "recharge",
        };
        self.edge(s, "recharge", act)?;
        let a = self.id(act)?;
        let hi = self.m.capacity;
        let lo = hi - worst(1, self.beta);
        self.edge(
            a,
            "recharged",
            Node::Report {
                at,
                done,
                lo,
                hi,
                air: false,
            },
        )
    }

    fn expand(&mut self, n: Node) -> Result<(), LtsError> {
        let s = self.ids[&n];
        let m = self.m;
        match n {
            Node::Ready { at, done, bat, air } => {
                if bat < m.threshold || (done == m.all_done() && at == m.base) {
                    return Ok(());
                }
                if air {
                    let mut dests: Vec<Cell> = (0..m.samples.len())
                        .filter(|i| done & (1 << i) == 0)
                        .map(|i| m.samples[i])
                        .collect();
                    dests.push(m.base);
                    for to in dests {
                        if to != at {
                            self.edge(
                                s,
                                &format!("goto_{}", m.cell_name(to)),
                                Node::Fly {
                                    from: at,
                                    to,
                                    done,
                                    bat,
                                },
                            )?;
                        }
                    }
                }
                if let Some(i) = m.sample_at(at).filter(|i| done & (1 << i) == 0) {
                    match self.task {
                        Task::Collect if !self.post => {
                            self.action(s, at, done, bat, air, "pickup", "pickup_ok", 2, done | (1 << i), air)?
                        }
                        Task::InSitu => self.action(
                            s,
                            at,
                            done,
                            bat,
                            air,
                            "analyse_insitu",
                            "analysed",
                            3,
                            done | (1 << i),
                            air,
                        )?,
                        _ => {}
                    }
                }
                if !self.post && at == m.base && bat < m.capacity {
                    if air {
                        self.action(s, at, done, bat, air, "land", "landed", 2, done, false)?;
                    } else {
                        self.recharge(s, at, done, bat)?;
                    }
                }
                if !air {
                    self.action(s, at, done, bat, air, "takeoff", "took_off", 2, done, true)?;
                }
            }
            Node::Fly { from, to, done, bat } => {
                let d = dist(from, to);
                let hi = bat - d;
                let r = Node::Report {
                    at: to,
                    done,
                    lo: hi - worst(d, self.beta),
                    hi,
                    air: true,
                };
                self.edge(s, &format!("arrived_{}", m.cell_name(to)), r)?;
            }
            Node::Report { at, done, lo, hi, air } => {
                for k in lo.max(0)..=hi.max(0) {
                    self.edge(s, &bat_label(k), Node::Ready { at, done, bat: k, air })?;
                }
            }
            Node::Act { .. } | Node::Hub | Node::Failed => {}
        }
        Ok(())
    }

    fn run(mut self) -> Result<Lts, LtsError> {
        while let Some(n) = self.queue.pop_front() {
            self.expand(n)?;
        }
        self.b.build()
    }

    fn new(m: &'a MissionSpec, task: Task, beta: f64, post: bool) -> Result<Self, LtsError> {
        let mut b = LtsBuilder::new();
        m.declare_events(&mut b)?;
        for i in 0..m.samples.len() {
            b.declare(&format!("goto_s{i}"), true)?;
        }
        b.declare("goto_base", true)?;
        for c in ["pickup", "analyse_insitu"] {
            b.declare(c, true)?;
        }
        b.declare("takeoff", true)?;
        if !post {
            b.declare("land", true)?;
            b.declare("recharge", true)?;
        }
        if post {
            b.declare(RECONF_OK, false)?;
            b.declare(RECONF_FAIL, false)?;
        }
        Ok(Builder {
            m,
            task,
            beta,
            post,
            b,
            ids: HashMap::new(),
            queue: VecDeque::new(),
        })
    }
}

/// Plain arena: the current configuration serves the whole mission. `beta`
/// is the consumption-rate bound the strategy may assume.
pub fn build_arena(m: &MissionSpec, task: Task, start: Start, beta: f64) -> Result<Lts, MissionError> {
    let mut bld = Builder::new(m, task, beta, false)?;
    match start {
        Start::Ready { at, done, bat } => bld.id(Node::Ready {
            at,
            done,
            bat,
            air: true,
        })?,
        Start::Fly { from, to, done, bat } => bld.id(Node::Fly { from, to, done, bat })?,
    };
    Ok(bld.run()?)
}

/// Ticks a reconfiguration may take, beyond its plan length, before the
/// post-switch battery report.
pub const SWITCH_SLACK: i64 = 6;

/// Land, fold the arm, reconfigure, then finish the mission with in-situ
/// analysis. Only the post-switch part tracks the battery; its first report
/// is bounded from the live level with `horizon` ticks of consumption.
pub fn build_mode_switch_arena(
    m: &MissionSpec,
    snapshot: &WorldSnapshot,
    beta: f64,
    horizon: i64,
) -> Result<Lts, MissionError> {
    let get = |k: &str| snapshot.get(k).ok_or_else(|| MissionError::MissingFact(k.to_string()));
    let pos = m.resolve(get("pos")?)?;
    let done = m.parse_done(get("done")?)?;
    let battery: i64 = get("battery")?
        .parse()
        .map_err(|_| MissionError::MissingFact("battery".into()))?;
    let airborne = get("airborne")? == "yes";
    let folded = get("arm")? == "folded";

    let mut pre = LtsBuilder::new();
    m.declare_events(&mut pre)?;
    pre.declare("land", true)?;
    pre.declare("fold_arm", true)?;
    // Resting states are tied to the snapshot the arena is built from.
    let here = [
        format!("pos={}", m.cell_name(pos)),
        format!("done={}", m.done_label(done)),
    ];
    let states = [
        ("hover", vec!["phase=ready", "arm=extended", "airborne=yes"]),
        ("landing", vec!["phase=act", "act=land"]),
        ("landed_report", vec!["phase=report"]),
        ("grounded", vec!["arm=extended", "airborne=no"]),
        ("folding", vec!["phase=act", "act=fold_arm"]),
        ("folded_report", vec!["phase=report"]),
        ("folded", vec!["arm=folded", "airborne=no"]),
    ];
    for (n, p) in &states {
        let mut props: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        if !p[0].starts_with("phase=") || *n == "hover" {
            props.extend(here.iter().cloned());
        }
        pre.add_state(n, props)?;
    }
    pre.add_transition_by_name("hover", "land", "landing")?;
    pre.add_transition_by_name("landing", "landed", "landed_report")?;
    pre.add_transition_by_name("grounded", "fold_arm", "folding")?;
    pre.add_transition_by_name("folding", "arm_folded", "folded_report")?;
    for k in 0..=m.capacity {
        pre.add_transition_by_name("landed_report", &bat_label(k), "grounded")?;
        pre.add_transition_by_name("folded_report", &bat_label(k), "folded")?;
    }
    pre.set_initial_by_name(match (airborne, folded) {
        (true, _) => "hover",
        (false, false) => "grounded",
        (false, true) => "folded",
    })?;
    let pre = pre.build()?;

    let mut post = Builder::new(m, Task::InSitu, beta, true)?;
    let hub = post.id(Node::Hub)?;
    // land + fold surcharges; the level may also already be reported.
    let hi = battery;
    let lo = battery - 2 - worst(horizon, beta);
    post.edge(
        hub,
        RECONF_OK,
        Node::Report {
            at: pos,
            done,
            lo,
            hi,
            air: false,
        },
    )?;
    post.edge(hub, RECONF_FAIL, Node::Failed)?;
    let post = post.run()?;

    Ok(mode_switch_compose(&ModeSwitchSpec {
        pre_model: pre,
        post_model: post,
        switch_label: RECONFIGURE.to_string(),
        guard: Predicate::and([Predicate::prop("arm=folded"), Predicate::prop("airborne=no")]),
    })?)
}
