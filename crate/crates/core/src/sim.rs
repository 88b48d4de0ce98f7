//! Simulated UAV target system: grid world, component configuration, effectors,
//! probes and the translation layer between them and abstract labels.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::{capability_profile, CommandError, Configuration, ReconfigCommand, StatusReport};

pub type Cell = (i32, i32);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("no mapping for abstract symbol `{0}`")]
    UnmappedSymbol(String),
    #[error("line {line}: {msg}")]
    Script { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Directive {
    Fault(String),
    SetConsumption(f64),
    Displace(i32, i32),
}

/// Directives keyed by tick, in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FaultScript {
    pub entries: Vec<(u64, Directive)>,
}

impl FaultScript {
    /// One directive per line: `at <t> fault <c>`, `at <t> set consumption <r>`,
    /// `at <t> displace <dx> <dy>`.
    pub fn parse(text: &str) -> Result<FaultScript, SimError> {
        let mut entries = Vec::new();
        let mut last = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| SimError::Script {
                line: i + 1,
                msg: msg.to_string(),
            };
            let w: Vec<&str> = line.split_whitespace().collect();
            if w.len() < 3 || w[0] != "at" {
                return Err(err("expected `at <tick> ...`"));
            }
            let t: u64 = w[1].parse().map_err(|_| err("bad tick"))?;
            if t < last {
                return Err(err("ticks must be nondecreasing"));
            }
            last = t;
            let d = match &w[2..] {
                ["fault", c] => Directive::Fault(c.to_string()),
                ["set", "consumption", r] => {
                    let r: f64 = r.parse().map_err(|_| err("bad rate"))?;
                    if !(r >= 0.0 && r.is_finite()) {
                        return Err(err("rate must be a nonnegative number"));
                    }
                    Directive::SetConsumption(r)
                }
                ["displace", dx, dy] => Directive::Displace(
                    dx.parse().map_err(|_| err("bad dx"))?,
                    dy.parse().map_err(|_| err("bad dy"))?,
                ),
                _ => return Err(err("unknown directive")),
            };
            entries.push((t, d));
        }
        Ok(FaultScript { entries })
    }

    pub fn at(&self, tick: u64) -> impl Iterator<Item = &Directive> + '_ {
        self.entries.iter().filter(move |(t, _)| *t == tick).map(|(_, d)| d)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Goto(String),
    Pickup,
    AnalyseInSitu,
    Land,
    Takeoff,
    FoldArm,
    Recharge,
    Hold,
}

impl Action {
    pub fn capability(&self) -> &'static str {
        match self {
            Action::Goto(_) => "positioning",
            Action::Pickup => "grip",
            Action::AnalyseInSitu => "ir_camera",
            Action::Land | Action::Takeoff | Action::FoldArm | Action::Recharge | Action::Hold => "attitude",
        }
    }

    /// Fixed battery cost on top of the consumption rate. `goto` costs 1 per
    /// cell and is charged as the UAV moves.
    pub fn surcharge(&self) -> i64 {
        match self {
            Action::Pickup | Action::Land | Action::Takeoff => 2,
            Action::AnalyseInSitu => 3,
            _ => 0,
        }
    }

    pub fn fail_event(&self) -> &'static str {
        match self {
            Action::Goto(_) => "goto_fail",
            Action::Pickup => "pickup_fail",
            Action::AnalyseInSitu => "analyse_fail",
            Action::Land => "land_fail",
            Action::Takeoff => "takeoff_fail",
            Action::FoldArm => "fold_fail",
            Action::Recharge => "recharge_fail",
            Action::Hold => "hold_fail",
        }
    }
}

pub const GOTO_SURCHARGE: i64 = 1;
pub const HOLD: &str = "hold";

/// Abstract command to simulator action.
pub fn translate(cmd: &str) -> Result<Action, SimError> {
    if let Some(loc) = cmd.strip_prefix("goto_") {
        if !loc.is_empty() {
            return Ok(Action::Goto(loc.to_string()));
        }
    }
    Ok(match cmd {
        "pickup" => Action::Pickup,
        "analyse_insitu" => Action::AnalyseInSitu,
        "land" => Action::Land,
        "takeoff" => Action::Takeoff,
        "fold_arm" => Action::FoldArm,
        "recharge" => Action::Recharge,
        HOLD => Action::Hold,
        _ => return Err(SimError::UnmappedSymbol(cmd.to_string())),
    })
}

/// Capability needed by an abstract behaviour command, if it maps to one.
pub fn command_capability(cmd: &str) -> Option<&'static str> {
    translate(cmd).ok().map(|a| a.capability())
}

/// Battery report label.
pub fn bat_label(level: i64) -> String {
    format!("bat_{level}")
}

pub fn parse_bat_label(label: &str) -> Option<i64> {
    label.strip_prefix("bat_")?.parse().ok()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub cell: Cell,
    pub collected: bool,
    pub analysed: bool,
}

impl Sample {
    pub fn done(&self) -> bool {
        self.collected || self.analysed
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Leg {
    from: String,
    to: String,
    target: Cell,
}

/// What one tick produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TickOutput {
    /// Instances killed by the script this tick.
    pub faults: Vec<String>,
    /// Status reports from faults and the reconfiguration command.
    pub statuses: Vec<StatusReport>,
    /// Result of the reconfiguration command, if one was executed.
    pub reconfig: Option<Result<StatusReport, CommandError>>,
    /// Domain events for the behaviour layer, in order.
    pub events: Vec<String>,
    /// Edge-triggered `battery_low`.
    pub battery_low: bool,
    /// Executed action label and surcharge, for the log.
    pub executed: Vec<(String, i64)>,
    pub battery: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub width: i32,
    pub height: i32,
    pub base: Cell,
    pub pos: Cell,
    pub samples: Vec<Sample>,
    pub battery: i64,
    pub capacity: i64,
    pub threshold: i64,
    pub rate: f64,
    acc: f64,
    pub arm_extended: bool,
    pub airborne: bool,
    pub config: Configuration,
    pub tick: u64,
    leg: Option<Leg>,
    /// Last battery level reported through `bat_<k>`.
    pub reported: i64,
    low_latched: bool,
}

impl World {
    pub fn new(
        width: i32,
        height: i32,
        base: Cell,
        samples: &[Cell],
        battery: i64,
        threshold: i64,
        rate: f64,
    ) -> World {
        World {
            width,
            height,
            base,
            pos: base,
            samples: samples
                .iter()
                .map(|&cell| Sample {
                    cell,
                    collected: false,
                    analysed: false,
                })
                .collect(),
            battery,
            capacity: battery,
            threshold,
            rate,
            acc: 0.0,
            arm_extended: true,
            airborne: true,
            config: Configuration::default(),
            tick: 0,
            leg: None,
            reported: battery,
            low_latched: battery < threshold,
        }
    }

    pub fn cell_name(&self, c: Cell) -> String {
        if c == self.base {
            return "base".into();
        }
        match self.samples.iter().position(|s| s.cell == c) {
            Some(i) => format!("s{i}"),
            None => format!("{}_{}", c.0, c.1),
        }
    }

    pub fn resolve(&self, name: &str) -> Option<Cell> {
        if name == "base" {
            return Some(self.base);
        }
        if let Some(i) = name.strip_prefix('s').and_then(|i| i.parse::<usize>().ok()) {
            return self.samples.get(i).map(|s| s.cell);
        }
        let (x, y) = name.split_once('_')?;
        let c = (x.parse().ok()?, y.parse().ok()?);
        self.on_grid(c).then_some(c)
    }

    fn on_grid(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height
    }

    pub fn done_label(&self) -> String {
        let done: Vec<String> = self
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.done())
            .map(|(i, _)| format!("s{i}"))
            .collect();
        if done.is_empty() {
            "none".into()
        } else {
            done.join("+")
        }
    }

    pub fn mission_complete(&self) -> bool {
        self.samples.iter().all(Sample::done) && self.pos == self.base && self.leg.is_none()
    }

    /// Reports the live battery level, as after a completion event.
    pub fn report_battery(&mut self) -> String {
        self.reported = self.battery;
        bat_label(self.battery)
    }

    pub fn flying_leg(&self) -> bool {
        self.leg.is_some()
    }

    fn sample_here(&self) -> Option<usize> {
        self.samples.iter().position(|s| s.cell == self.pos && !s.done())
    }

    /// Probe: observable variables for the knowledge repository.
    pub fn probe(&self) -> BTreeMap<String, String> {
        let mut v = BTreeMap::new();
        match &self.leg {
            Some(l) => {
                v.insert("phase".into(), "fly".into());
                v.insert("at".into(), "-".into());
                v.insert("from".into(), l.from.clone());
                v.insert("to".into(), l.to.clone());
            }
            None => {
                v.insert("phase".into(), "ready".into());
                v.insert("at".into(), self.cell_name(self.pos));
                v.insert("from".into(), "-".into());
                v.insert("to".into(), "-".into());
            }
        }
        v.insert("pos".into(), self.cell_name(self.pos));
        v.insert("done".into(), self.done_label());
        v.insert("bat".into(), self.reported.to_string());
        v.insert("battery".into(), self.battery.to_string());
        v.insert(
            "arm".into(),
            if self.arm_extended { "extended" } else { "folded" }.into(),
        );
        v.insert("airborne".into(), if self.airborne { "yes" } else { "no" }.into());
        for (id, inst) in &self.config.instances {
            v.insert(format!("status.{id}"), inst.status.as_str().into());
        }
        let caps: Vec<String> = capability_profile(&self.config).into_iter().collect();
        v.insert("caps".into(), caps.join(","));
        v
    }

    fn has(&self, cap: &str) -> bool {
        capability_profile(&self.config).contains(cap)
    }

    /// Runs one action; returns completion or failure events.
    fn act(&mut self, a: &Action, cmd: &str, out: &mut TickOutput) {
        let cap_ok = self.has(a.capability());
        let ev: Option<String> = match a {
            Action::Goto(loc) => match self.resolve(loc) {
                Some(target) if cap_ok && self.airborne => {
                    self.leg = Some(Leg {
                        from: self.cell_name(self.pos),
                        to: self.cell_name(target),
                        target,
                    });
                    None
                }
                _ => Some(a.fail_event().into()),
            },
            Action::Pickup => match self.sample_here() {
                Some(i) if cap_ok && self.arm_extended => {
                    self.samples[i].collected = true;
                    Some("pickup_ok".into())
                }
                _ => Some(a.fail_event().into()),
            },
            Action::AnalyseInSitu => match self.sample_here() {
                Some(i) if cap_ok => {
                    self.samples[i].analysed = true;
                    Some("analysed".into())
                }
                _ => Some(a.fail_event().into()),
            },
            Action::Land if cap_ok && self.airborne => {
                self.airborne = false;
                Some("landed".into())
            }
            Action::Takeoff if cap_ok && !self.airborne => {
                self.airborne = true;
                Some("took_off".into())
            }
            Action::FoldArm if cap_ok && !self.airborne && self.arm_extended => {
                self.arm_extended = false;
                Some("arm_folded".into())
            }
            Action::Recharge if cap_ok && self.pos == self.base && !self.airborne => {
                self.battery = self.capacity;
                Some("recharged".into())
            }
            Action::Hold => {
                self.leg = None;
                None
            }
            _ => Some(a.fail_event().into()),
        };
        let ok = ev.as_deref().map_or(true, |e| !e.ends_with("_fail"));
        if ok && a.surcharge() > 0 {
            self.battery -= a.surcharge();
            out.executed.push((cmd.to_string(), a.surcharge()));
        }
        out.events.extend(ev);
    }

    fn advance_leg(&mut self, out: &mut TickOutput) {
        let Some(leg) = &self.leg else { return };
        let target = leg.target;
        if self.pos != target {
            if self.pos.0 != target.0 {
                self.pos.0 += (target.0 - self.pos.0).signum();
            } else {
                self.pos.1 += (target.1 - self.pos.1).signum();
            }
            self.battery -= GOTO_SURCHARGE;
            out.executed.push((format!("goto_{}", leg.to), GOTO_SURCHARGE));
        }
        if self.pos == target {
            self.leg = None;
            out.events.push(format!("arrived_{}", self.cell_name(target)));
        }
    }

    /// One simulation step: script directives, at most one behaviour command,
    /// at most one reconfiguration command, motion, then consumption.
    pub fn tick(
        &mut self,
        behaviour: Option<&str>,
        reconfig: Option<&ReconfigCommand>,
        script: &FaultScript,
    ) -> Result<TickOutput, SimError> {
        let action = behaviour.map(translate).transpose()?;
        self.tick += 1;
        let mut out = TickOutput::default();
        for d in script.at(self.tick) {
            match d {
                Directive::Fault(c) => {
                    if self.config.kill(c) {
                        out.faults.push(c.clone());
                        out.statuses.push(self.config.report(c));
                    }
                }
                Directive::SetConsumption(r) => self.rate = *r,
                Directive::Displace(dx, dy) => {
                    let clamp = |v: i32, hi: i32| v.clamp(0, hi - 1);
                    self.pos = (clamp(self.pos.0 + dx, self.width), clamp(self.pos.1 + dy, self.height));
                    if let Some(leg) = &mut self.leg {
                        leg.target = (
                            clamp(leg.target.0 + dx, self.width),
                            clamp(leg.target.1 + dy, self.height),
                        );
                    }
                }
            }
        }
        if let (Some(a), Some(cmd)) = (&action, behaviour) {
            self.act(a, cmd, &mut out);
        }
        self.advance_leg(&mut out);
        if let Some(cmd) = reconfig {
            let r = self.config.apply(cmd);
            if let Ok(rep) = &r {
                out.statuses.push(rep.clone());
            }
            out.reconfig = Some(r);
        }
        self.acc += self.rate;
        let whole = self.acc.floor();
        self.acc -= whole;
        self.battery = (self.battery - whole as i64).max(0);
        let completed = out.events.iter().any(|e| is_completion(e));
        if completed {
            self.reported = self.battery;
            out.events.push(bat_label(self.battery));
        }
        let low = self.battery < self.threshold;
        out.battery_low = low && !self.low_latched;
        self.low_latched = low;
        out.battery = self.battery;
        Ok(out)
    }
}

/// Events after which the translation layer reports the battery level.
pub fn is_completion(event: &str) -> bool {
    event.starts_with("arrived_")
        || matches!(
            event,
            "pickup_ok" | "analysed" | "landed" | "took_off" | "arm_folded" | "recharged" | crate::lts::RECONF_OK
        )
}
