//! Shared knowledge: the execution log, inferred aggregates, the goal model
//! and the change notifications derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::goal_model::{GoalModel, GoalNode, NodeKind, ValidationReport};

pub const DEFAULT_WINDOW: usize = 10;
pub const HYSTERESIS: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Event(String),
    Status {
        instance: String,
        status: String,
        bindings: usize,
    },
    /// Executed command and its fixed battery surcharge.
    Command {
        label: String,
        surcharge: i64,
    },
    Battery(i64),
    /// Monitored variable reported by a probe.
    Fact {
        key: String,
        value: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub tick: u64,
    pub source: String,
    pub payload: Payload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NotifyKind {
    AssumptionUpdated,
    GoalModelEdited,
    CapabilityAvailabilityChanged,
}

impl fmt::Display for NotifyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NotifyKind::AssumptionUpdated => "assumption_updated",
            NotifyKind::GoalModelEdited => "goal_model_edited",
            NotifyKind::CapabilityAvailabilityChanged => "capability_availability_changed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChangeNotification {
    pub kind: NotifyKind,
    pub subject: String,
    pub old: String,
    pub new: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorldSnapshot {
    pub tick: u64,
    pub vars: BTreeMap<String, String>,
    pub consumption_rate: f64,
}

impl WorldSnapshot {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.vars.get(key).map(String::as_str)
    }

    /// Capability tags from the `caps` variable (comma-separated).
    pub fn capabilities(&self) -> BTreeSet<String> {
        self.get("caps")
            .map(|c| c.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect())
            .unwrap_or_default()
    }

    /// Facts for entry predicates: `key=value` per variable plus `cap:<tag>`.
    pub fn facts(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self
            .vars
            .iter()
            .filter(|(k, _)| k.as_str() != "caps")
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        out.extend(self.capabilities().into_iter().map(|t| format!("cap:{t}")));
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepoError {
    #[error("record tick {got} precedes last tick {last}")]
    TickRegression { last: u64, got: u64 },
    #[error("need at least two battery samples in the window")]
    InsufficientSamples,
    #[error("edit rejected: {0:?}")]
    InvalidEdit(ValidationReport),
    #[error("malformed edit: {0}")]
    MalformedEdit(String),
}

#[derive(Clone, Debug)]
pub struct KnowledgeRepo {
    log: Vec<LogRecord>,
    snapshot: WorldSnapshot,
    /// (tick, level, surcharges logged for that tick)
    battery: Vec<(u64, i64, i64)>,
    surcharge: BTreeMap<u64, i64>,
    /// Assumption bounds on the consumption rate and whether the inferred
    /// rate currently sits above each.
    bounds: BTreeMap<String, (f64, bool)>,
    model: GoalModel,
    last_caps: Option<BTreeSet<String>>,
    pub window: usize,
}

fn fmt_rate(r: f64) -> String {
    format!("{r:.3}")
}

impl KnowledgeRepo {
    pub fn new(model: GoalModel, initial_rate: f64) -> Self {
        Self {
            log: Vec::new(),
            snapshot: WorldSnapshot {
                consumption_rate: initial_rate,
                ..WorldSnapshot::default()
            },
            battery: Vec::new(),
            surcharge: BTreeMap::new(),
            bounds: BTreeMap::new(),
            model,
            last_caps: None,
            window: DEFAULT_WINDOW,
        }
    }

    /// Registers a consumption bound whose crossings are notified.
    pub fn register_bound(&mut self, name: &str, bound: f64) {
        let above = self.snapshot.consumption_rate > bound;
        self.bounds.insert(name.to_string(), (bound, above));
    }

    /// Whether the inferred rate is currently considered within `bound`.
    pub fn within_bound(&self, bound: f64) -> bool {
        match self.bounds.values().find(|(b, _)| *b == bound) {
            Some((_, above)) => !above,
            None => self.snapshot.consumption_rate <= bound,
        }
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn snapshot(&self) -> &WorldSnapshot {
        &self.snapshot
    }

    pub fn model(&self) -> &GoalModel {
        &self.model
    }

    pub fn append_log(&mut self, r: LogRecord) -> Result<(), RepoError> {
        if let Some(last) = self.log.last() {
            if r.tick < last.tick {
                return Err(RepoError::TickRegression {
                    last: last.tick,
                    got: r.tick,
                });
            }
        }
        self.snapshot.tick = r.tick;
        match &r.payload {
            Payload::Battery(level) => {
                self.battery.push((r.tick, *level, 0));
                self.snapshot.vars.insert("battery".into(), level.to_string());
            }
            Payload::Command { surcharge, .. } => {
                *self.surcharge.entry(r.tick).or_default() += surcharge;
            }
            Payload::Status { instance, status, .. } => {
                self.snapshot.vars.insert(format!("status.{instance}"), status.clone());
            }
            Payload::Fact { key, value } => {
                self.snapshot.vars.insert(key.clone(), value.clone());
            }
            Payload::Event(_) => {}
        }
        self.log.push(r);
        Ok(())
    }

    /// Mean per-tick battery decrement over the last `window` ticks, net of
    /// logged command surcharges. Fires a notification for every registered
    /// bound the rate crosses by more than the hysteresis band.
    pub fn infer_consumption_rate(&mut self, window: usize) -> Result<(f64, Vec<ChangeNotification>), RepoError> {
        if self.battery.len() < 2 || window == 0 {
            return Err(RepoError::InsufficientSamples);
        }
        let latest = self.battery.last().expect("nonempty").0;
        let from = latest.saturating_sub(window as u64);
        let samples: Vec<(u64, i64)> = self
            .battery
            .iter()
            .filter(|(t, _, _)| *t >= from)
            .map(|(t, l, _)| (*t, *l))
            .collect();
        if samples.len() < 2 {
            return Err(RepoError::InsufficientSamples);
        }
        let mut total = 0i64;
        for w in samples.windows(2) {
            let (t0, l0) = w[0];
            let (t1, l1) = w[1];
            let extra: i64 = self.surcharge.range(t0 + 1..=t1).map(|(_, s)| *s).sum();
            total += l0 - l1 - extra;
        }
        let span = samples.last().expect("nonempty").0 - samples[0].0;
        let rate = if span == 0 { 0.0 } else { total as f64 / span as f64 };
        let old = self.snapshot.consumption_rate;
        self.snapshot.consumption_rate = rate;
        let mut out = Vec::new();
        for (name, (bound, above)) in self.bounds.iter_mut() {
            let flip = if *above {
                rate < *bound * (1.0 - HYSTERESIS)
            } else {
                rate > *bound * (1.0 + HYSTERESIS)
            };
            if flip {
                *above = !*above;
                out.push(ChangeNotification {
                    kind: NotifyKind::AssumptionUpdated,
                    subject: format!("consumption.{name}"),
                    old: fmt_rate(old),
                    new: fmt_rate(rate),
                });
            }
        }
        Ok((rate, out))
    }

    /// Reports a change of the `caps` variable since the previous call.
    pub fn capability_change(&mut self) -> Option<ChangeNotification> {
        let caps = self.snapshot.capabilities();
        let prev = self.last_caps.replace(caps.clone());
        match prev {
            Some(p) if p != caps => Some(ChangeNotification {
                kind: NotifyKind::CapabilityAvailabilityChanged,
                subject: "caps".into(),
                old: p.into_iter().collect::<Vec<_>>().join(","),
                new: caps.into_iter().collect::<Vec<_>>().join(","),
            }),
            _ => None,
        }
    }

    /// Applies goal-model edit records transactionally. Besides the model
    /// file records, `softgoal <id> weight <w>` updates a weight and
    /// `unrefine <parent> <child>` drops a child from the parent's refinements.
    pub fn apply_goal_edit(&mut self, edit: &[String]) -> Result<ChangeNotification, RepoError> {
        let mut m = self.model.clone();
        let mut subjects = Vec::new();
        for line in edit {
            let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            let bad = || RepoError::MalformedEdit(line.clone());
            match words.first().map(String::as_str) {
                Some("goal") if words.len() == 2 => {
                    m.nodes
                        .entry(words[1].clone())
                        .or_insert_with(|| GoalNode::new(&words[1]));
                }
                Some("softgoal") if words.len() == 4 && words[2] == "weight" => {
                    let w: f64 = words[3].parse().map_err(|_| bad())?;
                    let mut node = GoalNode::new(&words[1]);
                    node.kind = NodeKind::SoftGoal;
                    m.nodes.entry(words[1].clone()).or_insert(node);
                    m.soft.weights.insert(words[1].clone(), w);
                }
                Some("unrefine") if words.len() == 3 => {
                    let node = m.nodes.get_mut(&words[1]).ok_or_else(bad)?;
                    for r in &mut node.refinements {
                        r.children.retain(|c| *c != words[2]);
                    }
                    node.refinements.retain(|r| !r.children.is_empty());
                }
                Some(_) => m.apply_record(&words).map_err(|_| bad())?,
                None => continue,
            }
            subjects.push(words[1].clone());
        }
        let report = m.validate();
        if !report.is_ok() {
            return Err(RepoError::InvalidEdit(report));
        }
        self.model = m;
        Ok(ChangeNotification {
            kind: NotifyKind::GoalModelEdited,
            subject: subjects.join(","),
            old: String::new(),
            new: String::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bat(r: &mut KnowledgeRepo, t: u64, l: i64) {
        r.append_log(LogRecord {
            tick: t,
            source: "target".into(),
            payload: Payload::Battery(l),
        })
        .unwrap();
    }

    #[test]
    fn rate_and_notification() {
        let mut r = KnowledgeRepo::new(GoalModel::default(), 1.0);
        r.register_bound("nominal", 1.5);
        assert_eq!(r.infer_consumption_rate(10), Err(RepoError::InsufficientSamples));
        bat(&mut r, 0, 100);
        assert_eq!(r.infer_consumption_rate(10), Err(RepoError::InsufficientSamples));
        bat(&mut r, 1, 98);
        bat(&mut r, 2, 96);
        let (rate, n) = r.infer_consumption_rate(10).unwrap();
        assert_eq!(rate, 2.0);
        assert_eq!(n.len(), 1);
        assert!(!r.within_bound(1.5));
        assert_eq!(r.snapshot().get("battery"), Some("96"));
    }

    #[test]
    fn surcharges_are_excluded() {
        let mut r = KnowledgeRepo::new(GoalModel::default(), 1.0);
        bat(&mut r, 0, 100);
        r.append_log(LogRecord {
            tick: 1,
            source: "target".into(),
            payload: Payload::Command {
                label: "pickup".into(),
                surcharge: 2,
            },
        })
        .unwrap();
        bat(&mut r, 1, 97);
        assert_eq!(r.infer_consumption_rate(4).unwrap().0, 1.0);
    }

    #[test]
    fn tick_regression() {
        let mut r = KnowledgeRepo::new(GoalModel::default(), 1.0);
        bat(&mut r, 4, 100);
        let e = r.append_log(LogRecord {
            tick: 3,
            source: "target".into(),
            payload: Payload::Event("x".into()),
        });
        assert_eq!(e, Err(RepoError::TickRegression { last: 4, got: 3 }));
    }

    #[test]
    fn goal_edits() {
        let model =
            GoalModel::parse("goal a\ngoal b\nrefine a AND b\nassign b env assert:x\nsoftgoal q weight 1\n").unwrap();
        let mut r = KnowledgeRepo::new(model, 1.0);
        let n = r.apply_goal_edit(&["softgoal q weight 2".into()]).unwrap();
        assert_eq!(n.kind, NotifyKind::GoalModelEdited);
        let e = r.apply_goal_edit(&["refine b AND a".into()]);
        assert!(matches!(e, Err(RepoError::InvalidEdit(_))));
        assert_eq!(r.model().soft.weights["q"], 2.0);
    }
}
