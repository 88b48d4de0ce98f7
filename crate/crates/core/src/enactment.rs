//! Behaviour and reconfiguration enactors: table-driven interpreters of the
//! loaded strategies.

use std::collections::VecDeque;
use std::fmt;

use crate::config::{ReconfigCommand, CMD_FAIL};
use crate::lts::{RECONFIGURE, RECONF_FAIL, RECONF_OK};
use crate::planner::ReconfigStrategy;
use crate::strategy::StrategyAutomaton;

pub const EVENT_BUFFER: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Idle,
    Running,
    AwaitingReconfig,
    Faulted,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::Running => "running",
            Mode::AwaitingReconfig => "awaiting_reconfig",
            Mode::Faulted => "faulted",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExceptionKind {
    BehaviourAssumptionViolated,
    ReconfigCommandFailed,
    SwapFailure,
    NoViableStrategy,
}

impl fmt::Display for ExceptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExceptionKind::BehaviourAssumptionViolated => "BehaviourAssumptionViolated",
            ExceptionKind::ReconfigCommandFailed => "ReconfigCommandFailed",
            ExceptionKind::SwapFailure => "SwapFailure",
            ExceptionKind::NoViableStrategy => "NoViableStrategy",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExceptionRecord {
    pub kind: ExceptionKind,
    pub tick: u64,
    /// Offending observation, or a reason for manager-raised kinds.
    pub observed: String,
    pub strategy: String,
    pub state: String,
}

/// Labels outside the strategy's alphabet are not its concern and are ignored.
fn in_alphabet(s: &StrategyAutomaton, label: &str) -> bool {
    s.uncontrollable.contains(label) || s.controllable.contains(label)
}

#[derive(Clone, Debug)]
pub struct BehaviourEnactor {
    strategy: Option<StrategyAutomaton>,
    state: usize,
    mode: Mode,
    /// Emitted commands not yet accepted by the target.
    outbox: VecDeque<String>,
    buffer: VecDeque<String>,
    pub buffer_limit: usize,
}

impl Default for BehaviourEnactor {
    fn default() -> Self {
        Self {
            strategy: None,
            state: 0,
            mode: Mode::Idle,
            outbox: VecDeque::new(),
            buffer: VecDeque::new(),
            buffer_limit: EVENT_BUFFER,
        }
    }
}

impl BehaviourEnactor {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn strategy(&self) -> Option<&StrategyAutomaton> {
        self.strategy.as_ref()
    }

    pub fn strategy_id(&self) -> &str {
        self.strategy.as_ref().map_or("-", |s| s.id.as_str())
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn state_name(&self) -> &str {
        self.strategy
            .as_ref()
            .map_or("-", |s| s.states[self.state].name.as_str())
    }

    /// Between steps: nothing awaiting acceptance and not coordinating a
    /// reconfiguration.
    pub fn swap_point(&self) -> bool {
        self.outbox.is_empty() && self.mode != Mode::AwaitingReconfig
    }

    pub fn pending_command(&self) -> Option<&str> {
        self.outbox.front().map(String::as_str)
    }

    /// The target accepted the front command.
    pub fn acknowledge(&mut self) -> Option<String> {
        self.outbox.pop_front()
    }

    /// Installs a strategy at `entry` and returns the commands it issues
    /// from there.
    pub fn load(&mut self, strategy: StrategyAutomaton, entry: usize) -> Vec<String> {
        self.strategy = Some(strategy);
        self.mode = Mode::Running;
        self.buffer.clear();
        self.outbox.clear();
        self.state = entry;
        let (q, cmds) = self.strategy.as_ref().expect("just loaded").settle(entry);
        self.state = q;
        self.issue(cmds)
    }

    /// Stops issuing commands; the handle stays swappable.
    pub fn suspend(&mut self) {
        self.mode = Mode::Faulted;
        self.outbox.clear();
    }

    fn issue(&mut self, cmds: Vec<String>) -> Vec<String> {
        for c in &cmds {
            if c == RECONFIGURE {
                self.mode = Mode::AwaitingReconfig;
            } else {
                self.outbox.push_back(c.clone());
            }
        }
        cmds
    }

    fn exception(&mut self, tick: u64, observed: &str) -> ExceptionRecord {
        let rec = ExceptionRecord {
            kind: ExceptionKind::BehaviourAssumptionViolated,
            tick,
            observed: observed.to_string(),
            strategy: self.strategy_id().to_string(),
            state: self.state_name().to_string(),
        };
        self.mode = Mode::Faulted;
        self.outbox.clear();
        rec
    }

    /// Feeds one observed event. Returns the commands emitted in response;
    /// `cfg.reconfigure` among them switches the enactor to
    /// `awaiting_reconfig`.
    pub fn step(&mut self, tick: u64, observed: &str) -> Result<Vec<String>, ExceptionRecord> {
        let Some(s) = &self.strategy else { return Ok(Vec::new()) };
        match self.mode {
            Mode::Idle | Mode::Faulted => Ok(Vec::new()),
            Mode::AwaitingReconfig => {
                if observed == RECONF_OK || observed == RECONF_FAIL {
                    let Some((q, cmds)) = s.react(self.state, observed) else {
                        return Err(self.exception(tick, observed));
                    };
                    self.state = q;
                    self.mode = Mode::Running;
                    let mut out = self.issue(cmds);
                    while self.mode == Mode::Running {
                        let Some(e) = self.buffer.pop_front() else { break };
                        out.extend(self.step(tick, &e)?);
                    }
                    Ok(out)
                } else if in_alphabet(s, observed) {
                    if self.buffer.len() >= self.buffer_limit {
                        return Err(self.exception(tick, observed));
                    }
                    self.buffer.push_back(observed.to_string());
                    Ok(Vec::new())
                } else {
                    Ok(Vec::new())
                }
            }
            Mode::Running => {
                if !in_alphabet(s, observed) {
                    return Ok(Vec::new());
                }
                match s.react(self.state, observed) {
                    Some((q, cmds)) if s.expects(self.state, observed) => {
                        self.state = q;
                        Ok(self.issue(cmds))
                    }
                    _ => Err(self.exception(tick, observed)),
                }
            }
        }
    }
}

/// Outcome of feeding a status observation to the reconfiguration enactor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReconfigStep {
    Issue(Vec<ReconfigCommand>),
    Completed,
}

#[derive(Clone, Debug)]
pub struct ReconfigEnactor {
    strategy: Option<ReconfigStrategy>,
    state: usize,
    mode: Mode,
    outbox: VecDeque<ReconfigCommand>,
}

impl Default for ReconfigEnactor {
    fn default() -> Self {
        Self {
            strategy: None,
            state: 0,
            mode: Mode::Idle,
            outbox: VecDeque::new(),
        }
    }
}

impl ReconfigEnactor {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn strategy(&self) -> Option<&ReconfigStrategy> {
        self.strategy.as_ref()
    }

    pub fn strategy_id(&self) -> &str {
        self.strategy.as_ref().map_or("-", |s| s.id.as_str())
    }

    pub fn state_name(&self) -> &str {
        self.strategy
            .as_ref()
            .map_or("-", |s| s.automaton.states[self.state].name.as_str())
    }

    pub fn swap_point(&self) -> bool {
        self.outbox.is_empty() && self.mode != Mode::Running
    }

    pub fn pending_command(&self) -> Option<&ReconfigCommand> {
        self.outbox.front()
    }

    pub fn acknowledge(&mut self) -> Option<ReconfigCommand> {
        self.outbox.pop_front()
    }

    /// Stores a plan without running it.
    pub fn load(&mut self, strategy: ReconfigStrategy) {
        self.strategy = Some(strategy);
        self.state = 0;
        self.mode = Mode::Idle;
        self.outbox.clear();
    }

    pub fn unload(&mut self) {
        *self = Self::default();
    }

    fn issue(&mut self, labels: Vec<String>) -> Vec<ReconfigCommand> {
        let cmds: Vec<ReconfigCommand> = labels
            .iter()
            .map(|l| ReconfigCommand::parse(l).expect("plans hold well-formed commands"))
            .collect();
        self.outbox.extend(cmds.iter().cloned());
        cmds
    }

    /// Starts the loaded plan. An empty plan completes at once.
    pub fn start(&mut self) -> ReconfigStep {
        let Some(s) = &self.strategy else {
            return ReconfigStep::Completed;
        };
        let (q, labels) = s.automaton.settle(0);
        self.state = q;
        if s.is_success(q) {
            self.mode = Mode::Idle;
            return ReconfigStep::Completed;
        }
        self.mode = Mode::Running;
        ReconfigStep::Issue(self.issue(labels))
    }

    /// Feeds a status label (`st(...)`) or `cfg.cmd_fail`.
    pub fn step(&mut self, tick: u64, observed: &str) -> Result<ReconfigStep, ExceptionRecord> {
        let Some(s) = &self.strategy else {
            return Ok(ReconfigStep::Issue(Vec::new()));
        };
        if self.mode != Mode::Running {
            return Ok(ReconfigStep::Issue(Vec::new()));
        }
        let next = s.automaton.react(self.state, observed);
        match next {
            Some((q, labels)) if !s.is_failure(q) && observed != CMD_FAIL => {
                self.state = q;
                if s.is_success(q) {
                    self.mode = Mode::Idle;
                    Ok(ReconfigStep::Completed)
                } else {
                    Ok(ReconfigStep::Issue(self.issue(labels)))
                }
            }
            _ => {
                let rec = ExceptionRecord {
                    kind: ExceptionKind::ReconfigCommandFailed,
                    tick,
                    observed: observed.to_string(),
                    strategy: s.id.clone(),
                    state: self.state_name().to_string(),
                };
                self.state = 2 * s.plan.len() + 1;
                self.mode = Mode::Faulted;
                self.outbox.clear();
                Err(rec)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CapabilityProfile, TargetSpec};
    use crate::planner::build_strategy;
    use crate::predicate::Predicate;
    use crate::strategy::StrategyState;
    use std::collections::BTreeMap;

    fn st(name: &str, choice: Option<&str>, moves: &[(&str, usize)]) -> StrategyState {
        StrategyState {
            name: name.into(),
            entry: Predicate::prop(format!("state={name}")),
            choice: choice.map(str::to_string),
            moves: moves
                .iter()
                .map(|(l, t)| (l.to_string(), *t))
                .collect::<BTreeMap<_, _>>(),
            rank: None,
        }
    }

    /// fold -> arm_folded -> reconfigure -> reconf_ok -> analyse
    fn coordinated() -> StrategyAutomaton {
        StrategyAutomaton {
            id: "b".into(),
            states: vec![
                st("q0", Some("fold_arm"), &[("fold_arm", 1)]),
                st("q1", None, &[("arm_folded", 2)]),
                st("q2", Some(RECONFIGURE), &[(RECONFIGURE, 3)]),
                st("q3", None, &[(RECONF_OK, 4), ("arrived_s1", 3)]),
                st("q4", Some("analyse_insitu"), &[("analyse_insitu", 5)]),
                st("q5", None, &[]),
            ],
            initial: 0,
            controllable: ["fold_arm", RECONFIGURE, "analyse_insitu"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            uncontrollable: ["arm_folded", RECONF_OK, "arrived_s1", "pickup_fail"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    #[test]
    fn reconfigure_waits_for_completion() {
        let mut b = BehaviourEnactor::default();
        assert_eq!(b.load(coordinated(), 0), vec!["fold_arm"]);
        assert!(!b.swap_point());
        b.acknowledge();
        assert!(b.swap_point());
        assert_eq!(b.step(1, "bat_90").unwrap(), Vec::<String>::new());
        assert_eq!(b.step(1, "arm_folded").unwrap(), vec![RECONFIGURE]);
        assert_eq!(b.mode(), Mode::AwaitingReconfig);
        assert!(!b.swap_point());
        assert_eq!(b.step(2, RECONF_OK).unwrap(), vec!["analyse_insitu"]);
        assert_eq!(b.mode(), Mode::Running);
    }

    #[test]
    fn unexpected_event_faults() {
        let mut b = BehaviourEnactor::default();
        b.load(coordinated(), 0);
        b.acknowledge();
        let e = b.step(3, "pickup_fail").unwrap_err();
        assert_eq!(e.kind, ExceptionKind::BehaviourAssumptionViolated);
        assert_eq!(e.state, "q1");
        assert_eq!(b.mode(), Mode::Faulted);
        assert!(b.swap_point());
    }

    #[test]
    fn buffer_overflow() {
        let mut b = BehaviourEnactor::default();
        b.buffer_limit = 2;
        b.load(coordinated(), 1);
        b.step(0, "arm_folded").unwrap();
        b.step(0, "arrived_s1").unwrap();
        b.step(0, "arrived_s1").unwrap();
        assert!(b.step(0, "arrived_s1").is_err());
    }

    #[test]
    fn reconfig_plan_runs_and_fails() {
        let plan = vec![
            ReconfigCommand::Activate("ir".into()),
            ReconfigCommand::Passivate("gr".into()),
        ];
        let expected = vec!["st(ir,active,0)".to_string(), "st(gr,inactive,0)".to_string()];
        let s = build_strategy(plan, expected, TargetSpec::default(), CapabilityProfile::new());
        let mut r = ReconfigEnactor::default();
        r.load(s.clone());
        assert!(r.swap_point());
        assert_eq!(
            r.start(),
            ReconfigStep::Issue(vec![ReconfigCommand::Activate("ir".into())])
        );
        r.acknowledge();
        assert!(matches!(r.step(1, "st(ir,active,0)").unwrap(), ReconfigStep::Issue(_)));
        r.acknowledge();
        assert_eq!(r.step(2, "st(gr,inactive,0)").unwrap(), ReconfigStep::Completed);
        r.load(s);
        r.start();
        let e = r.step(1, CMD_FAIL).unwrap_err();
        assert_eq!(e.kind, ExceptionKind::ReconfigCommandFailed);
        assert_eq!(r.mode(), Mode::Faulted);
    }
}
