//! Two-player game solving over an [`Lts`]: the controller picks
//! controllable labels, the environment picks uncontrollable ones.
//!
//! Plays are maximal. In a state where the strategy permits a controllable
//! label, either that label or any enabled uncontrollable label may fire. In a
//! state where the strategy permits nothing, an enabled uncontrollable label
//! must fire. The controllable predecessor operator below encodes exactly
//! this: a state is forced into `X` when every uncontrollable successor lies
//! in `X` and there is some move at all (a controllable one into `X`, or an
//! uncontrollable one).

use std::collections::{BTreeMap, HashMap, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::behaviour_goal::{BehaviourGoal, GoalKind};
use crate::lts::Lts;
use crate::predicate::Predicate;
use crate::strategy::{entry_from_props, StrategyAutomaton, StrategyState};

#[derive(Clone, Debug)]
pub struct GameProblem {
    pub arena: Lts,
    pub goal: BehaviourGoal,
    /// Environment fairness: the environment is only held to plays that
    /// visit these states infinitely often.
    pub fairness: Option<Predicate>,
}

impl GameProblem {
    pub fn new(arena: Lts, goal: BehaviourGoal) -> Self {
        Self {
            arena,
            goal,
            fairness: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Synthesis {
    Realizable(StrategyAutomaton),
    Unrealizable,
}

impl Synthesis {
    pub fn strategy(self) -> Option<StrategyAutomaton> {
        match self {
            Synthesis::Realizable(s) => Some(s),
            Synthesis::Unrealizable => None,
        }
    }

    pub fn is_realizable(&self) -> bool {
        matches!(self, Synthesis::Realizable(_))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("goal `{label}` is not a {expected} goal")]
    WrongGoalKind { label: String, expected: &'static str },
}

/// Per-arena facts reused by every fixpoint.
struct Game<'a> {
    lts: &'a Lts,
    pred: Vec<Vec<(u32, u32)>>,
    has_unctrl: Vec<bool>,
}

impl<'a> Game<'a> {
    fn new(lts: &'a Lts) -> Self {
        let has_unctrl = (0..lts.num_states())
            .map(|s| lts.outgoing(s).iter().any(|&(l, _)| !lts.is_controllable(l)))
            .collect();
        Self {
            lts,
            pred: lts.predecessors(),
            has_unctrl,
        }
    }

    fn n(&self) -> usize {
        self.lts.num_states()
    }

    fn ctrl(&self, l: u32) -> bool {
        self.lts.is_controllable(l)
    }

    fn cpre(&self, x: &[bool]) -> Vec<bool> {
        (0..self.n())
            .map(|s| {
                let mut ctrl_in = false;
                for &(l, t) in self.lts.outgoing(s) {
                    let inside = x[t as usize];
                    if self.ctrl(l) {
                        ctrl_in |= inside;
                    } else if !inside {
                        return false;
                    }
                }
                ctrl_in || self.has_unctrl[s]
            })
            .collect()
    }

    /// Greatest controllable-invariant subset of `!forbidden`. Arena deadlocks
    /// are kept: a play that stops is not a safety violation.
    fn safe_region(&self, forbidden: &[bool]) -> Vec<bool> {
        let n = self.n();
        let mut alive = vec![true; n];
        let mut ctrl_in: Vec<usize> = (0..n)
            .map(|s| self.lts.outgoing(s).iter().filter(|&&(l, _)| self.ctrl(l)).count())
            .collect();
        let deadlock: Vec<bool> = (0..n).map(|s| self.lts.outgoing(s).is_empty()).collect();
        let mut work: Vec<usize> = Vec::new();
        for s in 0..n {
            if forbidden[s] {
                alive[s] = false;
                work.push(s);
            }
        }
        while let Some(t) = work.pop() {
            for &(s, l) in &self.pred[t] {
                let s = s as usize;
                if !alive[s] {
                    continue;
                }
                let drop = if self.ctrl(l) {
                    ctrl_in[s] -= 1;
                    ctrl_in[s] == 0 && !self.has_unctrl[s] && !deadlock[s]
                } else {
                    true
                };
                if drop {
                    alive[s] = false;
                    work.push(s);
                }
            }
        }
        alive
    }

    /// Controllable attractor to `target` inside `within`, with ranks.
    fn attractor(&self, target: &[bool], within: &[bool]) -> Vec<Option<u32>> {
        let n = self.n();
        let mut rank = vec![None; n];
        let mut unc_left: Vec<usize> = (0..n)
            .map(|s| self.lts.outgoing(s).iter().filter(|&&(l, _)| !self.ctrl(l)).count())
            .collect();
        let mut ctrl_hit = vec![false; n];
        let mut queue = VecDeque::new();
        for s in 0..n {
            if target[s] && within[s] {
                rank[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(t) = queue.pop_front() {
            let r = rank[t].expect("queued states are ranked");
            for &(s, l) in &self.pred[t] {
                let s = s as usize;
                if !within[s] || rank[s].is_some() {
                    continue;
                }
                if self.ctrl(l) {
                    ctrl_hit[s] = true;
                } else {
                    unc_left[s] -= 1;
                }
                if unc_left[s] == 0 && (ctrl_hit[s] || self.has_unctrl[s]) {
                    rank[s] = Some(r + 1);
                    queue.push_back(s);
                }
            }
        }
        rank
    }

    /// Controllable label minimising `(key(successor), label)` among those
    /// whose successor is admitted by `key`.
    fn best_choice(&self, s: usize, key: impl Fn(usize) -> Option<u32>) -> Option<u32> {
        self.lts
            .outgoing(s)
            .iter()
            .filter(|&&(l, _)| self.ctrl(l))
            .filter_map(|&(l, t)| key(t as usize).map(|k| (k, l)))
            .min()
            .map(|(_, l)| l)
    }

    /// Builds the automaton over `region`; `plan` gives each state's permitted
    /// controllable labels (first one is the choice) and its rank.
    fn extract(&self, label: &str, region: &[bool], plan: impl Fn(usize) -> (Vec<u32>, Option<u32>)) -> Synthesis {
        let lts = self.lts;
        if !region[lts.initial()] {
            return Synthesis::Unrealizable;
        }
        let mut id_of = vec![usize::MAX; self.n()];
        let mut order = Vec::new();
        for s in 0..self.n() {
            if region[s] {
                id_of[s] = order.len();
                order.push(s);
            }
        }
        let states = order
            .iter()
            .map(|&s| {
                let (ctrl, rank) = plan(s);
                let mut moves = BTreeMap::new();
                for &(l, t) in lts.outgoing(s) {
                    let t = t as usize;
                    let permitted = if self.ctrl(l) { ctrl.contains(&l) } else { true };
                    if permitted && region[t] {
                        moves.insert(lts.label(l).to_string(), id_of[t]);
                    }
                }
                StrategyState {
                    name: lts.state_name(s).to_string(),
                    entry: entry_from_props(lts.state_name(s), lts.state_props(s)),
                    choice: ctrl.first().map(|&l| lts.label(l).to_string()),
                    moves,
                    rank,
                }
            })
            .collect();
        Synthesis::Realizable(StrategyAutomaton {
            id: label.to_string(),
            states,
            initial: id_of[lts.initial()],
            controllable: lts.controllable_labels().map(str::to_string).collect(),
            uncontrollable: lts.uncontrollable_labels().map(str::to_string).collect(),
        })
    }
}

/// Solves by goal kind.
pub fn solve(p: &GameProblem) -> Synthesis {
    match &p.goal.kind {
        GoalKind::Safety { .. } => solve_safety(p),
        GoalKind::Reach { .. } => solve_reach(p),
        GoalKind::Buchi { .. } => solve_buchi(p),
    }
    .expect("dispatch matches goal kind")
}

/// Maximally permissive memoryless safety strategy.
pub fn solve_safety(p: &GameProblem) -> Result<Synthesis, SolverError> {
    if !matches!(p.goal.kind, GoalKind::Safety { .. }) {
        return Err(SolverError::WrongGoalKind {
            label: p.goal.label.clone(),
            expected: "safety",
        });
    }
    let g = Game::new(&p.arena);
    let safe = g.safe_region(&p.arena.mask(&p.goal.forbidden()));
    Ok(g.extract(&p.goal.label, &safe, |s| {
        let ctrl = p
            .arena
            .outgoing(s)
            .iter()
            .filter(|&&(l, t)| g.ctrl(l) && safe[t as usize])
            .map(|&(l, _)| l)
            .collect();
        (ctrl, None)
    }))
}

/// Attractor strategy: each step picks the enabled controllable label that
/// minimises the successor's rank, ties broken by label.
pub fn solve_reach(p: &GameProblem) -> Result<Synthesis, SolverError> {
    let GoalKind::Reach { target } = &p.goal.kind else {
        return Err(SolverError::WrongGoalKind {
            label: p.goal.label.clone(),
            expected: "reach",
        });
    };
    let g = Game::new(&p.arena);
    let safe = g.safe_region(&p.arena.mask(&p.goal.avoid));
    let rank = g.attractor(&p.arena.mask(target), &safe);
    let region: Vec<bool> = rank.iter().map(Option::is_some).collect();
    Ok(g.extract(&p.goal.label, &region, |s| {
        let r = rank[s].expect("region state");
        let choice = if r == 0 {
            None
        } else {
            g.best_choice(s, |t| rank[t].filter(|&rt| rt < r))
        };
        (choice.into_iter().collect(), Some(r))
    }))
}

/// Büchi objective under an optional environment fairness predicate `A`:
/// the winning region of `GF A -> GF accepting`, computed with the nested
/// fixpoint `nu Z. mu Y. nu X. (G & cpre Z) | cpre Y | (!A & cpre X)`.
pub fn solve_buchi(p: &GameProblem) -> Result<Synthesis, SolverError> {
    let GoalKind::Buchi { accepting } = &p.goal.kind else {
        return Err(SolverError::WrongGoalKind {
            label: p.goal.label.clone(),
            expected: "buchi",
        });
    };
    let g = Game::new(&p.arena);
    let n = g.n();
    let ok: Vec<bool> = p.arena.mask(&p.goal.avoid).iter().map(|b| !b).collect();
    let acc = p.arena.mask(accepting);
    let unfair: Vec<bool> = match &p.fairness {
        Some(a) => p.arena.mask(a).iter().map(|b| !b).collect(),
        None => vec![false; n],
    };

    let mut z = ok.clone();
    let rank = loop {
        let cz = g.cpre(&z);
        let mut y = vec![false; n];
        let mut rank: Vec<Option<u32>> = vec![None; n];
        let mut r = 0;
        loop {
            r += 1;
            let cy = g.cpre(&y);
            let base: Vec<bool> = (0..n).map(|s| ok[s] && ((acc[s] && cz[s]) || cy[s])).collect();
            let mut x = ok.clone();
            loop {
                let cx = g.cpre(&x);
                let nx: Vec<bool> = (0..n).map(|s| base[s] || (ok[s] && unfair[s] && cx[s])).collect();
                if nx == x {
                    break;
                }
                x = nx;
            }
            let mut grew = false;
            for s in 0..n {
                if x[s] && !y[s] {
                    y[s] = true;
                    rank[s] = Some(r);
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        if y == z {
            break rank;
        }
        z = y;
    };

    let cz = g.cpre(&z);
    Ok(g.extract(&p.goal.label, &z, |s| {
        let r = rank[s].expect("region state");
        let choice = if acc[s] && cz[s] {
            g.best_choice(s, |t| rank[t])
        } else {
            let lower = g.best_choice(s, |t| rank[t].filter(|&rt| rt < r));
            let all_unc_lower = p
                .arena
                .outgoing(s)
                .iter()
                .all(|&(l, t)| g.ctrl(l) || rank[t as usize].is_some_and(|rt| rt < r));
            if all_unc_lower && (lower.is_some() || g.has_unctrl[s]) {
                lower
            } else {
                g.best_choice(s, |t| rank[t].filter(|&rt| rt <= r))
            }
        };
        (choice.into_iter().collect(), Some(r))
    }))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// The strategy uses labels the arena lacks or classifies differently.
    Precondition(String),
    /// A forbidden (bad or avoided) arena state is reachable.
    ForbiddenState(String),
    /// The arena enables an uncontrollable event the strategy does not handle.
    UnexpectedEvent(String),
    /// The closed loop is stuck while the arena could still move.
    Blocking(String),
    /// A play ends before meeting a liveness objective.
    Deadlock(String),
    /// A fair cycle that never meets the liveness objective.
    NonProgressCycle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Labels from the initial state to the violation.
    pub trace: Vec<String>,
    /// For cycle violations, the labels of the repeated part.
    pub cycle: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationReport {
    pub explored: usize,
    pub violation: Option<Violation>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Exhaustively explores the closed loop of `strategy` on `arena` and checks
/// `goal`. Independent of the solvers: only the strategy's move table is used.
pub fn verify_closed_loop(
    arena: &Lts,
    strategy: &StrategyAutomaton,
    goal: &BehaviourGoal,
    fairness: Option<&Predicate>,
) -> VerificationReport {
    let fail = |kind, trace, explored| VerificationReport {
        explored,
        violation: Some(Violation {
            kind,
            trace,
            cycle: Vec::new(),
        }),
    };
    for (labels, ctrl) in [(&strategy.controllable, true), (&strategy.uncontrollable, false)] {
        for l in labels {
            if arena.is_controllable_label(l) != Some(ctrl) {
                return fail(ViolationKind::Precondition(l.clone()), Vec::new(), 0);
            }
        }
    }
    for st in &strategy.states {
        for l in st.moves.keys() {
            if arena.label_index(l).is_none() {
                return fail(ViolationKind::Precondition(l.clone()), Vec::new(), 0);
            }
        }
    }

    let forbidden = arena.mask(&goal.forbidden());
    let (terminal, accepting) = match &goal.kind {
        GoalKind::Reach { target } => (arena.mask(target), None),
        GoalKind::Buchi { accepting } => (vec![false; arena.num_states()], Some(arena.mask(accepting))),
        GoalKind::Safety { .. } => (vec![false; arena.num_states()], None),
    };
    let fair = fairness.map(|f| arena.mask(f));

    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut nodes: Vec<(usize, usize)> = Vec::new();
    let mut parent: Vec<Option<(usize, String)>> = Vec::new();
    let mut edges: Vec<Vec<(usize, String)>> = Vec::new();
    let trace_to = |parent: &[Option<(usize, String)>], mut v: usize| {
        let mut t = Vec::new();
        while let Some((p, l)) = &parent[v] {
            t.push(l.clone());
            v = *p;
        }
        t.reverse();
        t
    };

    let start = (strategy.initial, arena.initial());
    ids.insert(start, 0);
    nodes.push(start);
    parent.push(None);
    edges.push(Vec::new());
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        let (q, s) = nodes[v];
        if forbidden[s] {
            return fail(
                ViolationKind::ForbiddenState(arena.state_name(s).to_string()),
                trace_to(&parent, v),
                nodes.len(),
            );
        }
        if terminal[s] {
            continue;
        }
        let mut succ = Vec::new();
        for (l, &q2) in &strategy.states[q].moves {
            if strategy.controllable.contains(l) {
                if let Some(s2) = arena.successor_by_name(s, l) {
                    succ.push((l.clone(), (q2, s2)));
                }
            }
        }
        for &(l, s2) in arena.outgoing(s) {
            if arena.is_controllable(l) {
                continue;
            }
            let label = arena.label(l);
            match strategy.step(q, label) {
                Some(q2) => succ.push((label.to_string(), (q2, s2 as usize))),
                None => {
                    let mut t = trace_to(&parent, v);
                    t.push(label.to_string());
                    return fail(ViolationKind::UnexpectedEvent(label.to_string()), t, nodes.len());
                }
            }
        }
        if succ.is_empty() {
            let name = arena.state_name(s).to_string();
            if !arena.outgoing(s).is_empty() {
                return fail(ViolationKind::Blocking(name), trace_to(&parent, v), nodes.len());
            }
            if !matches!(goal.kind, GoalKind::Safety { .. }) {
                return fail(ViolationKind::Deadlock(name), trace_to(&parent, v), nodes.len());
            }
        }
        for (label, pair) in succ {
            let w = *ids.entry(pair).or_insert_with(|| {
                nodes.push(pair);
                parent.push(Some((v, label.clone())));
                edges.push(Vec::new());
                queue.push_back(nodes.len() - 1);
                nodes.len() - 1
            });
            edges[v].push((w, label));
        }
    }

    // Liveness: look for a cycle that avoids the objective.
    let bad_cycle_node = |v: usize| -> bool {
        let s = nodes[v].1;
        match (&goal.kind, &accepting) {
            (GoalKind::Reach { .. }, _) => !terminal[s],
            (GoalKind::Buchi { .. }, Some(acc)) => !acc[s],
            _ => false,
        }
    };
    if matches!(goal.kind, GoalKind::Safety { .. }) {
        return VerificationReport {
            explored: nodes.len(),
            violation: None,
        };
    }
    let mut graph: DiGraph<usize, ()> = DiGraph::new();
    let idx: Vec<_> = (0..nodes.len()).map(|v| graph.add_node(v)).collect();
    for (v, out) in edges.iter().enumerate() {
        if !bad_cycle_node(v) {
            continue;
        }
        for (w, _) in out {
            if bad_cycle_node(*w) {
                graph.add_edge(idx[v], idx[*w], ());
            }
        }
    }
    for scc in tarjan_scc(&graph) {
        let members: Vec<usize> = scc.iter().map(|i| graph[*i]).collect();
        let cyclic = members.len() > 1 || graph.contains_edge(scc[0], scc[0]);
        if !cyclic {
            continue;
        }
        let is_fair = match &fair {
            Some(f) if matches!(goal.kind, GoalKind::Buchi { .. }) => members.iter().any(|&v| f[nodes[v].1]),
            _ => true,
        };
        if !is_fair {
            continue;
        }
        let entry = *members.iter().min().expect("nonempty scc");
        let cycle = cycle_through(entry, &members, &edges);
        return VerificationReport {
            explored: nodes.len(),
            violation: Some(Violation {
                kind: ViolationKind::NonProgressCycle,
                trace: trace_to(&parent, entry),
                cycle,
            }),
        };
    }
    VerificationReport {
        explored: nodes.len(),
        violation: None,
    }
}

/// Labels of a cycle from `entry` back to itself inside one SCC.
fn cycle_through(entry: usize, members: &[usize], edges: &[Vec<(usize, String)>]) -> Vec<String> {
    let inside: std::collections::HashSet<usize> = members.iter().copied().collect();
    let mut prev: HashMap<usize, (usize, String)> = HashMap::new();
    let mut queue = VecDeque::from([entry]);
    while let Some(v) = queue.pop_front() {
        for (w, l) in &edges[v] {
            if !inside.contains(w) {
                continue;
            }
            if *w == entry {
                let mut labels = vec![l.clone()];
                let mut cur = v;
                while cur != entry {
                    let (p, pl) = &prev[&cur];
                    labels.push(pl.clone());
                    cur = *p;
                }
                labels.reverse();
                return labels;
            }
            if !prev.contains_key(w) {
                prev.insert(*w, (v, l.clone()));
                queue.push_back(*w);
            }
        }
    }
    Vec::new()
}

/// True iff `low` simulates `high` from their initial states: every move
/// `high` can make (controllable choice or expected event) is matched by
/// `low` with the same label, and the successors are again related. Both
/// automata are deterministic, so the relation is explored on the fly.
pub fn check_simulation(high: &StrategyAutomaton, low: &StrategyAutomaton) -> bool {
    let clash = high.controllable.iter().any(|l| low.uncontrollable.contains(l))
        || high.uncontrollable.iter().any(|l| low.controllable.contains(l));
    if clash {
        return false;
    }
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![(high.initial, low.initial)];
    seen.insert((high.initial, low.initial));
    while let Some((h, l)) = stack.pop() {
        for (label, &h2) in &high.states[h].moves {
            let Some(l2) = low.step(l, label) else {
                return false;
            };
            if seen.insert((h2, l2)) {
                stack.push((h2, l2));
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lts::Lts;

    // s0 -a-> s1 -e-> bad ; s0 -b-> s2 -e-> s3 ; s3 -c-> s0 ; s1 -c-> s0
    const FIVE: &str = "state s0\nstate s1\nstate s2\nstate s3\nstate bad bad\ninit s0\nctrl a b c\nunctrl e\n\
        t s0 a s1\nt s1 e bad\nt s1 c s0\nt s0 b s2\nt s2 e s3\nt s3 c s0\n";

    #[test]
    fn safety_omits_unsafe_choice() {
        let arena = Lts::parse(FIVE).unwrap();
        let p = GameProblem::new(arena.clone(), BehaviourGoal::safety("safe", Predicate::prop("bad")));
        let s = solve_safety(&p).unwrap().strategy().unwrap();
        let q0 = s.state_index("s0").unwrap();
        assert!(!s.states[q0].moves.contains_key("a"));
        assert!(s.states[q0].moves.contains_key("b"));
        assert!(verify_closed_loop(&arena, &s, &p.goal, None).passed());
    }

    #[test]
    fn safety_vacuous_and_initial_bad() {
        let arena = Lts::parse("state a\nstate b\nctrl x y\nt a x b\nt b y a\n").unwrap();
        let p = GameProblem::new(arena, BehaviourGoal::safety("s", Predicate::False));
        let s = solve_safety(&p).unwrap().strategy().unwrap();
        assert_eq!(s.states.iter().map(|q| q.moves.len()).sum::<usize>(), 2);
        let bad = Lts::parse("state a bad\nctrl x\nt a x a\n").unwrap();
        let p = GameProblem::new(bad, BehaviourGoal::safety("s", Predicate::prop("bad")));
        assert_eq!(solve_safety(&p).unwrap(), Synthesis::Unrealizable);
    }

    #[test]
    fn reach_chain_ranks() {
        let arena = Lts::parse(
            "state c0\nstate c1\nstate c2\nstate c3 goal\nctrl a b c z\nt c0 a c1\nt c1 b c2\nt c2 c c3\nt c0 z c0\n",
        )
        .unwrap();
        let p = GameProblem::new(arena, BehaviourGoal::reach("r", Predicate::prop("goal")));
        let s = solve_reach(&p).unwrap().strategy().unwrap();
        let (_, cmds) = s.settle(s.initial);
        assert_eq!(cmds, vec!["a", "b", "c"]);
        assert_eq!(s.states[s.initial].rank, Some(3));
    }

    #[test]
    fn reach_wrong_kind() {
        let arena = Lts::parse("state a\n").unwrap();
        let p = GameProblem::new(arena, BehaviourGoal::safety("s", Predicate::False));
        assert!(solve_reach(&p).is_err());
    }

    #[test]
    fn buchi_controllable_cycle() {
        let arena = Lts::parse("state a acc\nstate b\nstate c\nctrl x y z\nt a x b\nt b y c\nt c z a\n").unwrap();
        let p = GameProblem::new(arena.clone(), BehaviourGoal::buchi("loop", Predicate::prop("acc")));
        let s = solve_buchi(&p).unwrap().strategy().unwrap();
        assert_eq!(s.settle(s.initial).1, vec!["x", "y", "z"]);
        assert!(verify_closed_loop(&arena, &s, &p.goal, None).passed());
    }

    #[test]
    fn accepting_self_loop_on_event() {
        let arena = Lts::parse("state a\nstate b acc\nctrl x\nunctrl e\nt a x b\nt b e b\n").unwrap();
        let p = GameProblem::new(arena.clone(), BehaviourGoal::buchi("wait", Predicate::prop("acc")));
        let s = solve_buchi(&p).unwrap().strategy().unwrap();
        assert!(verify_closed_loop(&arena, &s, &p.goal, None).passed());
    }

    #[test]
    fn verify_flags_unsafe_strategy() {
        let arena = Lts::parse(FIVE).unwrap();
        let goal = BehaviourGoal::safety("safe", Predicate::prop("bad"));
        let mut s = solve_safety(&GameProblem::new(arena.clone(), goal.clone()))
            .unwrap()
            .strategy()
            .unwrap();
        // Re-admit `a`, leading to s1 (added as a strategy state).
        let q1 = s.states.len();
        s.states.push(StrategyState {
            name: "s1".into(),
            entry: Predicate::True,
            choice: None,
            moves: BTreeMap::new(),
            rank: None,
        });
        let q0 = s.state_index("s0").unwrap();
        s.states[q0].moves.insert("a".into(), q1);
        s.states[q1].moves.insert("e".into(), q1);
        let report = verify_closed_loop(&arena, &s, &goal, None);
        let v = report.violation.unwrap();
        assert_eq!(v.kind, ViolationKind::ForbiddenState("bad".into()));
        assert_eq!(v.trace, vec!["a", "e"]);
    }

    #[test]
    fn verify_precondition() {
        let arena = Lts::parse("state a\nctrl x\nt a x a\n").unwrap();
        let other = Lts::parse("state a\nctrl y\nt a y a\n").unwrap();
        let goal = BehaviourGoal::safety("s", Predicate::False);
        let s = solve_safety(&GameProblem::new(other, goal.clone()))
            .unwrap()
            .strategy()
            .unwrap();
        let v = verify_closed_loop(&arena, &s, &goal, None).violation.unwrap();
        assert!(matches!(v.kind, ViolationKind::Precondition(_)));
    }

    #[test]
    fn simulation_basics() {
        let arena = Lts::parse("state a\nstate b\nctrl pickup go\nt a pickup b\nt a go b\nt b go a\n").unwrap();
        let goal = BehaviourGoal::safety("s", Predicate::False);
        let s = solve_safety(&GameProblem::new(arena, goal.clone()))
            .unwrap()
            .strategy()
            .unwrap();
        assert!(check_simulation(&s, &s));
        let mut low = s.clone();
        low.states[low.initial].moves.remove("pickup");
        assert!(!check_simulation(&s, &low));
        assert!(check_simulation(&low, &s));
    }
}
