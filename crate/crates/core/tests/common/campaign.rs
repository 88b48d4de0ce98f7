//! Seeded comparison runs of the solver and the planner against the
//! reference implementations.

use adapt_core::behaviour_goal::BehaviourGoal;
use adapt_core::lts::Lts;
use adapt_core::planner::{plan_with_limit, PlanError};
use adapt_core::predicate::Predicate;
use adapt_core::solver::{solve, verify_closed_loop, GameProblem, Synthesis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::game::{RandArena, TurnGame};
use super::reconf::{check_plan, shortest_plan, OracleResult, Problem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Safety,
    Reach,
    Buchi,
}

#[derive(Debug, Default)]
pub struct Tally {
    pub realizable: usize,
    pub unrealizable: usize,
}

fn mask(a: &RandArena, prop: &str) -> Vec<bool> {
    (0..a.len()).map(|s| a.has(s, prop)).collect()
}

/// One random instance: solver verdict against the reference, and the
/// strategy (if any) checked on the closed loop.
pub fn solver_case(kind: Kind, seed: u64) -> Result<bool, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = RandArena::generate(&mut rng, 200);
    let lts = Lts::parse(&a.to_text()).map_err(|e| format!("seed {seed}: {e}"))?;
    let g = TurnGame::unfold(&a);
    let bad = mask(&a, "bad");
    let with_avoid = rng.gen_bool(0.5);
    let none = vec![false; a.len()];
    let avoid = if with_avoid { &bad } else { &none };
    let fair = rng.gen_bool(0.5);
    let (goal, expected, fairness) = match kind {
        Kind::Safety => (
            BehaviourGoal::safety("g", Predicate::prop("bad")),
            g.safety(&bad)[0],
            None,
        ),
        Kind::Reach => {
            let mut goal = BehaviourGoal::reach("g", Predicate::prop("g"));
            if with_avoid {
                goal = goal.with_avoid(Predicate::prop("bad"));
            }
            (goal, g.reach(&mask(&a, "g"), avoid)[0], None)
        }
        Kind::Buchi => {
            let mut goal = BehaviourGoal::buchi("g", Predicate::prop("g"));
            if with_avoid {
                goal = goal.with_avoid(Predicate::prop("bad"));
            }
            let fm = mask(&a, "fair");
            let w = g.buchi(&mask(&a, "g"), avoid, fair.then_some(&fm[..]))[0];
            (goal, w, fair.then(|| Predicate::prop("fair")))
        }
    };
    let mut problem = GameProblem::new(lts.clone(), goal.clone());
    problem.fairness = fairness.clone();
    let got = solve(&problem);
    if got.is_realizable() != expected {
        return Err(format!(
            "{kind:?} seed {seed}: solver says {}, reference says {expected}",
            got.is_realizable()
        ));
    }
    if let Synthesis::Realizable(s) = got {
        let rep = verify_closed_loop(&lts, &s, &goal, fairness.as_ref());
        if !rep.passed() {
            return Err(format!("{kind:?} seed {seed}: closed loop fails: {:?}", rep.violation));
        }
    }
    Ok(expected)
}

pub fn solver_campaign(kind: Kind, base: u64, count: u64) -> Result<Tally, String> {
    let mut t = Tally::default();
    for i in 0..count {
        if solver_case(kind, base + i)? {
            t.realizable += 1;
        } else {
            t.unrealizable += 1;
        }
    }
    Ok(t)
}

pub const ORACLE_LIMIT: usize = 400_000;

/// Returns whether the instance was feasible.
pub fn planner_case(seed: u64) -> Result<bool, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = Problem::generate(&mut rng);
    let oracle = shortest_plan(&p, ORACLE_LIMIT);
    let got = plan_with_limit(&p.current, &p.target, &p.constraints, ORACLE_LIMIT * 4);
    match (oracle, got) {
        (OracleResult::TooLarge, _) => Err(format!("seed {seed}: reference search exceeded its limit")),
        (OracleResult::Infeasible, Err(PlanError::Infeasible)) => Ok(false),
        (OracleResult::Shortest(n), Ok(s)) => {
            if s.plan.len() != n {
                return Err(format!("seed {seed}: plan has {} steps, shortest is {n}", s.plan.len()));
            }
            check_plan(&p, &s.plan, &s.expected).map_err(|e| format!("seed {seed}: {e}"))?;
            Ok(true)
        }
        (OracleResult::Shortest(n), Err(e)) => Err(format!("seed {seed}: planner failed ({e}) but {n} steps suffice")),
        (OracleResult::Infeasible, r) => Err(format!("seed {seed}: reference infeasible, planner gave {r:?}")),
    }
}

pub fn planner_campaign(base: u64, count: u64) -> Result<Tally, String> {
    let mut t = Tally::default();
    for i in 0..count {
        if planner_case(base + i)? {
            t.realizable += 1;
        } else {
            t.unrealizable += 1;
        }
    }
    Ok(t)
}
