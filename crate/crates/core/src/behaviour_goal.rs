//! Behaviour goals and the registry that resolves goal-model assertion labels.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::predicate::Predicate;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GoalKind {
    /// Never reach a state satisfying `bad`.
    Safety { bad: Predicate },
    /// Eventually reach a state satisfying `target`.
    Reach { target: Predicate },
    /// Visit `accepting` states infinitely often.
    Buchi { accepting: Predicate },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BehaviourGoal {
    pub label: String,
    pub kind: GoalKind,
    /// Invariant preserved alongside a reach or Büchi objective.
    pub avoid: Predicate,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GoalError {
    #[error("unknown assertion `{0}`")]
    UnknownAssertion(String),
    #[error("cannot conjoin liveness goals `{0}` and `{1}`")]
    IncompatibleLiveness(String, String),
    #[error("no goals to conjoin")]
    Empty,
}

impl BehaviourGoal {
    pub fn safety(label: impl Into<String>, bad: Predicate) -> Self {
        Self {
            label: label.into(),
            kind: GoalKind::Safety { bad },
            avoid: Predicate::False,
        }
    }

    pub fn reach(label: impl Into<String>, target: Predicate) -> Self {
        Self {
            label: label.into(),
            kind: GoalKind::Reach { target },
            avoid: Predicate::False,
        }
    }

    pub fn buchi(label: impl Into<String>, accepting: Predicate) -> Self {
        Self {
            label: label.into(),
            kind: GoalKind::Buchi { accepting },
            avoid: Predicate::False,
        }
    }

    pub fn with_avoid(mut self, avoid: Predicate) -> Self {
        self.avoid = Predicate::or([self.avoid, avoid]);
        self
    }

    /// Every state the goal forbids, including the safety part of liveness goals.
    pub fn forbidden(&self) -> Predicate {
        match &self.kind {
            GoalKind::Safety { bad } => Predicate::or([bad.clone(), self.avoid.clone()]),
            _ => self.avoid.clone(),
        }
    }

    /// Conjunction of several goals: safety parts are unioned into the
    /// forbidden set, reach targets are intersected, and at most one Büchi
    /// objective is allowed.
    pub fn conjoin(goals: &[BehaviourGoal]) -> Result<BehaviourGoal, GoalError> {
        let label = goals.iter().map(|g| g.label.as_str()).collect::<Vec<_>>().join("+");
        if goals.is_empty() {
            return Err(GoalError::Empty);
        }
        let mut bad = Vec::new();
        let mut live: Option<(&BehaviourGoal, GoalKind)> = None;
        for g in goals {
            bad.push(g.avoid.clone());
            match &g.kind {
                GoalKind::Safety { bad: b } => bad.push(b.clone()),
                k => {
                    live = Some(match (live, k) {
                        (None, k) => (g, k.clone()),
                        (Some((_, GoalKind::Reach { target: a })), GoalKind::Reach { target: b }) => (
                            g,
                            GoalKind::Reach {
                                target: Predicate::and([a, b.clone()]),
                            },
                        ),
                        (Some((prev, _)), _) => {
                            return Err(GoalError::IncompatibleLiveness(prev.label.clone(), g.label.clone()))
                        }
                    })
                }
            }
        }
        let bad = Predicate::or(bad);
        Ok(match live {
            None => BehaviourGoal::safety(label, bad),
            Some((_, kind)) => BehaviourGoal {
                label,
                kind,
                avoid: bad,
            },
        })
    }
}

/// Maps assertion labels used by the goal model to behaviour goals.
#[derive(Clone, Debug, Default)]
pub struct GoalRegistry {
    goals: BTreeMap<String, BehaviourGoal>,
}

impl GoalRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, goal: BehaviourGoal) {
        self.goals.insert(goal.label.clone(), goal);
    }

    pub fn get(&self, label: &str) -> Result<&BehaviourGoal, GoalError> {
        self.goals
            .get(label)
            .ok_or_else(|| GoalError::UnknownAssertion(label.to_string()))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.goals.contains_key(label)
    }
}
