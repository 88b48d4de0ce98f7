//! Goal models: AND/OR refinement graphs with leaf assignments and soft goals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

/// Default cap on the number of OR-resolutions enumerated.
pub const DEFAULT_RESOLUTION_CAP: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Goal,
    SoftGoal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RefinementKind {
    And,
    Or,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Refinement {
    pub kind: RefinementKind,
    pub children: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Assignment {
    /// Domain assumption.
    Environment,
    /// Requirement on a component providing this capability tag.
    Capability(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoalNode {
    pub id: String,
    pub kind: NodeKind,
    pub assertion: Option<String>,
    pub refinements: Vec<Refinement>,
    pub assignment: Option<Assignment>,
}

impl GoalNode {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::Goal,
            assertion: None,
            refinements: Vec::new(),
            assignment: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.refinements.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SoftGoalWeights {
    pub weights: BTreeMap<String, f64>,
    /// OR-child id -> soft goal id -> satisfaction score in [0,1].
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GoalModel {
    pub nodes: BTreeMap<String, GoalNode>,
    pub soft: SoftGoalWeights,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Issue {
    Cycle(Vec<String>),
    UnassignedLeaf(String),
    DanglingChild { parent: String, child: String },
    EmptyRefinement(String),
    NoRoot,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Resolution {
    /// OR-refinement key (`parent`, or `parent#i` for a node's i-th
    /// refinement when i > 0) -> chosen child.
    pub choices: BTreeMap<String, String>,
    pub capabilities: BTreeSet<String>,
    /// Assertion labels of requirement leaves.
    pub requirements: BTreeSet<String>,
    /// Assertion labels of environment leaves.
    pub assumptions: BTreeSet<String>,
}

impl Resolution {
    /// Chosen OR-children in key order; `base` when there was no choice.
    pub fn tag(&self) -> String {
        if self.choices.is_empty() {
            "base".to_string()
        } else {
            self.choices.values().cloned().collect::<Vec<_>>().join("+")
        }
    }

    fn chosen_ids(&self) -> Vec<&String> {
        let mut v: Vec<&String> = self.choices.values().collect();
        v.sort();
        v
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GoalModelError {
    #[error("model is malformed: {0:?}")]
    Malformed(Vec<Issue>),
    #[error("no resolution is coverable by the available profiles")]
    EmptyResolutionSet,
    #[error("more than {0} resolutions")]
    TooManyResolutions(usize),
    #[error("no score row for OR-child `{0}`")]
    MissingScore(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn refinement_key(parent: &str, index: usize) -> String {
    if index == 0 {
        parent.to_string()
    } else {
        format!("{parent}#{index}")
    }
}

impl GoalModel {
    /// Goal nodes that are nobody's child. Soft goals are kept flat.
    pub fn roots(&self) -> Vec<&str> {
        let children: BTreeSet<&str> = self
            .nodes
            .values()
            .flat_map(|n| n.refinements.iter().flat_map(|r| r.children.iter().map(String::as_str)))
            .collect();
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Goal && !children.contains(n.id.as_str()))
            .map(|n| n.id.as_str())
            .collect()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_goal_graph(self)
    }

    /// Leaf sets of the AND-closure of `choices` from the roots.
    pub fn expand(&self, choices: &BTreeMap<String, String>) -> Resolution {
        let mut res = Resolution {
            choices: BTreeMap::new(),
            capabilities: BTreeSet::new(),
            requirements: BTreeSet::new(),
            assumptions: BTreeSet::new(),
        };
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = self.roots();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let Some(node) = self.nodes.get(id) else { continue };
            if node.is_leaf() {
                self.record_leaf(node, &mut res);
            }
            for (i, r) in node.refinements.iter().enumerate() {
                match r.kind {
                    RefinementKind::And => stack.extend(r.children.iter().map(String::as_str)),
                    RefinementKind::Or => {
                        let key = refinement_key(id, i);
                        if let Some(c) = choices.get(&key) {
                            res.choices.insert(key, c.clone());
                            stack.push(c);
                        }
                    }
                }
            }
        }
        res
    }

    fn record_leaf(&self, node: &GoalNode, res: &mut Resolution) {
        let label = node.assertion.clone().unwrap_or_else(|| node.id.clone());
        match &node.assignment {
            Some(Assignment::Environment) => {
                res.assumptions.insert(label);
            }
            Some(Assignment::Capability(tag)) => {
                res.capabilities.insert(tag.clone());
                res.requirements.insert(label);
            }
            None => {}
        }
    }

    /// Every OR-resolution, up to `cap`.
    pub fn resolutions(&self, cap: usize) -> Result<Vec<Resolution>, GoalModelError> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(GoalModelError::Malformed(report.issues));
        }
        let mut out = Vec::new();
        self.enumerate(BTreeMap::new(), cap, &mut out)?;
        Ok(out)
    }

    fn enumerate(
        &self,
        choices: BTreeMap<String, String>,
        cap: usize,
        out: &mut Vec<Resolution>,
    ) -> Result<(), GoalModelError> {
        // Find the first unresolved OR refinement reachable under `choices`.
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = self.roots();
        stack.reverse();
        let mut open = None;
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let node = &self.nodes[id];
            for (i, r) in node.refinements.iter().enumerate() {
                match r.kind {
                    RefinementKind::And => stack.extend(r.children.iter().rev().map(String::as_str)),
                    RefinementKind::Or => match choices.get(&refinement_key(id, i)) {
                        Some(c) => stack.push(c),
                        None => {
                            open = Some((refinement_key(id, i), r));
                            break;
                        }
                    },
                }
            }
            if open.is_some() {
                break;
            }
        }
        match open {
            None => {
                if out.len() >= cap {
                    return Err(GoalModelError::TooManyResolutions(cap));
                }
                out.push(self.expand(&choices));
            }
            Some((key, r)) => {
                for c in &r.children {
                    let mut next = choices.clone();
                    next.insert(key.clone(), c.clone());
                    self.enumerate(next, cap, out)?;
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in self.nodes.values() {
            match n.kind {
                NodeKind::Goal => {
                    let _ = writeln!(out, "goal {}", n.id);
                }
                NodeKind::SoftGoal => {
                    let w = self.soft.weights.get(&n.id).copied().unwrap_or(0.0);
                    let _ = writeln!(out, "softgoal {} weight {}", n.id, w);
                }
            }
        }
        for n in self.nodes.values() {
            for r in &n.refinements {
                let kind = if r.kind == RefinementKind::And { "AND" } else { "OR" };
                let _ = writeln!(out, "refine {} {} {}", n.id, kind, r.children.join(" "));
            }
            if let Some(a) = &n.assignment {
                let target = match a {
                    Assignment::Environment => "env".to_string(),
                    Assignment::Capability(t) => format!("cap:{t}"),
                };
                let label = n.assertion.clone().unwrap_or_else(|| n.id.clone());
                let _ = writeln!(out, "assign {} {} assert:{}", n.id, target, label);
            }
        }
        for (child, row) in &self.soft.scores {
            for (sg, s) in row {
                let _ = writeln!(out, "score {child} {sg} {s}");
            }
        }
        out
    }

    /// Parses the line-oriented goal-model format. Records may appear in any
    /// order; references are resolved after the whole text is read.
    pub fn parse(text: &str) -> Result<GoalModel, GoalModelError> {
        let mut model = GoalModel::default();
        let mut deferred: Vec<(usize, Vec<String>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            let err = |msg: &str| GoalModelError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            match words[0].as_str() {
                "goal" if words.len() == 2 => {
                    model
                        .nodes
                        .entry(words[1].clone())
                        .or_insert_with(|| GoalNode::new(&words[1]));
                }
                "softgoal" if words.len() == 4 && words[2] == "weight" => {
                    let w: f64 = words[3].parse().map_err(|_| err("bad weight"))?;
                    if !(w >= 0.0) {
                        return Err(err("weight must be nonnegative"));
                    }
                    let mut node = GoalNode::new(&words[1]);
                    node.kind = NodeKind::SoftGoal;
                    model.nodes.insert(words[1].clone(), node);
                    model.soft.weights.insert(words[1].clone(), w);
                }
                "refine" | "assign" | "score" => deferred.push((i + 1, words)),
                _ => return Err(err("unrecognised record")),
            }
        }
        for (line, words) in deferred {
            model
                .apply_record(&words)
                .map_err(|msg| GoalModelError::Parse { line, msg })?;
        }
        Ok(model)
    }

    /// Applies one `refine`/`assign`/`score` record.
    pub fn apply_record(&mut self, words: &[String]) -> Result<(), String> {
        match words.first().map(String::as_str) {
            Some("refine") if words.len() >= 4 => {
                let kind = match words[2].as_str() {
                    "AND" => RefinementKind::And,
                    "OR" => RefinementKind::Or,
                    _ => return Err("refinement kind must be AND or OR".into()),
                };
                let node = self
                    .nodes
                    .get_mut(&words[1])
                    .ok_or(format!("unknown node `{}`", words[1]))?;
                node.refinements.push(Refinement {
                    kind,
                    children: words[3..].to_vec(),
                });
                Ok(())
            }
            Some("assign") if words.len() == 4 => {
                let target = match words[2].as_str() {
                    "env" => Assignment::Environment,
                    t => match t.strip_prefix("cap:") {
                        Some(tag) if !tag.is_empty() => Assignment::Capability(tag.to_string()),
                        _ => return Err("assignment must be env or cap:<tag>".into()),
                    },
                };
                let label = words[3].strip_prefix("assert:").ok_or("expected assert:<label>")?;
                let node = self
                    .nodes
                    .get_mut(&words[1])
                    .ok_or(format!("unknown node `{}`", words[1]))?;
                node.assignment = Some(target);
                node.assertion = Some(label.to_string());
                Ok(())
            }
            Some("score") if words.len() == 4 => {
                let s: f64 = words[3].parse().map_err(|_| "bad score".to_string())?;
                if !(0.0..=1.0).contains(&s) {
                    return Err("score must lie in [0,1]".into());
                }
                self.soft
                    .scores
                    .entry(words[1].clone())
                    .or_default()
                    .insert(words[2].clone(), s);
                Ok(())
            }
            _ => Err("malformed record".into()),
        }
    }
}

pub fn validate_goal_graph(model: &GoalModel) -> ValidationReport {
    let mut issues = Vec::new();
    for n in model.nodes.values() {
        for r in &n.refinements {
            if r.children.is_empty() {
                issues.push(Issue::EmptyRefinement(n.id.clone()));
            }
            for c in &r.children {
                if !model.nodes.contains_key(c) {
                    issues.push(Issue::DanglingChild {
                        parent: n.id.clone(),
                        child: c.clone(),
                    });
                }
            }
        }
        if n.kind == NodeKind::Goal && n.is_leaf() && n.assignment.is_none() {
            issues.push(Issue::UnassignedLeaf(n.id.clone()));
        }
    }
    // Cycle detection by colouring DFS; each back edge yields one cycle.
    let mut colour: BTreeMap<&str, u8> = BTreeMap::new();
    fn dfs<'a>(
        model: &'a GoalModel,
        id: &'a str,
        colour: &mut BTreeMap<&'a str, u8>,
        path: &mut Vec<&'a str>,
        issues: &mut Vec<Issue>,
    ) {
        colour.insert(id, 1);
        path.push(id);
        if let Some(n) = model.nodes.get(id) {
            for c in n.refinements.iter().flat_map(|r| r.children.iter()) {
                match colour.get(c.as_str()).copied().unwrap_or(0) {
                    0 if model.nodes.contains_key(c) => dfs(model, c, colour, path, issues),
                    1 => {
                        let start = path.iter().position(|p| *p == c).unwrap_or(0);
                        issues.push(Issue::Cycle(path[start..].iter().map(|s| s.to_string()).collect()));
                    }
                    _ => {}
                }
            }
        }
        path.pop();
        colour.insert(id, 2);
    }
    for id in model.nodes.keys() {
        if colour.get(id.as_str()).copied().unwrap_or(0) == 0 {
            dfs(model, id, &mut colour, &mut Vec::new(), &mut issues);
        }
    }
    if model.nodes.values().any(|n| n.kind == NodeKind::Goal) && model.roots().is_empty() {
        issues.push(Issue::NoRoot);
    }
    ValidationReport { issues }
}

/// Resolutions whose capability tags are covered by some available profile.
pub fn viable_resolutions(
    model: &GoalModel,
    available: &[BTreeSet<String>],
) -> Result<Vec<Resolution>, GoalModelError> {
    let viable: Vec<Resolution> = model
        .resolutions(DEFAULT_RESOLUTION_CAP)?
        .into_iter()
        .filter(|r| available.iter().any(|p| r.capabilities.is_subset(p)))
        .collect();
    if viable.is_empty() {
        Err(GoalModelError::EmptyResolutionSet)
    } else {
        Ok(viable)
    }
}

/// Weighted score of a resolution with normalised weights.
pub fn resolution_score(r: &Resolution, weights: &SoftGoalWeights) -> Result<f64, GoalModelError> {
    let total: f64 = weights.weights.values().sum();
    let mut score = 0.0;
    for child in r.choices.values() {
        let row = weights
            .scores
            .get(child)
            .ok_or_else(|| GoalModelError::MissingScore(child.clone()))?;
        for (sg, w) in &weights.weights {
            if total > 0.0 {
                score += w / total * row.get(sg).copied().unwrap_or(0.0);
            }
        }
    }
    Ok(score)
}

/// Sorts descending by weighted score; ties by the chosen OR-child ids.
pub fn rank_resolutions(
    resolutions: Vec<Resolution>,
    weights: &SoftGoalWeights,
) -> Result<Vec<Resolution>, GoalModelError> {
    let mut keyed = Vec::with_capacity(resolutions.len());
    for r in resolutions {
        // Quantised so that rescaling the weights cannot reorder near-ties.
        let q = (resolution_score(&r, weights)? * 1e9).round() as i64;
        keyed.push((q, r));
    }
    keyed.sort_by(|(qa, a), (qb, b)| qb.cmp(qa).then_with(|| a.chosen_ids().cmp(&b.chosen_ids())));
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const UAV: &str = "\
goal mission
goal handle
goal collect_at_base
goal analyse_in_situ
goal grip_samples
goal ir_inspect
goal locate
softgoal analysis_quality weight 1
refine mission AND handle locate
refine handle OR collect_at_base analyse_in_situ
refine collect_at_base AND grip_samples
refine analyse_in_situ AND ir_inspect
assign grip_samples cap:grip assert:samples_collected
assign ir_inspect cap:ir_camera assert:samples_analysed
assign locate cap:positioning assert:positioned
score collect_at_base analysis_quality 0.9
score analyse_in_situ analysis_quality 0.4
";

    fn tags(t: &[&str]) -> BTreeSet<String> {
        t.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn uav_model_viability_and_rank() {
        let m = GoalModel::parse(UAV).unwrap();
        assert!(m.validate().is_ok());
        let only_ir = viable_resolutions(&m, &[tags(&["positioning", "ir_camera"])]).unwrap();
        assert_eq!(only_ir.len(), 1);
        assert_eq!(only_ir[0].tag(), "analyse_in_situ");
        let both = viable_resolutions(&m, &[tags(&["positioning", "ir_camera", "grip"])]).unwrap();
        let ranked = rank_resolutions(both, &m.soft).unwrap();
        assert_eq!(ranked[0].tag(), "collect_at_base");
        assert_eq!(
            viable_resolutions(&m, &[tags(&["grip"])]),
            Err(GoalModelError::EmptyResolutionSet)
        );
    }

    #[test]
    fn cycle_and_unassigned_leaf() {
        let m = GoalModel::parse("goal a\ngoal b\ngoal c\nrefine a AND b\nrefine b AND c\nrefine c AND b\n").unwrap();
        let r = m.validate();
        assert_eq!(r.issues.iter().filter(|i| matches!(i, Issue::Cycle(_))).count(), 1);
        let m = GoalModel::parse("goal a\ngoal b\nrefine a AND b\n").unwrap();
        assert_eq!(m.validate().issues, vec![Issue::UnassignedLeaf("b".into())]);
    }

    #[test]
    fn text_roundtrip() {
        let m = GoalModel::parse(UAV).unwrap();
        assert_eq!(GoalModel::parse(&m.to_text()).unwrap(), m);
    }
}
