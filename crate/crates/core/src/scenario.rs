//! Scenario files: world, component pool, goal model, constraints,
//! adaptation settings and the fault script.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::{parse_pool, ComponentType, Configuration, Status, StructuralConstraint};
use crate::goal_manager::Variant;
use crate::knowledge::DEFAULT_WINDOW;
use crate::mission::GOAL_MODEL;
use crate::sim::{Cell, FaultScript, SimError, World};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("scenario line {line}: {msg}")]
pub struct ScenarioError {
    pub line: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub width: i32,
    pub height: i32,
    pub base: Cell,
    pub samples: Vec<Cell>,
    pub battery: i64,
    pub threshold: i64,
    pub consumption: f64,
    pub components: Vec<(String, Status)>,
    pub pool: BTreeMap<String, (ComponentType, usize)>,
    pub goal_model: String,
    pub constraints: Vec<StructuralConstraint>,
    pub variants: Vec<Variant>,
    pub portfolio_k: usize,
    pub delay: u64,
    pub window: usize,
    pub knowledge: bool,
    pub faults: FaultScript,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            width: 8,
            height: 8,
            base: (0, 0),
            samples: vec![(3, 3), (7, 7), (7, 4), (2, 6), (5, 1)],
            battery: 150,
            threshold: 30,
            consumption: 1.0,
            components: Vec::new(),
            pool: BTreeMap::new(),
            goal_model: GOAL_MODEL.to_string(),
            constraints: Vec::new(),
            variants: Vec::new(),
            portfolio_k: 2,
            delay: 3,
            window: DEFAULT_WINDOW,
            knowledge: true,
            faults: FaultScript::default(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    World,
    Pool,
    Goals,
    Constraints,
    Adaptation,
    Faults,
}

fn num<T: std::str::FromStr>(w: Option<&&str>, line: usize, what: &str) -> Result<T, ScenarioError> {
    w.and_then(|s| s.parse().ok()).ok_or_else(|| ScenarioError {
        line,
        msg: format!("bad or missing {what}"),
    })
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut s = Scenario::default();
        let mut section = None;
        let mut pool_text = String::new();
        let mut pool_lines = Vec::new();
        let mut goal_text = String::new();
        let mut fault_text = String::new();
        let mut fault_lines = Vec::new();
        let mut default_samples = true;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| ScenarioError {
                line: n,
                msg: msg.to_string(),
            };
            if line.starts_with('[') {
                section = Some(match line {
                    "[world]" => Section::World,
                    "[pool]" => Section::Pool,
                    "[goals]" => Section::Goals,
                    "[constraints]" => Section::Constraints,
                    "[adaptation]" => Section::Adaptation,
                    "[faults]" => Section::Faults,
                    _ => return Err(err("unknown section")),
                });
                continue;
            }
            let w: Vec<&str> = line.split_whitespace().collect();
            match section.ok_or_else(|| err("record outside any section"))? {
                Section::World => match w[0] {
                    "grid" => {
                        s.width = num(w.get(1), n, "width")?;
                        s.height = num(w.get(2), n, "height")?;
                        if s.width <= 0 || s.height <= 0 {
                            return Err(err("grid must be nonempty"));
                        }
                    }
                    "base" => s.base = (num(w.get(1), n, "x")?, num(w.get(2), n, "y")?),
                    "sample" => {
                        if default_samples {
                            s.samples.clear();
                            default_samples = false;
                        }
                        s.samples.push((num(w.get(1), n, "x")?, num(w.get(2), n, "y")?));
                    }
                    "battery" => s.battery = num(w.get(1), n, "battery")?,
                    "threshold" => s.threshold = num(w.get(1), n, "threshold")?,
                    "consumption" => s.consumption = num(w.get(1), n, "rate")?,
                    "component" => {
                        let ty = *w.get(1).ok_or_else(|| err("missing component type"))?;
                        let st = w
                            .get(2)
                            .and_then(|x| Status::parse(x))
                            .filter(|st| *st != Status::Connected)
                            .ok_or_else(|| err("status must be active, inactive or killed"))?;
                        s.components.push((ty.to_string(), st));
                    }
                    _ => return Err(err("unknown world record")),
                },
                Section::Pool => {
                    pool_text.push_str(line);
                    pool_text.push('\n');
                    pool_lines.push(n);
                }
                Section::Goals => {
                    goal_text.push_str(line);
                    goal_text.push('\n');
                }
                Section::Constraints => {
                    s.constraints
                        .push(StructuralConstraint::parse(line).ok_or_else(|| err("bad constraint"))?);
                }
                Section::Adaptation => match w[0] {
                    "variant" if w.len() == 3 => s.variants.push(Variant {
                        name: w[1].to_string(),
                        bound: num(w.get(2), n, "bound")?,
                    }),
                    "portfolio" => s.portfolio_k = num(w.get(1), n, "portfolio size")?,
                    "delay" => s.delay = num(w.get(1), n, "delay")?,
                    "window" => s.window = num(w.get(1), n, "window")?,
                    "knowledge" => {
                        s.knowledge = match w.get(1) {
                            Some(&"on") => true,
                            Some(&"off") => false,
                            _ => return Err(err("knowledge must be on or off")),
                        }
                    }
                    _ => return Err(err("unknown adaptation record")),
                },
                Section::Faults => {
                    fault_text.push_str(line);
                    fault_text.push('\n');
                    fault_lines.push(n);
                }
            }
        }
        s.pool = parse_pool(&pool_text).map_err(|e| ScenarioError {
            line: pool_lines.get(e.line - 1).copied().unwrap_or(0),
            msg: e.msg,
        })?;
        s.faults = FaultScript::parse(&fault_text).map_err(|e| match e {
            SimError::Script { line, msg } => ScenarioError {
                line: fault_lines.get(line - 1).copied().unwrap_or(0),
                msg,
            },
            other => ScenarioError {
                line: 0,
                msg: other.to_string(),
            },
        })?;
        if !goal_text.is_empty() {
            s.goal_model = goal_text;
        }
        if s.variants.is_empty() {
            s.variants.push(Variant {
                name: "nominal".into(),
                bound: s.consumption,
            });
        }
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let err = |msg: String| Err(ScenarioError { line: 0, msg });
        let on_grid = |c: Cell| c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height;
        if !on_grid(self.base) {
            return err("base lies outside the grid".into());
        }
        for c in &self.samples {
            if !on_grid(*c) || *c == self.base {
                return err(format!("sample {},{} is off the grid or at the base", c.0, c.1));
            }
        }
        for (ty, _) in &self.components {
            if !self.pool.contains_key(ty) {
                return err(format!("component type `{ty}` is not declared in [pool]"));
            }
        }
        Ok(())
    }

    /// Initial configuration: one instance per component, named after its
    /// type, wired automatically.
    pub fn configuration(&self) -> Configuration {
        let mut c = Configuration::default();
        for (ty, st) in &self.components {
            c.add_instance(ty, self.pool[ty].0.clone(), *st);
        }
        c.pool = self.pool.clone();
        c.autowire();
        c
    }

    pub fn world(&self) -> World {
        let mut w = World::new(
            self.width,
            self.height,
            self.base,
            &self.samples,
            self.battery,
            self.threshold,
            self.consumption,
        );
        w.config = self.configuration();
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "\
[world]
grid 6 5
base 0 0
sample 2 2
battery 90
component gps active
[pool]
type gps provides positioning
spare gps 1
[adaptation]
variant nominal 1.5
window 4
knowledge off
[faults]
at 10 fault gps
";

    #[test]
    fn parses_sections() {
        let s = Scenario::parse(TEXT).unwrap();
        assert_eq!((s.width, s.height), (6, 5));
        assert_eq!(s.samples, vec![(2, 2)]);
        assert_eq!(s.variants[0].bound, 1.5);
        assert!(!s.knowledge);
        assert_eq!(s.faults.entries.len(), 1);
        let c = s.configuration();
        assert_eq!(c.instances["gps"].status, Status::Active);
        assert_eq!(c.pool["gps"].1, 1);
    }

    #[test]
    fn errors_carry_file_lines() {
        let bad = TEXT.replace("at 10 fault gps", "at x fault gps");
        assert_eq!(Scenario::parse(&bad).unwrap_err().line, 15);
        let bad = TEXT.replace("spare gps 1", "spare nope 1");
        assert_eq!(Scenario::parse(&bad).unwrap_err().line, 9);
        assert!(Scenario::parse("grid 1 1").is_err());
    }
}
