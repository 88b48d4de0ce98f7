//! Reference implementations and random instance generators shared by the
//! integration tests. The reference code in `game` and `reconf` never calls
//! the solver or the planner; `campaign` compares them.
#![allow(dead_code)]

pub mod campaign;
pub mod game;
pub mod reconf;

use std::path::PathBuf;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn load_scenario(name: &str) -> adapt_core::scenario::Scenario {
    let path = scenario_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    adapt_core::scenario::Scenario::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
