//! Core library: goal models, behaviour and reconfiguration synthesis, the
//! three-layer adaptation runtime and a simulated target system.

pub mod behaviour_goal;
pub mod config;
pub mod enactment;
pub mod goal_manager;
pub mod goal_model;
pub mod knowledge;
pub mod lts;
pub mod managers;
pub mod mission;
pub mod planner;
pub mod predicate;
pub mod scenario;
pub mod scheduler;
pub mod sim;
pub mod solver;
pub mod strategy;
pub mod trace;
