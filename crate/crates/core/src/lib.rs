//! Analyst pod: contract-driven equity research pipelines.
pub mod api;
pub mod category;
pub mod cli;
pub mod clock;
pub mod dispatcher;
pub mod distill;
pub mod graph;
pub mod planner;
pub mod pod;
pub mod registry;
pub mod runners;
pub mod skills;
pub mod store;
