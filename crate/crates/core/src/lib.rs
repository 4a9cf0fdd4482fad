pub mod builder;
pub mod config;
pub mod error;
pub mod frontend;
pub mod graph;
pub mod simplify;
pub mod telemetry;
pub mod deviation;
pub mod pattern;
pub mod verdict;
pub mod fixtures;
pub mod pipeline;
