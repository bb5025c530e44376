pub mod anchors;
pub mod cli;
pub mod closed_loop;
pub mod config;
pub mod error;
pub mod fine_grained;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod scenario_gen;
pub mod selection;
pub mod world;

pub use error::{Error, Result};
