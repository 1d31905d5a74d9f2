//! File formats.

pub mod config;
pub mod deepbench;
pub mod mnist;
pub mod model;
