//! Closed-loop mission runner, depth benchmark and their file formats.

pub mod bench;
pub mod config;
pub mod frame;
pub mod runner;
pub mod telemetry;
