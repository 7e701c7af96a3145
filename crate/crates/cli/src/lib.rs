//! Experiment driver behind the `qjump` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;
pub mod verify;
