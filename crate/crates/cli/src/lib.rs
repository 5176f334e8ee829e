//! Experiment harness behind the `holosub` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod table;
