//! Service and command-line front end for the agentic graph learning engine.

pub mod commands;
pub mod config;
pub mod data;
pub mod service;
pub mod wire;
