//! HTTP API and command-line front end for the lab assistant.

pub mod api;
pub mod cli;
