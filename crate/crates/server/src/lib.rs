//! HTTP service and command-line front end for the review triage engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod state;
