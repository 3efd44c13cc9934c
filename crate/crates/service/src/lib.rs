//! HTTP service and command-line front end for the failure-analysis engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod metrics;
pub mod runtime;
