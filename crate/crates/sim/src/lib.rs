//! Scenario-driven simulation, certification and reporting for embedtrack.

pub mod certify;
pub mod commands;
pub mod config;
pub mod plot;
pub mod record;
