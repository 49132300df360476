//! Command line front end and calibration server.

pub mod commands;
pub mod server;
