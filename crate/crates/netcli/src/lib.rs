//! Command line, wire format, and networked sessions for the `poqm`
//! simulator.

pub mod cli;
pub mod config;
pub mod frame;
pub mod protocols;
pub mod report;
pub mod session;
