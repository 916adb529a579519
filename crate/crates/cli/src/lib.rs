//! Batch front end for the chaos toolkit: experiment sweeps, invariant
//! suites and CSV emission.

pub mod config;
pub mod experiments;
pub mod table;
pub mod tables;
pub mod verify;
