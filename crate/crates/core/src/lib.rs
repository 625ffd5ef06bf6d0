//! Gain-switched laser diode pulse simulation, pulse-shape statistics and
//! decoy-state key-rate arithmetic.

pub mod analytic;
pub mod drive;
pub mod experiment;
pub mod params;
pub mod pulse;
pub mod qkd;
pub mod solver;
pub mod stats;
