//! Multi-material fibre-jamming tendons: material laws, tendon geometry,
//! a frictional bundle solver, calibration and the experiments built on them.

#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod materials;
pub mod optimize;
pub mod plot;
pub mod solver;
pub mod tendon;
