//! Tactile-driven in-hand pivoting: slip metrics, the three deconstructed
//! actions, online finite-difference tuning and a simulated test bench.

pub mod controller;
pub mod error;
pub mod geometry;
pub mod optimizer;
pub mod sim;
pub mod tactile;
pub mod harness;
