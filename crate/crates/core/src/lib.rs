//! Gamified embodied-data collection, engine free.
//!
//! Procedurally generated pick-and-place rooms, a teleoperable simulated
//! humanoid, an episode state machine with a leaderboard, success-gated
//! episode logging and dataset-quality analysis.

pub mod agent;
pub mod analysis;
pub mod episode;
pub mod math;
pub mod rng;
pub mod robot;
pub mod scene;
pub mod session;
pub mod sim;
pub mod task;
