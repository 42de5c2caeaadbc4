//! Multi-UAV air combat simulation with a three-level decision hierarchy and
//! leader-follower multi-agent policy optimization.
//!
//! The crate is organized around the data flow of a combat engagement:
//!
//! * [`flightdyn`] — kinematic aircraft model and fixed-step integrator
//! * [`arena`] — multi-aircraft environment: geometry, rewards, events, observations
//! * [`targeting`] — threat-scored target selection with n-step projection
//! * [`neuralcore`] — dense networks, Adam, Gaussian/categorical policy heads
//! * [`hrl`] — policy selector, maneuver sub-policies, attitude controller
//! * [`lfmappo`] — rollout collection, advantage estimation, clipped-surrogate
//!   training with leader-follower max-min value targets
//! * [`evalharness`] — match runner, scripted opponents, tournament statistics
//! * [`trainer`] — training-loop orchestration, metrics and checkpoint output

pub mod arena;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod evalharness;
pub mod flightdyn;
pub mod hrl;
pub mod lfmappo;
pub mod neuralcore;
pub mod rng;
pub mod targeting;
pub mod trainer;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
