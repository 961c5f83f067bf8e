//! Discrete-time simulator for wireless networked control systems.
//!
//! Unstable LTI plants close their sensing and actuation loops over shared
//! fading links. A centralized scheduler grants at most one uplink and one
//! downlink per slot; unserved receivers impute the missing state or action
//! with per-output Gaussian-process regressors. The proposed scheduler turns
//! AoI, power and Lyapunov-decay requirements into virtual queues and
//! minimizes a drift-plus-penalty bound each slot; five baselines share the
//! same harness.

pub mod channel;
pub mod control;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod numerics;
pub mod plant;
pub mod prediction;
pub mod rng;
pub mod scheduler;
pub mod stability;

pub use error::{Error, Result};
