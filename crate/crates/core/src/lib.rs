//! Delay bounds for multiplexed Markov-modulated On-Off traffic, with a
//! packet-level simulator to check them against.
//!
//! Replications and grid searches run on rayon by default; build without the
//! `parallel` feature for a single-threaded library.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod general_bounds;
pub mod martingale_bounds;
pub mod queue_sim;
pub mod seed;
pub mod standard_bounds;
pub mod traffic_model;

pub use error::{Result, SncError};
pub use exec::Execution;
pub use martingale_bounds::{DelayBound, ExponentMode, MartingaleConstants, MartingaleOptions, SchedulerSpec};
pub use standard_bounds::{EffectiveBandwidthEval, StandardBoundResult};
pub use traffic_model::{MarkovFluidSource, MmooParams, Scenario};
