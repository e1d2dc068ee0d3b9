//! Adversarial multi-agent driving: a 2D T-junction simulator, a from-scratch
//! PPO stack, the three training phases (baseline victims, adversary against
//! frozen victims, victim retraining) and the safety metrics used to compare
//! them.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod orchestrator;
pub mod pipeline;
pub mod ppo;
pub mod raster;
pub mod reward;
pub mod scenario;
pub mod world;

pub use error::{CheckpointError, Error, Result};
