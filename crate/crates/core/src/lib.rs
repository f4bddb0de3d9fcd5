//! Failure-predictor guided adversarial episode sampling for policy-gradient
//! training, with the numerical core, toy environments, PPO trainer and
//! experiment harness it runs on.

pub mod checkpoint;
pub mod coachnet;
pub mod collector;
pub mod env;
pub mod harness;
pub mod error;
pub mod numcore;
pub mod ppo;
pub mod sampler;

pub use error::{Error, Result};
