//! Core of the sleep-aware cruise-control laboratory.
//!
//! * [`domain`]: action space, state vectors, observations and the reward.
//! * [`route`], [`profile`], [`world`]: checkpointed routes, the
//!   aggressiveness-to-controller mapping and the kinematic simulator.
//! * [`occupant`]: wrist oscillator, IMU stream and wake detection.
//! * [`env`]: the checkpoint decision process tying them together.

pub mod domain;
pub mod env;
mod error;
pub mod occupant;
pub mod profile;
pub mod route;
pub mod traffic;
pub mod world;

pub use error::{Error, Result};
