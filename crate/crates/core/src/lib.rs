//! Particle PHD multi-target tracking with a distributed-computation variant.
//!
//! The serial filter lives in [`phd`]. [`dcp`] splits the particle budget into
//! `K` groups that filter independently over the full measurement set, swap
//! particles around a ring and report labeled estimates to a fusion step.
//! [`sim`] and [`experiment`] generate scenarios and run Monte-Carlo studies,
//! scored with [`metrics`].

pub mod config;
pub mod dcp;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod phd;
pub mod rng;
pub mod sim;

pub use error::{FilterError, ModelError};
