//! Simulation framework for physical challenge-response sensor
//! authentication.
//!
//! An active sensor proves that what it measures is a real physical
//! reflection, not an attacker's forgery, by randomly silencing its own
//! actuator and checking that the world goes quiet at the right speed.
//! This crate provides the pieces needed to study that idea end to end:
//!
//! - challenge scheduling and probe modulation ([`schedule`], [`signal`])
//! - a discrete-time sensor plant with a passive tone ring and an RFID
//!   coupling variant ([`plant`])
//! - attacker models with a physical reaction lag ([`adversary`])
//! - time-domain residual detection ([`detect`]) and frequency-domain
//!   attack-resilient estimation ([`dft`], [`resilient`])
//! - quickest-change-detection analysis of the attacker's best possible
//!   reaction time ([`qcd`])
//! - scenario configs, sweeps, ROC tooling and CSV export ([`scenario`],
//!   [`sweep`], [`export`])

pub mod adversary;
pub mod detect;
pub mod dft;
pub mod error;
pub mod export;
pub mod plant;
pub mod qcd;
pub mod resilient;
pub mod rng;
pub mod scenario;
pub mod schedule;
pub mod signal;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use schedule::{ChallengeSchedule, ConfusionParams, Phase, Segment, SilentWindow};
pub use signal::SignalTrace;
