//! Discrete-event simulation of smart-meter and PMU traffic over the access
//! reservation protocol and data phase of GPRS and LTE cells.
//!
//! Time, probabilities and outage statistics are generic over
//! [`num_traits::Float`] where that is cheap; the aliases below fix them to
//! `f64`, which is what the simulators use.

pub mod access;
pub mod capacity;
pub mod cell;
pub mod engine;
pub mod error;
pub mod gprs;
pub mod lte;
pub mod metrics;
pub mod runner;
pub mod scenario;
pub mod traffic;

pub use error::{ConfigError, SimError};

pub type Clock = engine::SimClock<f64>;
pub type Calendar<E> = engine::EventCalendar<f64, E>;
pub type OutageEstimate = metrics::OutageEstimate<f64>;
pub type LoadSummary = capacity::LoadSummary<f64>;
