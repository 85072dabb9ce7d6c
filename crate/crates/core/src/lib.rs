//! Simulation and characterisation toolkit for binary silicon-sensor
//! readout front ends.
//!
//! - [`shaping`]: CR-RC^n weighting functions and transfer functions.
//! - [`noise_model`]: analytic ENC (parallel, series, total), leakage
//!   estimation and peaking-time optimisation.
//! - [`channel_sim`]: Monte Carlo model of the six-channel chip.
//! - [`characterization`]: threshold scans, S-curve and Rice fits, gain,
//!   ENC and time-walk extraction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_sim;
pub mod characterization;
pub mod error;
pub mod noise_model;
pub mod shaping;
pub mod units;

pub use error::{Error, Result};
