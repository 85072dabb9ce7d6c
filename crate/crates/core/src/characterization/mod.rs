//! Bench-test procedures run against the simulator or imported curves:
//! threshold scans and S-curve fits, gain and ENC extraction, noise
//! occupancy with Rice analysis, and time walk.

mod curve;
mod report;
mod rice;
mod scurve;
mod timewalk;

pub use curve::{ScanCurve, ScanKind};
pub use report::{curve_digest, sha256_hex, FitReport};
pub use rice::{
    fit_rice, rice_constant, rice_constant_for, run_noise_occupancy, zero_crossing_rate, NoiseScan, RiceFit,
    MIN_FIT_COUNTS, MIN_PEAK_COUNTS,
};
pub use scurve::{
    binomial_error, enc_from_noise, extract_gain, fit_line, fit_scurve, run_threshold_scan, scurve, GainFit, SCurveFit,
    MIN_INJECTIONS,
};
pub use timewalk::{calibrate_overdrive_delay, measure_time_walk, TimeWalk};
