//! Noise-occupancy scans and Rice-formula analysis.
//!
//! For a stationary Gaussian process the rate of upward crossings of a
//! level `v` is `ν(v) = ν₀·exp(−v²/(2σ²))`, with the zero-level rate
//! `ν₀ = (1/2π)·sqrt(m₂/m₀)` set by the spectral moments
//! `m_k = ∫ f^k·S(f) df`. For the CR-RC^n shaper ν₀ scales as 1/tp, so
//! `κ_n = ν₀·tp` turns a measured zero-threshold rate into a peaking time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::curve::{ScanCurve, ScanKind};
use crate::channel_sim::{derive_seed, ChipSimulator, NoiseSpec, RateMeasurement, Spectrum};
use crate::error::{Error, Result};
use crate::shaping::PulseShape;

/// Points with fewer counts are left out of the Rice fit.
pub const MIN_FIT_COUNTS: f64 = 10.0;

/// Recommended minimum counts at the threshold closest to zero.
pub const MIN_PEAK_COUNTS: u64 = 100;

/// Spectral moment ∫₀^∞ f^k·|H(f)|² df of the CR-RC^n shaper, in units
/// where τ = 1 and f is replaced by u = ωτ (the constant factors cancel in
/// the moment ratio).
fn shaper_moment(order: u32, k: i32) -> f64 {
    let p = f64::from(order + 1);
    // u ∈ [0, ∞) mapped to s ∈ [0, 1): u = s/(1−s)
    let integrand = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let u = s / (1.0 - s);
        let jac = 1.0 / (1.0 - s).powi(2);
        let val = (u.powi(2 + k).ln() - p * (u * u).ln_1p()).exp();
        if u == 0.0 {
            0.0
        } else {
            val * jac
        }
    };
    [0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0]
        .windows(2)
        .map(|w| crate::shaping::integrate(integrand, w[0], w[1]))
        .sum()
}

/// κ_n = ν₀·tp for white noise shaped by CR-RC^n.
pub fn rice_constant(order: u32) -> Result<f64> {
    if order < 2 {
        return Err(Error::domain(
            "order",
            "second spectral moment diverges for n = 1; Rice constant undefined",
        ));
    }
    let ratio = shaper_moment(order, 2) / shaper_moment(order, 0);
    // ν₀·τ = sqrt(ratio)/(2π) and tp = n·τ
    Ok(f64::from(order) * ratio.sqrt() / (2.0 * PI))
}

/// κ for the spectrum actually configured: the shaper constant, or the
/// moments of a user PSD table scaled by the channel's peaking time.
pub fn rice_constant_for(spec: &NoiseSpec, shape: &PulseShape) -> Result<f64> {
    match &spec.spectrum {
        Spectrum::Shaper => rice_constant(shape.order()),
        Spectrum::Table { freq_ghz, .. } => {
            spec.validate()?;
            let (lo, hi) = (freq_ghz[0], freq_ghz[freq_ghz.len() - 1]);
            let moment = |k: i32| -> f64 {
                freq_ghz
                    .windows(2)
                    .map(|w| crate::shaping::integrate(|f| f.powi(k) * spec.psd(shape, f), w[0], w[1]))
                    .sum::<f64>()
            };
            debug_assert!(hi > lo);
            let nu0 = (moment(2) / moment(0)).sqrt();
            Ok(nu0 * shape.peaking_time())
        }
    }
}

/// Zero-threshold upward crossing rate [MHz] predicted from the spectrum.
pub fn zero_crossing_rate(spec: &NoiseSpec, shape: &PulseShape) -> Result<f64> {
    Ok(rice_constant_for(spec, shape)? / shape.peaking_time() * 1e3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseScan {
    pub curve: ScanCurve,
    pub points: Vec<RateMeasurement>,
}

impl NoiseScan {
    /// Indices of points with too few counts for the fit or too short a
    /// trace.
    pub fn flagged(&self) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| (p.counts as f64) < MIN_FIT_COUNTS || p.low_statistics)
            .map(|(i, _)| i)
            .collect()
    }

    /// True when the point closest to zero threshold has at least 100 counts.
    pub fn peak_statistics_ok(&self) -> bool {
        self.points
            .iter()
            .min_by(|a, b| a.vth_mv.abs().total_cmp(&b.vth_mv.abs()))
            .is_some_and(|p| p.counts >= MIN_PEAK_COUNTS)
    }
}

/// Noise crossing rate vs threshold, one independent seeded trace of
/// `duration` ns per threshold.
pub fn run_noise_occupancy(
    sim: &ChipSimulator,
    channel: usize,
    thresholds: &[f64],
    duration: f64,
    seed: u64,
) -> Result<NoiseScan> {
    if thresholds.is_empty() {
        return Err(Error::domain("thresholds", "empty scan"));
    }
    let points = thresholds
        .par_iter()
        .enumerate()
        .map(|(i, &v)| sim.noise_rate(channel, v, duration, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let curve = ScanCurve::new(
        ScanKind::NoiseOccupancy,
        thresholds.to_vec(),
        points.iter().map(|p| p.rate_mhz).collect(),
        points
            .iter()
            .map(|p| (p.counts.max(1) as f64).sqrt() / p.duration_ns * 1e3)
            .collect(),
    )?;
    Ok(NoiseScan { curve, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiceFit {
    /// Zero-threshold rate [MHz].
    pub f0: f64,
    /// [mV]
    pub sigma: f64,
    /// [ns]
    pub peaking_time_est: f64,
    pub kappa: f64,
    /// Weighted R² of ln(rate) against v².
    pub r_squared: f64,
    pub chi2_ndf: f64,
    pub n_points: usize,
    /// Covariance of (ln f0, −1/(2σ²)).
    pub covariance: [[f64; 2]; 2],
}

impl RiceFit {
    pub fn f0_error(&self) -> f64 {
        self.f0 * self.covariance[0][0].sqrt()
    }

    pub fn sigma_error(&self) -> f64 {
        // σ = (−2b)^(−1/2): dσ/db = σ³
        self.sigma.powi(3) * self.covariance[1][1].sqrt()
    }
}

/// Fits `rate(v) = f0·exp(−v²/(2σ²))` as a weighted straight line of
/// ln(rate) against v² (Poisson weights), using points with at least 10
/// counts, then converts f0 into a peaking time via `kappa`.
pub fn fit_rice(curve: &ScanCurve, kappa: f64) -> Result<RiceFit> {
    curve.validate()?;
    if !(kappa > 0.0) {
        return Err(Error::domain("kappa", "must be positive"));
    }
    // effective counts from the Poisson error: y/err = sqrt(N)
    let used: Vec<(f64, f64, f64)> = (0..curve.len())
        .filter_map(|i| {
            let (v, r, e) = (curve.x[i], curve.y[i], curve.y_err[i]);
            if r > 0.0 && e > 0.0 {
                let n = (r / e).powi(2);
                (n >= MIN_FIT_COUNTS).then_some((v * v, r.ln(), n))
            } else {
                None
            }
        })
        .collect();
    if used.len() < 3 {
        return Err(Error::Insufficient(format!(
            "Rice fit needs >= 3 points with >= {MIN_FIT_COUNTS} counts, got {}",
            used.len()
        )));
    }
    let sw: f64 = used.iter().map(|p| p.2).sum();
    let mx = used.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = used.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = used.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = used.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = used.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Insufficient("all fitted thresholds have the same |v|".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    if !(b < 0.0) {
        return Err(Error::Fit(
            "rate does not fall with |threshold|; non-positive sigma".into(),
        ));
    }
    let sigma = (-0.5 / b).sqrt();
    let chi2: f64 = used.iter().map(|p| p.2 * (p.1 - a - b * p.0).powi(2)).sum();
    let ndf = (used.len() - 2) as f64;
    let r_squared = if syy > 0.0 { 1.0 - chi2 / syy } else { 1.0 };

    let near_zero = used.iter().any(|p| p.0.sqrt() <= 0.5 * sigma);
    let beyond = used.iter().any(|p| p.0.sqrt() >= 2.0 * sigma);
    if !near_zero {
        return Err(Error::Insufficient(
            "no fitted point within 0.5σ of zero threshold".into(),
        ));
    }
    if !beyond {
        return Err(Error::Insufficient("no fitted point beyond 2σ".into()));
    }

    let covariance = [[1.0 / sw + mx * mx / sxx, -mx / sxx], [-mx / sxx, 1.0 / sxx]];
    let f0 = a.exp();
    Ok(RiceFit {
        f0,
        sigma,
        peaking_time_est: kappa / (f0 * 1e-3),
        kappa,
        r_squared,
        chi2_ndf: chi2 / ndf.max(1.0),
        n_points: used.len(),
        covariance,
    })
}
