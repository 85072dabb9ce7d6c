//! Threshold scans, S-curve fitting and gain extraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::curve::{ScanCurve, ScanKind};
use crate::channel_sim::{derive_seed, ChipSimulator, InjectionRun};
use crate::error::{Error, Result};
use crate::units::ELECTRONS_PER_FC;

pub const MIN_INJECTIONS: usize = 100;
const MAX_ITERATIONS: usize = 200;

/// Occupancy of an ideal S-curve: `0.5·erfc((v − median)/(√2·sigma))`.
pub fn scurve(v: f64, median: f64, sigma: f64) -> f64 {
    0.5 * erfc((v - median) / sigma * FRAC_1_SQRT_2)
}

/// Binomial error with a floor of one effective count for empty or full
/// bins.
pub fn binomial_error(fired: usize, trials: usize) -> f64 {
    let n = trials as f64;
    let k = (fired.clamp(1, trials.saturating_sub(1).max(1))) as f64;
    let p = k / n;
    (p * (1.0 - p) / n).sqrt()
}

/// Threshold scan of one channel: occupancy at each threshold [mV],
/// thresholds evaluated in parallel with per-point derived seeds.
pub fn run_threshold_scan(
    sim: &ChipSimulator,
    channel: usize,
    q: f64,
    thresholds: &[f64],
    n_inj: usize,
    seed: u64,
) -> Result<(ScanCurve, Vec<InjectionRun>)> {
    if n_inj < MIN_INJECTIONS {
        return Err(Error::domain(
            "injections",
            format!("need >= {MIN_INJECTIONS}, got {n_inj}"),
        ));
    }
    if thresholds.is_empty() {
        return Err(Error::domain("thresholds", "empty scan"));
    }
    let runs = thresholds
        .par_iter()
        .enumerate()
        .map(|(i, &v)| sim.simulate_injections(channel, q, n_inj, v, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let curve = ScanCurve::new(
        ScanKind::ThresholdScan,
        thresholds.to_vec(),
        runs.iter().map(|r| r.occupancy).collect(),
        runs.iter().map(|r| binomial_error(r.fired, r.trials)).collect(),
    )?;
    Ok((curve, runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SCurveFit {
    /// [mV]
    pub median: f64,
    /// [mV]
    pub sigma: f64,
    pub chi2_ndf: f64,
    /// Covariance of (median, sigma).
    pub covariance: [[f64; 2]; 2],
    pub iterations: usize,
}

impl SCurveFit {
    pub fn median_error(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn sigma_error(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

/// First x where the curve drops through `level`, by linear interpolation.
fn falling_crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    (1..x.len()).find_map(|i| {
        let (y0, y1) = (y[i - 1], y[i]);
        if y0 >= level && y1 < level {
            Some(if y0 == y1 {
                x[i]
            } else {
                x[i - 1] + (x[i] - x[i - 1]) * (y0 - level) / (y0 - y1)
            })
        } else {
            None
        }
    })
}

/// Weighted least-squares fit of an erfc S-curve (Levenberg–Marquardt on
/// median and sigma). The curve must have increasing thresholds and
/// occupancies on both sides of 0.5.
pub fn fit_scurve(curve: &ScanCurve) -> Result<SCurveFit> {
    curve.validate()?;
    if !curve.is_increasing() {
        return Err(Error::domain("curve", "thresholds must be increasing"));
    }
    if curve.y.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::domain("curve", "occupancy outside [0, 1]"));
    }
    if curve.len() < 3 {
        return Err(Error::Insufficient("S-curve fit needs at least 3 points".into()));
    }
    let (x, y) = (&curve.x, &curve.y);
    if !(y.iter().any(|&p| p > 0.5) && y.iter().any(|&p| p < 0.5)) {
        return Err(Error::Fit("curve does not bracket 50% occupancy".into()));
    }
    let weights: Vec<f64> = curve
        .y_err
        .iter()
        .map(|&e| {
            let floor = 1e-6;
            1.0 / e.max(floor).powi(2)
        })
        .collect();

    let median0 = falling_crossing(x, y, 0.5).unwrap_or_else(|| 0.5 * (x[0] + x[x.len() - 1]));
    let span = x[x.len() - 1] - x[0];
    let sigma0 = match (falling_crossing(x, y, 0.8413), falling_crossing(x, y, 0.1587)) {
        (Some(v84), Some(v16)) if v16 > v84 => 0.5 * (v16 - v84),
        _ => span / (x.len() as f64),
    }
    .max(span * 1e-6);

    let chi2 = |m: f64, s: f64| -> f64 {
        x.iter()
            .zip(y)
            .zip(&weights)
            .map(|((&v, &p), &w)| w * (p - scurve(v, m, s)).powi(2))
            .sum()
    };

    let (mut m, mut s) = (median0, sigma0);
    let mut current = chi2(m, s);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jtj = [[0.0; 2]; 2];

    for it in 0..MAX_ITERATIONS {
        iterations = it + 1;
        jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for ((&v, &p), &w) in x.iter().zip(y).zip(&weights) {
            let z = (v - m) / s;
            let g = (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt());
            let d = [g, z * g];
            let r = p - scurve(v, m, s);
            for a in 0..2 {
                jtr[a] += w * d[a] * r;
                for b in 0..2 {
                    jtj[a][b] += w * d[a] * d[b];
                }
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let a = [
                [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
            ];
            let Some(step) = solve2(a, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let (nm, ns) = (m + step[0], s + step[1]);
            if ns > 0.0 {
                let trial = chi2(nm, ns);
                if trial <= current {
                    let small = step[0].abs() <= 1e-12 * (1.0 + m.abs()) && step[1].abs() <= 1e-12 * (1.0 + s);
                    let flat = current - trial <= 1e-14 * (1.0 + current);
                    m = nm;
                    s = ns;
                    current = trial;
                    lambda = (lambda * 0.3).max(1e-12);
                    accepted = true;
                    if small || flat {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!("no convergence after {MAX_ITERATIONS} iterations")));
    }
    let covariance = invert2(jtj).ok_or_else(|| Error::Fit("singular curvature matrix".into()))?;
    let ndf = (curve.len() as f64 - 2.0).max(1.0);
    let fit = SCurveFit {
        median: m,
        sigma: s,
        chi2_ndf: current / ndf,
        covariance,
        iterations,
    };
    let (lo, hi) = (x[0] - 3.0 * s, x[x.len() - 1] + 3.0 * s);
    if !(s > 0.0) || !(lo..=hi).contains(&m) {
        return Err(Error::Fit(format!("median {m} outside scanned range ± 3σ")));
    }
    Ok(fit)
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < f64::MIN_POSITIVE || !det.is_finite() {
        return None;
    }
    Some([
        (b[0] * a[1][1] - b[1] * a[0][1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ])
}

fn invert2(a: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < f64::MIN_POSITIVE || !det.is_finite() {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainFit {
    /// [mV/fC]
    pub gain: f64,
    /// Median at zero charge [mV].
    pub offset: f64,
    /// Standard errors from the residual scatter; zero with two points.
    pub gain_error: f64,
    pub offset_error: f64,
}

/// Least-squares line through S-curve medians vs injected charge.
pub fn extract_gain(fits: &[(f64, SCurveFit)]) -> Result<GainFit> {
    let points: Vec<(f64, f64)> = fits.iter().map(|(q, f)| (*q, f.median)).collect();
    fit_line(&points)
}

/// Unweighted straight-line fit; the slope is the gain.
pub fn fit_line(points: &[(f64, f64)]) -> Result<GainFit> {
    if points.len() < 2 {
        return Err(Error::Insufficient("gain needs at least 2 charges".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(Error::domain("charges", "all injected charges are identical"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let gain = sxy / sxx;
    let offset = my - gain * mx;
    let (gain_error, offset_error) = if points.len() > 2 {
        let rss: f64 = points.iter().map(|p| (p.1 - offset - gain * p.0).powi(2)).sum();
        let s2 = rss / (n - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / n + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(GainFit {
        gain,
        offset,
        gain_error,
        offset_error,
    })
}

/// Input-referred noise [e⁻] from output noise [mV] and gain [mV/fC].
pub fn enc_from_noise(sigma: f64, gain: f64) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(Error::domain("gain", format!("must be positive, got {gain}")));
    }
    Ok(sigma / gain * ELECTRONS_PER_FC)
}
