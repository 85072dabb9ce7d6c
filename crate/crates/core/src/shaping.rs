//! CR-RC^n pulse-shape engine.
//!
//! The chain is one CR differentiator followed by `n` RC integrators, all
//! sharing τ = tp/n. Its response to a charge delta, normalised to unit
//! peak, is the weighting function
//!
//! ```text
//! w(t) = (t/tp)^n · exp(n·(1 − t/tp)),   t ≥ 0
//! ```
//!
//! In the frequency domain the same response is
//! `W(f) = K·τ / (1 + jωτ)^(n+1)` with `K = n!·eⁿ/nⁿ`, and the voltage
//! transfer of the shaper proper (CR zero included) is `H(f) = jω·W(f)`,
//! i.e. `|H|² = K²·(ωτ)² / (1 + (ωτ)²)^(n+1)`. `H` is what colours white
//! series noise at the discriminator input.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Upper integration limit, in units of the peaking time.
pub const INTEGRATION_SPAN: f64 = 40.0;

/// Relative tolerance of the adaptive quadrature.
pub const QUAD_TOLERANCE: f64 = 1e-11;

/// Maps the 3-bit RC filter setting (0..=6) to a peaking time.
///
/// Piecewise linear through monotone anchors; codes between anchors are
/// interpolated. The default passes through 0 → 5.0 ns, 3 → 5.3 ns and
/// 6 → 9.0 ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcCodeMap {
    anchors: Vec<(u8, f64)>,
}

impl Default for RcCodeMap {
    fn default() -> Self {
        RcCodeMap {
            anchors: vec![(0, 5.0), (3, 5.3), (6, 9.0)],
        }
    }
}

impl RcCodeMap {
    pub const MAX_CODE: u8 = 6;

    /// Builds a map from `(code, peaking_time_ns)` anchors. The anchors must
    /// include codes 0 and 6, be strictly increasing in code and
    /// non-decreasing in peaking time.
    pub fn from_anchors(mut anchors: Vec<(u8, f64)>) -> Result<Self> {
        anchors.sort_by_key(|a| a.0);
        if anchors.first().map(|a| a.0) != Some(0) || anchors.last().map(|a| a.0) != Some(Self::MAX_CODE) {
            return Err(Error::config("rc_map", "anchors must cover codes 0 and 6"));
        }
        for pair in anchors.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::config("rc_map", format!("duplicate code {}", pair[0].0)));
            }
            if pair[1].1 < pair[0].1 {
                return Err(Error::config("rc_map", "peaking time must be non-decreasing"));
            }
        }
        if anchors.iter().any(|a| !(a.1 > 0.0) || !a.1.is_finite()) {
            return Err(Error::config("rc_map", "peaking times must be positive"));
        }
        Ok(RcCodeMap { anchors })
    }

    /// A map given explicitly for all seven codes.
    pub fn from_table(table: [f64; 7]) -> Result<Self> {
        Self::from_anchors(table.iter().enumerate().map(|(i, &t)| (i as u8, t)).collect())
    }

    pub fn anchors(&self) -> &[(u8, f64)] {
        &self.anchors
    }

    pub fn peaking_time(&self, code: u8) -> Result<f64> {
        if code > Self::MAX_CODE {
            return Err(Error::domain("rc_code", format!("{code} outside 0..=6")));
        }
        let upper = self
            .anchors
            .iter()
            .position(|a| a.0 >= code)
            .expect("anchors cover code 6");
        let (c1, t1) = self.anchors[upper];
        if c1 == code || upper == 0 {
            return Ok(t1);
        }
        let (c0, t0) = self.anchors[upper - 1];
        let frac = f64::from(code - c0) / f64::from(c1 - c0);
        Ok(t0 + frac * (t1 - t0))
    }
}

/// Peaking time for an RC code under the default map.
pub fn peaking_time_from_rc(code: u8) -> Result<f64> {
    RcCodeMap::default().peaking_time(code)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShaperConfig {
    /// Number of RC integrations.
    pub order: u32,
    /// Peaking time [ns].
    pub peaking_time: f64,
    /// RC setting the peaking time was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rc_code: Option<u8>,
}

impl Default for ShaperConfig {
    fn default() -> Self {
        ShaperConfig {
            order: 3,
            peaking_time: 5.3,
            rc_code: Some(3),
        }
    }
}

impl ShaperConfig {
    pub fn new(order: u32, peaking_time: f64) -> Result<Self> {
        let cfg = ShaperConfig {
            order,
            peaking_time,
            rc_code: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_rc_code(order: u32, code: u8, map: &RcCodeMap) -> Result<Self> {
        let cfg = ShaperConfig {
            order,
            peaking_time: map.peaking_time(code)?,
            rc_code: Some(code),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::config("order", "must be >= 1"));
        }
        if !(self.peaking_time > 0.0) || !self.peaking_time.is_finite() {
            return Err(Error::config(
                "peaking_time",
                format!("must be positive, got {}", self.peaking_time),
            ));
        }
        Ok(())
    }
}

/// Immutable, evaluable CR-RC^n response with unit peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    config: ShaperConfig,
    tau: f64,
    /// n!·eⁿ/nⁿ, the factor that gives the time-domain response unit peak.
    norm: f64,
}

impl PulseShape {
    pub fn new(config: ShaperConfig) -> Result<Self> {
        config.validate()?;
        let n = config.order;
        let nf = f64::from(n);
        let ln_norm = ln_factorial(n) + nf - nf * nf.ln();
        Ok(PulseShape {
            config,
            tau: config.peaking_time / nf,
            norm: ln_norm.exp(),
        })
    }

    /// Shorthand for `PulseShape::new(ShaperConfig::new(order, tp)?)`.
    pub fn cr_rc(order: u32, peaking_time: f64) -> Result<Self> {
        Self::new(ShaperConfig::new(order, peaking_time)?)
    }

    pub fn config(&self) -> &ShaperConfig {
        &self.config
    }

    pub fn order(&self) -> u32 {
        self.config.order
    }

    pub fn peaking_time(&self) -> f64 {
        self.config.peaking_time
    }

    /// Common time constant τ = tp/n [ns].
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Peak amplitude normalisation; always 1.
    pub fn amplitude_normalization(&self) -> f64 {
        1.0
    }

    /// Causal response: `w(t)` for t ≥ 0 and 0 before the charge arrives.
    #[inline]
    pub fn response(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let n = f64::from(self.config.order);
        let x = t / self.config.peaking_time;
        (n * (x.ln() + 1.0 - x)).exp()
    }

    /// Causal first derivative [1/ns].
    #[inline]
    pub fn response_derivative(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let n = self.config.order;
        let nf = f64::from(n);
        let tp = self.config.peaking_time;
        let x = t / tp;
        let lead = if n == 1 { 1.0 } else { x.powi(n as i32 - 1) };
        nf / tp * lead * (1.0 - x) * (nf * (1.0 - x)).exp()
    }

    /// Causal second derivative [1/ns²].
    #[inline]
    pub fn response_second_derivative(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let n = self.config.order as i32;
        let nf = f64::from(self.config.order);
        let tp = self.config.peaking_time;
        let x = t / tp;
        let xn1 = if n == 1 { 1.0 } else { x.powi(n - 1) };
        let xn2 = match n {
            1 => 0.0,
            2 => 1.0,
            _ => x.powi(n - 2),
        };
        let bracket = (nf - 1.0) * xn2 * (1.0 - x) - xn1 - nf * xn1 * (1.0 - x);
        nf / (tp * tp) * (nf * (1.0 - x)).exp() * bracket
    }

    /// The weighting function w(t); rejects t < 0.
    pub fn weighting(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.response(t))
    }

    /// dw/dt, analytic; rejects t < 0.
    pub fn weighting_derivative(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.response_derivative(t))
    }

    /// d²w/dt², analytic; rejects t < 0.
    pub fn weighting_second_derivative(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.response_second_derivative(t))
    }

    /// W(f): Fourier transform of w(t) [ns]. `f` in GHz.
    pub fn charge_transfer(&self, f: f64) -> Complex64 {
        let jwt = Complex64::new(0.0, 2.0 * PI * f * self.tau);
        let denom = (Complex64::new(1.0, 0.0) + jwt).powu(self.config.order + 1);
        Complex64::new(self.norm * self.tau, 0.0) / denom
    }

    /// H(f) = jω·W(f): CR-RC^n shaper transfer (dimensionless). Its inverse
    /// transform is dw/dt.
    pub fn transfer(&self, f: f64) -> Complex64 {
        let jw = Complex64::new(0.0, 2.0 * PI * f);
        jw * self.charge_transfer(f)
    }

    /// |H(f)|² = K²·(ωτ)² / (1 + (ωτ)²)^(n+1). `f` in GHz, f ≥ 0.
    pub fn transfer_magnitude_sq(&self, f: f64) -> Result<f64> {
        if !(f >= 0.0) {
            return Err(Error::domain("frequency", format!("must be >= 0, got {f}")));
        }
        Ok(self.transfer_magnitude_sq_unchecked(f))
    }

    #[inline]
    pub(crate) fn transfer_magnitude_sq_unchecked(&self, f: f64) -> f64 {
        let u2 = (2.0 * PI * f * self.tau).powi(2);
        if !u2.is_finite() {
            return 0.0;
        }
        // ln form avoids overflow of (1+u²)^(n+1) at large f
        let ln = 2.0 * self.norm.ln() + u2.ln() - f64::from(self.config.order + 1) * u2.ln_1p();
        if u2 == 0.0 {
            0.0
        } else {
            ln.exp()
        }
    }

    /// ∫₀^∞ w(t) dt [ns].
    pub fn integral(&self) -> f64 {
        self.integrate_time(|t| self.response(t))
    }

    /// ∫₀^∞ w(t)² dt [ns].
    pub fn integral_sq(&self) -> f64 {
        self.integrate_time(|t| self.response(t).powi(2))
    }

    /// ∫₀^∞ (dw/dt)² dt [1/ns].
    pub fn integral_derivative_sq(&self) -> f64 {
        self.integrate_time(|t| self.response_derivative(t).powi(2))
    }

    /// ∫₀^∞ (d²w/dt²)² dt [1/ns³].
    pub fn integral_second_derivative_sq(&self) -> f64 {
        self.integrate_time(|t| self.response_second_derivative(t).powi(2))
    }

    /// Integrates a function of time over [0, 40·tp], split at the peak and
    /// a few multiples of it so the double-exponential rule sees smooth
    /// pieces.
    pub fn integrate_time<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let tp = self.config.peaking_time;
        let knots = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, INTEGRATION_SPAN];
        knots
            .windows(2)
            .map(|k| integrate(|x| f(x * tp), k[0], k[1]))
            .sum::<f64>()
            * tp
    }
}

/// Adaptive double-exponential quadrature on a finite interval, refined
/// until the error estimate is below `QUAD_TOLERANCE` relative to the
/// result.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let first = quadrature::double_exponential::integrate(&f, a, b, 1e-6);
    let tol = (first.integral.abs() * QUAD_TOLERANCE).max(1e-300);
    if first.error_estimate <= tol {
        return first.integral;
    }
    quadrature::double_exponential::integrate(&f, a, b, tol).integral
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain("time", format!("must be >= 0, got {t}")))
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| f64::from(k).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn weighting_examples() {
        let s = PulseShape::cr_rc(3, 8.0).unwrap();
        assert!((s.weighting(8.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(s.weighting(0.0).unwrap(), 0.0);
        let s = PulseShape::cr_rc(3, 5.3).unwrap();
        let expected = 8.0 * (-3.0f64).exp();
        assert!(rel(s.weighting(10.6).unwrap(), expected) < 1e-12);
        assert!((s.weighting(10.6).unwrap() - 0.3983).abs() < 1e-4);
    }

    #[test]
    fn negative_time_rejected() {
        let s = PulseShape::cr_rc(3, 8.0).unwrap();
        assert!(s.weighting(-1.0).is_err());
        assert!(s.weighting_derivative(-0.1).is_err());
        assert!(s.weighting(f64::NAN).is_err());
    }

    #[test]
    fn derivative_examples() {
        let s = PulseShape::cr_rc(3, 8.0).unwrap();
        assert!(s.weighting_derivative(8.0).unwrap().abs() < 1e-15);
        assert!(s.weighting_derivative(1e-9).unwrap().abs() < 1e-15);
        // finite-difference oracle
        let h = 1e-5;
        let fd = (s.weighting(4.0 + h).unwrap() - s.weighting(4.0 - h).unwrap()) / (2.0 * h);
        assert!(rel(s.weighting_derivative(4.0).unwrap(), fd) < 1e-6);
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        for n in 1..=5 {
            let s = PulseShape::cr_rc(n, 6.0).unwrap();
            for &t in &[0.7, 3.0, 6.0, 9.5, 20.0] {
                let h = 1e-5;
                let fd = (s.response_derivative(t + h) - s.response_derivative(t - h)) / (2.0 * h);
                let an = s.weighting_second_derivative(t).unwrap();
                assert!((an - fd).abs() < 1e-6 * (1.0 + an.abs()), "n={n} t={t}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn transfer_limits() {
        let s = PulseShape::cr_rc(3, 8.0).unwrap();
        assert_eq!(s.transfer_magnitude_sq(0.0).unwrap(), 0.0);
        assert!(s.transfer_magnitude_sq(1e6).unwrap() < 1e-30);
        assert!(s.transfer_magnitude_sq(f64::INFINITY).unwrap() == 0.0);
        assert!(s.transfer_magnitude_sq(-1.0).is_err());
        let f = 0.05;
        assert!(rel(s.transfer(f).norm_sqr(), s.transfer_magnitude_sq(f).unwrap()) < 1e-12);
    }

    #[test]
    fn rc_map_defaults_and_override() {
        assert_eq!(peaking_time_from_rc(0).unwrap(), 5.0);
        assert_eq!(peaking_time_from_rc(6).unwrap(), 9.0);
        assert!((peaking_time_from_rc(3).unwrap() - 5.3).abs() < 1e-12);
        assert!((peaking_time_from_rc(1).unwrap() - 5.1).abs() < 1e-12);
        assert!(peaking_time_from_rc(7).is_err());

        let linear = RcCodeMap::from_anchors(vec![(0, 5.0), (6, 9.0)]).unwrap();
        assert!((linear.peaking_time(3).unwrap() - 7.0).abs() < 1e-12);
        let table = RcCodeMap::from_table([5.0, 5.1, 5.2, 5.3, 6.5, 7.7, 9.0]).unwrap();
        assert_eq!(table.peaking_time(4).unwrap(), 6.5);

        assert!(RcCodeMap::from_anchors(vec![(0, 5.0), (3, 4.0), (6, 9.0)]).is_err());
        assert!(RcCodeMap::from_anchors(vec![(0, 5.0), (3, 6.0)]).is_err());
    }

    #[test]
    fn rc_map_monotone() {
        let map = RcCodeMap::default();
        let tps: Vec<f64> = (0..=6).map(|c| map.peaking_time(c).unwrap()).collect();
        assert!(tps.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn config_invariants() {
        assert!(ShaperConfig::new(0, 5.0).is_err());
        assert!(ShaperConfig::new(3, 0.0).is_err());
        assert!(ShaperConfig::new(3, -2.0).is_err());
        let cfg = ShaperConfig::from_rc_code(3, 6, &RcCodeMap::default()).unwrap();
        assert_eq!(cfg.peaking_time, 9.0);
        assert_eq!(cfg.rc_code, Some(6));
        assert_eq!(ShaperConfig::default().order, 3);
    }
}
