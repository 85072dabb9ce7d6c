//! Stationary coloured Gaussian noise at the discriminator input.
//!
//! White Gaussian samples are filtered through an FIR approximation of the
//! requested spectrum using overlap-save FFT convolution. With the shaper
//! spectrum the taps are the sampled shaper impulse response dw/dt, so the
//! output PSD is |H(f)|² up to aliasing far above the shaper band. Taps
//! are normalised to unit energy, which makes the output variance exactly
//! `output_sigma²`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::shaping::PulseShape;

/// Coarsest allowed time step, as a fraction of the peaking time.
pub const MAX_DT_FRACTION: f64 = 1.0 / 20.0;

/// Length of the noise-shaping filter, in peaking times. The CR-RC^n
/// impulse response has decayed below 1e-10 of its peak by then.
pub const FILTER_SPAN_TP: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spectrum {
    /// White noise at the shaper input, coloured by |H(f)|².
    Shaper,
    /// One-sided PSD table (arbitrary units), linearly interpolated and
    /// zero outside the table.
    Table { freq_ghz: Vec<f64>, psd: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// RMS at the discriminator input [mV].
    pub output_sigma: f64,
    #[serde(default = "default_spectrum")]
    pub spectrum: Spectrum,
}

fn default_spectrum() -> Spectrum {
    Spectrum::Shaper
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            output_sigma: 2.9,
            spectrum: Spectrum::Shaper,
        }
    }
}

impl NoiseSpec {
    pub fn new(output_sigma: f64) -> Self {
        NoiseSpec {
            output_sigma,
            spectrum: Spectrum::Shaper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.output_sigma >= 0.0) || !self.output_sigma.is_finite() {
            return Err(Error::config("noise.output_sigma", "must be >= 0"));
        }
        if let Spectrum::Table { freq_ghz, psd } = &self.spectrum {
            if freq_ghz.len() != psd.len() || freq_ghz.len() < 2 {
                return Err(Error::config(
                    "noise.spectrum",
                    "table needs >= 2 points and equal-length columns",
                ));
            }
            if freq_ghz.windows(2).any(|w| !(w[1] > w[0])) || freq_ghz[0] < 0.0 {
                return Err(Error::config(
                    "noise.spectrum",
                    "frequencies must be increasing and >= 0",
                ));
            }
            if psd.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::config("noise.spectrum", "PSD must be non-negative"));
            }
            if psd.iter().all(|&p| p == 0.0) {
                return Err(Error::config("noise.spectrum", "PSD is identically zero"));
            }
        }
        Ok(())
    }

    /// One-sided PSD shape at `f` [GHz], unnormalised.
    pub fn psd(&self, shape: &PulseShape, f: f64) -> f64 {
        match &self.spectrum {
            Spectrum::Shaper => shape.transfer_magnitude_sq_unchecked(f),
            Spectrum::Table { freq_ghz, psd } => interp_table(freq_ghz, psd, f),
        }
    }
}

fn interp_table(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

/// Checks the simulation step against the shaper.
pub fn check_time_step(dt: f64, shape: &PulseShape) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::domain("dt", "must be positive"));
    }
    if dt > shape.peaking_time() * MAX_DT_FRACTION {
        return Err(Error::domain(
            "dt",
            format!(
                "{dt} ns is coarser than tp/20 = {} ns",
                shape.peaking_time() * MAX_DT_FRACTION
            ),
        ));
    }
    Ok(())
}

/// Unit-energy FIR taps realising the spectrum at step `dt`.
pub fn filter_taps(spec: &NoiseSpec, shape: &PulseShape, dt: f64, span_tp: f64) -> Vec<f64> {
    let len = ((span_tp * shape.peaking_time() / dt).ceil() as usize).max(2);
    let mut taps: Vec<f64> = match spec.spectrum {
        Spectrum::Shaper => (0..len).map(|k| shape.response_derivative(k as f64 * dt)).collect(),
        Spectrum::Table { .. } => table_taps(spec, shape, dt, len),
    };
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let scale = energy.sqrt().recip();
    taps.iter_mut().for_each(|h| *h *= scale);
    taps
}

/// Zero-phase taps from sqrt(PSD), centred in a window of `len` samples.
fn table_taps(spec: &NoiseSpec, shape: &PulseShape, dt: f64, len: usize) -> Vec<f64> {
    let m = (4 * len).next_power_of_two();
    let mut buf: Vec<Complex64> = (0..m)
        .map(|k| {
            let kk = if k <= m / 2 { k } else { m - k };
            let f = kk as f64 / (m as f64 * dt);
            Complex64::new(spec.psd(shape, f).max(0.0).sqrt(), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    let half = len / 2;
    (0..len)
        .map(|k| {
            let idx = (k + m - half) % m;
            buf[idx].re
        })
        .collect()
}

/// Endless stream of coloured noise samples [mV].
pub struct NoiseStream {
    sigma: f64,
    taps_len: usize,
    block: usize,
    kernel: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    rng: ChaCha8Rng,
    /// Last `taps_len - 1` white samples of the previous block.
    history: Vec<f64>,
    ready: Vec<f64>,
    cursor: usize,
    scratch: Vec<Complex64>,
}

impl NoiseStream {
    pub fn new(spec: &NoiseSpec, shape: &PulseShape, dt: f64, span_tp: f64, rng: ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        check_time_step(dt, shape)?;
        let taps = filter_taps(spec, shape, dt, span_tp);
        let taps_len = taps.len();
        let block = (8 * taps_len).max(8192).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(block);
        let inverse = planner.plan_fft_inverse(block);
        let mut kernel: Vec<Complex64> = taps
            .iter()
            .map(|&h| Complex64::new(h, 0.0))
            .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
            .take(block)
            .collect();
        forward.process(&mut kernel);
        let norm = 1.0 / block as f64;
        kernel.iter_mut().for_each(|k| *k *= norm);

        let mut stream = NoiseStream {
            sigma: spec.output_sigma,
            taps_len,
            block,
            kernel,
            forward,
            inverse,
            rng,
            history: Vec::new(),
            ready: Vec::new(),
            cursor: 0,
            scratch: Vec::new(),
        };
        // pre-fill so the first output sample already sees a full filter
        stream.history = (0..taps_len - 1).map(|_| stream.white()).collect();
        Ok(stream)
    }

    #[inline]
    fn white(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Output samples produced per overlap-save segment.
    fn step(&self) -> usize {
        self.block - (self.taps_len - 1)
    }

    /// Two real segments share one complex FFT (real and imaginary parts).
    fn refill(&mut self) {
        let step = self.step();
        let keep = self.taps_len - 1;
        let mut buf = std::mem::take(&mut self.scratch);
        buf.clear();
        // segment A in the real part; B overlaps A's tail by `keep` samples
        buf.extend(self.history.iter().map(|&a| Complex64::new(a, 0.0)));
        for _ in 0..step {
            let a = self.white();
            buf.push(Complex64::new(a, 0.0));
        }
        for i in 0..keep {
            buf[i].im = buf[step + i].re;
        }
        for c in &mut buf[keep..self.block] {
            c.im = self.white();
        }
        let tail = self.block - keep;
        self.history.clear();
        self.history.extend(buf[tail..].iter().map(|c| c.im));

        self.forward.process(&mut buf);
        buf.iter_mut().zip(&self.kernel).for_each(|(x, k)| *x *= k);
        self.inverse.process(&mut buf);

        self.ready.clear();
        self.ready.extend(buf[keep..].iter().map(|c| c.re * self.sigma));
        self.ready.extend(buf[keep..].iter().map(|c| c.im * self.sigma));
        self.scratch = buf;
        self.cursor = 0;
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        if self.sigma == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let mut written = 0;
        while written < out.len() {
            if self.cursor == self.ready.len() {
                self.refill();
            }
            let n = (out.len() - written).min(self.ready.len() - self.cursor);
            out[written..written + n].copy_from_slice(&self.ready[self.cursor..self.cursor + n]);
            written += n;
            self.cursor += n;
        }
    }
}

/// A noise trace of `duration` ns sampled every `dt` ns.
pub fn synth_noise(spec: &NoiseSpec, shape: &PulseShape, duration: f64, dt: f64, seed: u64) -> Result<Vec<f64>> {
    check_time_step(dt, shape)?;
    if !(duration >= 0.0) {
        return Err(Error::domain("duration", "must be >= 0"));
    }
    let n = (duration / dt).round() as usize;
    let mut out = vec![0.0; n];
    if spec.output_sigma == 0.0 {
        spec.validate()?;
        return Ok(out);
    }
    let mut stream = NoiseStream::new(spec, shape, dt, FILTER_SPAN_TP, ChaCha8Rng::seed_from_u64(seed))?;
    stream.fill(&mut out);
    Ok(out)
}
