use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use super::config::{ChannelConfig, ChipConfig};
use super::noise::{check_time_step, NoiseStream, FILTER_SPAN_TP};
use super::{MIN_RATE_DURATION_TP, SAMPLING_PERIOD};
use crate::error::{Error, Result};
use crate::shaping::PulseShape;

const STREAM_NOISE: u64 = 1;
const STREAM_JITTER: u64 = 2;

/// One discriminator firing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRecord {
    pub channel: usize,
    pub trial: usize,
    pub q_fc: f64,
    pub vth_mv: f64,
    /// Leading-edge time relative to the strobe [ns].
    pub crossing_time: f64,
    /// [ns]
    pub time_over_threshold: f64,
    /// Comparator output sampled every 800 ps from the strobe.
    pub sampled_bins: Vec<bool>,
}

impl HitRecord {
    pub fn bits_string(&self) -> String {
        self.sampled_bins.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Result of `n` charge injections at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRun {
    pub channel: usize,
    pub q_fc: f64,
    pub vth_mv: f64,
    pub trials: usize,
    pub fired: usize,
    pub occupancy: f64,
    pub hits: Vec<HitRecord>,
}

/// Upward noise crossings of one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateMeasurement {
    pub vth_mv: f64,
    pub counts: u64,
    pub duration_ns: f64,
    pub rate_mhz: f64,
    /// Set when the trace is shorter than 10⁵ peaking times.
    pub low_statistics: bool,
}

/// Bins of the 800 ps sampler that see the comparator high:
/// bin k is set iff `crossing ≤ phase + 0.8·k < crossing + ToT`. The
/// sequence ends at the last set bin.
pub fn sample_slvs(hit: &HitRecord, phase: f64) -> Result<Vec<bool>> {
    if !(0.0..SAMPLING_PERIOD).contains(&phase) {
        return Err(Error::domain("phase", format!("{phase} outside [0, 0.8) ns")));
    }
    Ok(sample_interval(hit.crossing_time, hit.time_over_threshold, phase))
}

fn sample_interval(start: f64, tot: f64, phase: f64) -> Vec<bool> {
    if !(tot > 0.0) {
        return Vec::new();
    }
    let end = start + tot;
    // last bin strictly before `end`
    let last = ((end - phase) / SAMPLING_PERIOD).ceil() as i64 - 1;
    if last < 0 {
        return Vec::new();
    }
    let bits: Vec<bool> = (0..=last)
        .map(|k| {
            let t = phase + SAMPLING_PERIOD * k as f64;
            t >= start && t < end
        })
        .collect();
    match bits.iter().rposition(|&b| b) {
        Some(p) => bits[..=p].to_vec(),
        None => Vec::new(),
    }
}

/// Simulator over an immutable, validated chip configuration.
#[derive(Debug, Clone)]
pub struct ChipSimulator {
    chip: ChipConfig,
    shapes: Vec<PulseShape>,
}

impl ChipSimulator {
    pub fn new(chip: ChipConfig) -> Result<Self> {
        chip.validate()?;
        let shapes = chip
            .channels
            .iter()
            .map(|ch| chip.pulse_shape(ch))
            .collect::<Result<Vec<_>>>()?;
        for s in &shapes {
            check_time_step(chip.timing.dt, s)?;
        }
        Ok(ChipSimulator { chip, shapes })
    }

    pub fn chip(&self) -> &ChipConfig {
        &self.chip
    }

    pub fn channel(&self, ch: usize) -> Result<&ChannelConfig> {
        self.chip.channel(ch)
    }

    pub fn shape(&self, ch: usize) -> Result<&PulseShape> {
        self.shapes
            .get(ch)
            .ok_or_else(|| Error::domain("channel", format!("{ch} outside 0..=5")))
    }

    /// Shaped pulse amplitude [mV] above the baseline for a charge `q` [fC]
    /// injected at `t0`.
    pub fn analog_pulse(&self, ch: usize, q: f64, t0: f64, t: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(Error::domain("charge", format!("must be >= 0, got {q}")));
        }
        let gain = self.channel(ch)?.gain;
        Ok(gain * q * self.shape(ch)?.response(t - t0))
    }

    /// Noise-free discriminator input [mV], including the channel's DC level.
    pub fn discriminator_input(&self, ch: usize, q: f64, t0: f64, t: f64) -> Result<f64> {
        Ok(self.channel(ch)?.dc_offset + self.analog_pulse(ch, q, t0, t)?)
    }

    fn rng(seed: u64, ch: usize, purpose: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((ch as u64) << 8) | purpose);
        rng
    }

    /// Endless noise stream for one channel.
    pub fn noise_stream(&self, ch: usize, seed: u64) -> Result<NoiseStream> {
        let shape = self.shape(ch)?;
        NoiseStream::new(
            &self.chip.noise,
            shape,
            self.chip.timing.dt,
            FILTER_SPAN_TP,
            Self::rng(seed, ch, STREAM_NOISE),
        )
    }

    /// Noise trace of `duration` ns for one channel.
    pub fn synth_noise(&self, ch: usize, duration: f64, seed: u64) -> Result<Vec<f64>> {
        if !(duration >= 0.0) {
            return Err(Error::domain("duration", "must be >= 0"));
        }
        let n = (duration / self.chip.timing.dt).round() as usize;
        let mut out = vec![0.0; n];
        self.noise_stream(ch, seed)?.fill(&mut out);
        Ok(out)
    }

    /// Injects charge `q` [fC] `n` times and discriminates against `v_th`
    /// [mV above baseline]. Each trial is a window of `trace_span·tp`
    /// starting at the strobe; consecutive windows draw consecutive
    /// stretches of one continuous noise stream. The injection epoch is
    /// jittered uniformly within one time step.
    pub fn simulate_injections(&self, ch: usize, q: f64, n: usize, v_th: f64, seed: u64) -> Result<InjectionRun> {
        if n == 0 {
            return Err(Error::domain("injections", "need at least one trial"));
        }
        if !(q >= 0.0) {
            return Err(Error::domain("charge", format!("must be >= 0, got {q}")));
        }
        let cfg = self.channel(ch)?;
        let shape = *self.shape(ch)?;
        let dt = self.chip.timing.dt;
        let len = (self.chip.timing.trace_span * shape.peaking_time() / dt).ceil() as usize;
        let amplitude = cfg.gain * q;
        let delay = self
            .chip
            .overdrive_delay
            .map(|d| d.delay(amplitude - v_th))
            .unwrap_or(0.0);
        let phase = self.chip.timing.sampling_phase;

        let mut stream = self.noise_stream(ch, seed)?;
        let mut jitter = Self::rng(seed, ch, STREAM_JITTER);
        let mut trace = vec![0.0; len];
        let mut hits = Vec::new();

        for trial in 0..n {
            stream.fill(&mut trace);
            let t0 = jitter.random::<f64>() * dt;
            add_pulse(&mut trace, &shape, amplitude, t0, dt);
            if let Some((rise, fall)) = first_pulse(&trace, v_th, dt) {
                let crossing = rise - t0 + delay;
                let tot = fall - rise;
                hits.push(HitRecord {
                    channel: ch,
                    trial,
                    q_fc: q,
                    vth_mv: v_th,
                    crossing_time: crossing,
                    time_over_threshold: tot,
                    sampled_bins: sample_interval(crossing, tot, phase),
                });
            }
        }
        Ok(InjectionRun {
            channel: ch,
            q_fc: q,
            vth_mv: v_th,
            trials: n,
            fired: hits.len(),
            occupancy: hits.len() as f64 / n as f64,
            hits,
        })
    }

    /// Rate of upward crossings of `v_th` by the pure-noise trace.
    pub fn noise_rate(&self, ch: usize, v_th: f64, duration: f64, seed: u64) -> Result<RateMeasurement> {
        if !(duration > 0.0) {
            return Err(Error::domain("duration", "must be positive"));
        }
        let tp = self.shape(ch)?.peaking_time();
        let dt = self.chip.timing.dt;
        let total = (duration / dt).round() as usize;
        let mut stream = self.noise_stream(ch, seed)?;
        let mut chunk = vec![0.0; 1 << 16];
        let mut counts = 0u64;
        let mut prev: Option<f64> = None;
        let mut remaining = total;
        while remaining > 0 {
            let m = remaining.min(chunk.len());
            stream.fill(&mut chunk[..m]);
            for &x in &chunk[..m] {
                if let Some(p) = prev {
                    if p <= v_th && x > v_th {
                        counts += 1;
                    }
                }
                prev = Some(x);
            }
            remaining -= m;
        }
        let duration_ns = total as f64 * dt;
        Ok(RateMeasurement {
            vth_mv: v_th,
            counts,
            duration_ns,
            rate_mhz: counts as f64 / duration_ns * 1e3,
            low_statistics: duration_ns < MIN_RATE_DURATION_TP * tp,
        })
    }
}

/// Adds `amplitude·w(k·dt − t0)` to each sample. The exponential factor
/// is advanced geometrically instead of being re-evaluated per sample.
fn add_pulse(trace: &mut [f64], shape: &PulseShape, amplitude: f64, t0: f64, dt: f64) {
    if amplitude == 0.0 {
        return;
    }
    let n = shape.order() as i32;
    let nf = f64::from(shape.order());
    let tp = shape.peaking_time();
    let k0 = (t0 / dt).floor() as usize + 1;
    if k0 >= trace.len() {
        return;
    }
    let x0 = (k0 as f64 * dt - t0) / tp;
    let dx = dt / tp;
    let ratio = (-nf * dx).exp();
    let mut decay = amplitude * (nf * (1.0 - x0)).exp();
    for (i, v) in trace[k0..].iter_mut().enumerate() {
        let x = x0 + i as f64 * dx;
        *v += x.powi(n) * decay;
        decay *= ratio;
    }
}

/// First interval where `trace > v_th`, as interpolated (rise, fall) times
/// from the start of the trace. A trace already high at sample 0 rises at
/// 0; one still high at the end falls at the last sample.
fn first_pulse(trace: &[f64], v_th: f64, dt: f64) -> Option<(f64, f64)> {
    let k = trace.iter().position(|&v| v > v_th)?;
    let rise = if k == 0 {
        0.0
    } else {
        let (a, b) = (trace[k - 1], trace[k]);
        (k - 1) as f64 * dt + dt * (v_th - a) / (b - a)
    };
    let fall = match trace[k..].iter().position(|&v| v <= v_th) {
        Some(off) => {
            let j = k + off;
            let (a, b) = (trace[j - 1], trace[j]);
            (j - 1) as f64 * dt + dt * (a - v_th) / (a - b)
        }
        None => (trace.len() - 1) as f64 * dt,
    };
    Some((rise, fall.max(rise)))
}

/// CSV with header `channel,trial,q_fc,vth_mv,crossing_ns,tot_ns,bits`.
pub fn write_hits_csv<'a, W: Write>(hits: impl IntoIterator<Item = &'a HitRecord>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["channel", "trial", "q_fc", "vth_mv", "crossing_ns", "tot_ns", "bits"])?;
    for h in hits {
        w.write_record([
            h.channel.to_string(),
            h.trial.to_string(),
            h.q_fc.to_string(),
            h.vth_mv.to_string(),
            h.crossing_time.to_string(),
            h.time_over_threshold.to_string(),
            h.bits_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
