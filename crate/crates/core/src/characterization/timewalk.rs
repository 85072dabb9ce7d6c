//! Time-walk and time-over-threshold of the leading-edge discriminator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curve::{ScanCurve, ScanKind};
use crate::channel_sim::{derive_seed, ChipSimulator, OverdriveDelay};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWalk {
    /// x: charge [fC], y: mean crossing delay after the strobe [ns].
    pub curve: ScanCurve,
    /// Mean time over threshold per charge [ns].
    pub tot: Vec<f64>,
    pub tot_err: Vec<f64>,
    /// delay(min charge) − delay(max charge) [ns].
    pub walk: f64,
    pub threshold_mv: f64,
}

fn mean_and_error(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Injects each charge `n_inj` times at a threshold of `threshold_fc`
/// (converted to mV with the channel gain) and records the mean delay of
/// the first crossing relative to the injection epoch.
pub fn measure_time_walk(
    sim: &ChipSimulator,
    channel: usize,
    charges: &[f64],
    threshold_fc: f64,
    n_inj: usize,
    seed: u64,
) -> Result<TimeWalk> {
    if charges.len() < 2 {
        return Err(Error::domain("charges", "need at least two charges"));
    }
    if n_inj == 0 {
        return Err(Error::domain("injections", "need at least one trial"));
    }
    if !(threshold_fc > 0.0) {
        return Err(Error::domain("threshold", "must be positive"));
    }
    if let Some(&q) = charges.iter().find(|&&q| !(q > threshold_fc)) {
        return Err(Error::domain(
            "charges",
            format!("{q} fC does not exceed the {threshold_fc} fC threshold"),
        ));
    }
    let v_th = sim.channel(channel)?.gain * threshold_fc;
    let runs = charges
        .par_iter()
        .enumerate()
        .map(|(i, &q)| sim.simulate_injections(channel, q, n_inj, v_th, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;

    let mut delay = Vec::with_capacity(runs.len());
    let mut delay_err = Vec::with_capacity(runs.len());
    let mut tot = Vec::with_capacity(runs.len());
    let mut tot_err = Vec::with_capacity(runs.len());
    for r in &runs {
        if r.hits.is_empty() {
            return Err(Error::Insufficient(format!("{} fC never crossed {v_th} mV", r.q_fc)));
        }
        let t: Vec<f64> = r.hits.iter().map(|h| h.crossing_time).collect();
        let w: Vec<f64> = r.hits.iter().map(|h| h.time_over_threshold).collect();
        let (m, e) = mean_and_error(&t);
        delay.push(m);
        delay_err.push(e);
        let (m, e) = mean_and_error(&w);
        tot.push(m);
        tot_err.push(e);
    }
    let (imin, imax) = extreme_indices(charges);
    let walk = delay[imin] - delay[imax];
    let curve = ScanCurve::new(ScanKind::TimeWalk, charges.to_vec(), delay, delay_err)?;
    Ok(TimeWalk {
        curve,
        tot,
        tot_err,
        walk,
        threshold_mv: v_th,
    })
}

fn extreme_indices(x: &[f64]) -> (usize, usize) {
    let imin = (0..x.len()).min_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap_or(0);
    let imax = (0..x.len()).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap_or(0);
    (imin, imax)
}

/// Solves for the hook's `d0` so that the walk between two pulse amplitudes
/// [mV] at threshold `v_th` equals `target` given the noise-free walk
/// `ideal_walk`. `v_ref`, `exponent` and `max_delay` are taken from
/// `template`.
pub fn calibrate_overdrive_delay(
    template: OverdriveDelay,
    ideal_walk: f64,
    amp_min: f64,
    amp_max: f64,
    v_th: f64,
    target: f64,
) -> Result<OverdriveDelay> {
    template.validate()?;
    if !(amp_min > v_th && amp_max > amp_min) {
        return Err(Error::domain("amplitudes", "need v_th < amp_min < amp_max"));
    }
    let extra = |d0: f64| {
        let d = OverdriveDelay { d0, ..template };
        d.delay(amp_min - v_th) - d.delay(amp_max - v_th)
    };
    let needed = target - ideal_walk;
    if needed < 0.0 {
        return Err(Error::domain(
            "target",
            "below the noise-free walk; a delay hook can only add walk",
        ));
    }
    // extra(d0) is non-decreasing; grow the bracket then bisect
    let mut hi = 1.0;
    while extra(hi) < needed {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Fit("target walk unreachable below max_delay".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if extra(mid) < needed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(OverdriveDelay {
        d0: 0.5 * (lo + hi),
        ..template
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_hits_target() {
        let t = OverdriveDelay {
            d0: 0.0,
            v_ref: 10.0,
            exponent: 0.5,
            max_delay: 10.0,
        };
        let d = calibrate_overdrive_delay(t, 2.6, 72.0, 660.0, 60.0, 4.5).unwrap();
        let extra = d.delay(12.0) - d.delay(600.0);
        assert!((2.6 + extra - 4.5).abs() < 1e-9);
        assert!(calibrate_overdrive_delay(t, 5.0, 72.0, 660.0, 60.0, 4.5).is_err());
    }

    #[test]
    fn stats_helper() {
        let (m, e) = mean_and_error(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((e - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
