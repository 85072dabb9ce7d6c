//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 7
//! rc_code = 3
//!
//! [chip]            # any ChipConfig field; omitted fields take defaults
//! [chip.noise]
//! output_sigma = 2.9
//!
//! [transistor]      # input device for ENC sweeps
//! width = 2000.0
//!
//! [sweep]
//! tp_ns = { start = 3.0, stop = 12.0, step = 0.05 }
//! c_pf = [3.0]
//! i_ua = [2.0]
//!
//! [threshold_scan]
//! charges_fc = [1.0, 1.5, 2.0]
//! window = { half_width_mv = 8.0, points = 21 }
//! n_inj = 10000
//!
//! [noise_scan]
//! thresholds_mv = { start = -9.0, stop = 9.0, step = 0.75 }
//! duration_ns = 1.0e6
//!
//! [time_walk]
//! charges_fc = [1.2, 2.0, 4.0, 11.0]
//! threshold_fc = 1.0
//! n_inj = 1000
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use fesim_core::channel_sim::ChipConfig;
use fesim_core::noise_model::{linear_grid, InputTransistor};

/// A list of values or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Axis {
    pub fn values(&self, field: &str) -> CliResult<Vec<f64>> {
        let v = match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { start, stop, step } => {
                linear_grid(*start, *stop, *step).map_err(|e| CliError::config(format!("{field}: {e}")))?
            }
        };
        if v.is_empty() {
            return Err(CliError::config(format!("{field}: empty grid")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::config(format!("{field}: values must be finite")));
        }
        Ok(v)
    }
}

fn default_order() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_order")]
    pub order: u32,
    pub tp_ns: Axis,
    pub c_pf: Axis,
    pub i_ua: Axis,
    /// Input transistor widths [µm]; defaults to `transistor.width`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_um: Option<Vec<f64>>,
    /// Drain currents [mA]; defaults to `transistor.drain_current`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drain_ma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub half_width_mv: f64,
    pub points: usize,
}

fn default_n_inj() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdScanSpec {
    #[serde(default)]
    pub channel: usize,
    pub charges_fc: Vec<f64>,
    /// Same thresholds for every charge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds_mv: Option<Axis>,
    /// Thresholds centred on gain·q for each charge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(default = "default_n_inj")]
    pub n_inj: usize,
    /// Repeat the scan at each of these RC settings (one gain per setting).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rc_codes: Option<Vec<u8>>,
}

impl ThresholdScanSpec {
    pub fn thresholds_for(&self, gain: f64, q: f64) -> CliResult<Vec<f64>> {
        match (&self.thresholds_mv, &self.window) {
            (Some(a), None) => a.values("threshold_scan.thresholds_mv"),
            (None, Some(w)) => {
                if w.points < 2 || w.half_width_mv.is_nan() || w.half_width_mv <= 0.0 {
                    return Err(CliError::config(
                        "threshold_scan.window: need points >= 2 and half_width_mv > 0",
                    ));
                }
                let centre = gain * q;
                let step = 2.0 * w.half_width_mv / (w.points - 1) as f64;
                Ok((0..w.points)
                    .map(|k| centre - w.half_width_mv + k as f64 * step)
                    .collect())
            }
            _ => Err(CliError::config(
                "threshold_scan: give exactly one of `thresholds_mv` or `window`",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseScanSpec {
    #[serde(default)]
    pub channel: usize,
    pub thresholds_mv: Axis,
    pub duration_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWalkSpec {
    #[serde(default)]
    pub channel: usize,
    pub charges_fc: Vec<f64>,
    pub threshold_fc: f64,
    #[serde(default = "default_walk_inj")]
    pub n_inj: usize,
}

fn default_walk_inj() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Sets every channel's RC code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rc_code: Option<u8>,
    #[serde(default)]
    pub chip: ChipConfig,
    #[serde(default)]
    pub transistor: InputTransistor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_scan: Option<ThresholdScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scan: Option<NoiseScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_walk: Option<TimeWalkSpec>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::runtime(e.to_string()))
    }

    /// Chip configuration with the `rc_code` shortcut applied.
    pub fn resolved_chip(&self) -> CliResult<ChipConfig> {
        let mut chip = self.chip.clone();
        if let Some(code) = self.rc_code {
            chip.set_rc_code(code);
        }
        chip.validate()?;
        Ok(chip)
    }

    /// Seed precedence: explicit override, then the file, then the chip seed.
    pub fn effective_seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed.or(self.seed).unwrap_or(self.chip.rng_seed)
    }
}
