use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::noise::NoiseSpec;
use crate::error::{Error, Result};
use crate::shaping::{PulseShape, RcCodeMap, ShaperConfig};

pub const NUM_CHANNELS: usize = 6;
pub const DAC_MAX: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FeedbackResistor {
    #[default]
    #[serde(rename = "50k")]
    R50k,
    #[serde(rename = "25k")]
    R25k,
}

impl FeedbackResistor {
    pub fn kilo_ohms(self) -> f64 {
        match self {
            FeedbackResistor::R50k => 50.0,
            FeedbackResistor::R25k => 25.0,
        }
    }

    pub fn register_value(self) -> u8 {
        match self {
            FeedbackResistor::R50k => 0,
            FeedbackResistor::R25k => 1,
        }
    }

    pub fn from_register(v: u8) -> Result<Self> {
        match v {
            0 => Ok(FeedbackResistor::R50k),
            1 => Ok(FeedbackResistor::R25k),
            _ => Err(Error::config(
                "FB_SELECT",
                format!("must be 0 (50k) or 1 (25k), got {v}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Chain gain at the current settings [mV/fC].
    pub gain: f64,
    pub rc_code: u8,
    #[serde(default)]
    pub feedback_resistor: FeedbackResistor,
    #[serde(default)]
    pub threshold_dac_a: u8,
    #[serde(default)]
    pub threshold_dac_b: u8,
    /// DC level at the discriminator input relative to nominal [mV].
    #[serde(default)]
    pub dc_offset: f64,
    pub channel_index: u8,
}

impl ChannelConfig {
    pub fn nominal(channel_index: u8) -> Self {
        ChannelConfig {
            gain: 60.0,
            rc_code: 3,
            feedback_resistor: FeedbackResistor::R50k,
            threshold_dac_a: 0,
            threshold_dac_b: 0,
            dc_offset: 0.0,
            channel_index,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ch = self.channel_index;
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(Error::config(format!("channels[{ch}].gain"), "must be positive"));
        }
        if self.rc_code > RcCodeMap::MAX_CODE {
            return Err(Error::config(format!("channels[{ch}].rc_code"), "must be in 0..=6"));
        }
        if usize::from(ch) >= NUM_CHANNELS {
            return Err(Error::config("channel_index", format!("{ch} outside 0..=5")));
        }
        if !self.dc_offset.is_finite() {
            return Err(Error::config(format!("channels[{ch}].dc_offset"), "must be finite"));
        }
        Ok(())
    }
}

/// LSB sizes of the threshold DACs [mV].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DacLsb {
    pub threshold_a: f64,
    pub threshold_b: f64,
    pub global: f64,
}

impl Default for DacLsb {
    fn default() -> Self {
        DacLsb {
            threshold_a: 0.5,
            threshold_b: 0.5,
            global: 0.5,
        }
    }
}

/// Optional comparator delay growing at small overdrive:
/// `δ = d0·(v_ref / v_over)^p`, capped at `max_delay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverdriveDelay {
    /// [ns]
    pub d0: f64,
    /// [mV]
    pub v_ref: f64,
    pub exponent: f64,
    /// [ns]
    pub max_delay: f64,
}

impl OverdriveDelay {
    pub fn delay(&self, overdrive_mv: f64) -> f64 {
        if overdrive_mv <= 0.0 {
            return self.max_delay;
        }
        (self.d0 * (self.v_ref / overdrive_mv).powf(self.exponent)).min(self.max_delay)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 >= 0.0 && self.v_ref > 0.0 && self.exponent >= 0.0 && self.max_delay >= 0.0) {
            return Err(Error::config(
                "overdrive_delay",
                "d0, exponent, max_delay >= 0 and v_ref > 0",
            ));
        }
        Ok(())
    }
}

/// Time discretisation of the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    /// [ns]
    pub dt: f64,
    /// Trace length per injection, in units of the peaking time.
    pub trace_span: f64,
    /// Phase of the 800 ps sampling clock relative to the strobe [ns].
    pub sampling_phase: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            dt: 0.1,
            trace_span: super::DEFAULT_TRACE_SPAN,
            sampling_phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChipConfig {
    pub channels: Vec<ChannelConfig>,
    #[serde(default)]
    pub global_offset_dac: u8,
    /// [fF]
    pub calibration_cap: f64,
    /// Charge at injection DAC code 255 [fC].
    pub injection_dac_fullscale: f64,
    /// Peak-to-peak spread of channel DC offsets [mV].
    pub offset_spread_pkpk: f64,
    pub rng_seed: u64,
    #[serde(default = "default_order")]
    pub shaper_order: u32,
    #[serde(default)]
    pub rc_map: RcCodeMap,
    #[serde(default)]
    pub dac_lsb: DacLsb,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overdrive_delay: Option<OverdriveDelay>,
}

fn default_order() -> u32 {
    3
}

impl Default for ChipConfig {
    fn default() -> Self {
        ChipConfig {
            channels: (0..NUM_CHANNELS as u8).map(ChannelConfig::nominal).collect(),
            global_offset_dac: 0,
            calibration_cap: 52.0,
            injection_dac_fullscale: 5.1,
            offset_spread_pkpk: 100.0,
            rng_seed: 1,
            shaper_order: 3,
            rc_map: RcCodeMap::default(),
            dac_lsb: DacLsb::default(),
            noise: NoiseSpec::default(),
            timing: TimingConfig::default(),
            overdrive_delay: None,
        }
    }
}

impl ChipConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != NUM_CHANNELS {
            return Err(Error::config(
                "channels",
                format!("exactly {NUM_CHANNELS} channels required, got {}", self.channels.len()),
            ));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if usize::from(ch.channel_index) != i {
                return Err(Error::config(
                    format!("channels[{i}].channel_index"),
                    format!("expected {i}, got {}", ch.channel_index),
                ));
            }
            ch.validate()?;
        }
        if !(self.calibration_cap > 0.0) {
            return Err(Error::config("calibration_cap", "must be positive"));
        }
        if !(self.injection_dac_fullscale > 0.0) {
            return Err(Error::config("injection_dac_fullscale", "must be positive"));
        }
        if !(self.offset_spread_pkpk >= 0.0) {
            return Err(Error::config("offset_spread_pkpk", "must be >= 0"));
        }
        let l = self.dac_lsb;
        if !(l.threshold_a > 0.0 && l.threshold_b > 0.0 && l.global >= 0.0) {
            return Err(Error::config("dac_lsb", "LSB sizes must be positive"));
        }
        if !(self.timing.dt > 0.0 && self.timing.trace_span > 1.0) {
            return Err(Error::config("timing", "dt > 0 and trace_span > 1 required"));
        }
        if !(0.0..super::SAMPLING_PERIOD).contains(&self.timing.sampling_phase) {
            return Err(Error::config("timing.sampling_phase", "must be in [0, 0.8) ns"));
        }
        if let Some(d) = &self.overdrive_delay {
            d.validate()?;
        }
        ShaperConfig::new(self.shaper_order, 1.0)?;
        self.noise.validate()
    }

    pub fn channel(&self, index: usize) -> Result<&ChannelConfig> {
        self.channels
            .get(index)
            .ok_or_else(|| Error::domain("channel", format!("{index} outside 0..=5")))
    }

    pub fn shaper(&self, ch: &ChannelConfig) -> Result<ShaperConfig> {
        ShaperConfig::from_rc_code(self.shaper_order, ch.rc_code, &self.rc_map)
    }

    pub fn pulse_shape(&self, ch: &ChannelConfig) -> Result<PulseShape> {
        PulseShape::new(self.shaper(ch)?)
    }

    /// Draws per-channel DC offsets from uniform(−spread/2, +spread/2)
    /// using the chip seed. Same seed, same offsets.
    pub fn draw_offsets(&mut self) {
        let half = self.offset_spread_pkpk / 2.0;
        for ch in &mut self.channels {
            let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
            rng.set_stream(0x0ff5_e700 + u64::from(ch.channel_index));
            ch.dc_offset = if half > 0.0 { rng.random_range(-half..half) } else { 0.0 };
        }
    }

    /// Sets every channel's RC code and recomputes nothing else.
    pub fn set_rc_code(&mut self, code: u8) {
        self.channels.iter_mut().for_each(|c| c.rc_code = code);
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ChipConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Charge delivered by the injection DAC [fC]: linear in the code.
///
/// The DAC current develops a voltage step `V = Q / C_cal` on the per-channel
/// calibration capacitor; see [`injection_step_voltage`].
pub fn injected_charge(dac_code: u32, chip: &ChipConfig) -> Result<f64> {
    if dac_code > u32::from(DAC_MAX) {
        return Err(Error::domain(
            "injection dac",
            format!("code {dac_code} outside 0..=255"),
        ));
    }
    Ok(f64::from(dac_code) / f64::from(DAC_MAX) * chip.injection_dac_fullscale)
}

/// Voltage step [mV] across the calibration capacitor for a charge [fC].
pub fn injection_step_voltage(q_fc: f64, chip: &ChipConfig) -> f64 {
    q_fc / chip.calibration_cap * 1e3
}

/// Injection DAC code delivering exactly `q_fc`, if one exists.
pub fn injection_code_for(q_fc: f64, chip: &ChipConfig) -> Option<u8> {
    let code = q_fc / chip.injection_dac_fullscale * f64::from(DAC_MAX);
    let rounded = code.round();
    ((code - rounded).abs() < 1e-9 && (0.0..=255.0).contains(&rounded)).then_some(rounded as u8)
}

/// Effective threshold relative to the channel baseline [mV]:
/// `lsb_a·A − lsb_b·B + lsb_g·G − dc_offset`.
pub fn threshold_voltage(ch: &ChannelConfig, chip: &ChipConfig) -> f64 {
    let l = chip.dac_lsb;
    l.threshold_a * f64::from(ch.threshold_dac_a) - l.threshold_b * f64::from(ch.threshold_dac_b)
        + l.global * f64::from(chip.global_offset_dac)
        - ch.dc_offset
}

/// Register-map view of the I2C-accessible settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterMap {
    pub registers: BTreeMap<String, u8>,
}

pub const REG_GLOBAL_OFFSET: &str = "GLOBAL_OFFSET";
pub const REG_RC_CODE: &str = "RC_CODE";
pub const REG_FB_SELECT: &str = "FB_SELECT";

fn reg_thr(ch: usize, which: char) -> String {
    format!("CH{ch}_THR_{which}")
}

/// All register names, in dump order.
pub fn register_names() -> Vec<String> {
    let mut names: Vec<String> = (0..NUM_CHANNELS)
        .flat_map(|c| [reg_thr(c, 'A'), reg_thr(c, 'B')])
        .collect();
    names.extend([REG_GLOBAL_OFFSET, REG_RC_CODE, REG_FB_SELECT].map(String::from));
    names
}

impl RegisterMap {
    /// Reads the registers out of a configuration. RC code and feedback
    /// select are chip-wide, so every channel must agree on them.
    pub fn from_chip(chip: &ChipConfig) -> Result<Self> {
        chip.validate()?;
        let first = &chip.channels[0];
        if chip
            .channels
            .iter()
            .any(|c| c.rc_code != first.rc_code || c.feedback_resistor != first.feedback_resistor)
        {
            return Err(Error::config(
                "channels",
                "RC code and feedback select are chip-wide registers; channels disagree",
            ));
        }
        let mut registers = BTreeMap::new();
        for (i, ch) in chip.channels.iter().enumerate() {
            registers.insert(reg_thr(i, 'A'), ch.threshold_dac_a);
            registers.insert(reg_thr(i, 'B'), ch.threshold_dac_b);
        }
        registers.insert(REG_GLOBAL_OFFSET.into(), chip.global_offset_dac);
        registers.insert(REG_RC_CODE.into(), first.rc_code);
        registers.insert(REG_FB_SELECT.into(), first.feedback_resistor.register_value());
        Ok(RegisterMap { registers })
    }

    /// Parses `NAME = value` lines (a TOML table, optionally under
    /// `[registers]`). Names are checked and values range-checked.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = toml::from_str(text)?;
        let table = match value.get("registers") {
            Some(toml::Value::Table(t)) => t.clone(),
            Some(_) => return Err(Error::config("registers", "must be a table")),
            None => value,
        };
        let known = register_names();
        let mut registers = BTreeMap::new();
        for (name, v) in table {
            if !known.contains(&name) {
                return Err(Error::config(name, "unknown register"));
            }
            let n = v
                .as_integer()
                .ok_or_else(|| Error::config(name.clone(), "value must be an integer"))?;
            let byte = u8::try_from(n)
                .map_err(|_| Error::config(name.clone(), format!("value {n} outside 8-bit range 0..=255")))?;
            registers.insert(name, byte);
        }
        Ok(RegisterMap { registers })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            registers: &'a BTreeMap<String, u8>,
        }
        Ok(toml::to_string(&Doc {
            registers: &self.registers,
        })?)
    }

    /// Writes the registers into a configuration. Registers absent from
    /// the map leave the configuration unchanged.
    pub fn apply(&self, chip: &mut ChipConfig) -> Result<()> {
        for (name, &v) in &self.registers {
            match name.as_str() {
                REG_GLOBAL_OFFSET => chip.global_offset_dac = v,
                REG_RC_CODE => {
                    if v > RcCodeMap::MAX_CODE {
                        return Err(Error::config(REG_RC_CODE, format!("{v} outside 0..=6")));
                    }
                    chip.set_rc_code(v);
                }
                REG_FB_SELECT => {
                    let fb = FeedbackResistor::from_register(v)?;
                    chip.channels.iter_mut().for_each(|c| c.feedback_resistor = fb);
                }
                other => {
                    let parsed = other
                        .strip_prefix("CH")
                        .and_then(|r| r.split_once("_THR_"))
                        .and_then(|(c, w)| c.parse::<usize>().ok().map(|c| (c, w)));
                    match parsed {
                        Some((c, "A")) if c < NUM_CHANNELS => chip.channels[c].threshold_dac_a = v,
                        Some((c, "B")) if c < NUM_CHANNELS => chip.channels[c].threshold_dac_b = v,
                        _ => return Err(Error::config(other, "unknown register")),
                    }
                }
            }
        }
        chip.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injection_dac_map() {
        let chip = ChipConfig::default();
        assert_eq!(injected_charge(0, &chip).unwrap(), 0.0);
        assert!((injected_charge(255, &chip).unwrap() - 5.1).abs() < 1e-12);
        assert!((injected_charge(50, &chip).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(injection_code_for(1.0, &chip), Some(50));
        assert_eq!(injection_code_for(1.5, &chip), Some(75));
        assert_eq!(injection_code_for(2.0, &chip), Some(100));
        assert_eq!(injection_code_for(1.01, &chip), None);
        assert!(injected_charge(256, &chip).is_err());
        assert!((injection_step_voltage(1.0, &chip) - 1000.0 / 52.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_examples() {
        let chip = ChipConfig::default();
        let mut ch = ChannelConfig::nominal(0);
        assert_eq!(threshold_voltage(&ch, &chip), 0.0);

        ch.dc_offset = 50.0;
        ch.threshold_dac_a = 100;
        assert!(threshold_voltage(&ch, &chip).abs() < 1e-12);
        ch.dc_offset = -50.0;
        ch.threshold_dac_a = 0;
        ch.threshold_dac_b = 100;
        assert!(threshold_voltage(&ch, &chip).abs() < 1e-12);

        let mut prev = f64::NEG_INFINITY;
        for a in [0u8, 10, 100, 255] {
            ch.threshold_dac_a = a;
            let v = threshold_voltage(&ch, &chip);
            assert!(v > prev);
            prev = v;
        }
        let mut prev = f64::INFINITY;
        for b in [0u8, 10, 100, 255] {
            ch.threshold_dac_b = b;
            let v = threshold_voltage(&ch, &chip);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn dacs_compensate_full_offset_spread() {
        let chip = ChipConfig::default();
        let l = chip.dac_lsb;
        let span = l.threshold_a * 255.0 + l.threshold_b * 255.0;
        assert!(span >= chip.offset_spread_pkpk);
    }

    #[test]
    fn offsets_drawn_within_spread_and_reproducible() {
        let mut a = ChipConfig::default();
        a.draw_offsets();
        let mut b = ChipConfig::default();
        b.draw_offsets();
        assert_eq!(a, b);
        assert!(a.channels.iter().all(|c| c.dc_offset.abs() <= 50.0));
        assert!(a.channels.iter().any(|c| c.dc_offset != 0.0));
        let mut c = ChipConfig {
            rng_seed: 99,
            ..ChipConfig::default()
        };
        c.draw_offsets();
        assert_ne!(a.channels[0].dc_offset, c.channels[0].dc_offset);
    }

    #[test]
    fn chip_validation() {
        let mut chip = ChipConfig::default();
        chip.channels.pop();
        assert!(chip.validate().is_err());
        let chip = ChipConfig {
            calibration_cap: 0.0,
            ..ChipConfig::default()
        };
        assert!(chip.validate().is_err());
        let mut chip = ChipConfig::default();
        chip.channels[2].gain = 0.0;
        assert!(chip.validate().is_err());
    }

    #[test]
    fn register_dump_names() {
        let regs = RegisterMap::from_chip(&ChipConfig::default()).unwrap();
        assert_eq!(regs.registers.len(), 15);
        let mut expected = register_names();
        expected.sort();
        assert_eq!(regs.registers.keys().cloned().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn register_round_trip() {
        let mut chip = ChipConfig::default();
        chip.channels[1].threshold_dac_a = 17;
        chip.channels[4].threshold_dac_b = 200;
        chip.global_offset_dac = 9;
        let text = RegisterMap::from_chip(&chip).unwrap().to_toml_string().unwrap();
        let mut loaded = ChipConfig::default();
        RegisterMap::from_toml_str(&text).unwrap().apply(&mut loaded).unwrap();
        assert_eq!(loaded, chip);
    }

    #[test]
    fn register_errors() {
        assert!(RegisterMap::from_toml_str("CH0_THR_A = 256").is_err());
        assert!(RegisterMap::from_toml_str("CH0_THR_A = -1").is_err());
        assert!(RegisterMap::from_toml_str("CH9_THR_A = 1").is_err());
        assert!(RegisterMap::from_toml_str("BOGUS = 1").is_err());
        let mut chip = ChipConfig::default();
        assert!(RegisterMap::from_toml_str("RC_CODE = 7")
            .unwrap()
            .apply(&mut chip)
            .is_err());
        assert!(RegisterMap::from_toml_str("FB_SELECT = 2")
            .unwrap()
            .apply(&mut chip)
            .is_err());

        let mut mixed = ChipConfig::default();
        mixed.channels[3].rc_code = 5;
        assert!(RegisterMap::from_chip(&mixed).is_err());
    }

    #[test]
    fn chip_toml_round_trip() {
        let mut chip = ChipConfig::default();
        chip.draw_offsets();
        chip.overdrive_delay = Some(OverdriveDelay {
            d0: 1.0,
            v_ref: 10.0,
            exponent: 1.0,
            max_delay: 20.0,
        });
        let text = chip.to_toml_string().unwrap();
        assert_eq!(ChipConfig::from_toml_str(&text).unwrap(), chip);
    }

    #[test]
    fn overdrive_delay_shape() {
        let d = OverdriveDelay {
            d0: 2.0,
            v_ref: 10.0,
            exponent: 1.0,
            max_delay: 15.0,
        };
        assert_eq!(d.delay(10.0), 2.0);
        assert_eq!(d.delay(20.0), 1.0);
        assert_eq!(d.delay(0.0), 15.0);
        assert_eq!(d.delay(0.1), 15.0);
    }
}
