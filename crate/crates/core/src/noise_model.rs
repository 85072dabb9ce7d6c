//! Analytic equivalent-noise-charge model of the front end.
//!
//! Two contributions are kept:
//!
//! * parallel (shot) noise of the sensor leakage, one-sided PSD `2qI`,
//!   giving `ENC_p² = q·I·A_p·tp`;
//! * series (channel thermal) noise of the input transistor, one-sided PSD
//!   `e_n² = 4kTγ/gm` at the gate, giving `ENC_s² = e_n²·C²·A_s / (2·tp)`,
//!
//! where `A_p = (1/tp)∫w²dt` and `A_s = tp∫(dw/dt)²dt` are the dimensionless
//! shape factors of the weighting function. The factor ½ relative to the
//! PSD comes from integrating a one-sided spectrum against |W(f)|².
//!
//! 1/f noise and feedback-resistor noise are not part of the model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::shaping::{PulseShape, ShaperConfig};
use crate::units::{self, BOLTZMANN, BOLTZMANN_EV, ELEMENTARY_CHARGE};

/// Leakage damage constant α at +20 °C [A/cm].
pub const DEFAULT_ALPHA: f64 = 4.0e-17;

/// Effective band gap for leakage temperature scaling [eV].
pub const DEFAULT_EG_EFF: f64 = 1.21;

/// Reference temperature of published damage constants [K].
pub const LEAKAGE_REF_TEMPERATURE: f64 = 293.15;

/// Silicon pad sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    /// [µm]
    pub thickness: f64,
    /// [pF]
    pub capacitance: f64,
    /// 1-MeV neutron-equivalent fluence [n/cm²]
    pub fluence: f64,
    pub cce: f64,
    /// [cm²]
    pub active_area: f64,
    /// Leakage current [µA] at `temperature_ref`.
    pub leakage_ref: f64,
    /// [K]
    pub temperature_ref: f64,
}

impl SensorModel {
    /// 1.7 × 1.7 mm² pad on 150 µm material.
    pub fn pad_150um() -> Self {
        SensorModel {
            thickness: 150.0,
            capacitance: 4.0,
            fluence: 0.0,
            cce: 1.0,
            active_area: 0.17 * 0.17,
            leakage_ref: 0.0,
            temperature_ref: LEAKAGE_REF_TEMPERATURE,
        }
    }

    /// 1.7 × 1.7 mm² pad on 290 µm material.
    pub fn pad_290um() -> Self {
        SensorModel {
            thickness: 290.0,
            capacitance: 2.0,
            ..Self::pad_150um()
        }
    }

    pub fn with_fluence(mut self, fluence: f64) -> Self {
        self.fluence = fluence;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.thickness > 0.0) {
            return Err(Error::config("sensor.thickness", "must be positive"));
        }
        if !(self.capacitance > 0.0) {
            return Err(Error::config("sensor.capacitance", "must be positive"));
        }
        if !(self.cce > 0.0 && self.cce <= 1.0) {
            return Err(Error::config("sensor.cce", "must lie in (0, 1]"));
        }
        if !(self.fluence >= 0.0) {
            return Err(Error::config("sensor.fluence", "must be >= 0"));
        }
        if !(self.active_area > 0.0) {
            return Err(Error::config("sensor.active_area", "must be positive"));
        }
        if !(self.leakage_ref >= 0.0) {
            return Err(Error::config("sensor.leakage_ref", "must be >= 0"));
        }
        if !(self.temperature_ref > 0.0) {
            return Err(Error::config("sensor.temperature_ref", "must be positive"));
        }
        Ok(())
    }

    /// Depleted volume [cm³].
    pub fn volume_cm3(&self) -> f64 {
        self.active_area * self.thickness * 1e-4
    }

    /// `leakage_ref` scaled to another temperature.
    pub fn leakage_at(&self, temperature: f64, eg_eff: f64) -> Result<f64> {
        scale_leakage_temperature(self.leakage_ref, self.temperature_ref, temperature, eg_eff)
    }
}

/// Technology constants for the input transistor model. Defaults are
/// representative of a 65 nm NMOS at −20 °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessParams {
    /// Gate oxide capacitance [fF/µm²].
    pub cox_per_area: f64,
    pub subthreshold_slope_factor: f64,
    /// Specific current per unit W/L [µA].
    pub tech_current: f64,
    /// Channel thermal-noise factor γ.
    pub excess_noise_gamma: f64,
    /// [K]
    pub temperature: f64,
    /// Gate overlap capacitance per unit width [fF/µm].
    pub overlap_per_width: f64,
    /// Include the transistor's gate capacitance in the series-noise load.
    pub include_gate_capacitance: bool,
    /// Reserved for a 1/f coefficient. Only 0 is accepted.
    pub flicker_kf: f64,
}

impl Default for ProcessParams {
    fn default() -> Self {
        ProcessParams {
            cox_per_area: 10.0,
            subthreshold_slope_factor: 1.3,
            tech_current: 0.5,
            excess_noise_gamma: 0.8,
            temperature: units::celsius_to_kelvin(-20.0),
            overlap_per_width: 0.0,
            include_gate_capacitance: true,
            flicker_kf: 0.0,
        }
    }
}

impl ProcessParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("process.cox_per_area", self.cox_per_area),
            ("process.subthreshold_slope_factor", self.subthreshold_slope_factor),
            ("process.tech_current", self.tech_current),
            ("process.excess_noise_gamma", self.excess_noise_gamma),
            ("process.temperature", self.temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.overlap_per_width >= 0.0) {
            return Err(Error::config("process.overlap_per_width", "must be >= 0"));
        }
        if self.flicker_kf != 0.0 {
            return Err(Error::config(
                "process.flicker_kf",
                "1/f noise is not modeled; must be 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputTransistor {
    /// [µm]
    pub width: f64,
    /// [µm]
    pub length: f64,
    /// [mA]
    pub drain_current: f64,
    #[serde(default)]
    pub process: ProcessParams,
}

impl Default for InputTransistor {
    /// 2000/0.2 µm NMOS biased at 2 mA.
    fn default() -> Self {
        InputTransistor {
            width: 2000.0,
            length: 0.2,
            drain_current: 2.0,
            process: ProcessParams::default(),
        }
    }
}

impl InputTransistor {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("transistor.width", self.width),
            ("transistor.length", self.length),
            ("transistor.drain_current", self.drain_current),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        self.process.validate()
    }

    /// Inversion coefficient Id / (I_spec·W/L).
    pub fn inversion_coefficient(&self) -> f64 {
        (self.drain_current * 1e3) / (self.process.tech_current * self.width / self.length)
    }

    /// Gate capacitance seen at the input [pF]: 2/3·W·L·Cox plus overlap.
    pub fn gate_capacitance(&self) -> f64 {
        if !self.process.include_gate_capacitance {
            return 0.0;
        }
        let p = &self.process;
        let channel = 2.0 / 3.0 * self.width * self.length * p.cox_per_area;
        let overlap = self.width * p.overlap_per_width;
        (channel + overlap) * 1e-3
    }

    /// Series white-noise voltage density e_n² [V²/Hz].
    pub fn noise_voltage_density_sq(&self) -> f64 {
        let gm_siemens = gm_ekv(self) * 1e-3;
        4.0 * BOLTZMANN * self.process.temperature * self.process.excess_noise_gamma / gm_siemens
    }
}

/// Transconductance [mS] from the inversion-coefficient interpolation
/// `gm = Id / (n·U_T·(½ + √(¼ + IC)))`.
pub fn gm_ekv(tr: &InputTransistor) -> f64 {
    let ut = units::thermal_voltage(tr.process.temperature);
    let ic = tr.inversion_coefficient();
    tr.drain_current / (tr.process.subthreshold_slope_factor * ut * (0.5 + (0.25 + ic).sqrt()))
}

/// A_p = (1/tp)·∫w² dt.
pub fn shape_factor_parallel(shape: &PulseShape) -> f64 {
    shape.integral_sq() / shape.peaking_time()
}

/// A_s = tp·∫(dw/dt)² dt.
pub fn shape_factor_series(shape: &PulseShape) -> f64 {
    shape.integral_derivative_sq() * shape.peaking_time()
}

/// Sensor leakage at the damage-constant reference temperature [µA]:
/// I = α·Φ·V.
pub fn leakage_from_fluence(sensor: &SensorModel, alpha: f64) -> Result<f64> {
    if !(sensor.fluence >= 0.0) {
        return Err(Error::domain(
            "fluence",
            format!("must be >= 0, got {}", sensor.fluence),
        ));
    }
    Ok(alpha * sensor.fluence * sensor.volume_cm3() * 1e6)
}

/// Scales a leakage current between temperatures:
/// `I(T) = I_ref·(T/T_ref)²·exp(−Eg/(2k)·(1/T − 1/T_ref))`.
pub fn scale_leakage_temperature(i_ref: f64, t_ref: f64, t: f64, eg_eff: f64) -> Result<f64> {
    if !(t > 0.0) || !(t_ref > 0.0) {
        return Err(Error::domain(
            "temperature",
            format!("must be positive kelvin, got t={t}, t_ref={t_ref}"),
        ));
    }
    let exponent = -(eg_eff / (2.0 * BOLTZMANN_EV)) * (1.0 / t - 1.0 / t_ref);
    Ok(i_ref * (t / t_ref).powi(2) * exponent.exp())
}

/// Parallel-noise ENC [e⁻] for a leakage current [µA].
pub fn enc_parallel(i_leak: f64, shape: &PulseShape) -> Result<f64> {
    enc_parallel_with_factor(i_leak, shape.peaking_time(), shape_factor_parallel(shape))
}

fn enc_parallel_with_factor(i_leak: f64, tp: f64, a_p: f64) -> Result<f64> {
    if !(i_leak >= 0.0) {
        return Err(Error::domain("leakage", format!("must be >= 0, got {i_leak}")));
    }
    let var_c2 = ELEMENTARY_CHARGE * (i_leak * 1e-6) * a_p * (tp * 1e-9);
    Ok(var_c2.sqrt() / ELEMENTARY_CHARGE)
}

/// Series-noise ENC [e⁻] for an external input capacitance [pF]; the
/// transistor's gate capacitance is added unless disabled.
pub fn enc_series(c_in: f64, tr: &InputTransistor, shape: &PulseShape) -> Result<f64> {
    enc_series_with_factor(c_in, tr, shape.peaking_time(), shape_factor_series(shape))
}

fn enc_series_with_factor(c_in: f64, tr: &InputTransistor, tp: f64, a_s: f64) -> Result<f64> {
    if !(c_in >= 0.0) {
        return Err(Error::domain("capacitance", format!("must be >= 0, got {c_in}")));
    }
    tr.validate()?;
    let c_total = (c_in + tr.gate_capacitance()) * 1e-12;
    let en2 = tr.noise_voltage_density_sq();
    let var_c2 = en2 * c_total * c_total * a_s / (2.0 * tp * 1e-9);
    Ok(var_c2.sqrt() / ELEMENTARY_CHARGE)
}

/// Operating point a budget was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// [pF]
    pub capacitance: f64,
    /// [µA]
    pub leakage: f64,
    /// [ns]
    pub peaking_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub enc_parallel: f64,
    pub enc_series: f64,
    pub enc_total: f64,
    pub operating_point: OperatingPoint,
}

impl NoiseBudget {
    pub fn from_components(enc_parallel: f64, enc_series: f64, operating_point: OperatingPoint) -> Self {
        NoiseBudget {
            enc_parallel,
            enc_series,
            enc_total: enc_parallel.hypot(enc_series),
            operating_point,
        }
    }
}

/// Total ENC at the sensor's capacitance and the given leakage [µA].
pub fn enc_total(sensor: &SensorModel, tr: &InputTransistor, shape: &PulseShape, i_leak: f64) -> Result<NoiseBudget> {
    let factors = ShapeFactors::of(shape);
    enc_total_with(sensor.capacitance, i_leak, tr, shape.peaking_time(), &factors)
}

/// Shape factors are tp-independent; computing them once per order lets
/// sweeps avoid repeated quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeFactors {
    pub order: u32,
    pub parallel: f64,
    pub series: f64,
}

impl ShapeFactors {
    pub fn of(shape: &PulseShape) -> Self {
        ShapeFactors {
            order: shape.order(),
            parallel: shape_factor_parallel(shape),
            series: shape_factor_series(shape),
        }
    }

    pub fn for_order(order: u32) -> Result<Self> {
        Ok(Self::of(&PulseShape::cr_rc(order, 1.0)?))
    }
}

fn enc_total_with(
    c_in: f64,
    i_leak: f64,
    tr: &InputTransistor,
    tp: f64,
    factors: &ShapeFactors,
) -> Result<NoiseBudget> {
    let p = enc_parallel_with_factor(i_leak, tp, factors.parallel)?;
    let s = enc_series_with_factor(c_in, tr, tp, factors.series)?;
    Ok(NoiseBudget::from_components(
        p,
        s,
        OperatingPoint {
            capacitance: c_in,
            leakage: i_leak,
            peaking_time: tp,
        },
    ))
}

/// Index of the minimum, ties going to the earliest entry.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v < values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Minimises the total ENC over a sorted peaking-time grid [ns]. Ties go
/// to the smaller peaking time.
pub fn optimal_peaking_time(
    sensor: &SensorModel,
    tr: &InputTransistor,
    order: u32,
    tp_grid: &[f64],
    i_leak: f64,
) -> Result<(f64, NoiseBudget)> {
    if tp_grid.is_empty() {
        return Err(Error::domain("tp_grid", "empty grid"));
    }
    if tp_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("tp_grid", "must be strictly increasing"));
    }
    if tp_grid[0] <= 0.0 {
        return Err(Error::domain("tp_grid", "peaking times must be positive"));
    }
    let factors = ShapeFactors::for_order(order)?;
    let budgets = tp_grid
        .iter()
        .map(|&tp| enc_total_with(sensor.capacitance, i_leak, tr, tp, &factors))
        .collect::<Result<Vec<_>>>()?;
    let totals: Vec<f64> = budgets.iter().map(|b| b.enc_total).collect();
    let best = argmin_first(&totals).expect("non-empty");
    Ok((tp_grid[best], budgets[best]))
}

/// Signal-to-noise ratio of a collected charge [fC] against a budget.
pub fn snr(signal_charge: f64, cce: f64, budget: &NoiseBudget) -> Result<f64> {
    if !(signal_charge > 0.0) {
        return Err(Error::domain("signal_charge", "must be positive"));
    }
    if !(budget.enc_total > 0.0) {
        return Err(Error::domain("enc_total", "zero noise, ratio undefined"));
    }
    Ok(units::fc_to_electrons(signal_charge * cce) / budget.enc_total)
}

/// Grid of operating points for ENC surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncSweep {
    pub order: u32,
    /// [ns]
    pub peaking_times: Vec<f64>,
    /// [pF]
    pub capacitances: Vec<f64>,
    /// [µA]
    pub leakages: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncGridPoint {
    pub tp_ns: f64,
    pub c_pf: f64,
    pub i_ua: f64,
    pub enc_p: f64,
    pub enc_s: f64,
    pub enc_tot: f64,
}

/// Best peaking time of one (C, I) slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceOptimum {
    pub c_pf: f64,
    pub i_ua: f64,
    pub tp_opt_ns: f64,
    pub enc_p: f64,
    pub enc_s: f64,
    pub enc_tot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncSweepResult {
    /// Ordered by capacitance, then leakage, then peaking time.
    pub points: Vec<EncGridPoint>,
    pub optima: Vec<SliceOptimum>,
}

impl EncSweep {
    pub fn validate(&self) -> Result<()> {
        if self.peaking_times.is_empty() || self.capacitances.is_empty() || self.leakages.is_empty() {
            return Err(Error::config("sweep", "grid axes must be non-empty"));
        }
        if self.peaking_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("sweep.tp_ns", "must be strictly increasing"));
        }
        if self.peaking_times.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::config("sweep.tp_ns", "must be positive"));
        }
        if self.capacitances.iter().any(|&c| !(c >= 0.0)) {
            return Err(Error::config("sweep.c_pf", "must be >= 0"));
        }
        if self.leakages.iter().any(|&i| !(i >= 0.0)) {
            return Err(Error::config("sweep.i_ua", "must be >= 0"));
        }
        ShaperConfig::new(self.order, 1.0)?;
        Ok(())
    }

    /// Evaluates the grid; slices run in parallel, output order is fixed.
    pub fn run(&self, tr: &InputTransistor) -> Result<EncSweepResult> {
        self.validate()?;
        tr.validate()?;
        let factors = ShapeFactors::for_order(self.order)?;
        let slices: Vec<(f64, f64)> = self
            .capacitances
            .iter()
            .flat_map(|&c| self.leakages.iter().map(move |&i| (c, i)))
            .collect();
        let per_slice = slices
            .par_iter()
            .map(|&(c, i)| {
                self.peaking_times
                    .iter()
                    .map(|&tp| {
                        let b = enc_total_with(c, i, tr, tp, &factors)?;
                        Ok(EncGridPoint {
                            tp_ns: tp,
                            c_pf: c,
                            i_ua: i,
                            enc_p: b.enc_parallel,
                            enc_s: b.enc_series,
                            enc_tot: b.enc_total,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        let optima = per_slice
            .iter()
            .map(|pts| {
                let totals: Vec<f64> = pts.iter().map(|p| p.enc_tot).collect();
                let b = pts[argmin_first(&totals).expect("non-empty slice")];
                SliceOptimum {
                    c_pf: b.c_pf,
                    i_ua: b.i_ua,
                    tp_opt_ns: b.tp_ns,
                    enc_p: b.enc_p,
                    enc_s: b.enc_s,
                    enc_tot: b.enc_tot,
                }
            })
            .collect();
        Ok(EncSweepResult {
            points: per_slice.into_iter().flatten().collect(),
            optima,
        })
    }
}

impl EncSweepResult {
    /// CSV with header `tp_ns,c_pf,i_ua,enc_p,enc_s,enc_tot`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Inclusive arithmetic grid `start, start+step, …` up to `stop`.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(Error::config("grid", format!("bad range {start}..{stop} step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}
