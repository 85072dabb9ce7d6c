//! Python module `fesim`: pulse shapes, ENC estimates, the channel
//! simulator and the scan fitters.
//!
//! Units follow the Rust crate: ns, pF, µA, mA, µm, fC, mV.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fesim_core::channel_sim::{ChipConfig, ChipSimulator};
use fesim_core::characterization::{self as ch, ScanCurve, ScanKind};
use fesim_core::noise_model::{self as nm, SensorModel};
use fesim_core::{shaping, units};

fn err(e: fesim_core::Error) -> PyErr {
    if e.is_config() || matches!(e, fesim_core::Error::Domain { .. }) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// CR-RCⁿ semi-Gaussian shaper with unit peak response.
#[pyclass(name = "PulseShape", frozen, from_py_object)]
#[derive(Clone)]
struct PyPulseShape(shaping::PulseShape);

#[pymethods]
impl PyPulseShape {
    #[new]
    #[pyo3(signature = (peaking_time, order = 3))]
    fn new(peaking_time: f64, order: u32) -> PyResult<Self> {
        shaping::PulseShape::cr_rc(order, peaking_time).map(Self).map_err(err)
    }

    #[getter]
    fn order(&self) -> u32 {
        self.0.order()
    }

    #[getter]
    fn peaking_time(&self) -> f64 {
        self.0.peaking_time()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau()
    }

    fn response(&self, t: Vec<f64>) -> Vec<f64> {
        t.into_iter().map(|t| self.0.response(t)).collect()
    }

    /// (A_p, A_s) noise shape factors.
    fn shape_factors(&self) -> (f64, f64) {
        let f = nm::ShapeFactors::of(&self.0);
        (f.parallel, f.series)
    }

    fn __repr__(&self) -> String {
        format!(
            "PulseShape(peaking_time={}, order={})",
            self.0.peaking_time(),
            self.0.order()
        )
    }
}

/// Input transistor for series-noise estimates.
#[pyclass(name = "InputTransistor", from_py_object)]
#[derive(Clone)]
struct PyInputTransistor(nm::InputTransistor);

#[pymethods]
impl PyInputTransistor {
    #[new]
    #[pyo3(signature = (width = 2000.0, length = 0.2, drain_current = 2.0))]
    fn new(width: f64, length: f64, drain_current: f64) -> PyResult<Self> {
        let tr = nm::InputTransistor {
            width,
            length,
            drain_current,
            ..Default::default()
        };
        tr.validate().map_err(err)?;
        Ok(Self(tr))
    }

    #[getter]
    fn width(&self) -> f64 {
        self.0.width
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.length
    }

    #[getter]
    fn drain_current(&self) -> f64 {
        self.0.drain_current
    }

    /// Transconductance [mS].
    fn gm(&self) -> f64 {
        nm::gm_ekv(&self.0)
    }

    fn inversion_coefficient(&self) -> f64 {
        self.0.inversion_coefficient()
    }

    /// [pF]
    fn gate_capacitance(&self) -> f64 {
        self.0.gate_capacitance()
    }
}

/// Scan result: x, occupancy or rate y, and its error.
#[pyclass(name = "ScanCurve", frozen, from_py_object)]
#[derive(Clone)]
struct PyScanCurve(ScanCurve);

#[pymethods]
impl PyScanCurve {
    #[new]
    #[pyo3(signature = (kind, x, y, y_err))]
    fn new(kind: &str, x: Vec<f64>, y: Vec<f64>, y_err: Vec<f64>) -> PyResult<Self> {
        let kind = ScanKind::parse(kind).map_err(err)?;
        ScanCurve::new(kind, x, y, y_err).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        ScanCurve::read_csv(text.as_bytes()).map(Self).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.as_str()
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.0.x.clone()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.0.y.clone()
    }

    #[getter]
    fn y_err(&self) -> Vec<f64> {
        self.0.y_err.clone()
    }

    fn to_csv(&self) -> PyResult<String> {
        self.0.to_csv_string().map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Seeded Monte Carlo model of the readout chip.
#[pyclass(name = "Simulator", frozen)]
struct PySimulator(ChipSimulator);

#[pymethods]
impl PySimulator {
    /// `config` is chip TOML; omitted fields take defaults.
    #[new]
    #[pyo3(signature = (config = None, rc_code = None))]
    fn new(config: Option<&str>, rc_code: Option<u8>) -> PyResult<Self> {
        let mut chip = match config {
            Some(text) => ChipConfig::from_toml_str(text).map_err(err)?,
            None => ChipConfig::default(),
        };
        if let Some(code) = rc_code {
            chip.set_rc_code(code);
        }
        ChipSimulator::new(chip).map(Self).map_err(err)
    }

    fn config_toml(&self) -> PyResult<String> {
        self.0.chip().to_toml_string().map_err(err)
    }

    /// [mV/fC]
    #[pyo3(signature = (channel = 0))]
    fn gain(&self, channel: usize) -> PyResult<f64> {
        Ok(self.0.channel(channel).map_err(err)?.gain)
    }

    #[pyo3(signature = (channel = 0))]
    fn shape(&self, channel: usize) -> PyResult<PyPulseShape> {
        self.0.shape(channel).cloned().map(PyPulseShape).map_err(err)
    }

    #[pyo3(signature = (q, thresholds, n_inj, seed, channel = 0))]
    fn threshold_scan(
        &self,
        py: Python<'_>,
        q: f64,
        thresholds: Vec<f64>,
        n_inj: usize,
        seed: u64,
        channel: usize,
    ) -> PyResult<PyScanCurve> {
        let sim = &self.0;
        py.detach(|| ch::run_threshold_scan(sim, channel, q, &thresholds, n_inj, seed))
            .map(|(c, _)| PyScanCurve(c))
            .map_err(err)
    }

    /// Crossing rate [MHz] against threshold over `duration` ns per point.
    #[pyo3(signature = (thresholds, duration, seed, channel = 0))]
    fn noise_scan(
        &self,
        py: Python<'_>,
        thresholds: Vec<f64>,
        duration: f64,
        seed: u64,
        channel: usize,
    ) -> PyResult<PyScanCurve> {
        let sim = &self.0;
        py.detach(|| ch::run_noise_occupancy(sim, channel, &thresholds, duration, seed))
            .map(|s| PyScanCurve(s.curve))
            .map_err(err)
    }

    /// Returns (delay curve, walk [ns]).
    #[pyo3(signature = (charges, threshold_fc, n_inj, seed, channel = 0))]
    fn time_walk(
        &self,
        py: Python<'_>,
        charges: Vec<f64>,
        threshold_fc: f64,
        n_inj: usize,
        seed: u64,
        channel: usize,
    ) -> PyResult<(PyScanCurve, f64)> {
        let sim = &self.0;
        py.detach(|| ch::measure_time_walk(sim, channel, &charges, threshold_fc, n_inj, seed))
            .map(|tw| (PyScanCurve(tw.curve), tw.walk))
            .map_err(err)
    }

    /// Rice constant of this channel's noise spectrum and shaper.
    #[pyo3(signature = (channel = 0))]
    fn rice_constant(&self, channel: usize) -> PyResult<f64> {
        let shape = self.0.shape(channel).map_err(err)?;
        ch::rice_constant_for(&self.0.chip().noise, shape).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (leakage, peaking_time, order = 3))]
fn enc_parallel(leakage: f64, peaking_time: f64, order: u32) -> PyResult<f64> {
    let shape = shaping::PulseShape::cr_rc(order, peaking_time).map_err(err)?;
    nm::enc_parallel(leakage, &shape).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (capacitance, peaking_time, transistor = None, order = 3))]
fn enc_series(capacitance: f64, peaking_time: f64, transistor: Option<PyInputTransistor>, order: u32) -> PyResult<f64> {
    let shape = shaping::PulseShape::cr_rc(order, peaking_time).map_err(err)?;
    let tr = transistor.map(|t| t.0).unwrap_or_default();
    nm::enc_series(capacitance, &tr, &shape).map_err(err)
}

/// Returns (enc_parallel, enc_series, enc_total) [e⁻].
#[pyfunction]
#[pyo3(signature = (capacitance, leakage, peaking_time, transistor = None, order = 3))]
fn enc_total(
    capacitance: f64,
    leakage: f64,
    peaking_time: f64,
    transistor: Option<PyInputTransistor>,
    order: u32,
) -> PyResult<(f64, f64, f64)> {
    let shape = shaping::PulseShape::cr_rc(order, peaking_time).map_err(err)?;
    let tr = transistor.map(|t| t.0).unwrap_or_default();
    let sensor = SensorModel {
        capacitance,
        ..SensorModel::pad_150um()
    };
    let b = nm::enc_total(&sensor, &tr, &shape, leakage).map_err(err)?;
    Ok((b.enc_parallel, b.enc_series, b.enc_total))
}

/// Leakage [µA] of the 150 µm pad after `fluence` n/cm², at `temperature_c`.
#[pyfunction]
#[pyo3(signature = (fluence, temperature_c = 20.0))]
fn leakage(fluence: f64, temperature_c: f64) -> PyResult<f64> {
    let s = SensorModel::pad_150um().with_fluence(fluence);
    let i20 = nm::leakage_from_fluence(&s, nm::DEFAULT_ALPHA).map_err(err)?;
    nm::scale_leakage_temperature(
        i20,
        nm::LEAKAGE_REF_TEMPERATURE,
        units::celsius_to_kelvin(temperature_c),
        nm::DEFAULT_EG_EFF,
    )
    .map_err(err)
}

#[pyfunction]
fn enc_from_noise(sigma: f64, gain: f64) -> PyResult<f64> {
    ch::enc_from_noise(sigma, gain).map_err(err)
}

#[pyfunction]
fn scurve(v: f64, median: f64, sigma: f64) -> f64 {
    ch::scurve(v, median, sigma)
}

#[pyfunction]
#[pyo3(signature = (order = 3))]
fn rice_constant(order: u32) -> PyResult<f64> {
    ch::rice_constant(order).map_err(err)
}

#[pyfunction]
fn fit_scurve<'py>(py: Python<'py>, curve: &PyScanCurve) -> PyResult<Bound<'py, PyDict>> {
    let f = ch::fit_scurve(&curve.0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("median", f.median)?;
    d.set_item("sigma", f.sigma)?;
    d.set_item("median_error", f.median_error())?;
    d.set_item("sigma_error", f.sigma_error())?;
    d.set_item("chi2_ndf", f.chi2_ndf)?;
    Ok(d)
}

#[pyfunction]
fn fit_rice<'py>(py: Python<'py>, curve: &PyScanCurve, kappa: f64) -> PyResult<Bound<'py, PyDict>> {
    let f = ch::fit_rice(&curve.0, kappa).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("f0", f.f0)?;
    d.set_item("sigma", f.sigma)?;
    d.set_item("peaking_time", f.peaking_time_est)?;
    d.set_item("r_squared", f.r_squared)?;
    d.set_item("chi2_ndf", f.chi2_ndf)?;
    d.set_item("n_points", f.n_points)?;
    Ok(d)
}

/// Straight-line fit of (charge, median) pairs: (gain, offset).
#[pyfunction]
fn fit_gain(points: Vec<(f64, f64)>) -> PyResult<(f64, f64)> {
    let g = ch::fit_line(&points).map_err(err)?;
    Ok((g.gain, g.offset))
}

#[pymodule]
pub fn fesim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyPulseShape>()?;
    m.add_class::<PyInputTransistor>()?;
    m.add_class::<PyScanCurve>()?;
    m.add_class::<PySimulator>()?;
    m.add_function(wrap_pyfunction!(enc_parallel, m)?)?;
    m.add_function(wrap_pyfunction!(enc_series, m)?)?;
    m.add_function(wrap_pyfunction!(enc_total, m)?)?;
    m.add_function(wrap_pyfunction!(leakage, m)?)?;
    m.add_function(wrap_pyfunction!(enc_from_noise, m)?)?;
    m.add_function(wrap_pyfunction!(scurve, m)?)?;
    m.add_function(wrap_pyfunction!(rice_constant, m)?)?;
    m.add_function(wrap_pyfunction!(fit_scurve, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rice, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gain, m)?)?;
    Ok(())
}
