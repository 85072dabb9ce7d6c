//! Physical constants and unit conversions.
//!
//! Internal unit canon: ns, pF, µA, mV, fC. Electrons appear only at the
//! ENC / SNR boundary.

/// Elementary charge [C].
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Boltzmann constant [J/K].
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Boltzmann constant [eV/K].
pub const BOLTZMANN_EV: f64 = 8.617_333_262e-5;

/// Conversion used at the ENC boundary: 1 fC = 6241.5 e⁻.
pub const ELECTRONS_PER_FC: f64 = 6241.5;

/// Offset between Celsius and Kelvin.
pub const ZERO_CELSIUS: f64 = 273.15;

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + ZERO_CELSIUS
}

pub fn fc_to_electrons(q_fc: f64) -> f64 {
    q_fc * ELECTRONS_PER_FC
}

pub fn electrons_to_fc(e: f64) -> f64 {
    e / ELECTRONS_PER_FC
}

/// Thermal voltage kT/q [V].
pub fn thermal_voltage(temperature_k: f64) -> f64 {
    BOLTZMANN * temperature_k / ELEMENTARY_CHARGE
}
