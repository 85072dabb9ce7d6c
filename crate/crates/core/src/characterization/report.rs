use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

use super::curve::ScanCurve;
use super::rice::RiceFit;
use super::scurve::{GainFit, SCurveFit};
use crate::error::Result;

/// JSON summary of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub kind: String,
    pub params: BTreeMap<String, f64>,
    pub errors: BTreeMap<String, f64>,
    pub chi2_ndf: Option<f64>,
    /// sha256 of the fitted data as CSV.
    pub inputs_digest: String,
}

/// Hex sha256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn curve_digest(curve: &ScanCurve) -> Result<String> {
    Ok(sha256_hex(curve.to_csv_string()?.as_bytes()))
}

fn map<const N: usize>(items: [(&str, f64); N]) -> BTreeMap<String, f64> {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl FitReport {
    pub fn scurve(curve: &ScanCurve, fit: &SCurveFit) -> Result<Self> {
        Ok(FitReport {
            kind: "scurve".into(),
            params: map([("median_mv", fit.median), ("sigma_mv", fit.sigma)]),
            errors: map([("median_mv", fit.median_error()), ("sigma_mv", fit.sigma_error())]),
            chi2_ndf: Some(fit.chi2_ndf),
            inputs_digest: curve_digest(curve)?,
        })
    }

    /// `inputs` is the (charge, median) table the line was fitted to.
    pub fn gain(inputs: &[(f64, f64)], fit: &GainFit, enc_electrons: Option<f64>) -> Self {
        let mut params = map([("gain_mv_per_fc", fit.gain), ("offset_mv", fit.offset)]);
        if let Some(e) = enc_electrons {
            params.insert("enc_electrons".into(), e);
        }
        let text: String = inputs.iter().map(|(q, m)| format!("{q:?},{m:?}\n")).collect();
        FitReport {
            kind: "gain".into(),
            params,
            errors: map([("gain_mv_per_fc", fit.gain_error), ("offset_mv", fit.offset_error)]),
            chi2_ndf: None,
            inputs_digest: sha256_hex(text.as_bytes()),
        }
    }

    pub fn rice(curve: &ScanCurve, fit: &RiceFit) -> Result<Self> {
        Ok(FitReport {
            kind: "rice".into(),
            params: map([
                ("f0_mhz", fit.f0),
                ("sigma_mv", fit.sigma),
                ("peaking_time_ns", fit.peaking_time_est),
                ("kappa", fit.kappa),
                ("r_squared", fit.r_squared),
            ]),
            errors: map([
                ("f0_mhz", fit.f0_error()),
                ("sigma_mv", fit.sigma_error()),
                ("peaking_time_ns", fit.peaking_time_est * fit.covariance[0][0].sqrt()),
            ]),
            chi2_ndf: Some(fit.chi2_ndf),
            inputs_digest: curve_digest(curve)?,
        })
    }

    pub fn time_walk(curve: &ScanCurve, walk: f64, threshold_mv: f64) -> Result<Self> {
        let n = curve.len();
        let err = (curve.y_err[0].powi(2) + curve.y_err[n - 1].powi(2)).sqrt();
        Ok(FitReport {
            kind: "time_walk".into(),
            params: map([("walk_ns", walk), ("threshold_mv", threshold_mv)]),
            errors: map([("walk_ns", err)]),
            chi2_ndf: None,
            inputs_digest: curve_digest(curve)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
