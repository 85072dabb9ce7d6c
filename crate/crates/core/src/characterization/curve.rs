use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    /// x: threshold [mV], y: occupancy.
    ThresholdScan,
    /// x: threshold [mV], y: rate [MHz].
    NoiseOccupancy,
    /// x: charge [fC], y: delay [ns].
    TimeWalk,
}

impl ScanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanKind::ThresholdScan => "threshold_scan",
            ScanKind::NoiseOccupancy => "noise_occupancy",
            ScanKind::TimeWalk => "time_walk",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "threshold_scan" => Ok(ScanKind::ThresholdScan),
            "noise_occupancy" => Ok(ScanKind::NoiseOccupancy),
            "time_walk" => Ok(ScanKind::TimeWalk),
            other => Err(Error::config("kind", format!("unknown scan kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCurve {
    pub kind: ScanKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_err: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    x: f64,
    y: f64,
    y_err: f64,
    kind: String,
}

impl ScanCurve {
    pub fn new(kind: ScanKind, x: Vec<f64>, y: Vec<f64>, y_err: Vec<f64>) -> Result<Self> {
        let c = ScanCurve { kind, x, y, y_err };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_increasing(&self) -> bool {
        self.x.windows(2).all(|w| w[1] > w[0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() || self.x.len() != self.y_err.len() {
            return Err(Error::config("curve", "x, y, y_err lengths differ"));
        }
        let up = self.x.windows(2).all(|w| w[1] > w[0]);
        let down = self.x.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::config("curve.x", "must be strictly monotone"));
        }
        if self.y_err.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::config("curve.y_err", "errors must be >= 0"));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::config("curve", "values must be finite"));
        }
        if self.kind == ScanKind::ThresholdScan && self.y.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::config("curve.y", "occupancy must lie in [0, 1]"));
        }
        Ok(())
    }

    /// CSV with header `x,y,y_err,kind`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.len() {
            w.serialize(Row {
                x: self.x[i],
                y: self.y[i],
                y_err: self.y_err[i],
                kind: self.kind.as_str().to_string(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Reads a curve written by [`ScanCurve::write_csv`] (or bench data in
    /// the same layout). All rows must share one kind.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut kind = None;
        let (mut x, mut y, mut y_err) = (Vec::new(), Vec::new(), Vec::new());
        for (line, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let k = ScanKind::parse(&row.kind)?;
            match kind {
                None => kind = Some(k),
                Some(prev) if prev != k => {
                    return Err(Error::config(format!("row {}", line + 2), "mixed scan kinds"));
                }
                _ => {}
            }
            x.push(row.x);
            y.push(row.y);
            y_err.push(row.y_err);
        }
        let kind = kind.ok_or_else(|| Error::Insufficient("empty curve file".into()))?;
        Self::new(kind, x, y, y_err)
    }
}
