//! Spectrum datasets and their CSV/JSON serialization.
//!
//! CSV layout:
//!
//! ```text
//! # method=analytic
//! # params: omega=1, delta=0, gamma=0.05, Gamma=6
//! # config: key=value        (zero or more)
//! # warning: text            (zero or more)
//! omega,S
//! -4,0.00123
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so both
//! the CSV and the JSON forms reproduce every `f64` bit for bit.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::atom::AtomParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMethod {
    McReconstruct,
    Analytic,
    OdeOracle,
    /// Reconstruction method driven by the exact master-equation propagator.
    OdeReconstruct,
    /// Restart-based two-time average, used only as a cross-check.
    McRestart,
}

impl SpectrumMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumMethod::McReconstruct => "mc-reconstruct",
            SpectrumMethod::Analytic => "analytic",
            SpectrumMethod::OdeOracle => "ode-oracle",
            SpectrumMethod::OdeReconstruct => "ode-reconstruct",
            SpectrumMethod::McRestart => "mc-restart",
        }
    }
}

impl fmt::Display for SpectrumMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpectrumMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mc-reconstruct" => SpectrumMethod::McReconstruct,
            "analytic" => SpectrumMethod::Analytic,
            "ode-oracle" => SpectrumMethod::OdeOracle,
            "ode-reconstruct" => SpectrumMethod::OdeReconstruct,
            "mc-restart" => SpectrumMethod::McRestart,
            other => return Err(Error::parse(0, format!("unknown spectrum method {other:?}"))),
        })
    }
}

/// Uniform frequency grid, ω measured from the laser frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl OmegaGrid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        let g = Self { min, max, points };
        g.validate()?;
        Ok(g)
    }

    /// 801 points on ±4·max(Ω, Γ).
    pub fn default_for(params: &AtomParams) -> Self {
        let half = 4.0 * params.rabi.max(params.noise);
        Self {
            min: -half,
            max: half,
            points: 801,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "omega grid",
                value: if self.min.is_finite() { self.max } else { self.min },
                reason: "bounds must be finite",
            });
        }
        if self.points == 0 {
            return Err(Error::InvalidParameter {
                name: "omega points",
                value: 0.0,
                reason: "need at least one point",
            });
        }
        if self.max < self.min || (self.points > 1 && self.max == self.min) {
            return Err(Error::InvalidParameter {
                name: "omega max",
                value: self.max,
                reason: "must exceed omega min",
            });
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        // Written about the centre so that a grid with min = -max is exactly
        // antisymmetric: values[k] == -values[n - 1 - k].
        let n1 = (self.points - 1) as f64;
        let centre = 0.5 * (self.min + self.max);
        let half = 0.5 * (self.max - self.min);
        (0..self.points)
            .map(|k| {
                if k == 0 {
                    self.min
                } else if k + 1 == self.points {
                    self.max
                } else {
                    centre + half * ((2 * k) as f64 - n1) / n1
                }
            })
            .collect()
    }
}

/// Parameters as they appear in output headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsHeader {
    pub omega: f64,
    pub delta: f64,
    pub gamma: f64,
    #[serde(rename = "Gamma")]
    pub noise: f64,
}

impl From<&AtomParams> for ParamsHeader {
    fn from(p: &AtomParams) -> Self {
        Self {
            omega: p.rabi,
            delta: p.detuning,
            gamma: p.gamma,
            noise: p.noise,
        }
    }
}

impl ParamsHeader {
    pub fn to_params(&self) -> Result<AtomParams> {
        AtomParams::new(self.omega, self.delta, self.gamma, self.noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub method: SpectrumMethod,
    pub params: ParamsHeader,
    /// Resolved run configuration, echoed for provenance.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub omega: Vec<f64>,
    #[serde(rename = "S")]
    pub values: Vec<f64>,
}

impl SpectrumSeries {
    pub fn new(method: SpectrumMethod, params: &AtomParams, omega: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            method,
            params: params.into(),
            config: BTreeMap::new(),
            warnings: Vec::new(),
            omega,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Divides every value by the maximum.
    pub fn normalized(mut self) -> Self {
        let peak = self.peak();
        if peak > 0.0 && peak.is_finite() {
            for v in &mut self.values {
                *v /= peak;
            }
            self.config.insert("normalized".into(), "peak".into());
        }
        self
    }

    /// sup |S − other| / max S over a shared grid.
    pub fn max_relative_deviation(&self, reference: &SpectrumSeries) -> Result<f64> {
        if self.omega != reference.omega {
            return Err(Error::GridMismatch);
        }
        let peak = reference.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let dev = self
            .values
            .iter()
            .zip(&reference.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(dev / peak)
    }

    /// Indices of strict interior local maxima.
    pub fn local_maxima(&self) -> Vec<usize> {
        let v = &self.values;
        (1..v.len().saturating_sub(1))
            .filter(|&k| v[k] > v[k - 1] && v[k] > v[k + 1])
            .collect()
    }

    /// Indices of strict interior local minima.
    pub fn local_minima(&self) -> Vec<usize> {
        let v = &self.values;
        (1..v.len().saturating_sub(1))
            .filter(|&k| v[k] < v[k - 1] && v[k] < v[k + 1])
            .collect()
    }

    fn check_shape(&self) -> Result<()> {
        if self.omega.len() != self.values.len() {
            return Err(Error::parse(0, "omega and S have different lengths"));
        }
        if self.omega.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return Err(Error::parse(0, "non-finite value in spectrum"));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(s, "# method={}", self.method);
        let _ = writeln!(
            s,
            "# params: omega={}, delta={}, gamma={}, Gamma={}",
            p.omega, p.delta, p.gamma, p.noise
        );
        for (k, v) in &self.config {
            let _ = writeln!(s, "# config: {k}={v}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "# warning: {w}");
        }
        s.push_str("omega,S\n");
        for (w, v) in self.omega.iter().zip(&self.values) {
            let _ = writeln!(s, "{w},{v}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut method = None;
        let mut params = None;
        let mut config = BTreeMap::new();
        let mut warnings = Vec::new();
        let mut omega = Vec::new();
        let mut values = Vec::new();
        let mut seen_columns = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_start();
                if seen_columns {
                    return Err(Error::parse(line_no, "header line after data"));
                }
                if let Some(m) = rest.strip_prefix("method=") {
                    method = Some(m.trim().parse::<SpectrumMethod>().map_err(|_| {
                        Error::parse(line_no, format!("unknown method {:?}", m.trim()))
                    })?);
                } else if let Some(p) = rest.strip_prefix("params:") {
                    params = Some(parse_params(p, line_no)?);
                } else if let Some(c) = rest.strip_prefix("config:") {
                    let (k, v) = c
                        .trim_start()
                        .split_once('=')
                        .ok_or_else(|| Error::parse(line_no, "config entry without '='"))?;
                    if config.insert(k.to_string(), v.to_string()).is_some() {
                        return Err(Error::parse(line_no, format!("duplicate config key {k:?}")));
                    }
                } else if let Some(w) = rest.strip_prefix("warning:") {
                    warnings.push(w.trim_start().to_string());
                } else {
                    return Err(Error::parse(line_no, "unrecognized header line"));
                }
                continue;
            }
            if !seen_columns {
                if line.trim() != "omega,S" {
                    return Err(Error::parse(line_no, "expected column header 'omega,S'"));
                }
                seen_columns = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (w, v) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(line_no, "expected two columns"))?;
            omega.push(parse_f64(w, line_no)?);
            values.push(parse_f64(v, line_no)?);
        }
        let series = Self {
            method: method.ok_or_else(|| Error::parse(0, "missing '# method=' header"))?,
            params: params.ok_or_else(|| Error::parse(0, "missing '# params:' header"))?,
            config,
            warnings,
            omega,
            values,
        };
        if !seen_columns {
            return Err(Error::parse(0, "missing column header"));
        }
        series.check_shape()?;
        Ok(series)
    }

    pub fn to_json(&self) -> Result<String> {
        self.check_shape()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.check_shape()?;
        Ok(s)
    }
}

pub(crate) fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid number {:?}", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite number {:?}", s.trim())));
    }
    Ok(v)
}

fn parse_params(text: &str, line: usize) -> Result<ParamsHeader> {
    let mut fields: [Option<f64>; 4] = [None; 4];
    for part in text.split(',') {
        let (k, v) = part
            .trim()
            .split_once('=')
            .ok_or_else(|| Error::parse(line, "params entry without '='"))?;
        let slot = match k.trim() {
            "omega" => 0,
            "delta" => 1,
            "gamma" => 2,
            "Gamma" => 3,
            other => return Err(Error::parse(line, format!("unknown parameter {other:?}"))),
        };
        if fields[slot].replace(parse_f64(v, line)?).is_some() {
            return Err(Error::parse(line, format!("duplicate parameter {:?}", k.trim())));
        }
    }
    match fields {
        [Some(omega), Some(delta), Some(gamma), Some(noise)] => Ok(ParamsHeader {
            omega,
            delta,
            gamma,
            noise,
        }),
        _ => Err(Error::parse(line, "params header needs omega, delta, gamma and Gamma")),
    }
}
