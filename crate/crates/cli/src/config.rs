//! Run configuration: flat `key = value` files, command-line overrides and a
//! lossless echo used for provenance headers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use mollow::reconstruct::{default_truncation, Evolver, Quadrature};
use mollow::{AtomParams, OmegaGrid, SimConfig};

use crate::CliError;

/// Environment variable consulted when `workers` is not set.
pub const WORKERS_ENV: &str = "MOLLOW_WORKERS";

/// Trajectories per run unless overridden.
pub const DEFAULT_NTRAJ: u64 = 50_000;

/// Every key accepted in a config file; the command-line flags use the same
/// names with a leading `--`.
pub const KEYS: &[&str] = &[
    "mode",
    "Gamma",
    "gamma",
    "delta",
    "dt",
    "tmax",
    "ntraj",
    "seed",
    "omega-min",
    "omega-max",
    "omega-points",
    "evolver",
    "quadrature",
    "out",
    "format",
    "workers",
    "normalize",
    "initial",
    "unit-rabi",
    "allow-large-dt",
    "record-stride",
    "max-lag",
];

/// Keys that describe where or how fast a run executes, not what it computes.
/// They are left out of output headers so that reruns compare byte for byte.
const EXECUTION_KEYS: &[&str] = &["out", "workers"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    McSpectrum,
    AnalyticSpectrum,
    OracleSpectrum,
    Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    Excited,
    Ground,
    Dressed1,
    Dressed2,
}

macro_rules! named_enum {
    ($ty:ident { $($var:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$var => $name),+ }
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($ty::$var),)+
                    other => Err(format!(
                        "unknown value {other:?} (expected one of: {})",
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

named_enum!(Mode {
    McSpectrum => "mc-spectrum",
    AnalyticSpectrum => "analytic-spectrum",
    OracleSpectrum => "oracle-spectrum",
    Phase => "phase",
});
named_enum!(Format { Csv => "csv", Json => "json" });
named_enum!(Initial {
    Excited => "excited",
    Ground => "ground",
    Dressed1 => "dressed1",
    Dressed2 => "dressed2",
});

/// Raw key/value settings before resolution.
pub type Settings = BTreeMap<String, String>;

/// Parses a config file. `#` starts a comment; blank lines are ignored.
pub fn parse_settings(text: &str) -> Result<Settings, CliError> {
    let mut out = Settings::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected key = value", i + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("line {}: unknown key {key:?}", i + 1)));
        }
        if value.is_empty() {
            return Err(CliError::Config(format!("line {}: empty value for {key}", i + 1)));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {key}", i + 1)));
        }
    }
    Ok(out)
}

/// Fully resolved configuration of one run. Rates are in units of Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: AtomParams,
    pub sim: SimConfig,
    pub grid: OmegaGrid,
    pub evolver: Evolver,
    pub quadrature: Quadrature,
    pub out: PathBuf,
    pub format: Format,
    pub normalize: bool,
    pub initial: Initial,
    /// Longest correlation lag in phase mode (time units).
    pub max_lag: f64,
}

struct Reader<'a> {
    settings: &'a Settings,
}

impl Reader<'_> {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.settings.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Config(format!("{key} = {v}: {e}"))),
        }
    }

    /// Like `get`, for types whose own parse errors are not user facing.
    fn choice<T: FromStr>(&self, key: &str, expected: &str) -> Result<Option<T>, CliError> {
        match self.settings.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                CliError::Config(format!("{key} = {v}: expected one of: {expected}"))
            }),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>, CliError> {
        let v: Option<f64> = self.get(key)?;
        match v {
            Some(x) if !x.is_finite() => Err(CliError::Config(format!("{key} must be finite"))),
            _ => Ok(v),
        }
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.settings.get(key).map(String::as_str) {
            None | Some("false") | Some("0") => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some(v) => Err(CliError::Config(format!("{key} = {v}: expected true or false"))),
        }
    }
}

impl RunConfig {
    /// Resolves settings, filling defaults and validating every constraint.
    pub fn from_settings(settings: &Settings) -> Result<Self, CliError> {
        if let Some(k) = settings.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key {k:?}")));
        }
        let r = Reader { settings };
        let unit = r.number("unit-rabi")?.unwrap_or(1.0);
        if !(unit > 0.0) {
            return Err(CliError::Config("unit-rabi must be positive".into()));
        }
        let mode: Mode = r
            .get("mode")?
            .ok_or_else(|| CliError::Config("missing mode".into()))?;
        let noise = r
            .number("Gamma")?
            .ok_or_else(|| CliError::Config("missing Gamma".into()))?;
        let gamma = r.number("gamma")?.unwrap_or(0.05 * unit);
        let delta = r.number("delta")?.unwrap_or(0.0);
        let params = AtomParams::from_raw(unit, delta, gamma, noise).map_err(CliError::config)?;

        let dt = match r.number("dt")? {
            Some(v) => v * unit,
            None => 0.01 / params.max_rate(),
        };
        let tmax = match r.number("tmax")? {
            Some(v) => v * unit,
            None if mode == Mode::Phase => 2000.0,
            None => default_truncation(&params).map_err(CliError::config)?,
        };
        let mut sim = SimConfig::new(
            dt,
            tmax,
            r.get("ntraj")?.unwrap_or(DEFAULT_NTRAJ),
            r.get("seed")?.unwrap_or(1),
        );
        sim.record_stride = match r.get("record-stride")? {
            Some(v) => v,
            None if mode == Mode::Phase => ((0.1 / dt).round() as usize).max(1),
            None => 1,
        };
        sim.allow_large_dt = r.flag("allow-large-dt")?;
        sim.workers = match r.get("workers")? {
            Some(w) => w,
            None => match std::env::var(WORKERS_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| {
                    CliError::Config(format!("{WORKERS_ENV} = {v:?} is not a worker count"))
                })?,
                Err(_) => 0,
            },
        };
        sim.validate(&params).map_err(CliError::config)?;

        let fallback = OmegaGrid::default_for(&params);
        let grid = OmegaGrid::new(
            r.number("omega-min")?.map_or(fallback.min, |v| v / unit),
            r.number("omega-max")?.map_or(fallback.max, |v| v / unit),
            r.get("omega-points")?.unwrap_or(fallback.points),
        )
        .map_err(CliError::config)?;

        let format = r.get("format")?.unwrap_or(Format::Csv);
        let max_lag = r.number("max-lag")?.map_or(tmax / 20.0, |v| v * unit);
        if !(max_lag > 0.0) {
            return Err(CliError::Config("max-lag must be positive".into()));
        }
        let cfg = RunConfig {
            mode,
            params,
            sim,
            grid,
            evolver: r
                .choice("evolver", "mc-ensemble, master-ode")?
                .unwrap_or(Evolver::McEnsemble),
            quadrature: r
                .choice("quadrature", "trapezoid, left-riemann")?
                .unwrap_or_default(),
            out: r
                .get("out")?
                .unwrap_or_else(|| PathBuf::from(format!("{mode}.{format}"))),
            format,
            normalize: r.flag("normalize")?,
            initial: r.get("initial")?.unwrap_or(Initial::Excited),
            max_lag,
        };
        if mode == Mode::Phase {
            let samples = cfg.sim.n_samples();
            let lag = cfg.max_lag_samples();
            if samples < 10 * lag {
                return Err(CliError::Config(format!(
                    "max-lag {} needs at least {} samples, the run records {samples}",
                    cfg.max_lag,
                    10 * lag
                )));
            }
        }
        Ok(cfg)
    }

    /// Correlation lag in recorded samples.
    pub fn max_lag_samples(&self) -> usize {
        ((self.max_lag / self.sim.sample_interval()).round() as usize).max(1)
    }

    /// Every resolved setting, in canonical order. Parsing the result gives
    /// back an identical configuration.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        let s = &self.sim;
        vec![
            ("mode", self.mode.to_string()),
            ("Gamma", p.noise.to_string()),
            ("gamma", p.gamma.to_string()),
            ("delta", p.detuning.to_string()),
            ("dt", s.dt.to_string()),
            ("tmax", s.t_max.to_string()),
            ("ntraj", s.n_traj.to_string()),
            ("seed", s.seed.to_string()),
            ("omega-min", self.grid.min.to_string()),
            ("omega-max", self.grid.max.to_string()),
            ("omega-points", self.grid.points.to_string()),
            ("evolver", self.evolver.as_str().to_string()),
            ("quadrature", self.quadrature.as_str().to_string()),
            ("out", self.out.display().to_string()),
            ("format", self.format.to_string()),
            ("workers", s.workers.to_string()),
            ("normalize", self.normalize.to_string()),
            ("initial", self.initial.to_string()),
            ("allow-large-dt", s.allow_large_dt.to_string()),
            ("record-stride", s.record_stride.to_string()),
            ("max-lag", self.max_lag.to_string()),
        ]
    }

    pub fn to_settings(&self) -> Settings {
        self.echo()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    /// Config-file text for this run.
    pub fn to_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// The echo written into output headers, without execution details.
    pub fn header_echo(&self) -> Vec<(&'static str, String)> {
        self.echo()
            .into_iter()
            .filter(|(k, _)| !EXECUTION_KEYS.contains(k))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn file_syntax() {
        let s = parse_settings("# comment\nmode = phase  # trailing\n\nGamma=5\n").unwrap();
        assert_eq!(s["mode"], "phase");
        assert_eq!(s["Gamma"], "5");
        assert!(matches!(parse_settings("bogus = 1"), Err(CliError::Config(_))));
        assert!(parse_settings("mode").is_err());
        assert!(parse_settings("mode = a\nmode = b").is_err());
        assert!(parse_settings("mode =").is_err());
    }

    #[test]
    fn unit_rabi_normalizes_rates_and_times() {
        let raw = settings(&[
            ("mode", "analytic-spectrum"),
            ("unit-rabi", "2"),
            ("Gamma", "12"),
            ("gamma", "0.1"),
            ("dt", "0.001"),
            ("omega-min", "-8"),
            ("omega-max", "8"),
        ]);
        let c = RunConfig::from_settings(&raw).unwrap();
        assert_eq!(c.params.noise, 6.0);
        assert_eq!(c.params.gamma, 0.05);
        assert_eq!(c.sim.dt, 0.002);
        assert_eq!((c.grid.min, c.grid.max), (-4.0, 4.0));
    }

    #[test]
    fn enum_values_are_checked() {
        let bad = settings(&[("mode", "spectrum"), ("Gamma", "1")]);
        let err = RunConfig::from_settings(&bad).unwrap_err().to_string();
        assert!(err.contains("mc-spectrum"), "{err}");
    }
}
