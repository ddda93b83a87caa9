//! Command-line driver: configuration, the four run modes, provenance
//! sidecars and figure bundles.

pub mod config;
pub mod figures;
mod output;

use std::path::{Path, PathBuf};

use clap::Parser;
use thiserror::Error;

pub use config::{parse_settings, Format, Initial, Mode, RunConfig, Settings, KEYS};
pub use output::{extract_settings, provenance_path, run, summary_path, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(mollow::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub(crate) fn config(e: mollow::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<mollow::Error> for CliError {
    fn from(e: mollow::Error) -> Self {
        match e {
            mollow::Error::Io(io) => CliError::Io(io.to_string()),
            e @ (mollow::Error::InvalidParameter { .. } | mollow::Error::TimeStepTooLarge { .. }) => {
                CliError::config(e)
            }
            e => CliError::Numeric(e),
        }
    }
}

/// Resonance fluorescence of a driven two-level atom under white frequency
/// noise. Rates are in units of the Rabi frequency unless --unit-rabi is set.
#[derive(Debug, Parser, Default)]
#[command(name = "mollow", version, about)]
pub struct Cli {
    /// mc-spectrum | analytic-spectrum | oracle-spectrum | phase
    #[arg(long)]
    pub mode: Option<String>,
    /// Noise magnitude Γ.
    #[arg(long = "Gamma", allow_hyphen_values = true)]
    pub noise: Option<f64>,
    /// Spontaneous emission rate γ (default 0.05).
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Detuning Δ.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Time step (default 0.01 / max rate).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulated time; in spectrum modes the correlation truncation.
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub ntraj: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "omega-min", allow_hyphen_values = true)]
    pub omega_min: Option<f64>,
    #[arg(long = "omega-max", allow_hyphen_values = true)]
    pub omega_max: Option<f64>,
    #[arg(long = "omega-points")]
    pub omega_points: Option<usize>,
    /// mc-ensemble | master-ode
    #[arg(long)]
    pub evolver: Option<String>,
    /// trapezoid | left-riemann
    #[arg(long)]
    pub quadrature: Option<String>,
    /// Primary output file; a directory for --reproduce.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    pub format: Option<String>,
    /// Worker threads, 0 for all cores (default from MOLLOW_WORKERS).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Scale spectra to unit peak.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// excited | ground | dressed1 | dressed2
    #[arg(long)]
    pub initial: Option<String>,
    /// Read rates as raw angular frequencies and divide by this Rabi frequency.
    #[arg(long = "unit-rabi")]
    pub unit_rabi: Option<f64>,
    /// Skip the dt · max-rate ≤ 0.05 check.
    #[arg(long = "allow-large-dt", num_args = 0..=1, default_missing_value = "true")]
    pub allow_large_dt: Option<bool>,
    /// Steps between recorded samples.
    #[arg(long = "record-stride")]
    pub record_stride: Option<usize>,
    /// Longest correlation lag in phase mode (time units).
    #[arg(long = "max-lag")]
    pub max_lag: Option<f64>,
    /// key = value configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rerun with the configuration recorded in an output or provenance file.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Emit the dataset bundle for a figure tag (fig2 … fig9).
    #[arg(long)]
    pub reproduce: Option<String>,
}

impl Cli {
    /// Settings given on the command line.
    pub fn flag_settings(&self) -> Settings {
        let mut s = Settings::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.insert(k.to_string(), v);
            }
        };
        let f = |v: Option<f64>| v.map(|x| x.to_string());
        put("mode", self.mode.clone());
        put("Gamma", f(self.noise));
        put("gamma", f(self.gamma));
        put("delta", f(self.delta));
        put("dt", f(self.dt));
        put("tmax", f(self.tmax));
        put("ntraj", self.ntraj.map(|x| x.to_string()));
        put("seed", self.seed.map(|x| x.to_string()));
        put("omega-min", f(self.omega_min));
        put("omega-max", f(self.omega_max));
        put("omega-points", self.omega_points.map(|x| x.to_string()));
        put("evolver", self.evolver.clone());
        put("quadrature", self.quadrature.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("format", self.format.clone());
        put("workers", self.workers.map(|x| x.to_string()));
        put("normalize", self.normalize.map(|x| x.to_string()));
        put("initial", self.initial.clone());
        put("unit-rabi", f(self.unit_rabi));
        put("allow-large-dt", self.allow_large_dt.map(|x| x.to_string()));
        put("record-stride", self.record_stride.map(|x| x.to_string()));
        put("max-lag", f(self.max_lag));
        s
    }

    /// Replayed file, then config file, then flags.
    pub fn settings(&self) -> Result<Settings, CliError> {
        let mut s = Settings::new();
        if let Some(path) = &self.replay {
            let text = read(path)?;
            s.extend(extract_settings(&text)?);
        }
        if let Some(path) = &self.config {
            s.extend(parse_settings(&read(path)?)?);
        }
        s.extend(self.flag_settings());
        Ok(s)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Runs a parsed command line and returns the files written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let settings = cli.settings()?;
    if let Some(tag) = &cli.reproduce {
        let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(tag));
        return figures::reproduce(tag, &settings, &dir);
    }
    let config = RunConfig::from_settings(&settings)?;
    Ok(run(&config)?.files)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("mollow: {e}");
            e.exit_code()
        }
    }
}
