use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mollow::analytic::{regression_ode_oracle, spectrum_analytic};
use mollow::atom::dressed_basis;
use mollow::phase::{analyze, PhaseAnalysis};
use mollow::reconstruct::{reconstruct_spectrum, SpectrumOptions};
use mollow::trajectory::run_trajectory;
use mollow::{PureState, SpectrumSeries};
use serde_json::{json, Value};

use crate::config::{parse_settings, Format, Initial, Mode, RunConfig, Settings, KEYS};
use crate::CliError;

/// Prefix of echoed run settings inside output headers.
const RUN_PREFIX: &str = "run.";

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub wall_time: f64,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn provenance_path(out: &Path) -> PathBuf {
    with_suffix(out, ".provenance.json")
}

pub fn summary_path(out: &Path) -> PathBuf {
    with_suffix(out, ".summary.json")
}

pub(crate) fn initial_state(config: &RunConfig) -> PureState {
    let frame = dressed_basis(&config.params);
    match config.initial {
        Initial::Excited => PureState::excited(&frame),
        Initial::Ground => PureState::ground(&frame),
        Initial::Dressed1 => PureState::dressed1(),
        Initial::Dressed2 => PureState::dressed2(),
    }
}

pub(crate) fn compute_spectrum(config: &RunConfig) -> Result<SpectrumSeries, CliError> {
    let p = &config.params;
    let mut s = match config.mode {
        Mode::AnalyticSpectrum => spectrum_analytic(p, &config.grid)?,
        Mode::OracleSpectrum => regression_ode_oracle(p, &config.grid)?,
        Mode::McSpectrum => {
            let options = SpectrumOptions {
                quadrature: config.quadrature,
                ..SpectrumOptions::default()
            };
            reconstruct_spectrum(p, &config.sim, &config.grid, config.evolver, &options)?
        }
        Mode::Phase => unreachable!("phase mode has no spectrum"),
    };
    if config.normalize {
        s = s.normalized();
    }
    for (k, v) in config.header_echo() {
        s.config.insert(format!("{RUN_PREFIX}{k}"), v);
    }
    Ok(s)
}

pub(crate) fn compute_phase(config: &RunConfig) -> Result<PhaseAnalysis, CliError> {
    let rec = run_trajectory(&initial_state(config), &config.params, &config.sim, 0)?;
    let mut a = analyze(&rec, config.max_lag_samples())?;
    for (k, v) in config.header_echo() {
        a.config.insert(format!("{RUN_PREFIX}{k}"), v);
    }
    Ok(a)
}

fn phase_json(a: &PhaseAnalysis) -> Result<String, CliError> {
    let mut v: Value = serde_json::from_str(&a.summary_json()?).map_err(mollow::Error::from)?;
    v["tau"] = json!(a.cos.lags);
    v["C_cos"] = json!(a.cos.values);
    v["C_sin"] = json!(a.sin.values);
    Ok(serde_json::to_string_pretty(&v).map_err(mollow::Error::from)?)
}

/// Executes one run and writes its primary output, any companion files and
/// the provenance sidecar. Nothing is left behind on failure.
pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let mut warnings = Vec::new();
    match config.mode {
        Mode::Phase => {
            let a = compute_phase(config)?;
            let primary = match config.format {
                Format::Csv => a.to_csv(),
                Format::Json => phase_json(&a)?,
            };
            files.push((config.out.clone(), primary));
            files.push((summary_path(&config.out), a.summary_json()?));
        }
        _ => {
            let s = compute_spectrum(config)?;
            warnings.extend(s.warnings.iter().cloned());
            let primary = match config.format {
                Format::Csv => s.to_csv(),
                Format::Json => s.to_json()?,
            };
            files.push((config.out.clone(), primary));
        }
    }
    let wall_time = start.elapsed().as_secs_f64();
    let outputs: Vec<String> = files.iter().map(|(p, _)| p.display().to_string()).collect();
    let echo: serde_json::Map<String, Value> = config
        .echo()
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    let provenance = json!({
        "tool": "mollow",
        "version": env!("CARGO_PKG_VERSION"),
        "mode": config.mode.as_str(),
        "seed": config.sim.seed,
        "config": echo,
        "outputs": outputs,
        "warnings": warnings,
        "wall_time_s": wall_time,
    });
    let text = serde_json::to_string_pretty(&provenance).map_err(mollow::Error::from)?;
    files.push((provenance_path(&config.out), text));
    write_all(&files)?;
    Ok(Outcome {
        files: files.into_iter().map(|(p, _)| p).collect(),
        warnings,
        wall_time,
    })
}

/// Writes every file or none of them.
pub(crate) fn write_all(files: &[(PathBuf, String)]) -> Result<(), CliError> {
    for (i, (path, text)) in files.iter().enumerate() {
        if let Err(e) = std::fs::write(path, text) {
            for (p, _) in &files[..=i] {
                let _ = std::fs::remove_file(p);
            }
            return Err(CliError::io(path, e));
        }
    }
    Ok(())
}

/// Recovers run settings from an output file (CSV header or JSON `config`),
/// a provenance sidecar or a plain config file.
pub fn extract_settings(text: &str) -> Result<Settings, CliError> {
    let mut found = Settings::new();
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let Some(map) = v.get("config").and_then(Value::as_object) else {
            return Err(CliError::Config("no config block in JSON input".into()));
        };
        let entries = map
            .iter()
            .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())));
        let all: Vec<(String, String)> = entries.collect();
        let prefixed: Settings = all
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(RUN_PREFIX).map(|k| (k.to_string(), v.clone())))
            .collect();
        found = if prefixed.is_empty() {
            all.into_iter().filter(|(k, _)| KEYS.contains(&k.as_str())).collect()
        } else {
            prefixed
        };
    } else {
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# config: ") {
                if let Some((k, v)) = rest.split_once('=') {
                    if let Some(k) = k.strip_prefix(RUN_PREFIX) {
                        found.insert(k.to_string(), v.to_string());
                    }
                }
            }
        }
        if found.is_empty() && !text.lines().any(|l| l.starts_with("# ")) {
            found = parse_settings(text)?;
        }
    }
    if found.is_empty() {
        return Err(CliError::Config("no run configuration found in input".into()));
    }
    Ok(found)
}
