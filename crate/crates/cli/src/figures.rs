//! Dataset bundles for each figure: the documented parameter sets, run with
//! every method that the figure overlays.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mollow::analytic::decompose;
use mollow::phase::phase_difference;
use mollow::stats::linear_fit;
use mollow::trajectory::run_trajectory;
use mollow::AtomParams;
use serde_json::json;

use crate::config::{Format, Mode, RunConfig, Settings};
use crate::output::{compute_phase, initial_state, provenance_path, run, write_all};
use crate::CliError;

pub const TAGS: [&str; 8] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"];

/// Natural linewidth used by every figure.
const GAMMA: f64 = 0.05;

/// Settings a user may still choose for a bundle; everything else is fixed
/// by the figure.
const PASS_THROUGH: &[&str] = &[
    "ntraj",
    "seed",
    "workers",
    "evolver",
    "quadrature",
    "format",
    "normalize",
    "allow-large-dt",
];

const PHASE_NOISE: [f64; 3] = [0.2, 1.1, 5.0];
const FIT_NOISE: [f64; 4] = [2.0, 3.0, 5.0, 8.0];

fn spectrum_sets(tag: &str) -> &'static [(f64, f64)] {
    match tag {
        "fig2" => &[(0.2, 0.0)],
        "fig3" => &[(6.0, 0.0), (1.1, 0.0)],
        "fig5" => &[(0.2, 3.0)],
        "fig6" => &[(3.0, 3.0)],
        _ => &[],
    }
}

struct Bundle<'a> {
    tag: &'a str,
    dir: &'a Path,
    user: &'a Settings,
    files: Vec<PathBuf>,
}

impl Bundle<'_> {
    fn config(&self, mode: Mode, noise: f64, delta: f64, extra: &[(&str, String)]) -> Result<RunConfig, CliError> {
        let mut s: Settings = self
            .user
            .iter()
            .filter(|(k, _)| PASS_THROUGH.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        s.insert("mode".into(), mode.as_str().into());
        s.insert("Gamma".into(), noise.to_string());
        s.insert("gamma".into(), GAMMA.to_string());
        s.insert("delta".into(), delta.to_string());
        for (k, v) in extra {
            s.insert(k.to_string(), v.clone());
        }
        let format: Format = match s.get("format") {
            Some(f) => f.parse().map_err(CliError::Config)?,
            None => Format::Csv,
        };
        let label = match mode {
            Mode::McSpectrum => "_mc",
            Mode::AnalyticSpectrum => "_analytic",
            _ => "",
        };
        let delta_part = if delta == 0.0 { String::new() } else { format!("_delta{delta}") };
        let name = format!("{}_Gamma{noise}{delta_part}{label}.{format}", self.tag);
        s.insert("out".into(), self.dir.join(name).display().to_string());
        RunConfig::from_settings(&s)
    }

    fn run(&mut self, config: &RunConfig) -> Result<(), CliError> {
        self.files.extend(run(config)?.files);
        Ok(())
    }

    /// Writes a derived table with a minimal provenance sidecar.
    fn table(&mut self, name: &str, text: String, extra: serde_json::Value, start: Instant) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let prov = json!({
            "tool": "mollow",
            "version": env!("CARGO_PKG_VERSION"),
            "figure": self.tag,
            "details": extra,
            "wall_time_s": start.elapsed().as_secs_f64(),
        });
        let prov = serde_json::to_string_pretty(&prov).map_err(mollow::Error::from)?;
        let files = [(path.clone(), text), (provenance_path(&path), prov)];
        write_all(&files)?;
        self.files.extend(files.into_iter().map(|(p, _)| p));
        Ok(())
    }

    fn spectra(&mut self) -> Result<(), CliError> {
        for &(noise, delta) in spectrum_sets(self.tag) {
            let analytic = self.config(Mode::AnalyticSpectrum, noise, delta, &[])?;
            // Same grid for both methods so the curves overlay point by point.
            let grid = [
                ("omega-min", analytic.grid.min.to_string()),
                ("omega-max", analytic.grid.max.to_string()),
                ("omega-points", analytic.grid.points.to_string()),
            ];
            let mc = self.config(Mode::McSpectrum, noise, delta, &grid)?;
            self.run(&analytic)?;
            self.run(&mc)?;
        }
        Ok(())
    }

    fn dip_width(&mut self) -> Result<(), CliError> {
        let start = Instant::now();
        let mut text = format!("# |s_minus| against Gamma, gamma={GAMMA}, delta=0\nGamma,s_minus_abs\n");
        let (lo, hi, n) = (1.05f64, 200.0f64, 121);
        for k in 0..n {
            let g = lo * (hi / lo).powf(k as f64 / (n - 1) as f64);
            let p = AtomParams::scaled(0.0, GAMMA, g)?;
            let s = decompose(&p)?.s_minus().norm();
            let _ = writeln!(text, "{g},{s}");
        }
        self.table("fig4_s_minus.csv", text, json!({"gamma": GAMMA, "Gamma": [lo, hi], "points": n}), start)
    }

    fn phase_series(&mut self) -> Result<(), CliError> {
        for noise in PHASE_NOISE {
            let start = Instant::now();
            let c = self.config(Mode::Phase, noise, 0.0, &[("tmax", "500".into())])?;
            let rec = run_trajectory(&initial_state(&c), &c.params, &c.sim, 0)?;
            let s = phase_difference(&rec)?;
            let mut text = String::new();
            for (k, v) in c.header_echo() {
                let _ = writeln!(text, "# config: run.{k}={v}");
            }
            text.push_str("t,dphi,cos,sin,masked\n");
            for k in 0..s.len() {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{}",
                    s.times[k], s.dphi[k], s.cos[k], s.sin[k], s.mask[k] as u8
                );
            }
            let echo: serde_json::Map<_, _> =
                c.echo().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
            self.table(&format!("fig7_Gamma{noise}_dphi.csv"), text, json!({ "config": echo }), start)?;
        }
        Ok(())
    }

    fn phase_correlations(&mut self) -> Result<(), CliError> {
        for noise in PHASE_NOISE {
            let c = self.config(Mode::Phase, noise, 0.0, &[])?;
            self.run(&c)?;
        }
        Ok(())
    }

    fn width_law(&mut self) -> Result<(), CliError> {
        let start = Instant::now();
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut rows = String::new();
        for noise in FIT_NOISE {
            let c = self.config(Mode::Phase, noise, 0.0, &[])?;
            let a = compute_phase(&c)?;
            let inv = 1.0 / decompose(&c.params)?.s_minus().norm();
            let fc = a.cos.fwhm.map_or(f64::NAN, |f| f.width);
            let fs = a.sin.fwhm.map_or(f64::NAN, |f| f.width);
            let _ = writeln!(rows, "{noise},{inv},{fc},{fs}");
            x.push(inv);
            y.push(fc);
        }
        let fit = linear_fit(&x, &y)?;
        let text = format!(
            "# fit fwhm_cos = slope * inv_s_minus + intercept: slope={}, intercept={}, r_squared={}\nGamma,inv_s_minus,fwhm_cos,fwhm_sin\n{rows}",
            fit.slope, fit.intercept, fit.r_squared
        );
        self.table(
            "fig9_fwhm.csv",
            text,
            json!({"Gamma": FIT_NOISE, "r_squared": fit.r_squared}),
            start,
        )
    }
}

/// Writes the bundle for `tag` into `dir`.
pub fn reproduce(tag: &str, user: &Settings, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !TAGS.contains(&tag) {
        return Err(CliError::Config(format!(
            "unknown figure {tag:?} (expected one of: {})",
            TAGS.join(", ")
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut b = Bundle {
        tag,
        dir,
        user,
        files: Vec::new(),
    };
    let result = match tag {
        "fig4" => b.dip_width(),
        "fig7" => b.phase_series(),
        "fig8" => b.phase_correlations(),
        "fig9" => b.phase_correlations().and_then(|_| b.width_law()),
        _ => b.spectra(),
    };
    if let Err(e) = result {
        for f in &b.files {
            let _ = std::fs::remove_file(f);
        }
        return Err(e);
    }
    Ok(b.files)
}
