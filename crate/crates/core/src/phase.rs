//! Relative phase of the dressed-state amplitudes along a single trajectory.
//!
//! For a pure state a₁|1⟩ + a₂|2⟩ the phase difference is
//! Δφ = arg a₂ − arg a₁, wrapped to (−π, π]. Correlations are computed on
//! cos Δφ and sin Δφ rather than on the circular variable itself.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectrum::ParamsHeader;
use crate::stats::linear_fit;
use crate::trajectory::TrajectoryRecord;
use crate::C64;

/// Amplitudes smaller than this in magnitude have no usable phase.
pub const AMPLITUDE_FLOOR: f64 = 1e-6;

/// Relative tolerance on the spacing of a uniform time grid.
const GRID_TOLERANCE: f64 = 1e-9;

pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    pub times: Vec<f64>,
    /// Wrapped to (−π, π]; zero where masked.
    pub dphi: Vec<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    /// `true` where either amplitude is below [`AMPLITUDE_FLOOR`].
    pub mask: Vec<bool>,
}

impl PhaseSeries {
    /// Builds the series from dressed amplitudes (a₁, a₂) on a uniform grid.
    pub fn from_amplitudes(times: &[f64], amps: &[(C64, C64)]) -> Result<Self> {
        if times.len() != amps.len() {
            return Err(Error::GridMismatch);
        }
        check_uniform(times)?;
        let n = times.len();
        let mut s = PhaseSeries {
            times: times.to_vec(),
            dphi: vec![0.0; n],
            cos: vec![0.0; n],
            sin: vec![0.0; n],
            mask: vec![false; n],
        };
        for (k, (a1, a2)) in amps.iter().enumerate() {
            if a1.norm() < AMPLITUDE_FLOOR || a2.norm() < AMPLITUDE_FLOOR {
                s.mask[k] = true;
                continue;
            }
            let z = a2 * a1.conj();
            let r = z.norm();
            s.cos[k] = z.re / r;
            s.sin[k] = z.im / r;
            s.dphi[k] = wrap_phase(s.sin[k].atan2(s.cos[k]));
        }
        let masked = s.n_masked();
        if 2 * masked > n {
            return Err(Error::PhaseUndefined { masked, total: n });
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_masked(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn sample_interval(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    /// Samples with `t0 ≤ t ≤ t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&k| self.times[k] >= t0 && self.times[k] <= t1)
            .collect();
        let pick = |v: &[f64]| keep.iter().map(|&k| v[k]).collect::<Vec<_>>();
        let s = PhaseSeries {
            times: pick(&self.times),
            dphi: pick(&self.dphi),
            cos: pick(&self.cos),
            sin: pick(&self.sin),
            mask: keep.iter().map(|&k| self.mask[k]).collect(),
        };
        let masked = s.n_masked();
        if s.is_empty() || 2 * masked > s.len() {
            return Err(Error::PhaseUndefined {
                masked,
                total: s.len(),
            });
        }
        Ok(s)
    }

    /// Δφ unwrapped across consecutive unmasked samples, paired with time.
    pub fn unwrapped(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut last: Option<f64> = None;
        let mut acc = 0.0;
        for k in 0..self.len() {
            if self.mask[k] {
                continue;
            }
            let x = self.dphi[k];
            acc = match last {
                None => x,
                Some(prev) => acc + wrap_phase(x - prev),
            };
            last = Some(x);
            out.push((self.times[k], acc));
        }
        out
    }

    /// Least-squares slope of the unwrapped phase. Meaningful only when the
    /// phase moves by less than π between samples.
    pub fn drift_rate(&self) -> Result<f64> {
        let (t, y): (Vec<f64>, Vec<f64>) = self.unwrapped().into_iter().unzip();
        Ok(linear_fit(&t, &y)?.slope)
    }

    pub fn histogram(&self, bins: usize) -> PhaseHistogram {
        PhaseHistogram::new(
            self.dphi
                .iter()
                .zip(&self.mask)
                .filter(|(_, m)| !**m)
                .map(|(x, _)| *x),
            bins,
        )
    }
}

fn check_uniform(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Ok(());
    }
    let h = times[1] - times[0];
    if !(h > 0.0) {
        return Err(Error::NonUniformGrid);
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > GRID_TOLERANCE * h.max(w[1].abs()) {
            return Err(Error::NonUniformGrid);
        }
    }
    Ok(())
}

/// Phase difference at every recorded sample of a trajectory.
pub fn phase_difference(record: &TrajectoryRecord) -> Result<PhaseSeries> {
    let amps: Vec<(C64, C64)> = record.states.iter().map(|s| (s.amp1(), s.amp2())).collect();
    PhaseSeries::from_amplitudes(&record.times, &amps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fwhm {
    /// Lag at which C first drops through one half.
    pub width: f64,
    /// Bracketing samples (τ, C) on either side of the crossing.
    pub below: (f64, f64),
    pub above: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    /// Scale applied to the raw lag sums so that C(0) = 1.
    pub norm: f64,
    /// Unmasked pairs contributing at each lag.
    pub n_pairs: Vec<usize>,
    pub fwhm: Option<Fwhm>,
}

/// Normalized autocorrelation of `x` for lags `0..=max_lag` samples.
///
/// C(τ) = c·Σ_t (x(t+τ) − x̄)(x(t) − x̄)·dt, with x̄ the mean over the unmasked
/// samples and c fixed by C(0) = 1. Pairs with a masked endpoint are skipped.
pub fn correlation(x: &[f64], mask: &[bool], dt: f64, max_lag: usize) -> Result<CorrelationSeries> {
    if x.len() != mask.len() {
        return Err(Error::GridMismatch);
    }
    if max_lag == 0 || x.len() < 10 * max_lag {
        return Err(Error::SeriesTooShort {
            samples: x.len(),
            max_lag,
        });
    }
    let valid = mask.iter().filter(|m| !**m).count();
    if valid == 0 {
        return Err(Error::PhaseUndefined {
            masked: x.len(),
            total: x.len(),
        });
    }
    let mean = x
        .iter()
        .zip(mask)
        .filter(|(_, m)| !**m)
        .map(|(v, _)| *v)
        .sum::<f64>()
        / valid as f64;
    let y: Vec<f64> = x
        .iter()
        .zip(mask)
        .map(|(v, m)| if *m { 0.0 } else { v - mean })
        .collect();
    let raw: Vec<(f64, usize)> = (0..=max_lag)
        .into_par_iter()
        .map(|lag| {
            let mut sum = 0.0;
            let mut pairs = 0;
            for t in 0..y.len() - lag {
                if !mask[t] && !mask[t + lag] {
                    sum += y[t + lag] * y[t];
                    pairs += 1;
                }
            }
            (sum * dt, pairs)
        })
        .collect();
    let zero = raw[0].0;
    if !(zero > 0.0) || zero <= f64::EPSILON * dt * valid as f64 * mean.abs().max(1.0).powi(2) {
        return Err(Error::ZeroVariance);
    }
    let norm = 1.0 / zero;
    let mut values: Vec<f64> = raw.iter().map(|(s, _)| s * norm).collect();
    values[0] = 1.0;
    let mut out = CorrelationSeries {
        lags: (0..=max_lag).map(|k| k as f64 * dt).collect(),
        values,
        norm,
        n_pairs: raw.iter().map(|(_, p)| *p).collect(),
        fwhm: None,
    };
    out.fwhm = fwhm(&out).ok();
    Ok(out)
}

/// First lag at which the linearly interpolated correlation reaches one half.
pub fn fwhm(corr: &CorrelationSeries) -> Result<Fwhm> {
    let max_lag = corr.values.len().saturating_sub(1);
    if corr.values.first() != Some(&1.0) {
        return Err(Error::InvalidState("correlation not normalized to C(0) = 1".into()));
    }
    for k in 1..corr.values.len() {
        let (c0, c1) = (corr.values[k - 1], corr.values[k]);
        if c1 <= 0.5 {
            let (t0, t1) = (corr.lags[k - 1], corr.lags[k]);
            let width = if c0 == c1 { t1 } else { t0 + (c0 - 0.5) / (c0 - c1) * (t1 - t0) };
            return Ok(Fwhm {
                width,
                below: (t0, c0),
                above: (t1, c1),
            });
        }
    }
    Err(Error::NoHalfCrossing { max_lag })
}

/// Histogram of wrapped phases on equal bins covering (−π, π].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHistogram {
    pub counts: Vec<usize>,
}

impl PhaseHistogram {
    pub fn new(values: impl IntoIterator<Item = f64>, bins: usize) -> Self {
        let bins = bins.max(1);
        let mut counts = vec![0; bins];
        for v in values {
            let u = (wrap_phase(v) + PI) / (2.0 * PI);
            let k = ((u * bins as f64) as usize).min(bins - 1);
            counts[k] += 1;
        }
        PhaseHistogram { counts }
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        -PI + (k as f64 + 0.5) * 2.0 * PI / self.counts.len() as f64
    }

    /// Counts averaged over a circular window of `2·half + 1` bins.
    pub fn smoothed(&self, half: usize) -> Vec<f64> {
        let n = self.counts.len();
        (0..n)
            .map(|k| {
                let s: usize = (0..=2 * half)
                    .map(|j| self.counts[(k + n * (half + 1) + j - half) % n])
                    .sum();
                s as f64 / (2 * half + 1) as f64
            })
            .collect()
    }

    /// Circular local maxima of the smoothed histogram, highest first, as
    /// (bin center, smoothed count).
    pub fn modes(&self, half: usize) -> Vec<(f64, f64)> {
        let s = self.smoothed(half);
        let n = s.len();
        if n < 3 {
            return Vec::new();
        }
        let mut out: Vec<(f64, f64)> = Vec::new();
        for k in 0..n {
            let (l, r) = (s[(k + n - 1) % n], s[(k + 1) % n]);
            // Plateaus report their first bin only.
            if s[k] > l && s[k] >= r {
                out.push((self.bin_center(k), s[k]));
            }
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }
}

/// Smallest distance between two angles.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

/// Phase statistics for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAnalysis {
    pub params: ParamsHeader,
    pub config: BTreeMap<String, String>,
    pub n_samples: usize,
    pub n_masked: usize,
    pub drift_rate: f64,
    pub cos: CorrelationSeries,
    pub sin: CorrelationSeries,
    /// Histogram modes of Δφ, highest first.
    pub modes: Vec<(f64, f64)>,
}

/// Bins used for the mode summary.
pub const HISTOGRAM_BINS: usize = 36;

pub fn analyze(record: &TrajectoryRecord, max_lag: usize) -> Result<PhaseAnalysis> {
    let series = phase_difference(record)?;
    let dt = series.sample_interval();
    let cos = correlation(&series.cos, &series.mask, dt, max_lag)?;
    let sin = correlation(&series.sin, &series.mask, dt, max_lag)?;
    let mut config = BTreeMap::new();
    let c = &record.config;
    config.insert("dt".into(), c.dt.to_string());
    config.insert("t_max".into(), c.t_max.to_string());
    config.insert("seed".into(), c.seed.to_string());
    config.insert("record_stride".into(), c.record_stride.to_string());
    config.insert("traj_index".into(), record.traj_index.to_string());
    config.insert("max_lag_samples".into(), max_lag.to_string());
    Ok(PhaseAnalysis {
        params: (&record.params).into(),
        config,
        n_samples: series.len(),
        n_masked: series.n_masked(),
        drift_rate: series.drift_rate().unwrap_or(f64::NAN),
        modes: series.histogram(HISTOGRAM_BINS).modes(1),
        cos,
        sin,
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    params: &'a ParamsHeader,
    config: &'a BTreeMap<String, String>,
    n_samples: usize,
    n_masked: usize,
    drift_rate: Option<f64>,
    fwhm_cos: Option<Fwhm>,
    fwhm_sin: Option<Fwhm>,
    modes: Vec<[f64; 2]>,
}

impl PhaseAnalysis {
    /// `tau,C_cos,C_sin` with a commented header.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(
            s,
            "# params: omega={}, delta={}, gamma={}, Gamma={}",
            p.omega, p.delta, p.gamma, p.noise
        );
        for (k, v) in &self.config {
            let _ = writeln!(s, "# config: {k}={v}");
        }
        s.push_str("tau,C_cos,C_sin\n");
        for ((t, c), si) in self.cos.lags.iter().zip(&self.cos.values).zip(&self.sin.values) {
            let _ = writeln!(s, "{t},{c},{si}");
        }
        s
    }

    pub fn summary_json(&self) -> Result<String> {
        let summary = Summary {
            params: &self.params,
            config: &self.config,
            n_samples: self.n_samples,
            n_masked: self.n_masked,
            drift_rate: self.drift_rate.is_finite().then_some(self.drift_rate),
            fwhm_cos: self.cos.fwhm,
            fwhm_sin: self.sin.fwhm,
            modes: self.modes.iter().map(|(a, b)| [*a, *b]).collect(),
        };
        Ok(serde_json::to_string_pretty(&summary)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapping_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((wrap_phase(-0.2) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn fwhm_interpolates() {
        let c = CorrelationSeries {
            lags: vec![0.0, 1.0, 2.0],
            values: vec![1.0, 0.75, 0.25],
            norm: 1.0,
            n_pairs: vec![3, 2, 1],
            fwhm: None,
        };
        let f = fwhm(&c).unwrap();
        assert!((f.width - 1.5).abs() < 1e-15);
        assert_eq!(f.below, (1.0, 0.75));
        let flat = CorrelationSeries {
            values: vec![1.0, 0.9, 0.8],
            ..c
        };
        assert!(matches!(fwhm(&flat), Err(Error::NoHalfCrossing { max_lag: 2 })));
    }

    #[test]
    fn histogram_modes_wrap() {
        let h = PhaseHistogram::new([PI, PI, -PI + 0.01, 0.0, 0.01, 0.02, 1.5], 12);
        let modes = h.modes(0);
        assert_eq!(modes.len(), 3);
        assert!(circular_distance(modes[0].0, 0.0) < 0.3);
        assert!(circular_distance(modes[1].0, PI) < 0.3);
    }

    #[test]
    fn constant_series_has_no_correlation() {
        let x = vec![0.3; 100];
        let m = vec![false; 100];
        assert!(matches!(correlation(&x, &m, 0.1, 5), Err(Error::ZeroVariance)));
        assert!(matches!(
            correlation(&x, &m, 0.1, 11),
            Err(Error::SeriesTooShort { .. })
        ));
    }
}
