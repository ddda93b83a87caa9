use std::f64::consts::PI;

use mollow::atom::dressed_basis;
use mollow::phase::*;
use mollow::trajectory::{rng, run_trajectory};
use mollow::*;
use proptest::prelude::*;

fn record(p: &AtomParams, initial: PureState, dt: f64, sample: f64, t_max: f64, seed: u64) -> TrajectoryRecord {
    let mut cfg = SimConfig::new(dt, t_max, 1, seed);
    cfg.record_stride = ((sample / dt).round() as usize).max(1);
    run_trajectory(&initial, p, &cfg, 0).unwrap()
}

fn phase_record(noise: f64, t_max: f64, seed: u64) -> TrajectoryRecord {
    let p = AtomParams::scaled(0.0, 0.05, noise).unwrap();
    let excited = PureState::excited(&dressed_basis(&p));
    record(&p, excited, 0.01 / p.max_rate(), 0.1, t_max, seed)
}

fn cos_fwhm(s: &PhaseSeries, max_lag: usize) -> f64 {
    let c = correlation(&s.cos, &s.mask, s.sample_interval(), max_lag).unwrap();
    fwhm(&c).unwrap().width
}

#[test]
fn free_evolution_rotates_at_the_splitting() {
    for delta in [0.0, 1.5] {
        let p = AtomParams::scaled(delta, 0.0, 0.0).unwrap();
        let rec = record(&p, PureState::excited(&dressed_basis(&p)), 0.01, 0.1, 40.0, 0);
        let s = phase_difference(&rec).unwrap();
        assert_eq!(s.n_masked(), 0);
        // a_k ∝ e^{−iE_k t}, so arg a₂ − arg a₁ decreases at E₂ − E₁.
        let rate = s.drift_rate().unwrap();
        assert!((rate / p.dressed_splitting() + 1.0).abs() < 1e-4, "Δ = {delta}: {rate}");
    }
}

#[test]
fn dressed_state_is_masked_until_mixed() {
    let p = AtomParams::scaled(0.0, 0.05, 0.5).unwrap();
    let rec = record(&p, PureState::dressed1(), 0.01, 0.01, 20.0, 4);
    let s = phase_difference(&rec).unwrap();
    assert!(s.mask[0]);
    assert!(!s.mask[s.len() - 1]);
    assert!(s.n_masked() < s.len() / 2);

    let closed = AtomParams::scaled(0.0, 0.0, 0.0).unwrap();
    let rec = record(&closed, PureState::dressed1(), 0.01, 0.01, 20.0, 4);
    assert!(matches!(phase_difference(&rec), Err(Error::PhaseUndefined { .. })));
}

#[test]
fn white_noise_is_uncorrelated() {
    let mut r = rng::trajectory_stream(21, 0);
    let n = 20_000;
    let x: Vec<f64> = (0..n).map(|_| rng::uniform(&mut r) - 0.5).collect();
    let c = correlation(&x, &vec![false; n], 1.0, 50).unwrap();
    for (lag, (v, pairs)) in c.values.iter().zip(&c.n_pairs).enumerate().skip(1) {
        assert!(v.abs() < 3.0 / (*pairs as f64).sqrt(), "lag {lag}: {v}");
    }
}

#[test]
fn widths_of_reference_shapes() {
    let dt = 0.01;
    let shape = |f: &dyn Fn(f64) -> f64| {
        let lags: Vec<f64> = (0..2000).map(|k| k as f64 * dt).collect();
        CorrelationSeries {
            values: lags.iter().map(|t| f(*t)).collect(),
            n_pairs: vec![1; lags.len()],
            lags,
            norm: 1.0,
            fwhm: None,
        }
    };
    let w = 2.5;
    let lorentz = fwhm(&shape(&|t| 1.0 / (1.0 + (t / w).powi(2)))).unwrap();
    assert!((lorentz.width / w - 1.0).abs() < 0.01);
    let expo = fwhm(&shape(&|t| (-t / w).exp())).unwrap();
    assert!((expo.width / (w * 2f64.ln()) - 1.0).abs() < 0.01);
    assert!(expo.below.1 > 0.5 && expo.above.1 <= 0.5);
}

#[test]
fn correlation_width_grows_with_noise() {
    let widths: Vec<f64> = [0.2, 1.1, 5.0]
        .iter()
        .map(|&g| cos_fwhm(&phase_difference(&phase_record(g, 2000.0, 8)).unwrap(), 1000))
        .collect();
    assert!(widths[0] < widths[1] && widths[1] < widths[2], "{widths:?}");
}

#[test]
fn halves_of_a_long_run_agree() {
    let s = phase_difference(&phase_record(5.0, 20_000.0, 3)).unwrap();
    let a = cos_fwhm(&s.window(0.0, 10_000.0).unwrap(), 1000);
    let b = cos_fwhm(&s.window(10_000.0, 20_000.0).unwrap(), 1000);
    assert!((a / b - 1.0).abs() < 0.25, "{a} vs {b}");
}

#[test]
fn analysis_outputs() {
    let a = analyze(&phase_record(5.0, 300.0, 2), 100).unwrap();
    let csv = a.to_csv();
    assert!(csv.lines().any(|l| l == "tau,C_cos,C_sin"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 102);
    let v: serde_json::Value = serde_json::from_str(&a.summary_json().unwrap()).unwrap();
    assert!(v["fwhm_sin"]["width"].as_f64().unwrap() > 0.0);
    assert_eq!(v["n_masked"], 0);
}

fn amplitudes(phases: &[f64]) -> Vec<(C64, C64)> {
    phases
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let r = 0.3 + 0.4 * ((k as f64) * 0.37).sin().abs();
            (C64::from(r), C64::from_polar((1.0 - r * r).sqrt(), *d))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wrapping_does_not_change_components(
        phases in prop::collection::vec(-10.0..10.0f64, 20..60),
        k in -3i32..=3,
    ) {
        let times: Vec<f64> = (0..phases.len()).map(|i| i as f64 * 0.1).collect();
        let a = PhaseSeries::from_amplitudes(&times, &amplitudes(&phases)).unwrap();
        let shifted: Vec<f64> = phases.iter().map(|p| p + 2.0 * PI * k as f64).collect();
        let b = PhaseSeries::from_amplitudes(&times, &amplitudes(&shifted)).unwrap();
        for i in 0..a.len() {
            prop_assert!((a.cos[i] - b.cos[i]).abs() < 1e-12 && (a.sin[i] - b.sin[i]).abs() < 1e-12);
            prop_assert!((a.cos[i].powi(2) + a.sin[i].powi(2) - 1.0).abs() < 1e-12);
            prop_assert!(a.dphi[i] > -PI && a.dphi[i] <= PI);
        }
    }

    #[test]
    fn global_phase_is_irrelevant(
        phases in prop::collection::vec(-3.0..3.0f64, 20..60),
        globals in prop::collection::vec(-6.0..6.0f64, 60),
    ) {
        let times: Vec<f64> = (0..phases.len()).map(|i| i as f64 * 0.1).collect();
        let amps = amplitudes(&phases);
        let rotated: Vec<(C64, C64)> = amps
            .iter()
            .zip(&globals)
            .map(|((a, b), g)| {
                let u = C64::from_polar(1.0, *g);
                (a * u, b * u)
            })
            .collect();
        let a = PhaseSeries::from_amplitudes(&times, &amps).unwrap();
        let b = PhaseSeries::from_amplitudes(&times, &rotated).unwrap();
        prop_assert_eq!(&a.mask, &b.mask);
        for i in 0..a.len() {
            prop_assert!(circular_distance(a.dphi[i], b.dphi[i]) < 1e-12);
            prop_assert!((a.cos[i] - b.cos[i]).abs() < 1e-12 && (a.sin[i] - b.sin[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_is_bounded(
        x in prop::collection::vec(-1.0..1.0f64, 100..400),
        masked in prop::collection::vec(any::<bool>(), 400),
        lag_fraction in 0.01..0.1f64,
    ) {
        let mask: Vec<bool> = masked.iter().take(x.len()).enumerate().map(|(i, m)| *m && i % 3 == 0).collect();
        let max_lag = ((x.len() as f64 * lag_fraction) as usize).max(1);
        let c = correlation(&x, &mask, 0.5, max_lag).unwrap();
        prop_assert_eq!(c.values[0], 1.0);
        prop_assert!(c.values.iter().all(|v| v.abs() <= 1.0 + 1e-9));
    }
}
