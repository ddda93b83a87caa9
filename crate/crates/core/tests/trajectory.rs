use mollow::atom::{dressed_basis, Channel, Mat2};
use mollow::master::{dressed_components, Propagator};
use mollow::stats::ks_exponential;
use mollow::trajectory::{read_dump, run_ensemble, run_trajectory, write_dump, InitialCondition, TrajectoryStepper};
use mollow::*;
use proptest::prelude::*;

/// Ensemble against the exact Lindblad propagator; `tol` absorbs the
/// first-order time-step bias of the unraveling.
fn check_against_master(p: &AtomParams, initial: InitialCondition, n_traj: u64, tol: f64) {
    let dt = 0.005;
    let mut cfg = SimConfig::new(dt, 10.0, n_traj, 17);
    cfg.record_stride = 100;
    let avg = run_ensemble(&initial, p, &cfg).unwrap();
    let rho0 = match initial {
        InitialCondition::Pure(s) => s.density(),
        InitialCondition::Mixed(r) => r,
    };
    let exact = Propagator::new(p, Basis::Dressed, dt)
        .trajectory(&rho0, cfg.n_steps() as usize)
        .unwrap();
    for (k, rho) in avg.rho.iter().enumerate() {
        let e = dressed_components(&exact[k * cfg.record_stride]).unwrap();
        let m = dressed_components(rho).unwrap();
        let se = avg.stderr[k];
        // ρ_z = ρ₁₁ − ρ₂₂ with fully anticorrelated entries.
        let bounds = [2.0 * se[0], se[2], se[3]];
        for c in 0..3 {
            let diff = (m[c] - e[c]).abs();
            assert!(diff <= 4.0 * bounds[c] + tol, "t = {}, component {c}: {diff}", avg.times[k]);
        }
    }
}

#[test]
fn ensemble_follows_master_equation_at_resonance() {
    let p = AtomParams::scaled(0.0, 0.05, 0.2).unwrap();
    let excited = PureState::excited(&dressed_basis(&p));
    check_against_master(&p, InitialCondition::Pure(excited), 4000, 2e-3);
}

#[test]
fn mixed_start_follows_master_equation_off_resonance() {
    let p = AtomParams::scaled(3.0, 0.05, 3.0).unwrap();
    let m = Mat2::new(C64::from(0.7), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::from(0.3));
    let rho = DensityMatrix::new(m, Basis::Dressed).unwrap();
    check_against_master(&p, InitialCondition::Mixed(rho), 4000, 2e-3);
}

#[test]
fn noise_interarrival_times_are_exponential() {
    let p = AtomParams::scaled(0.0, 0.05, 2.0).unwrap();
    let cfg = SimConfig::new(1e-3, 3000.0, 1, 9);
    let rec = run_trajectory(&PureState::dressed1(), &p, &cfg, 0).unwrap();
    let times: Vec<f64> = rec
        .jumps
        .iter()
        .filter(|j| j.channel == Channel::Noise)
        .map(|j| j.time)
        .collect();
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(gaps.len() > 5000);
    let ks = ks_exponential(&gaps, p.noise).unwrap();
    assert!(ks.passes(0.01), "{ks:?}");
}

#[test]
fn dump_rejects_truncated_text() {
    let p = AtomParams::scaled(0.5, 0.1, 1.0).unwrap();
    let rec = run_trajectory(&PureState::dressed2(), &p, &SimConfig::new(0.01, 2.0, 1, 3), 0).unwrap();
    let text = write_dump(&rec);
    let lines: Vec<&str> = text.lines().collect();
    let cut = lines[..lines.len() / 2].join("\n");
    assert!(read_dump(&cut).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dump_round_trips(
        delta in -3.0..3.0f64,
        gamma in 0.0..0.5f64,
        noise in 0.0..5.0f64,
        seed in any::<u64>(),
        index in 0u64..1000,
    ) {
        let p = AtomParams::scaled(delta, gamma, noise).unwrap();
        let cfg = SimConfig::new(0.002, 1.0, 1, seed);
        let rec = run_trajectory(&PureState::excited(&dressed_basis(&p)), &p, &cfg, index).unwrap();
        prop_assert_eq!(read_dump(&write_dump(&rec)).unwrap(), rec);
    }

    #[test]
    fn dump_reader_never_panics(text in ".{0,400}") {
        let _ = read_dump(&text);
    }

    #[test]
    fn steps_ignore_global_phase(
        re in -1.0..1.0f64,
        im in -1.0..1.0f64,
        phase in -3.2..3.2f64,
        u in 0.0..1.0f64,
        noise in 0.0..5.0f64,
    ) {
        let p = AtomParams::scaled(0.7, 0.05, noise).unwrap();
        let stepper = TrajectoryStepper::new(&p, 0.01);
        let psi = PureState::new(C64::new(re, im), C64::new(0.4, -0.3)).unwrap();
        let (a, ca) = stepper.step(&psi, [u, 0.0]).unwrap();
        let (b, cb) = stepper.step(&psi.with_global_phase(phase), [u, 0.0]).unwrap();
        prop_assert_eq!(ca, cb);
        let d = a.density().max_abs_diff(&b.density()).unwrap();
        prop_assert!(d < 1e-12);
    }
}
