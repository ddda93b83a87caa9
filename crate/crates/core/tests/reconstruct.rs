use mollow::analytic::{spectrum_analytic, steady_constants, BlochState, BlochSystem};
use mollow::atom::{dressed_basis, mean_hamiltonian, Mat2};
use mollow::reconstruct::*;
use mollow::*;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn ode_set(p: &AtomParams, dt: f64, t_max: f64) -> BasisSet {
    let cfg = SimConfig::new(dt, t_max, 1, 0);
    evolve_basis(&standard_basis(), p, &cfg, Evolver::MasterOde).unwrap()
}

fn max_diff(a: &Mat2, b: &Mat2) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn reconstruction_starts_at_target() {
    let p = AtomParams::scaled(0.4, 0.05, 1.1).unwrap();
    let set = ode_set(&p, 0.01, 1.0);
    let r = reconstruct_heisenberg(&set, &Operator2::raising()).unwrap();
    let sp = dressed_basis(&p).operator_in(&Operator2::raising(), Basis::Dressed);
    assert!(max_diff(r.ops[0].matrix(), sp.matrix()) < 1e-12);
}

#[test]
fn undamped_reconstruction_is_unitary_conjugation() {
    let p = AtomParams::scaled(0.8, 0.0, 0.0).unwrap();
    let set = ode_set(&p, 0.01, 6.0);
    let r = reconstruct_heisenberg(&set, &Operator2::raising()).unwrap();
    let h = *mean_hamiltonian(&p).matrix();
    let w = p.dressed_splitting();
    // Everything in the dressed basis, where H is diagonal.
    let sp = *dressed_basis(&p).operator_in(&Operator2::raising(), Basis::Dressed).matrix();
    for (t, op) in r.times.iter().zip(&r.ops).step_by(37) {
        // H² = (W/2)² I, so e^{−iHt} = cos(Wt/2) − i sin(Wt/2) H/(W/2).
        let u = Mat2::identity() * C64::from((0.5 * w * t).cos())
            - h * C64::new(0.0, (0.5 * w * t).sin() / (0.5 * w));
        let expected = u.adjoint() * sp * u;
        assert!(max_diff(op.matrix(), &expected) < 1e-9, "t = {t}");
    }
}

#[test]
fn reconstruction_reproduces_basis_expectations() {
    let p = AtomParams::scaled(0.0, 0.05, 6.0).unwrap();
    let mut cfg = SimConfig::new(0.01 / p.max_rate(), 2.0, 200, 3);
    cfg.record_stride = 10;
    for evolver in [Evolver::MasterOde, Evolver::McEnsemble] {
        let set = evolve_basis(&standard_basis(), &p, &cfg, evolver).unwrap();
        let r = reconstruct_heisenberg(&set, &Operator2::raising()).unwrap();
        let sp = dressed_basis(&p).operator_in(&Operator2::raising(), Basis::Dressed);
        let tol = match evolver {
            Evolver::MasterOde => 1e-10,
            Evolver::McEnsemble => 1e-3,
        };
        assert!(max_diff(r.ops[0].matrix(), sp.matrix()) < tol);
        for n in (0..set.times.len()).step_by(7) {
            for i in 0..4 {
                let direct = (sp.matrix() * set.evolved[i][n].matrix()).trace();
                let rebuilt = (r.ops[n].matrix() * set.initial[i].matrix()).trace();
                assert!((direct - rebuilt).norm() < 1e-12, "{evolver:?} i={i} n={n}");
            }
        }
    }
}

#[test]
fn reconstruction_predicts_random_initial_states() {
    let p = AtomParams::scaled(0.7, 0.3, 0.4).unwrap();
    let set = ode_set(&p, 0.005, 4.0);
    let r = reconstruct_heisenberg(&set, &Operator2::raising()).unwrap();
    let frame = dressed_basis(&p);
    let sys = BlochSystem::new(&p);
    let checkpoints: Vec<f64> = (1..=8).map(|k| 0.5 * k as f64).collect();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = (0.0..1.0f64, 0.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64);
    for _ in 0..20 {
        let (a, b, c, d) = strategy.new_tree(&mut runner).unwrap().current();
        // Random pure state mixed with a random diagonal weight.
        let psi = PureState::new(C64::new(a, c), C64::new(b, d)).unwrap();
        let mix = 0.3 * a;
        let m = psi.density().matrix() * C64::from(1.0 - mix)
            + Mat2::from_diagonal(&nalgebra::Vector2::new(C64::from(mix * b), C64::from(mix * (1.0 - b))));
        let rho0 = DensityMatrix::new(m, Basis::Bare).unwrap();
        let start = BlochState::from_density(&rho0).unwrap();
        let evolved = sys.evolve(&start, 1e-3, &checkpoints);
        let rho0_d = frame.density_in(&rho0, Basis::Dressed);
        for (t, s) in checkpoints.iter().zip(&evolved) {
            let n = (t / 0.005).round() as usize;
            let predicted = (r.ops[n].matrix() * rho0_d.matrix()).trace();
            assert!((predicted - s.sp).norm() < 1e-8, "t = {t}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn reconstruction_is_linear(
        ar in -2.0..2.0f64, ai in -2.0..2.0f64, br in -2.0..2.0f64, bi in -2.0..2.0f64,
    ) {
        let p = AtomParams::scaled(0.3, 0.1, 0.5).unwrap();
        let set = ode_set(&p, 0.05, 2.0);
        let alpha = C64::new(ar, ai);
        let beta = C64::new(br, bi);
        let a = Operator2::raising();
        let b = Operator2::spin_z();
        let combo = a.scale(alpha).try_add(&b.scale(beta)).unwrap();
        let ra = reconstruct_heisenberg(&set, &a).unwrap();
        let rb = reconstruct_heisenberg(&set, &b).unwrap();
        let rc = reconstruct_heisenberg(&set, &combo).unwrap();
        for n in 0..set.times.len() {
            let lin = ra.ops[n].matrix() * alpha + rb.ops[n].matrix() * beta;
            prop_assert!(max_diff(&lin, rc.ops[n].matrix()) < 1e-12);
        }
    }
}

#[test]
fn basis_converges_to_unique_steady_state() {
    let p = AtomParams::scaled(0.0, 0.05, 6.0).unwrap();
    let rate = mollow::analytic::slowest_decay_rate(&p);
    let set = ode_set(&p, 0.05, 50.0 / rate);
    let last = set.times.len() - 1;
    for i in 0..4 {
        for j in 0..4 {
            assert!(set.evolved[i][last].max_abs_diff(&set.evolved[j][last]).unwrap() < 1e-3);
        }
    }
    assert!(set.steady_mismatch().unwrap() < 1e-6);
    // Closed-form fixed point as a second reference.
    let k = steady_constants(&p).state();
    let got = BlochState::from_density(&dressed_basis(&p).density_in(&set.steady, Basis::Bare)).unwrap();
    assert!((got.sz - k.sz).abs() < 1e-6 && (got.sp - k.sp).norm() < 1e-6);
}

#[test]
fn undamped_basis_evolution_preserves_spectrum_of_each_element() {
    let p = AtomParams::scaled(1.3, 0.0, 0.0).unwrap();
    let set = ode_set(&p, 0.02, 5.0);
    for r in &set.evolved {
        for rho in r.iter().step_by(25) {
            assert!((rho.trace() - 1.0).abs() < 1e-12);
            let ev = rho.eigenvalues();
            assert!((ev[0].max(ev[1]) - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn ode_spectrum_matches_closed_form() {
    let p = AtomParams::scaled(0.0, 0.05, 6.0).unwrap();
    let grid = OmegaGrid::new(-24.0, 24.0, 161).unwrap();
    let cfg = SimConfig::new(1e-3, default_truncation(&p).unwrap(), 1, 0);
    let s = reconstruct_spectrum(&p, &cfg, &grid, Evolver::MasterOde, &SpectrumOptions::default()).unwrap();
    let a = spectrum_analytic(&p, &grid).unwrap();
    assert_eq!(s.method, SpectrumMethod::OdeReconstruct);
    assert!(s.warnings.is_empty(), "{:?}", s.warnings);
    assert!(s.max_relative_deviation(&a).unwrap() < 1e-4);
}

#[test]
fn dip_and_triplet_shapes() {
    let dip = AtomParams::scaled(0.0, 0.05, 6.0).unwrap();
    let grid = OmegaGrid::new(-3.0, 3.0, 121).unwrap();
    let cfg = SimConfig::new(2e-3, default_truncation(&dip).unwrap(), 1, 0);
    let s = reconstruct_spectrum(&dip, &cfg, &grid, Evolver::MasterOde, &SpectrumOptions::default()).unwrap();
    let centre = 60;
    assert_eq!(s.local_minima(), vec![centre]);
    let maxima = s.local_maxima();
    assert_eq!(maxima.len(), 2);
    assert_eq!(maxima[0] + maxima[1], 2 * centre);

    let triplet = AtomParams::scaled(0.0, 0.05, 0.2).unwrap();
    let cfg = SimConfig::new(2e-3, default_truncation(&triplet).unwrap(), 1, 0);
    let grid = OmegaGrid::new(-2.0, 2.0, 401).unwrap();
    let s = reconstruct_spectrum(&triplet, &cfg, &grid, Evolver::MasterOde, &SpectrumOptions::default()).unwrap();
    let peaks: Vec<f64> = s.local_maxima().iter().map(|&k| s.omega[k]).collect();
    assert_eq!(peaks.len(), 3, "{peaks:?}");
    let gp = triplet.gamma_prime();
    let side = (1.0 - gp * gp).sqrt();
    assert!(peaks[1].abs() < 1e-12);
    assert!((peaks[2] - side).abs() < 0.02 && (peaks[0] + side).abs() < 0.02);
}

#[test]
fn two_sided_sum_is_real() {
    // Extending f(−τ) = f(τ)* and summing directly over the symmetric grid
    // gives a real transform equal to twice the one-sided real part.
    let p = AtomParams::scaled(0.0, 0.05, 1.1).unwrap();
    let set = ode_set(&p, 0.005, default_truncation(&p).unwrap());
    let r = reconstruct_heisenberg(&set, &Operator2::raising()).unwrap();
    let f = correlation(&r, &set.steady, true).unwrap();
    let grid: Vec<f64> = (0..41).map(|k| -4.0 + 0.2 * k as f64).collect();
    let dt = set.sample_interval();
    let pos = fourier_sum(&f, dt, &grid, Quadrature::Trapezoid);
    let n = f.len() as i64 - 1;
    let peak = pos.iter().map(|z| z.re).fold(0.0, f64::max);
    for (w, a) in grid.iter().zip(&pos) {
        let mut total = C64::new(0.0, 0.0);
        for k in -n..=n {
            let g = if k >= 0 { f[k as usize] } else { f[(-k) as usize].conj() };
            let weight = if k.abs() == n { 0.5 * dt } else { dt };
            total += C64::from_polar(weight, -w * k as f64 * dt) * g;
        }
        assert!(total.im.abs() < 1e-9 * peak, "ω = {w}: {}", total.im);
        assert!((total.re - 2.0 * a.re).abs() < 1e-9 * peak, "ω = {w}");
    }
}

#[test]
fn short_truncation_is_flagged() {
    let p = AtomParams::scaled(0.0, 0.05, 6.0).unwrap();
    let cfg = SimConfig::new(0.01, 5.0, 1, 0);
    let grid = OmegaGrid::new(-1.0, 1.0, 5).unwrap();
    let s = reconstruct_spectrum(&p, &cfg, &grid, Evolver::MasterOde, &SpectrumOptions::default());
    // ρ̄(T) has not relaxed yet, which the master-equation evolver refuses.
    assert!(matches!(s, Err(Error::InvalidState(_))));
    let set = ode_set(&p, 0.01, 5.0);
    let r = reconstruct_heisenberg(&set, &Operator2::raising()).unwrap();
    let s = spectrum(&r, &set.steady, &grid, 0.01, &SpectrumOptions::default()).unwrap();
    assert_eq!(s.warnings.len(), 1);
}

#[test]
fn spectrum_rejects_mismatched_step() {
    let p = AtomParams::scaled(0.0, 0.05, 1.0).unwrap();
    let set = ode_set(&p, 0.01, 1.0);
    let r = reconstruct_heisenberg(&set, &Operator2::raising()).unwrap();
    let grid = OmegaGrid::new(-1.0, 1.0, 5).unwrap();
    let err = spectrum(&r, &set.steady, &grid, 0.02, &SpectrumOptions::default());
    assert!(matches!(err, Err(Error::NonUniformGrid)));
}

#[test]
fn monte_carlo_basis_matches_master_equation() {
    let p = AtomParams::scaled(0.0, 0.05, 0.2).unwrap();
    let mut cfg = SimConfig::new(0.01, 4.0, 2000, 11);
    cfg.record_stride = 40;
    let mc = evolve_basis(&standard_basis(), &p, &cfg, Evolver::McEnsemble).unwrap();
    let ode = evolve_basis(&standard_basis(), &p, &cfg, Evolver::MasterOde).unwrap();
    assert_eq!(mc.times, ode.times);
    for i in 0..4 {
        for n in 0..mc.times.len() {
            // ~4σ for an entry bounded by 1 with 2000 samples.
            assert!(mc.evolved[i][n].max_abs_diff(&ode.evolved[i][n]).unwrap() < 0.05);
        }
    }
}

#[test]
fn restart_method_agrees_with_reconstruction() {
    let p = AtomParams::scaled(0.0, 0.05, 0.2).unwrap();
    let dt = 0.02;
    let cfg = RestartConfig {
        dt,
        n_traj: 64,
        seed: 5,
        burn_in: 60.0,
        window: 40.0,
        start_stride: 50,
        tau_max: 6.0,
        record_stride: 10,
        allow_large_dt: false,
        workers: 0,
    };
    let restart = restart_correlation(&p, &cfg).unwrap();
    let set = ode_set(&p, dt * 10.0, 6.0);
    let r = reconstruct_heisenberg(&set, &Operator2::raising()).unwrap();
    // Exact stationary state rather than ρ̄(6), which is still relaxing.
    let ss = steady_constants(&p).state();
    let frame = dressed_basis(&p);
    let rho_ss = {
        let m = Mat2::new(
            C64::from(0.5 + ss.sz),
            ss.sp,
            ss.sp.conj(),
            C64::from(0.5 - ss.sz),
        );
        frame.density_in(&DensityMatrix::new(m, Basis::Bare).unwrap(), Basis::Dressed)
    };
    let exact = correlation(&r, &rho_ss, false).unwrap();
    assert_eq!(exact.len(), restart.g.len());
    let mut worst: f64 = 0.0;
    for ((g, e), se) in restart.g.iter().zip(&exact).zip(&restart.stderr) {
        let z = ((g.re - e.re) / se[0].max(1e-3)).abs().max(((g.im - e.im) / se[1].max(1e-3)).abs());
        worst = worst.max(z);
    }
    assert!(worst < 5.0, "worst deviation {worst} standard errors");
}

#[test]
fn restart_is_deterministic_across_workers() {
    let p = AtomParams::scaled(0.0, 0.05, 1.0).unwrap();
    let mut cfg = RestartConfig {
        dt: 0.02,
        n_traj: 6,
        seed: 9,
        burn_in: 1.0,
        window: 1.0,
        start_stride: 10,
        tau_max: 1.0,
        record_stride: 5,
        allow_large_dt: false,
        workers: 1,
    };
    let a = restart_correlation(&p, &cfg).unwrap();
    cfg.workers = 3;
    assert_eq!(a, restart_correlation(&p, &cfg).unwrap());
}
