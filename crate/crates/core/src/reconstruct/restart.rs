//! Restart-based two-time correlation, kept as a slow cross-check.
//!
//! Along each trajectory, at every start time t the state is split into
//! χ_ε = (1 + ε S⁻)|ψ(t)⟩ for ε ∈ {1, −1, i, −i}. Because
//! S⁻|ψ⟩⟨ψ| = ¼ Σ_ε ε* |χ_ε⟩⟨χ_ε|, evolving the four normalized χ_ε as fresh
//! trajectories and weighting them by ε*‖χ_ε‖² yields ⟨S⁺(t+τ)S⁻(t)⟩. Every
//! start launches a new simulation of length τ_max, so the cost grows with
//! the square of the number of steps.

use rayon::prelude::*;

use super::{fourier_sum, Quadrature};
use crate::atom::{dressed_basis, AtomParams, Basis, Mat2, Operator2, PureState};
use crate::error::{Error, Result};
use crate::spectrum::{OmegaGrid, SpectrumMethod, SpectrumSeries};
use crate::trajectory::{from_real, rng, to_real, unit, with_workers, SimConfig, TrajectoryStepper};
use crate::C64;

/// Restarted runs draw from the master seed mixed with this constant.
const RESTART_SALT: u64 = 0x0005_eed0_f2e5_7a27;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartConfig {
    pub dt: f64,
    pub n_traj: u64,
    pub seed: u64,
    /// Time before the first start, to reach the steady state.
    pub burn_in: f64,
    /// Starts are spread over [burn_in, burn_in + window].
    pub window: f64,
    /// Steps between consecutive starts.
    pub start_stride: usize,
    pub tau_max: f64,
    /// Steps between recorded τ samples.
    pub record_stride: usize,
    pub allow_large_dt: bool,
    pub workers: usize,
}

impl RestartConfig {
    fn steps(&self, t: f64) -> u64 {
        (t / self.dt).round() as u64
    }

    fn validate(&self, params: &AtomParams) -> Result<()> {
        let mut sim = SimConfig::new(self.dt, self.tau_max, self.n_traj, self.seed);
        sim.record_stride = self.record_stride;
        sim.allow_large_dt = self.allow_large_dt;
        sim.validate(params)?;
        if self.start_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "start_stride",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.burn_in >= 0.0 && self.window >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "window",
                value: self.window,
                reason: "burn-in and window must be non-negative",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartCorrelation {
    pub params: AtomParams,
    pub tau: Vec<f64>,
    /// ⟨S⁺(t+τ)S⁻(t)⟩ averaged over starts and trajectories.
    pub g: Vec<C64>,
    /// Standard errors of (Re g, Im g) across trajectories.
    pub stderr: Vec<[f64; 2]>,
    /// ⟨S⁺⟩ averaged over the start times.
    pub mean_sp: C64,
    pub n_starts: u64,
    pub n_traj: u64,
}

impl RestartCorrelation {
    /// S(ω) = Re Σ e^{−iωτ}(g(τ) − |⟨S⁺⟩|²) dτ.
    pub fn spectrum(&self, grid: &OmegaGrid, quadrature: Quadrature) -> Result<SpectrumSeries> {
        grid.validate()?;
        if self.tau.len() < 2 {
            return Err(Error::SeriesTooShort {
                samples: self.tau.len(),
                max_lag: 1,
            });
        }
        let dt = self.tau[1] - self.tau[0];
        let coherent = self.mean_sp.norm_sqr();
        let f: Vec<C64> = self.g.iter().map(|g| g - coherent).collect();
        let omega = grid.values();
        let values = fourier_sum(&f, dt, &omega, quadrature)
            .into_iter()
            .map(|z| z.re)
            .collect();
        let mut out = SpectrumSeries::new(SpectrumMethod::McRestart, &self.params, omega, values);
        out.config.insert("n_traj".into(), self.n_traj.to_string());
        out.config.insert("n_starts".into(), self.n_starts.to_string());
        Ok(out)
    }
}

struct Partial {
    g: Vec<C64>,
    sp: C64,
}

/// Runs the restart method. Each trajectory starts in the atomic ground state.
pub fn restart_correlation(params: &AtomParams, config: &RestartConfig) -> Result<RestartCorrelation> {
    config.validate(params)?;
    let frame = dressed_basis(params);
    let stepper = TrajectoryStepper::new(params, config.dt);
    let kernel = stepper.kernel();
    let sm = *frame.operator_in(&Operator2::lowering(), Basis::Dressed).matrix();
    let sp = *frame.operator_in(&Operator2::raising(), Basis::Dressed).matrix();
    let ground = to_real(PureState::ground(&frame).amplitudes());

    let burn = config.steps(config.burn_in);
    let n_starts = config.steps(config.window) / config.start_stride as u64 + 1;
    let n_tau_steps = config.steps(config.tau_max).max(1);
    let stride = config.record_stride as u64;
    let n_samples = (n_tau_steps / stride) as usize + 1;
    let eps = [
        C64::new(1.0, 0.0),
        C64::new(-1.0, 0.0),
        C64::new(0.0, 1.0),
        C64::new(0.0, -1.0),
    ];

    let run = |j: u64| -> std::result::Result<Partial, Error> {
        let underflow = |step, norm| Error::NormUnderflow {
            traj_index: j,
            step,
            norm,
        };
        let mut rng_main = rng::trajectory_stream(config.seed, j);
        let mut psi = ground;
        let mut n2 = 1.0;
        let mut step = 0u64;
        for _ in 0..burn {
            let [u1, _] = rng::step_uniforms(&mut rng_main);
            step += 1;
            kernel.advance(&mut psi, &mut n2, u1).map_err(|n| underflow(step, n))?;
        }
        let mut g = vec![C64::new(0.0, 0.0); n_samples];
        let mut sp_sum = C64::new(0.0, 0.0);
        for s in 0..n_starts {
            let v = from_real(&unit(&psi, n2));
            sp_sum += expect(&sp, &v);
            let smv = sm * v;
            let mut chi = [[0.0; 4]; 4];
            let mut mu = [0.0; 4];
            for (k, e) in eps.iter().enumerate() {
                let c = v + smv * *e;
                mu[k] = c.norm_squared();
                chi[k] = to_real(&(c / C64::from(mu[k].sqrt())));
            }
            let mut norms = [1.0; 4];
            let mut rng = rng::trajectory_stream(config.seed ^ RESTART_SALT, j * n_starts + s);
            let mut sample = |chi: &[[f64; 4]; 4], norms: &[f64; 4], m: usize| {
                for k in 0..4 {
                    let x = from_real(&unit(&chi[k], norms[k]));
                    g[m] += eps[k].conj() * (0.25 * mu[k]) * expect(&sp, &x);
                }
            };
            sample(&chi, &norms, 0);
            for n in 1..=n_tau_steps {
                let [u1, _] = rng::step_uniforms(&mut rng);
                for k in 0..4 {
                    kernel
                        .advance(&mut chi[k], &mut norms[k], u1)
                        .map_err(|nrm| underflow(step, nrm))?;
                }
                if n % stride == 0 {
                    sample(&chi, &norms, (n / stride) as usize);
                }
            }
            if s + 1 < n_starts {
                for _ in 0..config.start_stride {
                    let [u1, _] = rng::step_uniforms(&mut rng_main);
                    step += 1;
                    kernel.advance(&mut psi, &mut n2, u1).map_err(|n| underflow(step, n))?;
                }
            }
        }
        let inv = 1.0 / n_starts as f64;
        g.iter_mut().for_each(|x| *x *= inv);
        Ok(Partial {
            g,
            sp: sp_sum * inv,
        })
    };

    let parts: Vec<Partial> = with_workers(config.workers, || {
        (0..config.n_traj)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<_>>>()
    })??;

    let n = parts.len() as f64;
    let mut g = vec![C64::new(0.0, 0.0); n_samples];
    let mut sq = vec![[0.0; 2]; n_samples];
    let mut mean_sp = C64::new(0.0, 0.0);
    for p in &parts {
        for (m, v) in p.g.iter().enumerate() {
            g[m] += v;
            sq[m][0] += v.re * v.re;
            sq[m][1] += v.im * v.im;
        }
        mean_sp += p.sp;
    }
    g.iter_mut().for_each(|x| *x /= n);
    mean_sp /= n;
    let stderr = g
        .iter()
        .zip(&sq)
        .map(|(m, s)| {
            if parts.len() < 2 {
                return [0.0, 0.0];
            }
            let var = |sum: f64, mean: f64| ((sum - n * mean * mean) / (n - 1.0)).max(0.0);
            [
                (var(s[0], m.re) / n).sqrt(),
                (var(s[1], m.im) / n).sqrt(),
            ]
        })
        .collect();
    let h = config.dt * stride as f64;
    Ok(RestartCorrelation {
        params: *params,
        tau: (0..n_samples).map(|m| m as f64 * h).collect(),
        g,
        stderr,
        mean_sp,
        n_starts,
        n_traj: config.n_traj,
    })
}

fn expect(op: &Mat2, v: &nalgebra::Vector2<C64>) -> C64 {
    (v.adjoint() * op * v)[(0, 0)]
}
