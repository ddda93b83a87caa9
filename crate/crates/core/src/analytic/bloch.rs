//! Optical Bloch equations for (⟨S^z⟩, ⟨S^+⟩, ⟨S^-⟩) and the brute-force
//! regression-theorem spectrum built on them.
//!
//! With κ = 2Γ + γ/2 the equations read
//!
//! ```text
//! d⟨S^z⟩/dt = −γ⟨S^z⟩ − (iΩ/2)⟨S^+⟩ + (iΩ/2)⟨S^-⟩ − γ/2
//! d⟨S^+⟩/dt = −iΩ⟨S^z⟩ + (iΔ − κ)⟨S^+⟩
//! d⟨S^-⟩/dt =  iΩ⟨S^z⟩ − (iΔ + κ)⟨S^-⟩
//! ```

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::atom::AtomParams;
use crate::error::{Error, Result};
use crate::master::rk4_step;
use crate::spectrum::{OmegaGrid, SpectrumMethod, SpectrumSeries};

/// One-time Bloch averages. ⟨S^-⟩ is the conjugate of ⟨S^+⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub sz: f64,
    pub sp: C64,
}

impl BlochState {
    pub fn sm(&self) -> C64 {
        self.sp.conj()
    }

    pub fn ground() -> Self {
        Self {
            sz: -0.5,
            sp: C64::new(0.0, 0.0),
        }
    }

    pub fn excited() -> Self {
        Self {
            sz: 0.5,
            sp: C64::new(0.0, 0.0),
        }
    }

    pub fn to_vector(&self) -> Vector3<C64> {
        Vector3::new(C64::from(self.sz), self.sp, self.sm())
    }

    /// Takes ⟨S^z⟩ and ⟨S^+⟩ from a vector, symmetrizing the pair
    /// (⟨S^+⟩, ⟨S^-⟩) so the result is exactly Hermitian.
    pub fn from_vector(v: &Vector3<C64>) -> Self {
        Self {
            sz: v[0].re,
            sp: 0.5 * (v[1] + v[2].conj()),
        }
    }

    /// Bloch averages of a bare-basis density matrix.
    pub fn from_density(rho: &crate::atom::DensityMatrix) -> Result<Self> {
        use crate::atom::Operator2;
        Ok(Self {
            sz: rho.expect(&Operator2::spin_z())?.re,
            sp: rho.expect(&Operator2::raising())?,
        })
    }
}

/// The linear system dv/dt = M v + b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochSystem {
    m: Matrix3<C64>,
    b: Vector3<C64>,
}

impl BlochSystem {
    pub fn new(p: &AtomParams) -> Self {
        let k = p.transverse_rate();
        let i = C64::i();
        let o = C64::from(p.rabi);
        let d = C64::from(p.detuning);
        let z = C64::from(0.0);
        let m = Matrix3::new(
            C64::from(-p.gamma),
            -i * o * 0.5,
            i * o * 0.5,
            -i * o,
            i * d - k,
            z,
            i * o,
            z,
            -i * d - k,
        );
        Self {
            m,
            b: Vector3::new(C64::from(-0.5 * p.gamma), z, z),
        }
    }

    pub fn matrix(&self) -> &Matrix3<C64> {
        &self.m
    }

    pub fn derivative(&self, v: &Vector3<C64>) -> Vector3<C64> {
        self.m * v + self.b
    }

    /// Integrates from `initial` with RK4 of step `h`, reporting the state at
    /// each checkpoint.
    pub fn evolve(&self, initial: &BlochState, h: f64, checkpoints: &[f64]) -> Vec<BlochState> {
        let mut v = initial.to_vector();
        let mut t = 0.0;
        let mut out = Vec::with_capacity(checkpoints.len());
        for &target in checkpoints {
            while target - t > 1e-12 * h {
                let step = h.min(target - t);
                v = rk4_step(&v, step, |x| self.derivative(x));
                t += step;
            }
            out.push(BlochState::from_vector(&v));
        }
        out
    }
}

/// Real form of the homogeneous part in (⟨S^z⟩, Re⟨S^+⟩, Im⟨S^+⟩).
pub fn real_bloch_matrix(p: &AtomParams) -> Matrix3<f64> {
    let k = p.transverse_rate();
    Matrix3::new(
        -p.gamma, 0.0, p.rabi, //
        0.0, -k, -p.detuning, //
        -p.rabi, p.detuning, -k,
    )
}

/// Eigenvalues of the Bloch matrix; their negatives times i are the poles
/// of the correlation function.
pub fn relaxation_eigenvalues(p: &AtomParams) -> [C64; 3] {
    let ev = real_bloch_matrix(p).complex_eigenvalues();
    [ev[0], ev[1], ev[2]]
}

/// Smallest relaxation rate min |Re λ| of the Bloch equations.
pub fn slowest_decay_rate(p: &AtomParams) -> f64 {
    relaxation_eigenvalues(p)
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min)
}

/// Closed-form steady-state constants with D = γ(κ² + Δ²) + Ω²κ:
/// K₁ = −⟨S^z⟩, K₂ = ⟨S^-⟩, K₃ = ⟨S^+⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyConstants {
    pub k1: f64,
    pub k2: C64,
    pub k3: C64,
}

pub fn steady_constants(p: &AtomParams) -> SteadyConstants {
    let k = p.transverse_rate();
    let (o, d, g) = (p.rabi, p.detuning, p.gamma);
    let denom = g * (k * k + d * d) + o * o * k;
    let i = C64::i();
    SteadyConstants {
        k1: 0.5 * g * (k * k + d * d) / denom,
        k2: i * (0.5 * g * o / denom) * C64::new(-k, d),
        k3: i * (0.5 * g * o / denom) * C64::new(k, d),
    }
}

impl SteadyConstants {
    pub fn state(&self) -> BlochState {
        BlochState {
            sz: -self.k1,
            sp: self.k3,
        }
    }
}

/// Steady state found by plain time integration of the Bloch equations,
/// stopped once the residual |M v + b| drops below 1e-12 of the slowest rate.
pub fn steady_state_by_relaxation(p: &AtomParams) -> Result<BlochState> {
    let sys = BlochSystem::new(p);
    let rate = slowest_decay_rate(p);
    if !(rate > 0.0) {
        return Err(Error::NoSteadyState { time: 0.0, rate });
    }
    let norm = sys.m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let h = 0.2 / norm;
    let t_limit = 2000.0 / rate;
    let tol = 1e-12 * rate;
    let mut v = BlochState::ground().to_vector();
    let mut t = 0.0;
    while t < t_limit {
        for _ in 0..64 {
            v = rk4_step(&v, h, |x| sys.derivative(x));
        }
        t += 64.0 * h;
        if sys.derivative(&v).norm() < tol {
            return Ok(BlochState::from_vector(&v));
        }
    }
    Err(Error::NoSteadyState { time: t, rate })
}

/// Fluctuation vector ⟨δX(0) δS^-(0)⟩ for X = S^z, S^+, S^- in a steady state.
fn fluctuation_initial(ss: &BlochState) -> Vector3<C64> {
    let sm = ss.sm();
    Vector3::new(
        -0.5 * sm - ss.sz * sm,
        0.5 + ss.sz - ss.sp * sm,
        -sm * sm,
    )
}

/// Spectrum from the quantum regression theorem by brute force: relax the
/// Bloch equations to steady state, propagate the fluctuation vector with the
/// same linear system and integrate `e^{−iωτ}⟨δS^+(τ)δS^-(0)⟩` numerically.
/// The coherent part |⟨S^+⟩|² δ(ω) is excluded.
pub fn regression_ode_oracle(p: &AtomParams, grid: &OmegaGrid) -> Result<SpectrumSeries> {
    grid.validate()?;
    let ss = steady_state_by_relaxation(p)?;
    let u0 = fluctuation_initial(&ss);
    let sys = BlochSystem::new(p);
    let rate = slowest_decay_rate(p);
    let norm = sys
        .m
        .row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let omega = grid.values();
    let values = omega
        .par_iter()
        .map(|&w| regression_integral(&sys.m, &u0, w, norm, rate).re)
        .collect();
    let mut out = SpectrumSeries::new(SpectrumMethod::OdeOracle, p, omega, values);
    out.config.insert("steady_sz".into(), format!("{}", ss.sz));
    Ok(out)
}

/// ∫₀^∞ [e^{(M − iω)τ} u₀]_{S^+} dτ with a fixed-step RK4 propagator. The
/// quadrature over each step uses the matching polynomial, so the integral is
/// as accurate as the propagation itself.
fn regression_integral(m: &Matrix3<C64>, u0: &Vector3<C64>, w: f64, norm: f64, rate: f64) -> C64 {
    let h = 0.05 / (norm + w.abs());
    let a = (m - Matrix3::identity() * C64::new(0.0, w)) * C64::from(h);
    let id = Matrix3::<C64>::identity();
    let a2 = a * a;
    let a3 = a2 * a;
    let a4 = a3 * a;
    let c = |x: f64| C64::from(x);
    let step = id + a + a2 * c(0.5) + a3 * c(1.0 / 6.0) + a4 * c(1.0 / 24.0);
    let quad = (id + a * c(0.5) + a2 * c(1.0 / 6.0) + a3 * c(1.0 / 24.0) + a4 * c(1.0 / 120.0)) * c(h);
    let row = quad.row(1).clone_owned();
    let scale = u0.norm();
    let max_steps = (60.0 / (rate * h)).ceil() as usize + 1;
    let mut v = *u0;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..max_steps {
        acc += (row * v)[0];
        v = step * v;
        if k % 256 == 0 && v.norm() < 1e-15 * scale {
            break;
        }
    }
    acc
}
