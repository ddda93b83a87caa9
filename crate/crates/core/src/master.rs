//! Deterministic master-equation solvers.
//!
//! Two independent routes are provided: the exact propagator `exp(L h)` of
//! the Lindblad superoperator, and an RK4 integration of the three real
//! dressed-basis equations for (ρ_z, Re ρ₁₂, Im ρ₁₂).

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64 as C64;

use crate::atom::{unvec, vec_of, AtomParams, Basis, DensityMatrix, Lindbladian, Mat2};
use crate::error::{Error, Result};

/// Minimal vector-space interface needed by [`rk4_step`].
pub trait OdeState: Clone {
    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self);
}

impl<const N: usize> OdeState for [f64; N] {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += a * v;
        }
    }
}

impl OdeState for Mat2 {
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * C64::from(a);
    }
}

impl OdeState for nalgebra::Vector3<C64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * C64::from(a);
    }
}

/// One classical fourth-order Runge–Kutta step of an autonomous system.
pub fn rk4_step<S: OdeState>(y: &S, h: f64, f: impl Fn(&S) -> S) -> S {
    let k1 = f(y);
    let mut tmp = y.clone();
    tmp.axpy(0.5 * h, &k1);
    let k2 = f(&tmp);
    tmp = y.clone();
    tmp.axpy(0.5 * h, &k2);
    let k3 = f(&tmp);
    tmp = y.clone();
    tmp.axpy(h, &k3);
    let k4 = f(&tmp);
    let mut out = y.clone();
    out.axpy(h / 6.0, &k1);
    out.axpy(h / 3.0, &k2);
    out.axpy(h / 3.0, &k3);
    out.axpy(h / 6.0, &k4);
    out
}

/// Exact one-step propagator `exp(L h)` acting on row-major vec(ρ).
#[derive(Debug, Clone)]
pub struct Propagator {
    basis: Basis,
    step: Matrix4<C64>,
    h: f64,
}

impl Propagator {
    pub fn new(params: &AtomParams, basis: Basis, h: f64) -> Self {
        let l = Lindbladian::new(params, basis).superoperator() * C64::from(h);
        Self {
            basis,
            step: l.exp(),
            h,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.step
    }

    pub fn apply(&self, rho: &Mat2) -> Mat2 {
        unvec(&(self.step * vec_of(rho)))
    }

    /// ρ(k·h) for k = 0..=steps.
    pub fn trajectory(&self, rho0: &DensityMatrix, steps: usize) -> Result<Vec<DensityMatrix>> {
        if rho0.basis() != self.basis {
            return Err(Error::BasisMismatch {
                expected: self.basis,
                found: rho0.basis(),
            });
        }
        let mut out = Vec::with_capacity(steps + 1);
        let mut v: Vector4<C64> = vec_of(rho0.matrix());
        out.push(*rho0);
        for _ in 0..steps {
            v = self.step * v;
            out.push(DensityMatrix::from_matrix_unchecked(unvec(&v), self.basis));
        }
        Ok(out)
    }
}

/// The dressed-basis master equation written for the real triple
/// (ρ_z, x, y) with ρ₁₂ = ⟨1|ρ|2⟩ = x + iy:
///
/// ```text
/// dρ_z/dt = −(2g + γ) ρ_z + 4a x + γΔ/W
/// dx/dt   = a ρ_z + γΩ/(2W) − k x − W y
/// dy/dt   = W x − (k + 2g) y
/// ```
///
/// with W = √(Ω²+Δ²), a = Γ'ΩΔ/W², g = Γ'Ω²/W², k = 2Γ'Δ²/W² + γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedBloch {
    w: f64,
    a: f64,
    g: f64,
    k: f64,
    gamma: f64,
    pump_z: f64,
    pump_x: f64,
}

impl DressedBloch {
    pub fn new(params: &AtomParams) -> Self {
        let w = params.dressed_splitting();
        let w2 = w * w;
        let gp = params.gamma_prime();
        let (o, d, gamma) = (params.rabi, params.detuning, params.gamma);
        Self {
            w,
            a: gp * o * d / w2,
            g: gp * o * o / w2,
            k: 2.0 * gp * d * d / w2 + gamma,
            gamma,
            pump_z: gamma * d / w,
            pump_x: 0.5 * gamma * o / w,
        }
    }

    pub fn derivative(&self, y: &[f64; 3]) -> [f64; 3] {
        let [rz, x, im] = *y;
        [
            -(2.0 * self.g + self.gamma) * rz + 4.0 * self.a * x + self.pump_z,
            self.a * rz + self.pump_x - self.k * x - self.w * im,
            self.w * x - (self.k + 2.0 * self.g) * im,
        ]
    }

    /// Fixed point of the equations.
    pub fn steady_state(&self) -> [f64; 3] {
        let m = nalgebra::Matrix3::new(
            -(2.0 * self.g + self.gamma),
            4.0 * self.a,
            0.0,
            self.a,
            -self.k,
            -self.w,
            0.0,
            self.w,
            -(self.k + 2.0 * self.g),
        );
        let b = nalgebra::Vector3::new(-self.pump_z, -self.pump_x, 0.0);
        let sol = m.lu().solve(&b).unwrap_or_else(nalgebra::Vector3::zeros);
        [sol[0], sol[1], sol[2]]
    }

    /// Integrates with RK4 at step `h` and returns the state at each time in
    /// `checkpoints` (ascending, starting at or after 0). The last step into
    /// each checkpoint is shortened to land on it exactly.
    pub fn integrate(&self, initial: [f64; 3], h: f64, checkpoints: &[f64]) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut t = 0.0;
        let mut y = initial;
        for &target in checkpoints {
            while target - t > 1e-12 * h {
                let step = h.min(target - t);
                y = rk4_step(&y, step, |s| self.derivative(s));
                t += step;
            }
            out.push(y);
        }
        out
    }
}

/// (ρ_z, Re ρ₁₂, Im ρ₁₂) of a dressed-basis density matrix.
pub fn dressed_components(rho: &DensityMatrix) -> Result<[f64; 3]> {
    if rho.basis() != Basis::Dressed {
        return Err(Error::BasisMismatch {
            expected: Basis::Dressed,
            found: rho.basis(),
        });
    }
    let c = rho.coherence();
    Ok([rho.rho_z(), c.re, c.im])
}

/// Inverse of [`dressed_components`] for a unit-trace matrix.
pub fn from_dressed_components(y: &[f64; 3]) -> DensityMatrix {
    let c = C64::new(y[1], y[2]);
    let m = Mat2::new(
        C64::from(0.5 * (1.0 + y[0])),
        c,
        c.conj(),
        C64::from(0.5 * (1.0 - y[0])),
    );
    DensityMatrix::from_matrix_unchecked(m, Basis::Dressed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{dressed_basis, PureState};

    #[test]
    fn dressed_bloch_matches_lindblad_generator() {
        for (d, g, n) in [(0.0, 0.05, 6.0), (1.7, 0.05, 0.9), (-3.0, 0.3, 0.2), (3.0, 0.05, 3.0)] {
            let p = AtomParams::scaled(d, g, n).unwrap();
            let l = Lindbladian::new(&p, Basis::Dressed);
            let eq = DressedBloch::new(&p);
            let rho = PureState::new(C64::new(0.3, 0.2), C64::new(-0.6, 0.5)).unwrap().density();
            let drho = l.apply(rho.matrix());
            let expected = [
                (drho[(0, 0)] - drho[(1, 1)]).re,
                drho[(0, 1)].re,
                drho[(0, 1)].im,
            ];
            let got = eq.derivative(&dressed_components(&rho).unwrap());
            for i in 0..3 {
                assert!((got[i] - expected[i]).abs() < 1e-13, "Δ={d} component {i}");
            }
        }
    }

    #[test]
    fn steady_state_at_resonance_has_equal_populations() {
        let p = AtomParams::scaled(0.0, 0.05, 6.0).unwrap();
        let ss = DressedBloch::new(&p).steady_state();
        assert!(ss[0].abs() < 1e-14);
    }

    #[test]
    fn propagator_and_rk4_agree() {
        let p = AtomParams::scaled(0.5, 0.05, 0.2).unwrap();
        let rho0 = PureState::excited(&dressed_basis(&p)).density();
        let prop = Propagator::new(&p, Basis::Dressed, 0.01);
        let exact = prop.trajectory(&rho0, 1000).unwrap();
        let eq = DressedBloch::new(&p);
        let rk = eq.integrate(dressed_components(&rho0).unwrap(), 0.01, &[10.0]);
        let last = dressed_components(&exact[1000]).unwrap();
        for i in 0..3 {
            assert!((rk[0][i] - last[i]).abs() < 1e-10);
        }
        for r in &exact {
            assert!((r.trace() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unitary_limit_is_rabi_oscillation() {
        let p = AtomParams::scaled(0.0, 0.0, 0.0).unwrap();
        let frame = dressed_basis(&p);
        let rho0 = frame.density_in(&PureState::excited(&frame).density(), Basis::Bare);
        let prop = Propagator::new(&p, Basis::Bare, 0.05);
        let sz = crate::atom::Operator2::spin_z();
        for (k, rho) in prop.trajectory(&rho0, 200).unwrap().iter().enumerate() {
            let t = 0.05 * k as f64;
            let z = rho.expect(&sz).unwrap().re;
            assert!((z - 0.5 * t.cos()).abs() < 1e-12);
        }
    }
}
