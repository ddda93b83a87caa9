//! The driven two-level atom: parameters, operators, bare and dressed bases,
//! jump operators and the Lindblad generator.
//!
//! Conventions used throughout the crate:
//!
//! * ħ = 1 and every rate is measured in the same unit as the Rabi
//!   frequency Ω (normally Ω = 1).
//! * The bare basis is ordered (|e⟩, |g⟩), so `S^z = diag(1/2, -1/2)`,
//!   `S^+ = |e⟩⟨g|` and `S^- = |g⟩⟨e|`.
//! * The dressed states are |1⟩ = cos Θ |g⟩ + sin Θ |e⟩ and
//!   |2⟩ = −sin Θ |g⟩ + cos Θ |e⟩ with Θ = −½·atan2(Ω, Δ). The two-argument
//!   arctangent keeps |1⟩ the lower-energy state for either sign of Δ and
//!   gives Θ = −π/4 at Δ = 0.
//! * The mean Hamiltonian is `Δ S^z + Ω/2 (S^+ + S^-)`, with Δ = ω_a − ω_L.

use nalgebra::{Matrix2, Matrix4, Vector2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<C64>;
pub type Vec2 = Vector2<C64>;

/// Tolerance for Hermiticity checks on operators and density matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Physical parameters of the driven atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomParams {
    /// Rabi frequency Ω.
    pub rabi: f64,
    /// Detuning Δ = ω_a − ω_L.
    pub detuning: f64,
    /// Natural linewidth γ.
    pub gamma: f64,
    /// Magnitude Γ of the white frequency noise, ⟨δω(t)δω(t')⟩ = 2Γδ(t − t').
    pub noise: f64,
}

impl AtomParams {
    pub fn new(rabi: f64, detuning: f64, gamma: f64, noise: f64) -> Result<Self> {
        let p = Self {
            rabi,
            detuning,
            gamma,
            noise,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters given in units of the Rabi frequency (Ω = 1).
    pub fn scaled(detuning: f64, gamma: f64, noise: f64) -> Result<Self> {
        Self::new(1.0, detuning, gamma, noise)
    }

    /// Converts raw angular frequencies to units of `rabi`.
    pub fn from_raw(rabi: f64, detuning: f64, gamma: f64, noise: f64) -> Result<Self> {
        check_positive("rabi", rabi)?;
        Self::new(1.0, detuning / rabi, gamma / rabi, noise / rabi)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("rabi", self.rabi)?;
        if !self.detuning.is_finite() {
            return Err(Error::InvalidParameter {
                name: "detuning",
                value: self.detuning,
                reason: "must be finite",
            });
        }
        check_non_negative("gamma", self.gamma)?;
        check_non_negative("noise", self.noise)?;
        Ok(())
    }

    /// Γ' = Γ − γ/4.
    pub fn gamma_prime(&self) -> f64 {
        self.noise - 0.25 * self.gamma
    }

    /// Γ'' = Γ' + γ.
    pub fn gamma_double_prime(&self) -> f64 {
        self.gamma_prime() + self.gamma
    }

    /// α² = γ² + 4Γγ + 2Ω², the scale appearing in the resonant correlation
    /// function. Its zeros in ω sit at iΓ'' ± i√(Γ'² − Ω²).
    pub fn alpha_sq(&self) -> f64 {
        self.gamma * self.gamma + 4.0 * self.noise * self.gamma + 2.0 * self.rabi * self.rabi
    }

    /// Decay rate of the optical coherence ⟨S^+⟩, 2Γ + γ/2.
    pub fn transverse_rate(&self) -> f64 {
        2.0 * self.noise + 0.5 * self.gamma
    }

    /// Dressed-state splitting √(Ω² + Δ²).
    pub fn dressed_splitting(&self) -> f64 {
        self.rabi.hypot(self.detuning)
    }

    /// Largest frequency scale in the problem; bounds the usable time step.
    pub fn max_rate(&self) -> f64 {
        [
            self.rabi,
            self.noise,
            self.gamma,
            self.detuning.abs(),
            self.dressed_splitting(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and positive",
        })
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and non-negative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// (|e⟩, |g⟩).
    Bare,
    /// (|1⟩, |2⟩).
    Dressed,
}

fn ensure_basis(expected: Basis, found: Basis) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::BasisMismatch { expected, found })
    }
}

/// A 2×2 operator tagged with the basis its matrix is written in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operator2 {
    mat: Mat2,
    basis: Basis,
}

impl Operator2 {
    pub fn new(mat: Mat2, basis: Basis) -> Self {
        Self { mat, basis }
    }

    pub fn identity(basis: Basis) -> Self {
        Self::new(Mat2::identity(), basis)
    }

    pub fn zero(basis: Basis) -> Self {
        Self::new(Mat2::zeros(), basis)
    }

    /// `S^z` in the bare basis.
    pub fn spin_z() -> Self {
        Self::new(Mat2::new(ONE * 0.5, ZERO, ZERO, -ONE * 0.5), Basis::Bare)
    }

    /// `S^+ = |e⟩⟨g|` in the bare basis.
    pub fn raising() -> Self {
        Self::new(Mat2::new(ZERO, ONE, ZERO, ZERO), Basis::Bare)
    }

    /// `S^- = |g⟩⟨e|` in the bare basis.
    pub fn lowering() -> Self {
        Self::new(Mat2::new(ZERO, ZERO, ONE, ZERO), Basis::Bare)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.mat
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn try_mul(&self, rhs: &Operator2) -> Result<Operator2> {
        ensure_basis(self.basis, rhs.basis)?;
        Ok(Self::new(self.mat * rhs.mat, self.basis))
    }

    pub fn try_add(&self, rhs: &Operator2) -> Result<Operator2> {
        ensure_basis(self.basis, rhs.basis)?;
        Ok(Self::new(self.mat + rhs.mat, self.basis))
    }

    pub fn scale(&self, factor: C64) -> Operator2 {
        Self::new(self.mat * factor, self.basis)
    }

    pub fn adjoint(&self) -> Operator2 {
        Self::new(self.mat.adjoint(), self.basis)
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        is_hermitian(&self.mat, tol)
    }

    /// Applies the operator to a dressed-basis state; the result is not
    /// normalized.
    pub fn apply(&self, state: &PureState) -> Result<Vec2> {
        ensure_basis(Basis::Dressed, self.basis)?;
        Ok(self.mat * state.amp)
    }
}

pub(crate) fn is_hermitian(m: &Mat2, tol: f64) -> bool {
    (m - m.adjoint()).iter().all(|z| z.norm() <= tol)
}

/// Normalized pure state, stored as dressed-basis amplitudes (a₁, a₂).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState {
    amp: Vec2,
}

impl PureState {
    /// Builds a state from unnormalized dressed amplitudes.
    pub fn new(amp1: C64, amp2: C64) -> Result<Self> {
        Self::from_vector(Vec2::new(amp1, amp2))
    }

    pub fn from_vector(amp: Vec2) -> Result<Self> {
        let norm = amp.norm();
        if !(norm.is_finite() && norm > 1e-15) {
            return Err(Error::InvalidState(format!("cannot normalize vector of norm {norm:e}")));
        }
        Ok(Self { amp: amp / C64::from(norm) })
    }

    /// Caller guarantees unit norm.
    pub(crate) fn from_normalized(amp: Vec2) -> Self {
        Self { amp }
    }

    pub fn dressed1() -> Self {
        Self::from_normalized(Vec2::new(ONE, ZERO))
    }

    pub fn dressed2() -> Self {
        Self::from_normalized(Vec2::new(ZERO, ONE))
    }

    /// Bare state `c_e |e⟩ + c_g |g⟩` expressed in the dressed basis of `frame`.
    pub fn from_bare(frame: &DressedFrame, excited: C64, ground: C64) -> Result<Self> {
        Self::from_vector(frame.u.adjoint() * Vec2::new(excited, ground))
    }

    pub fn excited(frame: &DressedFrame) -> Self {
        Self::from_normalized(frame.u.adjoint() * Vec2::new(ONE, ZERO))
    }

    pub fn ground(frame: &DressedFrame) -> Self {
        Self::from_normalized(frame.u.adjoint() * Vec2::new(ZERO, ONE))
    }

    pub fn amp1(&self) -> C64 {
        self.amp[0]
    }

    pub fn amp2(&self) -> C64 {
        self.amp[1]
    }

    pub fn amplitudes(&self) -> &Vec2 {
        &self.amp
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.norm_squared()
    }

    /// Multiplies both amplitudes by `e^{i phase}`.
    pub fn with_global_phase(&self, phase: f64) -> Self {
        Self::from_normalized(self.amp * C64::from_polar(1.0, phase))
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix {
            mat: self.amp * self.amp.adjoint(),
            basis: Basis::Dressed,
        }
    }

    /// ⟨ψ|A|ψ⟩ for a dressed-basis operator.
    pub fn expect(&self, op: &Operator2) -> Result<C64> {
        ensure_basis(Basis::Dressed, op.basis)?;
        Ok(self.amp.dotc(&(op.mat * self.amp)))
    }
}

/// Density matrix tagged with its basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    mat: Mat2,
    basis: Basis,
}

impl DensityMatrix {
    /// Accepts any Hermitian matrix (to 1e-12); trace and positivity are
    /// checked separately by [`DensityMatrix::is_physical`].
    pub fn new(mat: Mat2, basis: Basis) -> Result<Self> {
        let scale = mat.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
        if !mat.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidDensityMatrix("non-finite entry".into()));
        }
        if !is_hermitian(&mat, HERMITIAN_TOL * scale) {
            return Err(Error::InvalidDensityMatrix("not Hermitian".into()));
        }
        Ok(Self { mat, basis })
    }

    /// For matrices produced by trace-preserving maps of valid inputs.
    pub(crate) fn from_matrix_unchecked(mat: Mat2, basis: Basis) -> Self {
        Self { mat, basis }
    }

    pub fn from_rows(rows: [[C64; 2]; 2], basis: Basis) -> Result<Self> {
        Self::new(Mat2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1]), basis)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.mat
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// ρ₁₁ − ρ₂₂ (population inversion in the basis of the matrix).
    pub fn rho_z(&self) -> f64 {
        self.mat[(0, 0)].re - self.mat[(1, 1)].re
    }

    /// ρ₁₂ = ⟨1|ρ|2⟩.
    pub fn coherence(&self) -> C64 {
        self.mat[(0, 1)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.mat[(0, 0)].re;
        let d = self.mat[(1, 1)].re;
        let b = self.mat[(0, 1)].norm();
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mean - radius, mean + radius]
    }

    pub fn is_physical(&self) -> bool {
        is_hermitian(&self.mat, HERMITIAN_TOL)
            && (self.trace() - 1.0).abs() < 1e-10
            && self.mat.trace().im.abs() < 1e-10
            && self.eigenvalues()[0] >= -1e-10
    }

    /// tr(Aρ).
    pub fn expect(&self, op: &Operator2) -> Result<C64> {
        ensure_basis(self.basis, op.basis)?;
        Ok((op.mat * self.mat).trace())
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> Result<f64> {
        ensure_basis(self.basis, other.basis)?;
        Ok((self.mat - other.mat).iter().fold(0.0, |m, z| m.max(z.norm())))
    }
}

/// Mixing angle and unitary connecting the bare and dressed bases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedFrame {
    theta: f64,
    /// Columns are |1⟩ and |2⟩ in bare coordinates.
    u: Mat2,
}

/// Dressed basis for `params`: Θ = −½·atan2(Ω, Δ).
pub fn dressed_basis(params: &AtomParams) -> DressedFrame {
    let theta = -0.5 * params.rabi.atan2(params.detuning);
    let (s, c) = theta.sin_cos();
    let u = Mat2::new(C64::from(s), C64::from(c), C64::from(c), C64::from(-s));
    DressedFrame { theta, u }
}

impl DressedFrame {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// The change-of-basis matrix (columns |1⟩, |2⟩), written in the bare basis.
    pub fn transform(&self) -> Operator2 {
        Operator2::new(self.u, Basis::Bare)
    }

    fn convert(&self, mat: &Mat2, from: Basis, to: Basis) -> Mat2 {
        match (from, to) {
            (Basis::Bare, Basis::Dressed) => self.u.adjoint() * mat * self.u,
            (Basis::Dressed, Basis::Bare) => self.u * mat * self.u.adjoint(),
            _ => *mat,
        }
    }

    pub fn operator_in(&self, op: &Operator2, basis: Basis) -> Operator2 {
        Operator2::new(self.convert(&op.mat, op.basis, basis), basis)
    }

    pub fn density_in(&self, rho: &DensityMatrix, basis: Basis) -> DensityMatrix {
        DensityMatrix {
            mat: self.convert(&rho.mat, rho.basis, basis),
            basis,
        }
    }

    /// (c_e, c_g) of a dressed-basis state.
    pub fn bare_amplitudes(&self, state: &PureState) -> Vec2 {
        self.u * state.amp
    }
}

/// Mean Hamiltonian, diagonal in the dressed basis: diag(E₁, E₂) with
/// E₁,₂ = ∓½√(Ω² + Δ²).
pub fn mean_hamiltonian(params: &AtomParams) -> Operator2 {
    let half = 0.5 * params.dressed_splitting();
    Operator2::new(
        Mat2::new(C64::from(-half), ZERO, ZERO, C64::from(half)),
        Basis::Dressed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Spontaneous emission, C₁ = √γ S^-.
    Emission,
    /// Noise event, C₂ = 2√Γ S^z.
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpOperator {
    pub channel: Channel,
    pub op: Operator2,
}

/// Emission and noise jump operators in the dressed basis.
///
/// `C₂†C₂ = 4Γ (S^z)² = Γ·1`, so the noise jump rate does not depend on the
/// state.
pub fn jump_operators(params: &AtomParams) -> [JumpOperator; 2] {
    let frame = dressed_basis(params);
    let emission = frame
        .operator_in(&Operator2::lowering(), Basis::Dressed)
        .scale(C64::from(params.gamma.sqrt()));
    let noise = frame
        .operator_in(&Operator2::spin_z(), Basis::Dressed)
        .scale(C64::from(2.0 * params.noise.sqrt()));
    [
        JumpOperator {
            channel: Channel::Emission,
            op: emission,
        },
        JumpOperator {
            channel: Channel::Noise,
            op: noise,
        },
    ]
}

/// Non-Hermitian drift `H_eff = ⟨H⟩ − (i/2)(γ S^+S^- + Γ·1)` in the dressed
/// basis. The constant −(i/2)Γ term is kept so that the no-jump norm decay
/// matches the total jump probability of both channels.
pub fn effective_hamiltonian(params: &AtomParams) -> Operator2 {
    let h = mean_hamiltonian(params);
    let decay: Mat2 = jump_operators(params)
        .iter()
        .map(|j| j.op.mat.adjoint() * j.op.mat)
        .sum();
    Operator2::new(h.mat - decay * (0.5 * I), Basis::Dressed)
}

/// First-order off-diagonal dressed-basis coefficient of a detuning shift
/// δω·S^z: δω·⟨1|S^z|2⟩ = −½·δω·Ω/√(Ω² + Δ²).
pub fn first_order_noise_coupling(params: &AtomParams, delta_omega: f64) -> f64 {
    -0.5 * delta_omega * params.rabi / params.dressed_splitting()
}

/// Amplitude of |2⟩ admixed into |1⟩ when Δ shifts by δω, to first order:
/// dΘ/dΔ·δω = ½·δω·Ω/(Ω² + Δ²).
pub fn first_order_dressed_admixture(params: &AtomParams, delta_omega: f64) -> f64 {
    let w = params.dressed_splitting();
    0.5 * delta_omega * params.rabi / (w * w)
}

/// Lindblad generator `ρ ↦ −i[H, ρ] + Σ_k (C_k ρ C_k† − ½{C_k†C_k, ρ})`
/// written in one fixed basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Lindbladian {
    basis: Basis,
    hamiltonian: Mat2,
    jumps: [Mat2; 2],
}

impl Lindbladian {
    pub fn new(params: &AtomParams, basis: Basis) -> Self {
        let frame = dressed_basis(params);
        let h = frame.operator_in(&mean_hamiltonian(params), basis).mat;
        let jumps = jump_operators(params).map(|j| frame.operator_in(&j.op, basis).mat);
        Self {
            basis,
            hamiltonian: h,
            jumps,
        }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// dρ/dt for a matrix written in `self.basis()`.
    pub fn apply(&self, rho: &Mat2) -> Mat2 {
        let h = &self.hamiltonian;
        let mut out = (h * rho - rho * h) * (-I);
        for c in &self.jumps {
            let cd = c.adjoint();
            let cdc = cd * c;
            out += c * rho * cd - (cdc * rho + rho * cdc) * C64::from(0.5);
        }
        out
    }

    /// Adjoint generator acting on observables (Heisenberg picture):
    /// `A ↦ i[H, A] + Σ_k (C_k† A C_k − ½{C_k†C_k, A})`.
    pub fn apply_adjoint(&self, a: &Mat2) -> Mat2 {
        let h = &self.hamiltonian;
        let mut out = (h * a - a * h) * I;
        for c in &self.jumps {
            let cd = c.adjoint();
            let cdc = cd * c;
            out += cd * a * c - (cdc * a + a * cdc) * C64::from(0.5);
        }
        out
    }

    /// Matrix of the generator on row-major vec(ρ) = (ρ₁₁, ρ₁₂, ρ₂₁, ρ₂₂),
    /// using vec(AρB) = (A ⊗ Bᵀ) vec(ρ).
    pub fn superoperator(&self) -> Matrix4<C64> {
        let id = Mat2::identity();
        let h = &self.hamiltonian;
        let mut l = (kron(h, &id) - kron(&id, &h.transpose())) * (-I);
        for c in &self.jumps {
            let cdc = c.adjoint() * c;
            l += kron(c, &c.conjugate())
                - (kron(&cdc, &id) + kron(&id, &cdc.transpose())) * C64::from(0.5);
        }
        l
    }
}

pub(crate) fn kron(a: &Mat2, b: &Mat2) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

pub(crate) fn vec_of(m: &Mat2) -> nalgebra::Vector4<C64> {
    nalgebra::Vector4::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

pub(crate) fn unvec(v: &nalgebra::Vector4<C64>) -> Mat2 {
    Mat2::new(v[0], v[1], v[2], v[3])
}
