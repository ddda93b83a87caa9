//! Single-pass spectrum reconstruction.
//!
//! Four density operators R₁…R₄ spanning the Hermitian 2×2 operators are
//! evolved once. Any operator A is expanded as A = Σᵢ λᵢ Rᵢ(0) with
//! λ = T⁻¹ (tr A Rⱼ(0))ⱼ, T the Gram matrix. Since the evolution is linear,
//! the Heisenberg-picture operator
//!
//! ```text
//! A′(τ) = Σ_{i,j,k} (T⁻¹)_{jk} tr(R_k(τ) Rᵢ(0)) λᵢ Rⱼ(0)
//! ```
//!
//! satisfies tr(A ρ(τ)) = tr(A′(τ) ρ(0)) for every initial ρ(0). With
//! A = S⁺ the stationary correlation is ⟨S⁺(τ)S⁻(0)⟩ = tr(A′(τ) S⁻ ρ̄) and a
//! Fourier sum over the recorded τ gives the spectrum.

mod restart;

pub use restart::{restart_correlation, RestartConfig, RestartCorrelation};

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::analytic::{slowest_decay_rate, steady_state_by_relaxation, BlochState};
use crate::atom::{dressed_basis, AtomParams, Basis, DensityMatrix, Mat2, Operator2, PureState};
use crate::error::{Error, Result};
use crate::master::Propagator;
use crate::spectrum::{OmegaGrid, SpectrumMethod, SpectrumSeries};
use crate::trajectory::{decompose_mixed, run_coupled_ensemble, SimConfig};
use crate::C64;

/// Gram matrices with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e8;
/// Largest tolerated distance between ρ̄(T) and the Bloch fixed point for
/// the master-equation evolver.
pub const STEADY_TOLERANCE: f64 = 1e-3;

/// The default basis: projectors on |1⟩, (|1⟩+|2⟩)/√2, (|1⟩+i|2⟩)/√2 and
/// (|1⟩−|2⟩)/√2 in the dressed basis.
pub fn standard_basis() -> [DensityMatrix; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let r = |a: C64, b: C64| {
        PureState::new(a, b)
            .expect("basis vectors are normalized")
            .density()
    };
    [
        r(C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
        r(C64::new(s, 0.0), C64::new(s, 0.0)),
        r(C64::new(s, 0.0), C64::new(0.0, s)),
        r(C64::new(s, 0.0), C64::new(-s, 0.0)),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gram {
    pub t: Matrix4<f64>,
    pub inverse: Matrix4<f64>,
    /// Ratio of the largest to the smallest singular value.
    pub condition: f64,
    pub min_singular: f64,
}

fn trace_product(a: &Mat2, b: &Mat2) -> C64 {
    (a * b).trace()
}

/// T_ij = tr(Rᵢ Rⱼ) and its inverse.
pub fn gram_matrix(basis: &[DensityMatrix; 4]) -> Result<Gram> {
    let b0 = basis[0].basis();
    if let Some(r) = basis.iter().find(|r| r.basis() != b0) {
        return Err(Error::BasisMismatch {
            expected: b0,
            found: r.basis(),
        });
    }
    let mut t = Matrix4::<f64>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            t[(i, j)] = trace_product(basis[i].matrix(), basis[j].matrix()).re;
        }
    }
    let sv = t.singular_values();
    let max = sv.max();
    let min = sv.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularBasis { condition });
    }
    let inverse = t.try_inverse().ok_or(Error::SingularBasis { condition })?;
    Ok(Gram {
        t,
        inverse,
        condition,
        min_singular: min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evolver {
    /// Ensemble of quantum trajectories; every basis element is run on the
    /// same random streams.
    McEnsemble,
    /// Exact propagator of the master equation.
    MasterOde,
}

impl Evolver {
    pub fn as_str(self) -> &'static str {
        match self {
            Evolver::McEnsemble => "mc-ensemble",
            Evolver::MasterOde => "master-ode",
        }
    }
}

impl std::str::FromStr for Evolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc-ensemble" => Ok(Evolver::McEnsemble),
            "master-ode" => Ok(Evolver::MasterOde),
            other => Err(Error::parse(0, format!("unknown evolver {other:?}"))),
        }
    }
}

/// Basis operators and their evolution on the sample grid.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub params: AtomParams,
    pub config: SimConfig,
    pub evolver: Evolver,
    pub initial: [DensityMatrix; 4],
    pub gram: Gram,
    pub times: Vec<f64>,
    /// `evolved[i][n]` = Rᵢ(times[n]).
    pub evolved: [Vec<DensityMatrix>; 4],
    /// Average of the four Rᵢ at the last sample, the steady-state estimate.
    pub steady: DensityMatrix,
    pub n_used: u64,
    pub n_failed: u64,
}

impl BasisSet {
    /// Spacing of the sample grid.
    pub fn sample_interval(&self) -> f64 {
        self.config.sample_interval()
    }

    /// Largest entry-wise distance of ρ̄(T) from the Bloch fixed point.
    pub fn steady_mismatch(&self) -> Result<f64> {
        let reference = steady_state_by_relaxation(&self.params)?;
        let frame = dressed_basis(&self.params);
        let got = BlochState::from_density(&frame.density_in(&self.steady, Basis::Bare))?;
        Ok((got.sz - reference.sz).abs().max((got.sp - reference.sp).norm()))
    }
}

/// Evolves the four basis operators from t = 0 to `config.t_max`.
pub fn evolve_basis(
    basis: &[DensityMatrix; 4],
    params: &AtomParams,
    config: &SimConfig,
    evolver: Evolver,
) -> Result<BasisSet> {
    let gram = gram_matrix(basis)?;
    for r in basis {
        if r.basis() != Basis::Dressed {
            return Err(Error::BasisMismatch {
                expected: Basis::Dressed,
                found: r.basis(),
            });
        }
        if !r.is_physical() {
            return Err(Error::InvalidDensityMatrix(
                "basis element is not a density matrix".into(),
            ));
        }
    }
    let (times, evolved, n_used, n_failed) = match evolver {
        Evolver::MasterOde => {
            // The propagator is exact, so the step-size cap does not apply.
            let mut cfg = *config;
            cfg.allow_large_dt = true;
            cfg.validate(params)?;
            let prop = Propagator::new(params, Basis::Dressed, cfg.sample_interval());
            let steps = cfg.n_samples() - 1;
            let mut out: [Vec<DensityMatrix>; 4] = Default::default();
            for (o, r) in out.iter_mut().zip(basis) {
                *o = prop.trajectory(r, steps)?;
            }
            (cfg.sample_times(), out, 0, 0)
        }
        Evolver::McEnsemble => {
            let mut states = Vec::new();
            let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
            for r in basis {
                let (s, w) = decompose_mixed(r)?;
                rows.push((states.len(), w.into_iter().next().unwrap_or_default()));
                states.extend(s);
            }
            let weights: Vec<Vec<f64>> = rows
                .iter()
                .map(|(offset, w)| {
                    let mut row = vec![0.0; states.len()];
                    row[*offset..offset + w.len()].copy_from_slice(w);
                    row
                })
                .collect();
            // Pure basis elements need no mixing step in the accumulator.
            let pure = states.len() == 4;
            let w = (!pure).then_some(weights.as_slice());
            let ens = run_coupled_ensemble(&states, w, params, config, false)?;
            let mut out: [Vec<DensityMatrix>; 4] = Default::default();
            for (i, o) in out.iter_mut().enumerate() {
                *o = ens.densities(i);
            }
            (ens.times, out, ens.n_used, ens.n_failed)
        }
    };
    let last = times.len() - 1;
    let sum = evolved
        .iter()
        .fold(Mat2::zeros(), |acc, r| acc + r[last].matrix());
    let steady = DensityMatrix::from_matrix_unchecked(sum * C64::from(0.25), Basis::Dressed);
    Ok(BasisSet {
        params: *params,
        config: *config,
        evolver,
        initial: *basis,
        gram,
        times,
        evolved,
        steady,
        n_used,
        n_failed,
    })
}

/// A′(τ) on the sample grid, dressed basis.
#[derive(Debug, Clone)]
pub struct ReconstructedOperator {
    pub params: AtomParams,
    pub evolver: Evolver,
    pub times: Vec<f64>,
    pub ops: Vec<Operator2>,
}

/// Expansion coefficients λᵢ = Σⱼ (T⁻¹)ᵢⱼ tr(A Rⱼ(0)).
pub fn expansion_coefficients(set: &BasisSet, target: &Operator2) -> Result<[C64; 4]> {
    let a = dressed_target(set, target)?;
    let overlaps: [C64; 4] = std::array::from_fn(|j| trace_product(a.matrix(), set.initial[j].matrix()));
    Ok(std::array::from_fn(|i| {
        (0..4).map(|j| overlaps[j] * set.gram.inverse[(i, j)]).sum()
    }))
}

fn dressed_target(set: &BasisSet, target: &Operator2) -> Result<Operator2> {
    Ok(match target.basis() {
        Basis::Dressed => *target,
        Basis::Bare => dressed_basis(&set.params).operator_in(target, Basis::Dressed),
    })
}

/// Rebuilds the Heisenberg-picture `target` at every sample time. A bare-basis
/// target is converted to the dressed basis first.
pub fn reconstruct_heisenberg(set: &BasisSet, target: &Operator2) -> Result<ReconstructedOperator> {
    if set.evolved.iter().any(|r| r.len() != set.times.len()) {
        return Err(Error::GridMismatch);
    }
    let lambda = expansion_coefficients(set, target)?;
    let tinv = &set.gram.inverse;
    let ops = (0..set.times.len())
        .map(|n| {
            // c_j = Σ_k (T⁻¹)_jk Σ_i tr(R_k(τ) R_i(0)) λ_i
            let mut inner = Vector4::<C64>::zeros();
            for k in 0..4 {
                let rk = set.evolved[k][n].matrix();
                inner[k] = (0..4)
                    .map(|i| trace_product(rk, set.initial[i].matrix()) * lambda[i])
                    .sum();
            }
            let mut m = Mat2::zeros();
            for j in 0..4 {
                let c: C64 = (0..4).map(|k| inner[k] * tinv[(j, k)]).sum();
                m += set.initial[j].matrix() * c;
            }
            Operator2::new(m, Basis::Dressed)
        })
        .collect();
    Ok(ReconstructedOperator {
        params: set.params,
        evolver: set.evolver,
        times: set.times.clone(),
        ops,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    /// Half weight on both end points.
    #[default]
    Trapezoid,
    /// Σ_{n<N} f(τₙ) dt.
    LeftRiemann,
}

impl Quadrature {
    pub fn as_str(self) -> &'static str {
        match self {
            Quadrature::Trapezoid => "trapezoid",
            Quadrature::LeftRiemann => "left-riemann",
        }
    }
}

impl std::str::FromStr for Quadrature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoid" => Ok(Quadrature::Trapezoid),
            "left-riemann" => Ok(Quadrature::LeftRiemann),
            other => Err(Error::parse(0, format!("unknown quadrature {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    pub quadrature: Quadrature,
    /// Remove |⟨S⁺⟩|², the elastic part that would otherwise appear as a
    /// ringing finite-T delta function at ω = 0.
    pub subtract_coherent: bool,
    /// Multiply the correlation by e^{−rate·τ}.
    pub window: Option<f64>,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            quadrature: Quadrature::Trapezoid,
            subtract_coherent: true,
            window: None,
        }
    }
}

/// T = 12 / (slowest Bloch relaxation rate); in the triplet regime at least
/// 12/γ.
pub fn default_truncation(params: &AtomParams) -> Result<f64> {
    let rate = slowest_decay_rate(params);
    if !(rate > 0.0) {
        return Err(Error::NoSteadyState { time: 0.0, rate });
    }
    let mut t = 12.0 / rate;
    if params.gamma_prime() <= params.rabi && params.gamma > 0.0 {
        t = t.max(12.0 / params.gamma);
    }
    Ok(t)
}

/// The correlation samples tr(A′(τ) S⁻ ρ̄), minus |⟨S⁺⟩|² when requested.
pub fn correlation(recon: &ReconstructedOperator, steady: &DensityMatrix, subtract_coherent: bool) -> Result<Vec<C64>> {
    if steady.basis() != Basis::Dressed {
        return Err(Error::BasisMismatch {
            expected: Basis::Dressed,
            found: steady.basis(),
        });
    }
    let frame = dressed_basis(&recon.params);
    let sm = frame.operator_in(&Operator2::lowering(), Basis::Dressed);
    let sp = frame.operator_in(&Operator2::raising(), Basis::Dressed);
    let source = sm.matrix() * steady.matrix();
    let coherent = if subtract_coherent {
        let e = trace_product(sp.matrix(), steady.matrix());
        e * e.conj()
    } else {
        C64::new(0.0, 0.0)
    };
    Ok(recon
        .ops
        .iter()
        .map(|op| trace_product(op.matrix(), &source) - coherent)
        .collect())
}

/// Γ(ω) = Σₙ wₙ e^{−iωτₙ} f(τₙ) dt for every ω of the grid.
pub fn fourier_sum(samples: &[C64], dt: f64, omega: &[f64], quadrature: Quadrature) -> Vec<C64> {
    let n = samples.len();
    let weighted: Vec<C64> = samples
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let w = match quadrature {
                Quadrature::Trapezoid if k == 0 || k + 1 == n => 0.5,
                Quadrature::Trapezoid => 1.0,
                Quadrature::LeftRiemann if k + 1 == n && n > 1 => 0.0,
                Quadrature::LeftRiemann => 1.0,
            };
            f * (w * dt)
        })
        .collect();
    const RESYNC: usize = 512;
    omega
        .par_iter()
        .map(|&w| {
            let rot = C64::from_polar(1.0, -w * dt);
            let mut acc = C64::new(0.0, 0.0);
            for (c, chunk) in weighted.chunks(RESYNC).enumerate() {
                // Exact phase at the start of each chunk keeps the rounding
                // drift of the rotation recurrence bounded.
                let mut z = C64::from_polar(1.0, -w * dt * (c * RESYNC) as f64);
                for f in chunk {
                    acc += f * z;
                    z *= rot;
                }
            }
            acc
        })
        .collect()
}

/// S(ω) = Re Γ(ω) from a reconstructed S⁺′(τ) and the steady state ρ̄.
pub fn spectrum(
    recon: &ReconstructedOperator,
    steady: &DensityMatrix,
    grid: &OmegaGrid,
    dt: f64,
    options: &SpectrumOptions,
) -> Result<SpectrumSeries> {
    grid.validate()?;
    let times = &recon.times;
    if times.len() < 2 {
        return Err(Error::SeriesTooShort {
            samples: times.len(),
            max_lag: 1,
        });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "must be positive",
        });
    }
    if times
        .iter()
        .enumerate()
        .any(|(k, t)| (t - k as f64 * dt).abs() > 1e-9 * dt.max(*t))
    {
        return Err(Error::NonUniformGrid);
    }
    let mut f = correlation(recon, steady, options.subtract_coherent)?;
    if let Some(rate) = options.window {
        for (v, t) in f.iter_mut().zip(times) {
            *v *= (-rate * t).exp();
        }
    }
    let omega = grid.values();
    let values = fourier_sum(&f, dt, &omega, options.quadrature)
        .into_iter()
        .map(|z| z.re)
        .collect();
    let method = match recon.evolver {
        Evolver::McEnsemble => SpectrumMethod::McReconstruct,
        Evolver::MasterOde => SpectrumMethod::OdeReconstruct,
    };
    let mut out = SpectrumSeries::new(method, &recon.params, omega, values);
    let t_end = *times.last().unwrap_or(&0.0);
    out.config.insert("quadrature".into(), options.quadrature.as_str().into());
    out.config
        .insert("subtract_coherent".into(), options.subtract_coherent.to_string());
    if let Some(rate) = options.window {
        out.config.insert("window".into(), rate.to_string());
    }
    let rate = slowest_decay_rate(&recon.params);
    if rate * t_end < 10.0 {
        out.warnings.push(format!(
            "truncation time {t_end} is short: slowest decay rate × T = {:.3} < 10",
            rate * t_end
        ));
    }
    Ok(out)
}

/// Evolve the standard basis, rebuild S⁺′(τ) and Fourier-sum it.
pub fn reconstruct_spectrum(
    params: &AtomParams,
    config: &SimConfig,
    grid: &OmegaGrid,
    evolver: Evolver,
    options: &SpectrumOptions,
) -> Result<SpectrumSeries> {
    let set = evolve_basis(&standard_basis(), params, config, evolver)?;
    let mut warnings = Vec::new();
    let mismatch = set.steady_mismatch()?;
    if mismatch > STEADY_TOLERANCE {
        let msg = format!("averaged basis state is {mismatch:.2e} from the steady state");
        if evolver == Evolver::MasterOde {
            return Err(Error::InvalidState(msg));
        }
        warnings.push(msg);
    }
    let recon = reconstruct_heisenberg(&set, &Operator2::raising())?;
    let mut out = spectrum(&recon, &set.steady, grid, set.sample_interval(), options)?;
    out.warnings.extend(warnings);
    let c = &mut out.config;
    c.insert("evolver".into(), evolver.as_str().into());
    c.insert("dt".into(), config.dt.to_string());
    c.insert("t_max".into(), config.t_max.to_string());
    c.insert("record_stride".into(), config.record_stride.to_string());
    c.insert("steady_mismatch".into(), format!("{mismatch:e}"));
    if evolver == Evolver::McEnsemble {
        c.insert("n_traj".into(), config.n_traj.to_string());
        c.insert("seed".into(), config.seed.to_string());
        c.insert("n_used".into(), set.n_used.to_string());
        c.insert("n_failed".into(), set.n_failed.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_gram_matrix() {
        let g = gram_matrix(&standard_basis()).unwrap();
        let h = 0.5;
        let expected = Matrix4::new(
            1.0, h, h, h, //
            h, 1.0, h, 0.0, //
            h, h, 1.0, h, //
            h, 0.0, h, 1.0,
        );
        assert!((g.t - expected).abs().max() < 1e-15);
        assert!((g.t * g.inverse - Matrix4::identity()).abs().max() < 1e-12);
        assert!(g.min_singular > 0.1);
    }

    #[test]
    fn duplicate_basis_element_is_singular() {
        let mut b = standard_basis();
        b[3] = b[1];
        assert!(matches!(gram_matrix(&b), Err(Error::SingularBasis { .. })));
    }

    #[test]
    fn orthonormal_operator_basis_has_identity_gram() {
        // Not density matrices, but the Gram computation does not care.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let m = |a: [[C64; 2]; 2]| DensityMatrix::from_rows(a, Basis::Dressed).unwrap();
        let o = C64::from(s);
        let b = [
            m([[C64::from(1.0), z], [z, z]]),
            m([[z, z], [z, C64::from(1.0)]]),
            m([[z, o], [o, z]]),
            m([[z, C64::new(0.0, -s)], [C64::new(0.0, s), z]]),
        ];
        let g = gram_matrix(&b).unwrap();
        assert!((g.t - Matrix4::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn quadrature_weights() {
        let f = vec![C64::from(1.0); 11];
        let t = fourier_sum(&f, 0.1, &[0.0], Quadrature::Trapezoid)[0];
        let l = fourier_sum(&f, 0.1, &[0.0], Quadrature::LeftRiemann)[0];
        assert!((t.re - 1.0).abs() < 1e-14);
        assert!((l.re - 1.0).abs() < 1e-14);
        let decay: Vec<C64> = (0..2001).map(|k| C64::from((-(k as f64) * 0.01).exp())).collect();
        let t = fourier_sum(&decay, 0.01, &[0.0], Quadrature::Trapezoid)[0].re;
        let l = fourier_sum(&decay, 0.01, &[0.0], Quadrature::LeftRiemann)[0].re;
        let exact = 1.0 - (-20.0f64).exp();
        assert!((t - exact).abs() < 1e-5);
        assert!((l - exact - 0.005).abs() < 1e-4);
    }

    #[test]
    fn rotation_recurrence_matches_direct_phases() {
        let f: Vec<C64> = (0..5000).map(|k| C64::new((k as f64).sin(), 0.3)).collect();
        let w = 17.3;
        let dt = 0.003;
        let fast = fourier_sum(&f, dt, &[w], Quadrature::LeftRiemann)[0];
        let direct: C64 = f[..f.len() - 1]
            .iter()
            .enumerate()
            .map(|(k, v)| v * C64::from_polar(dt, -w * dt * k as f64))
            .sum();
        assert!((fast - direct).norm() < 1e-11);
    }
}
