//! Closed-form fluorescence correlation functions and spectra.
//!
//! Γ(ω) = ∫₀^∞ e^{−iωτ} ⟨δS^+(τ) δS^-(0)⟩_ss dτ, the incoherent part of the
//! steady-state correlation (the elastic |⟨S^+⟩|² δ(ω) line is excluded).
//! The spectrum is S(ω) = Re Γ(ω), with ω the offset from the laser
//! frequency.

mod bloch;

pub use bloch::{
    real_bloch_matrix, regression_ode_oracle, relaxation_eigenvalues, slowest_decay_rate,
    steady_constants, steady_state_by_relaxation, BlochState, BlochSystem, SteadyConstants,
};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atom::AtomParams;
use crate::error::{Error, Result};
use crate::spectrum::{OmegaGrid, SpectrumMethod, SpectrumSeries};

/// Denominators smaller than this count as a pole on the grid.
const POLE_TOL: f64 = 1e-12;
const POLE_SHIFT: f64 = 1e-9;
/// Half-width of the excluded band around Γ' = Ω.
const DEGENERATE_BAND: f64 = 1e-9;

/// A correlation value, flagged when ω sat on a pole and the value is the
/// mean of the neighbours ω ± 1e-9.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: C64,
    pub shifted: bool,
}

fn guarded(w: f64, f: impl Fn(f64) -> (C64, C64)) -> Evaluation {
    let (num, den) = f(w);
    if den.norm() >= POLE_TOL {
        return Evaluation {
            value: num / den,
            shifted: false,
        };
    }
    let (n1, d1) = f(w - POLE_SHIFT);
    let (n2, d2) = f(w + POLE_SHIFT);
    Evaluation {
        value: 0.5 * (n1 / d1 + n2 / d2),
        shifted: true,
    }
}

/// Γ(ω) for arbitrary detuning:
///
/// ```text
/// den = (iω+γ)((iω+κ)² + Δ²) + Ω²(iω+κ)
/// num = iΩ(iω+iΔ+κ)(K₂/2 − K₁K₂)
///     + (Ω²/2 + (iω+γ)(iω+iΔ+κ))(1/2 − K₁ − K₂K₃) − Ω²K₂²/2
/// ```
///
/// with κ = 2Γ + γ/2 and the steady-state constants of [`steady_constants`].
pub fn correlation_general(p: &AtomParams, w: f64) -> Evaluation {
    let k = p.transverse_rate();
    let c = steady_constants(p);
    let (o, d, g) = (p.rabi, p.detuning, p.gamma);
    let o2 = o * o;
    guarded(w, |w| {
        let iw = C64::new(0.0, w);
        let ikd = iw + C64::new(k, d);
        let den = (iw + g) * ((iw + k) * (iw + k) + d * d) + o2 * (iw + k);
        let n1 = C64::new(0.0, o) * ikd * (0.5 * c.k2 - c.k1 * c.k2);
        let n2 = (0.5 * o2 + (iw + g) * ikd) * (0.5 - c.k1 - c.k2 * c.k3) - 0.5 * o2 * c.k2 * c.k2;
        (n1 + n2, den)
    })
}

/// Γ(ω) at zero detuning:
///
/// ```text
/// Γ(ω) = 4Ω² P(ω) / [(4Γ + γ + 2iω) α⁴ (α² + 4iΓ''ω − 2ω²)]
/// P(ω) = Ω⁴ + 2γ(4Γ+γ)(Ω²+Γγ) + iω[4Ω²(Γ+γ) + 2Γγ(4Γ+3γ)] − 2(2Γγ+Ω²)ω²
/// ```
///
/// with α² = γ² + 4Γγ + 2Ω² ([`AtomParams::alpha_sq`]).
pub fn correlation_resonant(p: &AtomParams, w: f64) -> Result<Evaluation> {
    if p.detuning != 0.0 {
        return Err(Error::RequiresResonance(p.detuning));
    }
    let a2 = p.alpha_sq();
    let gpp = p.gamma_double_prime();
    let o2 = p.rabi * p.rabi;
    Ok(guarded(w, |w| {
        let num = resonant_numerator(p, C64::from(w)) * (4.0 * o2);
        let den = C64::new(4.0 * p.noise + p.gamma, 2.0 * w)
            * (a2 * a2)
            * C64::new(a2 - 2.0 * w * w, 4.0 * gpp * w);
        (num, den)
    }))
}

/// P(ω) of [`correlation_resonant`], evaluated at complex ω.
fn resonant_numerator(p: &AtomParams, w: C64) -> C64 {
    let (o2, g, n) = (p.rabi * p.rabi, p.gamma, p.noise);
    let c0 = o2 * o2 + 2.0 * g * (4.0 * n + g) * (o2 + n * g);
    let c1 = 4.0 * o2 * (n + g) + 2.0 * n * g * (4.0 * n + 3.0 * g);
    let c2 = 2.0 * (2.0 * n * g + o2);
    c0 + C64::i() * w * c1 - w * w * c2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Γ' < Ω: Mollow triplet.
    Triplet,
    /// Γ' > Ω: single broad line with a narrow central dip.
    Dip,
    /// Γ' = Ω within 1e-9.
    Degenerate,
}

pub fn classify(p: &AtomParams) -> Regime {
    let gp = p.gamma_prime();
    if (gp - p.rabi).abs() <= DEGENERATE_BAND * p.rabi {
        Regime::Degenerate
    } else if gp < p.rabi {
        Regime::Triplet
    } else {
        Regime::Dip
    }
}

/// Γ(ω) = Σ_k A_k / (ω − s_k) at zero detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianDecomposition {
    /// s₊, s₋, s₀.
    pub poles: [C64; 3],
    /// A₊, A₋, A₀.
    pub amplitudes: [C64; 3],
    pub regime: Regime,
}

/// Poles s± = iΓ'' ± i√(Γ'² − Ω²) (principal root) and s₀ = i(2Γ' + γ); the
/// residues follow from the rational form of [`correlation_resonant`]:
/// A_k = iΩ² P(s_k) / (α⁴ Π_{j≠k}(s_k − s_j)). A₀ reduces to −iΩ²/(2α²).
pub fn decompose(p: &AtomParams) -> Result<LorentzianDecomposition> {
    if p.detuning != 0.0 {
        return Err(Error::RequiresResonance(p.detuning));
    }
    let regime = classify(p);
    if regime == Regime::Degenerate {
        return Err(Error::DegenerateRegime);
    }
    let gp = p.gamma_prime();
    let gpp = p.gamma_double_prime();
    let root = C64::from(gp * gp - p.rabi * p.rabi).sqrt();
    let i = C64::i();
    let poles = [
        i * gpp + i * root,
        i * gpp - i * root,
        i * (2.0 * gp + p.gamma),
    ];
    let a2 = p.alpha_sq();
    let o2 = p.rabi * p.rabi;
    let mut amplitudes = [C64::new(0.0, 0.0); 3];
    for k in 0..3 {
        let s = poles[k];
        let others: C64 = (0..3).filter(|&j| j != k).map(|j| s - poles[j]).product();
        amplitudes[k] = i * o2 * resonant_numerator(p, s) / (a2 * a2 * others);
    }
    Ok(LorentzianDecomposition {
        poles,
        amplitudes,
        regime,
    })
}

impl LorentzianDecomposition {
    pub fn s_plus(&self) -> C64 {
        self.poles[0]
    }

    pub fn s_minus(&self) -> C64 {
        self.poles[1]
    }

    pub fn s_zero(&self) -> C64 {
        self.poles[2]
    }

    /// Σ_k A_k / (ω − s_k).
    pub fn correlation(&self, w: f64) -> C64 {
        self.poles
            .iter()
            .zip(&self.amplitudes)
            .map(|(s, a)| a / (w - s))
            .sum()
    }

    /// Real Lorentzian contribution of pole k,
    /// Re[A_k(ω − s̄_k)] / ((ω − Re s_k)² + (Im s_k)²).
    /// For purely imaginary poles this is A_k s_k / (ω² + |s_k|²).
    pub fn term(&self, k: usize, w: f64) -> f64 {
        let s = self.poles[k];
        let a = self.amplitudes[k];
        let dx = w - s.re;
        (a * C64::new(dx, s.im)).re / (dx * dx + s.im * s.im)
    }

    pub fn spectrum(&self, w: f64) -> f64 {
        (0..3).map(|k| self.term(k, w)).sum()
    }

    /// A_k s_k; real in the dip regime.
    pub fn weights(&self) -> [C64; 3] {
        [0, 1, 2].map(|k| self.amplitudes[k] * self.poles[k])
    }
}

/// Analytic spectrum on a grid. The zero-detuning form is used when Δ = 0.
pub fn spectrum_analytic(p: &AtomParams, grid: &OmegaGrid) -> Result<SpectrumSeries> {
    grid.validate()?;
    let omega = grid.values();
    let evals: Vec<Evaluation> = if p.detuning == 0.0 {
        omega
            .par_iter()
            .map(|&w| correlation_resonant(p, w))
            .collect::<Result<_>>()?
    } else {
        omega.par_iter().map(|&w| correlation_general(p, w)).collect()
    };
    let shifted = evals.iter().filter(|e| e.shifted).count();
    let values = evals.iter().map(|e| e.value.re).collect();
    let mut out = SpectrumSeries::new(SpectrumMethod::Analytic, p, omega, values);
    let regime = match classify(p) {
        Regime::Triplet => "triplet",
        Regime::Dip => "dip",
        Regime::Degenerate => "degenerate",
    };
    out.config.insert("regime".into(), regime.into());
    if shifted > 0 {
        out.warnings
            .push(format!("{shifted} grid points sat on a pole and were evaluated at omega +/- 1e-9"));
    }
    Ok(out)
}
