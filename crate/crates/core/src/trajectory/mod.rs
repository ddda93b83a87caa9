//! Monte Carlo wave-function trajectories.
//!
//! Each step of length `dt` draws two uniforms. The first selects the event
//! against the cumulative partition
//!
//! ```text
//! [0, Γdt)                    noise jump       C₂ = 2√Γ S^z
//! [Γdt, Γdt + γdt⟨S^+S^-⟩)     emission jump    C₁ = √γ S^-
//! otherwise                   no-jump step     1 − iH_eff dt − H_eff² dt²/2
//! ```
//!
//! and the state is renormalized afterwards. The second uniform is drawn and
//! discarded so every step consumes the same amount of randomness. The noise
//! window comes first because its width does not depend on the state: runs
//! that share a random stream but start from different states then see their
//! noise jumps at the same steps.

mod dump;
mod ensemble;
pub mod rng;

pub use dump::{read_dump, write_dump};
pub(crate) use ensemble::decompose_mixed;
pub use ensemble::{
    run_coupled_ensemble, run_ensemble, with_workers, CoupledEnsemble, EnsembleAverage,
    InitialCondition,
};

use serde::{Deserialize, Serialize};

use crate::atom::{
    dressed_basis, effective_hamiltonian, jump_operators, AtomParams, Channel, Mat2, PureState,
    Vec2,
};
use crate::error::{Error, Result};

/// Largest allowed `dt · max_rate` unless explicitly overridden.
pub const DT_CAP: f64 = 0.05;
/// States whose norm falls below this abort the trajectory.
pub const NORM_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub n_traj: u64,
    pub seed: u64,
    /// Steps between recorded samples.
    pub record_stride: usize,
    /// Skip the `dt · max_rate ≤ 0.05` check.
    pub allow_large_dt: bool,
    /// Worker threads; 0 uses the ambient rayon pool.
    pub workers: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64, n_traj: u64, seed: u64) -> Self {
        Self {
            dt,
            t_max,
            n_traj,
            seed,
            record_stride: 1,
            allow_large_dt: false,
            workers: 0,
        }
    }

    pub fn validate(&self, params: &AtomParams) -> Result<()> {
        params.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: self.dt,
                reason: "must be finite and positive",
            });
        }
        if !(self.t_max.is_finite() && self.t_max >= self.dt) {
            return Err(Error::InvalidParameter {
                name: "t_max",
                value: self.t_max,
                reason: "must be finite and at least dt",
            });
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidParameter {
                name: "n_traj",
                value: 0.0,
                reason: "need at least one trajectory",
            });
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "record_stride",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        let product = self.dt * params.max_rate();
        if !self.allow_large_dt && product > DT_CAP {
            return Err(Error::TimeStepTooLarge {
                product,
                cap: DT_CAP,
            });
        }
        if params.noise * self.dt + params.gamma * self.dt > 1.0 {
            return Err(Error::TimeStepTooLarge {
                product,
                cap: DT_CAP,
            });
        }
        Ok(())
    }

    /// Number of steps, `round(t_max / dt)`.
    pub fn n_steps(&self) -> u64 {
        ((self.t_max / self.dt).round() as u64).max(1)
    }

    /// Number of recorded samples including t = 0.
    pub fn n_samples(&self) -> usize {
        (self.n_steps() / self.record_stride as u64) as usize + 1
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.record_stride as f64
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.n_samples())
            .map(|k| (k * self.record_stride) as f64 * self.dt)
            .collect()
    }
}

/// Real-arithmetic form of the stepper used in the ensemble hot loop. A
/// state is (Re a₁, Im a₁, Re a₂, Im a₂); a matrix is its four entries
/// row-major, each as (re, im).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    no_jump: [f64; 8],
    emission: [f64; 8],
    noise: [f64; 8],
    /// dt·C₁†C₁ as (m₁₁, m₂₂, Re m₁₂, Im m₁₂)
    rate: [f64; 4],
    p_noise: f64,
}

fn flatten(m: &Mat2) -> [f64; 8] {
    [
        m[(0, 0)].re,
        m[(0, 0)].im,
        m[(0, 1)].re,
        m[(0, 1)].im,
        m[(1, 0)].re,
        m[(1, 0)].im,
        m[(1, 1)].re,
        m[(1, 1)].im,
    ]
}

#[inline(always)]
fn matvec(m: &[f64; 8], s: &[f64; 4]) -> [f64; 4] {
    [
        m[0] * s[0] - m[1] * s[1] + m[2] * s[2] - m[3] * s[3],
        m[0] * s[1] + m[1] * s[0] + m[2] * s[3] + m[3] * s[2],
        m[4] * s[0] - m[5] * s[1] + m[6] * s[2] - m[7] * s[3],
        m[4] * s[1] + m[5] * s[0] + m[6] * s[3] + m[7] * s[2],
    ]
}

impl Kernel {
    #[inline(always)]
    pub(crate) fn emission_probability(&self, s: &[f64; 4]) -> f64 {
        let r = &self.rate;
        // 2 Re(conj(a₁) m₁₂ a₂)
        let cr = s[0] * s[2] + s[1] * s[3];
        let ci = s[0] * s[3] - s[1] * s[2];
        r[0] * (s[0] * s[0] + s[1] * s[1]) + r[1] * (s[2] * s[2] + s[3] * s[3])
            + 2.0 * (r[2] * cr - r[3] * ci)
    }

    /// Advances a state that is normalized only up to a positive factor;
    /// `n2` carries its squared norm. Jumps renormalize exactly; no-jump steps
    /// let the norm decay and rescale only when it leaves [1/4, 4], which
    /// keeps the square root out of the common path.
    #[inline(always)]
    pub(crate) fn advance(
        &self,
        s: &mut [f64; 4],
        n2: &mut f64,
        u1: f64,
    ) -> std::result::Result<Option<Channel>, f64> {
        let (next, channel) = if u1 < self.p_noise {
            (matvec(&self.noise, s), Some(Channel::Noise))
        } else if (u1 - self.p_noise) * *n2 < self.emission_probability(s) {
            (matvec(&self.emission, s), Some(Channel::Emission))
        } else {
            (matvec(&self.no_jump, s), None)
        };
        let m2 = next[0] * next[0] + next[1] * next[1] + next[2] * next[2] + next[3] * next[3];
        *s = next;
        *n2 = m2;
        if channel.is_some() || !(0.25..=4.0).contains(&m2) {
            let norm = m2.sqrt();
            if !(norm >= NORM_FLOOR) {
                return Err(norm);
            }
            let inv = 1.0 / norm;
            *s = [next[0] * inv, next[1] * inv, next[2] * inv, next[3] * inv];
            *n2 = 1.0;
        }
        Ok(channel)
    }
}

pub(crate) fn to_real(v: &Vec2) -> [f64; 4] {
    [v[0].re, v[0].im, v[1].re, v[1].im]
}

pub(crate) fn from_real(s: &[f64; 4]) -> Vec2 {
    Vec2::new(crate::C64::new(s[0], s[1]), crate::C64::new(s[2], s[3]))
}

/// Unit-norm copy of a lazily normalized state.
#[inline]
pub(crate) fn unit(s: &[f64; 4], n2: f64) -> [f64; 4] {
    if n2 == 1.0 {
        return *s;
    }
    let inv = 1.0 / n2.sqrt();
    [s[0] * inv, s[1] * inv, s[2] * inv, s[3] * inv]
}

/// Precomputed per-step matrices, all in the dressed basis.
#[derive(Debug, Clone)]
pub struct TrajectoryStepper {
    no_jump: Mat2,
    emission: Mat2,
    /// dt · C₁†C₁
    emission_rate: Mat2,
    noise: Mat2,
    p_noise: f64,
}

impl TrajectoryStepper {
    pub fn new(params: &AtomParams, dt: f64) -> Self {
        let h = *effective_hamiltonian(params).matrix();
        let [emit, noise] = jump_operators(params);
        let i = crate::C64::i();
        let no_jump = Mat2::identity() - h * (i * dt) - h * h * crate::C64::from(0.5 * dt * dt);
        let e = *emit.op.matrix();
        Self {
            no_jump,
            emission: e,
            emission_rate: e.adjoint() * e * crate::C64::from(dt),
            noise: *noise.op.matrix(),
            p_noise: params.noise * dt,
        }
    }

    pub(crate) fn kernel(&self) -> Kernel {
        let r = &self.emission_rate;
        Kernel {
            no_jump: flatten(&self.no_jump),
            emission: flatten(&self.emission),
            noise: flatten(&self.noise),
            rate: [r[(0, 0)].re, r[(1, 1)].re, r[(0, 1)].re, r[(0, 1)].im],
            p_noise: self.p_noise,
        }
    }

    /// Emission probability dt·⟨ψ|C₁†C₁|ψ⟩ of a normalized state.
    #[inline]
    pub fn emission_probability(&self, psi: &Vec2) -> f64 {
        let m = &self.emission_rate;
        m[(0, 0)].re * psi[0].norm_sqr()
            + m[(1, 1)].re * psi[1].norm_sqr()
            + 2.0 * (psi[0].conj() * m[(0, 1)] * psi[1]).re
    }

    /// Noise probability Γ·dt, the same for every state.
    pub fn noise_probability(&self) -> f64 {
        self.p_noise
    }

    /// Advances a normalized amplitude vector in place. On underflow the
    /// offending norm is returned as the error.
    #[inline]
    pub(crate) fn advance(&self, psi: &mut Vec2, u1: f64) -> std::result::Result<Option<Channel>, f64> {
        let mut s = to_real(psi);
        let mut n2 = 1.0;
        let channel = self.kernel().advance(&mut s, &mut n2, u1)?;
        *psi = from_real(&unit(&s, n2));
        Ok(channel)
    }

    /// One step of a trajectory. `draws[1]` is reserved and unused.
    pub fn step(&self, state: &PureState, draws: [f64; 2]) -> Result<(PureState, Option<Channel>)> {
        let mut psi = *state.amplitudes();
        let channel = self.advance(&mut psi, draws[0]).map_err(|norm| Error::NormUnderflow {
            traj_index: 0,
            step: 0,
            norm,
        })?;
        Ok((PureState::from_normalized(psi), channel))
    }
}

/// Single step with freshly built matrices; convenient but slow in loops.
pub fn step(
    state: &PureState,
    params: &AtomParams,
    dt: f64,
    draws: [f64; 2],
) -> Result<(PureState, Option<Channel>)> {
    TrajectoryStepper::new(params, dt).step(state, draws)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: Channel,
}

/// One stochastic realization sampled every `record_stride` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub params: AtomParams,
    pub config: SimConfig,
    pub traj_index: u64,
    pub times: Vec<f64>,
    pub states: Vec<PureState>,
    pub jumps: Vec<JumpEvent>,
}

impl TrajectoryRecord {
    pub fn count(&self, channel: Channel) -> usize {
        self.jumps.iter().filter(|j| j.channel == channel).count()
    }

    /// Bare-basis amplitudes (c_e, c_g) at every sample.
    pub fn bare_amplitudes(&self) -> Vec<Vec2> {
        let frame = dressed_basis(&self.params);
        self.states.iter().map(|s| frame.bare_amplitudes(s)).collect()
    }
}

/// Runs trajectory `traj_index` of the configured run from `initial`.
pub fn run_trajectory(
    initial: &PureState,
    params: &AtomParams,
    config: &SimConfig,
    traj_index: u64,
) -> Result<TrajectoryRecord> {
    config.validate(params)?;
    let stepper = TrajectoryStepper::new(params, config.dt);
    let mut rng = rng::trajectory_stream(config.seed, traj_index);
    let n_steps = config.n_steps();
    let stride = config.record_stride as u64;
    let kernel = stepper.kernel();
    let mut psi = to_real(initial.amplitudes());
    let mut n2 = 1.0;
    let mut times = Vec::with_capacity(config.n_samples());
    let mut states = Vec::with_capacity(config.n_samples());
    let mut jumps = Vec::new();
    times.push(0.0);
    states.push(*initial);
    for n in 1..=n_steps {
        let [u1, _] = rng::step_uniforms(&mut rng);
        let channel = kernel.advance(&mut psi, &mut n2, u1).map_err(|norm| Error::NormUnderflow {
            traj_index,
            step: n,
            norm,
        })?;
        let t = n as f64 * config.dt;
        if let Some(channel) = channel {
            jumps.push(JumpEvent { time: t, channel });
        }
        if n % stride == 0 {
            times.push(t);
            states.push(PureState::from_normalized(from_real(&unit(&psi, n2))));
        }
    }
    Ok(TrajectoryRecord {
        params: *params,
        config: *config,
        traj_index,
        times,
        states,
        jumps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{Basis, Operator2};
    use crate::C64;

    fn params(d: f64, g: f64, n: f64) -> AtomParams {
        AtomParams::scaled(d, g, n).unwrap()
    }

    #[test]
    fn config_validation() {
        let p = params(0.0, 0.05, 6.0);
        assert!(SimConfig::new(0.5, 10.0, 1, 0).validate(&p).is_err());
        assert!(SimConfig::new(0.008, 10.0, 1, 0).validate(&p).is_ok());
        let mut c = SimConfig::new(0.5, 10.0, 1, 0);
        c.allow_large_dt = true;
        assert!(c.validate(&p).is_err(), "jump probability above one");
        c.dt = 0.1;
        assert!(c.validate(&p).is_ok());
        assert!(SimConfig::new(0.001, 0.0005, 1, 0).validate(&p).is_err());
        assert!(SimConfig::new(0.001, 1.0, 0, 0).validate(&p).is_err());
        assert!(SimConfig::new(-0.001, 1.0, 1, 0).validate(&p).is_err());
    }

    #[test]
    fn sample_grid() {
        let mut c = SimConfig::new(0.01, 1.0, 1, 0);
        c.record_stride = 10;
        assert_eq!(c.n_steps(), 100);
        assert_eq!(c.n_samples(), 11);
        assert_eq!(c.sample_times()[10], 1.0);
    }

    #[test]
    fn emission_probability_of_excited_state() {
        let p = params(0.0, 0.05, 0.0);
        let s = TrajectoryStepper::new(&p, 1e-3);
        let e = PureState::excited(&dressed_basis(&p));
        assert!((s.emission_probability(e.amplitudes()) - 0.05e-3).abs() < 1e-17);
        let g = PureState::ground(&dressed_basis(&p));
        assert!(s.emission_probability(g.amplitudes()).abs() < 1e-18);
    }

    #[test]
    fn noise_probability_is_exact() {
        let p = params(0.3, 0.05, 6.0);
        assert_eq!(TrajectoryStepper::new(&p, 1e-3).noise_probability(), 6.0 * 1e-3);
    }

    #[test]
    fn noise_jump_from_dressed_one() {
        let p = params(0.0, 0.05, 6.0);
        let (next, ch) = step(&PureState::dressed1(), &p, 1e-3, [0.0, 0.5]).unwrap();
        assert_eq!(ch, Some(Channel::Noise));
        assert!(next.amp1().norm() < 1e-15);
        assert!((next.amp2().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn channel_partition() {
        let p = params(0.0, 0.05, 6.0);
        let s = TrajectoryStepper::new(&p, 1e-3);
        let e = PureState::excited(&dressed_basis(&p));
        let pn = s.noise_probability();
        let pe = s.emission_probability(e.amplitudes());
        assert_eq!(s.step(&e, [pn * 0.5, 0.0]).unwrap().1, Some(Channel::Noise));
        assert_eq!(s.step(&e, [pn + 0.5 * pe, 0.0]).unwrap().1, Some(Channel::Emission));
        assert_eq!(s.step(&e, [pn + 1.5 * pe, 0.0]).unwrap().1, None);
    }

    #[test]
    fn emission_from_ground_state_underflows() {
        let p = params(0.0, 0.05, 0.0);
        let frame = dressed_basis(&p);
        let s = TrajectoryStepper::new(&p, 1e-3);
        let g = PureState::ground(&frame);
        assert_eq!(s.step(&g, [0.5, 0.0]).unwrap().1, None);
        // The emission window of |g⟩ is empty up to rounding, so feed the
        // kernel a null vector to exercise the guard.
        let k = s.kernel();
        let mut n2 = 1.0;
        assert!(k.advance(&mut [0.0; 4], &mut n2, 0.0).is_err());
        let mut v = to_real(g.amplitudes());
        assert!(k.advance(&mut v, &mut n2, 0.0).is_ok());
    }

    #[test]
    fn rabi_oscillation_without_dissipation() {
        let p = params(0.0, 0.0, 0.0);
        let frame = dressed_basis(&p);
        let cfg = SimConfig::new(0.001, 20.0, 1, 11);
        let rec = run_trajectory(&PureState::excited(&frame), &p, &cfg, 0).unwrap();
        assert!(rec.jumps.is_empty());
        let sz = frame.operator_in(&Operator2::spin_z(), Basis::Dressed);
        for (t, s) in rec.times.iter().zip(&rec.states).step_by(500) {
            let z = s.expect(&sz).unwrap().re;
            assert!((z - 0.5 * t.cos()).abs() < 1e-6, "t={t}: {z}");
        }
    }

    #[test]
    fn records_are_reproducible() {
        let p = params(0.0, 0.05, 6.0);
        let cfg = SimConfig::new(0.005, 20.0, 1, 99);
        let a = run_trajectory(&PureState::dressed1(), &p, &cfg, 5).unwrap();
        let b = run_trajectory(&PureState::dressed1(), &p, &cfg, 5).unwrap();
        assert_eq!(a, b);
        let c = run_trajectory(&PureState::dressed1(), &p, &cfg, 6).unwrap();
        assert_ne!(a.jumps, c.jumps);
    }

    #[test]
    fn record_invariants() {
        let p = params(1.0, 0.3, 2.0);
        let mut cfg = SimConfig::new(0.002, 50.0, 1, 3);
        cfg.record_stride = 7;
        let rec = run_trajectory(&PureState::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap(), &p, &cfg, 0).unwrap();
        assert!(rec.states.iter().all(|s| (s.norm_sqr() - 1.0).abs() < 1e-10));
        assert!(rec.jumps.windows(2).all(|w| w[0].time < w[1].time));
        assert!(rec.jumps.iter().all(|j| j.time > 0.0 && j.time <= cfg.t_max + 1e-12));
        assert_eq!(rec.times.len(), cfg.n_samples());
    }

    #[test]
    fn noise_jump_count_is_poissonian() {
        let p = params(0.0, 0.05, 6.0);
        let cfg = SimConfig::new(0.0005, 100.0, 1, 2024);
        let counts: Vec<f64> = (0..20)
            .map(|j| run_trajectory(&PureState::dressed1(), &p, &cfg, j).unwrap().count(Channel::Noise) as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        // 20 × Poisson(600): standard error of the mean ≈ 5.5
        assert!((mean - 600.0).abs() < 25.0, "mean {mean}");
    }
}
