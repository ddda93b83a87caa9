//! Ensemble averages over trajectories.
//!
//! Trajectories are processed in fixed blocks of [`BLOCK`] consecutive
//! indices. Each block is summed sequentially and the block sums are added to
//! the total in block order, so the result does not depend on how many
//! workers ran the blocks.

use nalgebra::Matrix2;
use rayon::prelude::*;

use super::{rng, to_real, SimConfig, TrajectoryStepper};
use crate::atom::{AtomParams, Basis, DensityMatrix, Mat2, PureState, Vec2};
use crate::error::{Error, Result};
use crate::C64;

/// Trajectories per reduction block.
pub const BLOCK: u64 = 64;
/// Largest tolerated fraction of aborted trajectories.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Pure(PureState),
    /// Dressed-basis density matrix; sampled through its eigen-decomposition.
    Mixed(DensityMatrix),
}

/// Averages of |ψ⟩⟨ψ| in the dressed basis at every sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAverage {
    pub times: Vec<f64>,
    pub rho: Vec<DensityMatrix>,
    /// Standard errors of (ρ₁₁, ρ₂₂, Re ρ₁₂, Im ρ₁₂).
    pub stderr: Vec<[f64; 4]>,
    pub n_used: u64,
    pub n_failed: u64,
}

/// Several initial states run in lockstep on the same random stream, with
/// any number of weighted combinations of them averaged.
///
/// Entry layout per sample: (ρ₁₁, ρ₂₂, Re ρ₁₂, Im ρ₁₂).
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEnsemble {
    pub times: Vec<f64>,
    /// `means[output][sample]`
    pub means: Vec<Vec<[f64; 4]>>,
    /// Present when requested; same layout as `means`.
    pub stderr: Option<Vec<Vec<[f64; 4]>>>,
    pub n_used: u64,
    pub n_failed: u64,
}

impl CoupledEnsemble {
    pub fn density(&self, output: usize, sample: usize) -> DensityMatrix {
        entries_to_density(&self.means[output][sample])
    }

    pub fn densities(&self, output: usize) -> Vec<DensityMatrix> {
        self.means[output].iter().map(entries_to_density).collect()
    }
}

fn entries_to_density(e: &[f64; 4]) -> DensityMatrix {
    let c = C64::new(e[2], e[3]);
    DensityMatrix::from_matrix_unchecked(
        Mat2::new(C64::from(e[0]), c, c.conj(), C64::from(e[1])),
        Basis::Dressed,
    )
}

/// (|a₁|², |a₂|², Re a₁ā₂, Im a₁ā₂) of the normalized state, `n2 = |s|²`.
#[inline(always)]
fn entries(s: &[f64; 4], n2: f64) -> [f64; 4] {
    let e = [
        s[0] * s[0] + s[1] * s[1],
        s[2] * s[2] + s[3] * s[3],
        s[0] * s[2] + s[1] * s[3],
        s[1] * s[2] - s[0] * s[3],
    ];
    if n2 == 1.0 {
        return e;
    }
    let inv = 1.0 / n2;
    [e[0] * inv, e[1] * inv, e[2] * inv, e[3] * inv]
}

struct Job<'a> {
    stepper: TrajectoryStepper,
    initials: &'a [Vec2],
    /// `weights[output][initial]`; `None` means one output per initial.
    weights: Option<&'a [Vec<f64>]>,
    n_out: usize,
    n_steps: u64,
    stride: u64,
    n_samples: usize,
    seed: u64,
    with_sq: bool,
}

struct Partial {
    sums: Vec<f64>,
    sq: Vec<f64>,
    ok: u64,
    failed: Vec<(u64, Error)>,
}

impl Job<'_> {
    fn width(&self) -> usize {
        self.n_out * 4
    }

    /// Runs trajectories `first..last` side by side, step by step, so that the
    /// per-sample sums stay in cache. Contributions to each sample are still
    /// added in trajectory order.
    fn run_block(&self, first: u64, last: u64, skip: &[u64]) -> Partial {
        let len = self.n_samples * self.width();
        let mut part = Partial {
            sums: vec![0.0; len],
            sq: if self.with_sq { vec![0.0; len] } else { Vec::new() },
            ok: 0,
            failed: Vec::new(),
        };
        let kernel = self.stepper.kernel();
        let k = self.initials.len();
        let start: Vec<[f64; 4]> = self.initials.iter().map(to_real).collect();
        let members: Vec<u64> = (first..last).filter(|j| !skip.contains(j)).collect();
        let mut rngs: Vec<_> = members
            .iter()
            .map(|&j| rng::trajectory_stream(self.seed, j))
            .collect();
        let mut psi: Vec<[f64; 4]> = members.iter().flat_map(|_| start.iter().copied()).collect();
        let mut n2 = vec![1.0; psi.len()];
        let mut alive = vec![true; members.len()];
        let mut row = vec![0.0; self.width()];
        for (t, _) in members.iter().enumerate() {
            self.record(&psi[t * k..(t + 1) * k], &n2[t * k..(t + 1) * k], &mut row, &mut part, 0);
        }
        let mut countdown = self.stride;
        let mut sample = 0;
        for n in 1..=self.n_steps {
            for (t, rng) in rngs.iter_mut().enumerate() {
                let [u1, _] = rng::step_uniforms(rng);
                if !alive[t] {
                    continue;
                }
                let range = t * k..(t + 1) * k;
                for (p, m2) in psi[range.clone()].iter_mut().zip(&mut n2[range]) {
                    if let Err(norm) = kernel.advance(p, m2, u1) {
                        alive[t] = false;
                        part.failed.push((
                            members[t],
                            Error::NormUnderflow {
                                traj_index: members[t],
                                step: n,
                                norm,
                            },
                        ));
                        break;
                    }
                }
            }
            countdown -= 1;
            if countdown == 0 {
                countdown = self.stride;
                sample += 1;
                for (t, _) in alive.iter().enumerate().filter(|(_, a)| **a) {
                    let range = t * k..(t + 1) * k;
                    self.record(&psi[range.clone()], &n2[range], &mut row, &mut part, sample);
                }
            }
        }
        part.ok = alive.iter().filter(|&&a| a).count() as u64;
        part
    }

    #[inline]
    fn record(&self, psi: &[[f64; 4]], n2: &[f64], row: &mut [f64], part: &mut Partial, sample: usize) {
        match self.weights {
            None => {
                for (i, p) in psi.iter().enumerate() {
                    row[4 * i..4 * i + 4].copy_from_slice(&entries(p, n2[i]));
                }
            }
            Some(w) => {
                row.iter_mut().for_each(|x| *x = 0.0);
                for (i, p) in psi.iter().enumerate() {
                    let e = entries(p, n2[i]);
                    for (o, wo) in w.iter().enumerate() {
                        for k in 0..4 {
                            row[4 * o + k] += wo[i] * e[k];
                        }
                    }
                }
            }
        }
        let base = sample * row.len();
        let dst = &mut part.sums[base..base + row.len()];
        for (d, r) in dst.iter_mut().zip(row.iter()) {
            *d += r;
        }
        if self.with_sq {
            let dst = &mut part.sq[base..base + row.len()];
            for (d, r) in dst.iter_mut().zip(row.iter()) {
                *d += r * r;
            }
        }
    }
}

/// Runs `f` on a pool of `workers` threads, or the ambient pool for 0.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidState(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs trajectories `0..config.n_traj`; each evolves every state of
/// `initials` in lockstep on the trajectory's random stream.
///
/// With `weights = None` there is one output per initial state; otherwise
/// output `o` averages `Σ_i weights[o][i] |ψ_i⟩⟨ψ_i|`. A trajectory whose
/// state underflows is dropped as a whole; more than 0.1% dropped is an
/// error.
pub fn run_coupled_ensemble(
    initials: &[PureState],
    weights: Option<&[Vec<f64>]>,
    params: &AtomParams,
    config: &SimConfig,
    with_stderr: bool,
) -> Result<CoupledEnsemble> {
    config.validate(params)?;
    if initials.is_empty() {
        return Err(Error::InvalidState("no initial states".into()));
    }
    if let Some(w) = weights {
        if w.is_empty() || w.iter().any(|wo| wo.len() != initials.len()) {
            return Err(Error::InvalidState("weight rows must match the initial states".into()));
        }
    }
    let amps: Vec<Vec2> = initials.iter().map(|s| *s.amplitudes()).collect();
    let job = Job {
        stepper: TrajectoryStepper::new(params, config.dt),
        initials: &amps,
        weights,
        n_out: weights.map_or(initials.len(), |w| w.len()),
        n_steps: config.n_steps(),
        stride: config.record_stride as u64,
        n_samples: config.n_samples(),
        seed: config.seed,
        with_sq: with_stderr,
    };
    let n_blocks = config.n_traj.div_ceil(BLOCK);
    let len = job.n_samples * job.width();

    let (total, total_sq, ok, failed) = with_workers(config.workers, || {
        let mut total = vec![0.0; len];
        let mut total_sq = if with_stderr { vec![0.0; len] } else { Vec::new() };
        let mut ok = 0u64;
        let mut failed: Vec<(u64, Error)> = Vec::new();
        let wave = (2 * rayon::current_num_threads()) as u64;
        let mut start = 0;
        while start < n_blocks {
            let end = (start + wave).min(n_blocks);
            let parts: Vec<Partial> = (start..end)
                .into_par_iter()
                .map(|b| {
                    let first = b * BLOCK;
                    let last = (first + BLOCK).min(config.n_traj);
                    let part = job.run_block(first, last, &[]);
                    if part.failed.is_empty() {
                        return part;
                    }
                    // Redo the block without the aborted trajectories so
                    // their partial contributions never enter the sums.
                    let skip: Vec<u64> = part.failed.iter().map(|(j, _)| *j).collect();
                    let mut clean = job.run_block(first, last, &skip);
                    clean.failed = part.failed;
                    clean
                })
                .collect();
            for part in parts {
                for (t, s) in total.iter_mut().zip(&part.sums) {
                    *t += s;
                }
                for (t, s) in total_sq.iter_mut().zip(&part.sq) {
                    *t += s;
                }
                ok += part.ok;
                failed.extend(part.failed);
            }
            start = end;
        }
        (total, total_sq, ok, failed)
    })?;

    let n_failed = failed.len() as u64;
    if n_failed as f64 > MAX_FAILURE_FRACTION * config.n_traj as f64 || ok == 0 {
        let first = failed
            .into_iter()
            .next()
            .map(|(_, e)| e)
            .unwrap_or_else(|| Error::InvalidState("no trajectory completed".into()));
        return Err(Error::TooManyFailures {
            failed: n_failed as usize,
            total: config.n_traj as usize,
            first: Box::new(first),
        });
    }

    let n = ok as f64;
    let w = job.width();
    let split = |f: &dyn Fn(usize) -> f64| -> Vec<Vec<[f64; 4]>> {
        (0..job.n_out)
            .map(|o| {
                (0..job.n_samples)
                    .map(|s| {
                        let base = s * w + 4 * o;
                        [f(base), f(base + 1), f(base + 2), f(base + 3)]
                    })
                    .collect()
            })
            .collect()
    };
    let means = split(&|i| total[i] / n);
    let stderr = with_stderr.then(|| {
        split(&|i| {
            if ok < 2 {
                return 0.0;
            }
            let mean = total[i] / n;
            let var = ((total_sq[i] - n * mean * mean) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
    });
    Ok(CoupledEnsemble {
        times: config.sample_times(),
        means,
        stderr,
        n_used: ok,
        n_failed,
    })
}

/// Ensemble average from a pure or mixed initial condition. A mixed state
/// ρ = Σ p_k |v_k⟩⟨v_k| is sampled by running its eigenvectors coupled and
/// weighting them with p_k inside each trajectory.
pub fn run_ensemble(
    initial: &InitialCondition,
    params: &AtomParams,
    config: &SimConfig,
) -> Result<EnsembleAverage> {
    let (states, weights) = match initial {
        InitialCondition::Pure(s) => (vec![*s], vec![vec![1.0]]),
        InitialCondition::Mixed(rho) => decompose_mixed(rho)?,
    };
    let ens = run_coupled_ensemble(&states, Some(&weights), params, config, true)?;
    let stderr = ens.stderr.as_ref().map(|s| s[0].clone()).unwrap_or_default();
    Ok(EnsembleAverage {
        rho: ens.densities(0),
        times: ens.times,
        stderr,
        n_used: ens.n_used,
        n_failed: ens.n_failed,
    })
}

pub(crate) fn decompose_mixed(rho: &DensityMatrix) -> Result<(Vec<PureState>, Vec<Vec<f64>>)> {
    if rho.basis() != Basis::Dressed {
        return Err(Error::BasisMismatch {
            expected: Basis::Dressed,
            found: rho.basis(),
        });
    }
    if !rho.is_physical() {
        return Err(Error::InvalidDensityMatrix(
            "initial state must have unit trace and be positive semidefinite".into(),
        ));
    }
    let m: Matrix2<C64> = *rho.matrix();
    let eig = m.symmetric_eigen();
    let mut states = Vec::new();
    let mut weights = Vec::new();
    for k in 0..2 {
        let p = eig.eigenvalues[k].max(0.0);
        if p > 1e-15 {
            states.push(PureState::from_vector(eig.eigenvectors.column(k).into_owned())?);
            weights.push(p);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((states, vec![weights]))
}
