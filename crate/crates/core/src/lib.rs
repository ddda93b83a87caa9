//! Resonance fluorescence of a coherently driven two-level atom under white
//! frequency noise.
//!
//! The crate contains:
//!
//! * [`atom`]: the model (operators, bare and dressed bases, jump operators).
//! * [`trajectory`]: a Monte Carlo wave-function engine with reproducible
//!   parallel random streams.
//! * [`reconstruct`]: the single-pass spectrum method that evolves four basis
//!   density operators once and rebuilds the Heisenberg-picture `S^+(τ)`.
//! * [`analytic`]: closed-form correlation functions, the pole/residue
//!   decomposition and a brute-force regression-theorem oracle.
//! * [`phase`]: dressed-state phase differences and their correlation
//!   functions.
//!
//! All frequencies are in units of the Rabi frequency and ħ = 1.

pub mod analytic;
pub mod atom;
pub mod error;
pub mod master;
pub mod phase;
pub mod reconstruct;
pub mod spectrum;
pub mod stats;
pub mod trajectory;

pub use atom::{AtomParams, Basis, DensityMatrix, Operator2, PureState};
pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use spectrum::{OmegaGrid, SpectrumMethod, SpectrumSeries};
pub use trajectory::{SimConfig, TrajectoryRecord};
