//! Sparse Johnson–Lindenstrauss ensembles and the spectral behaviour of
//! their transposes.
//!
//! * [`rng`] — seeded ternary and Gaussian entry generation.
//! * [`sketch`] — hashing-like, exact-hashing, general-q and Gaussian sketches.
//! * [`constants`] — closed-form constants, tail bounds, calibration.
//! * [`jl`] — empirical distortion checks.
//! * [`spectra`] — extreme singular values, Bai–Yin and Tracy–Widom experiments.
//! * [`tw`] — the GOE Tracy–Widom distribution.

pub mod constants;
pub mod error;
pub mod exec;
pub mod jl;
pub mod rng;
pub mod sketch;
pub mod spectra;
pub mod tw;

pub use error::{Error, Result};
pub use exec::Execution;
pub use rng::{derive_stream, derive_substream, SeedSpec};
pub use sketch::{EnsembleParams, SparseSketch};
