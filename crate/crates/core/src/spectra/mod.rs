//! Extreme singular values of `A = Hᵀ ∈ R^{N×n}` and the asymptotic
//! experiments built on them.
//!
//! With `𝔶 = n/N`, the Bai–Yin edges of `A` sit at `1/√𝔶 ∓ 1`. Around them,
//! the rescaled values
//!
//! * `ξ = 2√𝔶 (1 + 1/√𝔶)^{-1/3} N^{2/3} (s1 − (1 + √(N/n)))`
//! * `ζ = −2√𝔶 (1/√𝔶 − 1)^{-1/3} N^{2/3} (s_n + 1 − √(N/n))`
//!
//! converge in law to TW₁.

pub mod eigen;
mod experiments;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::SeedSpec;
use crate::sketch::{EnsembleParams, SparseSketch};

pub use experiments::*;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularPair {
    pub s1: f64,
    pub sn: f64,
    pub big_n: usize,
    pub n: usize,
    pub params: EnsembleParams,
    pub seed: SeedSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// Largest `n` solved by full eigendecomposition; Lanczos above.
    pub dense_limit: usize,
    /// Largest `n` whose result is cross-checked against a dense SVD of `A`.
    pub cross_check_limit: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { dense_limit: 2000, cross_check_limit: 64 }
    }
}

/// `(√λ_max, √max(λ_min, 0))` of a Gram matrix.
pub fn extremes_from_gram(gram: &DMatrix<f64>, opts: &SpectralOptions) -> Result<(f64, f64)> {
    let (lmax, lmin) = if gram.nrows() <= opts.dense_limit {
        eigen::dense_extremes(gram)?
    } else {
        eigen::lanczos_extremes(gram, 1e-12)?
    };
    Ok((lmax.max(0.0).sqrt(), lmin.max(0.0).sqrt()))
}

/// Largest and smallest singular values of a dense `N × n` matrix via SVD.
pub fn svd_extremes(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    let svd = a
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("dense SVD did not converge".into()))?;
    let s = svd.singular_values;
    Ok((s.max(), s.min()))
}

/// Whether two singular pairs agree: `s1` to `tol` relative, `sn` to `tol`
/// relative while `s1/sn ≤ 10³`, otherwise in the squared domain against
/// `tol · s1²` (squaring in the Gram matrix costs exactly that accuracy).
pub fn pairs_agree(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    let s1_ok = (a.0 - b.0).abs() <= tol * a.0.max(b.0).max(f64::MIN_POSITIVE);
    let big = a.0.max(b.0);
    let small = a.1.max(b.1);
    let sn_ok = if small * 1e3 >= big {
        (a.1 - b.1).abs() <= tol * small
    } else {
        (a.1 * a.1 - b.1 * b.1).abs() <= tol * big * big
    };
    s1_ok && sn_ok
}

/// `s1(A)` and `s_n(A)` for `A = Hᵀ`, from the eigenvalues of `H Hᵀ`.
pub fn extreme_singular_values(sketch: &SparseSketch) -> Result<SingularPair> {
    extreme_singular_values_with(sketch, &SpectralOptions::default())
}

pub fn extreme_singular_values_with(
    sketch: &SparseSketch,
    opts: &SpectralOptions,
) -> Result<SingularPair> {
    let (n, big_n) = (sketch.rows(), sketch.cols());
    if n > big_n {
        return Err(domain(format!("need n <= N, got n = {n}, N = {big_n}")));
    }
    let (s1, sn) = extremes_from_gram(&sketch.gram(), opts)?;
    if n <= opts.cross_check_limit {
        let (t1, tn) = svd_extremes(&sketch.to_dense().transpose())?;
        if !pairs_agree((s1, sn), (t1, tn), 1e-10) {
            return Err(Error::Numerical(format!(
                "Gram eigenvalues and dense SVD disagree: (s1, sn) = ({s1}, {sn}) vs ({t1}, {tn}); \
                 n = {n}, N = {big_n}, seed = {:?}",
                sketch.seed()
            )));
        }
    }
    Ok(SingularPair { s1, sn, big_n, n, params: *sketch.params(), seed: sketch.seed() })
}

/// Bai–Yin edges `(1/√𝔶 − 1, 1/√𝔶 + 1)` with `𝔶 = n/N`.
pub fn bai_yin_limits(big_n: usize, n: usize) -> (f64, f64) {
    let r = (big_n as f64 / n as f64).sqrt();
    (r - 1.0, r + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RescaledKind {
    XiLargest,
    ZetaSmallest,
}

impl RescaledKind {
    pub fn name(self) -> &'static str {
        match self {
            RescaledKind::XiLargest => "largest",
            RescaledKind::ZetaSmallest => "smallest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledSample {
    pub kind: RescaledKind,
    pub value: f64,
    pub big_n: usize,
    pub n: usize,
}

fn aspect(big_n: usize, n: usize) -> Result<f64> {
    if n == 0 || n >= big_n {
        return Err(domain(format!("rescaling needs 0 < n < N, got n = {n}, N = {big_n}")));
    }
    Ok(n as f64 / big_n as f64)
}

/// `ξ` of the largest singular value.
pub fn rescale_s1(s1: f64, big_n: usize, n: usize) -> Result<f64> {
    let y = aspect(big_n, n)?;
    let ry = y.sqrt();
    let nf = big_n as f64;
    Ok(2.0 * ry * (1.0 + 1.0 / ry).powf(-1.0 / 3.0) * nf.powf(2.0 / 3.0) * (s1 - (1.0 + (1.0 / y).sqrt())))
}

/// `ζ` of the smallest singular value.
pub fn rescale_sn(sn: f64, big_n: usize, n: usize) -> Result<f64> {
    let y = aspect(big_n, n)?;
    let ry = y.sqrt();
    let nf = big_n as f64;
    Ok(-2.0 * ry * (1.0 / ry - 1.0).powf(-1.0 / 3.0) * nf.powf(2.0 / 3.0) * (sn + 1.0 - (1.0 / y).sqrt()))
}

pub fn rescale_largest(pair: &SingularPair) -> Result<RescaledSample> {
    Ok(RescaledSample {
        kind: RescaledKind::XiLargest,
        value: rescale_s1(pair.s1, pair.big_n, pair.n)?,
        big_n: pair.big_n,
        n: pair.n,
    })
}

pub fn rescale_smallest(pair: &SingularPair) -> Result<RescaledSample> {
    Ok(RescaledSample {
        kind: RescaledKind::ZetaSmallest,
        value: rescale_sn(pair.sn, pair.big_n, pair.n)?,
        big_n: pair.big_n,
        n: pair.n,
    })
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(domain("empirical CDF needs at least one sample"));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(domain("empirical CDF samples must not be NaN"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{samples ≤ x} / m`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }
}

/// `sup_x |F̂(x) − F(x)|`, attained at a sample point from one side:
/// `max_i max(i/m − F(x_i), F(x_i) − (i−1)/m)`.
pub fn ks_distance(cdf: &EmpiricalCdf, f: impl Fn(f64) -> f64) -> f64 {
    let m = cdf.len() as f64;
    cdf.sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let fx = f(x);
            ((i + 1) as f64 / m - fx).max(fx - i as f64 / m)
        })
        .fold(0.0, f64::max)
}
