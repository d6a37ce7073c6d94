//! Random sketching matrices `H ∈ R^{n×N}`.
//!
//! Sign ensembles store one scale factor plus a ±1 pattern; the Gaussian
//! baseline stores dense standard normals with scale `1/√n`.

mod io;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::{check_q, q_hat, SeedSpec, TernarySampler};

pub use io::{read_sketch_file, write_sketch_file, MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ensemble {
    HashingLike,
    ExactHashing,
    GeneralQ,
    Gaussian,
}

impl Ensemble {
    pub fn name(self) -> &'static str {
        match self {
            Ensemble::HashingLike => "hashing-like",
            Ensemble::ExactHashing => "exact-hashing",
            Ensemble::GeneralQ => "general-q",
            Ensemble::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hashing-like" => Ok(Ensemble::HashingLike),
            "exact-hashing" => Ok(Ensemble::ExactHashing),
            "general-q" => Ok(Ensemble::GeneralQ),
            "gaussian" => Ok(Ensemble::Gaussian),
            other => Err(domain(format!("unknown ensemble '{other}'"))),
        }
    }
}

/// Ensemble choice and shape. `n` is the sketch (target) dimension and
/// `big_n` the ambient dimension. Sign ensembles accept any `N >= 1`; the
/// Gaussian baseline and the spectral routines need `n <= N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub ensemble: Ensemble,
    pub n: usize,
    pub big_n: usize,
    pub s: Option<f64>,
    pub q: Option<f64>,
}

impl EnsembleParams {
    pub fn hashing_like(n: usize, big_n: usize, s: f64) -> Self {
        Self { ensemble: Ensemble::HashingLike, n, big_n, s: Some(s), q: None }
    }

    pub fn exact_hashing(n: usize, big_n: usize, s: usize) -> Self {
        Self { ensemble: Ensemble::ExactHashing, n, big_n, s: Some(s as f64), q: None }
    }

    pub fn general_q(n: usize, big_n: usize, q: f64) -> Self {
        Self { ensemble: Ensemble::GeneralQ, n, big_n, s: None, q: Some(q) }
    }

    pub fn gaussian(n: usize, big_n: usize) -> Self {
        Self { ensemble: Ensemble::Gaussian, n, big_n, s: None, q: None }
    }

    pub fn with_dims(mut self, n: usize, big_n: usize) -> Self {
        self.n = n;
        self.big_n = big_n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(domain("n must be positive"));
        }
        if self.big_n == 0 {
            return Err(domain("N must be positive"));
        }
        let n = self.n as f64;
        match self.ensemble {
            Ensemble::HashingLike => {
                let s = self.s.ok_or_else(|| domain("hashing-like ensemble needs s"))?;
                if !(s > 0.0 && s <= n) {
                    return Err(domain(format!("s must lie in (0, n], got s = {s}, n = {n}")));
                }
                if let Some(q) = self.q {
                    let implied = 2.0 * n / s;
                    if (q - implied).abs() > 1e-12 * implied {
                        return Err(domain(format!("q = {q} disagrees with 2n/s = {implied}")));
                    }
                }
            }
            Ensemble::ExactHashing => {
                let s = self.s.ok_or_else(|| domain("exact-hashing ensemble needs s"))?;
                if s.fract() != 0.0 || s < 1.0 || s > n {
                    return Err(domain(format!("exact hashing needs an integer s in [1, n], got {s}")));
                }
            }
            Ensemble::GeneralQ => {
                check_q(self.q.ok_or_else(|| domain("general-q ensemble needs q"))?)?;
            }
            Ensemble::Gaussian => {
                if self.big_n < self.n {
                    return Err(domain(format!("N = {} must be >= n = {}", self.big_n, self.n)));
                }
            }
        }
        Ok(())
    }

    /// Entry parameter q of the ternary law (`2n/s` for the hashing families).
    pub fn effective_q(&self) -> Option<f64> {
        match self.ensemble {
            Ensemble::GeneralQ => self.q,
            Ensemble::HashingLike | Ensemble::ExactHashing => {
                self.s.map(|s| 2.0 * self.n as f64 / s)
            }
            Ensemble::Gaussian => None,
        }
    }

    /// Expected nonzeros per column.
    pub fn expected_column_nnz(&self) -> f64 {
        match self.ensemble {
            Ensemble::Gaussian => self.n as f64,
            _ => 2.0 * self.n as f64 / self.effective_q().unwrap_or(2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Storage {
    /// Compressed sparse columns; row indices ascending within a column.
    Sparse { col_ptr: Vec<usize>, row_idx: Vec<u32>, signs: Vec<i8> },
    /// Column-major ±1 pattern with no zeros.
    DenseSigns(Vec<i8>),
    /// Column-major real pattern.
    Dense(Vec<f64>),
}

/// Immutable sketch `H = scale · pattern`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSketch {
    rows: usize,
    cols: usize,
    scale: f64,
    storage: Storage,
    params: EnsembleParams,
    seed: SeedSpec,
}

fn sign_scale(q: f64, n: usize) -> f64 {
    q_hat(q) / (n as f64).sqrt()
}

fn build_ternary(params: EnsembleParams, q: f64, seed: SeedSpec) -> Result<SparseSketch> {
    let sampler = TernarySampler::new(q)?;
    let (n, big_n) = (params.n, params.big_n);
    let mut rng = seed.rng();
    let storage = if sampler.is_dense() {
        Storage::DenseSigns((0..n * big_n).map(|_| sampler.sample(&mut rng)).collect())
    } else {
        let expected = (2.0 / q * (n * big_n) as f64) as usize;
        let mut col_ptr = Vec::with_capacity(big_n + 1);
        let mut row_idx = Vec::with_capacity(expected + expected / 8 + 16);
        let mut signs = Vec::with_capacity(expected + expected / 8 + 16);
        col_ptr.push(0);
        for _ in 0..big_n {
            for i in 0..n {
                let y = sampler.sample(&mut rng);
                if y != 0 {
                    row_idx.push(i as u32);
                    signs.push(y);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Storage::Sparse { col_ptr, row_idx, signs }
    };
    Ok(SparseSketch { rows: n, cols: big_n, scale: sign_scale(q, n), storage, params, seed })
}

/// `H = (1/√s) (Y_ij)` with independent `Y_ij ~ mu_Y(2n/s)`.
pub fn build_hashing_like(params: EnsembleParams, seed: SeedSpec) -> Result<SparseSketch> {
    if params.ensemble != Ensemble::HashingLike {
        return Err(domain("build_hashing_like needs a hashing-like parameter set"));
    }
    params.validate()?;
    let q = params.effective_q().expect("validated");
    build_ternary(params, q, seed)
}

/// `H = (q̂/√n) (Y_ij)` with independent `Y_ij ~ mu_Y(q)`.
pub fn build_general_q(params: EnsembleParams, seed: SeedSpec) -> Result<SparseSketch> {
    if params.ensemble != Ensemble::GeneralQ {
        return Err(domain("build_general_q needs a general-q parameter set"));
    }
    params.validate()?;
    build_ternary(params, params.q.expect("validated"), seed)
}

/// Exactly `s` nonzeros ±1/√s per column, rows chosen uniformly (Floyd's
/// sampling) and signs independent.
pub fn build_exact_hashing(params: EnsembleParams, seed: SeedSpec) -> Result<SparseSketch> {
    if params.ensemble != Ensemble::ExactHashing {
        return Err(domain("build_exact_hashing needs an exact-hashing parameter set"));
    }
    params.validate()?;
    let (n, big_n) = (params.n, params.big_n);
    let s = params.s.expect("validated") as usize;
    let mut rng = seed.rng();
    let mut col_ptr = Vec::with_capacity(big_n + 1);
    let mut row_idx = Vec::with_capacity(big_n * s);
    let mut signs = Vec::with_capacity(big_n * s);
    let mut taken = vec![false; n];
    let mut chosen: Vec<u32> = Vec::with_capacity(s);
    col_ptr.push(0);
    for _ in 0..big_n {
        chosen.clear();
        for j in (n - s)..n {
            let t = rng.random_range(0..=j);
            let pick = if taken[t] { j } else { t };
            taken[pick] = true;
            chosen.push(pick as u32);
        }
        chosen.sort_unstable();
        for &r in &chosen {
            taken[r as usize] = false;
            row_idx.push(r);
            signs.push(if rng.random::<bool>() { 1 } else { -1 });
        }
        col_ptr.push(row_idx.len());
    }
    Ok(SparseSketch {
        rows: n,
        cols: big_n,
        scale: 1.0 / (s as f64).sqrt(),
        storage: Storage::Sparse { col_ptr, row_idx, signs },
        params,
        seed,
    })
}

/// Dense `N(0, 1/n)` entries.
pub fn build_gaussian(n: usize, big_n: usize, seed: SeedSpec) -> Result<SparseSketch> {
    let params = EnsembleParams::gaussian(n, big_n);
    params.validate()?;
    let mut rng = seed.rng();
    let z = (0..n * big_n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(SparseSketch {
        rows: n,
        cols: big_n,
        scale: 1.0 / (n as f64).sqrt(),
        storage: Storage::Dense(z),
        params,
        seed,
    })
}

/// Dispatches on `params.ensemble`.
pub fn build(params: EnsembleParams, seed: SeedSpec) -> Result<SparseSketch> {
    match params.ensemble {
        Ensemble::HashingLike => build_hashing_like(params, seed),
        Ensemble::ExactHashing => build_exact_hashing(params, seed),
        Ensemble::GeneralQ => build_general_q(params, seed),
        Ensemble::Gaussian => build_gaussian(params.n, params.big_n, seed),
    }
}

impl SparseSketch {
    pub(crate) fn from_parts(
        rows: usize,
        cols: usize,
        scale: f64,
        storage: Storage,
        params: EnsembleParams,
        seed: SeedSpec,
    ) -> Self {
        Self { rows, cols, scale, storage, params, seed }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn params(&self) -> &EnsembleParams {
        &self.params
    }

    pub fn seed(&self) -> SeedSpec {
        self.seed
    }

    /// True when the stored pattern and scale coincide, regardless of
    /// the parameter metadata.
    pub fn same_matrix(&self, other: &SparseSketch) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.scale == other.scale
            && self.storage == other.storage
    }

    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Sparse { row_idx, .. } => row_idx.len(),
            Storage::DenseSigns(v) => v.len(),
            Storage::Dense(v) => v.iter().filter(|x| **x != 0.0).count(),
        }
    }

    pub fn column_nnz(&self, j: usize) -> usize {
        match &self.storage {
            Storage::Sparse { col_ptr, .. } => col_ptr[j + 1] - col_ptr[j],
            Storage::DenseSigns(_) => self.rows,
            Storage::Dense(v) => {
                v[j * self.rows..(j + 1) * self.rows].iter().filter(|x| **x != 0.0).count()
            }
        }
    }

    pub fn column_nnz_counts(&self) -> Vec<usize> {
        (0..self.cols).map(|j| self.column_nnz(j)).collect()
    }

    /// Visits the nonzero entries `(row, value)` of column `j`, scale included.
    pub fn for_each_in_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        let n = self.rows;
        match &self.storage {
            Storage::Sparse { col_ptr, row_idx, signs } => {
                for k in col_ptr[j]..col_ptr[j + 1] {
                    f(row_idx[k] as usize, self.scale * f64::from(signs[k]));
                }
            }
            Storage::DenseSigns(v) => {
                for (i, &g) in v[j * n..(j + 1) * n].iter().enumerate() {
                    f(i, self.scale * f64::from(g));
                }
            }
            Storage::Dense(v) => {
                for (i, &z) in v[j * n..(j + 1) * n].iter().enumerate() {
                    if z != 0.0 {
                        f(i, self.scale * z);
                    }
                }
            }
        }
    }

    /// `H` as a dense `n × N` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for j in 0..self.cols {
            self.for_each_in_column(j, |i, v| m[(i, j)] = v);
        }
        m
    }

    /// `H x`, exact sparse product in O(nnz).
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, got: x.len() });
        }
        let n = self.rows;
        let mut y = vec![0.0; n];
        match &self.storage {
            Storage::Sparse { col_ptr, row_idx, signs } => {
                for (j, &xj) in x.iter().enumerate() {
                    if xj == 0.0 {
                        continue;
                    }
                    for k in col_ptr[j]..col_ptr[j + 1] {
                        y[row_idx[k] as usize] += f64::from(signs[k]) * xj;
                    }
                }
            }
            Storage::DenseSigns(v) => {
                for (j, &xj) in x.iter().enumerate() {
                    if xj == 0.0 {
                        continue;
                    }
                    for (yi, &g) in y.iter_mut().zip(&v[j * n..(j + 1) * n]) {
                        *yi += f64::from(g) * xj;
                    }
                }
            }
            Storage::Dense(v) => {
                for (j, &xj) in x.iter().enumerate() {
                    if xj == 0.0 {
                        continue;
                    }
                    for (yi, &z) in y.iter_mut().zip(&v[j * n..(j + 1) * n]) {
                        *yi += z * xj;
                    }
                }
            }
        }
        for yi in &mut y {
            *yi *= self.scale;
        }
        Ok(y)
    }

    /// The `n × n` Gram matrix `H Hᵀ = AᵀA` with `A = Hᵀ`.
    ///
    /// Sign patterns accumulate in integers, so the result is exact up to the
    /// final multiplication by `scale²`. Dense Gaussian patterns accumulate
    /// column blocks with compensated summation.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.rows;
        let s2 = self.scale * self.scale;
        match &self.storage {
            Storage::Sparse { col_ptr, row_idx, signs } => {
                let column = |j: usize| {
                    let (a, b) = (col_ptr[j], col_ptr[j + 1]);
                    (&row_idx[a..b], &signs[a..b])
                };
                integer_gram(n, self.cols, column, s2)
            }
            Storage::DenseSigns(v) => {
                let rows: Vec<u32> = (0..n as u32).collect();
                integer_gram(n, self.cols, |j| (&rows[..], &v[j * n..(j + 1) * n]), s2)
            }
            Storage::Dense(v) => dense_gram(v, n, self.cols) * s2,
        }
    }

    /// Sum of squared entries, `trace(H Hᵀ)`.
    pub fn frobenius_sq(&self) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v.iter().map(|z| z * z).sum::<f64>() * self.scale * self.scale,
            _ => self.nnz() as f64 * self.scale * self.scale,
        }
    }
}

// Every entry is bounded by the column count, so 32-bit accumulators are
// exact whenever N < 2³¹ and halve the memory traffic.
fn integer_gram<'a>(
    n: usize,
    cols: usize,
    column: impl Fn(usize) -> (&'a [u32], &'a [i8]),
    s2: f64,
) -> DMatrix<f64> {
    if cols < i32::MAX as usize {
        let mut acc = vec![0i32; n * n];
        for j in 0..cols {
            let (rows, signs) = column(j);
            accumulate_outer(&mut acc, n, rows, signs);
        }
        symmetric_from_upper(&acc, n, |v| f64::from(v) * s2)
    } else {
        let mut acc = vec![0i64; n * n];
        for j in 0..cols {
            let (rows, signs) = column(j);
            accumulate_outer(&mut acc, n, rows, signs);
        }
        symmetric_from_upper(&acc, n, |v| v as f64 * s2)
    }
}

// Upper triangle (row <= col) of the integer Gram.
fn accumulate_outer<T>(acc: &mut [T], n: usize, rows: &[u32], signs: &[i8])
where
    T: From<i8> + Copy + std::ops::AddAssign + std::ops::Mul<Output = T>,
{
    for (a, (&ra, &ga)) in rows.iter().zip(signs).enumerate() {
        let base = ra as usize * n;
        let ga = T::from(ga);
        for (&rb, &gb) in rows[a..].iter().zip(&signs[a..]) {
            acc[base + rb as usize] += ga * T::from(gb);
        }
    }
}

fn symmetric_from_upper<T: Copy>(acc: &[T], n: usize, to_f64: impl Fn(T) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            let v = to_f64(acc[i * n + k]);
            g[(i, k)] = v;
            g[(k, i)] = v;
        }
    }
    g
}

const GRAM_BLOCK: usize = 4096;

fn dense_gram(v: &[f64], n: usize, cols: usize) -> DMatrix<f64> {
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut comp = DMatrix::<f64>::zeros(n, n);
    let mut start = 0;
    while start < cols {
        let end = (start + GRAM_BLOCK).min(cols);
        let block = DMatrix::from_column_slice(n, end - start, &v[start * n..end * n]);
        let part = &block * block.transpose();
        // Neumaier summation across blocks.
        for (k, p) in part.iter().enumerate() {
            let s = sum[k];
            let t = s + p;
            comp[k] += if s.abs() >= p.abs() { (s - t) + p } else { (p - t) + s };
            sum[k] = t;
        }
        start = end;
    }
    sum + comp
}

/// Per-column nonzero count statistics next to their binomial expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnCountSummary {
    pub columns: usize,
    pub mean: f64,
    pub variance: f64,
    pub min: usize,
    pub max: usize,
    pub zero_columns: usize,
    pub expected_mean: f64,
    pub expected_variance: f64,
    pub prob_zero_column: f64,
}

impl ColumnCountSummary {
    /// Summarizes `sketch`; the expectations use `N̂ ~ Bin(n, s/n)`.
    pub fn of(sketch: &SparseSketch) -> Self {
        let counts = sketch.column_nnz_counts();
        let m = counts.len() as f64;
        let mean = counts.iter().sum::<usize>() as f64 / m;
        let variance = if counts.len() > 1 {
            counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let n = sketch.rows() as f64;
        let s = sketch.params().expected_column_nnz();
        let (expected_variance, prob_zero_column) = match sketch.params().ensemble {
            Ensemble::ExactHashing => (0.0, 0.0),
            Ensemble::Gaussian => (0.0, 0.0),
            _ => (s * (1.0 - s / n), (1.0 - s / n).powf(n)),
        };
        Self {
            columns: counts.len(),
            mean,
            variance,
            min: counts.iter().copied().min().unwrap_or(0),
            max: counts.iter().copied().max().unwrap_or(0),
            zero_columns: counts.iter().filter(|&&c| c == 0).count(),
            expected_mean: s,
            expected_variance,
            prob_zero_column,
        }
    }
}
