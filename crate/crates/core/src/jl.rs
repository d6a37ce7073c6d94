//! Empirical Johnson–Lindenstrauss checks: a trial draws a fresh sketch and
//! a fresh test vector and fails when `‖Hx‖/‖x‖ ∉ [1 − ε, 1 + ε]`.

use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{domain, Result};
use crate::exec::Execution;
use crate::rng::{derive_substream, SeedSpec};
use crate::sketch::{self, EnsembleParams, SparseSketch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum VectorFamily {
    /// Uniform on the unit sphere.
    GaussianUnit,
    /// A random standard basis vector.
    #[serde(rename = "sparse-1-hot")]
    Sparse1Hot,
    /// `k` random coordinates with random signs, scaled to unit norm.
    SparseKHot(usize),
    /// One coordinate carrying 95% of the norm, the rest spread densely.
    CoordinateHeavy,
    /// The same vector in every trial.
    UserSupplied(Vec<f64>),
}

impl VectorFamily {
    pub fn name(&self) -> &'static str {
        match self {
            VectorFamily::GaussianUnit => "gaussian-unit",
            VectorFamily::Sparse1Hot => "sparse-1-hot",
            VectorFamily::SparseKHot(_) => "sparse-k-hot",
            VectorFamily::CoordinateHeavy => "coordinate-heavy",
            VectorFamily::UserSupplied(_) => "user-supplied",
        }
    }

    pub fn draw(&self, len: usize, seed: SeedSpec) -> Result<Vec<f64>> {
        let mut rng = seed.rng();
        let gaussian_unit = |rng: &mut crate::rng::StreamRng| {
            let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        };
        Ok(match self {
            VectorFamily::GaussianUnit => gaussian_unit(&mut rng),
            VectorFamily::Sparse1Hot => {
                let mut v = vec![0.0; len];
                v[rng.random_range(0..len)] = 1.0;
                v
            }
            VectorFamily::SparseKHot(k) => {
                if *k == 0 || *k > len {
                    return Err(domain(format!("k-hot needs 1 <= k <= N, got k = {k}")));
                }
                let mut v = vec![0.0; len];
                let w = 1.0 / (*k as f64).sqrt();
                for j in sample_indices(&mut rng, len, *k) {
                    v[j] = if rng.random::<bool>() { w } else { -w };
                }
                v
            }
            VectorFamily::CoordinateHeavy => {
                let heavy: f64 = 0.95;
                let j = rng.random_range(0..len);
                let mut v = gaussian_unit(&mut rng);
                let rest = (1.0 - heavy * heavy).sqrt();
                v.iter_mut().for_each(|x| *x *= rest);
                v[j] += heavy;
                v
            }
            VectorFamily::UserSupplied(x) => {
                if x.len() != len {
                    return Err(crate::error::Error::DimensionMismatch { expected: len, got: x.len() });
                }
                x.clone()
            }
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    // Scaled to stay finite for extreme magnitudes.
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * v.iter().map(|x| (x / m).powi(2)).sum::<f64>().sqrt()
}

/// `‖Hx‖₂ / ‖x‖₂`.
pub fn distortion(sketch: &SparseSketch, x: &[f64]) -> Result<f64> {
    let nx = norm(x);
    if nx == 0.0 {
        return Err(domain("distortion of the zero vector is undefined"));
    }
    Ok(norm(&sketch.apply(x)?) / nx)
}

/// Two-sided Clopper–Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: usize, n: usize, level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).expect("positive shapes").inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).expect("positive shapes").inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub params: EnsembleParams,
    pub epsilon: f64,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// 95% Clopper–Pearson interval for the failure probability.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_ratio_sq: f64,
    pub sd_ratio_sq: f64,
    pub vector_family: VectorFamily,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_trial_ratios: Option<Vec<f64>>,
}

impl DistortionReport {
    /// `trial,ratio` lines; empty when ratios were not kept.
    pub fn write_trials_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["trial", "ratio"])?;
        for (t, r) in self.per_trial_ratios.iter().flatten().enumerate() {
            out.write_record([t.to_string(), r.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JlOptions {
    pub exec: Execution,
    pub keep_ratios: bool,
}

impl Default for JlOptions {
    fn default() -> Self {
        Self { exec: Execution::default(), keep_ratios: false }
    }
}

/// Trial `t` uses sketch stream `(master, 0, t)` and vector stream
/// `(master, 1, t)`.
pub fn verify_jlt(
    params: EnsembleParams,
    epsilon: f64,
    trials: usize,
    family: &VectorFamily,
    master_seed: u64,
) -> Result<DistortionReport> {
    verify_jlt_with(params, epsilon, trials, family, master_seed, &JlOptions::default())
}

pub fn verify_jlt_with(
    params: EnsembleParams,
    epsilon: f64,
    trials: usize,
    family: &VectorFamily,
    master_seed: u64,
    opts: &JlOptions,
) -> Result<DistortionReport> {
    if trials == 0 {
        return Err(domain("trials must be positive"));
    }
    if !(epsilon >= 0.0) {
        return Err(domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    params.validate()?;
    let ratios = opts.exec.try_map(trials, |t| {
        let h = sketch::build(params, derive_substream(master_seed, 0, t as u32))?;
        let x = family.draw(params.big_n, derive_substream(master_seed, 1, t as u32))?;
        distortion(&h, &x)
    })?;
    let failures = ratios
        .iter()
        .filter(|&&r| !(r >= 1.0 - epsilon && r <= 1.0 + epsilon))
        .count();
    let m = trials as f64;
    let sq: Vec<f64> = ratios.iter().map(|r| r * r).collect();
    let mean_ratio_sq = sq.iter().sum::<f64>() / m;
    let sd_ratio_sq = if trials > 1 {
        (sq.iter().map(|v| (v - mean_ratio_sq).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let (ci_low, ci_high) = clopper_pearson(failures, trials, 0.95);
    Ok(DistortionReport {
        params,
        epsilon,
        trials,
        failures,
        failure_rate: failures as f64 / m,
        ci_low,
        ci_high,
        mean_ratio_sq,
        sd_ratio_sq,
        vector_family: family.clone(),
        master_seed,
        per_trial_ratios: opts.keep_ratios.then_some(ratios),
    })
}

/// Runs [`verify_jlt_with`] for each ensemble under the same master seed, so
/// all ensembles see the same test vectors.
pub fn compare_ensembles(
    ensembles: &[EnsembleParams],
    epsilon: f64,
    trials: usize,
    family: &VectorFamily,
    master_seed: u64,
    opts: &JlOptions,
) -> Result<Vec<DistortionReport>> {
    ensembles
        .iter()
        .map(|&p| verify_jlt_with(p, epsilon, trials, family, master_seed, opts))
        .collect()
}
