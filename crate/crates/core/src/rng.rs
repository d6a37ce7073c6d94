//! Reproducible random generation.
//!
//! A [`SeedSpec`] names a ChaCha8 keystream: the master seed keys the cipher
//! and the stream id selects one of its 2^64 independent streams. ChaCha is
//! counter based, so any stream can be opened directly without advancing a
//! shared generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Seed for trial `trial` of an experiment keyed by `master_seed`.
pub fn derive_stream(master_seed: u64, trial: u64) -> SeedSpec {
    SeedSpec::new(master_seed, trial)
}

/// Seed for trial `trial` of sweep point `group`. Packs both indices into
/// the stream id, so distinct pairs never share a stream.
pub fn derive_substream(master_seed: u64, group: u32, trial: u32) -> SeedSpec {
    SeedSpec::new(master_seed, (u64::from(group) << 32) | u64::from(trial))
}

/// Folds `tag` into `master_seed` (SplitMix64 finalizer) so that separate
/// experiments sharing one user seed get unrelated keys.
pub fn mix_seed(master_seed: u64, tag: u64) -> u64 {
    let mut z = master_seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn check_q(q: f64) -> Result<()> {
    if q.is_nan() || q < 2.0 {
        return Err(domain(format!("q must be >= 2, got {q}")));
    }
    Ok(())
}

/// `q̂ = sqrt(q/2)`.
pub fn q_hat(q: f64) -> f64 {
    (q / 2.0).sqrt()
}

/// Maps a uniform draw on [0, 1) to {-1, 0, +1} with P(-1) = P(+1) = 1/q:
/// `[0, 1/q) -> -1`, `[1/q, 2/q) -> +1`, otherwise 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TernarySampler {
    lo: f64,
    hi: f64,
}

impl TernarySampler {
    pub fn new(q: f64) -> Result<Self> {
        check_q(q)?;
        Ok(Self { lo: 1.0 / q, hi: 2.0 / q })
    }

    #[inline]
    pub fn map_uniform(&self, u: f64) -> i8 {
        if u < self.lo {
            -1
        } else if u < self.hi {
            1
        } else {
            0
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i8 {
        self.map_uniform(rng.random::<f64>())
    }

    /// True when no entry can be zero (q = 2).
    pub fn is_dense(&self) -> bool {
        self.hi >= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "q")]
pub enum EntryDistribution {
    MuX(f64),
    MuY(f64),
    SignedBernoulli,
    StdGaussian,
}

impl EntryDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EntryDistribution::MuX(q) | EntryDistribution::MuY(q) => check_q(q),
            _ => Ok(()),
        }
    }

    pub fn sample_n(&self, seed: SeedSpec, count: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = seed.rng();
        Ok(match *self {
            EntryDistribution::MuX(q) => {
                let t = TernarySampler::new(q)?;
                let scale = q_hat(q);
                (0..count).map(|_| scale * f64::from(t.sample(&mut rng))).collect()
            }
            EntryDistribution::MuY(q) => {
                let t = TernarySampler::new(q)?;
                (0..count).map(|_| f64::from(t.sample(&mut rng))).collect()
            }
            EntryDistribution::SignedBernoulli => {
                let t = TernarySampler::new(2.0)?;
                (0..count).map(|_| f64::from(t.sample(&mut rng))).collect()
            }
            EntryDistribution::StdGaussian => {
                (0..count).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            }
        })
    }
}

/// Draws `count` independent values of `Y ~ mu_Y(q)`.
pub fn sample_mu_y(seed: SeedSpec, q: f64, count: usize) -> Result<Vec<i8>> {
    let t = TernarySampler::new(q)?;
    let mut rng = seed.rng();
    Ok((0..count).map(|_| t.sample(&mut rng)).collect())
}

/// Draws `count` independent values of `X ~ mu_X(q)`, i.e. `q̂ · Y`.
pub fn sample_mu_x(seed: SeedSpec, q: f64, count: usize) -> Result<Vec<f64>> {
    let scale = q_hat(q);
    Ok(sample_mu_y(seed, q, count)?
        .into_iter()
        .map(|y| scale * f64::from(y))
        .collect())
}

/// Uniform draws on [0, 1) from the given stream.
pub fn uniforms(seed: SeedSpec, count: usize) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..count).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const M: usize = 1_000_000;

    fn fractions(ys: &[i8]) -> (f64, f64, f64) {
        let m = ys.len() as f64;
        let neg = ys.iter().filter(|&&y| y == -1).count() as f64 / m;
        let zero = ys.iter().filter(|&&y| y == 0).count() as f64 / m;
        let pos = ys.iter().filter(|&&y| y == 1).count() as f64 / m;
        (neg, zero, pos)
    }

    #[test]
    fn q2_has_no_zeros() {
        let ys = sample_mu_y(SeedSpec::new(1, 0), 2.0, M).unwrap();
        assert!(ys.iter().all(|&y| y != 0));
    }

    #[test]
    fn q10_zero_fraction() {
        let ys = sample_mu_y(SeedSpec::new(2, 0), 10.0, M).unwrap();
        let (_, zero, _) = fractions(&ys);
        // 3 sigma binomial band: 3 * sqrt(0.8 * 0.2 / 1e6) = 0.0012
        assert!((zero - 0.8).abs() <= 0.0012, "zero fraction {zero}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = sample_mu_y(SeedSpec::new(9, 4), 3.7, 10_000).unwrap();
        let b = sample_mu_y(SeedSpec::new(9, 4), 3.7, 10_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_q_below_two() {
        assert!(sample_mu_y(SeedSpec::new(0, 0), 1.999, 10).is_err());
        assert!(sample_mu_x(SeedSpec::new(0, 0), f64::NAN, 10).is_err());
        assert!(TernarySampler::new(0.5).is_err());
    }

    #[test]
    fn mu_x_q2_equals_mu_y() {
        let seed = SeedSpec::new(5, 5);
        let x = sample_mu_x(seed, 2.0, 1000).unwrap();
        let y = sample_mu_y(seed, 2.0, 1000).unwrap();
        assert!(x.iter().zip(&y).all(|(a, &b)| *a == f64::from(b)));
    }

    #[test]
    fn mu_x_q8_support() {
        let x = sample_mu_x(SeedSpec::new(6, 0), 8.0, 10_000).unwrap();
        assert!(x.iter().all(|&v| v == -2.0 || v == 0.0 || v == 2.0));
        assert!(x.contains(&2.0) && x.contains(&-2.0) && x.contains(&0.0));
    }

    #[test]
    fn mu_x_unit_variance() {
        // E[X^2] = q̂² · 2/q = 1; sd of the estimate is sqrt(q/2 - 1) / 1000.
        for (i, (q, tol)) in [(2.0, 0.01), (3.0, 0.01), (8.0, 0.01), (50.0, 0.02)].into_iter().enumerate() {
            let x = sample_mu_x(SeedSpec::new(7, i as u64), q, M).unwrap();
            let var = x.iter().map(|v| v * v).sum::<f64>() / M as f64;
            assert!((var - 1.0).abs() <= tol, "q={q} var={var}");
        }
    }

    #[test]
    fn tail_probabilities_within_4_sigma() {
        for (i, q) in [2.0, 2.5, 4.0, 10.0, 100.0].into_iter().enumerate() {
            let ys = sample_mu_y(SeedSpec::new(11, i as u64), q, M).unwrap();
            let (neg, _, pos) = fractions(&ys);
            let p = 1.0 / q;
            let band = 4.0 * (p * (1.0 - p) / M as f64).sqrt();
            assert!((neg - p).abs() <= band, "q={q} P(-1)={neg}");
            assert!((pos - p).abs() <= band, "q={q} P(+1)={pos}");
            let mean = ys.iter().map(|&y| f64::from(y)).sum::<f64>() / M as f64;
            assert!(mean.abs() <= 4.0 * ((2.0 / q) / M as f64).sqrt(), "q={q} mean={mean}");
        }
    }

    #[test]
    fn half_open_thresholds() {
        let t = TernarySampler::new(4.0).unwrap();
        assert_eq!(t.map_uniform(0.0), -1);
        assert_eq!(t.map_uniform(0.25), 1);
        assert_eq!(t.map_uniform(0.4999), 1);
        assert_eq!(t.map_uniform(0.5), 0);
        assert!(TernarySampler::new(2.0).unwrap().is_dense());
    }

    #[test]
    fn derived_streams_are_distinct() {
        let heads: Vec<Vec<f64>> = (0..100).map(|t| uniforms(derive_stream(42, t), 4)).collect();
        for i in 0..heads.len() {
            for j in i + 1..heads.len() {
                assert_ne!(heads[i], heads[j], "streams {i} and {j} collide");
            }
        }
        assert_eq!(derive_stream(42, 3), derive_stream(42, 3));
        assert_ne!(derive_substream(1, 1, 0), derive_substream(1, 0, 1));
    }

    #[test]
    fn neighbouring_streams_uncorrelated() {
        let m = 200_000;
        let a = uniforms(derive_stream(3, 0), m);
        let b = uniforms(derive_stream(3, 1), m);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / m as f64;
        let corr = cov / (1.0 / 12.0);
        assert!(corr.abs() < 4.0 / (m as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn gaussian_entries() {
        let x = EntryDistribution::StdGaussian.sample_n(SeedSpec::new(1, 1), 100_000).unwrap();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 1.0).abs() < 0.02);
        assert!(EntryDistribution::MuX(1.0).sample_n(SeedSpec::new(1, 1), 1).is_err());
        let sb = EntryDistribution::SignedBernoulli.sample_n(SeedSpec::new(1, 2), 10).unwrap();
        let my = EntryDistribution::MuY(2.0).sample_n(SeedSpec::new(1, 2), 10).unwrap();
        assert_eq!(sb, my);
    }
}
