//! Closed-form constants as functions of `q`, and the tail bounds built
//! from them.
//!
//! The absolute constants `C1 … C5, c23, κ` exist but are unspecified; the
//! defaults shipped here come from [`calibrate`].

mod calibrate;

use std::f64::consts::LN_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::{check_q, q_hat};

pub use calibrate::{
    c2_requirement, calibrate, check_bound, check_bounds, default_bound_probes, k3_requirement,
    BoundCheck, BoundProbe, CalibrationBudget, CalibrationRecord, Estimates, JlFit, JlProbe,
    KhintchineProbe, ProbeGrid, TailFit, TailProbe,
};

const LN_5: f64 = 1.609_437_912_434_100_3;

/// `κ0' = 1/2 − ln2/4`, so that `ψ = exp(−κ0' γ²)`.
pub const KAPPA0_PRIME: f64 = 0.5 - LN_2 / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteConstants {
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C1_prime")]
    pub c1_prime: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    #[serde(rename = "C4")]
    pub c4: f64,
    #[serde(rename = "C5")]
    pub c5: f64,
    pub c23: f64,
    pub c23_tilde: f64,
    pub kappa: f64,
}

impl AbsoluteConstants {
    /// Builds the full set from the independent knobs, with
    /// `C1 = C5²`, `C1' = 4 C1` and `c̃23 = c23 / 8`.
    pub fn from_core(c2: f64, c3: f64, c4: f64, c5: f64, c23: f64, kappa: f64) -> Self {
        let c1 = c5 * c5;
        Self { c1, c1_prime: 4.0 * c1, c2, c3, c4, c5, c23, c23_tilde: c23 / 8.0, kappa }
    }

    /// Minimal values satisfying the structural requirements; useful for
    /// checking the closed forms, not for bounding anything.
    pub fn placeholder() -> Self {
        Self::from_core(1.5, 1.5, 1.5, 1.0, 0.5, 0.5)
    }

    /// The calibrated defaults bundled with the crate.
    pub fn calibrated() -> Self {
        ConstantsFile::bundled().constants
    }

    pub fn validate(&self) -> Result<()> {
        let above_one = [("C2", self.c2), ("C3", self.c3), ("C4", self.c4)];
        for (name, v) in above_one {
            if !(v > 1.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 1, got {v}")));
            }
        }
        let unit = [("c23", self.c23), ("c23_tilde", self.c23_tilde), ("kappa", self.kappa)];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        let positive = [("C1", self.c1), ("C1_prime", self.c1_prime), ("C5", self.c5)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for AbsoluteConstants {
    fn default() -> Self {
        Self::calibrated()
    }
}

/// Versioned on-disk form of the absolute constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsFile {
    pub format: String,
    pub version: u32,
    pub constants: AbsoluteConstants,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationRecord>,
}

pub const CONSTANTS_FORMAT: &str = "sparsejl-constants";
pub const CONSTANTS_VERSION: u32 = 1;

const BUNDLED: &str = include_str!("../../data/calibrated_constants.json");

impl ConstantsFile {
    pub fn new(constants: AbsoluteConstants, calibration: Option<CalibrationRecord>) -> Self {
        Self {
            format: CONSTANTS_FORMAT.to_string(),
            version: CONSTANTS_VERSION,
            constants,
            calibration,
        }
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled constants file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConstantsFile = serde_json::from_str(text)?;
        if file.format != CONSTANTS_FORMAT {
            return Err(Error::Config(format!("unexpected format tag '{}'", file.format)));
        }
        if file.version != CONSTANTS_VERSION {
            return Err(Error::Config(format!(
                "unsupported constants version {} (expected {CONSTANTS_VERSION})",
                file.version
            )));
        }
        file.constants.validate()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Every derived constant for one value of `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub q: f64,
    pub q_hat: f64,
    pub abs: AbsoluteConstants,
    /// `ln(q/2 + 1)`.
    pub log_term: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "K3")]
    pub k3: f64,
    #[serde(rename = "K4")]
    pub k4: f64,
    #[serde(rename = "K5")]
    pub k5: f64,
    pub c2: f64,
    pub c0: f64,
    #[serde(rename = "C0")]
    pub big_c0: f64,
    #[serde(rename = "C0_prime")]
    pub big_c0_prime: f64,
    pub gamma: f64,
    pub psi: f64,
    pub epsilon_q: f64,
    pub kappa0: f64,
    pub kappa0_prime: f64,
    pub alpha0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

/// Evaluates the ledger for `q` and checks the chain
/// `γ, ψ ∈ (0,1)`, `ε_q < min{3ψ, 1}`, `α0 ∈ (0,1)`.
pub fn ledger_for(q: f64, abs: AbsoluteConstants) -> Result<ConstantLedger> {
    check_q(q)?;
    abs.validate()?;
    let qh = q_hat(q);
    let l = (q / 2.0).ln_1p();
    let k1 = 1.0 / l.sqrt();
    let k2 = abs.c2 * k1;
    let k3 = abs.c3 * k2;
    let k4 = abs.c4 / l.sqrt();
    let k5 = abs.c5 * q / l;
    let c2 = (abs.c23 / k1).powi(2);
    let c0 = abs.c23_tilde.powi(2) * l;
    let big_c0 = (LN_5 / c0).sqrt();
    let big_c0_prime = (LN_5 / LN_2).sqrt() / abs.c23_tilde;
    let gamma = 3.0 * l / (8.0 * abs.c4 * abs.c4 * q);
    let log_inv_psi = KAPPA0_PRIME * gamma * gamma;
    let psi = (-log_inv_psi).exp();
    let epsilon_q = gamma / (8.0 * big_c0 * qh);
    let kappa0 = 3.0 * abs.c23_tilde / (128.0 * abs.c4 * abs.c4 * LN_5.sqrt());
    let alpha0 = abs.kappa * log_inv_psi / (3.0 / epsilon_q).ln();
    let kappa1 = gamma / 8.0;
    let kappa2 = 0.25 * (1.0 - abs.kappa) * (1.0 - LN_2 / 2.0) * gamma * gamma;

    let checks = [
        (gamma > 0.0 && gamma < 1.0, format!("gamma = {gamma} must lie in (0, 1)")),
        (psi > 0.0 && psi < 1.0, format!("psi = {psi} must lie in (0, 1)")),
        (
            epsilon_q < (3.0 * psi).min(1.0),
            format!("epsilon_q = {epsilon_q} must be < min(3 psi, 1) = {}", (3.0 * psi).min(1.0)),
        ),
        (alpha0 > 0.0 && alpha0 < 1.0, format!("alpha0 = {alpha0} must lie in (0, 1)")),
    ];
    for (ok, msg) in checks {
        if !ok {
            return Err(Error::Config(format!("q = {q}: {msg}")));
        }
    }
    Ok(ConstantLedger {
        q,
        q_hat: qh,
        abs,
        log_term: l,
        k1,
        k2,
        k3,
        k4,
        k5,
        c2,
        c0,
        big_c0,
        big_c0_prime,
        gamma,
        psi,
        epsilon_q,
        kappa0,
        kappa0_prime: KAPPA0_PRIME,
        alpha0,
        kappa1,
        kappa2,
    })
}

/// Root of `E[exp(Y²/t²)] = 2` for the three-point law, by bisection.
pub fn subgaussian_norm_empirical(q: f64) -> Result<f64> {
    check_q(q)?;
    let p = 2.0 / q;
    // Decreasing in t; the root is 1/sqrt(ln(q/2+1)) <= 1/sqrt(ln 2).
    let g = |t: f64| p * (1.0 / (t * t)).exp() + (1.0 - p) - 2.0;
    let (mut lo, mut hi) = (0.05, 2.0);
    debug_assert!(g(lo) > 0.0 && g(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `min(1, 2 exp(−c2 t²))`.
pub fn hoeffding_bound(t: f64, ledger: &ConstantLedger) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(domain(format!("t must be >= 0, got {t}")));
    }
    Ok((2.0 * (-ledger.c2 * t * t).exp()).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    /// Level the singular value is compared against.
    pub threshold: f64,
    /// Upper bound on the probability of crossing `threshold`; 1 outside
    /// the regime.
    pub bound: f64,
    pub in_regime: bool,
}

/// `P(s1(A) > q̂ t √(N/n)) ≤ exp(−c0 N t²)` for `t ≥ C0`.
pub fn s1_tail_bound(t: f64, big_n: usize, n: usize, ledger: &ConstantLedger) -> Result<TailBound> {
    check_dims(big_n, n)?;
    if !(t >= 0.0) {
        return Err(domain(format!("t must be >= 0, got {t}")));
    }
    let threshold = ledger.q_hat * t * (big_n as f64 / n as f64).sqrt();
    let in_regime = t >= ledger.big_c0;
    let bound = if in_regime { (-ledger.c0 * big_n as f64 * t * t).exp() } else { 1.0 };
    Ok(TailBound { threshold, bound, in_regime })
}

/// `P(s_n(A) ≤ κ1 √(N/n)) ≤ exp(−κ2 N)` when `n ≤ α0 N`.
pub fn sn_lower_bound(ledger: &ConstantLedger, big_n: usize, n: usize) -> Result<TailBound> {
    check_dims(big_n, n)?;
    let threshold = ledger.kappa1 * (big_n as f64 / n as f64).sqrt();
    let in_regime = n as f64 <= ledger.alpha0 * big_n as f64;
    let bound = if in_regime { (-ledger.kappa2 * big_n as f64).exp() } else { 1.0 };
    Ok(TailBound { threshold, bound, in_regime })
}

fn check_dims(big_n: usize, n: usize) -> Result<()> {
    if n == 0 || big_n < n {
        return Err(domain(format!("need 1 <= n <= N, got n = {n}, N = {big_n}")));
    }
    Ok(())
}

fn check_eps_delta(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(domain(format!("epsilon must lie in (0, 1/2], got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// `K5² ε⁻² ln(2/δ)` before rounding up.
pub fn jl_dimension_bound(epsilon: f64, delta: f64, ledger: &ConstantLedger) -> Result<f64> {
    check_eps_delta(epsilon, delta)?;
    Ok(ledger.k5 * ledger.k5 * (2.0 / delta).ln() / (epsilon * epsilon))
}

/// Smallest sketch dimension `n = ⌈K5² ε⁻² ln(2/δ)⌉` for the q of `ledger`.
pub fn jl_min_dimension(epsilon: f64, delta: f64, ledger: &ConstantLedger) -> Result<usize> {
    Ok(jl_dimension_bound(epsilon, delta, ledger)?.ceil() as usize)
}

/// `s² ≥ C1' ε⁻² n ln(2/δ) / ln(n/s + 1)²`, with a few-ulp relative slack so
/// that exact boundary cases evaluate as satisfied.
pub fn hashing_sparsity_check(
    n: usize,
    s: f64,
    epsilon: f64,
    delta: f64,
    ledger: &ConstantLedger,
) -> Result<bool> {
    check_eps_delta(epsilon, delta)?;
    let nf = n as f64;
    if !(s > 0.0 && s <= nf) {
        return Err(domain(format!("s must lie in (0, n], got s = {s}, n = {n}")));
    }
    let lhs = s * s;
    let rhs = ledger.abs.c1_prime * nf * (2.0 / delta).ln()
        / (epsilon * epsilon * (nf / s).ln_1p().powi(2));
    Ok(lhs >= rhs * (1.0 - 8.0 * f64::EPSILON))
}

/// `τ = 4 C1' ln 4 / (ln 2)²`: for `ε = δ = 1/2` every `s = κ n` with
/// `√(τ/n) ≤ κ ≤ 1` passes [`hashing_sparsity_check`].
pub fn sparsity_threshold_tau(abs: &AbsoluteConstants) -> f64 {
    4.0 * abs.c1_prime * 4f64.ln() / (LN_2 * LN_2)
}

#[cfg(test)]
mod tests;
