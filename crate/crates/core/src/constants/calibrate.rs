//! Monte Carlo fit of the absolute constants.
//!
//! Each knob is fitted against the inequality it controls:
//!
//! * `C2`, `C3` from the exact moments and MGF of the three-point law;
//! * `c23` from empirical tails of `S = Σ aℓYℓ` with `a = (1/√m, …)`;
//! * `C4` from empirical moments `(E|S|^p)^{1/p}`, `p ∈ {1, 2, 4, 6}`;
//! * `C5` from the smallest `n` at which the JL failure rate is `≤ δ`.
//!
//! Every fitted value carries a safety margin (1.2 by default), after which
//! the largest-singular-value, smallest-singular-value and Hoeffding probes
//! are re-checked and `c23` / `C4` nudged until none is violated.

use std::collections::BTreeMap;
use std::f64::consts::E;

use rand::Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use super::{hoeffding_bound, ledger_for, s1_tail_bound, sn_lower_bound, AbsoluteConstants};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::jl::{verify_jlt_with, JlOptions, VectorFamily};
use crate::rng::{check_q, derive_stream, derive_substream, mix_seed};
use crate::sketch::{self, EnsembleParams};
use crate::spectra::{extreme_singular_values_with, SpectralOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationBudget {
    pub tail_trials: usize,
    pub khintchine_trials: usize,
    pub jl_trials: usize,
    pub bound_trials: usize,
    pub max_adjustments: usize,
}

impl CalibrationBudget {
    pub fn desk() -> Self {
        Self {
            tail_trials: 100_000,
            khintchine_trials: 20_000,
            jl_trials: 2000,
            bound_trials: 1000,
            max_adjustments: 20,
        }
    }

    pub fn quick() -> Self {
        Self {
            tail_trials: 20_000,
            khintchine_trials: 5000,
            jl_trials: 300,
            bound_trials: 100,
            max_adjustments: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProbe {
    pub q: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KhintchineProbe {
    pub q: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JlProbe {
    pub q: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub big_n: usize,
    pub family: VectorFamily,
}

/// A point at which a closed-form tail bound is compared with an empirical
/// frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundProbe {
    /// `P(|Σ aℓYℓ| ≥ t) ≤ 2 exp(−c2 t²)`, uniform `a` of length `m`.
    Hoeffding { q: f64, m: usize, t: f64 },
    /// `P(s1 > q̂ t √(N/n)) ≤ exp(−c0 N t²)` at `t = t_rel_c0 · C0`.
    Largest { q: f64, big_n: usize, n: usize, t_rel_c0: f64 },
    /// `P(s_n ≤ κ1 √(N/n)) ≤ exp(−κ2 N)`; `big_n = None` picks the smallest
    /// `N ≥ 4000` inside the regime `n ≤ α0 N`.
    Smallest { q: f64, n: usize, big_n: Option<usize> },
}

impl BoundProbe {
    pub fn q(&self) -> f64 {
        match *self {
            BoundProbe::Hoeffding { q, .. }
            | BoundProbe::Largest { q, .. }
            | BoundProbe::Smallest { q, .. } => q,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoundProbe::Hoeffding { .. } => "hoeffding",
            BoundProbe::Largest { .. } => "largest",
            BoundProbe::Smallest { .. } => "smallest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub tail: Vec<TailProbe>,
    pub t_grid: Vec<f64>,
    /// A tail point enters the fit only with at least this many exceedances.
    pub min_exceedances: usize,
    pub khintchine: Vec<KhintchineProbe>,
    pub moments: Vec<f64>,
    pub jl: Vec<JlProbe>,
    /// q values at which the exact `C2`, `C3` requirements are evaluated.
    pub q_grid: Vec<f64>,
    pub bounds: Vec<BoundProbe>,
    pub margin: f64,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        let qs = [2.0, 4.0, 8.0, 32.0, 128.0];
        let ms = [8usize, 64, 512];
        let pairs: Vec<(f64, usize)> =
            qs.iter().flat_map(|&q| ms.iter().map(move |&m| (q, m))).collect();
        let mut jl = Vec::new();
        for q in [2.0, 4.0, 8.0] {
            for epsilon in [0.5, 0.25] {
                for delta in [0.5, 0.1, 0.01] {
                    for family in [VectorFamily::GaussianUnit, VectorFamily::Sparse1Hot] {
                        jl.push(JlProbe { q, epsilon, delta, big_n: 256, family });
                    }
                }
            }
        }
        Self {
            tail: pairs.iter().map(|&(q, m)| TailProbe { q, m }).collect(),
            t_grid: (1..=120).map(|k| 0.05 * k as f64).collect(),
            min_exceedances: 20,
            khintchine: pairs.iter().map(|&(q, m)| KhintchineProbe { q, m }).collect(),
            moments: vec![1.0, 2.0, 4.0, 6.0],
            jl,
            q_grid: (0..=60).map(|k| 2.0 * 10f64.powf(k as f64 * 5.7 / 60.0)).collect(),
            bounds: default_bound_probes(),
            margin: 1.2,
        }
    }
}

/// Twelve probes: six Hoeffding, four largest-singular-value, two
/// smallest-singular-value.
pub fn default_bound_probes() -> Vec<BoundProbe> {
    use BoundProbe::*;
    vec![
        Hoeffding { q: 2.0, m: 64, t: 1.5 },
        Hoeffding { q: 2.0, m: 64, t: 2.5 },
        Hoeffding { q: 4.0, m: 64, t: 1.0 },
        Hoeffding { q: 4.0, m: 64, t: 2.0 },
        Hoeffding { q: 8.0, m: 512, t: 1.5 },
        Hoeffding { q: 32.0, m: 8, t: 1.0 },
        Largest { q: 2.0, big_n: 2000, n: 20, t_rel_c0: 1.0 },
        Largest { q: 8.0, big_n: 10_000, n: 100, t_rel_c0: 1.0 },
        Largest { q: 8.0, big_n: 4000, n: 40, t_rel_c0: 1.5 },
        Largest { q: 32.0, big_n: 4000, n: 40, t_rel_c0: 1.0 },
        Smallest { q: 2.0, n: 1, big_n: None },
        Smallest { q: 8.0, n: 2, big_n: None },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub q: f64,
    pub m: usize,
    /// `min_t −ln(p̂(t)/2) / (t² ln(q/2+1))` over usable `t`.
    pub c23_sq: f64,
    pub usable_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JlFit {
    pub probe: JlProbe,
    pub n_star: usize,
    pub failure_rate: f64,
    /// `n* / ((q/L)² ε⁻² ln(2/δ))`.
    pub c5_sq: f64,
}

/// Raw requirements before the margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub c2_required: f64,
    pub c3_required: f64,
    pub c23_required: f64,
    pub c4_required: f64,
    pub c5_required: f64,
    pub tail: Vec<TailFit>,
    pub jl: Vec<JlFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub probe: BoundProbe,
    pub big_n: Option<usize>,
    pub trials: usize,
    pub threshold: f64,
    pub exceedances: usize,
    pub frequency: f64,
    pub bound: f64,
    pub in_regime: bool,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub seed: u64,
    pub budget: CalibrationBudget,
    pub grid: ProbeGrid,
    pub initial: AbsoluteConstants,
    pub estimates: Estimates,
    pub adjustments: usize,
    pub bound_checks: Vec<BoundCheck>,
    pub warnings: Vec<String>,
}

/// Fits the constants on `grid`. `κ` is kept from `abs_init`; everything
/// else is replaced.
pub fn calibrate(
    abs_init: AbsoluteConstants,
    budget: &CalibrationBudget,
    grid: &ProbeGrid,
    seed: u64,
    exec: Execution,
) -> Result<(AbsoluteConstants, CalibrationRecord)> {
    abs_init.validate()?;
    let margin = grid.margin;
    if !(margin >= 1.0) {
        return Err(Error::Config(format!("margin must be >= 1, got {margin}")));
    }
    let mut warnings = Vec::new();

    let c2_required = grid.q_grid.iter().map(|&q| c2_requirement(q)).fold(0.0, f64::max);
    let c2 = (margin * c2_required).max(STRICT_FLOOR);
    let c3_required = grid.q_grid.iter().map(|&q| k3_requirement(q) * log_term(q).sqrt() / c2).fold(0.0, f64::max);
    let c3 = (margin * c3_required).max(STRICT_FLOOR);

    let tail = exec.try_map(grid.tail.len(), |i| {
        fit_tail(&grid.tail[i], &grid.t_grid, grid.min_exceedances, budget.tail_trials, mix_seed(seed, 1000 + i as u64))
    })?;
    for f in tail.iter().filter(|f| f.usable_points < 3) {
        warnings.push(format!(
            "calibration uncertain: tail probe q = {}, m = {} resolved only {} t values",
            f.q, f.m, f.usable_points
        ));
    }
    let c23_required = tail.iter().map(|f| f.c23_sq).fold(f64::INFINITY, f64::min).sqrt();
    if !c23_required.is_finite() {
        return Err(Error::Config("no tail probe resolved any t value; raise the budget".into()));
    }
    let mut c23 = c23_required / margin;
    if c23 >= C23_CAP {
        warnings.push(format!("c23 capped at {C23_CAP} (fit gave {c23})"));
        c23 = C23_CAP;
    }

    let khin = exec.try_map(grid.khintchine.len(), |i| {
        khintchine_requirement(&grid.khintchine[i], &grid.moments, budget.khintchine_trials, mix_seed(seed, 2000 + i as u64))
    })?;
    let c4_required = khin.into_iter().fold(0.0, f64::max);
    let mut c4 = (margin * c4_required).max(STRICT_FLOOR);

    let jl = exec.try_map(grid.jl.len(), |i| fit_jl(&grid.jl[i], budget.jl_trials, mix_seed(seed, 3000 + i as u64)))?;
    for f in &jl {
        if f.n_star >= JL_MAX_N {
            warnings.push(format!("calibration uncertain: JL probe {:?} did not pass by n = {JL_MAX_N}", f.probe));
        }
        if (budget.jl_trials as f64) * f.probe.delta < 10.0 {
            warnings.push(format!(
                "calibration uncertain: {} JL trials cannot resolve delta = {}",
                budget.jl_trials, f.probe.delta
            ));
        }
    }
    warnings.dedup();
    let c5_required = jl.iter().map(|f| f.c5_sq).fold(0.0, f64::max).sqrt();
    let c5 = margin * c5_required;

    let mut adjustments = 0;
    let (abs, bound_checks) = loop {
        let abs = AbsoluteConstants::from_core(c2, c3, c4, c5, c23, abs_init.kappa);
        for &q in &grid.q_grid {
            ledger_for(q, abs)?;
        }
        let checks = check_bounds(&grid.bounds, abs, budget.bound_trials, mix_seed(seed, 4000), exec)?;
        let upper = checks.iter().any(|c| c.violated && !matches!(c.probe, BoundProbe::Smallest { .. }));
        let lower = checks.iter().any(|c| c.violated && matches!(c.probe, BoundProbe::Smallest { .. }));
        if !(upper || lower) {
            break (abs, checks);
        }
        if adjustments == budget.max_adjustments {
            warnings.push(format!("bound probes still violated after {adjustments} adjustments"));
            break (abs, checks);
        }
        adjustments += 1;
        if upper {
            c23 *= 0.9;
        }
        if lower {
            c4 *= 1.1;
        }
    };

    let record = CalibrationRecord {
        seed,
        budget: *budget,
        grid: grid.clone(),
        initial: abs_init,
        estimates: Estimates { c2_required, c3_required, c23_required, c4_required, c5_required, tail, jl },
        adjustments,
        bound_checks,
        warnings,
    };
    Ok((abs, record))
}

const STRICT_FLOOR: f64 = 1.001;
const C23_CAP: f64 = 0.999;
const JL_MAX_N: usize = 4096;

fn log_term(q: f64) -> f64 {
    (q / 2.0).ln_1p()
}

/// Smallest `C2` with `(E|Y|^p)^{1/p} ≤ C2 K1 √p` for all `p ≥ 1`. Since
/// `E|Y|^p = 2/q`, the supremum sits at `p = max(1, 2 ln(q/2))`.
pub fn c2_requirement(q: f64) -> f64 {
    let p = (2.0 * (q / 2.0).ln()).max(1.0);
    (2.0 / q).powf(1.0 / p) * (log_term(q) / p).sqrt()
}

/// Smallest `K3` with `E e^{λ²Y²} ≤ e^{K3²λ²}` on `|λ| ≤ 1/K3` and
/// `E e^{λY} ≤ e^{K3²λ²}` on all of `R`.
///
/// The first is tight at `λ = 1/K3` and gives `K3 ≥ 1/√ln(1 + (e−1)q/2)`;
/// the second is a one-dimensional supremum evaluated on a fine grid.
pub fn k3_requirement(q: f64) -> f64 {
    let p = 2.0 / q;
    let square = 1.0 / ((E - 1.0) * q / 2.0).ln_1p().sqrt();
    let mut sup = p / 2.0;
    for k in 0..=4000 {
        let lambda = 1e-3 * 6e4f64.powf(k as f64 / 4000.0);
        let mgf = (p * (lambda.cosh() - 1.0)).ln_1p();
        sup = sup.max(mgf / (lambda * lambda));
    }
    square.max(sup.sqrt())
}

/// Draws `Σ_{ℓ ≤ m} Yℓ` exactly: the number of nonzeros is binomial and each
/// carries an independent fair sign.
fn ternary_sum<R: Rng>(rng: &mut R, nonzeros: &Binomial) -> i64 {
    let k = rng.sample(nonzeros);
    let plus = (0..k).filter(|_| rng.random::<bool>()).count() as i64;
    2 * plus - k as i64
}

fn nonzero_law(q: f64, m: usize) -> Result<Binomial> {
    check_q(q)?;
    Binomial::new(m as u64, (2.0 / q).min(1.0))
        .map_err(|e| Error::Config(format!("binomial law for q = {q}, m = {m}: {e}")))
}

/// Exact integer sums `Σ Yℓ` for `trials` draws.
fn sample_sums(q: f64, m: usize, trials: usize, seed: u64) -> Result<Vec<i64>> {
    let law = nonzero_law(q, m)?;
    let mut rng = derive_stream(seed, 0).rng();
    Ok((0..trials).map(|_| ternary_sum(&mut rng, &law)).collect())
}

fn exceeds(sum: i64, m: usize, t: f64) -> bool {
    // |S| ≥ t with S = sum/√m, compared on the integer scale.
    (sum.unsigned_abs() as f64) >= t * (m as f64).sqrt() - 1e-9
}

fn fit_tail(probe: &TailProbe, t_grid: &[f64], min_exceedances: usize, trials: usize, seed: u64) -> Result<TailFit> {
    let sums = sample_sums(probe.q, probe.m, trials, seed)?;
    let l = log_term(probe.q);
    let mut best = f64::INFINITY;
    let mut usable = 0;
    for &t in t_grid {
        let hits = sums.iter().filter(|&&s| exceeds(s, probe.m, t)).count();
        if hits < min_exceedances {
            continue;
        }
        usable += 1;
        let p = hits as f64 / trials as f64;
        best = best.min(-(p / 2.0).ln() / (t * t * l));
    }
    Ok(TailFit { q: probe.q, m: probe.m, c23_sq: best, usable_points: usable })
}

/// `max_p (E|S|^p)^{1/p} √L / √p`: the smallest `C4` consistent with the
/// sampled moments.
fn khintchine_requirement(probe: &KhintchineProbe, moments: &[f64], trials: usize, seed: u64) -> Result<f64> {
    let sums = sample_sums(probe.q, probe.m, trials, seed)?;
    let scale = 1.0 / (probe.m as f64).sqrt();
    let l = log_term(probe.q);
    Ok(moments
        .iter()
        .map(|&p| {
            let mean = sums.iter().map(|&s| (s.unsigned_abs() as f64 * scale).powf(p)).sum::<f64>() / trials as f64;
            mean.powf(1.0 / p) * (l / p).sqrt()
        })
        .fold(0.0, f64::max))
}

/// Smallest `n` with empirical failure rate `≤ δ`, by doubling then
/// bisection. All `n` reuse the same trial seeds.
fn fit_jl(probe: &JlProbe, trials: usize, seed: u64) -> Result<JlFit> {
    let opts = JlOptions { exec: Execution::Sequential, keep_ratios: false };
    let mut memo = BTreeMap::new();
    let mut rate = |n: usize| -> Result<f64> {
        if let Some(&r) = memo.get(&n) {
            return Ok(r);
        }
        let params = EnsembleParams::general_q(n, probe.big_n, probe.q);
        let r = verify_jlt_with(params, probe.epsilon, trials, &probe.family, seed, &opts)?.failure_rate;
        memo.insert(n, r);
        Ok(r)
    };
    let mut hi = 1;
    while hi < JL_MAX_N && rate(hi)? > probe.delta {
        hi *= 2;
    }
    let mut lo = hi / 2;
    if rate(hi)? <= probe.delta {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if rate(mid)? <= probe.delta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let failure_rate = rate(hi)?;
    let l = log_term(probe.q);
    let unit = (probe.q / l).powi(2) * (2.0 / probe.delta).ln() / (probe.epsilon * probe.epsilon);
    Ok(JlFit { probe: probe.clone(), n_star: hi, failure_rate, c5_sq: hi as f64 / unit })
}

/// Runs each probe for `trials` draws and compares the empirical frequency
/// with the closed-form bound under `abs`.
pub fn check_bounds(
    probes: &[BoundProbe],
    abs: AbsoluteConstants,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<BoundCheck>> {
    probes
        .iter()
        .enumerate()
        .map(|(i, p)| check_bound(p, abs, trials, mix_seed(seed, i as u64), exec))
        .collect()
}

pub fn check_bound(
    probe: &BoundProbe,
    abs: AbsoluteConstants,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<BoundCheck> {
    let ledger = ledger_for(probe.q(), abs)?;
    let (threshold, bound, in_regime, exceedances, big_n) = match *probe {
        BoundProbe::Hoeffding { q, m, t } => {
            let sums = sample_sums(q, m, trials, seed)?;
            let hits = sums.iter().filter(|&&s| exceeds(s, m, t)).count();
            (t, hoeffding_bound(t, &ledger)?, true, hits, None)
        }
        BoundProbe::Largest { q, big_n, n, t_rel_c0 } => {
            let tb = s1_tail_bound(t_rel_c0 * ledger.big_c0, big_n, n, &ledger)?;
            let s1 = spectral_trials(q, n, big_n, trials, seed, exec, |s1, _| s1)?;
            let hits = s1.iter().filter(|&&v| v > tb.threshold).count();
            (tb.threshold, tb.bound, tb.in_regime, hits, Some(big_n))
        }
        BoundProbe::Smallest { q, n, big_n } => {
            let big_n = big_n.unwrap_or_else(|| 4000usize.max((1.05 * n as f64 / ledger.alpha0).ceil() as usize));
            let tb = sn_lower_bound(&ledger, big_n, n)?;
            let sn = spectral_trials(q, n, big_n, trials, seed, exec, |_, sn| sn)?;
            let hits = sn.iter().filter(|&&v| v <= tb.threshold).count();
            (tb.threshold, tb.bound, tb.in_regime, hits, Some(big_n))
        }
    };
    let frequency = exceedances as f64 / trials as f64;
    Ok(BoundCheck {
        probe: *probe,
        big_n,
        trials,
        threshold,
        exceedances,
        frequency,
        bound,
        in_regime,
        violated: frequency > bound,
    })
}

fn spectral_trials(
    q: f64,
    n: usize,
    big_n: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
    pick: impl Fn(f64, f64) -> f64 + Sync + Send,
) -> Result<Vec<f64>> {
    let params = EnsembleParams::general_q(n, big_n, q);
    let opts = SpectralOptions { cross_check_limit: 2, ..Default::default() };
    exec.try_map(trials, |t| {
        let h = sketch::build(params, derive_substream(seed, 0, t as u32))?;
        let pair = extreme_singular_values_with(&h, &opts)?;
        Ok(pick(pair.s1, pair.sn))
    })
}
