use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    bai_yin_limits, extreme_singular_values_with, ks_distance, rescale_s1, rescale_sn,
    EmpiricalCdf, RescaledKind, SpectralOptions,
};
use crate::error::{domain, Result};
use crate::exec::Execution;
use crate::rng::derive_substream;
use crate::sketch::{self, Ensemble, EnsembleParams};
use crate::tw::Tw1Table;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    #[serde(rename = "N")]
    pub big_n: usize,
    pub n: usize,
    pub s: f64,
}

/// `N_ℓ = round(logspace(log10 n_min, log10 n_max, points))`,
/// `n_ℓ = round(N_ℓ · aspect)`, `s_ℓ = round(n_ℓ · s_ratio)`, with rounding
/// half away from zero.
pub fn log_schedule(
    n_min: f64,
    n_max: f64,
    points: usize,
    aspect: f64,
    s_ratio: f64,
) -> Result<Vec<SchedulePoint>> {
    if points < 2 || !(n_min > 0.0 && n_max > n_min) {
        return Err(domain("log schedule needs points >= 2 and 0 < n_min < n_max"));
    }
    if !(aspect > 0.0 && aspect < 1.0 && s_ratio > 0.0 && s_ratio <= 1.0) {
        return Err(domain("log schedule needs aspect in (0, 1) and s_ratio in (0, 1]"));
    }
    let (a, b) = (n_min.log10(), n_max.log10());
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let e = a + (b - a) * k as f64 / (points - 1) as f64;
        let big_n = 10f64.powf(e).round() as usize;
        let n = ((big_n as f64 * aspect).round() as usize).max(1);
        let s = (n as f64 * s_ratio).round().max(1.0);
        out.push(SchedulePoint { big_n, n, s });
    }
    Ok(out)
}

/// The 100-point schedule from `N = 500` to `10⁵` with `n = N/100`, `s = n/5`.
pub fn appendix_schedule() -> Vec<SchedulePoint> {
    log_schedule(500.0, 1e5, 100, 0.01, 0.2).expect("static parameters")
}

/// `k` points of `schedule` at evenly spaced indices, both ends included.
pub fn subsample(schedule: &[SchedulePoint], k: usize) -> Vec<SchedulePoint> {
    let len = schedule.len();
    if k >= len || len < 2 {
        return schedule.to_vec();
    }
    if k <= 1 {
        return schedule[len - 1..].to_vec();
    }
    (0..k)
        .map(|i| schedule[((i * (len - 1)) as f64 / (k - 1) as f64).round() as usize])
        .collect()
}

/// Which ensemble a schedule point is turned into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleChoice {
    pub ensemble: Ensemble,
    /// Fixed q for the general-q ensemble; the point's `s` is then ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl EnsembleChoice {
    pub fn hashing_like() -> Self {
        Self { ensemble: Ensemble::HashingLike, q: None }
    }

    pub fn exact_hashing() -> Self {
        Self { ensemble: Ensemble::ExactHashing, q: None }
    }

    pub fn general_q(q: f64) -> Self {
        Self { ensemble: Ensemble::GeneralQ, q: Some(q) }
    }

    pub fn gaussian() -> Self {
        Self { ensemble: Ensemble::Gaussian, q: None }
    }

    pub fn params(&self, p: &SchedulePoint) -> Result<EnsembleParams> {
        let params = match self.ensemble {
            Ensemble::HashingLike => EnsembleParams::hashing_like(p.n, p.big_n, p.s),
            Ensemble::ExactHashing => EnsembleParams::exact_hashing(p.n, p.big_n, p.s.round() as usize),
            Ensemble::GeneralQ => EnsembleParams::general_q(
                p.n,
                p.big_n,
                self.q.ok_or_else(|| domain("general-q choice needs q"))?,
            ),
            Ensemble::Gaussian => EnsembleParams::gaussian(p.n, p.big_n),
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub exec: Execution,
    pub spectral: SpectralOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
}

impl Stats {
    pub fn of(v: &[f64]) -> Self {
        let m = v.len() as f64;
        let mean = v.iter().sum::<f64>() / m;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        Self {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            sd: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    #[serde(rename = "N")]
    pub big_n: usize,
    pub n: usize,
    pub s: f64,
    pub trial: usize,
    pub s1: f64,
    pub sn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    #[serde(rename = "N")]
    pub big_n: usize,
    pub n: usize,
    pub s: f64,
    pub trials: usize,
    pub s1: Stats,
    pub sn: Stats,
    /// `1/√𝔶 + 1`.
    pub s1_reference: f64,
    /// `1/√𝔶 − 1`.
    pub sn_reference: f64,
    pub expected_column_nnz: f64,
    /// `(1 − s/n)^n`.
    pub prob_zero_column: f64,
    /// Set when fewer than one nonzero per column is expected.
    pub zero_columns_likely: bool,
}

/// Per-trial extreme singular values over a list of `(N, n, s)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub ensemble: EnsembleChoice,
    pub master_seed: u64,
    pub trials_per_point: usize,
    pub points: Vec<PointSummary>,
    #[serde(skip)]
    pub rows: Vec<TrialRow>,
}

impl ExperimentReport {
    /// `N,n,s,trial,s1,sn`, one line per trial.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["N", "n", "s", "trial", "s1", "sn"])?;
        for r in &self.rows {
            out.write_record([
                r.big_n.to_string(),
                r.n.to_string(),
                r.s.to_string(),
                r.trial.to_string(),
                r.s1.to_string(),
                r.sn.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn run_points(
    experiment: &str,
    points: &[SchedulePoint],
    choice: EnsembleChoice,
    trials: usize,
    master_seed: u64,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    if points.is_empty() {
        return Err(domain("empty schedule"));
    }
    if trials == 0 {
        return Err(domain("trials must be positive"));
    }
    let params: Vec<EnsembleParams> = points.iter().map(|p| choice.params(p)).collect::<Result<_>>()?;
    for p in &params {
        if p.n > p.big_n {
            return Err(domain(format!("need n <= N, got n = {}, N = {}", p.n, p.big_n)));
        }
    }
    let pairs = opts.exec.try_map(points.len() * trials, |k| {
        let (i, t) = (k / trials, k % trials);
        let seed = derive_substream(master_seed, i as u32, t as u32);
        let h = sketch::build(params[i], seed)?;
        extreme_singular_values_with(&h, &opts.spectral)
    })?;
    let mut rows = Vec::with_capacity(pairs.len());
    let mut summaries = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let chunk = &pairs[i * trials..(i + 1) * trials];
        let s1: Vec<f64> = chunk.iter().map(|r| r.s1).collect();
        let sn: Vec<f64> = chunk.iter().map(|r| r.sn).collect();
        for (t, r) in chunk.iter().enumerate() {
            rows.push(TrialRow { big_n: p.big_n, n: p.n, s: p.s, trial: t, s1: r.s1, sn: r.sn });
        }
        let (sn_ref, s1_ref) = bai_yin_limits(p.big_n, p.n);
        let expected = params[i].expected_column_nnz();
        let nf = p.n as f64;
        summaries.push(PointSummary {
            big_n: p.big_n,
            n: p.n,
            s: p.s,
            trials,
            s1: Stats::of(&s1),
            sn: Stats::of(&sn),
            s1_reference: s1_ref,
            sn_reference: sn_ref,
            expected_column_nnz: expected,
            prob_zero_column: if choice.ensemble == Ensemble::Gaussian || choice.ensemble == Ensemble::ExactHashing {
                0.0
            } else {
                (1.0 - expected / nf).powf(nf)
            },
            zero_columns_likely: expected < 1.0,
        });
    }
    Ok(ExperimentReport {
        experiment: experiment.to_string(),
        ensemble: choice,
        master_seed,
        trials_per_point: trials,
        points: summaries,
        rows,
    })
}

/// Extreme singular values along a schedule of growing `(N, n, s)`.
pub fn baiyin_experiment(
    schedule: &[SchedulePoint],
    trials_per_point: usize,
    master_seed: u64,
    choice: EnsembleChoice,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    run_points("baiyin", schedule, choice, trials_per_point, master_seed, opts)
}

/// Hashing-like matrices at fixed `(N, n)` over a grid of `s`.
pub fn sparsity_sweep(
    big_n: usize,
    n: usize,
    s_grid: &[f64],
    trials: usize,
    master_seed: u64,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    let points: Vec<SchedulePoint> = s_grid.iter().map(|&s| SchedulePoint { big_n, n, s }).collect();
    for p in &points {
        if !(p.s > 0.0 && p.s <= n as f64) {
            return Err(domain(format!("s grid must lie in (0, n], got {}", p.s)));
        }
    }
    run_points("sweep-s", &points, EnsembleChoice::hashing_like(), trials, master_seed, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwPoint {
    #[serde(rename = "N")]
    pub big_n: usize,
    pub n: usize,
    pub s: f64,
    pub samples: usize,
    pub ks_largest: f64,
    pub ks_smallest: f64,
    pub mean_largest: f64,
    pub mean_smallest: f64,
    #[serde(skip)]
    pub largest: Option<EmpiricalCdf>,
    #[serde(skip)]
    pub smallest: Option<EmpiricalCdf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwReport {
    pub aspect: f64,
    pub s_ratio: f64,
    pub ensemble: EnsembleChoice,
    pub master_seed: u64,
    pub tw1_mean: f64,
    pub tw1_variance: f64,
    /// Interpolation error allowance of the TW₁ table, already below every
    /// KS resolution used here.
    pub interpolation_budget: f64,
    pub points: Vec<TwPoint>,
}

impl TwReport {
    /// `N,kind,index,value` with the sorted rescaled samples; `kind` filters.
    pub fn write_csv<W: Write>(&self, w: W, kind: Option<RescaledKind>) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["N", "kind", "index", "value"])?;
        for p in &self.points {
            for (k, cdf) in [
                (RescaledKind::XiLargest, &p.largest),
                (RescaledKind::ZetaSmallest, &p.smallest),
            ] {
                if kind.is_some_and(|want| want != k) {
                    continue;
                }
                let Some(cdf) = cdf else { continue };
                for (i, v) in cdf.sorted().iter().enumerate() {
                    out.write_record([p.big_n.to_string(), k.name().to_string(), i.to_string(), v.to_string()])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Rescaled extreme singular values at each `N` (with `n = round(𝔶N)`,
/// `s = s_ratio · n`) and their KS distances to TW₁.
pub fn tw_experiment(
    ns: &[usize],
    aspect: f64,
    s_ratio: f64,
    samples_per_n: usize,
    master_seed: u64,
    choice: EnsembleChoice,
    opts: &ExperimentOptions,
) -> Result<TwReport> {
    if samples_per_n < 100 {
        return Err(domain("tw experiment needs at least 100 samples per N"));
    }
    if ns.is_empty() {
        return Err(domain("tw experiment needs at least one N"));
    }
    if !(aspect > 0.0 && aspect < 1.0) || !(s_ratio > 0.0 && s_ratio <= 1.0) {
        return Err(domain("aspect must lie in (0, 1) and s_ratio in (0, 1]"));
    }
    let points: Vec<SchedulePoint> = ns
        .iter()
        .map(|&big_n| {
            let n = ((big_n as f64 * aspect).round() as usize).max(1);
            SchedulePoint { big_n, n, s: s_ratio * n as f64 }
        })
        .collect();
    for p in &points {
        if p.n >= p.big_n {
            return Err(domain(format!("N = {} too small for aspect {aspect}", p.big_n)));
        }
    }
    let report = run_points("tw", &points, choice, samples_per_n, master_seed, opts)?;
    let table = Tw1Table::standard();
    let (tw1_mean, tw1_variance) = table.moments();
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let rows = &report.rows[i * samples_per_n..(i + 1) * samples_per_n];
        let xi: Vec<f64> = rows.iter().map(|r| rescale_s1(r.s1, p.big_n, p.n)).collect::<Result<_>>()?;
        let zeta: Vec<f64> = rows.iter().map(|r| rescale_sn(r.sn, p.big_n, p.n)).collect::<Result<_>>()?;
        let (xi, zeta) = (EmpiricalCdf::new(xi)?, EmpiricalCdf::new(zeta)?);
        out.push(TwPoint {
            big_n: p.big_n,
            n: p.n,
            s: p.s,
            samples: samples_per_n,
            ks_largest: ks_distance(&xi, |x| table.cdf(x)),
            ks_smallest: ks_distance(&zeta, |x| table.cdf(x)),
            mean_largest: xi.mean(),
            mean_smallest: zeta.mean(),
            largest: Some(xi),
            smallest: Some(zeta),
        });
    }
    Ok(TwReport {
        aspect,
        s_ratio,
        ensemble: choice,
        master_seed,
        tw1_mean,
        tw1_variance,
        interpolation_budget: 1e-4,
        points: out,
    })
}

/// Fraction of trials at one point whose `s_n` is at least `level`.
pub fn fraction_sn_at_least(report: &ExperimentReport, point: usize, level: f64) -> f64 {
    let p = &report.points[point];
    let rows = &report.rows[point * report.trials_per_point..(point + 1) * report.trials_per_point];
    rows.iter().filter(|r| r.sn >= level).count() as f64 / p.trials as f64
}

/// Per-point `|mean s1 − (1/√𝔶 + 1)|` and `|mean s_n − (1/√𝔶 − 1)|`.
pub fn limit_gaps(report: &ExperimentReport) -> (Vec<f64>, Vec<f64>) {
    report
        .points
        .iter()
        .map(|p| ((p.s1.mean - p.s1_reference).abs(), (p.sn.mean - p.sn_reference).abs()))
        .unzip()
}

/// Number of adjacent steps along which `gaps` grows.
pub fn inversions(gaps: &[f64]) -> usize {
    gaps.windows(2).filter(|w| w[1] > w[0]).count()
}
