//! GOE Tracy–Widom distribution `F1`.
//!
//! With `q` the Hastings–McLeod solution of `q'' = xq + 2q³`,
//! `F1(x) = exp(−½ ∫ₓ^∞ q − ½ ∫ₓ^∞ (t−x) q²)`. Both integrals ride along in
//! the ODE state: `u = ∫ₓ^∞ q²`, `v = ∫ₓ^∞ (t−x) q²`, `w = ∫ₓ^∞ q`, with
//! `u' = −q²`, `v' = −u`, `w' = −q`. The system is integrated backwards from
//! the Airy regime, where `q ≈ Ai` and the tails have closed forms.

pub mod airy;
pub mod ode;

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::SeedSpec;
use ode::{integrate, StepStats, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
    /// Starting point of the backward integration, beyond `x_max`.
    pub boundary: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            x_min: -10.0,
            x_max: 10.0,
            nodes: 2001,
            boundary: 12.0,
            rtol: 1e-13,
            atol: 1e-30,
            max_step: 0.01,
        }
    }
}

impl TableConfig {
    /// Same grid, half the maximal step and a tolerance tightened by 2⁵.
    pub fn step_halved(&self) -> Self {
        Self { rtol: self.rtol / 32.0, max_step: self.max_step / 2.0, ..*self }
    }

    fn step(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nodes - 1) as f64
    }

    fn grid(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.nodes).map(|i| self.x_min + i as f64 * h).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < 3 || self.nodes % 2 == 0 {
            return Err(domain("table needs an odd number of nodes, at least 3"));
        }
        if !(self.x_min < self.x_max && self.x_max < self.boundary) {
            return Err(domain("need x_min < x_max < boundary"));
        }
        if self.boundary < 4.0 {
            return Err(domain("boundary must be >= 4 for the Airy start to be accurate"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub config: TableConfig,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// `F1` tabulated on a uniform grid, with the density at every node for
/// monotone Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Tw1Table {
    x: Vec<f64>,
    cdf: Vec<f64>,
    slope: Vec<f64>,
    density: Vec<f64>,
    q: Vec<f64>,
    meta: TableMeta,
}

fn painleve_rhs(x: f64, y: &[f64; 5]) -> [f64; 5] {
    let q = y[0];
    [y[1], x * q + 2.0 * q * q * q, -q * q, -y[2], -q]
}

fn boundary_state(x0: f64) -> [f64; 5] {
    let (a, d) = airy::airy_ai(x0);
    [a, d, airy::ai_sq_tail(x0), airy::ai_sq_moment_tail(x0), airy::ai_tail(x0)]
}

fn hm_guard(_: f64, y: &[f64; 5]) -> Option<String> {
    if y[0] < 0.0 {
        Some(format!("q turned negative ({:e}); boundary data not accurate enough", y[0]))
    } else if y[0] > 1e3 {
        Some(format!("q = {:e} is blowing up", y[0]))
    } else {
        None
    }
}

fn integrate_hm(
    boundary: f64,
    xs_desc: &[f64],
    tol: Tolerances,
) -> Result<(Vec<[f64; 5]>, StepStats)> {
    integrate(painleve_rhs, boundary, boundary_state(boundary), xs_desc, tol, hm_guard)
}

/// The Hastings–McLeod solution at the points of `t_grid`, which must
/// descend from at most `t_max` (the start of the backward integration).
pub fn hastings_mcleod(t_grid: &[f64], t_max: f64) -> Result<Vec<f64>> {
    if t_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(domain("t_grid must be strictly descending"));
    }
    if t_grid.first().is_some_and(|&t| t > t_max) || t_max < 4.0 {
        return Err(domain("t_grid must start at or below t_max, and t_max >= 4"));
    }
    let tol = Tolerances { rtol: 1e-13, atol: 1e-30, max_step: 0.01 };
    let (ys, _) = integrate_hm(t_max, t_grid, tol)?;
    Ok(ys.iter().map(|y| y[0]).collect())
}

impl Tw1Table {
    pub fn build(config: TableConfig) -> Result<Self> {
        config.validate()?;
        let x = config.grid();
        let desc: Vec<f64> = x.iter().rev().copied().collect();
        let tol = Tolerances { rtol: config.rtol, atol: config.atol, max_step: config.max_step };
        let (ys, stats) = integrate_hm(config.boundary, &desc, tol)?;
        let mut cdf = Vec::with_capacity(x.len());
        let mut density = Vec::with_capacity(x.len());
        let mut q = Vec::with_capacity(x.len());
        for y in ys.iter().rev() {
            let f = (-0.5 * (y[3] + y[4])).exp();
            cdf.push(f);
            density.push(0.5 * f * (y[0] + y[2]));
            q.push(y[0]);
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Numerical("tabulated F1 is not monotone".into()));
        }
        let meta = TableMeta { config, accepted_steps: stats.accepted, rejected_steps: stats.rejected };
        Ok(Self::assemble(x, cdf, density, q, meta))
    }

    fn assemble(x: Vec<f64>, cdf: Vec<f64>, density: Vec<f64>, q: Vec<f64>, meta: TableMeta) -> Self {
        let slope = fritsch_carlson(&x, &cdf, &density);
        Self { x, cdf, slope, density, q, meta }
    }

    /// The default table, built once per process.
    pub fn standard() -> &'static Tw1Table {
        static TABLE: OnceLock<Tw1Table> = OnceLock::new();
        TABLE.get_or_init(|| Tw1Table::build(TableConfig::default()).expect("default table builds"))
    }

    pub fn grid(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    /// Hastings–McLeod `q` at the nodes (empty for imported tables).
    pub fn painleve(&self) -> &[f64] {
        &self.q
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    fn locate(&self, x: f64) -> usize {
        let h = self.x[1] - self.x[0];
        (((x - self.x[0]) / h).floor() as usize).min(self.x.len() - 2)
    }

    fn hermite(&self, i: usize, x: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.cdf[i]
            + (t3 - 2.0 * t2 + t) * h * self.slope[i]
            + (-2.0 * t3 + 3.0 * t2) * self.cdf[i + 1]
            + (t3 - t2) * h * self.slope[i + 1]
    }

    /// `F1(x)`, clamped to `[0, 1]`; 0 left of the grid and 1 right of it.
    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x < self.x_min() {
            return 0.0;
        }
        if x > self.x_max() {
            return 1.0;
        }
        self.hermite(self.locate(x), x).clamp(0.0, 1.0)
    }

    /// Derivative of the interpolant (the density at nodes).
    pub fn density(&self, x: f64) -> f64 {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return 0.0;
        }
        let i = self.locate(x);
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * self.cdf[i] + (6.0 * t - 6.0 * t2) * self.cdf[i + 1]) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * self.slope[i]
            + (3.0 * t2 - 2.0 * t) * self.slope[i + 1]
    }

    /// Inverse of [`Tw1Table::cdf`] for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("p must lie in (0, 1), got {p}")));
        }
        if p <= self.cdf[0] {
            return Ok(self.x_min());
        }
        let last = self.cdf.len() - 1;
        if p >= self.cdf[last] {
            return Ok(self.x_max());
        }
        let i = self.cdf.partition_point(|&f| f <= p) - 1;
        let (mut lo, mut hi) = (self.x[i], self.x[i + 1]);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.hermite(i, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Inverse-transform samples.
    pub fn sample(&self, seed: SeedSpec, count: usize) -> Vec<f64> {
        let mut rng = seed.rng();
        (0..count)
            .map(|_| {
                let mut u: f64 = rng.random();
                while u == 0.0 {
                    u = rng.random();
                }
                self.quantile(u).expect("u in (0, 1)")
            })
            .collect()
    }

    /// `(mean, variance)` by Simpson's rule on the nodal densities.
    pub fn moments(&self) -> (f64, f64) {
        let m0 = self.simpson(|_, f| f);
        let m1 = self.simpson(|x, f| x * f);
        let m2 = self.simpson(|x, f| x * x * f);
        let mean = m1 / m0;
        (mean, m2 / m0 - mean * mean)
    }

    fn simpson(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.x.len() - 1;
        let h = self.x[1] - self.x[0];
        let mut s = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * g(self.x[i], self.density[i]);
        }
        s * h / 3.0
    }

    /// CSV with a `#`-prefixed JSON metadata line and columns `x,F1,density`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# tw1 table")?;
        writeln!(w, "# {}", serde_json::to_string(&self.meta)?)?;
        writeln!(w, "x,F1,density")?;
        for i in 0..self.x.len() {
            writeln!(w, "{},{},{}", self.x[i], self.cdf[i], self.density[i])?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads the format of [`Tw1Table::write_csv`]. A missing density
    /// column falls back to finite-difference slopes.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut meta: Option<TableMeta> = None;
        let mut body = String::new();
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Ok(m) = serde_json::from_str::<TableMeta>(rest.trim()) {
                    meta = Some(m);
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let has_density = rdr.headers()?.len() >= 3;
        let (mut x, mut cdf, mut density) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Config(format!("missing column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number in table: {e}")))
            };
            x.push(field(0)?);
            cdf.push(field(1)?);
            if has_density {
                density.push(field(2)?);
            }
        }
        if x.len() < 3 || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("table grid must be ascending with >= 3 nodes".into()));
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("table values must be nondecreasing".into()));
        }
        if !has_density {
            density = finite_difference_slopes(&x, &cdf);
        }
        let meta = meta.unwrap_or(TableMeta {
            config: TableConfig {
                x_min: x[0],
                x_max: x[x.len() - 1],
                nodes: x.len(),
                ..TableConfig::default()
            },
            accepted_steps: 0,
            rejected_steps: 0,
        });
        Ok(Self::assemble(x, cdf, density, Vec::new(), meta))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn finite_difference_slopes(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (f[b] - f[a]) / (x[b] - x[a])
        })
        .collect()
}

/// Limits Hermite slopes so that each cubic piece stays monotone.
fn fritsch_carlson(x: &[f64], f: &[f64], slopes: &[f64]) -> Vec<f64> {
    let mut m: Vec<f64> = slopes.iter().map(|s| s.max(0.0)).collect();
    for i in 0..x.len() - 1 {
        let delta = (f[i + 1] - f[i]) / (x[i + 1] - x[i]);
        if delta == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let (a, b) = (m[i] / delta, m[i + 1] / delta);
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m[i] = tau * a * delta;
            m[i + 1] = tau * b * delta;
        }
    }
    m
}

/// `F1(x)` from the standard table.
pub fn tw1_cdf(x: f64) -> f64 {
    Tw1Table::standard().cdf(x)
}

pub fn tw1_density(x: f64) -> f64 {
    Tw1Table::standard().density(x)
}

pub fn tw1_quantile(p: f64) -> Result<f64> {
    Tw1Table::standard().quantile(p)
}

pub fn tw1_sample(seed: SeedSpec, count: usize) -> Vec<f64> {
    Tw1Table::standard().sample(seed, count)
}

#[cfg(test)]
mod tests;
