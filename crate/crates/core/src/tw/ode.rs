//! Adaptive Dormand–Prince 5(4) for small fixed-size systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|.
    pub max_step: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
// B minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `y' = f(x, y)` from `x0` through every point of `xs` (all on
/// one side of `x0`, monotone), returning the state at each. The state
/// update is Kahan-compensated, so long runs do not drift.
pub fn integrate<const D: usize, F>(
    f: F,
    x0: f64,
    y0: [f64; D],
    xs: &[f64],
    tol: Tolerances,
    guard: impl Fn(f64, &[f64; D]) -> Option<String>,
) -> Result<(Vec<[f64; D]>, StepStats)>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let mut out = Vec::with_capacity(xs.len());
    let mut stats = StepStats::default();
    let mut x = x0;
    let mut y = y0;
    let mut comp = [0.0; D];
    let dir = match xs.last() {
        Some(&last) if last < x0 => -1.0,
        _ => 1.0,
    };
    let mut h = dir * tol.max_step.min(1e-3);
    let mut k0 = f(x, &y);
    for &target in xs {
        if (target - x) * dir < 0.0 {
            return Err(Error::Numerical(format!("output point {target} is not monotone")));
        }
        while (target - x) * dir > 0.0 {
            let mut last = false;
            let proposed = h;
            if (x + h - target) * dir >= 0.0 {
                h = target - x;
                last = true;
            }
            let mut k = [[0.0; D]; 7];
            k[0] = k0;
            for s in 1..7 {
                let mut ys = y;
                for (d, yd) in ys.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[d];
                    }
                    *yd += h * acc;
                }
                k[s] = f(x + C[s] * h, &ys);
            }
            let mut incr = [0.0; D];
            let mut err = 0.0f64;
            for d in 0..D {
                let (mut b, mut e) = (0.0, 0.0);
                for s in 0..7 {
                    b += B[s] * k[s][d];
                    e += E[s] * k[s][d];
                }
                incr[d] = h * b;
                let sc = tol.atol + tol.rtol * y[d].abs().max((y[d] + incr[d]).abs());
                err = err.max((h * e).abs() / sc);
            }
            if !err.is_finite() {
                return Err(Error::Divergence { at: x, reason: "non-finite stage values".into() });
            }
            if err <= 1.0 {
                for d in 0..D {
                    let t = incr[d] - comp[d];
                    let s = y[d] + t;
                    comp[d] = (s - y[d]) - t;
                    y[d] = s;
                }
                x = if last { target } else { x + h };
                k0 = k[6];
                stats.accepted += 1;
                if let Some(reason) = guard(x, &y) {
                    return Err(Error::Divergence { at: x, reason });
                }
            } else {
                stats.rejected += 1;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // A step shortened to hit an output point says nothing about the
            // step size the local error allows.
            let next = if last && err <= 1.0 { proposed.abs().max(h.abs() * factor) } else { h.abs() * factor };
            if next < 1e-14 * x.abs().max(1.0) {
                return Err(Error::Divergence { at: x, reason: "step size underflow".into() });
            }
            h = dir * next.min(tol.max_step);
            if stats.accepted + stats.rejected > 50_000_000 {
                return Err(Error::Numerical("step budget exhausted".into()));
            }
        }
        out.push(y);
    }
    Ok((out, stats))
}
