//! Airy function `Ai` and its derivative on `[-5, ∞)`.
//!
//! Maclaurin series on `x < 2`; above that the steepest-descent form
//! `Ai(x) = e^{-ζ}/π ∫₀^∞ exp(-√x t²) cos(t³/3) dt`, `ζ = (2/3) x^{3/2}`,
//! which has no cancellation and keeps full relative accuracy in the tail.

use std::f64::consts::PI;

const AI0: f64 = 0.355_028_053_887_817_24;
const AIP0: f64 = -0.258_819_403_792_806_8;

const SERIES_LIMIT: f64 = 2.0;

/// `(Ai(x), Ai'(x))`.
pub fn airy_ai(x: f64) -> (f64, f64) {
    if x < SERIES_LIMIT {
        maclaurin(x)
    } else {
        steepest_descent(x)
    }
}

pub fn ai(x: f64) -> f64 {
    airy_ai(x).0
}

fn maclaurin(x: f64) -> (f64, f64) {
    let x3 = x * x * x;
    let (mut f, mut g, mut df, mut dg) = (1.0, x, 0.0, 1.0);
    let (mut a, mut b) = (1.0, x);
    let (mut da, mut db) = (0.5 * x * x, 1.0);
    df += da;
    for k in 0..200 {
        let k3 = 3.0 * k as f64;
        a *= x3 / ((k3 + 2.0) * (k3 + 3.0));
        b *= x3 / ((k3 + 3.0) * (k3 + 4.0));
        if k > 0 {
            da *= x3 / (k3 * (k3 + 2.0));
        }
        db *= x3 / ((k3 + 1.0) * (k3 + 3.0));
        f += a;
        g += b;
        if k > 0 {
            df += da;
        }
        dg += db;
        let scale = f.abs() + g.abs() + df.abs() + dg.abs();
        if a.abs() + b.abs() + da.abs() + db.abs() < 1e-18 * scale {
            break;
        }
    }
    (AI0 * f + AIP0 * g, AI0 * df + AIP0 * dg)
}

fn steepest_descent(x: f64) -> (f64, f64) {
    let r = x.sqrt();
    let zeta = 2.0 / 3.0 * x * r;
    // exp(-r t²) < 1e-40 beyond t_max.
    let t_max = (92.0 / r).sqrt();
    let panels = 4000usize;
    let h = t_max / panels as f64;
    let (mut i0, mut i2) = (0.0, 0.0);
    for k in 0..=panels {
        let t = k as f64 * h;
        let w = if k == 0 || k == panels {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let e = (-r * t * t).exp() * (t * t * t / 3.0).cos();
        i0 += w * e;
        i2 += w * t * t * e;
    }
    i0 *= h / 3.0;
    i2 *= h / 3.0;
    let pre = (-zeta).exp() / PI;
    (pre * i0, pre * (-r * i0 - i2 / (2.0 * r)))
}

/// `∫ₓ^∞ Ai(t)² dt = Ai'(x)² − x Ai(x)²`.
pub fn ai_sq_tail(x: f64) -> f64 {
    let (a, d) = airy_ai(x);
    d * d - x * a * a
}

/// `∫ₓ^∞ (t − x) Ai(t)² dt = (2x² Ai² − 2x Ai'² − Ai Ai') / 3`.
pub fn ai_sq_moment_tail(x: f64) -> f64 {
    let (a, d) = airy_ai(x);
    (2.0 * x * x * a * a - 2.0 * x * d * d - a * d) / 3.0
}

/// `∫ₓ^∞ Ai(t) dt` by Simpson quadrature; meant for `x ≥ 2`, where the
/// integrand decays like `exp(-(2/3) t^{3/2})`.
pub fn ai_tail(x: f64) -> f64 {
    let width = 12.0;
    let panels = 2400usize;
    let h = width / panels as f64;
    let mut s = 0.0;
    for k in 0..=panels {
        let w = if k == 0 || k == panels {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * ai(x + k as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 30-digit evaluations.
    const REF: [(f64, f64, f64); 6] = [
        (-2.0, 0.227_407_428_201_685_58, 0.618_259_020_741_691_04),
        (0.0, 0.355_028_053_887_817_24, -0.258_819_403_792_806_8),
        (1.0, 0.135_292_416_312_881_42, -0.159_147_441_296_793_21),
        (2.5, 0.015_725_923_380_470_49, -0.026_250_881_035_903_23),
        (4.0, 9.515_638_512_048_019e-4, -1.958_640_950_204_179e-3),
        (12.0, 1.393_184_688_875_360_8e-13, -4.854_736_554_985_308_5e-13),
    ];

    #[test]
    fn matches_reference_values() {
        for (x, a, d) in REF {
            let (ga, gd) = airy_ai(x);
            assert!((ga - a).abs() <= 1e-12 * a.abs().max(1e-300), "Ai({x}) = {ga}, want {a}");
            assert!((gd - d).abs() <= 1e-12 * d.abs(), "Ai'({x}) = {gd}, want {d}");
        }
    }

    #[test]
    fn branches_agree_at_switch() {
        for x in [1.6, 2.0, 2.4] {
            let (a, d) = maclaurin(x);
            let (b, e) = steepest_descent(x);
            assert!((a - b).abs() < 1e-13 * a.abs(), "x = {x}");
            assert!((d - e).abs() < 1e-13 * d.abs(), "x = {x}");
        }
    }

    #[test]
    fn satisfies_airy_equation() {
        let h = 1e-3;
        let mut x = -2.0;
        while x <= 8.0 {
            let f = |t: f64| ai(t);
            let d2 = (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h)
                - f(x - 2.0 * h))
                / (12.0 * h * h);
            let r = (d2 - x * f(x)).abs();
            assert!(r <= 1e-8, "x = {x}: residual {r}");
            x += 0.05;
        }
    }

    #[test]
    fn derivative_consistent_with_finite_difference() {
        for x in [-1.5, 0.3, 1.99, 2.01, 5.0] {
            let h = 1e-5;
            let fd = (ai(x + h) - ai(x - h)) / (2.0 * h);
            assert!((fd - airy_ai(x).1).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn tail_integrals() {
        // Differentiate the closed forms numerically.
        let x = 3.0;
        let h = 1e-4;
        let du = (ai_sq_tail(x + h) - ai_sq_tail(x - h)) / (2.0 * h);
        assert!((du + ai(x).powi(2)).abs() < 1e-12);
        let dv = (ai_sq_moment_tail(x + h) - ai_sq_moment_tail(x - h)) / (2.0 * h);
        assert!((dv + ai_sq_tail(x)).abs() < 1e-12);
        let dw = (ai_tail(x + h) - ai_tail(x - h)) / (2.0 * h);
        assert!((dw + ai(x)).abs() < 1e-10);
    }
}
