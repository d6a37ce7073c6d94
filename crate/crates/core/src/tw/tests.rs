use super::*;

// Moments from an independent run (8th-order integrator, rtol 1e-13).
const ORACLE_MEAN: f64 = -1.206_533_64;
const ORACLE_VAR: f64 = 1.607_780_30;

fn table() -> &'static Tw1Table {
    Tw1Table::standard()
}

fn value_at(t: &Tw1Table, x: f64) -> f64 {
    let i = t.grid().iter().position(|&g| (g - x).abs() < 1e-9).unwrap();
    t.values()[i]
}

#[test]
fn cdf_is_monotone_and_bounded() {
    let t = table();
    assert!(t.values().windows(2).all(|w| w[1] >= w[0]));
    let mut prev = 0.0;
    let mut x = -12.0;
    while x < 12.0 {
        let f = t.cdf(x);
        assert!((0.0..=1.0).contains(&f));
        assert!(f >= prev, "x = {x}");
        prev = f;
        x += 0.0037;
    }
}

#[test]
fn tails_vanish_at_grid_edges() {
    let t = table();
    assert!(t.cdf(-10.0) < 1e-10);
    assert!(1.0 - t.cdf(10.0) < 1e-10);
    // The right tail is still visible at 6.
    let tail6 = 1.0 - t.cdf(6.0);
    assert!(tail6 > 1e-7 && tail6 < 1e-5, "{tail6}");
}

#[test]
fn moments_match_oracle() {
    let (mean, var) = table().moments();
    assert!((mean - ORACLE_MEAN).abs() < 1e-3, "mean {mean}");
    assert!((var - ORACLE_VAR).abs() < 2e-3, "variance {var}");
    assert!((mean - ORACLE_MEAN).abs() < 1e-6);
    assert!((var - ORACLE_VAR).abs() < 1e-6);
}

#[test]
fn tightened_rebuild_agrees() {
    let cfg = TableConfig { rtol: 1e-14, max_step: 0.0025, nodes: 4001, ..TableConfig::default() };
    let fine = Tw1Table::build(cfg).unwrap();
    let (m0, v0) = table().moments();
    let (m1, v1) = fine.moments();
    assert!((m0 - m1).abs() < 1e-3 && (v0 - v1).abs() < 2e-3);
}

#[test]
fn step_halving_is_stable() {
    let base = table();
    let half = Tw1Table::build(TableConfig::default().step_halved()).unwrap();
    let mut worst = 0.0f64;
    for (i, &x) in base.grid().iter().enumerate() {
        if (-8.0..=4.0).contains(&x) {
            worst = worst.max((base.values()[i] - half.values()[i]).abs());
        }
    }
    assert!(worst <= 1e-6, "sup difference {worst}");
}

#[test]
fn painleve_residual() {
    let t = table();
    let (x, q) = (t.grid(), t.painleve());
    let h = x[1] - x[0];
    let mut worst = 0.0f64;
    for i in 2..x.len() - 2 {
        if !(-8.0..=6.0).contains(&x[i]) {
            continue;
        }
        let d2 = (-q[i + 2] + 16.0 * q[i + 1] - 30.0 * q[i] + 16.0 * q[i - 1] - q[i - 2])
            / (12.0 * h * h);
        worst = worst.max((d2 - x[i] * q[i] - 2.0 * q[i].powi(3)).abs());
    }
    assert!(worst <= 1e-6, "residual {worst}");
}

#[test]
fn airy_and_left_asymptotics() {
    let t = table();
    let q = |x: f64| t.painleve()[t.grid().iter().position(|&g| (g - x).abs() < 1e-9).unwrap()];
    assert!((q(4.0) / airy::ai(4.0) - 1.0).abs() < 1e-4);
    assert!((q(-9.0) / 4.5f64.sqrt() - 1.0).abs() < 0.02);
    assert!(t.painleve().iter().all(|&v| v > 0.0));
    assert!(t.painleve().windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn hastings_mcleod_grid_interface() {
    let grid: Vec<f64> = (0..=18).map(|k| 8.0 - k as f64).collect();
    let q = hastings_mcleod(&grid, 12.0).unwrap();
    assert!((q[4] / airy::ai(4.0) - 1.0).abs() < 1e-4);
    assert!((q[17] / 4.5f64.sqrt() - 1.0).abs() < 0.02);
    assert!(hastings_mcleod(&[1.0, 2.0], 12.0).is_err());
    assert!(hastings_mcleod(&[13.0, 2.0], 12.0).is_err());
}

#[test]
fn quantile_inverts_cdf() {
    let t = table();
    for p in [0.01, 0.5, 0.99, 1e-6, 0.999_999] {
        let x = t.quantile(p).unwrap();
        assert!((t.cdf(x) - p).abs() < 1e-4, "p = {p}");
    }
    assert!(t.quantile(0.0).is_err());
    assert!(t.quantile(1.0).is_err());
    assert!(t.quantile(f64::NAN).is_err());
}

#[test]
fn sampling_mean_and_determinism() {
    let t = table();
    let s = t.sample(SeedSpec::new(3, 0), 100_000);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let (m, v) = t.moments();
    // 4.5 sigma of the sample mean is about 0.018
    assert!((mean - m).abs() < 0.02, "{mean} vs {m}, sd {}", (v / 1e5).sqrt());
    assert_eq!(s[..100], t.sample(SeedSpec::new(3, 0), 100)[..]);
}

#[test]
fn density_is_derivative_of_cdf() {
    let t = table();
    for x in [-3.0, -1.2, 0.0, 1.7] {
        let h = 1e-4;
        let fd = (t.cdf(x + h) - t.cdf(x - h)) / (2.0 * h);
        assert!((fd - t.density(x)).abs() < 1e-6);
    }
    assert!((value_at(t, 0.0) - t.cdf(0.0)).abs() < 1e-15);
}

#[test]
fn csv_round_trip() {
    let t = table();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let back = Tw1Table::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.grid(), t.grid());
    assert_eq!(back.values(), t.values());
    assert_eq!(back.meta(), t.meta());
    for x in [-4.0, -1.234, 0.5, 3.3] {
        assert_eq!(back.cdf(x), t.cdf(x));
    }
    let plain = "x,F1\n0,0.1\n1,0.5\n2,0.9\n";
    let p = Tw1Table::read_csv(plain.as_bytes()).unwrap();
    assert!((p.cdf(1.0) - 0.5).abs() < 1e-15);
    assert!(Tw1Table::read_csv("x,F1\n0,0.5\n1,0.4\n2,0.9\n".as_bytes()).is_err());
}
