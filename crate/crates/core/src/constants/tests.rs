use super::*;
use crate::exec::Execution;
use crate::jl::VectorFamily;
use crate::rng::{derive_stream, sample_mu_x};
use approx::assert_relative_eq;
use proptest::prelude::*;

fn placeholder_ledger(q: f64) -> ConstantLedger {
    ledger_for(q, AbsoluteConstants::placeholder()).unwrap()
}

fn log_grid() -> Vec<f64> {
    (0..=48).map(|k| 2.0 * 10f64.powf(k as f64 * (5.7 - 2f64.log10() + 0.301) / 48.0)).filter(|&q| q <= 1e6).collect()
}

#[test]
fn k1_at_two() {
    let l = placeholder_ledger(2.0);
    assert_relative_eq!(l.k1, 1.201_122_408_786_449_8, max_relative = 1e-14);
    assert_relative_eq!(l.k1, 1.0 / LN_2.sqrt(), max_relative = 1e-15);
}

#[test]
fn gamma_at_two() {
    let l = placeholder_ledger(2.0);
    assert_relative_eq!(l.gamma, 3.0 * LN_2 / (16.0 * 2.25), max_relative = 1e-15);
    assert!((l.gamma - 0.05776).abs() < 1e-5);
}

#[test]
fn identities_on_log_grid() {
    let abs = AbsoluteConstants::placeholder();
    for q in log_grid() {
        let l = ledger_for(q, abs).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        let qh2 = l.q_hat * l.q_hat;
        assert!(rel(qh2, q / 2.0) < 1e-12);
        // c2 = c23² L, the Hoeffding exponent.
        assert!(rel(l.c2, abs.c23 * abs.c23 * l.log_term) < 1e-12);
        // γ = 3 / (8 q K4²) = 3 ln(q̂²+1) / (16 C4² q̂²).
        assert!(rel(l.gamma, 3.0 / (8.0 * q * l.k4 * l.k4)) < 1e-12);
        assert!(rel(l.gamma, 3.0 * qh2.ln_1p() / (16.0 * abs.c4 * abs.c4 * qh2)) < 1e-12);
        assert!(rel(l.k3, abs.c3 * abs.c2 * l.k1) < 1e-12);
        assert!(rel(l.k5 * l.k5, abs.c1 * q * q / l.log_term.powi(2)) < 1e-12);
        assert!(rel(l.big_c0 * l.big_c0 * l.c0, LN_5) < 1e-12);
        assert!(rel(l.big_c0_prime * l.big_c0_prime * abs.c23_tilde.powi(2), LN_5 / LN_2) < 1e-12);
        assert!(rel(l.psi, (-KAPPA0_PRIME * l.gamma * l.gamma).exp()) < 1e-12);
        assert!(rel(l.alpha0 * (3.0 / l.epsilon_q).ln(), abs.kappa * KAPPA0_PRIME * l.gamma * l.gamma) < 1e-12);
        assert!(rel(l.kappa1, l.gamma / 8.0) < 1e-12);
        assert!(l.gamma > 0.0 && l.gamma < 1.0);
        assert!(l.psi > 0.0 && l.psi < 1.0);
        assert!(l.epsilon_q < (3.0 * l.psi).min(1.0));
        assert!(l.alpha0 > 0.0 && l.alpha0 < 1.0);
    }
}

#[test]
fn bad_constants_name_the_bound() {
    let mut abs = AbsoluteConstants::placeholder();
    abs.c4 = 1.0;
    let err = ledger_for(2.0, abs).unwrap_err().to_string();
    assert!(err.contains("C4"), "{err}");
    assert!(ledger_for(1.5, AbsoluteConstants::placeholder()).is_err());
}

#[test]
fn subgaussian_norm_matches_closed_form() {
    assert!((subgaussian_norm_empirical(2.0).unwrap() - 1.0 / LN_2.sqrt()).abs() < 1e-10);
    assert!((subgaussian_norm_empirical(10.0).unwrap() - 0.747_068_020_029_801).abs() < 1e-10);
    for q in [2.0, 3.0, 5.0, 10.0, 100.0] {
        let k1 = placeholder_ledger(q).k1;
        assert!((subgaussian_norm_empirical(q).unwrap() - k1).abs() < 1e-10, "q = {q}");
    }
}

#[test]
fn hoeffding_clamps_and_decays() {
    let l = placeholder_ledger(4.0);
    assert_eq!(hoeffding_bound(0.0, &l).unwrap(), 1.0);
    assert!(hoeffding_bound(-1.0, &l).is_err());
    let mut prev = 1.0;
    for k in 0..100 {
        let b = hoeffding_bound(k as f64 * 0.1, &l).unwrap();
        assert!(b <= prev);
        prev = b;
    }
}

#[test]
fn tail_bound_regimes() {
    let l = placeholder_ledger(2.0);
    let below = s1_tail_bound(l.big_c0 * (1.0 - 1e-9), 1000, 10, &l).unwrap();
    assert!(!below.in_regime);
    assert_eq!(below.bound, 1.0);
    let at = s1_tail_bound(l.big_c0, 1000, 10, &l).unwrap();
    assert!(at.in_regime && at.bound < 1.0);

    let n = 1;
    let inside = ((n as f64) / l.alpha0).ceil() as usize;
    assert!(sn_lower_bound(&l, inside, n).unwrap().in_regime);
    let outside = sn_lower_bound(&l, inside - 1, n).unwrap();
    assert!(!outside.in_regime && outside.bound == 1.0);
    assert_relative_eq!(outside.threshold, l.kappa1 * ((inside - 1) as f64).sqrt(), max_relative = 1e-15);
}

#[test]
fn hashing_like_threshold_is_sqrt_n_over_s() {
    // q = 2n/s makes q̂ √(N/n) = √(N/s).
    let (n, big_n, s) = (100usize, 10_000usize, 20.0);
    let l = placeholder_ledger(2.0 * n as f64 / s);
    let t = 1.7 * l.big_c0;
    let b = s1_tail_bound(t, big_n, n, &l).unwrap();
    assert_relative_eq!(b.threshold, t * (big_n as f64 / s).sqrt(), max_relative = 1e-14);
}

#[test]
fn jl_dimension_scaling() {
    let l = placeholder_ledger(2.0);
    let a = jl_dimension_bound(0.4, 0.1, &l).unwrap();
    let b = jl_dimension_bound(0.2, 0.1, &l).unwrap();
    assert_relative_eq!(b / a, 4.0, max_relative = 1e-14);
    let near_one = jl_dimension_bound(0.5, 1.0 - 1e-12, &l).unwrap();
    assert_relative_eq!(near_one, l.k5 * l.k5 * 4.0 * LN_2, max_relative = 1e-11);
    assert_eq!(jl_min_dimension(0.5, 0.5, &l).unwrap(), (l.k5 * l.k5 * 4.0 * 4f64.ln()).ceil() as usize);
    assert!(jl_min_dimension(0.0, 0.5, &l).is_err());
    assert!(jl_min_dimension(0.6, 0.5, &l).is_err());
    assert!(jl_min_dimension(0.5, 1.0, &l).is_err());
}

#[test]
fn sparsity_check_boundary() {
    let abs = AbsoluteConstants::placeholder();
    let tau = sparsity_threshold_tau(&abs);
    let l = placeholder_ledger(2.0);
    let n = (tau.ceil() as usize) * 3;
    assert!(hashing_sparsity_check(n, n as f64, 0.5, 0.5, &l).unwrap());
    let kappa = (tau / n as f64).sqrt();
    assert!(hashing_sparsity_check(n, kappa * n as f64, 0.5, 0.5, &l).unwrap());
    assert!(!hashing_sparsity_check(n, 1e-6, 0.5, 0.5, &l).unwrap());
    assert!(hashing_sparsity_check(n, 0.0, 0.5, 0.5, &l).is_err());
}

#[test]
fn second_moment_of_t1_is_one() {
    // T1 = Σ x_j X_1j for a unit x.
    let (big_n, trials, q) = (64usize, 20_000usize, 8.0);
    let x = VectorFamily::GaussianUnit.draw(big_n, derive_stream(5, 0)).unwrap();
    let vals: Vec<f64> = (0..trials)
        .map(|t| {
            let row = sample_mu_x(derive_stream(5, 1 + t as u64), q, big_n).unwrap();
            let t1: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            t1 * t1
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / trials as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    assert!((mean - 1.0).abs() < 4.0 * (var / trials as f64).sqrt(), "mean {mean}");
}

#[test]
fn exact_requirements() {
    // q = 2: E|Y|^p = 1, so C2 needs √ln2 at p = 1.
    assert_relative_eq!(c2_requirement(2.0), LN_2.sqrt(), max_relative = 1e-14);
    // q = 2: E e^{λ²Y²} = e^{λ²} forces K3 ≥ 1.
    assert_relative_eq!(k3_requirement(2.0), 1.0, max_relative = 1e-12);
    for q in [3.0, 10.0, 1e3, 1e6] {
        let k3 = k3_requirement(q);
        let p = 2.0 / q;
        for lambda in [0.01, 0.3, 1.0, 3.0, 20.0] {
            let mgf = 1.0 + p * (f64::cosh(lambda) - 1.0);
            assert!(mgf.ln() <= k3 * k3 * lambda * lambda * (1.0 + 1e-9));
        }
        let lam = 1.0 / k3;
        assert!((1.0 + p * ((lam * lam).exp() - 1.0)).ln() <= k3 * k3 * lam * lam * (1.0 + 1e-12));
    }
}

#[test]
fn bundled_file_round_trips() {
    let file = ConstantsFile::bundled();
    file.constants.validate().unwrap();
    let back = ConstantsFile::from_json(&file.to_json().unwrap()).unwrap();
    assert_eq!(back, file);
    let wrong = file.to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
    assert!(ConstantsFile::from_json(&wrong).is_err());
}

fn tiny_grid() -> ProbeGrid {
    let mut grid = ProbeGrid::default();
    grid.tail.retain(|p| p.m == 64);
    grid.khintchine.retain(|p| p.m == 8);
    grid.jl.retain(|p| p.delta == 0.1 && p.epsilon == 0.5);
    grid.bounds = vec![
        BoundProbe::Hoeffding { q: 2.0, m: 64, t: 2.0 },
        BoundProbe::Largest { q: 4.0, big_n: 400, n: 10, t_rel_c0: 1.0 },
        BoundProbe::Smallest { q: 2.0, n: 1, big_n: None },
    ];
    grid
}

#[test]
fn calibration_is_reproducible_and_valid() {
    let budget = CalibrationBudget { tail_trials: 20_000, khintchine_trials: 2000, jl_trials: 200, bound_trials: 50, max_adjustments: 20 };
    let grid = tiny_grid();
    let init = AbsoluteConstants::placeholder();
    let (a, rec) = calibrate(init, &budget, &grid, 11, Execution::Parallel).unwrap();
    let (b, _) = calibrate(init, &budget, &grid, 11, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    a.validate().unwrap();
    assert!(a.c2 > 1.0 && a.c3 > 1.0 && a.c4 > 1.0);
    assert_eq!(a.kappa, init.kappa);
    assert!(rec.bound_checks.iter().all(|c| !c.violated));
    // The fitted c2 covers every resolved tail point of its own sample.
    for fit in &rec.estimates.tail {
        let l = ledger_for(fit.q, a).unwrap();
        assert!(l.c2 <= fit.c23_sq * l.log_term);
    }
}

#[test]
fn bound_probe_smallest_picks_regime() {
    let abs = AbsoluteConstants::placeholder();
    let c = check_bound(&BoundProbe::Smallest { q: 2.0, n: 1, big_n: None }, abs, 5, 1, Execution::Sequential).unwrap();
    assert!(c.in_regime);
    assert!(c.big_n.unwrap() >= 4000);
    assert_eq!(c.exceedances, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ledger_chain_holds(q in 2.0f64..1e6, c4 in 1.01f64..5.0, c23 in 0.05f64..0.99, kappa in 0.05f64..0.95) {
        let abs = AbsoluteConstants::from_core(1.1, 1.1, c4, 0.5, c23, kappa);
        let l = ledger_for(q, abs).unwrap();
        prop_assert!(l.gamma > 0.0 && l.gamma < 1.0);
        prop_assert!(l.epsilon_q < (3.0 * l.psi).min(1.0));
        prop_assert!(l.alpha0 > 0.0 && l.alpha0 < 1.0);
    }

    #[test]
    fn sparsity_check_monotone_in_s(n in 10usize..5000, f in 0.01f64..1.0) {
        let l = ledger_for(2.0, AbsoluteConstants::placeholder()).unwrap();
        let s = f * n as f64;
        if hashing_sparsity_check(n, s, 0.5, 0.1, &l).unwrap() {
            prop_assert!(hashing_sparsity_check(n, n as f64, 0.5, 0.1, &l).unwrap());
        }
    }
}
