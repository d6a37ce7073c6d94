use approx::assert_relative_eq;
use sparsejl::constants::{ledger_for, s1_tail_bound, AbsoluteConstants};
use sparsejl::jl::{compare_ensembles, JlOptions, VectorFamily};
use sparsejl::sketch::{self, EnsembleParams};
use sparsejl::spectra::{
    bai_yin_limits, extreme_singular_values, fraction_sn_at_least, log_schedule, sparsity_sweep,
    tw_experiment, EnsembleChoice, ExperimentOptions,
};
use sparsejl::{derive_stream, Execution};

#[test]
fn gram_trace_matches_squared_singular_values_bounds() {
    let h = sketch::build(EnsembleParams::hashing_like(30, 900, 6.0), derive_stream(3, 0)).unwrap();
    let pair = extreme_singular_values(&h).unwrap();
    let trace = h.gram().trace();
    assert!(pair.sn * pair.sn * 30.0 <= trace + 1e-9);
    assert!(pair.s1 * pair.s1 * 30.0 >= trace - 1e-9);
    assert_relative_eq!(trace, h.frobenius_sq(), max_relative = 1e-12);
}

#[test]
fn experiments_do_not_depend_on_execution_path() {
    let seq = ExperimentOptions { exec: Execution::Sequential, ..Default::default() };
    let par = ExperimentOptions { exec: Execution::Parallel, ..Default::default() };
    let a = sparsity_sweep(1500, 15, &[1.5, 15.0], 4, 5, &seq).unwrap();
    let b = sparsity_sweep(1500, 15, &[1.5, 15.0], 4, 5, &par).unwrap();
    assert_eq!(a.rows, b.rows);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_csv(&mut x).unwrap();
    b.write_csv(&mut y).unwrap();
    assert_eq!(x, y);
}

#[test]
fn smallest_singular_value_frequency_grows_with_n() {
    // P(s_n ≥ κ1 √(N/n)) approaches 1 along a growing schedule.
    let ledger = ledger_for(2.0, AbsoluteConstants::calibrated()).unwrap();
    let schedule = log_schedule(200.0, 3000.0, 4, 0.01, 1.0).unwrap();
    let r = sparsejl::spectra::baiyin_experiment(&schedule, 20, 8, EnsembleChoice::general_q(2.0), &ExperimentOptions::default()).unwrap();
    let fractions: Vec<f64> = (0..schedule.len())
        .map(|i| {
            let p = &schedule[i];
            fraction_sn_at_least(&r, i, ledger.kappa1 * (p.big_n as f64 / p.n as f64).sqrt())
        })
        .collect();
    assert!(fractions.windows(2).all(|w| w[1] >= w[0]), "{fractions:?}");
    assert_eq!(*fractions.last().unwrap(), 1.0);
}

#[test]
fn largest_singular_value_sits_far_below_tail_threshold() {
    let ledger = ledger_for(4.0, AbsoluteConstants::calibrated()).unwrap();
    let (big_n, n) = (2000, 20);
    let tb = s1_tail_bound(ledger.big_c0, big_n, n, &ledger).unwrap();
    let h = sketch::build(EnsembleParams::general_q(n, big_n, 4.0), derive_stream(4, 0)).unwrap();
    let pair = extreme_singular_values(&h).unwrap();
    assert!(tb.in_regime && pair.s1 < tb.threshold);
    let (_, s1_ref) = bai_yin_limits(big_n, n);
    assert!((pair.s1 - s1_ref).abs() < 0.2 * s1_ref);
}

#[test]
fn paired_ensembles_share_vectors() {
    let opts = JlOptions { exec: Execution::Parallel, keep_ratios: true };
    let reps = compare_ensembles(
        &[EnsembleParams::hashing_like(40, 400, 40.0), EnsembleParams::gaussian(40, 400)],
        0.3,
        200,
        &VectorFamily::SparseKHot(5),
        12,
        &opts,
    )
    .unwrap();
    // Both see k-hot vectors; with s = n the sign sketch has all columns of norm 1.
    assert_eq!(reps.len(), 2);
    assert!(reps.iter().all(|r| r.per_trial_ratios.as_ref().unwrap().len() == 200));
}

#[test]
fn tw_report_is_self_consistent() {
    let r = tw_experiment(&[1000], 0.02, 0.5, 200, 6, EnsembleChoice::hashing_like(), &ExperimentOptions::default()).unwrap();
    let p = &r.points[0];
    assert!(p.ks_largest > 0.0 && p.ks_largest < 1.0);
    let mut csv = Vec::new();
    r.write_csv(&mut csv, None).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 2 * 200);
    assert!((r.tw1_mean + 1.2065).abs() < 1e-3);
}
