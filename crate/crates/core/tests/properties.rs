use proptest::prelude::*;

use tempcode::analysis::selection_order;
use tempcode::ei::{apply_mismatch, ei_kernel, EiElementParams, MismatchSpec};
use tempcode::readout::{fit_logreg, predict, FeatureMatrix, FitOptions};
use tempcode::tde::{calibrate_w_trig, pair_response, simulate_tde, TdeParams};

fn calibrated_tde() -> TdeParams {
    let base = TdeParams::default();
    TdeParams {
        w_trig: calibrate_w_trig(&base, 10).unwrap().w_trig,
        ..base
    }
}

/// Composite Simpson rule on `[0, t_end]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, t_end: f64, n: usize) -> f64 {
    let h = t_end / n as f64;
    let inner: f64 = (1..n).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h)).sum();
    (f(0.0) + inner + f(t_end)) * h / 3.0
}

#[test]
fn nominal_kernel_integrates_to_net_charge() {
    let p = EiElementParams::default();
    let numeric = simpson(|t| ei_kernel(&p, t), 80.0, 200_000);
    assert!((numeric - 10.5).abs() / 10.5 < 1e-6, "{numeric}");
    assert!((p.net_charge() - 10.5).abs() < 1e-12);
}

proptest! {
    #[test]
    fn mismatched_kernels_integrate_to_net_charge(seed in any::<u64>(), id in any::<u64>()) {
        let el = apply_mismatch(&EiElementParams::default(), &MismatchSpec::paper_default(seed), id).unwrap();
        let t_end = 40.0 * el.tau_e_ms;
        let numeric = simpson(|t| ei_kernel(&el, t), t_end, 200_000);
        let scale = el.w_e * el.tau_e_ms - el.w_i * el.tau_i_ms;
        prop_assert!((numeric - el.net_charge()).abs() / scale < 1e-6);
    }

    #[test]
    fn mismatch_is_deterministic_and_valid(seed in any::<u64>(), id in any::<u64>()) {
        let spec = MismatchSpec::paper_default(seed);
        let a = apply_mismatch(&EiElementParams::default(), &spec, id).unwrap();
        prop_assert_eq!(a, apply_mismatch(&EiElementParams::default(), &spec, id).unwrap());
        prop_assert!(a.is_valid());
        prop_assert!(a.peak_time_ms().is_some_and(|t| t > 0.0));
    }

    #[test]
    fn tde_is_silent_without_trigger(fac in proptest::collection::vec(any::<bool>(), 1..300)) {
        let p = calibrated_tde();
        prop_assert_eq!(simulate_tde(&p, &fac, &vec![false; fac.len()]).unwrap().count, 0);
    }

    #[test]
    fn doubling_trigger_weight_never_reduces_count(scale in 0.05f64..20.0, delta in -20i64..40) {
        let base = calibrated_tde();
        let p = TdeParams { w_trig: base.w_trig * scale, ..base };
        let q = TdeParams { w_trig: 2.0 * p.w_trig, ..base };
        prop_assert!(pair_response(&q, delta) >= pair_response(&p, delta));
    }

    #[test]
    fn positive_delay_response_is_non_increasing(scale in 0.2f64..5.0) {
        let base = calibrated_tde();
        let p = TdeParams { w_trig: base.w_trig * scale, ..base };
        let counts: Vec<u32> = (1..=30).map(|d| pair_response(&p, d)).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{:?}", counts);
    }

    #[test]
    fn column_scaling_keeps_labels(
        rows in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 3), 12..40),
        col in 0usize..3,
        factor in 0.01f64..100.0,
    ) {
        let y: Vec<bool> = rows.iter().map(|r| r[0] + 0.5 * r[1] > 7.0).collect();
        prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
        let opts = FitOptions { lambda: 0.1, ..FitOptions::default() };
        let x = FeatureMatrix::unlabeled(&rows);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| {
            let mut r = r.clone();
            r[col] *= factor;
            r
        }).collect();
        let xs = FeatureMatrix::unlabeled(&scaled);
        let a = predict(&fit_logreg(&x, &y, &opts).unwrap(), &x).unwrap();
        let b = predict(&fit_logreg(&xs, &y, &opts).unwrap(), &xs).unwrap();
        for (pa, pb) in a.probabilities.iter().zip(&b.probabilities) {
            prop_assert!((pa - pb).abs() < 1e-6);
        }
    }

    #[test]
    fn selection_order_is_a_permutation(
        pairs in proptest::collection::vec((0.0f64..1.0, -0.2f64..0.5), 1..60),
    ) {
        let (train, importance): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut order = selection_order(&train, &importance);
        prop_assert_eq!(order.len(), train.len());
        let first = order[0];
        prop_assert!(train.iter().all(|&a| a <= train[first]));
        order.sort_unstable();
        prop_assert_eq!(order, (0..train.len()).collect::<Vec<_>>());
    }
}
