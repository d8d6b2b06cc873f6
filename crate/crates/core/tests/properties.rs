use ensemble_calib::blr::{EmpiricalPredictive, GaussianPredictive, Predictive};
use ensemble_calib::calibrator::{empirical_risk, interval_bounds};
use proptest::prelude::*;

fn predictive() -> impl Strategy<Value = Predictive> {
    prop_oneof![
        (-50.0..50.0f64, 1e-3..100.0f64)
            .prop_map(|(m, v)| Predictive::Analytic(GaussianPredictive::new(m, v).unwrap())),
        prop::collection::vec(-100.0..100.0f64, 2..400)
            .prop_map(|s| Predictive::Empirical(EmpiricalPredictive::from_samples(s).unwrap())),
    ]
}

fn resolvable(pred: &Predictive, q: f64) -> bool {
    q >= pred.resolution()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn intervals_nest(pred in predictive(), a in 1e-4..0.5f64, b in 1e-4..0.5f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(resolvable(&pred, lo));
        let wide = interval_bounds(&pred, lo).unwrap();
        let narrow = interval_bounds(&pred, hi).unwrap();
        prop_assert!(wide.contains_interval(&narrow), "{wide:?} vs {narrow:?}");
    }

    #[test]
    fn risk_is_monotone_in_level(
        preds in prop::collection::vec(predictive(), 1..20),
        shift in -5.0..5.0f64,
        a in 1e-4..0.5f64,
        b in 1e-4..0.5f64,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(preds.iter().all(|p| resolvable(p, lo)));
        let ys: Vec<f64> = preds
            .iter()
            .enumerate()
            .map(|(i, p)| ensemble_calib::blr::predictive_quantile(p, 0.5).unwrap() + shift * (i as f64).sin())
            .collect();
        let r_lo = empirical_risk(&ys, &preds, lo).unwrap();
        let r_hi = empirical_risk(&ys, &preds, hi).unwrap();
        prop_assert!(r_lo <= r_hi);
    }
}
