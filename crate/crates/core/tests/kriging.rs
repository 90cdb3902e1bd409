mod common;

use dbp_core::kriging::{krige, Variogram};
use proptest::prelude::*;

fn samples_strategy() -> impl Strategy<Value = Vec<((f64, f64), f64)>> {
    prop::collection::vec(((0i32..40, 0i32..40), -5.0f64..5.0), 2..12).prop_map(|v| {
        let mut seen = std::collections::BTreeSet::new();
        v.into_iter()
            .filter(|((x, y), _)| seen.insert((*x, *y)))
            .map(|((x, y), z)| ((x as f64 * 25.0, y as f64 * 25.0), z))
            .collect::<Vec<_>>()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_dense_solve(
        samples in samples_strategy().prop_filter("two samples", |s| s.len() >= 2),
        target in (0.0f64..1000.0, 0.0f64..1000.0),
        nugget in 0.0f64..0.3,
        sill in 0.5f64..3.0,
        range in 50.0f64..800.0,
    ) {
        let v = Variogram::exponential(nugget, sill + nugget, range).unwrap();
        let got = &krige(&samples, &[target], &v).unwrap()[0];
        let (value, weights) = common::kriging_dense(&samples, target, |h| v.gamma(h));
        let scale = samples.iter().fold(1.0f64, |m, s| m.max(s.1.abs()));
        prop_assert!((got.value - value).abs() <= 1e-8 * scale);
        for (a, b) in got.weights.iter().zip(&weights) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
        prop_assert!((got.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn exact_at_every_sample(samples in samples_strategy().prop_filter("two samples", |s| s.len() >= 2)) {
        let v = Variogram::exponential(0.0, 1.0, 300.0).unwrap();
        let targets: Vec<(f64, f64)> = samples.iter().map(|s| s.0).collect();
        for (got, s) in krige(&samples, &targets, &v).unwrap().iter().zip(&samples) {
            prop_assert!((got.value - s.1).abs() <= 1e-10);
        }
    }
}

#[test]
fn square_center_is_the_mean() {
    let v = Variogram::exponential(0.0, 1.0, 1.0).unwrap();
    let samples = [((0.0, 0.0), 1.0), ((1.0, 0.0), 2.0), ((0.0, 1.0), 3.0), ((1.0, 1.0), 6.0)];
    let got = &krige(&samples, &[(0.5, 0.5)], &v).unwrap()[0];
    for w in &got.weights {
        assert!((w - 0.25).abs() <= 1e-12);
    }
    assert!((got.value - 3.0).abs() <= 1e-12);
}
