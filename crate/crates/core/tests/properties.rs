use diffmax::pwa::{synth_example2, Dataset, PWAModel};
use diffmax::stationarity::{classify_point, subdifferentials, PiecewiseAffine1D};
use proptest::prelude::*;
use std::io::Write;

/// Nested max/min of affine pieces: neither convex nor concave in general.
fn arb_pwa() -> impl Strategy<Value = PiecewiseAffine1D> {
    let affine = (-3.0..3.0f64, -2.0..2.0f64).prop_map(|(a, b)| PiecewiseAffine1D::affine(a, b));
    affine.prop_recursive(3, 12, 2, |inner| {
        (inner.clone(), inner, any::<bool>()).prop_map(|(f, g, up)| if up { f.max(&g) } else { f.min(&g) })
    })
}

/// Evaluation points: arbitrary reals plus the breakpoints themselves.
fn probe_points(f: &PiecewiseAffine1D, extra: &[f64]) -> Vec<f64> {
    f.breakpoints().iter().chain(extra).copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn subdifferential_chain(f in arb_pwa(), xs in prop::collection::vec(-4.0..4.0f64, 3)) {
        for x in probe_points(&f, &xs) {
            let s = subdifferentials(&f, x);
            prop_assert!(s.bouligand.is_subset_of(&s.limiting));
            prop_assert!(s.regular.is_subset_of(&s.limiting));
            prop_assert!(s.limiting.is_subset_of(&s.clarke));
            prop_assert_eq!(s.clarke.hull(), s.bouligand.hull());
        }
    }

    #[test]
    fn stationarity_implications(f in arb_pwa(), xs in prop::collection::vec(-4.0..4.0f64, 3)) {
        for x in probe_points(&f, &xs) {
            let flags = classify_point(&f, x);
            prop_assert!(!flags.d_stationary || flags.l_stationary);
            prop_assert!(!flags.l_stationary || flags.c_stationary);
            // Piecewise affine: d-stationary points are the local minimizers.
            prop_assert_eq!(flags.d_stationary, flags.local_min);
        }
    }

    #[test]
    fn one_sided_slopes_match_differences(f in arb_pwa(), x in -4.0..4.0f64) {
        let h = 1e-7;
        let (l, r) = f.one_sided_slopes(x);
        let near = f.breakpoints().iter().any(|&b| b != x && (b - x).abs() < 2.0 * h);
        prop_assume!(!near);
        prop_assert!(((f.value(x + h) - f.value(x)) / h - r).abs() < 1e-6);
        prop_assert!(((f.value(x) - f.value(x - h)) / h - l).abs() < 1e-6);
    }

    #[test]
    fn max_and_min_are_pointwise(f in arb_pwa(), g in arb_pwa(), x in -5.0..5.0f64) {
        let tol = 1e-9 * (1.0 + x.abs());
        prop_assert!((f.max(&g).value(x) - f.value(x).max(g.value(x))).abs() < tol);
        prop_assert!((f.min(&g).value(x) - f.value(x).min(g.value(x))).abs() < tol);
        prop_assert!((f.neg().value(x) + f.value(x)).abs() < tol);
    }
}

#[test]
fn dataset_file_round_trip() {
    let (data, _) = synth_example2(40, 3).unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    data.write_csv(file.as_file_mut()).unwrap();
    file.flush().unwrap();
    let back = Dataset::load(file.path()).unwrap();
    assert_eq!(back.len(), 40);
    assert!((&back.x - &data.x).amax() < 1e-12);
    assert!((&back.y - &data.y).amax() < 1e-12);
}

#[test]
fn model_json_file_round_trip() {
    let model = diffmax::pwa::example2_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, model.to_json().unwrap()).unwrap();
    let back = PWAModel::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for x in [[0.3, -0.2], [-0.9, 0.7], [0.0, 0.0]] {
        assert!((back.eval(&x) - model.eval(&x)).abs() < 1e-12);
    }
}
