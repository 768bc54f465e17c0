mod common;

use common::*;
use hedonic::explain::exact_shap;
use hedonic::models::{fit_linear, Family, Regressor};
use hedonic::preprocess::Dataset;
use hedonic::rng;
use proptest::prelude::*;

fn fixture(seed: u64, family: Family) -> (hedonic::models::Model, Dataset, Vec<Vec<f64>>) {
    let mut rng = rng::stream(seed, 21);
    let m = 2 + (seed % 5) as usize;
    let ds = random_dataset(&mut rng, 40, m);
    let model = small_model(family, &ds, seed);
    let background = ds.subset(&[0, 3, 5, 8, 13, 21]);
    let rows = ds.rows[30..33].to_vec();
    (model, background, rows)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn efficiency_and_oracle(seed in any::<u64>(), family in prop::sample::select(Family::ALL.to_vec())) {
        let (model, background, rows) = fixture(seed, family);
        let f = |z: &[f64]| model.predict_row(z);
        for x in &rows {
            let e = exact_shap(&model, x, &background).unwrap();
            let total: f64 = e.phi.iter().sum();
            prop_assert!(close(total, e.prediction - e.base_value, 1e-6));
            let oracle = permutation_shapley(&f, x, &background.rows);
            for (a, b) in e.phi.iter().zip(&oracle) {
                prop_assert!(close(*a, *b, 1e-9), "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn dummy_feature_gets_zero(seed in any::<u64>(), family in prop::sample::select(Family::ALL.to_vec())) {
        let (model, background, rows) = fixture(seed, family);
        let wrapped = IgnoreFeature { inner: &model, dummy: 0 };
        for x in &rows {
            let e = exact_shap(&wrapped, x, &background).unwrap();
            prop_assert_eq!(e.phi[0], 0.0);
        }
    }

    #[test]
    fn symmetric_features_share_credit(seed in any::<u64>(), family in prop::sample::select(Family::ALL.to_vec())) {
        let (model, background, rows) = fixture(seed, family);
        let sym = Symmetrized { inner: &model, i: 0, j: 1 };
        let mut bg = background.rows.clone();
        bg.extend(background.rows.iter().map(|r| {
            let mut s = r.clone();
            s.swap(0, 1);
            s
        }));
        let bg = Dataset::new(background.feature_names.clone(), bg.clone(), vec![0.0; bg.len()]).unwrap();
        for x in &rows {
            let mut x = x.clone();
            x[1] = x[0];
            let e = exact_shap(&sym, &x, &bg).unwrap();
            prop_assert!(close(e.phi[0], e.phi[1], 1e-9), "{} vs {}", e.phi[0], e.phi[1]);
        }
    }

    #[test]
    fn attributions_are_linear(seed in any::<u64>()) {
        let (a, background, rows) = fixture(seed, Family::Gbt);
        let (b, _, _) = fixture(seed, Family::Tree);
        let sum = Sum(&a, &b);
        for x in &rows {
            let ea = exact_shap(&a, x, &background).unwrap();
            let eb = exact_shap(&b, x, &background).unwrap();
            let es = exact_shap(&sum, x, &background).unwrap();
            for j in 0..x.len() {
                prop_assert!(close(es.phi[j], ea.phi[j] + eb.phi[j], 1e-9));
            }
        }
    }
}

#[test]
fn linear_model_closed_form() {
    let ds = random_dataset(&mut rng::stream(3, 1), 60, 6);
    let model = fit_linear(&ds).unwrap();
    let background = ds.subset(&(0..20).collect::<Vec<_>>());
    let means: Vec<f64> = (0..6)
        .map(|j| background.rows.iter().map(|r| r[j]).sum::<f64>() / 20.0)
        .collect();
    for x in &ds.rows[20..] {
        let e = exact_shap(&model, x, &background).unwrap();
        for j in 0..6 {
            let expected = model.coefficients[j] * (x[j] - means[j]);
            assert!(close(e.phi[j], expected, 1e-8), "{} vs {expected}", e.phi[j]);
        }
    }
}
