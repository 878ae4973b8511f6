use proptest::prelude::*;
use triboost::datagen::{simulate, SimSpec};
use triboost::io::{model_from_json, model_to_json, read_csv, write_dataset};
use triboost::{fit, Dataset, FitConfig, LeafConstraint, Matrix, TreeConfig, UpdateMode};

#[test]
fn saved_models_predict_identically() {
    for name in ["tobit_f1", "msr_f3", "multi_classif_fht", "gamma_r"] {
        let sim = simulate(&SimSpec::from_name(name, 1000, 6).unwrap()).unwrap();
        let cfg = FitConfig::new(UpdateMode::Newton, 15, 0.3, TreeConfig::new(5, LeafConstraint::EquivalentWeighted, 5.0));
        let model = fit(&sim.dataset, &sim.loss, &cfg).unwrap();
        let loaded = model_from_json(&model_to_json(&model).unwrap()).unwrap();
        assert_eq!(loaded, model);
        let a = model.predict(&sim.dataset.features, None).unwrap();
        let b = loaded.predict(&sim.dataset.features, None).unwrap();
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()), "{name}");
    }
}

#[test]
fn corrupted_models_are_rejected() {
    let sim = simulate(&SimSpec::from_name("poisson_r", 100, 6).unwrap()).unwrap();
    let cfg = FitConfig::new(UpdateMode::Gradient, 2, 0.3, TreeConfig::new(2, LeafConstraint::RawCount, 1.0));
    let json = model_to_json(&fit(&sim.dataset, &sim.loss, &cfg).unwrap()).unwrap();
    let bad = json.replacen("\"num_features\":2", "\"num_features\":1", 1);
    assert!(model_from_json(&bad).is_err());
    assert!(model_from_json(&json[..json.len() / 2]).is_err());
}

proptest! {
    #[test]
    fn dataset_csv_round_trips_bit_exact(
        rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 1..40)
    ) {
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 0.5).collect();
        let d = Dataset::unnamed(Matrix::from_rows(&rows).unwrap(), y).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &d, "y").unwrap();
        let back = read_csv(buf.as_slice(), "y", None, false).unwrap();
        prop_assert_eq!(back.feature_names, d.feature_names);
        for (a, b) in back.features.as_slice().iter().zip(d.features.as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in back.response.iter().zip(&d.response) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
