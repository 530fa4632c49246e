use phishlayer::lstm::{gradient_check, train, LstmDims, LstmModel, TrainConfig};
use phishlayer::rng::SplitMix64;
use phishlayer::text_pipeline::{build_vocabulary, preprocess, TokenSequence};
use phishlayer::url_features::Label;
use proptest::prelude::*;

fn seq(indices: Vec<usize>) -> TokenSequence {
    let original_length = indices.iter().filter(|&&i| i != 0).count();
    TokenSequence {
        indices,
        original_length,
    }
}

fn dims(v: usize, e: usize, h: usize, t: usize) -> LstmDims {
    LstmDims {
        vocab_size: v,
        d_embed: e,
        d_hidden: h,
        sequence_length: t,
    }
}

fn random_batch(rng: &mut SplitMix64, n: usize, v: usize, t: usize) -> Vec<(TokenSequence, Label)> {
    (0..n)
        .map(|_| {
            let pad = rng.below(t);
            let indices = (0..t)
                .map(|k| if k < pad { 0 } else { 1 + rng.below(v) })
                .collect();
            (seq(indices), Label::from_bool(rng.chance(0.5)))
        })
        .collect()
}

#[test]
fn forward_matches_hand_computed_reference() {
    let fixture: serde_json::Value =
        serde_json::from_str(include_str!("data/lstm_handset.json")).unwrap();
    let model = LstmModel::from_json(&fixture["model"].to_string()).unwrap();
    for case in fixture["cases"].as_array().unwrap() {
        let tokens: Vec<usize> = serde_json::from_value(case["tokens"].clone()).unwrap();
        let expected = case["probability"].as_f64().unwrap();
        let got = model.predict(&seq(tokens.clone())).unwrap();
        assert!(
            (got - expected).abs() < 1e-12,
            "{tokens:?}: {got} vs {expected}"
        );
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..10u64 {
        let model = LstmModel::new(dims(7, 4, 3, 6), seed);
        let batch = random_batch(&mut SplitMix64::new(seed + 100), 3, 7, 6);
        let report = gradient_check(&model, &batch).unwrap();
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
        assert_eq!(report.checked, model.parameter_count() - 4);
    }
}

#[test]
fn zero_model_gradients_match_finite_differences() {
    let model = LstmModel::zeros(dims(5, 3, 2, 4));
    let batch = random_batch(&mut SplitMix64::new(1), 4, 5, 4);
    let report = gradient_check(&model, &batch).unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

fn toy_dataset() -> Vec<(TokenSequence, Label)> {
    // Token 1 and 2 signal phishing, 3 and 4 signal legitimate.
    let rows: [(&[usize], bool); 8] = [
        (&[0, 0, 1, 5], true),
        (&[0, 2, 5, 6], true),
        (&[1, 2, 6, 5], true),
        (&[0, 0, 6, 1], true),
        (&[0, 0, 3, 5], false),
        (&[0, 4, 5, 6], false),
        (&[3, 4, 6, 5], false),
        (&[0, 0, 6, 3], false),
    ];
    rows.iter()
        .map(|(t, y)| (seq(t.to_vec()), Label::from_bool(*y)))
        .collect()
}

#[test]
fn overfits_a_tiny_separable_set() {
    let mut model = LstmModel::new(dims(6, 8, 8, 4), 5);
    let config = TrainConfig {
        epochs: 200,
        batch_size: 8,
        learning_rate: 0.01,
        validation_fraction: 0.0,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &toy_dataset(), &config).unwrap();
    let last = report.metrics.last().unwrap();
    let (loss, acc) = model.evaluate(&toy_dataset()).unwrap();
    assert!(loss < 0.05, "final loss {loss}, last epoch {last:?}");
    assert_eq!(acc, 1.0);
    assert!(model.embedding[..8].iter().all(|&x| x == 0.0));
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut model = LstmModel::new(dims(6, 4, 4, 4), 11);
        let config = TrainConfig {
            epochs: 5,
            batch_size: 3,
            seed: 4,
            validation_fraction: 0.25,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &toy_dataset(), &config).unwrap();
        (model, report)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(ra.validation_indices.len(), 2);
    assert_eq!(ra.metrics_jsonl().lines().count(), 5);
    let first: serde_json::Value =
        serde_json::from_str(ra.metrics_jsonl().lines().next().unwrap()).unwrap();
    assert_eq!(first["epoch"], 1);
    assert!(first["val_accuracy"].is_number());
}

#[test]
fn training_needs_both_classes() {
    let mut model = LstmModel::new(dims(6, 4, 4, 4), 1);
    let one_class: Vec<_> = toy_dataset().into_iter().take(4).collect();
    assert!(train(&mut model, &one_class, &TrainConfig::default()).is_err());
}

#[test]
fn save_and_load_with_vocabulary() {
    let docs: Vec<Vec<String>> = ["verify your account now", "lunch at noon tomorrow"]
        .iter()
        .map(|t| preprocess(t))
        .collect();
    let vocab = build_vocabulary(&docs, 100).unwrap();
    let model = LstmModel::new(dims(vocab.len(), 4, 3, 10), 2).with_vocabulary(vocab);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("text_model.json");
    model.save(&path).unwrap();
    let loaded = LstmModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    let text = "Please verify your account";
    assert_eq!(
        loaded.predict_text(text).unwrap(),
        model.predict_text(text).unwrap()
    );

    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(raw["w_i"]["shape"], serde_json::json!([4, 3]));
    assert_eq!(raw["u_o"]["shape"], serde_json::json!([3, 3]));
}

#[test]
fn rejects_malformed_model_files() {
    let model = LstmModel::new(dims(3, 2, 2, 2), 0);
    let mut raw: serde_json::Value = serde_json::from_str(&model.to_json()).unwrap();
    raw["embedding"]["data"][0] = serde_json::json!(0.5);
    assert!(LstmModel::from_json(&raw.to_string()).is_err());
    let mut raw: serde_json::Value = serde_json::from_str(&model.to_json()).unwrap();
    raw["w_f"]["shape"] = serde_json::json!([2, 3]);
    assert!(LstmModel::from_json(&raw.to_string()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probability_is_strictly_inside_unit_interval(
        seed in any::<u64>(),
        tokens in proptest::collection::vec(0usize..=9, 12),
        scale in 0.1f64..40.0,
    ) {
        let mut model = LstmModel::new(dims(9, 4, 4, 12), seed);
        model.w.iter_mut().for_each(|x| *x *= scale);
        model.w_out.iter_mut().for_each(|x| *x *= scale);
        let p = model.predict(&seq(tokens)).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }
}
