use phishlayer::content_fetcher::InMemoryFetcher;
use phishlayer::lstm::{LstmDims, LstmModel};
use phishlayer::media::{encode_container, MediaKind, Transcribers};
use phishlayer::orchestrator::{scan, scan_batch, LayerOne, Models, ScanConfig, ScanTarget};
use phishlayer::random_forest::{ForestModel, TreeNode};
use phishlayer::text_pipeline::Vocabulary;
use phishlayer::url_features::{FeatureSchema, Label};
use proptest::prelude::*;

/// Forest whose every tree is one leaf voting `url_phishing`.
fn constant_forest(url_phishing: bool) -> ForestModel {
    let counts = if url_phishing { [0, 3] } else { [3, 0] };
    ForestModel {
        n_trees: 3,
        max_depth: None,
        random_state: 0,
        feature_indices: vec![0],
        trees: vec![
            TreeNode::Leaf {
                class_counts: counts
            };
            3
        ],
        n_features: FeatureSchema::reference().len(),
        schema: None,
    }
}

/// Zero-weight LSTM: the output is `sigmoid(b_out)` for `bias`, except
/// that a message containing "password" gets a strong positive push.
fn keyword_lstm(bias: f64) -> LstmModel {
    let vocab = Vocabulary::from_ranked(vec!["password".into(), "librari".into()], 10).unwrap();
    let dims = LstmDims {
        vocab_size: 2,
        d_embed: 1,
        d_hidden: 1,
        sequence_length: 8,
    };
    let mut m = LstmModel::zeros(dims).with_vocabulary(vocab);
    m.b_out = bias;
    // input gate and candidate open on token 1 only
    m.embedding[1] = 4.0;
    m.w = vec![4.0, 0.0, 4.0, 4.0];
    m.b = vec![-2.0, 0.0, 0.0, 0.0];
    m.w_out = vec![12.0];
    m
}

fn page(body: &str, extra: &str) -> String {
    format!("<html><body><p>{body}</p>{extra}</body></html>")
}

#[test]
fn text_only_page_is_caught_at_layer_four() {
    let models = Models::new(constant_forest(false), keyword_lstm(-4.0)).unwrap();
    let mut f = InMemoryFetcher::new();
    f.insert(
        "http://example.com/a/",
        200,
        page("reset your password", ""),
    );
    f.insert("http://example.com/b/", 200, page("library hours", ""));
    let cfg = ScanConfig::default();
    let a = scan(
        "http://example.com/a/",
        &models,
        &f,
        &Transcribers::mock(),
        &cfg,
    );
    assert_eq!(a.final_label, Label::Phishing);
    assert_eq!(a.detected_at_layer, Some(4));
    assert!(matches!(
        a.layer1,
        LayerOne::Ok {
            label: Label::Legitimate,
            ..
        }
    ));
    assert!(a.layer4.as_ref().unwrap().probability >= 0.5);

    let b = scan(
        "http://example.com/b/",
        &models,
        &f,
        &Transcribers::mock(),
        &cfg,
    );
    assert_eq!(b.final_label, Label::Legitimate);
    assert_eq!(b.detected_at_layer, None);
}

#[test]
fn media_text_reaches_the_text_layer() {
    let models = Models::new(constant_forest(false), keyword_lstm(-4.0)).unwrap();
    let mut f = InMemoryFetcher::new();
    f.insert(
        "http://example.com/g/",
        200,
        page(
            "gallery",
            "<img src=\"p.png\"><video src=\"v.mp4\"></video>",
        ),
    );
    f.insert(
        "http://example.com/g/p.png",
        200,
        encode_container(MediaKind::Image, "nothing here"),
    );
    f.insert(
        "http://example.com/g/v.mp4",
        200,
        encode_container(MediaKind::Video, "tell me your password"),
    );
    let v = scan(
        "http://example.com/g/",
        &models,
        &f,
        &Transcribers::mock(),
        &ScanConfig::default(),
    );
    assert_eq!(v.detected_at_layer, Some(4));
    assert_eq!(
        (
            v.transcripts.ocr_texts,
            v.transcripts.video_transcripts,
            v.transcripts.failures
        ),
        (1, 1, 0)
    );
}

#[test]
fn empty_page_with_flagged_url_is_caught_at_layer_one() {
    let models = Models::new(constant_forest(true), keyword_lstm(-4.0)).unwrap();
    let mut f = InMemoryFetcher::new();
    f.insert("http://10.0.0.1/x", 200, "<html><body></body></html>");
    let v = scan(
        "http://10.0.0.1/x",
        &models,
        &f,
        &Transcribers::mock(),
        &ScanConfig::default(),
    );
    assert_eq!(v.final_label, Label::Phishing);
    assert_eq!(v.detected_at_layer, Some(1));
    // default keeps scanning for telemetry
    assert!(v.layer4.is_some());
    assert_eq!(f.requests().len(), 1);
}

#[test]
fn short_circuit_issues_no_requests() {
    let models = Models::new(constant_forest(true), keyword_lstm(-4.0)).unwrap();
    let f = InMemoryFetcher::new();
    let cfg = ScanConfig {
        short_circuit: true,
        ..ScanConfig::default()
    };
    let v = scan(
        "http://10.0.0.1/x",
        &models,
        &f,
        &Transcribers::mock(),
        &cfg,
    );
    assert_eq!(v.detected_at_layer, Some(1));
    assert!(v.layer4.is_none());
    assert!(f.requests().is_empty());
}

#[test]
fn fetch_failure_falls_back_to_layer_one() {
    let models = Models::new(constant_forest(false), keyword_lstm(-4.0)).unwrap();
    let f = InMemoryFetcher::new();
    let v = scan(
        "http://example.com/gone/",
        &models,
        &f,
        &Transcribers::mock(),
        &ScanConfig::default(),
    );
    assert_eq!(v.final_label, Label::Legitimate);
    assert!(v.layer4.is_none());
    assert!(
        v.errors.iter().any(|e| e.contains("layer 1 only")),
        "{:?}",
        v.errors
    );
}

#[test]
fn missing_vocabulary_is_a_configuration_error() {
    let mut lstm = keyword_lstm(0.0);
    lstm.vocabulary = None;
    assert!(Models::new(constant_forest(false), lstm).is_err());
    let mut forest = constant_forest(false);
    forest.n_features = 3;
    assert!(Models::new(forest, keyword_lstm(0.0)).is_err());
}

#[test]
fn batch_accounting() {
    let models = Models::new(constant_forest(false), keyword_lstm(-4.0)).unwrap();
    let empty = scan_batch(
        &[],
        &models,
        &InMemoryFetcher::new(),
        &Transcribers::mock(),
        &ScanConfig::default(),
    );
    assert!(empty.verdicts.is_empty());
    assert_eq!(empty.summary.accuracy, None);

    let mut f = InMemoryFetcher::new();
    let mut targets = Vec::new();
    for i in 0..8 {
        let url = format!("http://example.com/p{i}/");
        let phishing = i % 2 == 0;
        f.insert(
            &url,
            200,
            page(if phishing { "your password" } else { "library" }, ""),
        );
        targets.push(ScanTarget {
            url,
            label: Some(Label::from_bool(phishing)),
            category: Some(if phishing { "bad" } else { "good" }.into()),
        });
    }
    let r = scan_batch(
        &targets,
        &models,
        &f,
        &Transcribers::mock(),
        &ScanConfig::default(),
    );
    assert_eq!(r.summary.confusion.total(), 8);
    assert_eq!(r.summary.confusion.true_positive, 4);
    assert_eq!(r.summary.accuracy, Some(1.0));
    assert_eq!(r.summary.per_layer.layer4, 4);
    assert_eq!(r.summary.per_category["bad"].correct, 4);
    for (t, v) in targets.iter().zip(&r.verdicts) {
        assert_eq!(t.url, v.url);
    }
    assert!(r.table().contains("accuracy 100.0% over 8 labeled"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fusion_is_an_or_of_the_two_layers(url_flag: bool, bias in -6.0f64..6.0, keyword: bool) {
        let models = Models::new(constant_forest(url_flag), keyword_lstm(bias)).unwrap();
        let mut f = InMemoryFetcher::new();
        f.insert("http://example.com/", 200, page(if keyword { "password" } else { "hello" }, ""));
        let v = scan("http://example.com/", &models, &f, &Transcribers::mock(), &ScanConfig::default());
        let text_flag = v.layer4.as_ref().unwrap().probability >= 0.5;
        prop_assert_eq!(v.final_label.is_phishing(), url_flag || text_flag);
        prop_assert_eq!(v.final_label.is_phishing(), v.detected_at_layer.is_some());
        if url_flag {
            prop_assert_eq!(v.detected_at_layer, Some(1));
        }
    }
}
