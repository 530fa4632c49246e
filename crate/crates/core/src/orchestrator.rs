//! The layered scan: URL features, page fetch, media transcription, text
//! classification, and OR-fusion of the URL and text verdicts.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::content_fetcher::{scrape_page, FetchLimits, Fetcher};
use crate::lstm::LstmModel;
use crate::media::{collect_transcripts, Transcribers, TranscriptBundle};
use crate::random_forest::ForestModel;
use crate::url_features::{extract_lexical_features, FeatureSchema, Label};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Text verdict is phishing when the LSTM output is at least this.
    pub layer4_threshold: f64,
    /// Stop after a phishing URL verdict without touching the network.
    pub short_circuit: bool,
    pub page_limits: FetchLimits,
    pub media_limits: FetchLimits,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            layer4_threshold: 0.5,
            short_circuit: false,
            page_limits: FetchLimits::page(),
            media_limits: FetchLimits::media(),
        }
    }
}

/// Both classifiers plus the schema the forest was trained on.
pub struct Models {
    pub forest: ForestModel,
    pub lstm: LstmModel,
    pub schema: FeatureSchema,
}

impl Models {
    pub fn new(forest: ForestModel, lstm: LstmModel) -> Result<Self, ScanError> {
        let schema = match &forest.schema {
            Some(names) => {
                FeatureSchema::from_names(names).map_err(|e| ScanError::Config(e.to_string()))?
            }
            None => FeatureSchema::reference(),
        };
        if schema.len() != forest.n_features {
            return Err(ScanError::Config(format!(
                "forest expects {} features, schema has {}",
                forest.n_features,
                schema.len()
            )));
        }
        if lstm.vocabulary.is_none() {
            return Err(ScanError::Config("text model has no vocabulary".into()));
        }
        Ok(Self {
            forest,
            lstm,
            schema,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LayerOne {
    Ok {
        label: Label,
        /// Fraction of trees voting phishing.
        confidence: f64,
        /// Selected features that could not be computed and were set to 0.
        imputed_selected: usize,
    },
    Unavailable {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFour {
    pub probability: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub body_chars: usize,
    pub image_urls: usize,
    pub video_urls: usize,
    pub ocr_texts: usize,
    pub video_transcripts: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LayerTimings {
    pub layer1_ms: u64,
    pub layer2_ms: u64,
    pub layer3_ms: u64,
    pub layer4_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanVerdict {
    pub url: String,
    pub final_label: Label,
    pub layer1: LayerOne,
    /// `None` when the text layer was skipped.
    pub layer4: Option<LayerFour>,
    /// 1, 4, or `None` when nothing flagged. Layer 1 wins when both flag.
    pub detected_at_layer: Option<u8>,
    pub transcripts: TranscriptSummary,
    pub timings: LayerTimings,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    pub verdict: ScanVerdict,
    /// Present when the page was fetched.
    pub bundle: Option<TranscriptBundle>,
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn layer_one(url: &str, models: &Models) -> LayerOne {
    let extraction = match extract_lexical_features(url, &models.schema) {
        Ok(x) => x,
        Err(e) => {
            return LayerOne::Unavailable {
                reason: e.to_string(),
            }
        }
    };
    match models.forest.predict(&extraction.vector.values) {
        Ok(p) => LayerOne::Ok {
            label: p.label,
            confidence: p.confidence,
            imputed_selected: models
                .forest
                .feature_indices
                .iter()
                .filter(|i| extraction.imputed.contains(i))
                .count(),
        },
        Err(e) => LayerOne::Unavailable {
            reason: e.to_string(),
        },
    }
}

/// Runs every layer for one URL and keeps the transcript bundle.
pub fn scan_detailed(
    url: &str,
    models: &Models,
    fetcher: &dyn Fetcher,
    transcribers: &Transcribers,
    config: &ScanConfig,
) -> ScanOutcome {
    let mut timings = LayerTimings::default();
    let mut errors = Vec::new();

    let start = Instant::now();
    let layer1 = layer_one(url, models);
    timings.layer1_ms = elapsed_ms(start);
    let url_flags = matches!(
        layer1,
        LayerOne::Ok {
            label: Label::Phishing,
            ..
        }
    );
    if let LayerOne::Unavailable { reason } = &layer1 {
        errors.push(format!("layer 1 unavailable: {reason}"));
    }

    let mut bundle = None;
    let mut transcripts = TranscriptSummary::default();
    let mut layer4 = None;
    if !(url_flags && config.short_circuit) {
        let start = Instant::now();
        let page = Url::parse(url)
            .map_err(|e| format!("invalid URL: {e}"))
            .and_then(|u| {
                scrape_page(fetcher, &u, &config.page_limits)
                    .map_err(|e| format!("fetch failed: {e}"))
            });
        timings.layer2_ms = elapsed_ms(start);
        match page {
            Err(e) => errors.push(format!("{e}; verdict uses layer 1 only")),
            Ok(page) => {
                if page.fetch.truncated {
                    errors.push(format!("page truncated at {} bytes", page.fetch.bytes_read));
                }
                let start = Instant::now();
                let b = collect_transcripts(&page, fetcher, transcribers, &config.media_limits);
                timings.layer3_ms = elapsed_ms(start);
                for f in &b.failures {
                    errors.push(format!("media {}: {}", f.source_url, f.detail));
                }
                transcripts = TranscriptSummary {
                    body_chars: b.body_text.chars().count(),
                    image_urls: page.image_urls.len(),
                    video_urls: page.video_urls.len(),
                    ocr_texts: b.ocr_texts.len(),
                    video_transcripts: b.video_transcripts.len(),
                    failures: b.failures.len(),
                };

                let start = Instant::now();
                match models.lstm.predict_text(&b.merged_text()) {
                    Ok(p) => {
                        layer4 = Some(LayerFour {
                            probability: p,
                            label: Label::from_bool(p >= config.layer4_threshold),
                        })
                    }
                    Err(e) => errors.push(format!("layer 4 failed: {e}")),
                }
                timings.layer4_ms = elapsed_ms(start);
                bundle = Some(b);
            }
        }
    }

    let text_flags = layer4.as_ref().is_some_and(|l| l.label.is_phishing());
    let detected_at_layer = if url_flags {
        Some(1)
    } else if text_flags {
        Some(4)
    } else {
        None
    };
    ScanOutcome {
        verdict: ScanVerdict {
            url: url.to_string(),
            final_label: Label::from_bool(detected_at_layer.is_some()),
            layer1,
            layer4,
            detected_at_layer,
            transcripts,
            timings,
            errors,
        },
        bundle,
    }
}

pub fn scan(
    url: &str,
    models: &Models,
    fetcher: &dyn Fetcher,
    transcribers: &Transcribers,
    config: &ScanConfig,
) -> ScanVerdict {
    scan_detailed(url, models, fetcher, transcribers, config).verdict
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanTarget {
    pub url: String,
    pub label: Option<Label>,
    pub category: Option<String>,
}

impl ScanTarget {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            label: None,
            category: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryStats {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LayerCounts {
    pub layer1: usize,
    pub layer4: usize,
    pub none: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: usize,
    pub labeled: usize,
    /// Over labeled targets; `None` when none are labeled.
    pub accuracy: Option<f64>,
    pub confusion: Confusion,
    /// Keyed by category; unlabeled or uncategorized targets are left out.
    pub per_category: BTreeMap<String, CategoryStats>,
    pub per_layer: LayerCounts,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchReport {
    pub targets: Vec<ScanTarget>,
    pub verdicts: Vec<ScanVerdict>,
    pub summary: BatchSummary,
}

pub fn summarize(targets: &[ScanTarget], verdicts: &[ScanVerdict]) -> BatchSummary {
    let mut s = BatchSummary {
        total: verdicts.len(),
        ..BatchSummary::default()
    };
    for (t, v) in targets.iter().zip(verdicts) {
        match v.detected_at_layer {
            Some(1) => s.per_layer.layer1 += 1,
            Some(_) => s.per_layer.layer4 += 1,
            None => s.per_layer.none += 1,
        }
        let Some(truth) = t.label else { continue };
        s.labeled += 1;
        let c = &mut s.confusion;
        match (truth.is_phishing(), v.final_label.is_phishing()) {
            (true, true) => c.true_positive += 1,
            (false, true) => c.false_positive += 1,
            (false, false) => c.true_negative += 1,
            (true, false) => c.false_negative += 1,
        }
        if let Some(cat) = &t.category {
            let e = s.per_category.entry(cat.clone()).or_default();
            e.total += 1;
            e.correct += (truth == v.final_label) as usize;
        }
    }
    for e in s.per_category.values_mut() {
        e.accuracy = e.correct as f64 / e.total as f64;
    }
    if s.labeled > 0 {
        let c = &s.confusion;
        s.accuracy = Some((c.true_positive + c.true_negative) as f64 / s.labeled as f64);
    }
    s
}

/// Scans all targets (concurrently) and reports verdicts in input order.
pub fn scan_batch(
    targets: &[ScanTarget],
    models: &Models,
    fetcher: &dyn Fetcher,
    transcribers: &Transcribers,
    config: &ScanConfig,
) -> BatchReport {
    let verdicts: Vec<ScanVerdict> = targets
        .par_iter()
        .map(|t| scan(&t.url, models, fetcher, transcribers, config))
        .collect();
    BatchReport {
        summary: summarize(targets, &verdicts),
        targets: targets.to_vec(),
        verdicts,
    }
}

impl BatchReport {
    /// Plain-text table, one row per verdict, then the summary lines.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:<11} {:<11} {:>7} {:>7} {:>6}  {}\n",
            "category", "expected", "verdict", "l1_conf", "l4_prob", "layer", "url"
        );
        for (t, v) in self.targets.iter().zip(&self.verdicts) {
            let l1 = match &v.layer1 {
                LayerOne::Ok { confidence, .. } => format!("{confidence:.2}"),
                LayerOne::Unavailable { .. } => "n/a".into(),
            };
            let l4 = v
                .layer4
                .as_ref()
                .map_or("n/a".into(), |l| format!("{:.3}", l.probability));
            let label = |l: Label| {
                if l.is_phishing() {
                    "phishing"
                } else {
                    "legitimate"
                }
            };
            out += &format!(
                "{:<14} {:<11} {:<11} {:>7} {:>7} {:>6}  {}\n",
                t.category.as_deref().unwrap_or("-"),
                t.label.map_or("-", label),
                label(v.final_label),
                l1,
                l4,
                v.detected_at_layer.map_or("none".into(), |d| d.to_string()),
                v.url
            );
        }
        let s = &self.summary;
        if let Some(acc) = s.accuracy {
            out += &format!("accuracy {:.1}% over {} labeled\n", acc * 100.0, s.labeled);
        }
        out += &format!(
            "detected at layer 1: {}, layer 4: {}, not detected: {}\n",
            s.per_layer.layer1, s.per_layer.layer4, s.per_layer.none
        );
        out
    }
}
