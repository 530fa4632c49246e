//! End-to-end run over served fixtures.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use crate::content_fetcher::{FetchError, FetchLimits, Fetcher};
use crate::media::Transcribers;
use crate::orchestrator::{
    scan_detailed, summarize, BatchReport, BatchSummary, CategoryStats, LayerCounts, Models,
    ScanConfig, ScanTarget, ScanVerdict,
};
use crate::url_features::Label;

use super::fixtures::{FixtureCategory, FixtureSite};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("fixture server unreachable at {url}: {detail}")]
    Unreachable { url: String, detail: String },
    #[error("bad base url {0}")]
    BaseUrl(String),
    #[error("cannot hash {path}: {detail}")]
    Hash { path: String, detail: String },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub forest_sha256: String,
    pub lstm_sha256: String,
    pub vocabulary_sha256: String,
    pub vocabulary_size: usize,
    pub selected_features: Vec<usize>,
}

impl ModelMetadata {
    /// Hashes the serialized forms of in-memory models.
    pub fn from_models(models: &Models) -> Self {
        let vocab = models.lstm.vocabulary.as_ref();
        Self {
            forest_sha256: sha256_hex(models.forest.to_json().as_bytes()),
            lstm_sha256: sha256_hex(models.lstm.to_json().as_bytes()),
            vocabulary_sha256: vocab
                .map_or_else(String::new, |v| sha256_hex(v.to_json().as_bytes())),
            vocabulary_size: vocab.map_or(0, |v| v.len()),
            selected_features: models.forest.feature_indices.clone(),
        }
    }

    /// Hashes model files as stored on disk. The vocabulary file is the one
    /// written beside the text model.
    pub fn from_files(
        models: &Models,
        forest: &Path,
        lstm: &Path,
    ) -> Result<Self, EvaluationError> {
        let hash = |p: &Path| {
            std::fs::read(p)
                .map(|b| sha256_hex(&b))
                .map_err(|e| EvaluationError::Hash {
                    path: p.display().to_string(),
                    detail: e.to_string(),
                })
        };
        let stem = lstm.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let vocab_path = lstm.with_file_name(format!("{stem}.vocab.json"));
        Ok(Self {
            forest_sha256: hash(forest)?,
            lstm_sha256: hash(lstm)?,
            vocabulary_sha256: hash(&vocab_path)?,
            ..Self::from_models(models)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteResult {
    pub category: FixtureCategory,
    pub expected_label: Label,
    pub verdict: ScanVerdict,
    pub correct: bool,
    /// Whether the recovered merged text equals `sidecars/merged.txt`.
    pub sidecar_match: bool,
    pub media_count: usize,
    pub media_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub base_url: String,
    pub sites: Vec<SiteResult>,
    pub per_category: BTreeMap<String, CategoryStats>,
    pub per_layer: LayerCounts,
    pub summary: BatchSummary,
    pub models: ModelMetadata,
    pub phishing_detected: usize,
    pub phishing_total: usize,
    pub false_positives: usize,
    /// Each unmet expectation, in words.
    pub problems: Vec<String>,
    pub passed: bool,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let batch = BatchReport {
            targets: self
                .sites
                .iter()
                .map(|s| target_for(s.category, s.expected_label, &s.verdict.url))
                .collect(),
            verdicts: self.sites.iter().map(|s| s.verdict.clone()).collect(),
            summary: self.summary.clone(),
        };
        let mut out = batch.table();
        out += &format!(
            "phishing detected {}/{}, false positives {}, sidecars matched {}/{}\n",
            self.phishing_detected,
            self.phishing_total,
            self.false_positives,
            self.sites.iter().filter(|s| s.sidecar_match).count(),
            self.sites.len()
        );
        for p in &self.problems {
            out += &format!("problem: {p}\n");
        }
        out += if self.passed {
            "result: PASS\n"
        } else {
            "result: FAIL\n"
        };
        out
    }
}

fn target_for(category: FixtureCategory, label: Label, url: &str) -> ScanTarget {
    ScanTarget {
        url: url.to_string(),
        label: Some(label),
        category: Some(category.as_str().to_string()),
    }
}

/// Scans every fixture under `base_url`, checks each verdict against its
/// expected label and the recovered text against its sidecar.
pub fn evaluate_end_to_end(
    fixtures: &[FixtureSite],
    base_url: &str,
    models: &Models,
    metadata: ModelMetadata,
    fetcher: &dyn Fetcher,
    transcribers: &Transcribers,
    config: &ScanConfig,
) -> Result<EvaluationReport, EvaluationError> {
    let base =
        Url::parse(base_url).map_err(|e| EvaluationError::BaseUrl(format!("{base_url}: {e}")))?;
    let probe_limits = FetchLimits {
        max_bytes: 1024,
        ..config.page_limits
    };
    match fetcher.get(&base, &probe_limits) {
        Ok(_) | Err(FetchError::Status(_)) => {}
        Err(e) => {
            return Err(EvaluationError::Unreachable {
                url: base_url.to_string(),
                detail: e.to_string(),
            })
        }
    }

    let urls: Vec<String> = fixtures
        .iter()
        .map(|f| {
            base.join(&f.path)
                .map(String::from)
                .map_err(|e| EvaluationError::BaseUrl(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let outcomes: Vec<_> = urls
        .par_iter()
        .map(|u| scan_detailed(u, models, fetcher, transcribers, config))
        .collect();

    let targets: Vec<ScanTarget> = fixtures
        .iter()
        .zip(&urls)
        .map(|(f, u)| target_for(f.category, f.expected_label, u))
        .collect();
    let verdicts: Vec<ScanVerdict> = outcomes.iter().map(|o| o.verdict.clone()).collect();
    let summary = summarize(&targets, &verdicts);

    let mut problems = Vec::new();
    let mut sites = Vec::new();
    for (f, o) in fixtures.iter().zip(outcomes) {
        let v = o.verdict;
        let (sidecar_match, media_count, media_failures) = match &o.bundle {
            Some(b) => (
                b.merged_text() == f.sidecars.merged,
                b.media_count(),
                b.failures.len(),
            ),
            None => (false, 0, 0),
        };
        let correct = v.final_label == f.expected_label;
        let name = f.category.as_str();
        if !correct {
            problems.push(format!(
                "{name}: expected {:?}, got {:?}",
                f.expected_label, v.final_label
            ));
        }
        if !sidecar_match {
            problems.push(format!("{name}: recovered text differs from sidecar"));
        }
        if media_failures > 0 {
            problems.push(format!("{name}: {media_failures} media item(s) failed"));
        }
        if f.category == FixtureCategory::TextOnly && v.detected_at_layer != Some(4) {
            problems.push(format!(
                "{name}: expected detection at layer 4, got {:?}",
                v.detected_at_layer
            ));
        }
        sites.push(SiteResult {
            category: f.category,
            expected_label: f.expected_label,
            verdict: v,
            correct,
            sidecar_match,
            media_count,
            media_failures,
        });
    }

    let phishing: Vec<&SiteResult> = sites
        .iter()
        .filter(|s| s.expected_label.is_phishing())
        .collect();
    let phishing_detected = phishing
        .iter()
        .filter(|s| s.verdict.final_label.is_phishing())
        .count();
    let false_positives = sites
        .iter()
        .filter(|s| !s.expected_label.is_phishing() && s.verdict.final_label.is_phishing())
        .count();
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    Ok(EvaluationReport {
        timestamp,
        base_url: base_url.to_string(),
        per_category: summary.per_category.clone(),
        per_layer: summary.per_layer,
        summary,
        models: metadata,
        phishing_total: phishing.len(),
        phishing_detected,
        false_positives,
        passed: problems.is_empty(),
        problems,
        sites,
    })
}
