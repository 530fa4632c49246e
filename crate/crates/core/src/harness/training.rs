//! Model training entry points shared by the CLI and the test suites.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lstm::{train, LstmDims, LstmError, LstmModel, TrainConfig, TrainReport};
use crate::random_forest::{train_forest, ForestError, ForestModel, ForestParams};
use crate::split::stratified_split;
use crate::text_pipeline::{build_vocabulary, encode, preprocess, TextError, TokenSequence};
use crate::url_features::{
    chi2_scores, select_features, FeatureError, FeatureSelection, Label, SelectionPool,
    UrlFeatureVector,
};

use super::datasets::{clamp_negative, TextDataset, UrlDataset};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrlTrainingConfig {
    pub k: usize,
    pub pool: SelectionPool,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub forest: ForestParams,
}

impl Default for UrlTrainingConfig {
    fn default() -> Self {
        Self {
            k: 19,
            pool: SelectionPool::LiveOnly,
            train_fraction: 0.8,
            split_seed: 0,
            forest: ForestParams::default(),
        }
    }
}

/// Train/test partition with a selection scored on the training part only.
pub struct PreparedSplit {
    pub train: Vec<UrlFeatureVector>,
    pub test: Vec<UrlFeatureVector>,
    pub selection: FeatureSelection,
    /// Negative cells raised to zero before scoring.
    pub clamped: usize,
}

pub fn prepare_split(
    dataset: &UrlDataset,
    k: usize,
    pool: SelectionPool,
    train_fraction: f64,
    split_seed: u64,
) -> Result<PreparedSplit, TrainingError> {
    let labels: Vec<Label> = dataset
        .vectors
        .iter()
        .map(|v| {
            v.label
                .ok_or_else(|| FeatureError::Argument("unlabeled row".into()))
        })
        .collect::<Result<_, _>>()?;
    let (train_idx, test_idx) = stratified_split(&labels, train_fraction, split_seed);
    let train: Vec<UrlFeatureVector> = train_idx
        .iter()
        .map(|&i| dataset.vectors[i].clone())
        .collect();
    let test: Vec<UrlFeatureVector> = test_idx
        .iter()
        .map(|&i| dataset.vectors[i].clone())
        .collect();
    let (clamped_rows, clamped) = clamp_negative(&train);
    let scores = chi2_scores(&clamped_rows)?;
    let selection = select_features(&scores, k, &dataset.schema, pool)?;
    Ok(PreparedSplit {
        train,
        test,
        selection,
        clamped,
    })
}

#[derive(Debug, Clone)]
pub struct UrlTrainingOutcome {
    pub model: ForestModel,
    pub selection: FeatureSelection,
    /// Held-out accuracy in percent.
    pub test_accuracy: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub clamped: usize,
}

pub fn train_url_model(
    dataset: &UrlDataset,
    config: &UrlTrainingConfig,
) -> Result<UrlTrainingOutcome, TrainingError> {
    let split = prepare_split(
        dataset,
        config.k,
        config.pool,
        config.train_fraction,
        config.split_seed,
    )?;
    let mut model = train_forest(&split.train, &split.selection, config.forest)?;
    model.schema = Some(
        dataset
            .schema
            .names()
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let test_accuracy = if split.test.is_empty() {
        f64::NAN
    } else {
        100.0 * model.accuracy(&split.test)?
    };
    Ok(UrlTrainingOutcome {
        model,
        selection: split.selection,
        test_accuracy,
        train_rows: split.train.len(),
        test_rows: split.test.len(),
        clamped: split.clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextTrainingConfig {
    pub max_features: usize,
    pub sequence_length: usize,
    pub d_embed: usize,
    pub d_hidden: usize,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for TextTrainingConfig {
    fn default() -> Self {
        Self {
            max_features: 10_000,
            sequence_length: 100,
            d_embed: 32,
            d_hidden: 32,
            init_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TextTrainingOutcome {
    pub model: LstmModel,
    pub report: TrainReport,
    /// Distinct words after preprocessing, before the `max_features` cap.
    pub distinct_words: usize,
    pub total_rows: usize,
    pub unique_rows: usize,
}

impl TextTrainingOutcome {
    pub fn vocabulary_size(&self) -> usize {
        self.model.vocabulary.as_ref().map_or(0, |v| v.len())
    }
}

/// The vocabulary is fit on every row of the corpus; the LSTM then holds
/// out `validation_fraction` of rows for per-epoch validation.
pub fn train_text_model(
    corpus: &TextDataset,
    config: &TextTrainingConfig,
) -> Result<TextTrainingOutcome, TrainingError> {
    let tokens: Vec<Vec<String>> = corpus.messages.iter().map(|(m, _)| preprocess(m)).collect();
    let distinct_words = {
        let mut all: Vec<&str> = tokens.iter().flatten().map(String::as_str).collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    };
    let vocab = build_vocabulary(&tokens, config.max_features)?;
    let data: Vec<(TokenSequence, Label)> = tokens
        .iter()
        .zip(&corpus.messages)
        .map(|(t, (_, label))| (encode(t, &vocab, config.sequence_length), *label))
        .collect();
    let dims = LstmDims {
        vocab_size: vocab.len(),
        d_embed: config.d_embed,
        d_hidden: config.d_hidden,
        sequence_length: config.sequence_length,
    };
    let mut model = LstmModel::new(dims, config.init_seed).with_vocabulary(vocab);
    let report = train(&mut model, &data, &config.train)?;
    Ok(TextTrainingOutcome {
        model,
        report,
        distinct_words,
        total_rows: corpus.total(),
        unique_rows: corpus.unique(),
    })
}
