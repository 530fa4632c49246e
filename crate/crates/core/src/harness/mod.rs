//! Dataset loading, fixture sites, the local server, training helpers and
//! the end-to-end evaluation.

pub mod config;
pub mod datasets;
pub mod evaluate;
pub mod fixtures;
pub mod server;
pub mod synthetic;
pub mod training;

pub use config::{ConfigError, ConfigFile};
pub use datasets::{load_text_dataset, load_url_dataset, IngestError, TextDataset, UrlDataset};
pub use evaluate::{evaluate_end_to_end, EvaluationError, EvaluationReport, ModelMetadata};
pub use fixtures::{generate_fixtures, load_fixtures, FixtureCategory, FixtureSite};
pub use server::{serve_fixtures, FixtureServer};
pub use training::{train_text_model, train_url_model, TextTrainingConfig, UrlTrainingConfig};
