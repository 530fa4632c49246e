pub mod content_fetcher;
pub mod harness;
pub mod lstm;
pub mod media;
pub mod orchestrator;
pub mod porter;
pub mod random_forest;
pub mod rng;
pub mod split;
pub mod text_pipeline;
pub mod url_features;
