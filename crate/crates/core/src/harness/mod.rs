//! Dataset manifests, stratified splits, statistics, model inference and
//! grouped reports.

use std::path::PathBuf;

use thiserror::Error;

mod infer;
mod manifest;
mod report;
mod split;

pub use infer::{
    horizontal_scan, run_inference, sibling_layout, AdapterConfig, AdapterError, ChatCompletionsAdapter,
    CommandAdapter, Decoding, EchoAdapter, HorizontalOrderAdapter, InferenceConfig, InferenceFailure,
    InferenceSummary, ModelAdapter, Prediction, RepeatingAdapter, TranscribeRequest, Transcription,
    INFERENCE_PROMPT, MAX_NEW_TOKENS_REAL, MAX_NEW_TOKENS_SYNTHETIC,
};
pub use manifest::{resolve_image, Manifest, ManifestRecord, Split};
pub use report::{
    aggregate_report, render_text, score_predictions, sig3, Excluded, Grouping, ReportCell, ReportTable,
    ScoreRun, ScoredSample, EMPTY_CELL,
};
pub use split::{compute_stats, largest_remainder, split_dataset, DatasetStats, SplitRatios, MIN_STRATUM};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("split ratios must all be positive, got {}:{}:{}", .0.train, .0.val, .0.test)]
    InvalidRatios(SplitRatios),
    #[error("configuration: {0}")]
    Config(String),
}
