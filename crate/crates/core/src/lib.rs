//! Synthetic Japanese document images in horizontal and vertical writing,
//! with exact reading-order ground truth, a vertical-writing detector for
//! arbitrary page images, and an OCR scoring protocol (CER and character
//! BLEU, raw and with trailing repetition collapsed).
//!
//! The crate is organized by pipeline stage:
//!
//! - [`corpus`]: text acquisition (LLM provider client or local files),
//!   length filtering and column-count assignment.
//! - [`layout`]: per-character placement for the eight layout classes
//!   (horizontal/vertical × 1–4 columns).
//! - [`render`]: font loading, rasterization and dataset synthesis.
//! - [`detect`]: projection-profile screen plus bounding-box merge vote.
//! - [`score`]: normalization, CER, character BLEU, repetition removal.
//! - [`harness`]: manifests, stratified splits, statistics, model
//!   inference and grouped reports.
//! - [`cli`]: configuration and the command implementations behind the
//!   `tategaki` binary.

pub mod cli;
pub mod corpus;
pub mod detect;
pub mod harness;
pub mod layout;
pub mod render;
pub mod score;
mod http;
mod util;

pub use corpus::TextSample;
pub use detect::{contains_vertical_text, DetectionVerdict};
pub use harness::{Manifest, ManifestRecord, Split};
pub use layout::{layout_page, reading_order_text, PageGeometry, PageLayout, WritingMode};
pub use render::{FontEntry, RenderedPage};
pub use score::{score_pair, SampleScores};
pub use util::BadLine;
