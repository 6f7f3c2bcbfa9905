//! Two-stage detection of vertical writing in page images.
//!
//! Stage 1 binarizes the page (ink = value at most 127) and compares the
//! coefficient of variation of the row and column ink profiles. Vertical
//! lines make the column profile stripy, so `cv_cols > cv_rows` marks the
//! page as a candidate. Stage 2 runs only on candidates: character boxes
//! are merged along each axis and the page is vertical when more vertical
//! merges than horizontal merges happen. Both comparisons are strict.

mod boxes;
mod profile;

use image::GrayImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boxes::{
    extract_char_boxes, median_extent, merge_boxes, merge_boxes_tol, merge_boxes_with, BoxBackend, CharBox,
    CommandBackend, ConnectedComponents, MergeDirection, MergeParams,
};
pub use profile::{
    binarize, coefficient_of_variation, is_vertical_candidate, profile_evidence, projection_profiles, BinaryPage,
    ProfileEvidence, INK_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("image has zero area ({width}x{height})")]
    EmptyImage { width: u32, height: u32 },
    #[error("coefficient of variation of an empty sequence")]
    EmptyValues,
    #[error("bit buffer of length {len} does not match {width}x{height}")]
    BadDimensions { width: u32, height: u32, len: usize },
    #[error("box backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },
}

/// Stage-1 evidence is kept when stage 2 fails, so callers can still log
/// or fall back on it.
#[derive(Debug, Error)]
#[error("{source}")]
pub struct DetectionFailure {
    pub profile: Option<ProfileEvidence>,
    #[source]
    pub source: DetectError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ProfileOnly,
    BoxVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub profile: ProfileEvidence,
    pub h_merges: usize,
    pub v_merges: usize,
    pub is_vertical: bool,
    pub stage_reached: Stage,
}

/// Stage-2 evidence: merge counts along both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxVote {
    pub h_merges: usize,
    pub v_merges: usize,
}

impl BoxVote {
    pub fn is_vertical(&self) -> bool {
        self.v_merges > self.h_merges
    }
}

/// Merges `boxes` along both axes and counts the union events.
pub fn box_vote(boxes: &[CharBox], params: &MergeParams) -> BoxVote {
    let (_, h_merges) = merge_boxes_with(boxes, MergeDirection::Horizontal, params);
    let (_, v_merges) = merge_boxes_with(boxes, MergeDirection::Vertical, params);
    BoxVote { h_merges, v_merges }
}

/// Detector configuration: which box backend to use and how to merge.
pub struct Detector<B> {
    pub backend: B,
    pub params: MergeParams,
}

impl Default for Detector<ConnectedComponents> {
    fn default() -> Self {
        Self {
            backend: ConnectedComponents::default(),
            params: MergeParams::default(),
        }
    }
}

impl<B: BoxBackend> Detector<B> {
    pub fn new(backend: B, params: MergeParams) -> Self {
        Self { backend, params }
    }

    pub fn detect(&self, image: &GrayImage) -> Result<DetectionVerdict, DetectionFailure> {
        detect_with(image, &self.backend, &self.params)
    }
}

/// Runs both stages with `backend` and default merge parameters.
pub fn contains_vertical_text<B: BoxBackend + ?Sized>(
    image: &GrayImage,
    backend: &B,
) -> Result<DetectionVerdict, DetectionFailure> {
    detect_with(image, backend, &MergeParams::default())
}

pub fn detect_with<B: BoxBackend + ?Sized>(
    image: &GrayImage,
    backend: &B,
    params: &MergeParams,
) -> Result<DetectionVerdict, DetectionFailure> {
    let page = binarize(image).map_err(|source| DetectionFailure { profile: None, source })?;
    let profile = profile_evidence(&page);
    if !profile.candidate {
        return Ok(DetectionVerdict {
            profile,
            h_merges: 0,
            v_merges: 0,
            is_vertical: false,
            stage_reached: Stage::ProfileOnly,
        });
    }
    let boxes = match backend.char_boxes(image) {
        Ok(boxes) => boxes,
        Err(source) => {
            return Err(DetectionFailure {
                profile: Some(profile),
                source,
            })
        }
    };
    let vote = box_vote(&boxes, params);
    Ok(DetectionVerdict {
        profile,
        h_merges: vote.h_merges,
        v_merges: vote.v_merges,
        is_vertical: vote.is_vertical(),
        stage_reached: Stage::BoxVote,
    })
}
