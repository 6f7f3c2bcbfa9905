use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::DetectError;

/// Inverted values at or above this count as ink, i.e. original gray
/// values `<= 255 - INK_THRESHOLD` (127).
pub const INK_THRESHOLD: u8 = 128;

/// A binarized page, row-major, 1 = ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryPage {
    width: u32,
    height: u32,
    bits: Vec<u8>,
}

impl BinaryPage {
    pub fn new(width: u32, height: u32, bits: Vec<u8>) -> Result<Self, DetectError> {
        if width == 0 || height == 0 {
            return Err(DetectError::EmptyImage { width, height });
        }
        if bits.len() != width as usize * height as usize {
            return Err(DetectError::BadDimensions {
                width,
                height,
                len: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits: bits.into_iter().map(|b| u8::from(b != 0)).collect(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_ink(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize] == 1
    }

    pub fn ink_count(&self) -> u64 {
        self.bits.iter().map(|b| u64::from(*b)).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut bits = vec![0u8; self.bits.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                bits[(x * self.height + y) as usize] = self.bits[(y * self.width + x) as usize];
            }
        }
        Self {
            width: self.height,
            height: self.width,
            bits,
        }
    }
}

/// Fixed-threshold binarization of the inverted image: a pixel is ink iff
/// `255 - value >= 128`. Color sources should go through
/// `DynamicImage::to_luma8` first.
pub fn binarize(image: &GrayImage) -> Result<BinaryPage, DetectError> {
    let (width, height) = image.dimensions();
    if width == 0 || height == 0 {
        return Err(DetectError::EmptyImage { width, height });
    }
    let bits = image
        .as_raw()
        .iter()
        .map(|v| u8::from(255 - *v >= INK_THRESHOLD))
        .collect();
    Ok(BinaryPage { width, height, bits })
}

/// Ink pixel counts per row and per column.
pub fn projection_profiles(page: &BinaryPage) -> (Vec<u64>, Vec<u64>) {
    let mut rows = vec![0u64; page.height as usize];
    let mut cols = vec![0u64; page.width as usize];
    for (y, row) in page.bits.chunks_exact(page.width as usize).enumerate() {
        for (x, bit) in row.iter().enumerate() {
            let bit = u64::from(*bit);
            rows[y] += bit;
            cols[x] += bit;
        }
    }
    (rows, cols)
}

/// Population standard deviation over mean. A zero mean yields 0 so that a
/// blank page never becomes a candidate.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, DetectError> {
    if values.is_empty() {
        return Err(DetectError::EmptyValues);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(variance.sqrt() / mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEvidence {
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub cv_rows: f64,
    pub cv_cols: f64,
    pub candidate: bool,
}

pub fn profile_evidence(page: &BinaryPage) -> ProfileEvidence {
    let (row_sums, col_sums) = projection_profiles(page);
    let cv = |sums: &[u64]| {
        let values: Vec<f64> = sums.iter().map(|v| *v as f64).collect();
        // Non-empty: BinaryPage has positive dimensions.
        coefficient_of_variation(&values).unwrap_or(0.0)
    };
    let cv_rows = cv(&row_sums);
    let cv_cols = cv(&col_sums);
    ProfileEvidence {
        row_sums,
        col_sums,
        cv_rows,
        cv_cols,
        candidate: cv_cols > cv_rows,
    }
}

/// Stage 1 on a grayscale image.
pub fn is_vertical_candidate(image: &GrayImage) -> Result<ProfileEvidence, DetectError> {
    Ok(profile_evidence(&binarize(image)?))
}
