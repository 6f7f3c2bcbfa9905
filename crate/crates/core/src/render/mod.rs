//! Font management, glyph rasterization and dataset synthesis.

use std::collections::HashMap;
use std::path::PathBuf;

use ab_glyph::{point, Font, PxScale, ScaleFont};
use image::{GrayImage, Luma};
use thiserror::Error;

use crate::layout::{reading_order_text, LayoutError, PageLayout, WritingMode};
use crate::score::is_whitespace;

mod dataset;
mod fonts;

pub use dataset::{
    page_id, synthesize_dataset, DatasetConfig, ModePolicy, Reject, SynthesisSummary, INK_RATIO_RANGE,
};
pub use fonts::{load_font_collection, select_font, FontEntry, BUNDLED_FONT_ID};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: not a usable font: {reason}", path.display())]
    BadFont { path: PathBuf, reason: String },
    #[error("no usable font files in {}", .0.display())]
    NoFonts(PathBuf),
    #[error("no fonts were given")]
    NoFontsGiven,
    #[error("font {font:?} has no glyph for {}", format_missing(missing))]
    Coverage { font: String, missing: Vec<char> },
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

fn format_missing(missing: &[char]) -> String {
    missing
        .iter()
        .map(|c| format!("{c:?} (U+{:04X})", *c as u32))
        .collect::<Vec<_>>()
        .join(", ")
}

/// A rasterized page with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPage {
    pub sample_id: String,
    pub image: GrayImage,
    pub ground_truth: String,
    pub layout: PageLayout,
    pub font_id: String,
}

impl RenderedPage {
    pub fn new(sample_id: impl Into<String>, layout: PageLayout, font: &FontEntry) -> Result<Self, RenderError> {
        let image = rasterize(&layout, font)?;
        Ok(Self {
            sample_id: sample_id.into(),
            ground_truth: reading_order_text(&layout)?,
            image,
            layout,
            font_id: font.id.clone(),
        })
    }

    pub fn mode(&self) -> WritingMode {
        self.layout.mode
    }

    pub fn columns(&self) -> u8 {
        self.layout.columns
    }

    pub fn ink_ratio(&self) -> f64 {
        ink_ratio(&self.image)
    }
}

/// Fraction of pixels that are not pure white.
pub fn ink_ratio(image: &GrayImage) -> f64 {
    let total = image.as_raw().len();
    if total == 0 {
        return 0.0;
    }
    image.as_raw().iter().filter(|&&v| v < 255).count() as f64 / total as f64
}

/// Coverage mask of one glyph in a square cell, row-major.
type CellMask = Vec<u8>;

/// Renders the layout on a white page of the layout's geometry. Each glyph
/// is scaled so the font's ascent-to-descent box spans the cell, centered
/// horizontally on its advance, clipped to the cell, and turned 90°
/// clockwise about the cell center when the placement is rotated.
pub fn rasterize(layout: &PageLayout, font: &FontEntry) -> Result<GrayImage, RenderError> {
    let g = &layout.geometry;
    let missing: Vec<char> = {
        let mut m: Vec<char> = layout.placements.iter().map(|p| p.ch).filter(|&c| !font.covers(c)).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    if !missing.is_empty() {
        return Err(RenderError::Coverage {
            font: font.id.clone(),
            missing,
        });
    }

    let mut page = GrayImage::from_pixel(g.width, g.height, Luma([255]));
    let size = g.font_size;
    let mut cache: HashMap<(char, bool), CellMask> = HashMap::new();
    for p in &layout.placements {
        if is_whitespace(p.ch) {
            continue;
        }
        let mask = cache
            .entry((p.ch, p.rotated))
            .or_insert_with(|| glyph_mask(font, p.ch, size, p.rotated));
        for cy in 0..size {
            let y = p.y + cy;
            if y >= g.height {
                break;
            }
            for cx in 0..size {
                let x = p.x + cx;
                if x >= g.width {
                    break;
                }
                let cov = mask[(cy * size + cx) as usize];
                if cov > 0 {
                    let px = page.get_pixel_mut(x, y);
                    px.0[0] = px.0[0].min(255 - cov);
                }
            }
        }
    }
    Ok(page)
}

fn glyph_mask(font: &FontEntry, ch: char, size: u32, rotated: bool) -> CellMask {
    let n = size as usize;
    let mut mask = vec![0u8; n * n];
    let font = font.font();
    let scale = PxScale::from(size as f32);
    let scaled = font.as_scaled(scale);
    let id = font.glyph_id(ch);
    let offset_x = (size as f32 - scaled.h_advance(id)) / 2.0;
    let glyph = id.with_scale_and_position(scale, point(offset_x, scaled.ascent()));
    if let Some(outlined) = font.outline_glyph(glyph) {
        let bounds = outlined.px_bounds();
        outlined.draw(|gx, gy, c| {
            let x = bounds.min.x as i64 + gx as i64;
            let y = bounds.min.y as i64 + gy as i64;
            if (0..size as i64).contains(&x) && (0..size as i64).contains(&y) {
                let v = (c.clamp(0.0, 1.0) * 255.0).round() as u8;
                let slot = &mut mask[y as usize * n + x as usize];
                *slot = (*slot).max(v);
            }
        });
    }
    if rotated {
        // 90° clockwise: destination (x, y) takes source (y, n-1-x).
        let mut turned = vec![0u8; n * n];
        for y in 0..n {
            for x in 0..n {
                turned[y * n + x] = mask[(n - 1 - x) * n + y];
            }
        }
        mask = turned;
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{layout_page, PageGeometry};

    fn geometry() -> PageGeometry {
        PageGeometry {
            width: 200,
            height: 160,
            margin: 20,
            column_gap: 10,
            font_size: 40,
            line_spacing: 1.5,
        }
    }

    fn ink_bounds(image: &GrayImage) -> Option<(u32, u32, u32, u32)> {
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for (x, y, p) in image.enumerate_pixels() {
            if p.0[0] < 255 {
                b = Some(match b {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
        b
    }

    #[test]
    fn empty_layout_is_blank() {
        let layout = PageLayout {
            mode: WritingMode::Horizontal,
            columns: 1,
            geometry: geometry(),
            placements: vec![],
            source_text: String::new(),
        };
        let image = rasterize(&layout, &FontEntry::bundled()).unwrap();
        assert_eq!(image.dimensions(), (200, 160));
        assert!(image.as_raw().iter().all(|&v| v == 255));
    }

    #[test]
    fn single_glyph_stays_in_its_cell() {
        let font = FontEntry::bundled();
        for ch in ['字', 'g', '「', 'ー'] {
            for mode in WritingMode::ALL {
                let layout = layout_page(&ch.to_string(), mode, 1, &geometry()).unwrap();
                let p = layout.placements[0];
                let image = rasterize(&layout, &font).unwrap();
                let (x0, y0, x1, y1) = ink_bounds(&image).expect("glyph has ink");
                let fs = layout.geometry.font_size;
                assert!(x0 + 2 >= p.x && y0 + 2 >= p.y, "{ch} {mode}");
                assert!(x1 < p.x + fs + 2 && y1 < p.y + fs + 2, "{ch} {mode}");
            }
        }
    }

    #[test]
    fn rotation_turns_a_horizontal_bar_upright() {
        let font = FontEntry::bundled();
        let mask = glyph_mask(&font, 'ー', 40, false);
        let turned = glyph_mask(&font, 'ー', 40, true);
        let extent = |m: &CellMask| {
            let (mut w, mut h) = (0usize, 0usize);
            for i in 0..40 {
                w += (0..40).any(|j| m[j * 40 + i] > 0) as usize;
                h += (0..40).any(|j| m[i * 40 + j] > 0) as usize;
            }
            (w, h)
        };
        let (w, h) = extent(&mask);
        assert!(w > h);
        assert_eq!(extent(&turned), (h, w));
    }

    #[test]
    fn rendering_is_deterministic() {
        let font = FontEntry::bundled();
        let layout = layout_page("縦書き「テスト」ー", WritingMode::Vertical, 2, &PageGeometry::default().oriented(WritingMode::Vertical)).unwrap();
        assert_eq!(rasterize(&layout, &font).unwrap(), rasterize(&layout, &font).unwrap());
    }

    #[test]
    fn missing_glyph_is_a_coverage_error() {
        let subset = FontEntry::load(&PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/fonts/kana_subset.ttf"))).unwrap();
        let layout = layout_page("日本語の鬱", WritingMode::Horizontal, 1, &geometry()).unwrap();
        match rasterize(&layout, &subset) {
            Err(RenderError::Coverage { missing, .. }) => assert_eq!(missing, vec!['鬱']),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rendered_page_carries_ground_truth() {
        let layout = layout_page("あい\nうえ", WritingMode::Horizontal, 1, &geometry()).unwrap();
        let page = RenderedPage::new("s1", layout, &FontEntry::bundled()).unwrap();
        assert_eq!(page.ground_truth, "あいうえ");
        assert_eq!(page.font_id, BUNDLED_FONT_ID);
        assert!(page.ink_ratio() > 0.0);
    }
}
