//! Character placement for the eight layout classes.
//!
//! Every glyph occupies a `font_size × font_size` cell on a fixed grid.
//! Horizontal pages fill lines left to right, stack lines top to bottom and
//! place columns side by side from left to right. Vertical pages fill lines
//! top to bottom, stack lines right to left and place columns (bands) from
//! top to bottom. Lines break greedily when the next cell would leave the
//! column; there is no kinsoku processing.
//!
//! Newlines in the source force a line break and are not placed. The
//! ground truth of a page is therefore [`normalize_breaks`] of its source.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_COLUMNS: u8 = 1;
pub const MAX_COLUMNS: u8 = 4;

/// Font sizes tried by [`fit_layout`], largest first.
pub const FONT_SIZES: std::ops::RangeInclusive<u32> = 20..=48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("text is empty")]
    EmptyText,
    #[error("column count {0} outside 1..=4")]
    InvalidColumns(u8),
    #[error("geometry cannot hold {columns} {mode} column(s): {reason}")]
    InfeasibleGeometry {
        mode: WritingMode,
        columns: u8,
        reason: String,
    },
    #[error("text overflows the page after {placed} of {total} characters")]
    Overflow { placed: usize, total: usize },
    #[error("reading index {0} appears more than once")]
    DuplicateReadingIndex(usize),
    #[error("reading indices are not contiguous: {0} missing")]
    MissingReadingIndex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WritingMode {
    Horizontal,
    Vertical,
}

impl WritingMode {
    pub const ALL: [WritingMode; 2] = [WritingMode::Horizontal, WritingMode::Vertical];

    pub fn as_str(self) -> &'static str {
        match self {
            WritingMode::Horizontal => "horizontal",
            WritingMode::Vertical => "vertical",
        }
    }
}

impl fmt::Display for WritingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WritingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "horizontal" => Ok(WritingMode::Horizontal),
            "vertical" => Ok(WritingMode::Vertical),
            other => Err(format!("unknown writing mode {other:?}")),
        }
    }
}

/// Page size, margins and type size, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PageGeometry {
    pub width: u32,
    pub height: u32,
    pub margin: u32,
    pub column_gap: u32,
    /// Side of the square glyph cell.
    pub font_size: u32,
    /// Line pitch as a multiple of `font_size`; at least 1.0.
    pub line_spacing: f32,
}

impl Default for PageGeometry {
    /// A4 portrait at roughly 150 dpi.
    fn default() -> Self {
        Self {
            width: 1240,
            height: 1754,
            margin: 64,
            column_gap: 40,
            font_size: 32,
            line_spacing: 1.5,
        }
    }
}

impl PageGeometry {
    /// Portrait for horizontal writing, landscape for vertical writing, so
    /// that vertical column bands stay wide enough for many lines.
    pub fn oriented(self, mode: WritingMode) -> Self {
        let (short, long) = (self.width.min(self.height), self.width.max(self.height));
        let (width, height) = match mode {
            WritingMode::Horizontal => (short, long),
            WritingMode::Vertical => (long, short),
        };
        Self { width, height, ..self }
    }

    pub fn with_font_size(self, font_size: u32) -> Self {
        Self { font_size, ..self }
    }

    pub fn line_pitch(&self) -> u32 {
        let pitch = (self.font_size as f32 * self.line_spacing).round() as u32;
        pitch.max(self.font_size)
    }

    /// Number of characters a page can hold, ignoring forced line breaks.
    pub fn capacity(&self, mode: WritingMode, columns: u8) -> Result<usize, LayoutError> {
        let grid = Grid::new(self, mode, columns)?;
        Ok(grid.per_line * grid.lines_per_column * columns as usize)
    }
}

/// Placement of one character.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlyphPlacement {
    pub ch: char,
    /// Left edge of the glyph cell.
    pub x: u32,
    /// Top edge of the glyph cell.
    pub y: u32,
    pub reading_index: usize,
    /// Line number within the column.
    pub line_index: usize,
    pub column_index: usize,
    /// Drawn turned 90° clockwise (vertical mode only).
    pub rotated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageLayout {
    pub mode: WritingMode,
    pub columns: u8,
    pub geometry: PageGeometry,
    pub placements: Vec<GlyphPlacement>,
    pub source_text: String,
}

impl PageLayout {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(json: &str) -> serde_json::Result<Self> {
        serde_json::from_str(json)
    }
}

/// Characters drawn rotated in vertical writing: the prolonged sound mark,
/// wave dashes, dashes and paired brackets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RotationTable {
    chars: BTreeSet<char>,
}

const DEFAULT_ROTATED: &str = "ー〜～（）「」『』【】()[]{}<>-‐–—―";

impl Default for RotationTable {
    fn default() -> Self {
        Self {
            chars: DEFAULT_ROTATED.chars().collect(),
        }
    }
}

impl RotationTable {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Self {
        Self {
            chars: chars.into_iter().collect(),
        }
    }

    pub fn contains(&self, ch: char) -> bool {
        self.chars.contains(&ch)
    }

    pub fn is_rotated(&self, ch: char, mode: WritingMode) -> bool {
        mode == WritingMode::Vertical && self.contains(ch)
    }
}

/// Whether `ch` belongs to the default rotatable set.
pub fn rotation_class(ch: char) -> bool {
    RotationTable::default().contains(ch)
}

fn is_break(ch: char) -> bool {
    ch == '\n' || ch == '\r'
}

/// Drops the line-break characters that layout consumes.
pub fn normalize_breaks(text: &str) -> String {
    text.chars().filter(|c| !is_break(*c)).collect()
}

/// Cell grid of one page: where each column starts and how many cells fit.
struct Grid {
    mode: WritingMode,
    geometry: PageGeometry,
    /// Cells per line.
    per_line: usize,
    lines_per_column: usize,
    /// Length of a column along the line direction.
    column_extent: u32,
}

impl Grid {
    fn new(geometry: &PageGeometry, mode: WritingMode, columns: u8) -> Result<Self, LayoutError> {
        if !(MIN_COLUMNS..=MAX_COLUMNS).contains(&columns) {
            return Err(LayoutError::InvalidColumns(columns));
        }
        let infeasible = |reason: String| LayoutError::InfeasibleGeometry { mode, columns, reason };
        if geometry.font_size == 0 {
            return Err(infeasible("font size is zero".into()));
        }
        if geometry.line_spacing.is_nan() || geometry.line_spacing < 1.0 {
            return Err(infeasible(format!("line spacing {} below 1.0", geometry.line_spacing)));
        }
        let inner_w = geometry.width.checked_sub(2 * geometry.margin);
        let inner_h = geometry.height.checked_sub(2 * geometry.margin);
        let (Some(inner_w), Some(inner_h)) = (inner_w, inner_h) else {
            return Err(infeasible("margins exceed the page".into()));
        };
        // Columns split the axis along which lines run; lines stack across it.
        let (split_axis, stack_axis) = match mode {
            WritingMode::Horizontal => (inner_w, inner_h),
            WritingMode::Vertical => (inner_h, inner_w),
        };
        let gaps = (columns as u32 - 1) * geometry.column_gap;
        let column_extent = split_axis.checked_sub(gaps).map(|rest| rest / columns as u32).unwrap_or(0);
        let per_line = (column_extent / geometry.font_size) as usize;
        if per_line == 0 {
            return Err(infeasible(format!(
                "column extent {column_extent}px is smaller than the {}px font",
                geometry.font_size
            )));
        }
        if stack_axis < geometry.font_size {
            return Err(infeasible("page too small for a single line".into()));
        }
        let lines_per_column = ((stack_axis - geometry.font_size) / geometry.line_pitch()) as usize + 1;
        Ok(Self {
            mode,
            geometry: *geometry,
            per_line,
            lines_per_column,
            column_extent,
        })
    }

    /// Top-left corner of the cell at `pos` on `line` of `column`.
    fn cell(&self, column: usize, line: usize, pos: usize) -> (u32, u32) {
        let g = &self.geometry;
        let column_origin = g.margin + column as u32 * (self.column_extent + g.column_gap);
        let along = pos as u32 * g.font_size;
        let across = line as u32 * g.line_pitch();
        match self.mode {
            WritingMode::Horizontal => (column_origin + along, g.margin + across),
            WritingMode::Vertical => (g.width - g.margin - g.font_size - across, column_origin + along),
        }
    }
}

/// Lays out `text` with the default rotation table.
pub fn layout_page(
    text: &str,
    mode: WritingMode,
    columns: u8,
    geometry: &PageGeometry,
) -> Result<PageLayout, LayoutError> {
    layout_page_with(text, mode, columns, geometry, &RotationTable::default())
}

pub fn layout_page_with(
    text: &str,
    mode: WritingMode,
    columns: u8,
    geometry: &PageGeometry,
    rotation: &RotationTable,
) -> Result<PageLayout, LayoutError> {
    let grid = Grid::new(geometry, mode, columns)?;
    let total = text.chars().filter(|c| !is_break(*c)).count();
    if total == 0 {
        return Err(LayoutError::EmptyText);
    }

    let mut placements = Vec::with_capacity(total);
    let (mut column, mut line, mut pos) = (0usize, 0usize, 0usize);
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        if is_break(ch) {
            if ch == '\r' && chars.peek() == Some(&'\n') {
                chars.next();
            }
            // Blank lines collapse: a break only ends a line that has content.
            if pos > 0 {
                pos = grid.per_line;
            }
            continue;
        }
        if pos == grid.per_line {
            pos = 0;
            line += 1;
            if line == grid.lines_per_column {
                line = 0;
                column += 1;
            }
        }
        if column == columns as usize {
            return Err(LayoutError::Overflow {
                placed: placements.len(),
                total,
            });
        }
        let (x, y) = grid.cell(column, line, pos);
        placements.push(GlyphPlacement {
            ch,
            x,
            y,
            reading_index: placements.len(),
            line_index: line,
            column_index: column,
            rotated: rotation.is_rotated(ch, mode),
        });
        pos += 1;
    }

    Ok(PageLayout {
        mode,
        columns,
        geometry: *geometry,
        placements,
        source_text: text.to_owned(),
    })
}

/// Lays out `text` at the largest font size in [`FONT_SIZES`] that fits.
pub fn fit_layout(
    text: &str,
    mode: WritingMode,
    columns: u8,
    geometry: &PageGeometry,
    rotation: &RotationTable,
) -> Result<PageLayout, LayoutError> {
    let total = text.chars().filter(|c| !is_break(*c)).count();
    let mut last_err = None;
    for size in FONT_SIZES.rev() {
        let candidate = geometry.with_font_size(size);
        match candidate.capacity(mode, columns) {
            Ok(cap) if cap < total => {
                last_err = Some(LayoutError::Overflow { placed: cap, total });
                continue;
            }
            Ok(_) => {}
            Err(err @ LayoutError::InfeasibleGeometry { .. }) => {
                last_err.get_or_insert(err);
                continue;
            }
            Err(err) => return Err(err),
        }
        match layout_page_with(text, mode, columns, &candidate, rotation) {
            Ok(layout) => return Ok(layout),
            Err(err @ LayoutError::Overflow { .. }) => last_err = Some(err),
            Err(err) => return Err(err),
        }
    }
    Err(last_err.unwrap_or(LayoutError::EmptyText))
}

/// Characters in reading order. Fails if reading indices are duplicated or
/// leave gaps.
pub fn reading_order_text(layout: &PageLayout) -> Result<String, LayoutError> {
    let mut order: Vec<&GlyphPlacement> = layout.placements.iter().collect();
    order.sort_by_key(|p| p.reading_index);
    for (expected, placement) in order.iter().enumerate() {
        if placement.reading_index < expected {
            return Err(LayoutError::DuplicateReadingIndex(placement.reading_index));
        }
        if placement.reading_index > expected {
            return Err(LayoutError::MissingReadingIndex(expected));
        }
    }
    Ok(order.iter().map(|p| p.ch).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PageGeometry {
        PageGeometry {
            width: 200,
            height: 300,
            margin: 10,
            column_gap: 10,
            font_size: 20,
            line_spacing: 1.5,
        }
    }

    #[test]
    fn horizontal_advances_right() {
        let layout = layout_page("あい", WritingMode::Horizontal, 1, &small()).unwrap();
        let (a, i) = (layout.placements[0], layout.placements[1]);
        assert!(i.x > a.x);
        assert_eq!(i.y, a.y);
    }

    #[test]
    fn vertical_advances_down() {
        let layout = layout_page("あい", WritingMode::Vertical, 1, &small()).unwrap();
        let (a, i) = (layout.placements[0], layout.placements[1]);
        assert!(i.y > a.y);
        assert_eq!(i.x, a.x);
        // first vertical line hugs the right margin
        assert_eq!(a.x, 200 - 10 - 20);
    }

    #[test]
    fn vertical_two_columns_stack_top_to_bottom() {
        let g = small();
        let cap = g.capacity(WritingMode::Vertical, 2).unwrap();
        let text: String = "縦".repeat(cap);
        let layout = layout_page(&text, WritingMode::Vertical, 2, &g).unwrap();
        let band = |c: usize| {
            let ys: Vec<u32> = layout.placements.iter().filter(|p| p.column_index == c).map(|p| p.y).collect();
            (*ys.iter().min().unwrap(), *ys.iter().max().unwrap() + g.font_size)
        };
        let (top0, bottom0) = band(0);
        let (top1, _) = band(1);
        assert!(top0 < top1 && bottom0 <= top1);
        for c in 0..2 {
            let mut prev_x = u32::MAX;
            let mut line = 0;
            for p in layout.placements.iter().filter(|p| p.column_index == c) {
                if p.line_index != line {
                    assert_eq!(p.line_index, line + 1);
                    line = p.line_index;
                    assert!(p.x < prev_x);
                }
                prev_x = p.x;
            }
        }
    }

    #[test]
    fn horizontal_columns_fill_left_to_right() {
        let g = small();
        let cap = g.capacity(WritingMode::Horizontal, 2).unwrap();
        let layout = layout_page(&"横".repeat(cap), WritingMode::Horizontal, 2, &g).unwrap();
        let max_x0 = layout.placements.iter().filter(|p| p.column_index == 0).map(|p| p.x + g.font_size).max();
        let min_x1 = layout.placements.iter().filter(|p| p.column_index == 1).map(|p| p.x).min();
        assert!(max_x0.unwrap() <= min_x1.unwrap());
    }

    #[test]
    fn overflow_reports_placed_count() {
        let g = small();
        let cap = g.capacity(WritingMode::Horizontal, 1).unwrap();
        let err = layout_page(&"字".repeat(cap + 3), WritingMode::Horizontal, 1, &g).unwrap_err();
        assert_eq!(err, LayoutError::Overflow { placed: cap, total: cap + 3 });
    }

    #[test]
    fn infeasible_geometry_rejected() {
        let g = PageGeometry { width: 60, ..small() };
        assert!(matches!(
            layout_page("あ", WritingMode::Horizontal, 4, &g),
            Err(LayoutError::InfeasibleGeometry { .. })
        ));
        assert_eq!(layout_page("あ", WritingMode::Horizontal, 5, &small()), Err(LayoutError::InvalidColumns(5)));
        assert_eq!(layout_page("\n", WritingMode::Horizontal, 1, &small()), Err(LayoutError::EmptyText));
    }

    #[test]
    fn newlines_break_lines_and_vanish() {
        let layout = layout_page("あい\n\n\nう\r\nえ", WritingMode::Horizontal, 1, &small()).unwrap();
        let lines: Vec<usize> = layout.placements.iter().map(|p| p.line_index).collect();
        assert_eq!(lines, vec![0, 0, 1, 2]);
        assert_eq!(reading_order_text(&layout).unwrap(), "あいうえ");
        assert_eq!(normalize_breaks(&layout.source_text), "あいうえ");
    }

    #[test]
    fn reading_order_ignores_storage_order() {
        let mut layout = layout_page("縦書きの本", WritingMode::Vertical, 1, &small()).unwrap();
        layout.placements.reverse();
        assert_eq!(reading_order_text(&layout).unwrap(), "縦書きの本");
    }

    #[test]
    fn reading_order_of_hand_built_layout() {
        let place = |ch, reading_index, y| GlyphPlacement {
            ch,
            x: 100,
            y,
            reading_index,
            line_index: 0,
            column_index: 0,
            rotated: false,
        };
        let layout = PageLayout {
            mode: WritingMode::Vertical,
            columns: 1,
            geometry: small(),
            placements: vec![place('か', 2, 60), place('た', 0, 20), place('な', 3, 80), place('て', 1, 40)],
            source_text: "たてかな".into(),
        };
        assert_eq!(reading_order_text(&layout).unwrap(), "たてかな");

        let mut dup = layout.clone();
        dup.placements[0].reading_index = 0;
        assert_eq!(reading_order_text(&dup), Err(LayoutError::DuplicateReadingIndex(0)));
        let mut gap = layout;
        gap.placements[2].reading_index = 7;
        assert_eq!(reading_order_text(&gap), Err(LayoutError::MissingReadingIndex(3)));
    }

    #[test]
    fn rotation_only_in_vertical_mode() {
        assert!(rotation_class('ー'));
        assert!(rotation_class('「'));
        assert!(!rotation_class('あ'));
        let h = layout_page("ーあ", WritingMode::Horizontal, 1, &small()).unwrap();
        assert!(h.placements.iter().all(|p| !p.rotated));
        let v = layout_page("ーあ", WritingMode::Vertical, 1, &small()).unwrap();
        assert!(v.placements[0].rotated);
        assert!(!v.placements[1].rotated);
    }

    #[test]
    fn fit_prefers_largest_font() {
        let g = PageGeometry::default();
        let short = fit_layout("あ".repeat(100).as_str(), WritingMode::Horizontal, 1, &g, &RotationTable::default()).unwrap();
        assert_eq!(short.geometry.font_size, 48);
        let long = fit_layout("あ".repeat(2400).as_str(), WritingMode::Horizontal, 4, &g, &RotationTable::default()).unwrap();
        assert!(long.geometry.font_size < 48);
        assert!(long.geometry.with_font_size(long.geometry.font_size + 1).capacity(WritingMode::Horizontal, 4).unwrap() < 2400);
    }

    #[test]
    fn layout_json_round_trip() {
        let layout = layout_page("「縦」", WritingMode::Vertical, 1, &small()).unwrap();
        assert_eq!(PageLayout::from_json(&layout.to_json().unwrap()).unwrap(), layout);
    }

    #[test]
    fn oriented_geometry() {
        let g = PageGeometry::default();
        assert_eq!((g.oriented(WritingMode::Horizontal).width, g.oriented(WritingMode::Horizontal).height), (1240, 1754));
        assert_eq!((g.oriented(WritingMode::Vertical).width, g.oriented(WritingMode::Vertical).height), (1754, 1240));
    }
}
