use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::profile::{binarize, BinaryPage};
use super::DetectError;

/// Axis-aligned box with exclusive right/bottom edges (`x0 < x1`, `y0 < y1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl CharBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Option<Self> {
        (x0 < x1 && y0 < y1).then_some(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn union(&self, other: &CharBox) -> CharBox {
        CharBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn transpose(&self) -> CharBox {
        CharBox {
            x0: self.y0,
            y0: self.x0,
            x1: self.y1,
            y1: self.x1,
        }
    }

    fn fits(&self, width: u32, height: u32) -> bool {
        self.x1 <= width && self.y1 <= height
    }

    /// (start, end) along `direction`, then (start, end) across it.
    fn axes(&self, direction: MergeDirection) -> ((u32, u32), (u32, u32)) {
        match direction {
            MergeDirection::Horizontal => ((self.x0, self.x1), (self.y0, self.y1)),
            MergeDirection::Vertical => ((self.y0, self.y1), (self.x0, self.x1)),
        }
    }
}

/// Source of character-candidate boxes for the merge vote.
pub trait BoxBackend: Send + Sync {
    fn name(&self) -> &str;
    fn char_boxes(&self, image: &GrayImage) -> Result<Vec<CharBox>, DetectError>;
}

impl<T: BoxBackend + ?Sized> BoxBackend for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn char_boxes(&self, image: &GrayImage) -> Result<Vec<CharBox>, DetectError> {
        (**self).char_boxes(image)
    }
}

/// Built-in backend: 8-connected ink components. Multi-part kanji come out
/// as several boxes, which only matters through the merge counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectedComponents {
    /// Components with fewer ink pixels are dropped as specks.
    pub min_area: u32,
    /// Components larger than this fraction of the shorter page side along
    /// either axis are dropped as rules or figures.
    pub max_dim_fraction: f64,
}

impl Default for ConnectedComponents {
    fn default() -> Self {
        Self {
            min_area: 4,
            max_dim_fraction: 0.2,
        }
    }
}

impl ConnectedComponents {
    pub fn components(&self, page: &BinaryPage) -> Vec<CharBox> {
        let (w, h) = (page.width() as usize, page.height() as usize);
        let max_dim = self.max_dim_fraction * page.width().min(page.height()) as f64;
        let bits = page.bits();
        let mut seen = vec![false; bits.len()];
        let mut stack = Vec::new();
        let mut boxes = Vec::new();
        for start in 0..bits.len() {
            if bits[start] == 0 || seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            let mut area = 0u32;
            while let Some(idx) = stack.pop() {
                let (x, y) = (idx % w, idx / w);
                area += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
                for ny in y.saturating_sub(1)..(y + 2).min(h) {
                    for nx in x.saturating_sub(1)..(x + 2).min(w) {
                        let n = ny * w + nx;
                        if bits[n] == 1 && !seen[n] {
                            seen[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
            let b = CharBox {
                x0: x0 as u32,
                y0: y0 as u32,
                x1: x1 as u32,
                y1: y1 as u32,
            };
            if area >= self.min_area && (b.width().max(b.height()) as f64) <= max_dim {
                boxes.push(b);
            }
        }
        boxes.sort();
        boxes
    }
}

impl BoxBackend for ConnectedComponents {
    fn name(&self) -> &str {
        "connected-components"
    }

    fn char_boxes(&self, image: &GrayImage) -> Result<Vec<CharBox>, DetectError> {
        Ok(self.components(&binarize(image)?))
    }
}

/// External OCR engine adapter. The image is written to a temporary PNG
/// whose path is appended to `args`; the program must print a JSON array
/// of `{"x0":..,"y0":..,"x1":..,"y1":..}` objects (top-left origin) on
/// stdout and exit with status 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandBackend {
    pub program: String,
    pub args: Vec<String>,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl CommandBackend {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }

    fn fail(&self, message: impl Into<String>) -> DetectError {
        DetectError::Backend {
            backend: self.program.clone(),
            message: message.into(),
        }
    }
}

impl BoxBackend for CommandBackend {
    fn name(&self) -> &str {
        &self.program
    }

    fn char_boxes(&self, image: &GrayImage) -> Result<Vec<CharBox>, DetectError> {
        let path: PathBuf = std::env::temp_dir().join(format!(
            "tategaki-boxes-{}-{}.png",
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        image.save(&path).map_err(|e| self.fail(format!("cannot write temp image: {e}")))?;
        let output = Command::new(&self.program).args(&self.args).arg(&path).output();
        let _ = std::fs::remove_file(&path);
        let output = output.map_err(|e| self.fail(format!("cannot run: {e}")))?;
        if !output.status.success() {
            return Err(self.fail(format!(
                "exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let boxes: Vec<CharBox> =
            serde_json::from_slice(&output.stdout).map_err(|e| self.fail(format!("bad box JSON: {e}")))?;
        let (w, h) = image.dimensions();
        if let Some(bad) = boxes.iter().find(|b| b.x0 >= b.x1 || b.y0 >= b.y1 || !b.fits(w, h)) {
            return Err(self.fail(format!("box {bad:?} is empty or outside the {w}x{h} page")));
        }
        Ok(boxes)
    }
}

/// Character-candidate boxes from `backend`.
pub fn extract_char_boxes<B: BoxBackend + ?Sized>(image: &GrayImage, backend: &B) -> Result<Vec<CharBox>, DetectError> {
    backend.char_boxes(image)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeDirection {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeParams {
    /// Required overlap across the merge axis, as a fraction of the smaller
    /// box's extent on that axis.
    pub min_overlap: f64,
    /// Allowed gap along the merge axis, as a multiple of the median box
    /// extent along that axis.
    pub gap_factor: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            min_overlap: 0.5,
            gap_factor: 1.0,
        }
    }
}

/// Median box extent along `direction` (mean of the middle two for even
/// counts); 0 for no boxes.
pub fn median_extent(boxes: &[CharBox], direction: MergeDirection) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    let mut extents: Vec<u32> = boxes
        .iter()
        .map(|b| {
            let ((s, e), _) = b.axes(direction);
            e - s
        })
        .collect();
    extents.sort_unstable();
    let mid = extents.len() / 2;
    if extents.len() % 2 == 1 {
        extents[mid] as f64
    } else {
        (extents[mid - 1] as f64 + extents[mid] as f64) / 2.0
    }
}

/// Merges with default parameters.
pub fn merge_boxes(boxes: &[CharBox], direction: MergeDirection) -> (Vec<CharBox>, usize) {
    merge_boxes_with(boxes, direction, &MergeParams::default())
}

/// Merges boxes that neighbor each other along `direction` until no pair
/// qualifies. The gap tolerance is fixed from the input boxes' median
/// extent. Returns the merged boxes (sorted) and the number of union
/// events, `boxes.len() - merged.len()`.
pub fn merge_boxes_with(boxes: &[CharBox], direction: MergeDirection, params: &MergeParams) -> (Vec<CharBox>, usize) {
    let tolerance = median_extent(boxes, direction) * params.gap_factor;
    merge_boxes_tol(boxes, direction, tolerance, params.min_overlap)
}

/// Merging with an explicit gap tolerance in pixels.
///
/// Each round unions every connected group of qualifying pairs at once,
/// so the outcome does not depend on input order.
pub fn merge_boxes_tol(
    boxes: &[CharBox],
    direction: MergeDirection,
    tolerance: f64,
    min_overlap: f64,
) -> (Vec<CharBox>, usize) {
    let mut current = boxes.to_vec();
    loop {
        let next = merge_round(&current, direction, tolerance, min_overlap);
        if next.len() == current.len() {
            break;
        }
        current = next;
    }
    current.sort();
    let merges = boxes.len() - current.len();
    (current, merges)
}

fn neighbors(a: &CharBox, b: &CharBox, direction: MergeDirection, tolerance: f64, min_overlap: f64) -> bool {
    let ((a0, a1), (ac0, ac1)) = a.axes(direction);
    let ((b0, b1), (bc0, bc1)) = b.axes(direction);
    let overlap = i64::from(ac1.min(bc1)) - i64::from(ac0.max(bc0));
    let smaller = (ac1 - ac0).min(bc1 - bc0) as f64;
    if overlap <= 0 || (overlap as f64) < min_overlap * smaller {
        return false;
    }
    let gap = i64::from(a0.max(b0)) - i64::from(a1.min(b1));
    gap as f64 <= tolerance
}

fn merge_round(boxes: &[CharBox], direction: MergeDirection, tolerance: f64, min_overlap: f64) -> Vec<CharBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by_key(|&i| boxes[i].axes(direction).0 .0);
    let mut sets = DisjointSets::new(boxes.len());
    for (k, &i) in order.iter().enumerate() {
        let end = boxes[i].axes(direction).0 .1 as f64;
        for &j in &order[k + 1..] {
            // Sorted by start: once a start lies beyond `end + tolerance`
            // every later box is too far as well.
            if boxes[j].axes(direction).0 .0 as f64 > end + tolerance {
                break;
            }
            if neighbors(&boxes[i], &boxes[j], direction, tolerance, min_overlap) {
                sets.union(i, j);
            }
        }
    }
    let mut merged: Vec<Option<CharBox>> = vec![None; boxes.len()];
    for (i, b) in boxes.iter().enumerate() {
        let root = sets.find(i);
        merged[root] = Some(merged[root].map_or(*b, |m| m.union(b)));
    }
    merged.into_iter().flatten().collect()
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;
    use proptest::prelude::*;

    fn image_with(width: u32, height: u32, ink: impl Fn(u32, u32) -> bool) -> GrayImage {
        GrayImage::from_fn(width, height, |x, y| if ink(x, y) { Luma([0]) } else { Luma([255]) })
    }

    fn b(x0: u32, y0: u32, x1: u32, y1: u32) -> CharBox {
        CharBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn blank_page_has_no_boxes() {
        let blank = GrayImage::from_pixel(50, 50, Luma([255]));
        assert!(extract_char_boxes(&blank, &ConnectedComponents::default()).unwrap().is_empty());
    }

    #[test]
    fn two_squares_give_two_boxes() {
        let img = image_with(100, 100, |x, y| {
            ((10..15).contains(&x) && (10..15).contains(&y)) || ((40..45).contains(&x) && (60..65).contains(&y))
        });
        let boxes = extract_char_boxes(&img, &ConnectedComponents::default()).unwrap();
        assert_eq!(boxes, vec![b(10, 10, 15, 15), b(40, 60, 45, 65)]);
    }

    #[test]
    fn diagonal_touch_is_connected() {
        // an L made of two strokes that only meet corner to corner
        let img = image_with(60, 60, |x, y| {
            (x == 10 && (10..20).contains(&y)) || (y == 20 && (11..20).contains(&x))
        });
        let boxes = extract_char_boxes(&img, &ConnectedComponents::default()).unwrap();
        assert_eq!(boxes, vec![b(10, 10, 20, 21)]);
    }

    #[test]
    fn specks_and_rules_are_filtered() {
        let img = image_with(100, 100, |x, y| {
            (x == 5 && y == 5) || (y == 50 && (10..90).contains(&x)) || ((30..34).contains(&x) && (30..34).contains(&y))
        });
        let boxes = extract_char_boxes(&img, &ConnectedComponents::default()).unwrap();
        assert_eq!(boxes, vec![b(30, 30, 34, 34)]);
    }

    #[test]
    fn merge_examples() {
        assert_eq!(merge_boxes(&[], MergeDirection::Vertical), (vec![], 0));
        let stacked = [b(10, 10, 20, 20), b(10, 22, 20, 32)];
        assert_eq!(merge_boxes(&stacked, MergeDirection::Vertical), (vec![b(10, 10, 20, 32)], 1));
        let (same, count) = merge_boxes(&stacked, MergeDirection::Horizontal);
        assert_eq!(count, 0);
        assert_eq!(same, stacked.to_vec());
    }

    #[test]
    fn overlap_fraction_is_enforced() {
        // side by side, overlapping by 4 of 10 rows
        let pair = [b(0, 0, 10, 10), b(12, 6, 22, 16)];
        assert_eq!(merge_boxes(&pair, MergeDirection::Horizontal).1, 0);
        let pair = [b(0, 0, 10, 10), b(12, 5, 22, 15)];
        assert_eq!(merge_boxes(&pair, MergeDirection::Horizontal).1, 1);
    }

    #[test]
    fn merging_chains_until_fixpoint() {
        let row: Vec<CharBox> = (0..6).map(|i| b(i * 12, 0, i * 12 + 10, 10)).collect();
        let (merged, count) = merge_boxes(&row, MergeDirection::Horizontal);
        assert_eq!(count, 5);
        assert_eq!(merged, vec![b(0, 0, 70, 10)]);
    }

    #[test]
    fn command_backend_parses_boxes() {
        let backend = CommandBackend::new(
            "sh",
            vec!["-c".into(), r#"echo '[{"x0":1,"y0":2,"x1":3,"y1":4}]'"#.into(), "sh".into()],
        );
        let img = GrayImage::from_pixel(10, 10, Luma([255]));
        assert_eq!(extract_char_boxes(&img, &backend).unwrap(), vec![b(1, 2, 3, 4)]);
    }

    #[test]
    fn command_backend_reports_failures() {
        let img = GrayImage::from_pixel(10, 10, Luma([255]));
        let missing = CommandBackend::new("/nonexistent/ocr-engine", vec![]);
        assert!(matches!(extract_char_boxes(&img, &missing), Err(DetectError::Backend { .. })));
        let outside = CommandBackend::new(
            "sh",
            vec!["-c".into(), r#"echo '[{"x0":1,"y0":2,"x1":30,"y1":4}]'"#.into(), "sh".into()],
        );
        assert!(matches!(extract_char_boxes(&img, &outside), Err(DetectError::Backend { .. })));
        let failing = CommandBackend::new("sh", vec!["-c".into(), "exit 3".into(), "sh".into()]);
        assert!(matches!(extract_char_boxes(&img, &failing), Err(DetectError::Backend { .. })));
    }

    fn arb_boxes() -> impl Strategy<Value = Vec<CharBox>> {
        proptest::collection::vec((0u32..200, 0u32..200, 1u32..20, 1u32..20), 0..40)
            .prop_map(|v| v.into_iter().map(|(x, y, w, h)| b(x, y, x + w, y + h)).collect())
    }

    proptest! {
        #[test]
        fn merge_is_order_invariant(boxes in arb_boxes(), seed in any::<u64>()) {
            let mut shuffled = boxes.clone();
            // cheap deterministic shuffle
            let n = shuffled.len();
            for i in (1..n).rev() {
                let j = (seed.wrapping_mul(i as u64 + 1) >> 7) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            for dir in [MergeDirection::Horizontal, MergeDirection::Vertical] {
                prop_assert_eq!(merge_boxes(&boxes, dir), merge_boxes(&shuffled, dir));
            }
        }

        #[test]
        fn merge_is_idempotent_at_fixpoint(boxes in arb_boxes()) {
            for dir in [MergeDirection::Horizontal, MergeDirection::Vertical] {
                let tol = median_extent(&boxes, dir);
                let (merged, _) = merge_boxes_tol(&boxes, dir, tol, 0.5);
                let (again, count) = merge_boxes_tol(&merged, dir, tol, 0.5);
                prop_assert_eq!(count, 0);
                prop_assert_eq!(again, merged);
            }
        }

        #[test]
        fn merge_directions_are_transposes(boxes in arb_boxes()) {
            let transposed: Vec<CharBox> = boxes.iter().map(CharBox::transpose).collect();
            let (h, hc) = merge_boxes(&boxes, MergeDirection::Horizontal);
            let (v, vc) = merge_boxes(&transposed, MergeDirection::Vertical);
            prop_assert_eq!(hc, vc);
            let mut back: Vec<CharBox> = v.iter().map(CharBox::transpose).collect();
            back.sort();
            prop_assert_eq!(h, back);
        }
    }
}
