use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use ab_glyph::{Font, FontArc, FontRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RenderError;
use crate::corpus::SkippedFile;
use crate::score::is_whitespace;

static BUNDLED: &[u8] = include_bytes!("../../assets/fonts/ipaexg.ttf");

/// Id of the bundled fallback font (IPAex Gothic).
pub const BUNDLED_FONT_ID: &str = "ipaexg";

const FONT_EXTENSIONS: [&str; 4] = ["ttf", "otf", "ttc", "otc"];

/// A parsed font. Cloning is cheap; the coverage set is computed on first
/// use and shared between clones.
#[derive(Clone)]
pub struct FontEntry {
    pub id: String,
    pub path: Option<PathBuf>,
    font: FontArc,
    coverage: Arc<OnceLock<HashSet<char>>>,
}

impl fmt::Debug for FontEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FontEntry").field("id", &self.id).field("path", &self.path).finish()
    }
}

impl PartialEq for FontEntry {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.path == other.path
    }
}

impl FontEntry {
    /// Loads a font file (first face of a collection). The id is the file
    /// stem.
    pub fn load(path: &Path) -> Result<Self, RenderError> {
        let bad = |reason: String| RenderError::BadFont {
            path: path.to_path_buf(),
            reason,
        };
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| bad("file name is not valid UTF-8".into()))?
            .to_string();
        let bytes = std::fs::read(path).map_err(|e| bad(e.to_string()))?;
        let font = ab_glyph::FontVec::try_from_vec_and_index(bytes, 0).map_err(|e| bad(e.to_string()))?;
        let entry = Self::from_font(id, Some(path.to_path_buf()), FontArc::new(font));
        // A font without a character map cannot render anything.
        if entry.font.codepoint_ids().next().is_none() {
            return Err(bad("no character map".into()));
        }
        Ok(entry)
    }

    /// The font compiled into the crate, used when no collected font covers
    /// a text.
    pub fn bundled() -> Self {
        let font = FontRef::try_from_slice(BUNDLED).expect("bundled font parses");
        Self::from_font(BUNDLED_FONT_ID.to_string(), None, FontArc::new(font))
    }

    fn from_font(id: String, path: Option<PathBuf>, font: FontArc) -> Self {
        Self {
            id,
            path,
            font,
            coverage: Arc::new(OnceLock::new()),
        }
    }

    pub fn font(&self) -> &FontArc {
        &self.font
    }

    /// Every scalar the character map resolves to a real glyph. Built by
    /// probing the whole code space, since `codepoint_ids` reports only one
    /// scalar per glyph and would drop unified ideographs that share a
    /// glyph with a radical.
    pub fn coverage(&self) -> &HashSet<char> {
        self.coverage.get_or_init(|| {
            (0..=char::MAX as u32)
                .filter_map(char::from_u32)
                .filter(|&c| self.font.glyph_id(c).0 != 0)
                .collect()
        })
    }

    /// Whether the font has a glyph for `ch`. Whitespace needs no glyph.
    pub fn covers(&self, ch: char) -> bool {
        is_whitespace(ch) || self.font.glyph_id(ch).0 != 0
    }

    /// Scalars of `text` this font cannot draw, sorted and deduplicated.
    pub fn missing(&self, text: &str) -> Vec<char> {
        text.chars()
            .filter(|&c| !self.covers(c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn covers_text(&self, text: &str) -> bool {
        text.chars().all(|c| self.covers(c))
    }
}

/// Loads every font file in `dir` in path order. Unparseable files are
/// skipped and reported; finding no usable font is an error.
pub fn load_font_collection(dir: &Path) -> Result<(Vec<FontEntry>, Vec<SkippedFile>), RenderError> {
    let entries = std::fs::read_dir(dir).map_err(|source| RenderError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| FONT_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();

    let mut fonts: Vec<FontEntry> = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let result = FontEntry::load(&path).and_then(|font| {
            if fonts.iter().any(|f| f.id == font.id) {
                Err(RenderError::BadFont {
                    path: path.clone(),
                    reason: format!("duplicate font id {:?}", font.id),
                })
            } else {
                Ok(font)
            }
        });
        match result {
            Ok(font) => fonts.push(font),
            Err(e) => {
                log::warn!("{e}");
                skipped.push(SkippedFile {
                    path: path.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if fonts.is_empty() {
        return Err(RenderError::NoFonts(dir.to_path_buf()));
    }
    Ok((fonts, skipped))
}

/// Picks uniformly (seeded) among the fonts that cover every scalar of
/// `text`, falling back to `fallback` when none does.
pub fn select_font<'a>(
    fonts: &'a [FontEntry],
    fallback: Option<&'a FontEntry>,
    text: &str,
    seed: u64,
) -> Result<&'a FontEntry, RenderError> {
    let covering: Vec<&FontEntry> = fonts.iter().filter(|f| f.covers_text(text)).collect();
    if !covering.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok(covering[rng.random_range(0..covering.len())]);
    }
    if let Some(fb) = fallback {
        let missing = fb.missing(text);
        if missing.is_empty() {
            return Ok(fb);
        }
        return Err(RenderError::Coverage {
            font: fb.id.clone(),
            missing,
        });
    }
    // Report against the font that comes closest.
    let best = fonts
        .iter()
        .map(|f| (f.missing(text), f))
        .min_by_key(|(m, _)| m.len())
        .ok_or(RenderError::NoFontsGiven)?;
    Err(RenderError::Coverage {
        font: best.1.id.clone(),
        missing: best.0,
    })
}
