use std::collections::{HashMap, HashSet};
use std::ops::RangeInclusive;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{select_font, FontEntry, RenderError, RenderedPage};
use crate::corpus::TextSample;
use crate::harness::{Manifest, ManifestRecord};
use crate::layout::{fit_layout, layout_page_with, PageGeometry, RotationTable, WritingMode};
use crate::util::{append_jsonl, derive_seed, write_atomic, write_jsonl};

/// Accepted share of non-white pixels on a rendered page.
pub const INK_RATIO_RANGE: RangeInclusive<f64> = 0.005..=0.40;

/// Pages rendered in parallel before their results are written out.
const CHUNK: usize = 64;

/// Which writing modes each text is rendered in, unless the sample already
/// fixes its mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModePolicy {
    #[default]
    Both,
    Horizontal,
    Vertical,
}

impl ModePolicy {
    pub fn modes(self) -> &'static [WritingMode] {
        match self {
            ModePolicy::Both => &WritingMode::ALL,
            ModePolicy::Horizontal => &[WritingMode::Horizontal],
            ModePolicy::Vertical => &[WritingMode::Vertical],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Page geometry; width and height are swapped per mode so that
    /// horizontal pages are portrait and vertical pages landscape.
    pub geometry: PageGeometry,
    pub seed: u64,
    pub modes: ModePolicy,
    /// Characters drawn rotated in vertical mode.
    pub rotation: RotationTable,
    /// Use the largest font size that fits instead of `geometry.font_size`.
    pub fit_font_size: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            geometry: PageGeometry::default(),
            seed: 0,
            modes: ModePolicy::Both,
            rotation: RotationTable::default(),
            fit_font_size: true,
        }
    }
}

/// A page that could not be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub id: String,
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<WritingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<u8>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSummary {
    pub manifest: Manifest,
    /// Pages rendered by this run.
    pub written: usize,
    /// Pages kept from a previous run.
    pub reused: usize,
    pub rejects: Vec<Reject>,
}

pub fn page_id(sample_id: &str, mode: WritingMode, columns: u8) -> String {
    format!("{sample_id}_{mode}_{columns}")
}

struct Job<'a> {
    sample: &'a TextSample,
    mode: WritingMode,
    columns: u8,
    id: String,
}

impl Job<'_> {
    fn reject(&self, reason: String) -> Reject {
        Reject {
            id: self.id.clone(),
            sample_id: self.sample.id.clone(),
            mode: Some(self.mode),
            columns: Some(self.columns),
            reason,
        }
    }

    fn image_path(&self) -> String {
        format!("images/{}.png", self.id)
    }

    fn layout_path(&self) -> String {
        format!("layouts/{}.json", self.id)
    }
}

struct Rendered {
    record: ManifestRecord,
    png: Vec<u8>,
    layout_json: String,
}

fn usable_id(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && !id.contains(['/', '\\', '\0'])
}

/// Renders every sample in each configured mode into `out_dir`:
/// `images/<id>_<mode>_<columns>.png`, `layouts/<same>.json`,
/// `manifest.jsonl` and `rejects.jsonl`. Pages already listed in an
/// existing manifest whose files are present are kept, not re-rendered.
/// The final manifest lists pages in sample order, then mode order.
pub fn synthesize_dataset(
    samples: &[TextSample],
    fonts: &[FontEntry],
    fallback: Option<&FontEntry>,
    config: &DatasetConfig,
    out_dir: &Path,
) -> Result<SynthesisSummary, RenderError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RenderError::Io { path, source }
    };
    for sub in ["images", "layouts"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    }
    let manifest_path = out_dir.join("manifest.jsonl");
    let rejects_path = out_dir.join("rejects.jsonl");

    let mut previous: HashMap<String, ManifestRecord> = HashMap::new();
    if manifest_path.exists() {
        let (old, bad) = Manifest::load(&manifest_path).map_err(|e| RenderError::Io {
            path: manifest_path.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
        if !bad.is_empty() {
            log::warn!("{}: ignoring {} malformed line(s)", manifest_path.display(), bad.len());
        }
        previous = old.records.into_iter().map(|r| (r.id.clone(), r)).collect();
    }

    let mut rejects = Vec::new();
    let mut jobs = Vec::new();
    let mut ids = HashSet::new();
    for sample in samples {
        let modes: Vec<WritingMode> = match sample.layout_class.and_then(|c| c.mode) {
            Some(mode) => vec![mode],
            None => config.modes.modes().to_vec(),
        };
        let Some(columns) = sample.columns() else {
            rejects.push(Reject {
                id: sample.id.clone(),
                sample_id: sample.id.clone(),
                mode: None,
                columns: None,
                reason: "no column count assigned".into(),
            });
            continue;
        };
        for mode in modes {
            let job = Job {
                sample,
                mode,
                columns,
                id: page_id(&sample.id, mode, columns),
            };
            if !usable_id(&sample.id) {
                rejects.push(job.reject(format!("sample id {:?} is not usable as a file name", sample.id)));
            } else if !ids.insert(job.id.clone()) {
                rejects.push(job.reject("duplicate page id".into()));
            } else {
                jobs.push(job);
            }
        }
    }

    let mut done: HashMap<String, ManifestRecord> = HashMap::new();
    let mut todo = Vec::new();
    for (idx, job) in jobs.iter().enumerate() {
        let reusable = previous.remove(&job.id).filter(|r| {
            r.mode == job.mode
                && r.columns == job.columns
                && out_dir.join(job.image_path()).is_file()
                && out_dir.join(job.layout_path()).is_file()
        });
        match reusable {
            Some(record) => {
                done.insert(job.id.clone(), record);
            }
            None => todo.push(idx),
        }
    }
    let reused = done.len();

    // Restart the append log from the pages that are already complete so
    // an interrupted run leaves a manifest that a rerun can trust.
    let kept: Vec<&ManifestRecord> = jobs.iter().filter_map(|j| done.get(&j.id)).collect();
    write_jsonl(&manifest_path, &kept).map_err(io(&manifest_path))?;

    let mut written = 0;
    for chunk in todo.chunks(CHUNK) {
        let results: Vec<Result<Rendered, Reject>> = chunk
            .par_iter()
            .map(|&idx| render_job(&jobs[idx], fonts, fallback, config))
            .collect();
        let mut appended = Vec::new();
        for result in results {
            match result {
                Ok(page) => {
                    let image_path = out_dir.join(&page.record.image_path);
                    write_atomic(&image_path, &page.png).map_err(io(&image_path))?;
                    let layout_path = out_dir.join(format!("layouts/{}.json", page.record.id));
                    write_atomic(&layout_path, page.layout_json.as_bytes()).map_err(io(&layout_path))?;
                    appended.push(page.record);
                    written += 1;
                }
                Err(reject) => {
                    log::warn!("rejected {}: {}", reject.id, reject.reason);
                    rejects.push(reject);
                }
            }
        }
        append_jsonl(&manifest_path, &appended).map_err(io(&manifest_path))?;
        for record in appended {
            done.insert(record.id.clone(), record);
        }
    }

    let manifest = Manifest {
        records: jobs.iter().filter_map(|j| done.remove(&j.id)).collect(),
    };
    manifest
        .save(&manifest_path)
        .map_err(|e| RenderError::Io {
            path: manifest_path.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
    write_jsonl(&rejects_path, &rejects).map_err(io(&rejects_path))?;
    Ok(SynthesisSummary {
        manifest,
        written,
        reused,
        rejects,
    })
}

fn render_job(
    job: &Job<'_>,
    fonts: &[FontEntry],
    fallback: Option<&FontEntry>,
    config: &DatasetConfig,
) -> Result<Rendered, Reject> {
    let fail = |e: RenderError| job.reject(e.to_string());
    let geometry = config.geometry.oriented(job.mode);
    let text = &job.sample.text;
    let layout = if config.fit_font_size {
        fit_layout(text, job.mode, job.columns, &geometry, &config.rotation)
    } else {
        layout_page_with(text, job.mode, job.columns, &geometry, &config.rotation)
    }
    .map_err(|e| fail(e.into()))?;
    let font = select_font(fonts, fallback, text, derive_seed(config.seed, &job.id)).map_err(fail)?;
    let page = RenderedPage::new(job.sample.id.clone(), layout, font).map_err(fail)?;

    let ink = page.ink_ratio();
    if !INK_RATIO_RANGE.contains(&ink) {
        return Err(job.reject(format!(
            "ink ratio {:.2}% outside {:.1}%..={:.0}%",
            ink * 100.0,
            INK_RATIO_RANGE.start() * 100.0,
            INK_RATIO_RANGE.end() * 100.0
        )));
    }

    let mut png = Vec::new();
    PngEncoder::new(&mut png)
        .write_image(page.image.as_raw(), page.image.width(), page.image.height(), ExtendedColorType::L8)
        .map_err(|e| fail(RenderError::Encode(e.to_string())))?;
    let layout_json = page.layout.to_json().map_err(|e| fail(RenderError::Encode(e.to_string())))?;
    let record = ManifestRecord {
        id: job.id.clone(),
        image_path: job.image_path(),
        char_count: page.ground_truth.chars().count(),
        ground_truth: page.ground_truth,
        mode: job.mode,
        columns: job.columns,
        font_id: page.font_id,
        split: None,
    };
    Ok(Rendered {
        record,
        png,
        layout_json,
    })
}
