use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::layout::WritingMode;
use crate::util::{read_jsonl, write_jsonl, BadLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Test, Split::Unassigned];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|split| split.as_str() == s)
            .ok_or_else(|| format!("unknown split {s:?} (expected train, val, test or unassigned)"))
    }
}

/// One page of a dataset. `image_path` is relative to the manifest's
/// directory unless absolute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub image_path: String,
    pub ground_truth: String,
    pub mode: WritingMode,
    pub columns: u8,
    pub font_id: String,
    pub char_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl ManifestRecord {
    pub fn split_or_unassigned(&self) -> Split {
        self.split.unwrap_or(Split::Unassigned)
    }

    pub fn stratum(&self) -> (WritingMode, u8) {
        (self.mode, self.columns)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self, HarnessError> {
        let manifest = Self { records };
        manifest.check_unique()?;
        Ok(manifest)
    }

    /// Reads a JSONL manifest. Malformed lines are returned rather than
    /// failing the whole load; duplicate ids are an error.
    pub fn load(path: &Path) -> Result<(Self, Vec<BadLine>), HarnessError> {
        let (records, bad) = read_jsonl(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok((Self::new(records)?, bad))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_jsonl(path, &self.records).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records in `split`, or all records for `None`.
    pub fn select(&self, split: Option<Split>) -> Vec<&ManifestRecord> {
        self.records
            .iter()
            .filter(|r| split.is_none_or(|s| r.split_or_unassigned() == s))
            .collect()
    }

    /// Copy of the manifest restricted to `split`.
    pub fn subset(&self, split: Option<Split>) -> Manifest {
        Manifest {
            records: self.select(split).into_iter().cloned().collect(),
        }
    }

    fn check_unique(&self) -> Result<(), HarnessError> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(HarnessError::DuplicateId(r.id.clone()));
            }
        }
        Ok(())
    }
}

/// Absolute location of a record's image given the manifest's directory.
pub fn resolve_image(base: &Path, record: &ManifestRecord) -> PathBuf {
    let path = Path::new(&record.image_path);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
