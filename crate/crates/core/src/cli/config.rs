use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::corpus::ProviderConfig;
use crate::detect::{ConnectedComponents, MergeParams};
use crate::harness::{Grouping, InferenceConfig, SplitRatios};
use crate::layout::{PageGeometry, RotationTable};
use crate::render::{DatasetConfig, ModePolicy};

/// Everything the `tategaki` commands read from `--config`. Every table and
/// key is optional; see [`CONFIG_HELP`] for the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub seed: u64,
    /// Worker threads; 0 means one per logical CPU.
    pub jobs: usize,
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub generate: GenerateConfig,
    pub detect: DetectConfig,
    pub split: SplitRatios,
    pub inference: InferenceConfig,
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fonts: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_font: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            fonts: None,
            fallback_font: None,
            corpus: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    #[default]
    Files,
    Provider,
    PhraseBank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub source: CorpusSource,
    pub words: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub words_file: Option<PathBuf>,
    pub filter_length: bool,
    pub phrase_bank_min_chars: usize,
    pub phrase_bank_max_chars: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<ProviderConfig>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            source: CorpusSource::Files,
            words: Vec::new(),
            words_file: None,
            filter_length: true,
            phrase_bank_min_chars: 120,
            phrase_bank_max_chars: 1600,
            provider: None,
        }
    }
}

impl CorpusConfig {
    /// Seed words from `words` followed by the non-blank lines of
    /// `words_file`.
    pub fn seed_words(&self) -> Result<Vec<String>, CliError> {
        let mut words = self.words.clone();
        if let Some(path) = &self.words_file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            words.extend(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string));
        }
        Ok(words)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub modes: ModePolicy,
    pub fit_font_size: bool,
    pub rotation: RotationTable,
    pub geometry: PageGeometry,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            modes: d.modes,
            fit_font_size: d.fit_font_size,
            rotation: d.rotation,
            geometry: d.geometry,
        }
    }
}

impl GenerateConfig {
    pub fn dataset_config(&self, seed: u64) -> DatasetConfig {
        DatasetConfig {
            geometry: self.geometry,
            seed,
            modes: self.modes,
            rotation: self.rotation.clone(),
            fit_font_size: self.fit_font_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub min_overlap: f64,
    pub gap_factor: f64,
    pub min_area: u32,
    pub max_dim_fraction: f64,
    /// External box backend: program followed by its arguments. Empty
    /// selects the built-in connected-component backend.
    pub command: Vec<String>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        let m = MergeParams::default();
        let c = ConnectedComponents::default();
        Self {
            min_overlap: m.min_overlap,
            gap_factor: m.gap_factor,
            min_area: c.min_area,
            max_dim_fraction: c.max_dim_fraction,
            command: Vec::new(),
        }
    }
}

impl DetectConfig {
    pub fn merge_params(&self) -> MergeParams {
        MergeParams {
            min_overlap: self.min_overlap,
            gap_factor: self.gap_factor,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub grouping: Grouping,
}

impl GlobalConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

/// Appended to `--help`.
pub const CONFIG_HELP: &str = r#"CONFIGURATION (--config FILE, TOML; unknown keys are rejected; `tategaki config` prints the defaults)

  seed = 0                      run seed; --seed overrides
  jobs = 0                      worker threads, 0 = one per logical CPU; --jobs overrides

  [paths]
  fonts                         font directory (.ttf/.otf/.ttc); unset = bundled IPAex Gothic only
  fallback_font                 font used when no collected font covers a text; unset = bundled
  corpus                        directory of UTF-8 text files, one document per file
  output = "out"                dataset directory written by `generate`

  [corpus]
  source = "files"              files | provider | phrase_bank (offline stand-in for an LLM)
  words = []                    seed nouns for provider / phrase_bank
  words_file                    file with one seed noun per line
  filter_length = true          keep only texts of 100..=3000 characters
  phrase_bank_min_chars = 120
  phrase_bank_max_chars = 1600

  [corpus.provider]             required when source = "provider"
  endpoint, model               POST target and model name
  prompt_template               generation prompt with one {word} placeholder; default built in
  timeout_secs = 120.0
  retries = 3                   attempts per request, counting the first
  wire_format = "simple"        simple ({model, prompt} -> {text}) | chat_completions
  max_tokens, temperature       sent only when set
  api_key_env                   environment variable holding a bearer token

  [generate]
  modes = "both"                both | horizontal | vertical
  fit_font_size = true          largest font size in 20..=48 that fits the page
  rotation                      characters drawn rotated in vertical mode; default ー〜～（）「」『』【】()[]{}<>-‐–—―

  [generate.geometry]           horizontal pages use it as portrait, vertical pages as landscape
  width = 1240
  height = 1754
  margin = 64
  column_gap = 40
  font_size = 32                used when fit_font_size = false
  line_spacing = 1.5

  [detect]
  min_overlap = 0.5             overlap across the merge axis, fraction of the smaller box
  gap_factor = 1.0              allowed gap along the merge axis, multiple of the median box extent
  min_area = 4                  built-in backend: smallest component kept, in pixels
  max_dim_fraction = 0.2        built-in backend: largest component side, fraction of the shorter page side
  command = []                  external box backend, e.g. ["ocr-boxes", "--json"]; image path appended

  [split]
  train = 8
  val = 1
  test = 1

  [inference]
  name = "model"                model label in reports
  prompt                        user prompt; default is the Japanese reading-order instruction
  max_new_tokens = 1024         use 3072 for real-world scans
  timeout_secs = 300.0
  concurrency = 4
  retries = 3                   attempts per record, counting the first

  [inference.decoding]
  kind = "greedy"               greedy | temperature (with temperature = T)

  [inference.adapter]
  kind = "echo"                 echo | horizontal_order | repeating (unit, count)
                                | command (program, args) | chat_completions (endpoint, model, api_key_env)

  [report]
  grouping = "layout"           layout (8 cells) | single

ENVIRONMENT
  RUST_LOG                      log filter, e.g. RUST_LOG=tategaki=debug
  the variables named by api_key_env hold bearer tokens
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(prefix: &str, value: &toml::Value, out: &mut Vec<(String, toml::Value)>) {
        match value {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    leaves(k, v, out);
                }
            }
            other => out.push((prefix.to_string(), other.clone())),
        }
    }

    #[test]
    fn help_lists_every_key_with_its_default() {
        let value = toml::Value::try_from(GlobalConfig::default()).unwrap();
        let mut keys = Vec::new();
        leaves("", &value, &mut keys);
        assert!(keys.len() > 30);
        for (key, v) in keys {
            assert!(CONFIG_HELP.contains(&key), "{key} missing from help");
            let scalar = match &v {
                toml::Value::String(s) if s.chars().count() > 20 => None,
                toml::Value::Array(a) if !a.is_empty() => None,
                toml::Value::Array(_) => Some("[]".to_string()),
                other => Some(other.to_string()),
            };
            if let Some(s) = scalar {
                assert!(CONFIG_HELP.contains(&format!("{key} = {s}")), "{key} = {s} missing from help");
            }
        }
    }

    #[test]
    fn defaults_round_trip_and_unknown_keys_fail() {
        let d = GlobalConfig::default();
        assert_eq!(GlobalConfig::parse(&d.to_toml()).unwrap(), d);
        assert_eq!(GlobalConfig::parse("").unwrap(), d);
        assert!(GlobalConfig::parse("sede = 1").is_err());
        assert!(GlobalConfig::parse("[detect]\ngap = 2.0").is_err());
        let c = GlobalConfig::parse("seed = 9\n[generate.geometry]\nwidth = 800\n[inference.adapter]\nkind = \"horizontal_order\"").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.generate.geometry.width, 800);
        assert_eq!(c.generate.geometry.height, 1754);
    }
}
