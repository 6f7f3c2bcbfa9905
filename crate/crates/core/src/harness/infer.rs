use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{resolve_image, HarnessError, Manifest, ManifestRecord};
use crate::http::JsonClient;
use crate::layout::PageLayout;
use crate::util::{append_jsonl, read_jsonl, write_jsonl};

/// User prompt sent with every page image.
pub const INFERENCE_PROMPT: &str =
    "この画像内のテキストを日本語の読み順に従って全て出力してください。出力は画像内のテキストのみとしてください。";

/// Default generation budget for synthetic pages.
pub const MAX_NEW_TOKENS_SYNTHETIC: u32 = 1024;
/// Default generation budget for real-world scans.
pub const MAX_NEW_TOKENS_REAL: u32 = 3072;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Decoding {
    #[default]
    Greedy,
    Temperature {
        temperature: f32,
    },
}

impl Decoding {
    pub fn temperature(self) -> f32 {
        match self {
            Decoding::Greedy => 0.0,
            Decoding::Temperature { temperature } => temperature,
        }
    }
}

/// Which model adapter to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum AdapterConfig {
    /// OpenAI-style chat completions with the page as a base64 PNG data URL.
    ChatCompletions {
        endpoint: String,
        model: String,
        /// Environment variable holding a bearer token.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
    /// Local program: `program args... <image>`; the prompt and budget are
    /// passed in `TATEGAKI_PROMPT` and `TATEGAKI_MAX_NEW_TOKENS`, the
    /// transcription is read from stdout.
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
    /// Returns the ground truth.
    Echo,
    /// Reads every page row by row, left to right, within each column band.
    HorizontalOrder,
    /// Ground truth followed by `unit` repeated `count` times.
    Repeating { unit: String, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Model name used in reports.
    pub name: String,
    pub adapter: AdapterConfig,
    pub prompt: String,
    pub max_new_tokens: u32,
    pub decoding: Decoding,
    /// Per-request timeout in seconds.
    pub timeout_secs: f64,
    /// Requests in flight at once.
    pub concurrency: usize,
    /// Attempts per record, counting the first.
    pub retries: u32,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self::new(AdapterConfig::Echo)
    }
}

impl InferenceConfig {
    pub fn new(adapter: AdapterConfig) -> Self {
        Self {
            name: "model".into(),
            adapter,
            prompt: INFERENCE_PROMPT.into(),
            max_new_tokens: MAX_NEW_TOKENS_SYNTHETIC,
            decoding: Decoding::Greedy,
            timeout_secs: 300.0,
            concurrency: 4,
            retries: 3,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.max_new_tokens == 0 {
            return Err(HarnessError::Config("max_new_tokens must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(HarnessError::Config("concurrency must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.001))
    }

    /// Instantiates the configured adapter.
    pub fn build_adapter(&self) -> Box<dyn ModelAdapter> {
        match &self.adapter {
            AdapterConfig::ChatCompletions {
                endpoint,
                model,
                api_key_env,
            } => Box::new(ChatCompletionsAdapter::new(
                endpoint.clone(),
                model.clone(),
                api_key_env.as_deref().and_then(|v| std::env::var(v).ok()),
                self.timeout(),
            )),
            AdapterConfig::Command { program, args } => Box::new(CommandAdapter {
                program: program.clone(),
                args: args.clone(),
            }),
            AdapterConfig::Echo => Box::new(EchoAdapter),
            AdapterConfig::HorizontalOrder => Box::new(HorizontalOrderAdapter),
            AdapterConfig::Repeating { unit, count } => Box::new(RepeatingAdapter {
                unit: unit.clone(),
                count: *count,
            }),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("model response: {0}")]
    Response(String),
    #[error("input: {0}")]
    Input(String),
}

/// Everything an adapter may need for one page.
#[derive(Debug, Clone, Copy)]
pub struct TranscribeRequest<'a> {
    pub record: &'a ManifestRecord,
    pub image_path: &'a Path,
    /// Layout JSON written next to the image by dataset synthesis, if any.
    pub layout_path: Option<&'a Path>,
    pub prompt: &'a str,
    pub decoding: Decoding,
    pub max_new_tokens: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcription {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl Transcription {
    fn text(text: String) -> Self {
        Self {
            text,
            ..Self::default()
        }
    }
}

/// `transcribe(image, prompt, decoding, max_new_tokens) → text`.
pub trait ModelAdapter: Send + Sync {
    fn transcribe(&self, request: &TranscribeRequest<'_>) -> Result<Transcription, AdapterError>;
}

pub struct ChatCompletionsAdapter {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: JsonClient,
}

impl ChatCompletionsAdapter {
    /// Retrying is left to [`run_inference`], so the client makes a single
    /// attempt per call.
    pub fn new(endpoint: String, model: String, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            endpoint,
            model,
            api_key,
            client: JsonClient::new(timeout, 1, Duration::ZERO),
        }
    }
}

impl ModelAdapter for ChatCompletionsAdapter {
    fn transcribe(&self, request: &TranscribeRequest<'_>) -> Result<Transcription, AdapterError> {
        let bytes = std::fs::read(request.image_path)
            .map_err(|e| AdapterError::Input(format!("{}: {e}", request.image_path.display())))?;
        let url = format!(
            "data:image/png;base64,{}",
            base64::engine::general_purpose::STANDARD.encode(bytes)
        );
        let body = json!({
            "model": self.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "image_url", "image_url": {"url": url}},
                    {"type": "text", "text": request.prompt},
                ],
            }],
            "max_tokens": request.max_new_tokens,
            "temperature": request.decoding.temperature(),
        });
        let response = self
            .client
            .post(&self.endpoint, self.api_key.as_deref(), &body)
            .map_err(|e| AdapterError::Transport(e.to_string()))?;
        let text = response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| AdapterError::Response(format!("no message content in {response}")))?;
        let usage = |key: &str| response.pointer(&format!("/usage/{key}")).and_then(Value::as_u64);
        Ok(Transcription {
            text: text.to_string(),
            prompt_tokens: usage("prompt_tokens"),
            completion_tokens: usage("completion_tokens"),
        })
    }
}

pub struct CommandAdapter {
    pub program: String,
    pub args: Vec<String>,
}

impl ModelAdapter for CommandAdapter {
    fn transcribe(&self, request: &TranscribeRequest<'_>) -> Result<Transcription, AdapterError> {
        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(request.image_path)
            .env("TATEGAKI_PROMPT", request.prompt)
            .env("TATEGAKI_MAX_NEW_TOKENS", request.max_new_tokens.to_string())
            .output()
            .map_err(|e| AdapterError::Transport(format!("{}: {e}", self.program)))?;
        if !output.status.success() {
            return Err(AdapterError::Response(format!(
                "{} exited with {}: {}",
                self.program,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let text = String::from_utf8(output.stdout).map_err(|e| AdapterError::Response(e.to_string()))?;
        Ok(Transcription::text(text))
    }
}

/// The repeating mock counts one character as one token. The echo and
/// horizontal-order mocks are layout oracles and ignore the budget.
fn truncate_tokens(text: &str, max_new_tokens: u32) -> String {
    text.chars().take(max_new_tokens as usize).collect()
}

pub struct EchoAdapter;

impl ModelAdapter for EchoAdapter {
    fn transcribe(&self, request: &TranscribeRequest<'_>) -> Result<Transcription, AdapterError> {
        Ok(Transcription::text(request.record.ground_truth.clone()))
    }
}

pub struct HorizontalOrderAdapter;

/// Characters of `layout` read row by row, left to right, within each
/// column band. For horizontal pages this is the true reading order.
pub fn horizontal_scan(layout: &PageLayout) -> String {
    let mut glyphs: Vec<_> = layout.placements.iter().collect();
    glyphs.sort_by_key(|p| (p.column_index, p.y, p.x));
    glyphs.iter().map(|p| p.ch).collect()
}

impl ModelAdapter for HorizontalOrderAdapter {
    fn transcribe(&self, request: &TranscribeRequest<'_>) -> Result<Transcription, AdapterError> {
        let path = request
            .layout_path
            .ok_or_else(|| AdapterError::Input("horizontal-order mock needs the page layout".into()))?;
        let json = std::fs::read_to_string(path).map_err(|e| AdapterError::Input(format!("{}: {e}", path.display())))?;
        let layout = PageLayout::from_json(&json).map_err(|e| AdapterError::Input(format!("{}: {e}", path.display())))?;
        Ok(Transcription::text(horizontal_scan(&layout)))
    }
}

pub struct RepeatingAdapter {
    pub unit: String,
    pub count: usize,
}

impl ModelAdapter for RepeatingAdapter {
    fn transcribe(&self, request: &TranscribeRequest<'_>) -> Result<Transcription, AdapterError> {
        let text = format!("{}{}", request.record.ground_truth, self.unit.repeat(self.count));
        Ok(Transcription::text(truncate_tokens(&text, request.max_new_tokens)))
    }
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

/// One line of `failures.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceFailure {
    pub id: String,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceSummary {
    /// Every prediction now in `predictions.jsonl`.
    pub predictions: Vec<Prediction>,
    pub new: usize,
    pub reused: usize,
    pub failures: Vec<InferenceFailure>,
}

/// Layout JSON that dataset synthesis writes for an image
/// `<dir>/images/<id>.png`, i.e. `<dir>/layouts/<id>.json`.
pub fn sibling_layout(image: &Path) -> Option<PathBuf> {
    let stem = image.file_stem()?;
    let root = image.parent()?.parent()?;
    let mut name = stem.to_os_string();
    name.push(".json");
    Some(root.join("layouts").join(name))
}

/// Transcribes every record of `manifest` (images resolved against
/// `manifest_dir`) into `out_dir/predictions.jsonl`. Records that already
/// have a prediction there are skipped. Each record gets up to
/// `config.retries` attempts; records that still fail go to
/// `out_dir/failures.jsonl`. The final prediction file lists records in
/// manifest order.
pub fn run_inference(
    config: &InferenceConfig,
    adapter: &dyn ModelAdapter,
    manifest: &Manifest,
    manifest_dir: &Path,
    out_dir: &Path,
) -> Result<InferenceSummary, HarnessError> {
    config.validate()?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let predictions_path = out_dir.join("predictions.jsonl");
    let failures_path = out_dir.join("failures.jsonl");

    let mut existing: Vec<Prediction> = Vec::new();
    if predictions_path.exists() {
        let (preds, bad) = read_jsonl::<Prediction>(&predictions_path).map_err(io(&predictions_path))?;
        if !bad.is_empty() {
            log::warn!("{}: ignoring {} malformed line(s)", predictions_path.display(), bad.len());
        }
        let mut seen = HashSet::new();
        existing = preds.into_iter().filter(|p| seen.insert(p.id.clone())).collect();
    }
    let have: HashSet<&str> = existing.iter().map(|p| p.id.as_str()).collect();
    let todo: Vec<&ManifestRecord> = manifest.records.iter().filter(|r| !have.contains(r.id.as_str())).collect();
    let reused = manifest.records.len() - todo.len();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut fresh: HashMap<String, Prediction> = HashMap::new();
    let mut failures = Vec::new();
    for chunk in todo.chunks(config.concurrency * 4) {
        let results: Vec<Result<Prediction, InferenceFailure>> =
            pool.install(|| chunk.par_iter().map(|r| transcribe_with_retries(config, adapter, r, manifest_dir)).collect());
        let mut appended = Vec::new();
        for result in results {
            match result {
                Ok(p) => appended.push(p),
                Err(f) => {
                    log::warn!("{}: failed after {} attempt(s): {}", f.id, f.attempts, f.error);
                    failures.push(f);
                }
            }
        }
        append_jsonl(&predictions_path, &appended).map_err(io(&predictions_path))?;
        fresh.extend(appended.into_iter().map(|p| (p.id.clone(), p)));
    }
    let new = fresh.len();

    let mut by_id: HashMap<String, Prediction> = existing.iter().cloned().map(|p| (p.id.clone(), p)).collect();
    by_id.extend(fresh);
    let mut predictions: Vec<Prediction> = manifest.records.iter().filter_map(|r| by_id.remove(&r.id)).collect();
    // Predictions for ids outside this manifest are kept, in file order.
    predictions.extend(existing.into_iter().filter_map(|p| by_id.remove(&p.id)));
    write_jsonl(&predictions_path, &predictions).map_err(io(&predictions_path))?;
    write_jsonl(&failures_path, &failures).map_err(io(&failures_path))?;
    Ok(InferenceSummary {
        predictions,
        new,
        reused,
        failures,
    })
}

fn transcribe_with_retries(
    config: &InferenceConfig,
    adapter: &dyn ModelAdapter,
    record: &ManifestRecord,
    manifest_dir: &Path,
) -> Result<Prediction, InferenceFailure> {
    let image_path = resolve_image(manifest_dir, record);
    let layout_path = sibling_layout(&image_path).filter(|p| p.is_file());
    let request = TranscribeRequest {
        record,
        image_path: &image_path,
        layout_path: layout_path.as_deref(),
        prompt: &config.prompt,
        decoding: config.decoding,
        max_new_tokens: config.max_new_tokens,
    };
    let attempts = config.retries.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        let start = Instant::now();
        match adapter.transcribe(&request) {
            Ok(t) => {
                return Ok(Prediction {
                    id: record.id.clone(),
                    text: t.text,
                    latency_ms: Some(start.elapsed().as_secs_f64() * 1000.0),
                    prompt_tokens: t.prompt_tokens,
                    completion_tokens: t.completion_tokens,
                })
            }
            // Bad input will not improve on retry.
            Err(e @ AdapterError::Input(_)) => {
                return Err(InferenceFailure {
                    id: record.id.clone(),
                    attempts: attempt,
                    error: e.to_string(),
                })
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(InferenceFailure {
        id: record.id.clone(),
        attempts,
        error: last,
    })
}
