//! Command-line front end. [`Cli`] is the argument grammar, [`run`]
//! executes it. Exit codes: 0 success, 1 partial failure (rejected pages,
//! skipped inputs, failed predictions or malformed lines), 2 configuration
//! or fatal input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    assign_columns, fetch_many, filter_by_length, ingest_text_files, CorpusError, HttpProvider, PhraseBank,
    TextProvider, TextSample, GENERATION_PROMPT,
};
use crate::detect::{detect_with, BoxBackend, CommandBackend, ConnectedComponents, DetectionVerdict, ProfileEvidence};
use crate::harness::{
    aggregate_report, compute_stats, render_text, resolve_image, run_inference, score_predictions, split_dataset,
    AdapterConfig, DatasetStats, Grouping, HarnessError, Manifest, Prediction, ReportTable, ScoreRun, ScoredSample,
    Split, SplitRatios,
};
use crate::render::{load_font_collection, synthesize_dataset, FontEntry, RenderError};
use crate::score::REPETITION_PATTERN;
use crate::util::{read_jsonl, write_atomic, write_jsonl};

mod config;

pub use config::{
    CorpusConfig, CorpusSource, DetectConfig, GenerateConfig, GlobalConfig, PathsConfig, ReportConfig, CONFIG_HELP,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(2)
    }
}

/// How a command that did not fail outright went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
}

impl Outcome {
    fn from_problems(count: usize) -> Self {
        if count == 0 {
            Outcome::Success
        } else {
            Outcome::Partial
        }
    }

    pub fn exit_code(self) -> ExitCode {
        match self {
            Outcome::Success => ExitCode::SUCCESS,
            Outcome::Partial => ExitCode::from(1),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tategaki", version, about, after_long_help = CONFIG_HELP)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (overrides the config; 0 = one per logical CPU).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MockAdapter {
    Echo,
    HorizontalOrder,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate texts for seed words through the configured provider and
    /// store them as `<id>.txt` files.
    Fetch {
        /// Output directory for the text files.
        #[arg(long)]
        out: PathBuf,
        /// Seed words (in addition to corpus.words / corpus.words_file).
        words: Vec<String>,
    },
    /// Build a dataset: texts, layouts, images and manifest.jsonl.
    Generate {
        /// Directory of text files (overrides paths.corpus, implies source = files).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Font directory (overrides paths.fonts).
        #[arg(long)]
        fonts: Option<PathBuf>,
        /// Output directory (overrides paths.output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flag page images that contain vertical writing.
    Detect {
        /// A directory of PNG/JPEG images or a manifest.jsonl.
        input: PathBuf,
        /// Where to write one verdict per image.
        #[arg(long, default_value = "verdicts.jsonl")]
        out: PathBuf,
    },
    /// Assign train/val/test labels within each layout class.
    Split {
        manifest: PathBuf,
        /// Output manifest; defaults to rewriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ratios as TRAIN:VAL:TEST (overrides the config).
        #[arg(long)]
        ratios: Option<String>,
    },
    /// Image count and character-length statistics per split.
    Stats {
        manifest: PathBuf,
        /// Only this split.
        #[arg(long)]
        split: Option<Split>,
    },
    /// Transcribe manifest images with the configured model adapter.
    Infer {
        manifest: PathBuf,
        /// Only records in this split.
        #[arg(long)]
        split: Option<Split>,
        /// Directory for predictions.jsonl and failures.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Use a built-in mock instead of the configured adapter.
        #[arg(long, value_enum)]
        mock: Option<MockAdapter>,
    },
    /// Score predictions against a manifest and write the report.
    Score {
        /// predictions.jsonl with {id, text} lines.
        #[arg(required_unless_present = "show_pattern")]
        predictions: Option<PathBuf>,
        #[arg(required_unless_present = "show_pattern")]
        manifest: Option<PathBuf>,
        /// Directory for scores.jsonl, report.json and report.txt.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Model label (overrides inference.name).
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_enum)]
        grouping: Option<GroupingArg>,
        /// Print the repetition-removal pattern and exit.
        #[arg(long)]
        show_pattern: bool,
    },
    /// Combine scores.jsonl files (one per model) into one report.
    Report {
        /// scores.jsonl files; the model label is the parent directory name.
        #[arg(required = true)]
        scores: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum)]
        grouping: Option<GroupingArg>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupingArg {
    Layout,
    Single,
}

impl From<GroupingArg> for Grouping {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::Layout => Grouping::Layout,
            GroupingArg::Single => Grouping::Single,
        }
    }
}

/// Loads the configuration and applies the global flags.
pub fn effective_config(cli: &Cli) -> Result<GlobalConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => GlobalConfig::load(path)?,
        None => GlobalConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        config.jobs = jobs;
    }
    Ok(config)
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let config = effective_config(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, config))
}

fn dispatch(command: Command, config: GlobalConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Fetch { out, words } => cmd_fetch(&config, &out, words),
        Command::Generate { corpus, fonts, out } => {
            let mut config = config;
            if let Some(dir) = corpus {
                config.paths.corpus = Some(dir);
                config.corpus.source = CorpusSource::Files;
            }
            if let Some(dir) = fonts {
                config.paths.fonts = Some(dir);
            }
            if let Some(dir) = out {
                config.paths.output = dir;
            }
            cmd_generate(&config)
        }
        Command::Detect { input, out } => cmd_detect(&config, &input, &out),
        Command::Split { manifest, out, ratios } => {
            let ratios = match ratios {
                Some(r) => parse_ratios(&r)?,
                None => config.split,
            };
            cmd_split(&manifest, out.as_deref().unwrap_or(&manifest), &ratios, config.seed)
        }
        Command::Stats { manifest, split } => cmd_stats(&manifest, split),
        Command::Infer {
            manifest,
            split,
            out,
            mock,
        } => {
            let mut inference = config.inference.clone();
            if let Some(mock) = mock {
                inference.adapter = match mock {
                    MockAdapter::Echo => AdapterConfig::Echo,
                    MockAdapter::HorizontalOrder => AdapterConfig::HorizontalOrder,
                };
            }
            cmd_infer(&inference, &manifest, split, &out)
        }
        Command::Score {
            predictions,
            manifest,
            out,
            model,
            grouping,
            show_pattern,
        } => {
            if show_pattern {
                println!("{REPETITION_PATTERN}");
                return Ok(Outcome::Success);
            }
            let (Some(predictions), Some(manifest)) = (predictions, manifest) else {
                return Err(CliError::Config("score needs PREDICTIONS and MANIFEST".into()));
            };
            let model = model.unwrap_or_else(|| config.inference.name.clone());
            let grouping = grouping.map_or(config.report.grouping, Grouping::from);
            cmd_score(&predictions, &manifest, &out, &model, grouping)
        }
        Command::Report { scores, out, grouping } => {
            cmd_report(&scores, &out, grouping.map_or(config.report.grouping, Grouping::from))
        }
        Command::Config => {
            print!("{}", config.to_toml());
            Ok(Outcome::Success)
        }
    }
}

fn parse_ratios(text: &str) -> Result<SplitRatios, CliError> {
    let parts: Vec<u32> = text
        .split(':')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--ratios {text:?}: {e}")))?;
    match parts[..] {
        [train, val, test] => Ok(SplitRatios { train, val, test }),
        _ => Err(CliError::Config(format!("--ratios {text:?}: expected TRAIN:VAL:TEST"))),
    }
}

fn text_provider(config: &GlobalConfig) -> Result<(Box<dyn TextProvider>, String), CliError> {
    match config.corpus.source {
        CorpusSource::Provider => {
            let p = config
                .corpus
                .provider
                .clone()
                .ok_or_else(|| CliError::Config("corpus.source = \"provider\" needs a [corpus.provider] table".into()))?;
            let template = p.prompt_template.clone();
            Ok((Box::new(HttpProvider::new(p)?), template))
        }
        CorpusSource::PhraseBank => Ok((
            Box::new(PhraseBank {
                seed: config.seed,
                min_chars: config.corpus.phrase_bank_min_chars,
                max_chars: config.corpus.phrase_bank_max_chars,
            }),
            GENERATION_PROMPT.to_string(),
        )),
        CorpusSource::Files => Err(CliError::Config(
            "texts are read from files; set corpus.source to \"provider\" or \"phrase_bank\" to generate them".into(),
        )),
    }
}

/// Texts for the run and the number of inputs that had to be skipped.
fn collect_samples(config: &GlobalConfig) -> Result<(Vec<TextSample>, usize), CliError> {
    if config.corpus.source == CorpusSource::Files {
        let dir = config
            .paths
            .corpus
            .as_ref()
            .ok_or_else(|| CliError::Config("no corpus directory: set paths.corpus or pass --corpus".into()))?;
        let (samples, skipped) = ingest_text_files(dir)?;
        for s in &skipped {
            eprintln!("skipped {}: {}", s.path.display(), s.reason);
        }
        return Ok((samples, skipped.len()));
    }
    let words = config.corpus.seed_words()?;
    if words.is_empty() {
        return Err(CliError::Config("no seed words: set corpus.words or corpus.words_file".into()));
    }
    let (provider, template) = text_provider(config)?;
    let mut samples = Vec::new();
    let mut failed = 0;
    for (word, result) in words.iter().zip(fetch_many(provider.as_ref(), &template, &words)) {
        match result {
            Ok(s) => samples.push(s),
            Err(e) => {
                eprintln!("no text for {word:?}: {e}");
                failed += 1;
            }
        }
    }
    Ok((samples, failed))
}

fn cmd_fetch(config: &GlobalConfig, out: &Path, extra: Vec<String>) -> Result<Outcome, CliError> {
    let mut config = config.clone();
    if config.corpus.source == CorpusSource::Files {
        config.corpus.source = CorpusSource::Provider;
    }
    config.corpus.words.extend(extra);
    let (samples, failed) = collect_samples(&config)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for s in &samples {
        let path = out.join(format!("{}.txt", s.id));
        write_atomic(&path, s.text.as_bytes()).map_err(|e| CliError::io(&path, e))?;
    }
    println!("fetched {} text(s) into {}, {failed} failed", samples.len(), out.display());
    Ok(Outcome::from_problems(failed))
}

/// Corpus → length filter → column assignment → fonts → rendering.
pub fn cmd_generate(config: &GlobalConfig) -> Result<Outcome, CliError> {
    let (mut samples, skipped) = collect_samples(config)?;
    let total = samples.len();
    if config.corpus.filter_length {
        samples = filter_by_length(samples);
    }
    let filtered = total - samples.len();
    let samples = assign_columns(samples);

    let (fonts, fallback) = match &config.paths.fonts {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(CliError::Config(format!(
                    "font directory {} does not exist; set paths.fonts or pass --fonts",
                    dir.display()
                )));
            }
            let (fonts, bad) = load_font_collection(dir)?;
            for b in bad {
                eprintln!("skipped font {}: {}", b.path.display(), b.reason);
            }
            let fallback = match &config.paths.fallback_font {
                Some(path) => FontEntry::load(path)?,
                None => FontEntry::bundled(),
            };
            (fonts, Some(fallback))
        }
        None => {
            let font = match &config.paths.fallback_font {
                Some(path) => FontEntry::load(path)?,
                None => FontEntry::bundled(),
            };
            (vec![font], None)
        }
    };

    let out = &config.paths.output;
    let summary = synthesize_dataset(&samples, &fonts, fallback.as_ref(), &config.generate.dataset_config(config.seed), out)?;
    println!(
        "{} page(s) in {} ({} rendered, {} reused), {} text(s) outside the length bounds, {} rejected",
        summary.manifest.len(),
        out.join("manifest.jsonl").display(),
        summary.written,
        summary.reused,
        filtered,
        summary.rejects.len()
    );
    for r in &summary.rejects {
        eprintln!("rejected {}: {}", r.id, r.reason);
    }
    Ok(Outcome::from_problems(summary.rejects.len() + skipped))
}

/// One line of `verdicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Writing mode recorded in the manifest, when the input is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_vertical: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<DetectionVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Stage-1 evidence kept when stage 2 failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileEvidence>,
}

/// Image path, manifest id and whether the manifest says vertical.
type DetectInput = (PathBuf, Option<String>, Option<bool>);

fn detect_inputs(input: &Path) -> Result<Vec<DetectInput>, CliError> {
    if input.is_dir() {
        let entries = std::fs::read_dir(input).map_err(|e| CliError::io(input, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            })
            .collect();
        paths.sort();
        return Ok(paths.into_iter().map(|p| (p, None, None)).collect());
    }
    let (manifest, bad) = Manifest::load(input)?;
    for b in &bad {
        eprintln!("{}:{}: {}", input.display(), b.line_number, b.message);
    }
    let base = input.parent().unwrap_or(Path::new("."));
    Ok(manifest
        .records
        .iter()
        .map(|r| {
            (
                resolve_image(base, r),
                Some(r.id.clone()),
                Some(r.mode == crate::layout::WritingMode::Vertical),
            )
        })
        .collect())
}

fn load_gray(path: &Path) -> Result<GrayImage, String> {
    image::open(path).map(|i| i.to_luma8()).map_err(|e| e.to_string())
}

fn cmd_detect(config: &GlobalConfig, input: &Path, out: &Path) -> Result<Outcome, CliError> {
    let backend: Box<dyn BoxBackend> = match config.detect.command.split_first() {
        Some((program, args)) => Box::new(CommandBackend::new(program.clone(), args.to_vec())),
        None => Box::new(ConnectedComponents {
            min_area: config.detect.min_area,
            max_dim_fraction: config.detect.max_dim_fraction,
        }),
    };
    let params = config.detect.merge_params();
    let inputs = detect_inputs(input)?;
    let records: Vec<VerdictRecord> = inputs
        .par_iter()
        .map(|(path, id, expected)| {
            let mut record = VerdictRecord {
                path: path.display().to_string(),
                id: id.clone(),
                expected_vertical: *expected,
                verdict: None,
                error: None,
                profile: None,
            };
            match load_gray(path) {
                Err(e) => record.error = Some(e),
                Ok(image) => match detect_with(&image, backend.as_ref(), &params) {
                    Ok(v) => record.verdict = Some(v),
                    Err(f) => {
                        record.error = Some(f.to_string());
                        record.profile = f.profile;
                    }
                },
            }
            record
        })
        .collect();
    write_jsonl(out, &records).map_err(|e| CliError::io(out, e))?;

    let errors = records.iter().filter(|r| r.error.is_some()).count();
    let vertical = records.iter().filter(|r| r.verdict.as_ref().is_some_and(|v| v.is_vertical)).count();
    println!(
        "{} image(s): {vertical} vertical, {} not vertical, {errors} error(s); verdicts in {}",
        records.len(),
        records.len() - vertical - errors,
        out.display()
    );
    for (label, want) in [("vertical", true), ("horizontal", false)] {
        let judged: Vec<bool> = records
            .iter()
            .filter(|r| r.expected_vertical == Some(want))
            .filter_map(|r| r.verdict.as_ref().map(|v| v.is_vertical == want))
            .collect();
        if !judged.is_empty() {
            let correct = judged.iter().filter(|&&c| c).count();
            println!("{label} pages flagged correctly: {correct}/{}", judged.len());
        }
    }
    Ok(Outcome::from_problems(errors))
}

fn cmd_split(manifest: &Path, out: &Path, ratios: &SplitRatios, seed: u64) -> Result<Outcome, CliError> {
    let (m, bad) = Manifest::load(manifest)?;
    for b in &bad {
        eprintln!("{}:{}: {}", manifest.display(), b.line_number, b.message);
    }
    let split = split_dataset(&m, ratios, seed)?;
    split.save(out)?;
    for s in [Split::Train, Split::Val, Split::Test] {
        println!("{s}: {}", split.select(Some(s)).len());
    }
    Ok(Outcome::from_problems(bad.len()))
}

#[derive(Debug, Serialize)]
struct StatsLine {
    split: String,
    #[serde(flatten)]
    stats: DatasetStats,
}

fn cmd_stats(manifest: &Path, split: Option<Split>) -> Result<Outcome, CliError> {
    let (m, bad) = Manifest::load(manifest)?;
    for b in &bad {
        eprintln!("{}:{}: {}", manifest.display(), b.line_number, b.message);
    }
    let selections: Vec<Option<Split>> = match split {
        Some(s) => vec![Some(s)],
        None => vec![None, Some(Split::Train), Some(Split::Val), Some(Split::Test)],
    };
    for sel in selections {
        let line = StatsLine {
            split: sel.map_or_else(|| "all".to_string(), |s| s.to_string()),
            stats: compute_stats(&m, sel),
        };
        println!("{}", serde_json::to_string(&line).expect("stats serialize"));
    }
    Ok(Outcome::from_problems(bad.len()))
}

fn cmd_infer(
    inference: &crate::harness::InferenceConfig,
    manifest: &Path,
    split: Option<Split>,
    out: &Path,
) -> Result<Outcome, CliError> {
    let (m, bad) = Manifest::load(manifest)?;
    for b in &bad {
        eprintln!("{}:{}: {}", manifest.display(), b.line_number, b.message);
    }
    let subset = m.subset(split);
    let adapter = inference.build_adapter();
    let base = manifest.parent().unwrap_or(Path::new("."));
    let summary = run_inference(inference, adapter.as_ref(), &subset, base, out)?;
    println!(
        "{} prediction(s) in {} ({} new, {} reused), {} failure(s)",
        summary.predictions.len(),
        out.join("predictions.jsonl").display(),
        summary.new,
        summary.reused,
        summary.failures.len()
    );
    Ok(Outcome::from_problems(summary.failures.len() + bad.len()))
}

fn write_report(out: &Path, tables: &[ReportTable]) -> Result<String, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let json_path = out.join("report.json");
    let json = serde_json::to_string_pretty(tables).expect("report serializes");
    write_atomic(&json_path, format!("{json}\n").as_bytes()).map_err(|e| CliError::io(&json_path, e))?;
    let text = render_text(tables);
    let text_path = out.join("report.txt");
    write_atomic(&text_path, text.as_bytes()).map_err(|e| CliError::io(&text_path, e))?;
    Ok(text)
}

/// Scores predictions and writes `scores.jsonl`, `report.json` and
/// `report.txt` into `out`.
pub fn cmd_score(predictions: &Path, manifest: &Path, out: &Path, model: &str, grouping: Grouping) -> Result<Outcome, CliError> {
    let (m, bad_manifest) = Manifest::load(manifest)?;
    let (preds, bad) = read_jsonl::<Prediction>(predictions).map_err(|e| CliError::io(predictions, e))?;
    for b in &bad {
        eprintln!("{}:{}: skipped malformed line: {}", predictions.display(), b.line_number, b.message);
    }
    for b in &bad_manifest {
        eprintln!("{}:{}: skipped malformed line: {}", manifest.display(), b.line_number, b.message);
    }
    let run = score_predictions(&preds, &m);
    for id in &run.unmatched {
        eprintln!("prediction {id:?} has no manifest record");
    }
    for e in &run.excluded {
        eprintln!("excluded {}: {}", e.id, e.reason);
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let scores_path = out.join("scores.jsonl");
    write_jsonl(&scores_path, &run.scored).map_err(|e| CliError::io(&scores_path, e))?;
    let table = aggregate_report(model, &run, grouping);
    print!("{}", write_report(out, &[table])?);
    Ok(Outcome::from_problems(bad.len() + bad_manifest.len() + run.unmatched.len()))
}

fn cmd_report(scores: &[PathBuf], out: &Path, grouping: Grouping) -> Result<Outcome, CliError> {
    let mut tables = Vec::new();
    let mut problems = 0;
    for path in scores {
        let (scored, bad) = read_jsonl::<ScoredSample>(path).map_err(|e| CliError::io(path, e))?;
        for b in &bad {
            eprintln!("{}:{}: skipped malformed line: {}", path.display(), b.line_number, b.message);
        }
        problems += bad.len();
        let model = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
            .unwrap_or("model")
            .to_string();
        let run = ScoreRun {
            scored,
            ..ScoreRun::default()
        };
        tables.push(aggregate_report(&model, &run, grouping));
    }
    print!("{}", write_report(out, &tables)?);
    Ok(Outcome::from_problems(problems))
}
