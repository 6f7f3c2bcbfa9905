//! Text acquisition: generation through a text-completion provider, local
//! file ingestion, length filtering and column-count assignment.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::http::{HttpFailure, JsonClient};
use crate::layout::WritingMode;
use crate::util::derive_seed;

/// Prompt used to ask the LLM for a themed Japanese passage.
pub const GENERATION_PROMPT: &str = "以下の単語について、その単語をテーマにした日本語の文章を出力してください。文章は500文字以上にしてください。与えられた単語が必ずしも出力に含まれている必要はありません。文章の一部に英単語や数字が含まれていてもよいです。文章の文体はどのようなものでもよく、教科書風の文章、ニュース記事、小説、エッセイ、プレスリリース、官公庁の文章、SNSなど、日本語として破綻していなければ何でもよいです。出力は文章のみとし、余計なものは出力しないでください。\n\n単語: {word}";

pub const WORD_PLACEHOLDER: &str = "{word}";

/// Inclusive length bounds, in Unicode scalar values.
pub const MIN_CHARS: usize = 100;
pub const MAX_CHARS: usize = 3000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("seed word is empty")]
    EmptyWord,
    #[error("prompt template must contain exactly one {{word}} placeholder, found {0}")]
    Template(usize),
    #[error("provider transport failed: {0}")]
    Transport(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A layout class; the writing mode stays open until rendering when the
/// dataset policy renders each text in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutClass {
    pub mode: Option<WritingMode>,
    pub columns: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_word: Option<String>,
    pub text: String,
    pub char_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout_class: Option<LayoutClass>,
}

impl TextSample {
    pub fn new(id: impl Into<String>, source_word: Option<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            source_word,
            char_count: text.chars().count(),
            text,
            layout_class: None,
        }
    }

    pub fn columns(&self) -> Option<u8> {
        self.layout_class.map(|c| c.columns)
    }
}

/// Request/response shape spoken by [`HttpProvider`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireFormat {
    /// `{model, prompt, max_tokens?, temperature?}` → `{text}`.
    #[default]
    Simple,
    /// OpenAI-style `/chat/completions`: one user message, reply read from
    /// `choices[0].message.content`.
    ChatCompletions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Total attempts per request, counting the first.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub wire_format: WireFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f32>,
    /// Environment variable holding a bearer token, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

fn default_template() -> String {
    GENERATION_PROMPT.to_string()
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    3
}

impl ProviderConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            prompt_template: default_template(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            wire_format: WireFormat::default(),
            max_tokens: None,
            temperature: None,
            api_key_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        check_template(&self.prompt_template)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.001))
    }
}

fn check_template(template: &str) -> Result<(), CorpusError> {
    match template.matches(WORD_PLACEHOLDER).count() {
        1 => Ok(()),
        n => Err(CorpusError::Template(n)),
    }
}

/// The generation prompt for `word`.
pub fn build_generation_prompt(word: &str) -> Result<String, CorpusError> {
    build_prompt_from(GENERATION_PROMPT, word)
}

pub fn build_prompt_from(template: &str, word: &str) -> Result<String, CorpusError> {
    check_template(template)?;
    if word.is_empty() {
        return Err(CorpusError::EmptyWord);
    }
    Ok(template.replacen(WORD_PLACEHOLDER, word, 1))
}

/// Single request/response text completion. Implementations must be safe
/// to call from several workers at once.
pub trait TextProvider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, CorpusError>;
}

pub struct HttpProvider {
    config: ProviderConfig,
    client: JsonClient,
    api_key: Option<String>,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, CorpusError> {
        config.validate()?;
        let api_key = config.api_key_env.as_deref().and_then(|var| std::env::var(var).ok());
        let client = JsonClient::new(config.timeout(), config.retries, Duration::from_millis(250));
        Ok(Self {
            config,
            client,
            api_key,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn request_body(&self, prompt: &str) -> Value {
        let c = &self.config;
        let mut body = match c.wire_format {
            WireFormat::Simple => json!({"model": c.model, "prompt": prompt}),
            WireFormat::ChatCompletions => json!({
                "model": c.model,
                "messages": [{"role": "user", "content": prompt}],
            }),
        };
        if let Some(n) = c.max_tokens {
            body["max_tokens"] = json!(n);
        }
        if let Some(t) = c.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn completion_text(&self, response: &Value) -> Option<String> {
        let text = match self.config.wire_format {
            WireFormat::Simple => response.get("text"),
            WireFormat::ChatCompletions => response.pointer("/choices/0/message/content"),
        };
        text.and_then(Value::as_str).map(str::to_string)
    }
}

impl TextProvider for HttpProvider {
    fn complete(&self, prompt: &str) -> Result<String, CorpusError> {
        let response = self
            .client
            .post(&self.config.endpoint, self.api_key.as_deref(), &self.request_body(prompt))
            .map_err(|e| match e {
                HttpFailure::Exhausted { .. } => CorpusError::Transport(e.to_string()),
                other => CorpusError::Provider(other.to_string()),
            })?;
        self.completion_text(&response)
            .ok_or_else(|| CorpusError::Provider(format!("no completion text in response: {response}")))
    }
}

/// Deterministic sample id for a seed word.
pub fn word_sample_id(word: &str) -> String {
    format!("gen-{:016x}", derive_seed(0, word))
}

/// Generates one text for `word` through the configured HTTP provider.
pub fn fetch_generated_text(provider: &ProviderConfig, word: &str) -> Result<TextSample, CorpusError> {
    let client = HttpProvider::new(provider.clone())?;
    fetch_with(&client, &provider.prompt_template, word)
}

pub fn fetch_with<P: TextProvider + ?Sized>(provider: &P, template: &str, word: &str) -> Result<TextSample, CorpusError> {
    let prompt = build_prompt_from(template, word)?;
    let text = provider.complete(&prompt)?;
    if text.trim().is_empty() {
        return Err(CorpusError::Provider(format!("empty completion for {word:?}")));
    }
    Ok(TextSample::new(word_sample_id(word), Some(word.to_string()), text))
}

/// Fetches one text per word in parallel; results keep the word order.
pub fn fetch_many<P: TextProvider + ?Sized>(
    provider: &P,
    template: &str,
    words: &[String],
) -> Vec<Result<TextSample, CorpusError>> {
    words.par_iter().map(|w| fetch_with(provider, template, w)).collect()
}

/// Offline provider assembling passages from a fixed bank of sentence
/// patterns. Output depends only on the seed and the prompt, so it stands
/// in for an LLM in tests and demos.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseBank {
    pub seed: u64,
    pub min_chars: usize,
    pub max_chars: usize,
}

impl Default for PhraseBank {
    fn default() -> Self {
        Self {
            seed: 0,
            min_chars: 120,
            max_chars: 1600,
        }
    }
}

const BANK: &[&str] = &[
    "{w}について考えると、まず思い浮かぶのは子どもの頃の記憶である。",
    "近年、{w}をめぐる議論が各地で活発になっている。",
    "専門家によれば、{w}の歴史は想像以上に古く、江戸時代の文献にもその名が見られるという。",
    "私は毎朝、{w}のことを少しだけ思い出してから仕事に向かう。",
    "市の担当者は「{w}に関する取り組みを来年度も継続する」と説明した。",
    "{w}は地域の暮らしに深く根付いており、季節ごとに異なる表情を見せる。",
    "調査では回答者の約6割が{w}に関心があると答えた。",
    "窓の外では雨が降り続き、静かな部屋に{w}の話題だけが残った。",
    "教科書では、{w}は社会の変化を映す鏡として紹介されている。",
    "週末に友人と{w}を見に出かけたところ、思いがけない発見があった。",
    "新しい技術の登場により、{w}のあり方は大きく変わりつつある。",
    "祖母はよく{w}にまつわる昔話を聞かせてくれた。",
    "SNSでは{w}の写真が話題となり、多くの人が感想を書き込んだ。",
    "一方で、{w}には解決すべき課題も少なくない。",
    "本日、当社は{w}に関する新しいサービスを発表いたしました。",
    "夕暮れの商店街を歩きながら、彼女は{w}の意味を考え続けた。",
    "2024年の統計によると、{w}に関連する支出は前年より増加している。",
    "このように、{w}は私たちの生活と切り離せない存在である。",
    "旅先で出会った老人は、{w}こそが町の誇りだと語った。",
    "今後も{w}の魅力を次の世代へ伝えていくことが求められる。",
    "小説の主人公は、遠い日の{w}を胸に抱えたまま大人になった。",
    "関係者は安全面にも十分配慮しながら{w}の準備を進めている。",
];

impl PhraseBank {
    fn passage(&self, word: &str) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, word));
        let target = rng.random_range(self.min_chars..=self.max_chars.max(self.min_chars));
        let mut text = String::new();
        let mut count = 0;
        while count < target {
            let sentence = BANK.choose(&mut rng).expect("bank is not empty").replace("{w}", word);
            count += sentence.chars().count();
            text.push_str(&sentence);
            if rng.random_bool(0.15) {
                text.push('\n');
                count += 1;
            }
        }
        text.trim_end().to_string()
    }
}

impl TextProvider for PhraseBank {
    fn complete(&self, prompt: &str) -> Result<String, CorpusError> {
        // The seed word follows the last "単語: " marker, or is the whole
        // prompt if there is none.
        let word = prompt.rsplit("単語: ").next().unwrap_or(prompt).trim();
        if word.is_empty() {
            return Err(CorpusError::EmptyWord);
        }
        Ok(self.passage(word))
    }
}

/// A file that could not be turned into a sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// One sample per regular file in `dir`, in file-name order. The id is the
/// file stem; a trailing line break is dropped.
pub fn ingest_text_files(dir: &Path) -> Result<(Vec<TextSample>, Vec<SkippedFile>), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        if entry.file_type().map_err(io_err)?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort();

    let mut samples: Vec<TextSample> = Vec::new();
    let mut skipped = Vec::new();
    let mut skip = |path: &Path, reason: String| {
        log::warn!("skipping {}: {reason}", path.display());
        skipped.push(SkippedFile {
            path: path.to_path_buf(),
            reason,
        });
    };
    for path in paths {
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
            skip(&path, "file name is not valid UTF-8".into());
            continue;
        };
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                skip(&path, e.to_string());
                continue;
            }
        };
        let text = match String::from_utf8(bytes) {
            Ok(t) => t,
            Err(e) => {
                skip(&path, format!("invalid UTF-8: {}", e.utf8_error()));
                continue;
            }
        };
        if samples.iter().any(|s| s.id == id) {
            skip(&path, format!("duplicate id {id:?}"));
            continue;
        }
        let text = text.strip_suffix('\n').map(|t| t.strip_suffix('\r').unwrap_or(t)).unwrap_or(&text);
        samples.push(TextSample::new(id, None, text));
    }
    Ok((samples, skipped))
}

pub fn filter_by_length(samples: Vec<TextSample>) -> Vec<TextSample> {
    samples
        .into_iter()
        .filter(|s| (MIN_CHARS..=MAX_CHARS).contains(&s.char_count))
        .collect()
}

/// Column count for 0-based rank `rank` (longest first) among `n`.
pub fn columns_for_rank(rank: usize, n: usize) -> u8 {
    (4 - (4 * rank) / n) as u8
}

/// Sorts by length (longest first, ties by id) and gives the longest
/// quarter four columns, the next three, then two, then one. Any writing
/// mode already assigned is kept.
pub fn assign_columns(mut samples: Vec<TextSample>) -> Vec<TextSample> {
    samples.sort_by(|a, b| {
        b.char_count
            .cmp(&a.char_count)
            .then_with(|| a.id.cmp(&b.id))
            .then_with(|| a.text.cmp(&b.text))
    });
    let n = samples.len();
    for (rank, sample) in samples.iter_mut().enumerate() {
        let mode = sample.layout_class.and_then(|c| c.mode);
        sample.layout_class = Some(LayoutClass {
            mode,
            columns: columns_for_rank(rank, n),
        });
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn sample(id: &str, len: usize) -> TextSample {
        TextSample::new(id, None, "あ".repeat(len))
    }

    #[test]
    fn prompt_substitution() {
        let p = build_generation_prompt("桜").unwrap();
        assert!(p.starts_with("以下の単語について、その単語をテーマにした日本語の文章を出力してください。"));
        assert!(p.ends_with("\n\n単語: 桜"));
        assert!(matches!(build_generation_prompt(""), Err(CorpusError::EmptyWord)));
        assert!(matches!(build_prompt_from("no placeholder", "桜"), Err(CorpusError::Template(0))));
        assert!(matches!(build_prompt_from("{word}{word}", "桜"), Err(CorpusError::Template(2))));
    }

    #[test]
    fn char_count_is_scalar_count() {
        // か + combining dakuten is two scalars
        assert_eq!(TextSample::new("a", None, "か\u{3099}").char_count, 2);
    }

    #[test]
    fn length_filter_bounds_are_inclusive() {
        let s: Vec<_> = [99, 100, 3000, 3001].iter().map(|&n| sample(&n.to_string(), n)).collect();
        let kept: Vec<usize> = filter_by_length(s).iter().map(|s| s.char_count).collect();
        assert_eq!(kept, vec![100, 3000]);
        assert!(filter_by_length(vec![]).is_empty());
    }

    #[test]
    fn column_quartiles() {
        let eight: Vec<_> = (0..8).map(|i| sample(&format!("s{i}"), 100 + i)).collect();
        let mut counts = BTreeMap::new();
        for s in assign_columns(eight) {
            *counts.entry(s.columns().unwrap()).or_insert(0) += 1;
        }
        assert_eq!(counts, BTreeMap::from([(1, 2), (2, 2), (3, 2), (4, 2)]));

        let ties = vec![sample("d", 5), sample("b", 5), sample("a", 5), sample("c", 5)];
        let got: Vec<(String, u8)> = assign_columns(ties).into_iter().map(|s| (s.id.clone(), s.columns().unwrap())).collect();
        let want = [("a", 4), ("b", 3), ("c", 2), ("d", 1)].map(|(i, c)| (i.to_string(), c));
        assert_eq!(got, want);

        assert_eq!(assign_columns(vec![sample("x", 1)])[0].columns(), Some(4));
    }

    #[test]
    fn ingest_reports_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..4 {
            std::fs::write(dir.path().join(format!("t{i}.txt")), format!("本文{i}\n")).unwrap();
        }
        std::fs::write(dir.path().join("bad.txt"), [0xe3, 0x81, 0xff, 0x41]).unwrap();
        let (samples, skipped) = ingest_text_files(dir.path()).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(samples[0].id, "t0");
        assert_eq!(samples[0].text, "本文0");
        assert_eq!(skipped.len(), 1);
        assert!(skipped[0].path.ends_with("bad.txt"));

        let empty = tempfile::tempdir().unwrap();
        assert_eq!(ingest_text_files(empty.path()).unwrap().0, vec![]);
    }

    #[test]
    fn phrase_bank_is_deterministic() {
        let bank = PhraseBank::default();
        let a = fetch_with(&bank, GENERATION_PROMPT, "桜").unwrap();
        let b = fetch_with(&bank, GENERATION_PROMPT, "桜").unwrap();
        assert_eq!(a, b);
        assert!(a.char_count >= bank.min_chars);
        assert_eq!(a.source_word.as_deref(), Some("桜"));
        let other = fetch_with(&PhraseBank { seed: 1, ..bank }, GENERATION_PROMPT, "桜").unwrap();
        assert_ne!(a.text, other.text);
    }

    struct Canned(&'static str);

    impl TextProvider for Canned {
        fn complete(&self, _: &str) -> Result<String, CorpusError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn empty_completion_is_an_error() {
        assert!(matches!(fetch_with(&Canned(""), GENERATION_PROMPT, "桜"), Err(CorpusError::Provider(_))));
        assert!(matches!(fetch_with(&Canned(" \n"), GENERATION_PROMPT, "桜"), Err(CorpusError::Provider(_))));
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(lens in proptest::collection::vec(0usize..3200, 0..20)) {
            let s: Vec<_> = lens.iter().enumerate().map(|(i, &n)| sample(&i.to_string(), n)).collect();
            let once = filter_by_length(s);
            prop_assert_eq!(filter_by_length(once.clone()), once);
        }

        #[test]
        fn assignment_is_permutation_invariant(
            lens in proptest::collection::vec(0usize..50, 1..30),
            rot in any::<usize>(),
        ) {
            let s: Vec<_> = lens.iter().enumerate().map(|(i, &n)| sample(&format!("{i:03}"), n)).collect();
            let mut shuffled = s.clone();
            shuffled.reverse();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            prop_assert_eq!(assign_columns(s), assign_columns(shuffled));
        }

        #[test]
        fn quartiles_are_exact_for_multiples_of_four(k in 1usize..20) {
            let n = 4 * k;
            let s: Vec<_> = (0..n).map(|i| sample(&i.to_string(), i)).collect();
            let assigned = assign_columns(s);
            for c in 1..=4u8 {
                prop_assert_eq!(assigned.iter().filter(|s| s.columns() == Some(c)).count(), k);
            }
        }

        #[test]
        fn prompt_length_formula(word in "[ぁ-ん一-龯a-z]{1,12}") {
            let p = build_generation_prompt(&word).unwrap();
            let expected = GENERATION_PROMPT.chars().count() - WORD_PLACEHOLDER.chars().count() + word.chars().count();
            prop_assert_eq!(p.chars().count(), expected);
        }
    }
}
