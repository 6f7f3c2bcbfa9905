use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tategaki::harness::{
    run_inference, AdapterConfig, InferenceConfig, Manifest, ManifestRecord, Prediction, RepeatingAdapter,
};
use tategaki::score::{char_bleu, normalize, remove_repetition};
use tategaki::WritingMode;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tategaki"))
}

fn write_config(dir: &Path, seed: u64, words: &[&str]) -> PathBuf {
    let list: Vec<String> = words.iter().map(|w| format!("{w:?}")).collect();
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        format!("seed = {seed}\n[corpus]\nsource = \"phrase_bank\"\nwords = [{}]\n", list.join(", ")),
    )
    .unwrap();
    path
}

const WORDS: [&str; 8] = ["桜", "海", "雪", "猫", "川", "森", "駅", "空"];

#[test]
fn generate_resume_and_missing_fonts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 11, &WORDS);
    let out = dir.path().join("ds");
    let status = bin().arg("--config").arg(&config).arg("generate").arg("--out").arg(&out).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let manifest_bytes = std::fs::read(out.join("manifest.jsonl")).unwrap();
    let (manifest, bad) = Manifest::load(&out.join("manifest.jsonl")).unwrap();
    assert!(bad.is_empty());
    assert_eq!(manifest.len(), 16);
    for r in &manifest.records {
        assert!(out.join(&r.image_path).is_file());
        assert!(out.join("layouts").join(format!("{}.json", r.id)).is_file());
    }

    let again = bin().arg("--config").arg(&config).arg("generate").arg("--out").arg(&out).output().unwrap();
    assert!(again.status.success());
    assert!(String::from_utf8_lossy(&again.stdout).contains("16 reused"));
    assert_eq!(std::fs::read(out.join("manifest.jsonl")).unwrap(), manifest_bytes);

    let missing = bin()
        .arg("--config")
        .arg(&config)
        .args(["generate", "--fonts", "/no/such/fonts", "--out"])
        .arg(dir.path().join("other"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("font directory"));
}

#[test]
fn unknown_config_key_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "sed = 3\n").unwrap();
    let out = bin().arg("--config").arg(&path).arg("config").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn record(id: &str, mode: WritingMode, columns: u8, ground_truth: &str) -> ManifestRecord {
    ManifestRecord {
        id: id.into(),
        image_path: format!("images/{id}.png"),
        ground_truth: ground_truth.into(),
        mode,
        columns,
        font_id: "ipaexg".into(),
        char_count: ground_truth.chars().count(),
        split: None,
    }
}

const ALPHABET: &[char] = &['あ', 'い', 'う', '縦', '書', 'き', '文', '字', '本', '日'];

fn random_text(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

fn perturb(rng: &mut ChaCha8Rng, text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(0..6) {
        match rng.random_range(0..3) {
            0 if !chars.is_empty() => {
                let i = rng.random_range(0..chars.len());
                chars.remove(i);
            }
            1 => {
                let i = rng.random_range(0..=chars.len());
                chars.insert(i, ALPHABET[rng.random_range(0..ALPHABET.len())]);
            }
            _ if !chars.is_empty() => {
                let i = rng.random_range(0..chars.len());
                chars[i] = ALPHABET[rng.random_range(0..ALPHABET.len())];
            }
            _ => {}
        }
    }
    let mut out: String = chars.into_iter().collect();
    if rng.random_bool(0.2) {
        out.push_str(&"字本".repeat(15));
    }
    out
}

/// Full-matrix Levenshtein distance.
fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn cer_oracle(pred: &str, reference: &str) -> f64 {
    let p: Vec<char> = pred.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    100.0 * levenshtein(&p, &r) as f64 / r.len() as f64
}

#[test]
fn score_report_matches_independent_aggregation() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut records = Vec::new();
    let mut preds = Vec::new();
    for i in 0..100 {
        let mode = WritingMode::ALL[i % 2];
        let columns = (i / 2 % 4) as u8 + 1;
        let len = rng.random_range(5..60);
        let truth = random_text(&mut rng, len);
        let pred = perturb(&mut rng, &truth);
        let id = format!("s{i:03}");
        records.push(record(&id, mode, columns, &truth));
        preds.push(Prediction {
            id,
            text: pred,
            latency_ms: None,
            prompt_tokens: None,
            completion_tokens: None,
        });
    }
    let manifest_path = dir.path().join("manifest.jsonl");
    Manifest::new(records.clone()).unwrap().save(&manifest_path).unwrap();
    let pred_path = dir.path().join("predictions.jsonl");
    let mut lines: Vec<String> = preds.iter().map(|p| serde_json::to_string(p).unwrap()).collect();
    lines.insert(40, "{not json".into());
    std::fs::write(&pred_path, lines.join("\n") + "\n").unwrap();

    let out = dir.path().join("report");
    let status = bin().arg("score").arg(&pred_path).arg(&manifest_path).arg("--out").arg(&out).args(["--model", "m"]).output().unwrap();
    // The malformed line makes the run partial but does not stop it.
    assert_eq!(status.status.code(), Some(1), "{}", String::from_utf8_lossy(&status.stderr));

    let mut cells: BTreeMap<(String, u8), Vec<[f64; 4]>> = BTreeMap::new();
    for (r, p) in records.iter().zip(&preds) {
        assert_eq!(normalize(&r.ground_truth), r.ground_truth);
        let collapsed = remove_repetition(&p.text);
        let row = [
            cer_oracle(&p.text, &r.ground_truth),
            cer_oracle(&collapsed, &r.ground_truth),
            char_bleu(&p.text, &r.ground_truth),
            char_bleu(&collapsed, &r.ground_truth),
        ];
        cells.entry((r.mode.as_str().to_string(), r.columns)).or_default().push(row);
    }

    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let got = report[0]["cells"].as_array().unwrap();
    assert_eq!(got.len(), 8);
    for cell in got {
        let key = (cell["mode"].as_str().unwrap().to_string(), cell["columns"].as_u64().unwrap() as u8);
        let rows = &cells[&key];
        assert_eq!(cell["n"].as_u64().unwrap() as usize, rows.len());
        for (k, name) in ["cer_raw", "cer_derepeated", "bleu_raw", "bleu_derepeated"].iter().enumerate() {
            let mean = rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
            let v = cell[name].as_f64().unwrap();
            assert!((v - mean).abs() < 1e-9, "{key:?} {name}: {v} vs {mean}");
        }
    }
    let scores = std::fs::read_to_string(out.join("scores.jsonl")).unwrap();
    assert_eq!(scores.lines().count(), 100);
}

#[test]
fn inference_resumes_and_truncates_repetition() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<ManifestRecord> = (0..6)
        .map(|i| record(&format!("r{i}"), WritingMode::Vertical, 1, "縦書きの文字を読む"))
        .collect();
    let manifest = Manifest::new(records.clone()).unwrap();
    let head = Manifest::new(records[..3].to_vec()).unwrap();
    let config = InferenceConfig {
        adapter: AdapterConfig::Repeating {
            unit: "む".into(),
            count: 500,
        },
        max_new_tokens: 64,
        ..InferenceConfig::default()
    };
    let adapter = RepeatingAdapter {
        unit: "む".into(),
        count: 500,
    };
    let out = dir.path().join("pred");
    let first = run_inference(&config, &adapter, &head, dir.path(), &out).unwrap();
    assert_eq!((first.new, first.reused), (3, 0));
    let second = run_inference(&config, &adapter, &manifest, dir.path(), &out).unwrap();
    assert_eq!((second.new, second.reused), (3, 3));
    let ids: Vec<&str> = second.predictions.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids, ["r0", "r1", "r2", "r3", "r4", "r5"]);
    for p in &second.predictions {
        assert_eq!(p.text.chars().count(), 64);
        let s = tategaki::score_pair(&p.text, "縦書きの文字を読む").unwrap();
        assert!(s.cer_derepeated < s.cer_raw);
        assert!(s.bleu_derepeated > s.bleu_raw);
    }
}

#[test]
fn inference_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = Manifest::new(vec![record("h0", WritingMode::Horizontal, 1, "横書き")]).unwrap();
    let config = InferenceConfig {
        adapter: AdapterConfig::HorizontalOrder,
        ..InferenceConfig::default()
    };
    let adapter = config.build_adapter();
    let out = dir.path().join("pred");
    let summary = run_inference(&config, adapter.as_ref(), &manifest, dir.path(), &out).unwrap();
    assert!(summary.predictions.is_empty());
    assert_eq!(summary.failures.len(), 1);
    // Missing layout metadata is an input problem and is not retried.
    assert_eq!(summary.failures[0].attempts, 1);
    let failures = std::fs::read_to_string(out.join("failures.jsonl")).unwrap();
    assert!(failures.contains("h0"));
}
