use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Manifest, Prediction, Split};
use crate::layout::WritingMode;
use crate::score::{score_pair, SampleScores, ScoreError};

/// One line of `scores.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: String,
    pub mode: WritingMode,
    pub columns: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(flatten)]
    pub scores: SampleScores,
}

/// A prediction that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreRun {
    pub scored: Vec<ScoredSample>,
    /// Prediction ids absent from the manifest.
    pub unmatched: Vec<String>,
    /// Records whose reference is empty after normalization, or whose
    /// inputs are too long to score.
    pub excluded: Vec<Excluded>,
}

/// Scores each prediction against its manifest record, in prediction order.
/// Duplicate prediction ids keep the first occurrence.
pub fn score_predictions(predictions: &[Prediction], manifest: &Manifest) -> ScoreRun {
    let index: HashMap<&str, usize> = manifest.records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut seen = HashSet::new();
    let mut unmatched = Vec::new();
    let mut jobs = Vec::new();
    for p in predictions {
        if !seen.insert(p.id.as_str()) {
            continue;
        }
        match index.get(p.id.as_str()) {
            Some(&i) => jobs.push((p, &manifest.records[i])),
            None => unmatched.push(p.id.clone()),
        }
    }
    let results: Vec<Result<ScoredSample, Excluded>> = jobs
        .par_iter()
        .map(|(p, r)| {
            score_pair(&p.text, &r.ground_truth)
                .map(|scores| ScoredSample {
                    id: r.id.clone(),
                    mode: r.mode,
                    columns: r.columns,
                    split: r.split,
                    scores,
                })
                .map_err(|e: ScoreError| Excluded {
                    id: r.id.clone(),
                    reason: e.to_string(),
                })
        })
        .collect();
    let mut run = ScoreRun {
        unmatched,
        ..ScoreRun::default()
    };
    for result in results {
        match result {
            Ok(s) => run.scored.push(s),
            Err(e) => run.excluded.push(e),
        }
    }
    run
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One cell per (mode, columns), all eight always present.
    #[default]
    Layout,
    /// A single cell over everything, for real-world test sets.
    Single,
}

/// Macro means over one group; `None` metrics mark an empty cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<WritingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<u8>,
    pub n: usize,
    pub cer_raw: Option<f64>,
    pub cer_derepeated: Option<f64>,
    pub bleu_raw: Option<f64>,
    pub bleu_derepeated: Option<f64>,
}

impl ReportCell {
    pub fn label(&self) -> String {
        match (self.mode, self.columns) {
            (Some(m), Some(c)) => format!("{m}-{c}"),
            _ => "all".into(),
        }
    }

    fn from_scores<'a>(mode: Option<WritingMode>, columns: Option<u8>, scores: impl Iterator<Item = &'a SampleScores>) -> Self {
        let (mut n, mut sums) = (0usize, [0.0f64; 4]);
        for s in scores {
            n += 1;
            for (acc, v) in sums.iter_mut().zip([s.cer_raw, s.cer_derepeated, s.bleu_raw, s.bleu_derepeated]) {
                *acc += v;
            }
        }
        let mean = |i: usize| (n > 0).then(|| sums[i] / n as f64);
        Self {
            mode,
            columns,
            n,
            cer_raw: mean(0),
            cer_derepeated: mean(1),
            bleu_raw: mean(2),
            bleu_derepeated: mean(3),
        }
    }
}

/// Report for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub model: String,
    pub grouping: Grouping,
    pub cells: Vec<ReportCell>,
    pub unmatched: usize,
    pub excluded: usize,
}

pub fn aggregate_report(model: &str, run: &ScoreRun, grouping: Grouping) -> ReportTable {
    let cells = match grouping {
        Grouping::Single => vec![ReportCell::from_scores(None, None, run.scored.iter().map(|s| &s.scores))],
        Grouping::Layout => WritingMode::ALL
            .into_iter()
            .flat_map(|mode| (1..=4u8).map(move |c| (mode, c)))
            .map(|(mode, c)| {
                let members = run.scored.iter().filter(|s| s.mode == mode && s.columns == c);
                ReportCell::from_scores(Some(mode), Some(c), members.map(|s| &s.scores))
            })
            .collect(),
    };
    ReportTable {
        model: model.to_string(),
        grouping,
        cells,
        unmatched: run.unmatched.len(),
        excluded: run.excluded.len(),
    }
}

/// Marker printed for cells without scored samples.
pub const EMPTY_CELL: &str = "n/a";

/// `x` rounded to three significant figures.
pub fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.2}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = 2 - magnitude;
    if decimals >= 0 {
        format!("{x:.*}", decimals as usize)
    } else {
        let unit = 10f64.powi(-decimals);
        format!("{:.0}", (x / unit).round() * unit)
    }
}

/// Aligned plain-text rendering: one row per model, metric and variant,
/// one column per cell.
pub fn render_text(tables: &[ReportTable]) -> String {
    let Some(first) = tables.first() else {
        return format!("(no results: {EMPTY_CELL})\n");
    };
    let mut header = vec!["model".to_string(), "metric".into(), "output".into()];
    header.extend(first.cells.iter().map(ReportCell::label));
    let mut rows = vec![header.clone()];
    for t in tables {
        for (metric, variant, get) in [
            ("CER", "raw", (|c: &ReportCell| c.cer_raw) as fn(&ReportCell) -> Option<f64>),
            ("CER", "derepeated", |c| c.cer_derepeated),
            ("BLEU", "raw", |c| c.bleu_raw),
            ("BLEU", "derepeated", |c| c.bleu_derepeated),
        ] {
            let mut row = vec![t.model.clone(), metric.to_string(), variant.to_string()];
            row.extend(t.cells.iter().map(|c| get(c).map_or_else(|| EMPTY_CELL.to_string(), sig3)));
            rows.push(row);
        }
        let mut counts = vec![t.model.clone(), "n".into(), String::new()];
        counts.extend(t.cells.iter().map(|c| c.n.to_string()));
        rows.push(counts);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r.get(i).map_or(0, |s| s.chars().count())).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, &w))| if i < 3 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ManifestRecord;

    fn record(id: &str, mode: WritingMode, columns: u8, gt: &str) -> ManifestRecord {
        ManifestRecord {
            id: id.into(),
            image_path: format!("images/{id}.png"),
            ground_truth: gt.into(),
            mode,
            columns,
            font_id: "f".into(),
            char_count: gt.chars().count(),
            split: None,
        }
    }

    fn pred(id: &str, text: &str) -> Prediction {
        Prediction {
            id: id.into(),
            text: text.into(),
            latency_ms: None,
            prompt_tokens: None,
            completion_tokens: None,
        }
    }

    #[test]
    fn significant_figures() {
        assert_eq!(sig3(0.0), "0.00");
        assert_eq!(sig3(100.0), "100");
        assert_eq!(sig3(12.345), "12.3");
        assert_eq!(sig3(0.5), "0.500");
        assert_eq!(sig3(154.4), "154");
        assert_eq!(sig3(1543.0), "1540");
        assert_eq!(sig3(99.96), "100.0");
    }

    #[test]
    fn group_means_match_hand_computation() {
        let m = Manifest::new(vec![
            record("a", WritingMode::Horizontal, 1, "abcd"),
            record("b", WritingMode::Horizontal, 1, "abcd"),
            record("c", WritingMode::Vertical, 2, "abcd"),
            record("d", WritingMode::Vertical, 2, "   "),
        ])
        .unwrap();
        let preds = vec![pred("a", "abcd"), pred("b", "abce"), pred("c", ""), pred("d", "x"), pred("zz", "q")];
        let run = score_predictions(&preds, &m);
        assert_eq!(run.unmatched, vec!["zz".to_string()]);
        assert_eq!(run.excluded.len(), 1);
        let t = aggregate_report("m", &run, Grouping::Layout);
        assert_eq!(t.cells.len(), 8);
        let h1 = &t.cells[0];
        assert_eq!(h1.n, 2);
        assert!((h1.cer_raw.unwrap() - 12.5).abs() < 1e-12);
        let v2 = t.cells.iter().find(|c| c.label() == "vertical-2").unwrap();
        assert_eq!((v2.n, v2.cer_raw, v2.bleu_raw), (1, Some(100.0), Some(0.0)));
        let h4 = t.cells.iter().find(|c| c.label() == "horizontal-4").unwrap();
        assert_eq!((h4.n, h4.cer_raw), (0, None));
        assert!(render_text(&[t]).contains(EMPTY_CELL));

        let single = aggregate_report("m", &run, Grouping::Single);
        assert_eq!(single.cells.len(), 1);
        assert_eq!(single.cells[0].n, 3);
    }

    #[test]
    fn empty_report() {
        let t = aggregate_report("m", &ScoreRun::default(), Grouping::Layout);
        assert!(t.cells.iter().all(|c| c.n == 0 && c.cer_raw.is_none()));
        let text = render_text(&[t]);
        assert_eq!(text.matches(EMPTY_CELL).count(), 32);
    }
}
