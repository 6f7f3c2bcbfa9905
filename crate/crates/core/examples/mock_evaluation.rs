//! End-to-end evaluation with the built-in mock models: synthesize pages,
//! transcribe them with the echo and horizontal-order mocks, score and
//! print the layout-grouped report.
//!
//!     cargo run --example mock_evaluation -- out/eval

use std::path::PathBuf;

use tategaki::corpus::{assign_columns, fetch_with, PhraseBank, GENERATION_PROMPT};
use tategaki::harness::{aggregate_report, render_text, run_inference, score_predictions, AdapterConfig, Grouping, InferenceConfig};
use tategaki::render::{synthesize_dataset, DatasetConfig, FontEntry};

fn main() -> anyhow::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "eval".into()));
    let bank = PhraseBank::default();
    let words = ["桜", "海", "雪", "猫", "川", "森", "駅", "空"];
    let samples = words
        .iter()
        .map(|w| fetch_with(&bank, GENERATION_PROMPT, w))
        .collect::<Result<Vec<_>, _>>()?;
    let dataset = root.join("dataset");
    let manifest =
        synthesize_dataset(&assign_columns(samples), &[FontEntry::bundled()], None, &DatasetConfig::default(), &dataset)?
            .manifest;

    let mut tables = Vec::new();
    for (name, adapter) in [("echo", AdapterConfig::Echo), ("horizontal-order", AdapterConfig::HorizontalOrder)] {
        let config = InferenceConfig {
            name: name.into(),
            adapter,
            ..InferenceConfig::default()
        };
        let summary = run_inference(&config, config.build_adapter().as_ref(), &manifest, &dataset, &root.join(name))?;
        let run = score_predictions(&summary.predictions, &manifest);
        tables.push(aggregate_report(name, &run, Grouping::Layout));
    }
    print!("{}", render_text(&tables));
    Ok(())
}
