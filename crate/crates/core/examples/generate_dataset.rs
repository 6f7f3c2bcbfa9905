//! Synthesize a small dataset (images, layouts, manifest.jsonl) from
//! phrase-bank texts. Rerunning reuses pages that are already on disk.
//!
//!     cargo run --example generate_dataset -- out/dataset

use tategaki::corpus::{assign_columns, fetch_with, filter_by_length, PhraseBank, GENERATION_PROMPT};
use tategaki::render::{synthesize_dataset, DatasetConfig, FontEntry};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "dataset".into());
    let bank = PhraseBank {
        seed: 3,
        ..PhraseBank::default()
    };
    let words = ["桜", "海", "雪", "猫", "川", "森", "駅", "空", "月", "風", "港", "橋"];
    let samples = words
        .iter()
        .map(|w| fetch_with(&bank, GENERATION_PROMPT, w))
        .collect::<Result<Vec<_>, _>>()?;
    let samples = assign_columns(filter_by_length(samples));

    let config = DatasetConfig {
        seed: 3,
        ..DatasetConfig::default()
    };
    let summary = synthesize_dataset(&samples, &[FontEntry::bundled()], None, &config, out.as_ref())?;
    println!(
        "{} pages ({} new, {} reused, {} rejected) in {out}/manifest.jsonl",
        summary.manifest.len(),
        summary.written,
        summary.reused,
        summary.rejects.len()
    );
    Ok(())
}
