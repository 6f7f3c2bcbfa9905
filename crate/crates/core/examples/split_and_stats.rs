//! Stratified train/val/test split of a manifest and per-split length
//! statistics.
//!
//!     cargo run --example split_and_stats -- dataset/manifest.jsonl

use tategaki::harness::{compute_stats, split_dataset, Manifest, ManifestRecord, Split, SplitRatios};
use tategaki::WritingMode;

fn demo_manifest() -> Manifest {
    let records = (0..160)
        .map(|i| {
            let id = format!("p{i:03}");
            let text = "字".repeat(100 + i * 7);
            ManifestRecord {
                image_path: format!("images/{id}.png"),
                id,
                char_count: text.chars().count(),
                ground_truth: text,
                mode: WritingMode::ALL[i % 2],
                columns: (i / 2 % 4) as u8 + 1,
                font_id: "ipaexg".into(),
                split: None,
            }
        })
        .collect();
    Manifest::new(records).expect("ids are unique")
}

fn main() -> anyhow::Result<()> {
    let manifest = match std::env::args().nth(1) {
        Some(path) => Manifest::load(path.as_ref())?.0,
        None => demo_manifest(),
    };
    let split = split_dataset(&manifest, &SplitRatios::default(), 42)?;
    for selection in [None, Some(Split::Train), Some(Split::Val), Some(Split::Test)] {
        let s = compute_stats(&split, selection);
        let label = selection.map_or("all".to_string(), |s| s.to_string());
        let avg = s.avg_chars.map_or("n/a".into(), |a| format!("{a:.1}"));
        println!("{label:>5}: {:>4} images, avg {avg} chars, min {:?}, max {:?}", s.count, s.min_chars, s.max_chars);
    }
    Ok(())
}
