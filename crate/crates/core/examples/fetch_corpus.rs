//! Generate one text per seed word and write them as `<id>.txt`.
//!
//! Offline (phrase bank):
//!     cargo run --example fetch_corpus -- out/texts 桜 海 雪
//! Through an HTTP provider answering `{"text": ...}`:
//!     TATEGAKI_ENDPOINT=http://localhost:8000/generate TATEGAKI_MODEL=m \
//!         cargo run --example fetch_corpus -- out/texts 桜

use std::path::PathBuf;

use anyhow::Context;
use tategaki::corpus::{fetch_many, HttpProvider, PhraseBank, ProviderConfig, TextProvider, GENERATION_PROMPT};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "texts".into()));
    let mut words: Vec<String> = args.collect();
    if words.is_empty() {
        words = ["桜", "海", "雪"].map(String::from).to_vec();
    }

    let provider: Box<dyn TextProvider> = match std::env::var("TATEGAKI_ENDPOINT") {
        Ok(endpoint) => {
            let model = std::env::var("TATEGAKI_MODEL").unwrap_or_else(|_| "default".into());
            Box::new(HttpProvider::new(ProviderConfig::new(endpoint, model))?)
        }
        Err(_) => Box::new(PhraseBank::default()),
    };

    std::fs::create_dir_all(&out)?;
    for (word, result) in words.iter().zip(fetch_many(provider.as_ref(), GENERATION_PROMPT, &words)) {
        match result {
            Ok(sample) => {
                let path = out.join(format!("{}.txt", sample.id));
                std::fs::write(&path, &sample.text).with_context(|| path.display().to_string())?;
                println!("{word}: {} chars -> {}", sample.char_count, path.display());
            }
            Err(e) => eprintln!("{word}: {e}"),
        }
    }
    Ok(())
}
