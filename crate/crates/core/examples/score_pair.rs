//! Score a prediction against its reference, raw and with trailing
//! repetition collapsed.
//!
//!     cargo run --example score_pair -- "予測テキスト" "正解テキスト"

use tategaki::score::{normalize, remove_repetition, score_pair};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let reference = "吾輩は猫である。名前はまだ無い。";
    let default_pred = format!("吾輩は猫である。名前はまだ無い{}", "。無い".repeat(12));
    let pred = args.next().unwrap_or(default_pred);
    let reference = args.next().unwrap_or_else(|| reference.into());

    let s = score_pair(&pred, &reference)?;
    println!("prediction   {pred:?}");
    println!("collapsed    {:?}", normalize(&remove_repetition(&pred)));
    println!("reference    {:?}", normalize(&reference));
    println!("CER  raw {:.2}  derepeated {:.2}", s.cer_raw, s.cer_derepeated);
    println!("BLEU raw {:.2}  derepeated {:.2}", s.bleu_raw, s.bleu_derepeated);
    Ok(())
}
