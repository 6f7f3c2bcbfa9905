//! Lay out a text in every class and show where the first glyphs land.
//!
//!     cargo run --example layout_page -- "縦書きの文章を、右から左へ読む。"

use tategaki::layout::{fit_layout, reading_order_text, PageGeometry, RotationTable, WritingMode};

fn main() -> anyhow::Result<()> {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "吾輩は猫である。名前はまだ無い。どこで生れたかとんと見当がつかぬ。「ABC」ー".repeat(20));
    let rotation = RotationTable::default();
    for mode in WritingMode::ALL {
        for columns in 1..=4 {
            let geometry = PageGeometry::default().oriented(mode);
            let layout = fit_layout(&text, mode, columns, &geometry, &rotation)?;
            let head: Vec<String> =
                layout.placements.iter().take(3).map(|p| format!("{}@({},{})", p.ch, p.x, p.y)).collect();
            let rotated = layout.placements.iter().filter(|p| p.rotated).count();
            println!(
                "{mode}-{columns}: {}x{} page, font {}px, {} glyphs ({rotated} rotated), first {}",
                geometry.width,
                geometry.height,
                layout.geometry.font_size,
                layout.placements.len(),
                head.join(" ")
            );
            assert_eq!(reading_order_text(&layout)?, tategaki::layout::normalize_breaks(&text));
        }
    }
    Ok(())
}
