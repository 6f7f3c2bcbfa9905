//! Render one page to PNG with the bundled font, or a font file given as
//! the second argument.
//!
//!     cargo run --example render_page -- vertical-2 page.png [font.ttf]

use std::path::Path;

use anyhow::{bail, Context};
use tategaki::layout::{fit_layout, PageGeometry, RotationTable, WritingMode};
use tategaki::render::{FontEntry, RenderedPage};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let class = args.first().map_or("vertical-2", String::as_str);
    let out = args.get(1).map_or("page.png", String::as_str);
    let font = match args.get(2) {
        Some(path) => FontEntry::load(Path::new(path))?,
        None => FontEntry::bundled(),
    };
    let (mode, columns) = class.split_once('-').context("class looks like vertical-2")?;
    let mode = match mode {
        "horizontal" => WritingMode::Horizontal,
        "vertical" => WritingMode::Vertical,
        other => bail!("unknown mode {other}"),
    };
    let columns: u8 = columns.parse()?;

    let text = "春はあけぼの。やうやう白くなりゆく山ぎは、すこしあかりて、紫だちたる雲のほそくたなびきたる。".repeat(12);
    let geometry = PageGeometry::default().oriented(mode);
    let layout = fit_layout(&text, mode, columns, &geometry, &RotationTable::default())?;
    let missing = font.missing(&text);
    if !missing.is_empty() {
        bail!("{} lacks {:?}", font.id, missing);
    }
    let page = RenderedPage::new("example", layout, &font)?;
    page.image.save(out)?;
    println!("{out}: {} ink ratio {:.3}, {} chars", class, page.ink_ratio(), page.ground_truth.chars().count());
    Ok(())
}
