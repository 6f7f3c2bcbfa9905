//! Flag vertical writing in page images. With no arguments, renders one
//! page per mode and checks those.
//!
//!     cargo run --example detect_vertical -- scan1.png scan2.jpg

use tategaki::detect::{contains_vertical_text, ConnectedComponents};
use tategaki::layout::{fit_layout, PageGeometry, RotationTable, WritingMode};
use tategaki::render::{rasterize, FontEntry};

fn main() -> anyhow::Result<()> {
    let backend = ConnectedComponents::default();
    let paths: Vec<String> = std::env::args().skip(1).collect();
    let mut pages = Vec::new();
    if paths.is_empty() {
        let font = FontEntry::bundled();
        let text = "山路を登りながら、こう考えた。智に働けば角が立つ。情に棹させば流される。".repeat(15);
        for mode in WritingMode::ALL {
            let geometry = PageGeometry::default().oriented(mode);
            let layout = fit_layout(&text, mode, 2, &geometry, &RotationTable::default())?;
            pages.push((format!("rendered {mode}"), rasterize(&layout, &font)?));
        }
    } else {
        for path in paths {
            pages.push((path.clone(), image::open(&path)?.to_luma8()));
        }
    }
    for (name, image) in pages {
        match contains_vertical_text(&image, &backend) {
            Ok(v) => println!(
                "{name}: vertical={} (cv rows {:.3}, cols {:.3}; merges h {} v {})",
                v.is_vertical, v.profile.cv_rows, v.profile.cv_cols, v.h_merges, v.v_merges
            ),
            Err(e) => println!("{name}: error {e}"),
        }
    }
    Ok(())
}
