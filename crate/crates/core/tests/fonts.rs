use std::path::Path;

use tategaki::render::{load_font_collection, select_font, FontEntry, RenderError};

const BUNDLED: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/fonts/ipaexg.ttf");
const KANA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/fonts/kana_subset.ttf");

fn font_dir(files: &[(&str, &[u8])]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, bytes) in files {
        std::fs::write(dir.path().join(name), bytes).unwrap();
    }
    dir
}

#[test]
fn truncated_font_is_skipped() {
    let full = std::fs::read(BUNDLED).unwrap();
    let kana = std::fs::read(KANA).unwrap();
    let dir = font_dir(&[("a.ttf", &full), ("b.ttf", &kana), ("c.ttf", &full[..512]), ("notes.txt", b"hi")]);
    let (fonts, skipped) = load_font_collection(dir.path()).unwrap();
    let ids: Vec<&str> = fonts.iter().map(|f| f.id.as_str()).collect();
    assert_eq!(ids, ["a", "b"]);
    assert_eq!(skipped.len(), 1);
    assert!(skipped[0].path.ends_with("c.ttf"));
}

#[test]
fn empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_font_collection(dir.path()), Err(RenderError::NoFonts(_))));
}

#[test]
fn missing_directory_is_an_error() {
    assert!(load_font_collection(Path::new("/definitely/not/here")).is_err());
}

#[test]
fn rare_kanji_picks_the_covering_font() {
    let kana = FontEntry::load(Path::new(KANA)).unwrap();
    let full = FontEntry::bundled();
    assert!(!kana.covers('鬱'));
    assert!(full.covers('鬱'));
    let fonts = vec![kana, full];
    for seed in 0..20 {
        let chosen = select_font(&fonts, None, "あいう鬱", seed).unwrap();
        assert_eq!(chosen.id, "ipaexg");
    }
}

#[test]
fn uncovered_text_names_the_missing_scalars() {
    let kana = FontEntry::load(Path::new(KANA)).unwrap();
    match select_font(std::slice::from_ref(&kana), None, "あ鬱", 0) {
        Err(RenderError::Coverage { missing, .. }) => assert_eq!(missing, vec!['鬱']),
        other => panic!("expected a coverage error, got {:?}", other.map(|f| f.id.clone())),
    }
    let fallback = FontEntry::bundled();
    let chosen = select_font(std::slice::from_ref(&kana), Some(&fallback), "あ鬱", 0).unwrap();
    assert_eq!(chosen.id, "ipaexg");
}

#[test]
fn selection_spreads_over_covering_fonts() {
    let a = FontEntry::bundled();
    let mut b = FontEntry::bundled();
    b.id = "copy".into();
    let fonts = vec![a, b];
    let picks: std::collections::HashSet<String> =
        (0..32).map(|seed| select_font(&fonts, None, "日本語", seed).unwrap().id.clone()).collect();
    assert_eq!(picks.len(), 2);
}
