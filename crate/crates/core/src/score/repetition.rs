use super::is_whitespace;

/// The repetition pattern, applied with dot-matches-newline and replaced by
/// capture group 2 (the repeating unit).
///
/// A match is a unit starting with a non-whitespace character followed by
/// at least nine more copies of itself, such that no further run of ten or
/// more copies (of any unit) starts at or after the match end. The net
/// effect: the last such run in the text collapses to a single unit.
pub const REPETITION_PATTERN: &str = r"((\S.*?)\2{9,})(?!.*(\S.*?)\3{9,})";

/// Minimum number of consecutive copies (unit included) that form a run.
const MIN_COPIES: usize = 10;

/// Collapses the last run of ten or more consecutive copies of a substring
/// into one copy, with the exact semantics of a backtracking engine running
/// a global substitution of [`REPETITION_PATTERN`].
///
/// The pattern is evaluated directly instead of through a regex engine:
/// for every unit length `len` we compute, per position, how far the text
/// stays periodic with period `len`. That answers "how many copies follow
/// here" in O(1), so the whole scan is O(n²/10) without backtracking.
pub fn remove_repetition(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    match find_match(&chars) {
        Some(found) => {
            let mut out = String::with_capacity(text.len());
            out.extend(&chars[..found.start]);
            out.extend(&chars[found.start..found.start + found.unit]);
            out.extend(&chars[found.end..]);
            out
        }
        None => text.to_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RunMatch {
    start: usize,
    unit: usize,
    end: usize,
}

/// `periodic[i]` = number of consecutive `j >= i` with `chars[j] ==
/// chars[j + len]`. A block of `k` copies of `chars[i..i + len]` starts at
/// `i` iff `periodic[i] >= (k - 1) * len`.
fn periodic_run(chars: &[char], len: usize, periodic: &mut Vec<usize>) {
    let n = chars.len();
    periodic.clear();
    periodic.resize(n - len + 1, 0);
    for i in (0..n - len).rev() {
        if chars[i] == chars[i + len] {
            periodic[i] = periodic[i + 1] + 1;
        }
    }
}

fn find_match(chars: &[char]) -> Option<RunMatch> {
    let n = chars.len();
    if n < MIN_COPIES {
        return None;
    }
    let max_unit = n / MIN_COPIES;
    let mut periodic = Vec::with_capacity(n);

    // The negative lookahead at position `e` fails iff some run starts at
    // or after `e`, so only the start of the last run matters.
    let mut last_run_start: Option<usize> = None;
    for len in 1..=max_unit {
        periodic_run(chars, len, &mut periodic);
        let need = (MIN_COPIES - 1) * len;
        let floor = last_run_start.map_or(0, |s| s + 1);
        for start in (floor..=n - MIN_COPIES * len).rev() {
            if periodic[start] >= need && !is_whitespace(chars[start]) {
                last_run_start = Some(start);
                break;
            }
        }
    }
    let last_run_start = last_run_start?;

    // Leftmost start wins; at a given start the lazy unit tries lengths in
    // increasing order, and greedy repetition takes every available copy.
    // Fewer copies only move the end earlier, where the lookahead still
    // fails, so the maximal count is the only one worth testing.
    let mut best_unit = vec![0usize; last_run_start + 1];
    for len in 1..=max_unit {
        periodic_run(chars, len, &mut periodic);
        let need = (MIN_COPIES - 1) * len;
        let last_start = last_run_start.min(n - MIN_COPIES * len);
        for start in 0..=last_start {
            if best_unit[start] != 0 || periodic[start] < need || is_whitespace(chars[start]) {
                continue;
            }
            let copies = 1 + periodic[start] / len;
            if start + copies * len > last_run_start {
                best_unit[start] = len;
            }
        }
    }

    best_unit.iter().enumerate().find(|(_, unit)| **unit != 0).map(|(start, &unit)| {
        let copies = 1 + periodic_copies(chars, start, unit);
        RunMatch {
            start,
            unit,
            end: start + copies * unit,
        }
    })
}

fn periodic_copies(chars: &[char], start: usize, unit: usize) -> usize {
    let mut extra = 0;
    let mut pos = start + unit;
    while pos + unit <= chars.len() && chars[pos..pos + unit] == chars[start..start + unit] {
        extra += 1;
        pos += unit;
    }
    extra
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_single_character_run() {
        assert_eq!(remove_repetition(&"あ".repeat(25)), "あ");
    }

    #[test]
    fn collapses_two_character_unit() {
        assert_eq!(remove_repetition(&"xy".repeat(12)), "xy");
    }

    #[test]
    fn leaves_short_repeats_alone() {
        assert_eq!(remove_repetition("abcabc"), "abcabc");
        assert_eq!(remove_repetition(&"a".repeat(9)), "a".repeat(9));
        assert_eq!(remove_repetition(""), "");
    }

    #[test]
    fn only_the_last_run_collapses() {
        let text = format!("{}{}", "a".repeat(12), "b".repeat(12));
        assert_eq!(remove_repetition(&text), format!("{}b", "a".repeat(12)));
    }

    #[test]
    fn runs_must_start_with_non_whitespace() {
        assert_eq!(remove_repetition(&" ".repeat(20)), " ".repeat(20));
        // the unit starts at the first "a" and the trailing "a" is left over
        assert_eq!(remove_repetition(&" a".repeat(12)), " a a");
    }

    #[test]
    fn idempotent_on_output() {
        for text in ["あ".repeat(25), format!("本文{}", "です".repeat(11)), "x".repeat(30)] {
            let once = remove_repetition(&text);
            assert_eq!(remove_repetition(&once), once);
        }
    }
}
