use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, Manifest, ManifestRecord, Split};
use crate::layout::WritingMode;
use crate::util::derive_seed;

/// Train/val/test weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 8,
            val: 1,
            test: 1,
        }
    }
}

impl SplitRatios {
    fn weights(&self) -> [u32; 3] {
        [self.train, self.val, self.test]
    }
}

/// Strata smaller than this go entirely to train.
pub const MIN_STRATUM: usize = 3;

/// Sizes of the train/val/test parts of `n` items by largest remainder:
/// floor of each exact share, then the leftover items to the largest
/// fractional parts, earlier splits first on ties.
pub fn largest_remainder(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let w = ratios.weights();
    let total: u64 = w.iter().map(|&x| u64::from(x)).sum();
    let mut counts = [0usize; 3];
    let mut remainders = [(0u64, 0usize); 3];
    for i in 0..3 {
        let exact = n as u64 * u64::from(w[i]);
        counts[i] = (exact / total) as usize;
        remainders[i] = (exact % total, i);
    }
    let leftover = n - counts.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover) {
        counts[i] += 1;
    }
    counts
}

/// Labels every record train/val/test within its (mode, columns) stratum.
/// Each stratum is ordered by id, shuffled with a seed derived from the
/// run seed and the stratum, and cut by [`largest_remainder`]. Existing
/// labels are overwritten; record order is unchanged.
pub fn split_dataset(manifest: &Manifest, ratios: &SplitRatios, seed: u64) -> Result<Manifest, HarnessError> {
    if ratios.weights().contains(&0) {
        return Err(HarnessError::InvalidRatios(*ratios));
    }
    let mut strata: BTreeMap<(WritingMode, u8), Vec<usize>> = BTreeMap::new();
    for (idx, r) in manifest.records.iter().enumerate() {
        strata.entry(r.stratum()).or_default().push(idx);
    }
    let mut records: Vec<ManifestRecord> = manifest.records.clone();
    for ((mode, columns), mut members) in strata {
        members.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
        if members.len() < MIN_STRATUM {
            log::warn!(
                "stratum {mode}/{columns} has only {} record(s); assigning all to train",
                members.len()
            );
            for &i in &members {
                records[i].split = Some(Split::Train);
            }
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("{mode}/{columns}")));
        members.shuffle(&mut rng);
        let [train, val, _] = largest_remainder(members.len(), ratios);
        for (pos, &i) in members.iter().enumerate() {
            records[i].split = Some(if pos < train {
                Split::Train
            } else if pos < train + val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Manifest::new(records)
}

/// Count and character-length summary of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub avg_chars: Option<f64>,
    pub min_chars: Option<usize>,
    pub max_chars: Option<usize>,
}

/// Statistics over the records of `split` (all records for `None`).
/// Characters are counted as scalar values of the ground truth.
pub fn compute_stats(manifest: &Manifest, split: Option<Split>) -> DatasetStats {
    let lengths: Vec<usize> = manifest
        .select(split)
        .iter()
        .map(|r| r.ground_truth.chars().count())
        .collect();
    let count = lengths.len();
    DatasetStats {
        count,
        avg_chars: (count > 0).then(|| lengths.iter().sum::<usize>() as f64 / count as f64),
        min_chars: lengths.iter().copied().min(),
        max_chars: lengths.iter().copied().max(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn record(id: &str, mode: WritingMode, columns: u8, gt: &str) -> ManifestRecord {
        ManifestRecord {
            id: id.to_string(),
            image_path: format!("images/{id}.png"),
            ground_truth: gt.to_string(),
            mode,
            columns,
            font_id: "f".into(),
            char_count: gt.chars().count(),
            split: None,
        }
    }

    fn desk(per_stratum: usize) -> Manifest {
        let mut records = Vec::new();
        for mode in WritingMode::ALL {
            for c in 1..=4 {
                for i in 0..per_stratum {
                    records.push(record(&format!("{mode}{c}-{i:03}"), mode, c, "あ"));
                }
            }
        }
        Manifest::new(records).unwrap()
    }

    fn tally(m: &Manifest) -> BTreeMap<((WritingMode, u8), Split), usize> {
        let mut t = BTreeMap::new();
        for r in &m.records {
            *t.entry((r.stratum(), r.split.unwrap())).or_insert(0) += 1;
        }
        t
    }

    #[test]
    fn remainder_rounding() {
        let r = SplitRatios::default();
        assert_eq!(largest_remainder(10, &r), [8, 1, 1]);
        assert_eq!(largest_remainder(0, &r), [0, 0, 0]);
        // 2812 * 0.8 = 2249.6, * 0.1 = 281.2
        assert_eq!(largest_remainder(2812, &r), [2250, 281, 281]);
        // 2811 * 0.8 = 2248.8, * 0.1 = 281.1
        assert_eq!(largest_remainder(2811, &r), [2249, 281, 281]);
    }

    #[test]
    fn ten_per_stratum_split_eight_one_one() {
        let split = split_dataset(&desk(10), &SplitRatios::default(), 1).unwrap();
        for ((_, s), n) in tally(&split) {
            assert_eq!(n, if s == Split::Train { 8 } else { 1 });
        }
    }

    #[test]
    fn tiny_strata_go_to_train() {
        let m = Manifest::new(vec![record("a", WritingMode::Vertical, 2, "x"), record("b", WritingMode::Vertical, 2, "y")]).unwrap();
        let split = split_dataset(&m, &SplitRatios::default(), 0).unwrap();
        assert!(split.records.iter().all(|r| r.split == Some(Split::Train)));
    }

    #[test]
    fn zero_ratio_is_rejected() {
        let bad = SplitRatios { train: 8, val: 0, test: 1 };
        assert!(matches!(split_dataset(&desk(3), &bad, 0), Err(HarnessError::InvalidRatios(_))));
    }

    #[test]
    fn stats_examples() {
        let m = Manifest::new(vec![
            record("a", WritingMode::Horizontal, 1, &"字".repeat(100)),
            record("b", WritingMode::Horizontal, 1, &"字".repeat(300)),
        ])
        .unwrap();
        let s = compute_stats(&m, None);
        assert_eq!((s.count, s.avg_chars, s.min_chars, s.max_chars), (2, Some(200.0), Some(100), Some(300)));
        let empty = compute_stats(&m, Some(Split::Test));
        assert_eq!(empty.count, 0);
        assert_eq!(empty.avg_chars, None);
    }

    proptest! {
        #[test]
        fn remainder_parts_sum_and_stay_close(n in 0usize..100_000, a in 1u32..20, b in 1u32..20, c in 1u32..20) {
            let r = SplitRatios { train: a, val: b, test: c };
            let parts = largest_remainder(n, &r);
            prop_assert_eq!(parts.iter().sum::<usize>(), n);
            let total = (a + b + c) as f64;
            for (part, w) in parts.iter().zip([a, b, c]) {
                prop_assert!((*part as f64 - n as f64 * w as f64 / total).abs() < 1.0);
            }
        }

        #[test]
        fn split_preserves_records_and_is_seeded(per in 0usize..12, seed in any::<u64>()) {
            let m = desk(per);
            let a = split_dataset(&m, &SplitRatios::default(), seed).unwrap();
            let b = split_dataset(&m, &SplitRatios::default(), seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), m.len());
            for (x, y) in a.records.iter().zip(&m.records) {
                prop_assert_eq!(&x.id, &y.id);
            }
            let parts: usize = [Split::Train, Split::Val, Split::Test].iter().map(|&s| compute_stats(&a, Some(s)).count).sum();
            prop_assert_eq!(parts, compute_stats(&a, None).count);
        }
    }
}
