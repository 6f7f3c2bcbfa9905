use std::collections::HashMap;

/// Floor used in place of `ln(0)`, matching the reference BLEU tooling.
const LOG_ZERO: f64 = -9_999_999_999.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuOptions {
    pub max_order: usize,
    /// Only average over n-gram orders the hypothesis actually has, as
    /// sentence-level BLEU does. With this off, predictions shorter than
    /// `max_order` characters score 0.
    pub effective_order: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        Self {
            max_order: 4,
            effective_order: true,
        }
    }
}

/// Sentence BLEU (0–100) with single characters as tokens, 1–4-grams,
/// brevity penalty and exponential smoothing of zero-match orders.
pub fn char_bleu(pred: &str, reference: &str) -> f64 {
    char_bleu_with(pred, reference, &BleuOptions::default())
}

pub fn char_bleu_with(pred: &str, reference: &str, options: &BleuOptions) -> f64 {
    let hyp: Vec<char> = pred.chars().collect();
    let refs: Vec<char> = reference.chars().collect();
    let max_order = options.max_order.max(1);

    let mut correct = vec![0usize; max_order];
    let mut total = vec![0usize; max_order];
    for n in 1..=max_order {
        if hyp.len() < n {
            continue;
        }
        let ref_counts = ngram_counts(&refs, n);
        let hyp_counts = ngram_counts(&hyp, n);
        total[n - 1] = hyp.len() - n + 1;
        correct[n - 1] = hyp_counts
            .iter()
            .map(|(gram, count)| (*count).min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
    }

    let sys_len = hyp.len() as f64;
    let ref_len = refs.len() as f64;
    let brevity = if sys_len < ref_len {
        if sys_len > 0.0 {
            (1.0 - ref_len / sys_len).exp()
        } else {
            0.0
        }
    } else {
        1.0
    };

    if correct.iter().all(|c| *c == 0) {
        return 0.0;
    }

    let mut precisions = vec![0.0f64; max_order];
    let mut smooth = 1.0f64;
    let mut eff_order = max_order;
    for n in 1..=max_order {
        if total[n - 1] == 0 {
            break;
        }
        if options.effective_order {
            eff_order = n;
        }
        precisions[n - 1] = if correct[n - 1] == 0 {
            smooth *= 2.0;
            100.0 / (smooth * total[n - 1] as f64)
        } else {
            100.0 * correct[n - 1] as f64 / total[n - 1] as f64
        };
    }

    let log_sum: f64 = precisions[..eff_order]
        .iter()
        .map(|p| if *p == 0.0 { LOG_ZERO } else { p.ln() })
        .sum();
    (brevity * (log_sum / eff_order as f64).exp()).min(100.0)
}

fn ngram_counts(tokens: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}
