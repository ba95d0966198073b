//! Corpus BLEU with 13a tokenization and exponential smoothing.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;

pub const MAX_ORDER: usize = 4;

static TOKENIZER_13A: LazyLock<[(Regex, &'static str); 4]> = LazyLock::new(|| {
    [
        (Regex::new(r"([\{-~\[-`\x20-&\(-\+:-@/])").unwrap(), " $1 "),
        (Regex::new(r"([^0-9])([\.,])").unwrap(), "$1 $2 "),
        (Regex::new(r"([\.,])([^0-9])").unwrap(), " $1 $2"),
        (Regex::new(r"([0-9])(-)").unwrap(), "$1 $2 "),
    ]
});

/// 13a tokenization: unescape a few entities, pad punctuation, split on
/// whitespace. Case is preserved.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut s = line
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ");
    if s.contains('&') {
        s = s
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let mut s = format!(" {s} ");
    for (re, rep) in TOKENIZER_13A.iter() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s.split_whitespace().map(str::to_string).collect()
}

/// Sufficient statistics for corpus BLEU. Merging is associative and
/// commutative, so per-segment stats can be reduced in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn from_tokens(hyp: &[String], reference: &[String]) -> Self {
        let mut stats = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            if hyp.len() < n {
                break;
            }
            let mut ref_counts: HashMap<&[String], u64> = HashMap::new();
            if reference.len() >= n {
                for g in reference.windows(n) {
                    *ref_counts.entry(g).or_default() += 1;
                }
            }
            let mut hyp_counts: HashMap<&[String], u64> = HashMap::new();
            for g in hyp.windows(n) {
                *hyp_counts.entry(g).or_default() += 1;
            }
            stats.totals[n - 1] = (hyp.len() + 1 - n) as u64;
            stats.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn from_segment(hyp: &str, reference: &str) -> Self {
        Self::from_tokens(&tokenize_13a(hyp), &tokenize_13a(reference))
    }

    pub fn merge(mut self, other: &BleuStats) -> Self {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }

    /// Modified precisions for orders with a nonzero denominator, smoothed.
    ///
    /// An order with zero matches gets `1 / (smooth * total)`, where `smooth`
    /// doubles each time this happens. Orders with no hypothesis n-grams are
    /// left out.
    pub fn precisions(&self) -> Vec<f64> {
        let mut smooth = 1.0;
        let mut out = Vec::with_capacity(MAX_ORDER);
        for n in 0..MAX_ORDER {
            let total = self.totals[n];
            if total == 0 {
                break;
            }
            if self.matches[n] == 0 {
                smooth *= 2.0;
                out.push(1.0 / (smooth * total as f64));
            } else {
                out.push(self.matches[n] as f64 / total as f64);
            }
        }
        out
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        }
    }

    /// BLEU on a 0..=100 scale.
    pub fn score(&self) -> f64 {
        let p = self.precisions();
        if p.is_empty() {
            return 0.0;
        }
        let log_mean = p.iter().map(|x| x.ln()).sum::<f64>() / p.len() as f64;
        100.0 * self.brevity_penalty() * log_mean.exp()
    }
}
