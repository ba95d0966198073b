//! ROUGE-N and sentence-level ROUGE-L with rouge-score style tokenization
//! (no stemming).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    #[serde(rename = "f")]
    pub f1: f64,
}

impl Prf {
    /// Builds the triple from precision and recall; F is their harmonic mean.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }

    fn from_counts(hits: usize, hyp_total: usize, ref_total: usize) -> Self {
        if hyp_total == 0 || ref_total == 0 {
            return Prf::default();
        }
        Prf::from_pr(
            hits as f64 / hyp_total as f64,
            hits as f64 / ref_total as f64,
        )
    }
}

/// Lowercases and splits on anything that is not an ASCII letter or digit.
pub fn metric_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_alphanumeric() {
            cur.push(ch);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn rouge_n_tokens(hyp: &[String], reference: &[String], n: usize) -> Prf {
    assert!(n >= 1, "n-gram order must be positive");
    let hyp_counts = ngram_counts(hyp, n);
    let ref_counts = ngram_counts(reference, n);
    let hits = hyp_counts
        .iter()
        .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(hits, hyp_counts.values().sum(), ref_counts.values().sum())
}

/// Clipped n-gram overlap between hypothesis and reference.
pub fn rouge_n(hyp: &str, reference: &str, n: usize) -> Prf {
    rouge_n_tokens(&metric_tokenize(hyp), &metric_tokenize(reference), n)
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_tokens(hyp: &[String], reference: &[String]) -> Prf {
    Prf::from_counts(lcs_len(hyp, reference), hyp.len(), reference.len())
}

pub fn rouge_l(hyp: &str, reference: &str) -> Prf {
    rouge_l_tokens(&metric_tokenize(hyp), &metric_tokenize(reference))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(
            metric_tokenize("The cat's mat."),
            toks(&["the", "cat", "s", "mat"])
        );
        assert!(metric_tokenize("").is_empty());
        assert_eq!(metric_tokenize("ABC abc"), toks(&["abc", "abc"]));
        assert_eq!(metric_tokenize("x1-y2__z"), toks(&["x1", "y2", "z"]));
    }

    #[test]
    fn identical_strings_score_one() {
        let s = "the quick brown fox";
        for p in [rouge_n(s, s, 1), rouge_n(s, s, 2), rouge_l(s, s)] {
            assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn bigram_example() {
        let p = rouge_n("the cat sat", "the cat sat on the mat", 2);
        assert_eq!(p.precision, 1.0);
        assert!((p.recall - 0.4).abs() < 1e-12);
        assert!((p.f1 - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_limits_repeated_unigrams() {
        let p = rouge_n("the the the", "the cat", 1);
        assert!((p.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_sides_score_zero() {
        assert_eq!(rouge_n("a b", "", 1), Prf::default());
        assert_eq!(rouge_n("", "a b", 2), Prf::default());
        assert_eq!(rouge_n("a", "a", 2), Prf::default());
        assert_eq!(rouge_l("a", ""), Prf::default());
    }

    #[test]
    fn lcs_example() {
        let p = rouge_l("the cat", "the cat sat");
        assert_eq!(
            lcs_len(&metric_tokenize("the cat"), &metric_tokenize("the cat sat")),
            2
        );
        assert_eq!(p.precision, 1.0);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.f1 - 0.8).abs() < 1e-12);
        assert_eq!(rouge_l("a b c", "d e f"), Prf::default());
    }

    #[test]
    fn lcs_is_not_substring() {
        assert_eq!(lcs_len(&[1, 2, 3, 4, 5], &[1, 9, 3, 9, 5]), 3);
        assert_eq!(lcs_len::<u8>(&[], &[1]), 0);
    }
}
