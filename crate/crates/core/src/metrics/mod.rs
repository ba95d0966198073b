//! ROUGE-1/2/L and corpus BLEU over line-aligned prediction/reference sets.

pub mod bleu;
pub mod rouge;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{tokenize_13a, BleuStats, MAX_ORDER};
pub use rouge::{lcs_len, metric_tokenize, rouge_l, rouge_l_tokens, rouge_n, rouge_n_tokens, Prf};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("{hyps} predictions but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Corpus BLEU over aligned hypothesis/reference segments.
pub fn sacrebleu_corpus<S: AsRef<str> + Sync>(hyps: &[S], refs: &[S]) -> Result<f64, MetricError> {
    check_lengths(hyps.len(), refs.len())?;
    Ok(corpus_bleu_stats(hyps, refs).score())
}

fn check_lengths(hyps: usize, refs: usize) -> Result<(), MetricError> {
    if hyps != refs {
        return Err(MetricError::LengthMismatch { hyps, refs });
    }
    if hyps == 0 {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

fn corpus_bleu_stats<S: AsRef<str> + Sync>(hyps: &[S], refs: &[S]) -> BleuStats {
    hyps.par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| BleuStats::from_segment(h.as_ref(), r.as_ref()))
        .reduce(BleuStats::default, |a, b| a.merge(&b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rouge1: Prf,
    pub rouge2: Prf,
    #[serde(rename = "rougeL")]
    pub rouge_l: Prf,
    pub bleu: f64,
    #[serde(rename = "n")]
    pub n_examples: usize,
}

fn mean_prf(scores: impl Iterator<Item = Prf>, n: usize) -> Prf {
    let (p, r, f) = scores.fold((0.0, 0.0, 0.0), |(p, r, f), s| {
        (p + s.precision, r + s.recall, f + s.f1)
    });
    let n = n as f64;
    Prf {
        precision: p / n,
        recall: r / n,
        f1: f / n,
    }
}

/// Per-example ROUGE averaged over the corpus, BLEU pooled corpus-wide.
///
/// Per-example work runs on the ambient rayon pool; results are combined in
/// input order, so the report does not depend on the thread count.
pub fn evaluate_corpus<S: AsRef<str> + Sync>(
    hyps: &[S],
    refs: &[S],
) -> Result<MetricReport, MetricError> {
    check_lengths(hyps.len(), refs.len())?;
    let per_example: Vec<[Prf; 3]> = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| {
            let (h, r) = (metric_tokenize(h.as_ref()), metric_tokenize(r.as_ref()));
            [
                rouge_n_tokens(&h, &r, 1),
                rouge_n_tokens(&h, &r, 2),
                rouge_l_tokens(&h, &r),
            ]
        })
        .collect();
    let n = per_example.len();
    Ok(MetricReport {
        rouge1: mean_prf(per_example.iter().map(|s| s[0]), n),
        rouge2: mean_prf(per_example.iter().map(|s| s[1]), n),
        rouge_l: mean_prf(per_example.iter().map(|s| s[2]), n),
        bleu: corpus_bleu_stats(hyps, refs).score(),
        n_examples: n,
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>, MetricError> {
    fs::read_to_string(path)
        .map(|s| s.lines().map(str::to_string).collect())
        .map_err(|source| MetricError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Scores line-aligned prediction and reference files.
pub fn evaluate_predictions(
    pred_path: &Path,
    ref_path: &Path,
) -> Result<MetricReport, MetricError> {
    let hyps = read_lines(pred_path)?;
    let refs = read_lines(ref_path)?;
    evaluate_corpus(&hyps, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_corpus_is_perfect() {
        let c = ["the first segment is here", "and a second one follows it"];
        let r = evaluate_corpus(&c, &c).unwrap();
        assert_eq!(r.bleu, 100.0);
        assert_eq!(r.rouge1.f1, 1.0);
        assert_eq!(r.rouge2.f1, 1.0);
        assert_eq!(r.rouge_l.f1, 1.0);
        assert_eq!(r.n_examples, 2);
    }

    #[test]
    fn corpus_errors() {
        assert!(matches!(
            sacrebleu_corpus(&["a"], &["a", "b"]),
            Err(MetricError::LengthMismatch { hyps: 1, refs: 2 })
        ));
        let empty: [&str; 0] = [];
        assert!(matches!(
            sacrebleu_corpus(&empty, &empty),
            Err(MetricError::EmptyCorpus)
        ));
        assert!(matches!(
            evaluate_corpus(&empty, &empty),
            Err(MetricError::EmptyCorpus)
        ));
    }

    #[test]
    fn report_json_schema() {
        let r = evaluate_corpus(&["a b"], &["a b"]).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["bleu", "n", "rouge1", "rouge2", "rougeL"]);
        assert_eq!(v["rougeL"]["f"], 1.0);
        assert!(v["rouge1"]["p"].is_number() && v["rouge1"]["r"].is_number());
    }

    #[test]
    fn files_are_line_aligned() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pred.txt");
        let r = dir.path().join("ref.txt");
        fs::write(&p, "the cat sat on the mat\n").unwrap();
        fs::write(&r, "the cat sat on a mat\n").unwrap();
        let rep = evaluate_predictions(&p, &r).unwrap();
        assert_eq!(rep.n_examples, 1);
        assert!((rep.bleu - 53.728).abs() < 1e-3);
        fs::write(&r, "x\ny\n").unwrap();
        assert!(matches!(
            evaluate_predictions(&p, &r),
            Err(MetricError::LengthMismatch { .. })
        ));
        assert!(matches!(
            evaluate_predictions(&dir.path().join("missing"), &r),
            Err(MetricError::Io { .. })
        ));
    }
}
