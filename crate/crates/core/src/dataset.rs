//! QA records in JSONL form, their statistics, and model-ready examples.
//!
//! One record per line:
//! `{"id", "question", "title", "context": {"passage": …} | {"table": …}, "answers": […], "split"?}`

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::input::{assemble, InputError, InputSequence};
use crate::linearize::linearize;
use crate::table::{validate_table, HierarchicalTable, TableError};

pub const DEFAULT_SPLIT: &str = "train";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Table,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Context {
    Passage(String),
    Table(HierarchicalTable),
}

impl Context {
    pub fn modality(&self) -> Modality {
        match self {
            Context::Passage(_) => Modality::Text,
            Context::Table(_) => Modality::Table,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub title: String,
    pub context: Context,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl QaRecord {
    pub fn split(&self) -> &str {
        self.split.as_deref().unwrap_or(DEFAULT_SPLIT)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: invalid table: {source}")]
    Table { line: usize, source: TableError },
    #[error("record {id}: invalid table: {source}")]
    RecordTable { id: String, source: TableError },
    #[error("record {id}: {source}")]
    Input { id: String, source: InputError },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl DatasetError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, DatasetError::Io(_))
    }
}

fn parse_line(line: usize, text: &str, modality: Modality) -> Result<QaRecord, DatasetError> {
    let schema = |message: String| DatasetError::Schema { line, message };
    let rec: QaRecord = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    if rec.answers.is_empty() {
        return Err(schema("answers must be nonempty".into()));
    }
    if rec.context.modality() != modality {
        return Err(schema(format!(
            "context is {:?} but modality {:?} was requested",
            rec.context.modality(),
            modality
        )));
    }
    if let Context::Table(t) = &rec.context {
        validate_table(t).map_err(|source| DatasetError::Table { line, source })?;
    }
    Ok(rec)
}

/// Parses JSONL records. Blank lines are skipped; line numbers are 1-based.
pub fn parse_records<R: Read>(
    reader: R,
    modality: Modality,
) -> Result<Vec<QaRecord>, DatasetError> {
    let lines: Vec<(usize, String)> = BufReader::new(reader)
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .collect::<Result<_, _>>()?;
    lines
        .par_iter()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_line(*n, l, modality))
        .collect()
}

pub fn read_records(path: &Path, modality: Modality) -> Result<Vec<QaRecord>, DatasetError> {
    parse_records(File::open(path)?, modality)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub n_samples: usize,
    pub max_question_tokens: usize,
    pub max_target_tokens: usize,
    pub max_context_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_table_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_table_cols: Option<usize>,
}

impl SplitStats {
    pub fn merge(self, other: SplitStats) -> SplitStats {
        let opt_max = |a: Option<usize>, b: Option<usize>| match (a, b) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, None) => x,
            (None, y) => y,
        };
        SplitStats {
            n_samples: self.n_samples + other.n_samples,
            max_question_tokens: self.max_question_tokens.max(other.max_question_tokens),
            max_target_tokens: self.max_target_tokens.max(other.max_target_tokens),
            max_context_tokens: self.max_context_tokens.max(other.max_context_tokens),
            max_table_rows: opt_max(self.max_table_rows, other.max_table_rows),
            max_table_cols: opt_max(self.max_table_cols, other.max_table_cols),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub splits: BTreeMap<String, SplitStats>,
}

impl DatasetStats {
    /// Associative and commutative.
    pub fn merge(mut self, other: DatasetStats) -> DatasetStats {
        for (name, s) in other.splits {
            let e = self.splits.entry(name).or_default();
            *e = e.merge(s);
        }
        self
    }
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn record_stats(rec: &QaRecord) -> Result<DatasetStats, DatasetError> {
    let (context_tokens, rows, cols) = match &rec.context {
        Context::Passage(p) => (word_count(p), None, None),
        Context::Table(t) => {
            let bad = |source| DatasetError::RecordTable {
                id: rec.id.clone(),
                source,
            };
            let v = validate_table(t).map_err(bad)?;
            let text = linearize(t).map_err(bad)?;
            (
                word_count(&text.text),
                Some(v.body().rows()),
                Some(v.width()),
            )
        }
    };
    let s = SplitStats {
        n_samples: 1,
        max_question_tokens: word_count(&rec.question),
        max_target_tokens: rec.answers.iter().map(|a| word_count(a)).max().unwrap_or(0),
        max_context_tokens: context_tokens,
        max_table_rows: rows,
        max_table_cols: cols,
    };
    Ok(DatasetStats {
        splits: BTreeMap::from([(rec.split().to_string(), s)]),
    })
}

/// Whitespace-token maxima per split. Table shapes come from the resolved
/// grids: rows are body rows, columns the grid width.
///
/// Records from [`read_records`] always succeed; hand-built records with an
/// invalid table are reported.
pub fn compute_stats(records: &[QaRecord]) -> Result<DatasetStats, DatasetError> {
    records
        .par_iter()
        .map(record_stats)
        .try_reduce(DatasetStats::default, |a, b| Ok(a.merge(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSelection {
    #[default]
    First,
    Longest,
}

/// Both length limits are optional and independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrepareLimits {
    pub max_input_tokens: Option<usize>,
    pub max_target_tokens: Option<usize>,
    #[serde(default)]
    pub target: TargetSelection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedExample {
    pub id: String,
    pub split: String,
    pub input: InputSequence,
    pub target: String,
}

#[derive(Serialize)]
struct PreparedLine<'a> {
    id: &'a str,
    split: &'a str,
    input: String,
    target: &'a str,
}

impl PreparedExample {
    /// One JSONL line with the input rendered as text.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&PreparedLine {
            id: &self.id,
            split: &self.split,
            input: self.input.rendered(),
            target: &self.target,
        })
        .expect("plain strings serialize")
    }
}

fn prepare_one(rec: &QaRecord, limits: &PrepareLimits) -> Result<PreparedExample, DatasetError> {
    let context = match &rec.context {
        Context::Passage(p) => p.clone(),
        Context::Table(t) => {
            linearize(t)
                .map_err(|source| DatasetError::RecordTable {
                    id: rec.id.clone(),
                    source,
                })?
                .text
        }
    };
    let input_err = |source| DatasetError::Input {
        id: rec.id.clone(),
        source,
    };
    let mut input = assemble(&rec.question, &rec.title, &context).map_err(input_err)?;
    if let Some(max) = limits.max_input_tokens {
        input = input.truncate(max).map_err(input_err)?;
    }
    let answer = match limits.target {
        TargetSelection::First => &rec.answers[0],
        TargetSelection::Longest => rec.answers.iter().fold(&rec.answers[0], |best, a| {
            if word_count(a) > word_count(best) {
                a
            } else {
                best
            }
        }),
    };
    let words = answer.split_whitespace();
    let target = match limits.max_target_tokens {
        Some(max) => words.take(max).collect::<Vec<_>>().join(" "),
        None => words.collect::<Vec<_>>().join(" "),
    };
    Ok(PreparedExample {
        id: rec.id.clone(),
        split: rec.split().to_string(),
        input,
        target,
    })
}

/// Linearizes, assembles and truncates every record, in input order. Any
/// failing record fails the whole call.
pub fn prepare_examples(
    records: &[QaRecord],
    limits: &PrepareLimits,
) -> Result<Vec<PreparedExample>, DatasetError> {
    if records.iter().any(|r| r.answers.is_empty()) {
        let id = records
            .iter()
            .find(|r| r.answers.is_empty())
            .unwrap()
            .id
            .clone();
        return Err(DatasetError::Schema {
            line: 0,
            message: format!("record {id} has no answers"),
        });
    }
    records.par_iter().map(|r| prepare_one(r, limits)).collect()
}
