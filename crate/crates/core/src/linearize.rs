//! Two-step uniform table representation.
//!
//! A hierarchical table first becomes a regular one: multi-level headers are
//! flattened into one name per grid column (`parent(child)`, nesting
//! recursively), and spanning body cells are copied into every position they
//! cover. The regular table is then serialized row-major as `key: value` pairs.

use serde::{Deserialize, Serialize};

use crate::table::{validate_table, HierarchicalTable, RegularTable, TableError, ValidatedTable};

pub const KEY_VALUE_SEP: &str = ": ";
pub const PAIR_SEP: &str = ", ";
pub const ROW_SEP: &str = " ; ";

/// One header name per grid column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatHeader {
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlattenedTableText {
    pub text: String,
    pub pair_count: usize,
}

/// Joins header levels, outermost first, as `a(b(c))`. Empty levels are skipped.
fn nest<'a>(levels: impl DoubleEndedIterator<Item = &'a str>) -> String {
    levels
        .filter(|s| !s.is_empty())
        .rev()
        .fold(String::new(), |inner, outer| {
            if inner.is_empty() {
                outer.to_string()
            } else {
                format!("{outer}({inner})")
            }
        })
}

/// Flattens the header rows of `t` into exactly `t.width()` names.
///
/// A header cell that spans k columns is repeated in each of the k slots; a
/// cell spanning several header rows counts as a single level.
pub fn flatten_headers(t: &ValidatedTable) -> FlatHeader {
    let grid = t.header();
    let keys = (0..grid.width())
        .map(|col| {
            let mut owners: Vec<usize> = Vec::with_capacity(grid.rows());
            for row in 0..grid.rows() {
                let idx = grid.owner_index(row, col);
                if owners.last() != Some(&idx) {
                    owners.push(idx);
                }
            }
            nest(owners.iter().map(|&i| grid.cells()[i].cell.text.as_str()))
        })
        .collect();
    FlatHeader { keys }
}

/// Expands spanning body cells so the result is a regular table with the
/// flattened header.
pub fn expand_body(t: &ValidatedTable) -> RegularTable {
    let body = t.body();
    let rows = (0..body.rows())
        .map(|r| {
            (0..body.width())
                .map(|c| body.owner(r, c).cell.text.clone())
                .collect()
        })
        .collect();
    RegularTable {
        title: t.title().to_string(),
        header: flatten_headers(t).keys,
        rows,
    }
}

/// Row-major `key: value` serialization of a regular table.
pub fn serialize_row_major(t: &RegularTable) -> FlattenedTableText {
    let mut pair_count = 0;
    let rows: Vec<String> = t
        .rows
        .iter()
        .map(|row| {
            pair_count += row.len();
            t.header
                .iter()
                .zip(row)
                .map(|(k, v)| format!("{k}{KEY_VALUE_SEP}{v}"))
                .collect::<Vec<_>>()
                .join(PAIR_SEP)
        })
        .collect();
    FlattenedTableText {
        text: rows.join(ROW_SEP),
        pair_count,
    }
}

/// Validates a hierarchical table and returns its regular form.
pub fn to_regular(raw: &HierarchicalTable) -> Result<RegularTable, TableError> {
    validate_table(raw).map(|t| expand_body(&t))
}

pub fn linearize(raw: &HierarchicalTable) -> Result<FlattenedTableText, TableError> {
    to_regular(raw).map(|t| serialize_row_major(&t))
}
