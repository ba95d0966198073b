//! Regular and hierarchical tables, and span resolution onto an occupancy grid.
//!
//! A [`HierarchicalTable`] is what comes off the wire: header and body rows of
//! cells that may span several rows and columns. [`validate_table`] places each
//! cell on a grid (leftmost free column of its starting row, the usual table
//! markup rule) and checks that every grid position is owned by exactly one
//! cell. Header and body are resolved as separate grids of the same width.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

fn one() -> usize {
    1
}

/// A table cell. Spans count grid rows/columns covered and are at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(default)]
    pub text: String,
    #[serde(default = "one")]
    pub colspan: usize,
    #[serde(default = "one")]
    pub rowspan: usize,
}

impl Cell {
    pub fn new(text: impl Into<String>) -> Self {
        Cell {
            text: text.into(),
            colspan: 1,
            rowspan: 1,
        }
    }

    pub fn spanning(text: impl Into<String>, colspan: usize, rowspan: usize) -> Self {
        Cell {
            text: text.into(),
            colspan,
            rowspan,
        }
    }

    /// Number of grid positions this cell covers.
    pub fn area(&self) -> usize {
        self.colspan * self.rowspan
    }
}

/// Raw table as read from JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchicalTable {
    #[serde(default)]
    pub title: String,
    pub header_rows: Vec<Vec<Cell>>,
    #[serde(default)]
    pub body_rows: Vec<Vec<Cell>>,
}

/// A table whose cells are all 1×1 and whose rows all have the header's width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularTable {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RegularTable {
    pub fn width(&self) -> usize {
        self.header.len()
    }

    /// Returns false if any row's length differs from the header's.
    pub fn is_well_formed(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.header.len())
    }
}

impl From<&RegularTable> for HierarchicalTable {
    fn from(t: &RegularTable) -> Self {
        let wrap = |row: &Vec<String>| row.iter().map(|s| Cell::new(s.as_str())).collect();
        HierarchicalTable {
            title: t.title.clone(),
            header_rows: vec![wrap(&t.header)],
            body_rows: t.rows.iter().map(wrap).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Header,
    Body,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Section::Header => f.write_str("header"),
            Section::Body => f.write_str("body"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("table has no header cells")]
    EmptyHeader,
    #[error("{section} row {row}, cell {cell}: spans must be at least 1")]
    ZeroSpan {
        section: Section,
        row: usize,
        cell: usize,
    },
    #[error("{section} grid position ({row}, {col}) is claimed by two cells")]
    OverlappingSpans {
        section: Section,
        row: usize,
        col: usize,
    },
    #[error("{section} row {row} resolves to width {found}, expected {expected}")]
    RaggedGrid {
        section: Section,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{section} row {row}, cell {cell}: span exceeds the {rows}x{width} grid")]
    SpanOutOfBounds {
        section: Section,
        row: usize,
        cell: usize,
        rows: usize,
        width: usize,
    },
}

impl TableError {
    /// Stable machine-readable error code.
    pub fn kind(&self) -> &'static str {
        match self {
            TableError::EmptyHeader => "EmptyHeader",
            TableError::ZeroSpan { .. } => "ZeroSpan",
            TableError::OverlappingSpans { .. } => "OverlappingSpans",
            TableError::RaggedGrid { .. } => "RaggedGrid",
            TableError::SpanOutOfBounds { .. } => "SpanOutOfBounds",
        }
    }
}

/// Trim, drop control characters, and collapse whitespace runs to one space.
pub fn normalize_text(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .filter(|c| c.is_whitespace() || !c.is_control())
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A cell placed on the grid at its top-left corner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedCell {
    pub cell: Cell,
    pub row: usize,
    pub col: usize,
}

/// One resolved section: every position maps to the index of its owning cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    cells: Vec<PlacedCell>,
    owner: Vec<usize>,
    rows: usize,
    width: usize,
}

impl Grid {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[PlacedCell] {
        &self.cells
    }

    /// Index into [`Grid::cells`] of the cell owning `(row, col)`.
    pub fn owner_index(&self, row: usize, col: usize) -> usize {
        assert!(
            row < self.rows && col < self.width,
            "grid position out of range"
        );
        self.owner[row * self.width + col]
    }

    pub fn owner(&self, row: usize, col: usize) -> &PlacedCell {
        &self.cells[self.owner_index(row, col)]
    }

    fn resolve(section: Section, rows: &[Vec<Cell>], width: usize) -> Result<Grid, TableError> {
        let n_rows = rows.len();
        let mut owner: Vec<Option<usize>> = vec![None; n_rows * width];
        let mut cells = Vec::new();

        for (r, row) in rows.iter().enumerate() {
            let mut col = 0;
            for (i, cell) in row.iter().enumerate() {
                if cell.colspan == 0 || cell.rowspan == 0 {
                    return Err(TableError::ZeroSpan {
                        section,
                        row: r,
                        cell: i,
                    });
                }
                while col < width && owner[r * width + col].is_some() {
                    col += 1;
                }
                if col + cell.colspan > width || r + cell.rowspan > n_rows {
                    return Err(TableError::SpanOutOfBounds {
                        section,
                        row: r,
                        cell: i,
                        rows: n_rows,
                        width,
                    });
                }
                let idx = cells.len();
                for rr in r..r + cell.rowspan {
                    for cc in col..col + cell.colspan {
                        let slot = &mut owner[rr * width + cc];
                        if slot.is_some() {
                            return Err(TableError::OverlappingSpans {
                                section,
                                row: rr,
                                col: cc,
                            });
                        }
                        *slot = Some(idx);
                    }
                }
                cells.push(PlacedCell {
                    cell: Cell {
                        text: normalize_text(&cell.text),
                        colspan: cell.colspan,
                        rowspan: cell.rowspan,
                    },
                    row: r,
                    col,
                });
                col += cell.colspan;
            }
        }

        for r in 0..n_rows {
            let found = owner[r * width..(r + 1) * width]
                .iter()
                .filter(|o| o.is_some())
                .count();
            if found != width {
                return Err(TableError::RaggedGrid {
                    section,
                    row: r,
                    expected: width,
                    found,
                });
            }
        }

        Ok(Grid {
            cells,
            owner: owner
                .into_iter()
                .map(|o| o.expect("checked above"))
                .collect(),
            rows: n_rows,
            width,
        })
    }
}

/// A table whose spans have been resolved and checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedTable {
    title: String,
    header: Grid,
    body: Grid,
}

impl ValidatedTable {
    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn width(&self) -> usize {
        self.header.width
    }

    pub fn header(&self) -> &Grid {
        &self.header
    }

    pub fn body(&self) -> &Grid {
        &self.body
    }
}

/// Resolves spans of `raw` onto header and body grids.
///
/// The grid width is the total colspan of the first header row; every other
/// row, header or body, must resolve to exactly that width.
pub fn validate_table(raw: &HierarchicalTable) -> Result<ValidatedTable, TableError> {
    let width: usize = raw
        .header_rows
        .first()
        .map(|row| row.iter().map(|c| c.colspan).sum())
        .unwrap_or(0);
    if width == 0 {
        return Err(TableError::EmptyHeader);
    }
    let header = Grid::resolve(Section::Header, &raw.header_rows, width)?;
    let body = Grid::resolve(Section::Body, &raw.body_rows, width)?;
    Ok(ValidatedTable {
        title: normalize_text(&raw.title),
        header,
        body,
    })
}
