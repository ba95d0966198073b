//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the library's span resolver or metric code; each
//! oracle restates the expected result from first principles.
#![allow(dead_code)]

use std::collections::HashMap;

use adaqa::table::{Cell, HierarchicalTable};
use rand::Rng;

/// A random table together with the ground-truth text at every grid position
/// of each section, recorded while the spans were laid down.
#[derive(Debug, Clone)]
pub struct GeneratedTable {
    pub table: HierarchicalTable,
    pub header_grid: Vec<Vec<String>>,
    pub body_grid: Vec<Vec<String>>,
}

/// Partitions a `rows × width` rectangle into random sub-rectangles. Cells
/// are emitted row-major by top-left corner, which is exactly the order an
/// HTML-style reader expects them in.
fn partition<R: Rng>(
    rng: &mut R,
    rows: usize,
    width: usize,
    prefix: &str,
    next_id: &mut usize,
) -> (Vec<Vec<Cell>>, Vec<Vec<String>>) {
    let mut grid: Vec<Vec<Option<String>>> = vec![vec![None; width]; rows];
    let mut out: Vec<Vec<Cell>> = vec![Vec::new(); rows];
    for r in 0..rows {
        for c in 0..width {
            if grid[r][c].is_some() {
                continue;
            }
            let mut run = 0;
            while c + run < width && grid[r][c + run].is_none() {
                run += 1;
            }
            let colspan = rng.random_range(1..=run);
            let rowspan = rng.random_range(1..=rows - r);
            let text = format!("{prefix}{next_id}");
            *next_id += 1;
            for row in grid.iter_mut().skip(r).take(rowspan) {
                for slot in row.iter_mut().skip(c).take(colspan) {
                    assert!(slot.is_none(), "generator produced an overlap");
                    *slot = Some(text.clone());
                }
            }
            out[r].push(Cell::spanning(text, colspan, rowspan));
        }
    }
    let grid = grid
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|s| s.expect("partition covers the rectangle"))
                .collect()
        })
        .collect();
    (out, grid)
}

/// Random valid table: header depth 1..=3, body up to `max_rows` rows, width
/// 1..=`max_cols`, spans anywhere.
pub fn random_table<R: Rng>(rng: &mut R, max_rows: usize, max_cols: usize) -> GeneratedTable {
    let width = rng.random_range(1..=max_cols);
    let header_rows = rng.random_range(1..=3);
    let body_rows = rng.random_range(0..=max_rows);
    let mut id = 0;
    let (header, header_grid) = partition(rng, header_rows, width, "h", &mut id);
    let (body, body_grid) = partition(rng, body_rows, width, "v", &mut id);
    GeneratedTable {
        table: HierarchicalTable {
            title: "random".into(),
            header_rows: header,
            body_rows: body,
        },
        header_grid,
        body_grid,
    }
}

/// Expected flattened header: walk each column top-down, collapse
/// consecutive repeats of the same label, drop empty labels, and nest.
pub fn header_oracle(grid: &[Vec<String>]) -> Vec<String> {
    let width = grid.first().map_or(0, Vec::len);
    (0..width)
        .map(|c| {
            let mut levels: Vec<&str> = Vec::new();
            for row in grid {
                let label = row[c].as_str();
                if levels.last() != Some(&label) {
                    levels.push(label);
                }
            }
            let levels: Vec<&str> = levels.into_iter().filter(|l| !l.is_empty()).collect();
            let mut key = String::new();
            for (i, l) in levels.iter().enumerate() {
                if i > 0 {
                    key.push('(');
                }
                key.push_str(l);
            }
            key.push_str(&")".repeat(levels.len().saturating_sub(1)));
            key
        })
        .collect()
}

/// LCS length by trying every subsequence of `a`, longest first.
pub fn lcs_exhaustive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let is_subsequence = |mask: u32| {
        let mut j = 0;
        for (i, x) in a.iter().enumerate() {
            if mask & (1 << i) != 0 {
                while j < b.len() && b[j] != *x {
                    j += 1;
                }
                if j == b.len() {
                    return false;
                }
                j += 1;
            }
        }
        true
    };
    (0u32..(1 << a.len()))
        .filter(|&m| is_subsequence(m))
        .map(|m| m.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

/// Clipped bigram overlap, counted with plain loops: (hits, hyp bigrams, ref bigrams).
pub fn bigram_overlap(hyp: &[String], reference: &[String]) -> (usize, usize, usize) {
    let pairs = |t: &[String]| -> Vec<(String, String)> {
        (1..t.len())
            .map(|i| (t[i - 1].clone(), t[i].clone()))
            .collect()
    };
    let (h, r) = (pairs(hyp), pairs(reference));
    let mut seen: Vec<&(String, String)> = Vec::new();
    let mut hits = 0;
    for g in &h {
        if seen.contains(&g) {
            continue;
        }
        seen.push(g);
        let in_h = h.iter().filter(|x| *x == g).count();
        let in_r = r.iter().filter(|x| *x == g).count();
        hits += in_h.min(in_r);
    }
    (hits, h.len(), r.len())
}

/// Counts of each whitespace token in `s`.
pub fn bag(s: &str) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in s.split_whitespace() {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

/// Random sentence over a small vocabulary so overlaps are common.
pub fn random_words<R: Rng>(rng: &mut R, max_len: usize, vocab: &[&str]) -> Vec<String> {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| vocab[rng.random_range(0..vocab.len())].to_string())
        .collect()
}
