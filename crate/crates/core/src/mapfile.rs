//! Plain-text map format: one row per line, `.` Free, `#` Obstacle,
//! `S` Free start cell (at most one). The grid is implicitly walled.

use thiserror::Error;

use crate::world::{CellKind, GridMap, WorldError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("map text is empty")]
    Empty,
    #[error("row {row} has length {got}, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },
    #[error("unknown character {ch:?} at row {row}, column {col}")]
    UnknownChar { ch: char, row: usize, col: usize },
    #[error("more than one start cell")]
    MultipleStarts,
    #[error(transparent)]
    Invalid(#[from] WorldError),
}

pub fn parse_map(text: &str) -> Result<GridMap, MapError> {
    let rows: Vec<&str> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .collect();
    if rows.is_empty() {
        return Err(MapError::Empty);
    }
    let width = rows[0].chars().count();
    let mut cells = Vec::with_capacity(width * rows.len());
    let mut start = None;
    for (r, line) in rows.iter().enumerate() {
        let len = line.chars().count();
        if len != width {
            return Err(MapError::RaggedRows {
                row: r,
                expected: width,
                got: len,
            });
        }
        for (c, ch) in line.chars().enumerate() {
            cells.push(match ch {
                '.' => CellKind::Free,
                '#' => CellKind::Obstacle,
                'S' => {
                    if start.replace((r, c)).is_some() {
                        return Err(MapError::MultipleStarts);
                    }
                    CellKind::Free
                }
                other => {
                    return Err(MapError::UnknownChar {
                        ch: other,
                        row: r,
                        col: c,
                    })
                }
            });
        }
    }
    let map = GridMap::new(width, rows.len(), cells, start)?;
    map.validate()?;
    Ok(map)
}

/// Inverse of [`parse_map`], LF-terminated.
pub fn render_map(map: &GridMap) -> String {
    let mut out = String::with_capacity((map.width() + 1) * map.height());
    for row in 0..map.height() {
        for col in 0..map.width() {
            let ch = if map.start() == Some((row, col)) {
                'S'
            } else if map.is_free(row as isize, col as isize) {
                '.'
            } else {
                '#'
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}
