//! Text formats for grid functions and domain masks.
//!
//! Snapshot:
//!
//! ```text
//! dim,nx,ny,hx,hy,p,t          <- values of these fields (ny = hy = 0 in 1D)
//! v(1,1),v(2,1),...,v(nx,1)    <- one grid row per line, row-major
//! ...
//! ```
//!
//! Mask: first line `dim,nx,ny`, then `ny` rows of `nx` comma-separated
//! `0`/`1` entries. A literal column-name line (`dim,nx,ny,...`) before the
//! values is accepted when reading.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub function: GridFunction,
    pub p: f64,
    pub t: f64,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_snapshot(u: &GridFunction, p: f64, t: f64) -> String {
    let grid = u.grid();
    let (hx, hy) = grid.spacing();
    let mut out = format!(
        "{},{},{},{},{},{},{}\n",
        grid.dim(),
        grid.nx(),
        grid.ny(),
        fmt(hx),
        fmt(hy),
        fmt(p),
        fmt(t)
    );
    for row in u.values().chunks(grid.nx()) {
        let line: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Non-empty lines with their 1-based line numbers, skipping a leading
/// column-name line.
fn content_lines(text: &str) -> Vec<(usize, &str)> {
    let mut lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.first().is_some_and(|(_, l)| l.starts_with("dim")) {
        lines.remove(0);
    }
    lines
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<T>()
                .map_err(|_| parse_err(line, format!("cannot parse field '{}'", f.trim())))
        })
        .collect()
}

/// Parses a snapshot. With `grid` given, the header must match it and the
/// values are validated against its mask; otherwise an unmasked interval or
/// rectangle is rebuilt from the header.
pub fn parse_snapshot(text: &str, grid: Option<&Arc<Grid>>) -> Result<Snapshot> {
    let lines = content_lines(text);
    let (hline, header) = *lines.first().ok_or_else(|| parse_err(1, "empty snapshot"))?;
    let head: Vec<f64> = parse_fields(hline, header)?;
    if head.len() != 7 {
        return Err(parse_err(hline, format!("header needs 7 fields, found {}", head.len())));
    }
    let dim = head[0] as usize;
    let nx = head[1] as usize;
    let ny = head[2] as usize;
    let (hx, hy, p, t) = (head[3], head[4], head[5], head[6]);
    let grid = match grid {
        Some(g) => {
            if g.dim() != dim || g.nx() != nx || g.ny() != ny {
                return Err(parse_err(hline, "snapshot shape does not match the grid"));
            }
            let (gx, gy) = g.spacing();
            if (gx - hx).abs() > 1e-12 * gx || (gy - hy).abs() > 1e-12 * gy.max(f64::MIN_POSITIVE) {
                return Err(parse_err(hline, "snapshot spacing does not match the grid"));
            }
            Arc::clone(g)
        }
        None => match dim {
            1 => Grid::interval(hx * (nx + 1) as f64, nx)?,
            2 => Grid::rectangle(hx * (nx + 1) as f64, hy * (ny + 1) as f64, nx, ny)?,
            _ => return Err(parse_err(hline, format!("dimension must be 1 or 2, got {dim}"))),
        },
    };
    let rows = if dim == 1 { 1 } else { ny };
    if lines.len() - 1 != rows {
        return Err(parse_err(hline, format!("expected {rows} value rows, found {}", lines.len() - 1)));
    }
    let mut values = Vec::with_capacity(nx * rows);
    for &(ln, text) in &lines[1..] {
        let row: Vec<f64> = parse_fields(ln, text)?;
        if row.len() != nx {
            return Err(parse_err(ln, format!("expected {nx} values, found {}", row.len())));
        }
        values.extend(row);
    }
    Ok(Snapshot {
        function: GridFunction::from_values(&grid, values)?,
        p,
        t,
    })
}

pub fn write_mask(nx: usize, ny: usize, mask: &[bool]) -> String {
    let mut out = format!("2,{nx},{ny}\n");
    for row in mask.chunks(nx) {
        let line: Vec<&str> = row.iter().map(|&m| if m { "1" } else { "0" }).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Returns `(nx, ny, mask)`.
pub fn parse_mask(text: &str) -> Result<(usize, usize, Vec<bool>)> {
    let lines = content_lines(text);
    let (hline, header) = *lines.first().ok_or_else(|| parse_err(1, "empty mask file"))?;
    let head: Vec<usize> = parse_fields(hline, header)?;
    if head.len() != 3 || head[0] != 2 {
        return Err(parse_err(hline, "mask header must be '2,nx,ny'"));
    }
    let (nx, ny) = (head[1], head[2]);
    if lines.len() - 1 != ny {
        return Err(parse_err(hline, format!("expected {ny} mask rows, found {}", lines.len() - 1)));
    }
    let mut mask = Vec::with_capacity(nx * ny);
    for &(ln, text) in &lines[1..] {
        let row: Vec<u8> = parse_fields(ln, text)?;
        if row.len() != nx || row.iter().any(|&b| b > 1) {
            return Err(parse_err(ln, format!("expected {nx} entries of 0 or 1")));
        }
        mask.extend(row.into_iter().map(|b| b == 1));
    }
    Ok((nx, ny, mask))
}
