//! Plain-text formats for block matrices and M/G/1 specifications.
//!
//! Both formats are line based; `#` starts a comment and blank lines are
//! ignored. Block values are listed row-major.
//!
//! Block matrix:
//!
//! ```text
//! levels 2
//! phases 1 2
//! block 0 0 0.5
//! block 0 1 0.25 0.25
//! block 1 0 0.5 0.5
//! block 1 1 0.25 0.25 0.25 0.25
//! ```
//!
//! M/G/1 specification (`Bup k` and `Aup k` give `B_k`, `A_k` for
//! `k >= 1`; `Brem` and `Arem` are optional remainder blocks):
//!
//! ```text
//! mg1 1 1
//! B0 0.6
//! Bup 1 0.4
//! C0 0.5
//! Adown 0.5
//! A0 0.3
//! Aup 1 0.2
//! ```

use std::collections::BTreeMap;
use std::fmt::Write;

use nalgebra::DMatrix;

use crate::blocklinalg::{Block, BlockMatrix};
use crate::error::{Error, Result};
use crate::mg1::{BlockSeries, Mg1Spec};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Non-empty lines with comments stripped, numbered from 1.
fn tokens(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(n, line)| {
        let body = line.split('#').next().unwrap_or("");
        let words: Vec<&str> = body.split_whitespace().collect();
        (!words.is_empty()).then_some((n + 1, words))
    })
}

fn parse_usize(line: usize, word: &str) -> Result<usize> {
    word.parse()
        .map_err(|_| parse_err(line, format!("expected a nonnegative integer, found `{word}`")))
}

fn parse_values(line: usize, words: &[&str]) -> Result<Vec<f64>> {
    words
        .iter()
        .map(|w| {
            w.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("expected a finite number, found `{w}`")))
        })
        .collect()
}

fn block_from(line: usize, rows: usize, cols: usize, words: &[&str]) -> Result<Block> {
    let values = parse_values(line, words)?;
    if values.len() != rows * cols {
        return Err(parse_err(
            line,
            format!(
                "expected {} values for a {rows}x{cols} block, found {}",
                rows * cols,
                values.len()
            ),
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Parses the block-matrix format. Absent blocks are zero.
pub fn parse_block_matrix(text: &str) -> Result<BlockMatrix> {
    let mut levels: Option<usize> = None;
    let mut matrix: Option<BlockMatrix> = None;
    let mut last_line = 0;
    for (line, words) in tokens(text) {
        last_line = line;
        match words[0] {
            "levels" => {
                if words.len() != 2 || levels.is_some() {
                    return Err(parse_err(line, "`levels` takes one count and appears once"));
                }
                let l = parse_usize(line, words[1])?;
                if l == 0 {
                    return Err(parse_err(line, "at least one level is required"));
                }
                levels = Some(l);
            }
            "phases" => {
                let l = levels.ok_or_else(|| parse_err(line, "`phases` must follow `levels`"))?;
                if matrix.is_some() {
                    return Err(parse_err(line, "`phases` appears twice"));
                }
                let counts = words[1..]
                    .iter()
                    .map(|w| parse_usize(line, w))
                    .collect::<Result<Vec<_>>>()?;
                if counts.len() != l || counts.contains(&0) {
                    return Err(parse_err(line, format!("expected {l} positive phase counts")));
                }
                matrix = Some(BlockMatrix::square_zeros(counts));
            }
            "block" => {
                let m = matrix
                    .as_mut()
                    .ok_or_else(|| parse_err(line, "`block` must follow `phases`"))?;
                if words.len() < 3 {
                    return Err(parse_err(line, "`block` needs a row level and a column level"));
                }
                let (i, j) = (parse_usize(line, words[1])?, parse_usize(line, words[2])?);
                let l = m.num_row_levels();
                if i >= l || j >= l {
                    return Err(parse_err(line, format!("block ({i}, {j}) is outside {l} levels")));
                }
                let b = block_from(line, m.row_phases()[i], m.row_phases()[j], &words[3..])?;
                m.add_to_block(i, j, &b).map_err(|e| parse_err(line, e.to_string()))?;
            }
            other => return Err(parse_err(line, format!("unknown keyword `{other}`"))),
        }
    }
    matrix.ok_or_else(|| parse_err(last_line.max(1), "missing `levels` and `phases` header"))
}

fn push_values(out: &mut String, b: &Block) {
    for row in b.row_iter() {
        for v in row.iter() {
            write!(out, " {v:e}").expect("writing to a String cannot fail");
        }
    }
}

/// Writes the block-matrix format; values round-trip exactly.
pub fn write_block_matrix(m: &BlockMatrix) -> String {
    let mut out = format!("levels {}\nphases", m.num_row_levels());
    for p in m.row_phases() {
        write!(out, " {p}").expect("writing to a String cannot fail");
    }
    out.push('\n');
    for (i, j, b) in m.nonzero_blocks() {
        write!(out, "block {i} {j}").expect("writing to a String cannot fail");
        push_values(&mut out, b);
        out.push('\n');
    }
    out
}

/// Parses the M/G/1 format into a validated [`Mg1Spec`].
pub fn parse_mg1(text: &str) -> Result<Mg1Spec> {
    let mut shape: Option<(usize, usize)> = None;
    let mut singles: BTreeMap<&str, (usize, Block)> = BTreeMap::new();
    let mut b_up: BTreeMap<usize, Block> = BTreeMap::new();
    let mut a_up: BTreeMap<usize, Block> = BTreeMap::new();
    let mut last_line = 1;
    for (line, words) in tokens(text) {
        last_line = line;
        let key = words[0];
        if key == "mg1" {
            if words.len() != 3 || shape.is_some() {
                return Err(parse_err(line, "`mg1` takes two phase counts and appears once"));
            }
            let (r0, r) = (parse_usize(line, words[1])?, parse_usize(line, words[2])?);
            if r0 == 0 || r == 0 {
                return Err(parse_err(line, "phase counts must be positive"));
            }
            shape = Some((r0, r));
            continue;
        }
        let (r0, r) = shape.ok_or_else(|| parse_err(line, "the `mg1` header must come first"))?;
        let dims = match key {
            "B0" => (r0, r0),
            "C0" => (r, r0),
            "Adown" | "A0" | "Arem" | "Aup" => (r, r),
            "Brem" | "Bup" => (r0, r),
            other => return Err(parse_err(line, format!("unknown keyword `{other}`"))),
        };
        if key == "Bup" || key == "Aup" {
            let k = words
                .get(1)
                .ok_or_else(|| parse_err(line, format!("`{key}` needs an index")))
                .and_then(|w| parse_usize(line, w))?;
            if k == 0 {
                return Err(parse_err(line, "upward indices start at 1"));
            }
            let b = block_from(line, dims.0, dims.1, &words[2..])?;
            let target = if key == "Bup" { &mut b_up } else { &mut a_up };
            if target.insert(k, b).is_some() {
                return Err(parse_err(line, format!("`{key} {k}` given twice")));
            }
        } else {
            let b = block_from(line, dims.0, dims.1, &words[1..])?;
            if singles.insert(key, (line, b)).is_some() {
                return Err(parse_err(line, format!("`{key}` given twice")));
            }
        }
    }
    let (r0, r) = shape.ok_or_else(|| parse_err(last_line, "missing `mg1` header"))?;
    let mut take = |key: &str, dims: (usize, usize), required: bool| -> Result<Block> {
        match singles.remove(key) {
            Some((_, b)) => Ok(b),
            None if required => Err(parse_err(last_line, format!("missing `{key}`"))),
            None => Ok(Block::zeros(dims.0, dims.1)),
        }
    };
    let b0 = take("B0", (r0, r0), true)?;
    let c0 = take("C0", (r, r0), true)?;
    let a_down = take("Adown", (r, r), true)?;
    let a0 = take("A0", (r, r), true)?;
    let b_rem = take("Brem", (r0, r), false)?;
    let a_rem = take("Arem", (r, r), false)?;
    let dense = |map: BTreeMap<usize, Block>, rows: usize| -> Vec<Block> {
        let len = map.keys().next_back().copied().unwrap_or(0);
        (1..=len)
            .map(|k| map.get(&k).cloned().unwrap_or_else(|| Block::zeros(rows, r)))
            .collect()
    };
    let at_end = |e: Error| match e {
        Error::Parse { .. } => e,
        other => parse_err(last_line, other.to_string()),
    };
    Mg1Spec::new(
        b0,
        BlockSeries::explicit(r0, r, dense(b_up, r0), b_rem).map_err(at_end)?,
        c0,
        a_down,
        a0,
        BlockSeries::explicit(r, r, dense(a_up, r), a_rem).map_err(at_end)?,
    )
    .map_err(at_end)
}

/// Writes an [`Mg1Spec`] with explicit terms up to its cutoff.
pub fn write_mg1(spec: &Mg1Spec) -> String {
    let mut out = format!("mg1 {} {}\n", spec.boundary_phases(), spec.repeat_phases());
    let mut line = |name: String, b: &Block| {
        out.push_str(&name);
        push_values(&mut out, b);
        out.push('\n');
    };
    line("B0".into(), spec.b0());
    line("C0".into(), spec.c0());
    line("Adown".into(), spec.a_down());
    line("A0".into(), spec.a0());
    for k in 1..=spec.b_series().cutoff() {
        if let Some(b) = spec.b(k) {
            line(format!("Bup {k}"), &b);
        }
    }
    for k in 1..=spec.a_series().cutoff() {
        if let Some(a) = spec.a(k as isize) {
            line(format!("Aup {k}"), &a);
        }
    }
    line("Brem".into(), &spec.b_series().remainder());
    line("Arem".into(), &spec.a_series().remainder());
    out
}
