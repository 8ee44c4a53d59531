//! Shared pieces of the binary artifact formats: a magic line, a
//! length-prefixed JSON header, then named little-endian `f64` matrices.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &str, json: &[u8]) -> std::io::Result<()> {
    writeln!(w, "{magic}")?;
    writeln!(w, "header {}", json.len())?;
    w.write_all(json)?;
    w.write_all(b"\n")
}

pub(crate) fn write_matrix<W: Write>(
    w: &mut W,
    name: &str,
    rows: usize,
    cols: usize,
    data: impl IntoIterator<Item = f64>,
) -> std::io::Result<()> {
    writeln!(w, "matrix {name} {rows} {cols}")?;
    let mut buf = Vec::with_capacity(rows * cols * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(buf.len(), rows * cols * 8);
    w.write_all(&buf)?;
    w.write_all(b"\n")
}

pub(crate) fn write_end<W: Write>(w: &mut W) -> std::io::Result<()> {
    writeln!(w, "end")
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    let n = r
        .read_line(&mut line)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    if n == 0 {
        return Err(Error::Format("unexpected end of file".into()));
    }
    Ok(line.trim_end_matches('\n').to_string())
}

fn expect_newline<R: BufRead>(r: &mut R) -> Result<()> {
    let mut nl = [0u8; 1];
    r.read_exact(&mut nl)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    if nl[0] != b'\n' {
        return Err(Error::Format("missing record terminator".into()));
    }
    Ok(())
}

/// Reads the magic line and JSON header.
pub(crate) fn read_header<R: BufRead>(r: &mut R, magic: &str) -> Result<Vec<u8>> {
    let first = read_line(r)?;
    if first != magic {
        return Err(Error::Format(format!("bad magic `{first}`, expected `{magic}`")));
    }
    let line = read_line(r)?;
    let len: usize = line
        .strip_prefix("header ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad header line `{line}`")))?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    expect_newline(r)?;
    Ok(json)
}

pub(crate) struct Matrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Reads the next matrix record, or `None` at the `end` marker.
pub(crate) fn read_matrix<R: BufRead>(r: &mut R) -> Result<Option<Matrix>> {
    let line = read_line(r)?;
    if line == "end" {
        return Ok(None);
    }
    let parts: Vec<&str> = line.split(' ').collect();
    let bad = || Error::Format(format!("bad matrix line `{line}`"));
    if parts.len() != 4 || parts[0] != "matrix" {
        return Err(bad());
    }
    let rows: usize = parts[2].parse().map_err(|_| bad())?;
    let cols: usize = parts[3].parse().map_err(|_| bad())?;
    let len = rows.checked_mul(cols).and_then(|v| v.checked_mul(8)).ok_or_else(bad)?;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated matrix `{}`: {e}", parts[1])))?;
    expect_newline(r)?;
    let data = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Some(Matrix {
        name: parts[1].to_string(),
        rows,
        cols,
        data,
    }))
}
