//! Plain CSV dialect shared by every artifact: comma separated, `.` decimal,
//! one header row, `#`-prefixed metadata lines, shortest round-trip floats.

use std::io::Write;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn write_metadata<W: Write>(w: &mut W, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

pub fn write_row<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let line: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
    writeln!(w, "{}", line.join(","))?;
    Ok(())
}

/// Non-comment, non-blank lines.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_row(lineno: usize, line: &str, width: usize) -> Result<Vec<f64>> {
    let row = line
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {lineno}: cannot parse '{}' as a number", f.trim())))
        })
        .collect::<Result<Vec<f64>>>()?;
    if row.len() != width {
        return Err(Error::Format(format!("line {lineno}: expected {width} fields, found {}", row.len())));
    }
    Ok(row)
}

/// Reads a header plus numeric body.
pub fn read_table(text: &str) -> Result<(Vec<String>, Matrix)> {
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| Error::Format("empty table".into()))?;
    let header: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (no, line) in lines {
        data.extend(parse_row(no, line, header.len())?);
        rows += 1;
    }
    Ok((header.clone(), Matrix::from_vec(rows, header.len(), data)?))
}
