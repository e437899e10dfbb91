//! Renderings of fields and patterns for inspection: binary PGM images and
//! full-precision CSV tables.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Pgm,
    Csv,
}

/// Binary `P5` image with maxval 255. Values map linearly, min to 0 and max
/// to 255; a constant input renders as mid-gray 128.
pub fn to_pgm(values: &[f64], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if values.len() != rows * cols {
        return Err(Error::shape("pgm", format!("{}", rows * cols), format!("{}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("cannot render non-finite values"));
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        out.extend(std::iter::repeat(128u8).take(rows * cols));
    } else {
        let scale = 255.0 / (max - min);
        out.extend(values.iter().map(|v| ((v - min) * scale).round() as u8));
    }
    Ok(out)
}

/// Complex inputs render as their modulus.
pub fn complex_to_pgm(values: &[Complex64], rows: usize, cols: usize) -> Result<Vec<u8>> {
    let moduli: Vec<f64> = values.iter().map(|z| z.norm()).collect();
    to_pgm(&moduli, rows, cols)
}

/// One CSV row per grid row; `f64` Display round-trips exactly.
pub fn to_csv(values: &[f64], rows: usize, cols: usize) -> Result<String> {
    if values.len() != rows * cols {
        return Err(Error::shape("csv", format!("{}", rows * cols), format!("{}", values.len())));
    }
    let mut out = String::new();
    for r in 0..rows {
        let row: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Complex values flatten to `re,im` column pairs.
pub fn complex_to_csv(values: &[Complex64], rows: usize, cols: usize) -> Result<String> {
    if values.len() != rows * cols {
        return Err(Error::shape("csv", format!("{}", rows * cols), format!("{}", values.len())));
    }
    let mut out = String::new();
    for r in 0..rows {
        let row: Vec<String> = values[r * cols..(r + 1) * cols]
            .iter()
            .flat_map(|z| [z.re.to_string(), z.im.to_string()])
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Parse a rectangular CSV table of finite floats.
pub fn parse_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                let v: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(format!("line {}: bad float `{tok}`", lineno + 1)))?;
                if !v.is_finite() {
                    return Err(Error::format(format!(
                        "line {}: non-finite value `{tok}`",
                        lineno + 1
                    )));
                }
                Ok(v)
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::format(format!(
                    "line {}: expected {w} columns, got {}",
                    lineno + 1,
                    row.len()
                )));
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_real(path: &Path, format: PlotFormat, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    match format {
        PlotFormat::Pgm => fs::write(path, to_pgm(values, rows, cols)?)?,
        PlotFormat::Csv => fs::write(path, to_csv(values, rows, cols)?)?,
    }
    Ok(())
}

pub fn write_complex(
    path: &Path,
    format: PlotFormat,
    values: &[Complex64],
    rows: usize,
    cols: usize,
) -> Result<()> {
    match format {
        PlotFormat::Pgm => fs::write(path, complex_to_pgm(values, rows, cols)?)?,
        PlotFormat::Csv => fs::write(path, complex_to_csv(values, rows, cols)?)?,
    }
    Ok(())
}
