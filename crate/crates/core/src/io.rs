//! Plain-text formats.
//!
//! | file | layout |
//! |------|--------|
//! | configuration | headerless CSV, one unit vector per row |
//! | features | CSV with header `label,f0,…,f{d-1}` |
//! | classifier | headerless CSV, `K` rows of length `d` |
//! | UFM trace | CSV with header `iter,loss,gnc1,gnc3` |
//!
//! Reals are written with 17 significant digits so that they re-parse to
//! the same `f64`.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::SphericalConfiguration;
use crate::metrics::LabeledFeatureSet;
use crate::ufm::UfmTraceRow;

/// Largest `|‖row‖ − 1|` accepted by [`read_configuration`] by default.
pub const NORM_DEVIATION_LIMIT: f64 = 1e-3;

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_error(line, e.to_string())
}

fn parse_real(field: &str, line: u64, column: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(line, format!("column {column}: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("column {column}: non-finite value")));
    }
    Ok(v)
}

/// Rows of reals with a common width, each tagged with its line number.
fn read_rows<R: Read>(reader: R, has_header: bool) -> Result<(Option<Vec<String>>, Vec<(u64, Vec<String>)>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = if has_header {
        Some(rdr.headers().map_err(csv_error)?.iter().map(String::from).collect())
    } else {
        None
    };
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, record.iter().map(String::from).collect()));
    }
    Ok((header, rows))
}

fn write_real_row<W: Write>(out: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    let row: Vec<String> = values.map(format_real).collect();
    writeln!(out, "{}", row.join(","))?;
    Ok(())
}

/// One row per vector.
pub fn write_configuration<W: Write>(mut out: W, config: &SphericalConfiguration) -> Result<()> {
    for col in config.columns() {
        write_real_row(&mut out, col.iter().copied())?;
    }
    Ok(())
}

/// Parses a configuration and renormalizes its rows. Rows whose norm is off
/// by more than [`NORM_DEVIATION_LIMIT`] are rejected unless `allow_non_unit`.
pub fn read_configuration<R: Read>(reader: R, allow_non_unit: bool) -> Result<SphericalConfiguration> {
    let (_, rows) = read_rows(reader, false)?;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    let mut width = None;
    for (line, fields) in rows {
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(parse_error(line, format!("expected {expected} columns, found {}", fields.len())));
        }
        let v = fields
            .iter()
            .enumerate()
            .map(|(c, f)| parse_real(f, line, c))
            .collect::<Result<Vec<f64>>>()?;
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(parse_error(line, "zero vector"));
        }
        if !allow_non_unit && (n - 1.0).abs() > NORM_DEVIATION_LIMIT {
            return Err(parse_error(line, format!("row norm {n} is not 1")));
        }
        vectors.push(v);
    }
    if vectors.len() < 2 {
        return Err(parse_error(0, "a configuration needs at least two rows"));
    }
    SphericalConfiguration::from_vectors(&vectors)
}

/// Header `label,f0,…` then one sample per row.
pub fn write_features<W: Write>(mut out: W, features: &LabeledFeatureSet) -> Result<()> {
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((0..features.dim()).map(|i| format!("f{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (i, &l) in features.labels().iter().enumerate() {
        let row: Vec<String> = features.sample(i).iter().map(|&v| format_real(v)).collect();
        writeln!(out, "{l},{}", row.join(","))?;
    }
    Ok(())
}

/// Parses a feature file. With `num_classes` unset, `K` is the largest label plus one.
pub fn read_features<R: Read>(reader: R, num_classes: Option<usize>) -> Result<LabeledFeatureSet> {
    let (header, rows) = read_rows(reader, true)?;
    let header = header.unwrap_or_default();
    if header.first().map(String::as_str) != Some("label") || header.len() < 2 {
        return Err(parse_error(1, "header must be `label,f0,...`"));
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != &format!("f{i}") {
            return Err(parse_error(1, format!("header column {} should be f{i}, found `{name}`", i + 1)));
        }
    }
    let d = header.len() - 1;
    let mut labels = Vec::with_capacity(rows.len());
    let mut flat = Vec::with_capacity(rows.len() * d);
    for (line, fields) in rows {
        if fields.len() != d + 1 {
            return Err(parse_error(line, format!("expected {} columns, found {}", d + 1, fields.len())));
        }
        let label: usize = fields[0]
            .parse()
            .map_err(|_| parse_error(line, format!("label `{}` is not a nonnegative integer", fields[0])))?;
        if let Some(k) = num_classes {
            if label >= k {
                return Err(parse_error(line, format!("label {label} out of range for {k} classes")));
            }
        }
        labels.push(label);
        for (c, f) in fields[1..].iter().enumerate() {
            flat.push(parse_real(f, line, c + 1)?);
        }
    }
    if labels.is_empty() {
        return Err(parse_error(1, "no samples"));
    }
    let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    LabeledFeatureSet::new(k, DMatrix::from_vec(d, labels.len(), flat), labels)
}

/// `K` rows of length `d`; returned as `d × K` without normalization.
pub fn read_classifier<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let (_, rows) = read_rows(reader, false)?;
    let mut flat = Vec::new();
    let mut width = None;
    for (line, fields) in &rows {
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(parse_error(*line, format!("expected {expected} columns, found {}", fields.len())));
        }
        for (c, f) in fields.iter().enumerate() {
            flat.push(parse_real(f, *line, c)?);
        }
    }
    match width {
        Some(d) if rows.len() >= 2 => Ok(DMatrix::from_vec(d, rows.len(), flat)),
        _ => Err(parse_error(0, "a classifier needs at least two rows")),
    }
}

/// Writes the columns of a `d × K` matrix as `K` rows.
pub fn write_classifier<W: Write>(mut out: W, w: &DMatrix<f64>) -> Result<()> {
    for col in w.column_iter() {
        write_real_row(&mut out, col.iter().copied())?;
    }
    Ok(())
}

pub fn write_trace<W: Write>(mut out: W, trace: &[UfmTraceRow]) -> Result<()> {
    writeln!(out, "iter,loss,gnc1,gnc3")?;
    for r in trace {
        writeln!(out, "{},{},{},{}", r.iter, format_real(r.loss), format_real(r.gnc1), format_real(r.gnc3))?;
    }
    Ok(())
}
