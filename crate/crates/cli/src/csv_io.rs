//! Complex matrix input ("a+bi" cells) and CSV tables for results.

use std::io::Write;
use std::path::Path;

use icbd::linalg::{c64, C64};
use icbd::mc::PerformancePoint;
use icbd::{ComplexMatrix, ComplexVector};

use crate::error::CliError;

pub const SIMULATE_HEADER: [&str; 8] = ["esnr_db", "detector", "pd_mc", "ci_low", "ci_high", "pd_theory", "threshold", "trials"];
pub const THEORY_HEADER: [&str; 4] = ["esnr_db", "detector", "pd_theory", "threshold_theory"];

/// Parses `a`, `bi`, `a+bi`, `a-bi` (also with `j`), e.g. `1.5e-3-2i`.
pub fn parse_complex(cell: &str) -> Option<C64> {
    let s: String = cell.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix(['i', 'j']) else {
        return s.parse().ok().map(|re| c64(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (body[..k].parse().ok()?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse().ok()?,
    };
    Some(c64(re, im))
}

pub fn read_complex_matrix(path: &Path) -> Result<ComplexMatrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                parse_complex(cell).ok_or_else(|| {
                    CliError::Validation(format!("{}: row {}, column {}: cannot parse `{cell}`", path.display(), i + 1, j + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(CliError::Validation(format!("{}: no data", path.display())));
    }
    Ok(ComplexMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// A single row or a single column.
pub fn read_complex_vector(path: &Path) -> Result<ComplexVector, CliError> {
    let m = read_complex_matrix(path)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(ComplexVector::from_iterator(m.len(), m.iter().copied()))
    } else {
        Err(CliError::Validation(format!("{}: expected a vector, found a {}x{} matrix", path.display(), m.nrows(), m.ncols())))
    }
}

/// `v` rounded to `digits` significant digits, printed in shortest form.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), v).parse().unwrap_or(v);
    if rounded == 0.0 {
        "0".into()
    } else {
        format!("{rounded}")
    }
}

pub fn write_points<W: Write>(out: W, points: &[PerformancePoint], digits: usize) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIMULATE_HEADER)?;
    for p in points {
        w.write_record([
            fmt_sig(p.esnr_db, digits),
            p.kind.name().to_string(),
            fmt_sig(p.pd_mc, digits),
            fmt_sig(p.ci_low, digits),
            fmt_sig(p.ci_high, digits),
            p.pd_theory.map(|v| fmt_sig(v, digits)).unwrap_or_default(),
            fmt_sig(p.threshold, digits),
            p.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the analytic table.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub esnr_db: f64,
    pub detector: &'static str,
    pub pd_theory: Option<f64>,
    pub threshold_theory: Option<f64>,
}

pub fn write_theory<W: Write>(out: W, rows: &[TheoryRow], digits: usize) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(THEORY_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_sig(r.esnr_db, digits),
            r.detector.to_string(),
            r.pd_theory.map(|v| fmt_sig(v, digits)).unwrap_or_default(),
            r.threshold_theory.map(|v| fmt_sig(v, digits)).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed form of a simulate CSV row, for readers of our own output.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub esnr_db: f64,
    pub detector: String,
    pub pd_mc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pd_theory: Option<f64>,
    pub threshold: f64,
    pub trials: usize,
}

pub fn read_points(path: &Path) -> Result<Vec<PointRecord>, CliError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != SIMULATE_HEADER {
        return Err(CliError::Validation(format!("{}: unexpected header {header:?}", path.display())));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| CliError::Validation(format!("{}: `{s}`: {e}", path.display())));
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record?;
        out.push(PointRecord {
            esnr_db: num(&r[0])?,
            detector: r[1].to_string(),
            pd_mc: num(&r[2])?,
            ci_low: num(&r[3])?,
            ci_high: num(&r[4])?,
            pd_theory: if r[5].is_empty() { None } else { Some(num(&r[5])?) },
            threshold: num(&r[6])?,
            trials: r[7].parse().map_err(|e| CliError::Validation(format!("{}: trials: {e}", path.display())))?,
        });
    }
    Ok(out)
}
