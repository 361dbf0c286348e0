//! Text persistence: series files, weights, training traces, resolved
//! configurations and replay output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{Shape, Weights};
use crate::optimizer::{TraceRow, TrainTrace};
use crate::scalar::Scalar;
use crate::series::Series;

pub const WEIGHTS_MAGIC: &str = "piranha-weights";
pub const WEIGHTS_VERSION: &str = "v1";
pub const TRACE_HEADER: &str = "iter,objective,grad_norm,alpha,f_norm_inf,ms";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses comma-separated rows (one time step per line, `#` starts a comment).
///
/// When `m` is given every row must have exactly `m` fields; otherwise the
/// first data row fixes the channel count. Returns raw, unnormalized rows.
pub fn parse_rows<S: Scalar>(text: &str, m: Option<usize>, origin: &Path) -> Result<Vec<Vec<S>>> {
    let mut rows: Vec<Vec<S>> = Vec::new();
    let mut width = m;
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |detail: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            detail,
        };
        let row = content
            .split(',')
            .map(|field| {
                let field = field.trim();
                field
                    .parse::<S>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(format!("not a finite number: {field:?}")))
            })
            .collect::<Result<Vec<S>>>()?;
        match width {
            Some(w) if w != row.len() => {
                return Err(parse_err(format!("expected {w} fields, found {}", row.len())));
            }
            Some(_) => {}
            None => width = Some(row.len()),
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Loads a series file and normalizes each channel onto `[-1, 1]`.
pub fn load_series<S: Scalar>(path: &Path, m: Option<usize>) -> Result<Series<S>> {
    let rows = parse_rows(&read(path)?, m, path)?;
    Series::normalize(&rows)
}

/// Writes the series at its original scale.
pub fn save_series<S: Scalar>(series: &Series<S>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in series.raw_values() {
        push_csv_row(&mut out, &row);
    }
    write(path, &out)
}

fn push_csv_row<S: Scalar>(out: &mut String, row: &[S]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

/// `piranha-weights v1 n m`, then the `n` rows of `F` and the `n` rows of `G`,
/// every value with 17 significant digits.
pub fn format_weights<S: Scalar>(w: &Weights<S>) -> String {
    let shape = w.shape();
    let mut out = format!("{WEIGHTS_MAGIC} {WEIGHTS_VERSION} {} {}\n", shape.n(), shape.m());
    for mat in [w.f(), w.g()] {
        for r in 0..mat.rows() {
            let line: Vec<String> = mat.row(r).iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn parse_weights<S: Scalar>(text: &str) -> Result<Weights<S>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty weights file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [magic, version, n, m] = fields.as_slice() else {
        return Err(Error::Format(format!("malformed header {header:?}")));
    };
    if *magic != WEIGHTS_MAGIC {
        return Err(Error::Format(format!("not a weights file (header {header:?})")));
    }
    if *version != WEIGHTS_VERSION {
        return Err(Error::Format(format!("unsupported weights version {version}")));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad dimension {s:?} in header")))
    };
    let shape = Shape::new(parse_dim(m)?, parse_dim(n)?)?;
    let mut read_block = |rows: usize, cols: usize, name: &str| -> Result<Matrix<S>> {
        let mut data = Vec::with_capacity(rows);
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("truncated file: missing row {r} of {name}")))?;
            let row = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<S>()
                        .map_err(|_| Error::Format(format!("bad value {v:?} in {name} row {r}")))
                })
                .collect::<Result<Vec<S>>>()?;
            if row.len() != cols {
                return Err(Error::Format(format!(
                    "{name} row {r} has {} values, expected {cols}",
                    row.len()
                )));
            }
            data.push(row);
        }
        Matrix::from_rows(&data)
    };
    let f = read_block(shape.n(), shape.n(), "F")?;
    let g = read_block(shape.n(), shape.m() + 1, "G")?;
    if lines.next().is_some() {
        return Err(Error::Format("trailing data after G".into()));
    }
    Weights::new(f, g).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_weights<S: Scalar>(w: &Weights<S>, path: &Path) -> Result<()> {
    write(path, &format_weights(w))
}

pub fn load_weights<S: Scalar>(path: &Path) -> Result<Weights<S>> {
    parse_weights(&read(path)?)
}

pub fn format_trace<S: Scalar>(trace: &TrainTrace<S>) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{}",
            r.iter, r.objective, r.grad_norm, r.alpha, r.f_norm_inf, r.ms
        );
    }
    out
}

pub fn write_trace<S: Scalar>(trace: &TrainTrace<S>, path: &Path) -> Result<()> {
    write(path, &format_trace(trace))
}

pub fn parse_trace<S: Scalar>(text: &str) -> Result<TrainTrace<S>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "expected trace header {TRACE_HEADER:?}, found {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::Format(format!("malformed trace row {}: {line:?}", i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<S>().map_err(|_| bad());
        rows.push(TraceRow {
            iter: f[0].parse().map_err(|_| bad())?,
            objective: num(f[1])?,
            grad_norm: num(f[2])?,
            alpha: num(f[3])?,
            f_norm_inf: num(f[4])?,
            ms: f[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(TrainTrace { rows })
}

pub fn read_trace<S: Scalar>(path: &Path) -> Result<TrainTrace<S>> {
    parse_trace(&read(path)?)
}

/// Writes `key=value` lines in the given order.
pub fn write_key_values(pairs: &[(&str, String)], path: &Path) -> Result<()> {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}={v}");
    }
    write(path, &out)
}

/// CSV `t,target_0..,prediction_0..` at the series' original scale.
pub fn write_replay<S: Scalar>(series: &Series<S>, predictions: &[Vec<S>], path: &Path) -> Result<()> {
    let m = series.dim();
    let mut out = String::from("t");
    for c in 0..m {
        let _ = write!(out, ",target_{c}");
    }
    for c in 0..m {
        let _ = write!(out, ",prediction_{c}");
    }
    out.push('\n');
    for (t, p) in predictions.iter().enumerate() {
        let target = series.denormalize_row(series.at(t)?);
        let pred = series.denormalize_row(p);
        let _ = write!(out, "{t},");
        let mut row = target;
        row.extend(pred);
        push_csv_row(&mut out, &row);
    }
    write(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# header\n0.5, 1\n\n2,3 # trailing\n";
        let rows: Vec<Vec<f64>> = parse_rows(text, Some(2), Path::new("mem")).unwrap();
        assert_eq!(rows, vec![vec![0.5, 1.0], vec![2.0, 3.0]]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_rows::<f64>("1\n2\nabc\n", Some(1), Path::new("mem")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_rows::<f64>("1,2\n3\n", None, Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn weights_header_must_satisfy_shape() {
        let text = "piranha-weights v1 2 2\n0 0\n0 0\n0 0 0\n0 0 0\n";
        assert!(matches!(parse_weights::<f64>(text), Err(Error::Shape(_))));
    }

    #[test]
    fn truncated_or_foreign_weights_rejected() {
        let text = "piranha-weights v1 2 1\n0 0\n0 0\n0 0\n";
        assert!(matches!(parse_weights::<f64>(text), Err(Error::Format(_))));
        let text = "piranha-weights v2 2 1\n";
        assert!(matches!(parse_weights::<f64>(text), Err(Error::Format(_))));
        assert!(matches!(parse_weights::<f64>(""), Err(Error::Format(_))));
    }

    #[test]
    fn empty_trace_is_header_only() {
        let t = TrainTrace::<f64>::default();
        assert_eq!(format_trace(&t), format!("{TRACE_HEADER}\n"));
        assert_eq!(parse_trace::<f64>(&format_trace(&t)).unwrap(), t);
    }
}
