//! Field CSV and diagnostics JSON output.
//!
//! Floats are written with 17 significant digits and LF line endings so that
//! identical runs produce byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{MfgError, Result};
use crate::grid::{diff1, diff2, GridFunction, PeriodicGrid};
use crate::system::{ProblemParams, State};

pub const SOLUTION_HEADER: [&str; 7] = ["x", "u", "m", "u_x", "m_x", "u_xx", "m_xx"];

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| MfgError::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| MfgError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_error(path: &Path, e: csv::Error) -> MfgError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => MfgError::io(path, source),
        other => MfgError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes a numeric table; every value must be finite.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    for (r, row) in rows.iter().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(MfgError::NonFiniteOutput(format!(
                "{}: row {r}, column {}",
                path.display(),
                header.get(c).copied().unwrap_or("?")
            )));
        }
    }
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| MfgError::io(path, e))
}

/// Writes `x, u, m` and their centered first and second differences.
pub fn write_solution_csv<H>(state: &State, params: &ProblemParams<H>, path: &Path) -> Result<()> {
    let grid = state.grid();
    if grid.n() != params.grid.n() {
        return Err(MfgError::GridMismatch {
            left: grid.n(),
            right: params.grid.n(),
        });
    }
    let (ux, mx) = (diff1(&state.u), diff1(&state.m));
    let (uxx, mxx) = (diff2(&state.u), diff2(&state.m));
    let rows: Vec<Vec<f64>> = (0..grid.n())
        .map(|i| {
            vec![
                grid.node(i),
                state.u[i],
                state.m[i],
                ux[i],
                mx[i],
                uxx[i],
                mxx[i],
            ]
        })
        .collect();
    write_table(path, &SOLUTION_HEADER, &rows)
}

/// Reads a solution CSV written by [`write_solution_csv`]. Only the `x`, `u`
/// and `m` columns are used; `x` must be the uniform grid `i / n`.
pub fn read_solution_csv(path: &Path) -> Result<State> {
    let malformed = |message: String| MfgError::MalformedSolution {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(|e| MfgError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| malformed(format!("missing column `{name}`")))
    };
    let (cx, cu, cm) = (column("x")?, column("u")?, column("m")?);
    let (mut xs, mut us, mut ms) = (Vec::new(), Vec::new(), Vec::new());
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let field = |c: usize| -> Result<f64> {
            let s = record.get(c).unwrap_or("").trim();
            s.parse::<f64>()
                .map_err(|_| malformed(format!("row {}: cannot parse {s:?}", r + 1)))
        };
        xs.push(field(cx)?);
        us.push(field(cu)?);
        ms.push(field(cm)?);
    }
    let grid = PeriodicGrid::new(xs.len()).map_err(|e| malformed(e.to_string()))?;
    for (i, &x) in xs.iter().enumerate() {
        if (x - grid.node(i)).abs() > 1e-12 {
            return Err(malformed(format!(
                "row {}: x = {x} is not the grid node {}",
                i + 1,
                grid.node(i)
            )));
        }
    }
    let u = GridFunction::new(grid, us).map_err(|e| malformed(e.to_string()))?;
    let m = GridFunction::new(grid, ms).map_err(|e| malformed(e.to_string()))?;
    State::new(u, m).map_err(|e| malformed(e.to_string()))
}

/// Serializes `value` as pretty JSON, refusing non-finite numbers (which
/// serde_json would silently write as `null`).
pub fn to_json<T: Serialize>(value: &T, what: &str) -> Result<String> {
    let v = serde_json::to_value(value)
        .map_err(|e| MfgError::NonFiniteOutput(format!("{what}: {e}")))?;
    if let Some(field) = find_null(&v, String::new()) {
        return Err(MfgError::NonFiniteOutput(format!(
            "{what}: field `{field}`"
        )));
    }
    let mut s = serde_json::to_string_pretty(&v).expect("a JSON value always serializes");
    s.push('\n');
    Ok(s)
}

fn find_null(v: &serde_json::Value, path: String) -> Option<String> {
    use serde_json::Value;
    match v {
        Value::Null => Some(path),
        Value::Object(map) => map.iter().find_map(|(k, x)| {
            let p = if path.is_empty() {
                k.clone()
            } else {
                format!("{path}.{k}")
            };
            find_null(x, p)
        }),
        Value::Array(xs) => xs
            .iter()
            .enumerate()
            .find_map(|(i, x)| find_null(x, format!("{path}[{i}]"))),
        _ => None,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_json(value, &path.display().to_string())?;
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| MfgError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| MfgError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn json_rejects_non_finite() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
        }
        let ok = S {
            a: 1.0,
            b: vec![2.0],
        };
        assert!(to_json(&ok, "s").unwrap().ends_with("}\n"));
        let bad = S {
            a: 1.0,
            b: vec![2.0, f64::NAN],
        };
        match to_json(&bad, "s") {
            Err(MfgError::NonFiniteOutput(msg)) => assert!(msg.contains("b[1]"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
