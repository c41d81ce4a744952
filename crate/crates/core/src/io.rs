//! JSON-lines vectors and atomic file output.
//!
//! Logits, reward tables and snapshots share one format: each line is a JSON
//! array of reals. Blank lines are not allowed.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{LabError, Result};

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> LabError {
    LabError::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_row(path: &Path, line_no: usize, line: &str) -> Result<Vec<f64>> {
    // serde_json rejects NaN/Infinity literals, so anything that parses here
    // is finite unless it overflowed to infinity
    let values: Vec<f64> = serde_json::from_str(line)
        .map_err(|e| format_err(path, line_no, format!("expected a JSON array of reals: {e}")))?;
    if values.is_empty() {
        return Err(format_err(path, line_no, "empty array"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(format_err(path, line_no, format!("entry {i} is not finite")));
    }
    Ok(values)
}

/// Reads every row of a JSON-lines file.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LabError::io(path, e))?;
        rows.push(parse_row(path, i + 1, &line)?);
    }
    Ok(rows)
}

/// Reads row `index` (0-based), checking that it has `expected_len` entries
/// when given.
pub fn read_row(path: &Path, index: usize, expected_len: Option<usize>) -> Result<Vec<f64>> {
    let file = fs::File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut count = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LabError::io(path, e))?;
        if i == index {
            let row = parse_row(path, i + 1, &line)?;
            if let Some(n) = expected_len {
                if row.len() != n {
                    return Err(format_err(
                        path,
                        i + 1,
                        format!("expected {n} values, found {}", row.len()),
                    ));
                }
            }
            return Ok(row);
        }
        count += 1;
    }
    Err(LabError::RecordOutOfRange {
        path: path.to_path_buf(),
        index,
        count,
    })
}

/// Number of lines in a file.
pub fn count_rows(path: &Path) -> Result<usize> {
    let file = fs::File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut n = 0;
    for line in BufReader::new(file).lines() {
        line.map_err(|e| LabError::io(path, e))?;
        n += 1;
    }
    Ok(n)
}

/// Serialises rows as JSON-lines. Rust's float formatting is shortest
/// round-trip, so reading the result back is bitwise exact.
pub fn rows_to_jsonl<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| LabError::Internal(format!("cannot serialise row: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Reads a plain-text file of one non-negative integer per line.
pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| format_err(path, i + 1, format!("expected a token index: {e}")))
        })
        .collect()
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| LabError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| LabError::io(path, e))?;
    tmp.flush().map_err(|e| LabError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| LabError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "[0.0, 1.0]\n[1.0, oops]\n").unwrap();
        match read_rows(&p) {
            Err(LabError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match read_row(&p, 0, Some(3)) {
            Err(LabError::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_row(&p, 5, None),
            Err(LabError::RecordOutOfRange { count: 2, .. })
        ));
        fs::write(&p, "[1e999]\n").unwrap();
        assert!(read_rows(&p).is_err());
    }

    #[test]
    fn jsonl_is_bitwise_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let rows = vec![vec![0.1, -2.5e-300, 1.0 / 3.0], vec![f64::MAX, f64::MIN_POSITIVE, 0.0]];
        let text = rows_to_jsonl(rows.iter().map(|r| r.as_slice())).unwrap();
        write_atomic(&p, text.as_bytes()).unwrap();
        let back = read_rows(&p).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn indices_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        fs::write(&p, "3\n0\n17\n").unwrap();
        assert_eq!(read_indices(&p).unwrap(), vec![3, 0, 17]);
        fs::write(&p, "3\n-1\n").unwrap();
        assert!(read_indices(&p).is_err());
    }
}
