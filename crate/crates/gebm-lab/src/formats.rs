//! On-disk formats: numeric CSV (round-trip-exact floats), raw little-endian
//! parameter blobs, and pretty-printed JSON documents.
//!
//! CSV dialect: comma-separated, `\n` line endings, no quoting (the payload
//! is purely numeric). Sample matrices carry no header; metric series carry
//! a single header row. Floats are written with 17 significant digits so
//! parsing them back yields the identical `f64` bit pattern.

use crate::error::LabError;
use gebm_core::training::HistoryRow;
use gebm_core::Tensor;
use serde::Serialize;
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// 17-significant-digit scientific notation: enough digits that
/// `parse::<f64>()` recovers the exact value.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), LabError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

/// Writes a sample matrix: one CSV row per tensor row, no header.
pub fn write_matrix_csv(path: &Path, t: &Tensor) -> Result<(), LabError> {
    let mut out = String::new();
    for r in 0..t.rows() {
        let row = t.row_slice(r);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Reads a headerless numeric CSV into a tensor. Rows must have equal
/// width; the error for a malformed row names its 1-based line number.
pub fn read_matrix_csv(path: &Path) -> Result<Tensor, LabError> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut width = 0usize;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| LabError::CsvParse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("row {}: '{}' is not a number", idx + 1, field.trim()),
            })?;
            data.push(v);
            width += 1;
        }
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(LabError::CsvParse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("row {}: expected {} fields, found {}", idx + 1, c, width),
                });
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| LabError::CsvParse {
        path: path.to_path_buf(),
        line: 1,
        message: String::from("empty file"),
    })?;
    Ok(Tensor::from_vec(rows, cols, data))
}

/// Writes a metric series: a header row followed by numeric rows.
pub fn write_series_csv(
    path: &Path,
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), LabError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Writes the training history with its column header.
pub fn write_history_csv(path: &Path, history: &[HistoryRow]) -> Result<(), LabError> {
    let rows: Vec<Vec<f64>> = history
        .iter()
        .map(|h| {
            vec![
                h.step as f64,
                h.f_hat,
                h.a,
                h.a_tilde,
                h.val_kale,
                h.lr_scale,
            ]
        })
        .collect();
    write_series_csv(
        path,
        &["step", "f_hat", "a", "a_tilde", "val_kale", "lr_scale"],
        &rows,
    )
}

/// Raw little-endian `f64` blob (the `params.bin` of a checkpoint).
pub fn write_params_bin(path: &Path, values: &[f64]) -> Result<(), LabError> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

/// Reads a parameter blob and checks its length.
pub fn read_params_bin(path: &Path, expected_len: usize) -> Result<Vec<f64>, LabError> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    if bytes.len() != expected_len * 8 {
        return Err(LabError::Checkpoint {
            path: path.to_path_buf(),
            message: format!(
                "expected {} parameter bytes, found {}",
                expected_len * 8,
                bytes.len()
            ),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Serializes a document as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), LabError> {
    let mut text = serde_json::to_string_pretty(doc).expect("JSON serialization cannot fail");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Parses a JSON file into a config type; the error message surfaces
/// serde's description (which names unknown or ill-typed keys).
pub fn read_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, LabError> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Prints a JSON document to stdout (the `kale` command contract).
pub fn print_json<T: Serialize>(doc: &T) {
    let text = serde_json::to_string_pretty(doc).expect("JSON serialization cannot fail");
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{text}");
}
