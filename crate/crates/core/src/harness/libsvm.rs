//! Dense reader and writer for the LIBSVM sparse text format
//! (`<label> <index>:<value> ...`, 1-based ascending indices).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub a: DMatrix<f64>,
    pub targets: DVector<f64>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }
}

/// Reads `path` into a dense matrix. `dim` fixes the column count (indices
/// beyond it are an error); otherwise the largest index is used. With
/// `binary_labels`, positive labels map to `+1` and all others to `−1`.
pub fn load_libsvm(path: &Path, dim: Option<usize>, binary_labels: bool) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(Error::file(path))?;
    parse_libsvm(&text, path, dim, binary_labels)
}

pub fn parse_libsvm(text: &str, path: &Path, dim: Option<usize>, binary_labels: bool) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(line_no, format!("bad label '{label_tok}'")))?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(line_no, format!("expected index:value, got '{tok}'")))?;
            let idx: usize = idx.parse().map_err(|_| err(line_no, format!("bad index '{idx}'")))?;
            if idx == 0 {
                return Err(err(line_no, "indices are 1-based".into()));
            }
            if idx == last {
                return Err(err(line_no, format!("duplicate index {idx}")));
            }
            if idx < last {
                return Err(err(line_no, format!("index {idx} after {last}; indices must ascend")));
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(err(line_no, format!("index {idx} exceeds dimension {d}")));
                }
            }
            let val: f64 = val.parse().map_err(|_| err(line_no, format!("bad value '{val}'")))?;
            if !val.is_finite() {
                return Err(err(line_no, format!("non-finite value '{val}'")));
            }
            row.push((idx, val));
            last = idx;
        }
        max_index = max_index.max(last);
        labels.push(if binary_labels {
            if label > 0.0 {
                1.0
            } else {
                -1.0
            }
        } else {
            label
        });
        rows.push(row);
    }
    let d = dim.unwrap_or(max_index);
    let mut a = DMatrix::zeros(rows.len(), d);
    for (r, row) in rows.iter().enumerate() {
        for &(idx, val) in row {
            a[(r, idx - 1)] = val;
        }
    }
    Ok(Dataset {
        a,
        targets: DVector::from_vec(labels),
    })
}

/// Writes nonzero entries with shortest round-trip formatting.
pub fn to_libsvm_string(data: &Dataset) -> String {
    let mut out = String::new();
    for r in 0..data.rows() {
        write!(out, "{}", data.targets[r]).expect("string write");
        for c in 0..data.dim() {
            let v = data.a[(r, c)];
            if v != 0.0 {
                write!(out, " {}:{}", c + 1, v).expect("string write");
            }
        }
        out.push('\n');
    }
    out
}
