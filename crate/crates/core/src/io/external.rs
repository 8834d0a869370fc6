//! External AU matrix files.
//!
//! Same matrix-block format as the model archive, with the mandatory layout
//! tag and a free-form provenance line:
//!
//! ```text
//! dfecs-au-matrix 1
//! layout interleaved-xy-68
//! source <free text, e.g. FACS pure AUs>
//! matrix AU 136 <n>
//! <136 rows of whitespace-separated floats>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::DMatrix;

use super::IoError;
use crate::{COORD_LAYOUT_TAG, KPM_DIM};

const MAGIC: &str = "dfecs-au-matrix";
const VERSION: &str = "1";

/// An AU matrix plus its recorded provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalAuSet {
    /// 136 x n displacement columns.
    pub matrix: DMatrix<f64>,
    pub source: String,
}

pub fn load_au_matrix(path: impl AsRef<Path>) -> Result<ExternalAuSet, IoError> {
    read_au_matrix(File::open(path)?)
}

pub fn read_au_matrix<R: Read>(reader: R) -> Result<ExternalAuSet, IoError> {
    let mut lines = BufReader::new(reader).lines();
    let mut next = |what: &str| -> Result<String, IoError> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| IoError::Inconsistent(format!("file ends before {what}")))
    };

    let magic = next("magic")?;
    let mut words = magic.split_whitespace();
    if words.next() != Some(MAGIC) {
        return Err(IoError::Inconsistent("not an AU matrix file".into()));
    }
    let version = words.next().unwrap_or("").to_string();
    if version != VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }

    let layout_line = next("layout")?;
    let layout = layout_line
        .strip_prefix("layout ")
        .ok_or(IoError::Inconsistent("missing layout line".into()))?;
    if layout != COORD_LAYOUT_TAG {
        return Err(IoError::LayoutMismatch(layout.to_string()));
    }

    let source_line = next("source")?;
    let source = source_line
        .strip_prefix("source ")
        .ok_or(IoError::Inconsistent("missing source line".into()))?
        .trim()
        .to_string();

    let header = next("matrix header")?;
    let mut words = header.split_whitespace();
    if words.next() != Some("matrix") || words.next() != Some("AU") {
        return Err(IoError::Inconsistent(format!(
            "expected matrix AU header, got {header:?}"
        )));
    }
    let rows: usize = words
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or(IoError::Inconsistent("bad matrix rows".into()))?;
    let cols: usize = words
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or(IoError::Inconsistent("bad matrix cols".into()))?;
    if rows != KPM_DIM {
        return Err(IoError::BadShape(format!("{rows} rows, expected {KPM_DIM}")));
    }
    if cols == 0 {
        return Err(IoError::BadShape("matrix has no columns".into()));
    }

    let mut matrix = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let data = next("matrix row")?;
        let mut entries = data.split_whitespace();
        for c in 0..cols {
            let cell = entries
                .next()
                .ok_or_else(|| IoError::BadShape(format!("row {} too short", r + 1)))?;
            let value: f64 = cell.parse().map_err(|e| IoError::BadField {
                row: r + 1,
                field: c + 1,
                message: format!("bad number: {e}"),
            })?;
            if !value.is_finite() {
                return Err(IoError::BadField {
                    row: r + 1,
                    field: c + 1,
                    message: "non-finite entry".into(),
                });
            }
            matrix[(r, c)] = value;
        }
        if entries.next().is_some() {
            return Err(IoError::BadShape(format!("row {} too long", r + 1)));
        }
    }
    Ok(ExternalAuSet { matrix, source })
}

/// Serialize an AU matrix in the external file format.
pub fn au_matrix_to_string(matrix: &DMatrix<f64>, source: &str) -> Result<String, IoError> {
    if matrix.nrows() != KPM_DIM {
        return Err(IoError::BadShape(format!(
            "{} rows, expected {KPM_DIM}",
            matrix.nrows()
        )));
    }
    let mut out = String::new();
    out.push_str(&format!("{MAGIC} {VERSION}\n"));
    out.push_str(&format!("layout {COORD_LAYOUT_TAG}\n"));
    out.push_str(&format!("source {source}\n"));
    out.push_str(&format!("matrix AU {} {}\n", matrix.nrows(), matrix.ncols()));
    for r in 0..matrix.nrows() {
        for c in 0..matrix.ncols() {
            if c > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{}", matrix[(r, c)]));
        }
        out.push('\n');
    }
    Ok(out)
}
