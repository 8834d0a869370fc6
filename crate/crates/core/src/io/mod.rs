//! File formats: keypoint-frame CSV, the model archive, external AU
//! matrices, tradeoff-curve tables, and SVG rendering.

mod archive;
mod curves;
mod external;
mod frames;
mod svg;

pub use archive::{load_model, save_model, write_model};
pub use curves::{curve_to_delimited, write_curve};
pub use external::{au_matrix_to_string, load_au_matrix, read_au_matrix, ExternalAuSet};
pub use frames::{frame_header, load_frames, read_frames, save_frames, write_frames};
pub use svg::{au_arrows_svg, au_gallery_svg, curve_svg};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("record {row}, field {field}: {message}")]
    BadField {
        row: usize,
        field: usize,
        message: String,
    },
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("archive checksum mismatch")]
    ChecksumMismatch,
    #[error("unsupported archive version: {0}")]
    UnsupportedVersion(String),
    #[error("coordinate layout is {0}, expected {expected}", expected = crate::COORD_LAYOUT_TAG)]
    LayoutMismatch(String),
    #[error("inconsistent archive: {0}")]
    Inconsistent(String),
}
