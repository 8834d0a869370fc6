//! Learning a data-driven facial expression coding system from keypoint-labeled
//! expression frames.
//!
//! The pipeline: standardize 68-point keypoint frames geometrically
//! ([`geometry`]), turn them into keypoint-motion vectors and a data matrix
//! ([`kpm`]), fit a two-level sparse factorization — per-part dictionary
//! learning followed by sparse NMF over the stacked encodings ([`solvers`],
//! [`ffm`]) — then encode new data with positive lasso and score
//! variance-explained and interpretability ([`eval`]). File formats, model
//! archives and SVG export live in [`io`]; [`pipeline`] wires the steps
//! together for the CLI and the browser demo.

pub mod eval;
pub mod ffm;
pub mod geometry;
pub mod io;
pub mod kpm;
pub mod pipeline;
pub mod solvers;
pub mod synthetic;
mod util;

/// Number of keypoints in the facial template.
pub const KEYPOINT_COUNT: usize = 68;

/// Dimension of a keypoint-motion vector: interleaved (x, y) per keypoint.
pub const KPM_DIM: usize = 2 * KEYPOINT_COUNT;

/// Tag written into every archive and data file so matrices produced under a
/// different row convention cannot be silently mixed.
pub const COORD_LAYOUT_TAG: &str = "interleaved-xy-68";
