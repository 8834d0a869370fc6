//! Keypoint-motion vectors and the data matrix, plus the seven-part face
//! partition used by the part models.
//!
//! Row layout is interleaved `(x_i, y_i)` for keypoint `i = 0..67`; the layout
//! tag travels with every serialized matrix so incompatible producers cannot
//! be mixed.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use thiserror::Error;

use crate::geometry::StandardizedFrame;
use crate::{KEYPOINT_COUNT, KPM_DIM};

#[derive(Debug, Error, PartialEq)]
pub enum KpmError {
    #[error("frames belong to different subjects: {0} vs {1}")]
    SubjectMismatch(String, String),
    #[error("sample count {requested} exceeds available columns {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("KPM vector has length {0}, expected 136")]
    BadLength(usize),
}

/// The seven face parts of the partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FacePart {
    LeftEyebrow,
    RightEyebrow,
    LeftEye,
    RightEye,
    Nose,
    Lips,
    Jawline,
}

impl FacePart {
    /// Stacking order used throughout the model.
    pub const ALL: [FacePart; 7] = [
        FacePart::LeftEyebrow,
        FacePart::RightEyebrow,
        FacePart::LeftEye,
        FacePart::RightEye,
        FacePart::Nose,
        FacePart::Lips,
        FacePart::Jawline,
    ];

    /// Keypoint indices of this part in the standard 68-point layout.
    pub fn keypoint_indices(self) -> std::ops::RangeInclusive<usize> {
        match self {
            FacePart::Jawline => 0..=16,
            FacePart::RightEyebrow => 17..=21,
            FacePart::LeftEyebrow => 22..=26,
            FacePart::Nose => 27..=35,
            FacePart::RightEye => 36..=41,
            FacePart::LeftEye => 42..=47,
            FacePart::Lips => 48..=67,
        }
    }

    /// Rows of the part in the 136-row data matrix, ascending keypoint order,
    /// x row before y row.
    pub fn rows(self) -> Vec<usize> {
        self.keypoint_indices()
            .flat_map(|i| [2 * i, 2 * i + 1])
            .collect()
    }

    /// Dimension `p = 2 * |keypoints|` of the part.
    pub fn dim(self) -> usize {
        2 * self.keypoint_indices().count()
    }

    pub fn name(self) -> &'static str {
        match self {
            FacePart::LeftEyebrow => "left_eyebrow",
            FacePart::RightEyebrow => "right_eyebrow",
            FacePart::LeftEye => "left_eye",
            FacePart::RightEye => "right_eye",
            FacePart::Nose => "nose",
            FacePart::Lips => "lips",
            FacePart::Jawline => "jawline",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        FacePart::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// One frame's keypoint motion from the subject's neutral frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KpmVector {
    pub values: DVector<f64>,
    pub subject_id: String,
    pub frame_index: u32,
    /// Keypoints zeroed because they were invalid in the frame or its neutral.
    pub masked_keypoints: Vec<usize>,
}

/// Per-column provenance of the data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub subject_id: String,
    pub frame_index: u32,
}

/// The data matrix `X` (136 x m) with column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct KpmMatrix {
    pub x: DMatrix<f64>,
    pub columns: Vec<ColumnMeta>,
    /// `(count, seed)` when the columns were subsampled.
    pub sample: Option<(usize, u64)>,
}

/// Entry-wise `frame - neutral` on keypoints valid in both frames; zero (and
/// recorded in `masked_keypoints`) elsewhere.
pub fn compute_kpm(
    neutral: &StandardizedFrame,
    frame: &StandardizedFrame,
) -> Result<KpmVector, KpmError> {
    if neutral.subject_id != frame.subject_id {
        return Err(KpmError::SubjectMismatch(
            neutral.subject_id.clone(),
            frame.subject_id.clone(),
        ));
    }
    let mut values = DVector::zeros(KPM_DIM);
    let mut masked = Vec::new();
    for i in 0..KEYPOINT_COUNT {
        if neutral.is_valid(i) && frame.is_valid(i) {
            values[2 * i] = frame.point(i)[0] - neutral.point(i)[0];
            values[2 * i + 1] = frame.point(i)[1] - neutral.point(i)[1];
        } else {
            masked.push(i);
        }
    }
    Ok(KpmVector {
        values,
        subject_id: frame.subject_id.clone(),
        frame_index: frame.frame_index,
        masked_keypoints: masked,
    })
}

/// Assemble KPM vectors into the data matrix, optionally subsampling columns
/// uniformly without replacement with a fixed seed. Sampled columns keep
/// their original relative order.
pub fn build_matrix(
    vectors: &[KpmVector],
    sample: Option<(usize, u64)>,
) -> Result<KpmMatrix, KpmError> {
    for v in vectors {
        if v.values.len() != KPM_DIM {
            return Err(KpmError::BadLength(v.values.len()));
        }
    }
    let selected: Vec<usize> = match sample {
        Some((n, seed)) => {
            if n > vectors.len() {
                return Err(KpmError::SampleTooLarge {
                    requested: n,
                    available: vectors.len(),
                });
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, vectors.len(), n).into_vec();
            picked.sort_unstable();
            picked
        }
        None => (0..vectors.len()).collect(),
    };
    let m = selected.len();
    let mut x = DMatrix::zeros(KPM_DIM, m);
    let mut columns = Vec::with_capacity(m);
    for (col, &idx) in selected.iter().enumerate() {
        x.set_column(col, &vectors[idx].values);
        columns.push(ColumnMeta {
            subject_id: vectors[idx].subject_id.clone(),
            frame_index: vectors[idx].frame_index,
        });
    }
    Ok(KpmMatrix {
        x,
        columns,
        sample,
    })
}

/// Submatrix of the part's rows (p x m).
pub fn extract_part(x: &DMatrix<f64>, part: FacePart) -> DMatrix<f64> {
    let rows = part.rows();
    let mut out = DMatrix::zeros(rows.len(), x.ncols());
    for (r_out, &r_in) in rows.iter().enumerate() {
        for c in 0..x.ncols() {
            out[(r_out, c)] = x[(r_in, c)];
        }
    }
    out
}

/// Scatter a part-dimensional vector back to the full 136-dimensional layout,
/// zero everywhere outside the part.
pub fn expand_to_full(part_component: &DVector<f64>, part: FacePart) -> DVector<f64> {
    let rows = part.rows();
    assert_eq!(
        part_component.len(),
        rows.len(),
        "component length {} does not match part dim {}",
        part_component.len(),
        rows.len()
    );
    let mut out = DVector::zeros(KPM_DIM);
    for (r_in, &r_out) in rows.iter().enumerate() {
        out[r_out] = part_component[r_in];
    }
    out
}
