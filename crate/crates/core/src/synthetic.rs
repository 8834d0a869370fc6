//! Synthetic face data with a planted two-level structure, for tests,
//! benchmarks, and the demo.
//!
//! The generator plants part-local dictionary atoms whose support avoids all
//! registration anchor keypoints, combines them through a nonnegative
//! hierarchy, and renders each subject through its own similarity transform.
//! Standardization then removes the subject transforms exactly, so the KPM
//! matrix of the generated dataset equals the planted `U_true * A_true * B`
//! up to the requested noise.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand::seq::index::sample as index_sample;

use crate::geometry::{Point, RawFrame, Template};
use crate::kpm::FacePart;
use crate::{KEYPOINT_COUNT, KPM_DIM};

/// Keypoints used as registration anchors anywhere in the pipeline; planted
/// atoms never displace these.
const ANCHOR_KEYPOINTS: [usize; 8] = [0, 16, 27, 33, 36, 39, 42, 45];

/// A plausible asymmetric face with all 68 keypoints valid, in roughly
/// 100 x 100 pixel units.
pub fn face_template_coords() -> [Point; KEYPOINT_COUNT] {
    let mut c = [[0.0f64; 2]; KEYPOINT_COUNT];
    // jawline: arc from left to right
    for i in 0..17 {
        let t = i as f64 / 16.0;
        let ang = std::f64::consts::PI * (1.0 - t);
        c[i] = [50.0 + 45.0 * ang.cos(), 60.0 + 50.0 * ang.sin() + 3.0 * t];
    }
    // right eyebrow 17-21
    for i in 0..5 {
        c[17 + i] = [22.0 + 5.0 * i as f64, 38.0 - 1.5 * (i as f64 - 2.0).abs()];
    }
    // left eyebrow 22-26
    for i in 0..5 {
        c[22 + i] = [58.0 + 5.0 * i as f64, 38.5 - 1.4 * (i as f64 - 2.0).abs()];
    }
    // nose 27-35
    for i in 0..4 {
        c[27 + i] = [50.0 + 0.3 * i as f64, 42.0 + 5.0 * i as f64];
    }
    for i in 0..5 {
        c[31 + i] = [46.0 + 2.1 * i as f64, 60.0 + 0.8 * (i as f64 - 2.0).abs()];
    }
    // eyes 36-41 and 42-47
    let eye = [
        [0.0, 0.0],
        [3.0, -1.6],
        [6.5, -1.5],
        [9.5, 0.0],
        [6.5, 1.5],
        [3.0, 1.6],
    ];
    for (i, e) in eye.iter().enumerate() {
        c[36 + i] = [26.0 + e[0], 45.0 + e[1]];
    }
    for (i, e) in eye.iter().enumerate() {
        c[42 + i] = [64.0 + e[0], 45.3 + e[1]];
    }
    // lips 48-67
    for i in 0..12 {
        let ang = 2.0 * std::f64::consts::PI * i as f64 / 12.0;
        c[48 + i] = [50.0 + 12.0 * ang.cos(), 78.0 + 6.0 * ang.sin()];
    }
    for i in 0..8 {
        let ang = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
        c[60 + i] = [50.0 + 7.0 * ang.cos(), 78.0 + 3.0 * ang.sin()];
    }
    c
}

pub fn face_template() -> Template {
    Template {
        coords: face_template_coords(),
        validity: [true; KEYPOINT_COUNT],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub subjects: usize,
    /// Frames per subject, the first being the neutral.
    pub frames_per_subject: usize,
    pub atoms_per_part: usize,
    /// Planted hierarchy dimension.
    pub q: usize,
    /// Uniform coordinate noise half-width, in source pixel units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            subjects: 8,
            frames_per_subject: 40,
            atoms_per_part: 5,
            q: 8,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub frames: Vec<RawFrame>,
    pub template: Template,
    /// Planted stacked dictionary, 136 x (7 * atoms_per_part).
    pub u_true: DMatrix<f64>,
    /// Planted hierarchy, (7 * atoms_per_part) x q.
    pub a_true: DMatrix<f64>,
    /// Planted per-frame codes, q x (subjects * frames_per_subject).
    pub b_true: DMatrix<f64>,
    /// Noise-free KPM ground truth `U_true * A_true * B`, one column per
    /// frame in emission order.
    pub x_true: DMatrix<f64>,
}

/// Rows of a part excluding anchor keypoints.
fn free_rows(part: FacePart) -> Vec<usize> {
    part.keypoint_indices()
        .filter(|i| !ANCHOR_KEYPOINTS.contains(i))
        .flat_map(|i| [2 * i, 2 * i + 1])
        .collect()
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticDataset {
    assert!(spec.subjects >= 1 && spec.frames_per_subject >= 2);
    assert!(spec.atoms_per_part >= 1 && spec.q >= 1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    let template = face_template();
    let k = FacePart::ALL.len() * spec.atoms_per_part;
    let m = spec.subjects * spec.frames_per_subject;

    // part-local atoms, unit norm, off-anchor support
    let mut u_true = DMatrix::zeros(KPM_DIM, k);
    for (p, part) in FacePart::ALL.into_iter().enumerate() {
        let rows = free_rows(part);
        for a in 0..spec.atoms_per_part {
            let j = p * spec.atoms_per_part + a;
            let mut norm_sq = 0.0;
            for &r in &rows {
                let e: f64 = rng.random_range(-1.0..1.0);
                u_true[(r, j)] = e;
                norm_sq += e * e;
            }
            let norm = norm_sq.sqrt().max(1e-12);
            for &r in &rows {
                u_true[(r, j)] /= norm;
            }
        }
    }

    // hierarchy: each planted AU recruits 2-4 part atoms, drawn from a
    // shuffled pool so AUs have disjoint support while the pool lasts (keeps
    // the planted directions distinct instead of collapsing onto each other)
    let mut a_true = DMatrix::zeros(k, spec.q);
    let mut pool: Vec<usize> = Vec::new();
    for c in 0..spec.q {
        let recruit = rng.random_range(2..=4usize.min(k));
        for _ in 0..recruit {
            if pool.is_empty() {
                pool = (0..k).collect();
                pool.shuffle(&mut rng);
            }
            let r = pool.pop().expect("refilled");
            a_true[(r, c)] = rng.random_range(0.5..1.5);
        }
    }

    // per-frame codes: neutrals are zero, others activate 1-3 AUs with
    // displacement amplitudes of a few pixels
    let mut b_true = DMatrix::zeros(spec.q, m);
    for s in 0..spec.subjects {
        for f in 1..spec.frames_per_subject {
            let c = s * spec.frames_per_subject + f;
            let n_active = rng.random_range(1..=2usize.min(spec.q));
            let active = index_sample(&mut rng, spec.q, n_active);
            for a in active {
                b_true[(a, c)] = rng.random_range(4.0..8.0);
            }
        }
    }

    let x_true = &u_true * &a_true * &b_true;

    let mut frames = Vec::with_capacity(m);
    for s in 0..spec.subjects {
        // per-subject similarity transform: pose surrogate. Subject 0 is the
        // reference and stays in template coordinates so that the pipeline's
        // learned template equals `template`.
        let mut angle: f64 = rng.random_range(-0.2..0.2);
        let mut scale: f64 = rng.random_range(0.8..1.25);
        let (mut tx, mut ty) = (
            rng.random_range(-25.0..25.0f64),
            rng.random_range(-25.0..25.0f64),
        );
        if s == 0 {
            (angle, scale, tx, ty) = (0.0, 1.0, 0.0, 0.0);
        }
        let (sin, cos) = angle.sin_cos();
        let apply = |p: Point| -> Point {
            [
                scale * (cos * p[0] - sin * p[1]) + tx,
                scale * (sin * p[0] + cos * p[1]) + ty,
            ]
        };
        for f in 0..spec.frames_per_subject {
            let c = s * spec.frames_per_subject + f;
            let mut coords = template.coords;
            for i in 0..KEYPOINT_COUNT {
                coords[i][0] += x_true[(2 * i, c)];
                coords[i][1] += x_true[(2 * i + 1, c)];
                coords[i] = apply(coords[i]);
                if spec.noise > 0.0 {
                    coords[i][0] += rng.random_range(-spec.noise..spec.noise);
                    coords[i][1] += rng.random_range(-spec.noise..spec.noise);
                }
            }
            frames.push(RawFrame::new(
                format!("synth{s:02}"),
                f as u32,
                f == 0,
                coords,
                template.validity,
            ));
        }
    }

    SyntheticDataset {
        frames,
        template,
        u_true,
        a_true,
        b_true,
        x_true,
    }
}
