//! Geometric standardization of raw keypoint frames.
//!
//! Removes head-pose surrogate, face size/position and part-level scale from
//! 68-point frames in three steps: a pluggable frontalization hook (identity
//! by default), a whole-face six-parameter affine registration against a small
//! set of near-stationary anchor keypoints, and per-part similarity
//! registration. Lips are never similarity-registered; the nose is
//! translation-only.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::KEYPOINT_COUNT;

/// One keypoint coordinate pair.
pub type Point = [f64; 2];

/// Determinant magnitude below which an affine linear part counts as singular.
const DET_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("anchor keypoint {0} is missing in the frame")]
    MissingAnchor(usize),
    #[error("anchor keypoint {0} is missing in the template")]
    MissingTemplateAnchor(usize),
    #[error("anchor points are collinear or otherwise rank-deficient")]
    DegenerateAnchors,
    #[error("similarity registration needs at least two valid anchors, got {0}")]
    InsufficientAnchors(usize),
    #[error("similarity anchors coincide")]
    CoincidentAnchors,
    #[error("affine parameters are not invertible")]
    NotInvertible,
    #[error("anchor index {0} out of range or duplicated")]
    BadAnchorIndex(usize),
    #[error("non-finite coordinate encountered")]
    NonFinite,
}

/// A single frame of raw (source-unit) keypoints.
///
/// Missing keypoints carry the coordinate value (0, 0) and `validity` false.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub subject_id: String,
    pub frame_index: u32,
    pub is_neutral: bool,
    coords: [Point; KEYPOINT_COUNT],
    validity: [bool; KEYPOINT_COUNT],
}

impl RawFrame {
    pub fn new(
        subject_id: impl Into<String>,
        frame_index: u32,
        is_neutral: bool,
        mut coords: [Point; KEYPOINT_COUNT],
        validity: [bool; KEYPOINT_COUNT],
    ) -> Self {
        for (c, &v) in coords.iter_mut().zip(validity.iter()) {
            if !v {
                *c = [0.0, 0.0];
            }
        }
        RawFrame {
            subject_id: subject_id.into(),
            frame_index,
            is_neutral,
            coords,
            validity,
        }
    }

    pub fn coords(&self) -> &[Point; KEYPOINT_COUNT] {
        &self.coords
    }

    pub fn validity(&self) -> &[bool; KEYPOINT_COUNT] {
        &self.validity
    }

    pub fn point(&self, index: usize) -> Point {
        self.coords[index]
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.validity[index]
    }
}

/// A frame whose coordinates live in standardized template units.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedFrame {
    pub subject_id: String,
    pub frame_index: u32,
    pub is_neutral: bool,
    coords: [Point; KEYPOINT_COUNT],
    validity: [bool; KEYPOINT_COUNT],
}

impl StandardizedFrame {
    /// Wrap coordinates that are already known to be in standardized units,
    /// e.g. when re-ingesting the output of the `standardize` subcommand.
    pub fn assume_standardized(frame: RawFrame) -> Self {
        StandardizedFrame {
            subject_id: frame.subject_id,
            frame_index: frame.frame_index,
            is_neutral: frame.is_neutral,
            coords: frame.coords,
            validity: frame.validity,
        }
    }

    pub fn to_raw(&self) -> RawFrame {
        RawFrame {
            subject_id: self.subject_id.clone(),
            frame_index: self.frame_index,
            is_neutral: self.is_neutral,
            coords: self.coords,
            validity: self.validity,
        }
    }

    pub fn coords(&self) -> &[Point; KEYPOINT_COUNT] {
        &self.coords
    }

    pub fn validity(&self) -> &[bool; KEYPOINT_COUNT] {
        &self.validity
    }

    pub fn point(&self, index: usize) -> Point {
        self.coords[index]
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.validity[index]
    }
}

/// Which whole-face affine anchor set to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorChoice {
    /// {0, 16, 27, 33, 39, 42} — requires jawline keypoints.
    Default,
    /// {27, 33, 39, 42, 36, 45} — for data without jawline keypoints.
    NoJawline,
}

impl AnchorChoice {
    pub fn indices(self) -> [usize; 6] {
        match self {
            AnchorChoice::Default => [0, 16, 27, 33, 39, 42],
            AnchorChoice::NoJawline => [27, 33, 39, 42, 36, 45],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnchorChoice::Default => "default",
            AnchorChoice::NoJawline => "no-jawline",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "default" => Some(AnchorChoice::Default),
            "no-jawline" => Some(AnchorChoice::NoJawline),
            _ => None,
        }
    }
}

/// Registration anchors paired with their target coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    indices: Vec<usize>,
    template_coords: Vec<Point>,
}

impl AnchorSet {
    pub fn new(indices: Vec<usize>, template_coords: Vec<Point>) -> Result<Self, GeometryError> {
        assert_eq!(indices.len(), template_coords.len());
        for (i, &idx) in indices.iter().enumerate() {
            if idx >= KEYPOINT_COUNT || indices[..i].contains(&idx) {
                return Err(GeometryError::BadAnchorIndex(idx));
            }
        }
        Ok(AnchorSet {
            indices,
            template_coords,
        })
    }

    pub fn from_template(choice: AnchorChoice, template: &Template) -> Result<Self, GeometryError> {
        let indices = choice.indices();
        let mut coords = Vec::with_capacity(indices.len());
        for &i in &indices {
            if !template.validity[i] {
                return Err(GeometryError::MissingTemplateAnchor(i));
            }
            coords.push(template.coords[i]);
        }
        AnchorSet::new(indices.to_vec(), coords)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn template_coords(&self) -> &[Point] {
        &self.template_coords
    }
}

/// The fixed standardized-space target: the (frontalized) neutral frame of a
/// designated reference subject. Persisted in the model archive so train and
/// test data share one coordinate space.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub coords: [Point; KEYPOINT_COUNT],
    pub validity: [bool; KEYPOINT_COUNT],
}

impl Template {
    pub fn from_frame(frame: &StandardizedFrame) -> Self {
        Template {
            coords: *frame.coords(),
            validity: *frame.validity(),
        }
    }

    /// Adopt a reference subject's neutral frame (after frontalization) as the
    /// template; its own coordinates define the standardized space.
    pub fn from_reference_neutral(frame: &RawFrame, frontalizer: &dyn Frontalizer) -> Self {
        let coords = frontalizer.frontalize(frame.coords(), frame.validity());
        Template {
            coords,
            validity: *frame.validity(),
        }
    }
}

/// Six-parameter affine map `p ↦ M·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub linear: Matrix2<f64>,
    pub translation: Vector2<f64>,
}

impl AffineParams {
    pub fn identity() -> Self {
        AffineParams {
            linear: Matrix2::identity(),
            translation: Vector2::zeros(),
        }
    }

    pub fn is_invertible(&self) -> bool {
        self.linear.determinant().abs() > DET_EPS
    }

    pub fn apply(&self, p: Point) -> Point {
        let q = self.linear * Vector2::new(p[0], p[1]) + self.translation;
        [q.x, q.y]
    }

    pub fn inverse(&self) -> Result<AffineParams, GeometryError> {
        let inv = self.linear.try_inverse().ok_or(GeometryError::NotInvertible)?;
        Ok(AffineParams {
            linear: inv,
            translation: -(inv * self.translation),
        })
    }
}

/// Four-parameter similarity map: isotropic scale, rotation, translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityParams {
    pub scale: f64,
    pub rotation: f64,
    pub translation: Vector2<f64>,
}

impl SimilarityParams {
    pub fn identity() -> Self {
        SimilarityParams {
            scale: 1.0,
            rotation: 0.0,
            translation: Vector2::zeros(),
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        let a = self.scale * c;
        let b = self.scale * s;
        [
            a * p[0] - b * p[1] + self.translation.x,
            b * p[0] + a * p[1] + self.translation.y,
        ]
    }
}

/// Pluggable frontalization hook: 68 points in, 68 points out.
pub trait Frontalizer: Sync {
    fn frontalize(
        &self,
        coords: &[Point; KEYPOINT_COUNT],
        validity: &[bool; KEYPOINT_COUNT],
    ) -> [Point; KEYPOINT_COUNT];
}

/// Default hook: passes coordinates through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFrontalizer;

impl Frontalizer for IdentityFrontalizer {
    fn frontalize(
        &self,
        coords: &[Point; KEYPOINT_COUNT],
        _validity: &[bool; KEYPOINT_COUNT],
    ) -> [Point; KEYPOINT_COUNT] {
        *coords
    }
}

/// Least-squares affine fit of anchor correspondences `(source, target)`.
///
/// Six anchors give an overdetermined 12x6 system; the x and y target rows
/// decouple into two 3-unknown normal-equation solves sharing one Gram matrix.
pub fn estimate_affine_points(pairs: &[(Point, Point)]) -> Result<AffineParams, GeometryError> {
    if pairs.len() < 3 {
        return Err(GeometryError::DegenerateAnchors);
    }
    let mut gram = Matrix3::zeros();
    let mut rhs_x = Vector3::zeros();
    let mut rhs_y = Vector3::zeros();
    let mut scale2 = 0.0f64;
    for &(p, q) in pairs {
        if !p.iter().chain(q.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let row = Vector3::new(p[0], p[1], 1.0);
        gram += row * row.transpose();
        rhs_x += row * q[0];
        rhs_y += row * q[1];
        scale2 += p[0] * p[0] + p[1] * p[1] + 1.0;
    }
    // Rank check relative to the anchor scale: collinear anchors make the
    // Gram matrix singular.
    let det = gram.determinant();
    let scale_per = scale2 / pairs.len() as f64;
    if det.abs() <= 1e-12 * scale_per.powi(3).max(1.0) * 1e-3 {
        return Err(GeometryError::DegenerateAnchors);
    }
    let lu = gram.lu();
    let sol_x = lu.solve(&rhs_x).ok_or(GeometryError::DegenerateAnchors)?;
    let sol_y = lu.solve(&rhs_y).ok_or(GeometryError::DegenerateAnchors)?;
    Ok(AffineParams {
        linear: Matrix2::new(sol_x.x, sol_x.y, sol_y.x, sol_y.y),
        translation: Vector2::new(sol_x.z, sol_y.z),
    })
}

/// Least-squares affine registration of a frame's anchor keypoints onto the
/// anchor set's template coordinates.
pub fn estimate_affine(frame: &RawFrame, anchors: &AnchorSet) -> Result<AffineParams, GeometryError> {
    let mut pairs = Vec::with_capacity(anchors.indices.len());
    for (&i, &q) in anchors.indices.iter().zip(anchors.template_coords.iter()) {
        if !frame.is_valid(i) {
            return Err(GeometryError::MissingAnchor(i));
        }
        pairs.push((frame.point(i), q));
    }
    estimate_affine_points(&pairs)
}

/// Apply affine parameters to every valid keypoint of a frame.
pub fn apply_affine(frame: &RawFrame, params: &AffineParams) -> Result<RawFrame, GeometryError> {
    if !params.is_invertible() {
        return Err(GeometryError::NotInvertible);
    }
    let mut coords = *frame.coords();
    for (i, c) in coords.iter_mut().enumerate() {
        if frame.is_valid(i) {
            *c = params.apply(*c);
        }
    }
    Ok(RawFrame {
        subject_id: frame.subject_id.clone(),
        frame_index: frame.frame_index,
        is_neutral: frame.is_neutral,
        coords,
        validity: *frame.validity(),
    })
}

/// Least-squares similarity fit of `(source, target)` correspondences.
///
/// Linear in the complex parameterization `w = c·z + t`; two points in
/// general position are matched exactly.
pub fn estimate_similarity_points(
    pairs: &[(Point, Point)],
) -> Result<SimilarityParams, GeometryError> {
    if pairs.len() < 2 {
        return Err(GeometryError::InsufficientAnchors(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mut pc = [0.0f64; 2];
    let mut qc = [0.0f64; 2];
    for &(p, q) in pairs {
        if !p.iter().chain(q.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        pc[0] += p[0];
        pc[1] += p[1];
        qc[0] += q[0];
        qc[1] += q[1];
    }
    pc[0] /= n;
    pc[1] /= n;
    qc[0] /= n;
    qc[1] /= n;
    let mut denom = 0.0f64;
    let mut re = 0.0f64;
    let mut im = 0.0f64;
    let mut spread = 0.0f64;
    for &(p, q) in pairs {
        let px = p[0] - pc[0];
        let py = p[1] - pc[1];
        let qx = q[0] - qc[0];
        let qy = q[1] - qc[1];
        denom += px * px + py * py;
        re += px * qx + py * qy;
        im += px * qy - py * qx;
        spread += px.abs() + py.abs();
    }
    if denom <= 1e-24 * spread.max(1.0) || denom == 0.0 {
        return Err(GeometryError::CoincidentAnchors);
    }
    let a = re / denom;
    let b = im / denom;
    let scale = a.hypot(b);
    if scale <= 0.0 {
        return Err(GeometryError::CoincidentAnchors);
    }
    let rotation = b.atan2(a);
    // t = q̄ − c·p̄ in complex form.
    let tx = qc[0] - (a * pc[0] - b * pc[1]);
    let ty = qc[1] - (b * pc[0] + a * pc[1]);
    Ok(SimilarityParams {
        scale,
        rotation,
        translation: Vector2::new(tx, ty),
    })
}

/// Least-squares similarity registration of selected frame keypoints onto
/// template coordinates.
pub fn estimate_similarity(
    frame: &RawFrame,
    part_anchors: &[usize],
    template_coords: &[Point],
) -> Result<SimilarityParams, GeometryError> {
    assert_eq!(part_anchors.len(), template_coords.len());
    let pairs: Vec<(Point, Point)> = part_anchors
        .iter()
        .zip(template_coords.iter())
        .filter(|(&i, _)| frame.is_valid(i))
        .map(|(&i, &q)| (frame.point(i), q))
        .collect();
    if pairs.len() < 2 {
        return Err(GeometryError::InsufficientAnchors(pairs.len()));
    }
    estimate_similarity_points(&pairs)
}

/// The similarity-registered face regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartGroup {
    LeftBrowAndEye,
    RightBrowAndEye,
    Nose,
    Jawline,
}

impl PartGroup {
    pub const ALL: [PartGroup; 4] = [
        PartGroup::LeftBrowAndEye,
        PartGroup::RightBrowAndEye,
        PartGroup::Nose,
        PartGroup::Jawline,
    ];

    /// Keypoints moved by this group's registration step.
    pub fn member_indices(self) -> Vec<usize> {
        match self {
            PartGroup::LeftBrowAndEye => (22..=26).chain(42..=47).collect(),
            PartGroup::RightBrowAndEye => (17..=21).chain(36..=41).collect(),
            PartGroup::Nose => (27..=35).collect(),
            PartGroup::Jawline => (0..=16).collect(),
        }
    }

    /// Anchor keypoints used to estimate the group transform.
    pub fn anchor_indices(self) -> &'static [usize] {
        match self {
            PartGroup::LeftBrowAndEye => &[42, 45],
            PartGroup::RightBrowAndEye => &[36, 39],
            PartGroup::Nose => &[27],
            PartGroup::Jawline => &[0, 16],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartGroup::LeftBrowAndEye => "left-brow-and-eye",
            PartGroup::RightBrowAndEye => "right-brow-and-eye",
            PartGroup::Nose => "nose",
            PartGroup::Jawline => "jawline",
        }
    }
}

/// A part registration step that had to be skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct PartWarning {
    pub group: PartGroup,
    pub reason: String,
}

/// Configuration for [`standardize_frame`].
#[derive(Debug, Clone)]
pub struct StandardizeConfig {
    pub template: Template,
    pub anchors: AnchorChoice,
}

/// Standardization result plus any part steps that were skipped.
#[derive(Debug, Clone)]
pub struct StandardizeOutcome {
    pub frame: StandardizedFrame,
    pub warnings: Vec<PartWarning>,
}

/// Standardize a frame with the identity frontalization hook.
pub fn standardize_frame(
    frame: &RawFrame,
    config: &StandardizeConfig,
) -> Result<StandardizeOutcome, GeometryError> {
    standardize_frame_with(frame, config, &IdentityFrontalizer)
}

/// Standardize a frame: frontalization hook, whole-face affine registration,
/// then per-part similarity registration. Parts without enough valid anchors
/// (in the frame or the template) are passed through untouched after the
/// affine step, with a recorded warning. Lips are never part-registered.
pub fn standardize_frame_with(
    frame: &RawFrame,
    config: &StandardizeConfig,
    frontalizer: &dyn Frontalizer,
) -> Result<StandardizeOutcome, GeometryError> {
    let fronted = RawFrame::new(
        frame.subject_id.clone(),
        frame.frame_index,
        frame.is_neutral,
        frontalizer.frontalize(frame.coords(), frame.validity()),
        *frame.validity(),
    );

    let anchor_set = AnchorSet::from_template(config.anchors, &config.template)?;
    let affine = estimate_affine(&fronted, &anchor_set)?;
    if !affine.is_invertible() {
        return Err(GeometryError::NotInvertible);
    }
    let registered = apply_affine(&fronted, &affine)?;
    let mut coords = *registered.coords();
    let validity = *registered.validity();
    let mut warnings = Vec::new();

    for group in PartGroup::ALL {
        let anchors = group.anchor_indices();
        let usable: Vec<usize> = anchors
            .iter()
            .copied()
            .filter(|&i| validity[i] && config.template.validity[i])
            .collect();
        match group {
            PartGroup::Nose => {
                if usable.is_empty() {
                    warnings.push(PartWarning {
                        group,
                        reason: "nose anchor 27 missing; nose left at affine registration".into(),
                    });
                    continue;
                }
                let a = usable[0];
                let dx = config.template.coords[a][0] - coords[a][0];
                let dy = config.template.coords[a][1] - coords[a][1];
                for i in group.member_indices() {
                    if validity[i] {
                        coords[i][0] += dx;
                        coords[i][1] += dy;
                    }
                }
            }
            _ => {
                if usable.len() < 2 {
                    warnings.push(PartWarning {
                        group,
                        reason: format!(
                            "{} valid anchors of {:?}; part left at affine registration",
                            usable.len(),
                            anchors
                        ),
                    });
                    continue;
                }
                let pairs: Vec<(Point, Point)> = usable
                    .iter()
                    .map(|&i| (coords[i], config.template.coords[i]))
                    .collect();
                let sim = estimate_similarity_points(&pairs)?;
                for i in group.member_indices() {
                    if validity[i] {
                        coords[i] = sim.apply(coords[i]);
                    }
                }
            }
        }
    }

    for (c, &v) in coords.iter_mut().zip(validity.iter()) {
        if !v {
            *c = [0.0, 0.0];
        }
    }

    Ok(StandardizeOutcome {
        frame: StandardizedFrame {
            subject_id: frame.subject_id.clone(),
            frame_index: frame.frame_index,
            is_neutral: frame.is_neutral,
            coords,
            validity,
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// A plausible asymmetric face-like template with all 68 points valid.
    pub(crate) fn face_template_coords() -> [Point; KEYPOINT_COUNT] {
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
        // right eye 36-41
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

    pub(crate) fn face_template() -> Template {
        Template {
            coords: face_template_coords(),
            validity: [true; KEYPOINT_COUNT],
        }
    }

    pub(crate) fn template_frame(template: &Template) -> RawFrame {
        RawFrame::new("ref", 0, true, template.coords, template.validity)
    }

    fn config() -> StandardizeConfig {
        StandardizeConfig {
            template: face_template(),
            anchors: AnchorChoice::Default,
        }
    }

    #[test]
    fn affine_identity_on_template_anchors() {
        let template = face_template();
        let frame = template_frame(&template);
        let anchors = AnchorSet::from_template(AnchorChoice::Default, &template).unwrap();
        let params = estimate_affine(&frame, &anchors).unwrap();
        assert_abs_diff_eq!(params.linear, Matrix2::identity(), epsilon = 1e-9);
        assert_abs_diff_eq!(params.translation, Vector2::zeros(), epsilon = 1e-9);
    }

    #[test]
    fn affine_recovers_known_map() {
        let template = face_template();
        let frame = template_frame(&template);
        let known = AffineParams {
            linear: Matrix2::new(2.0, 0.0, 0.0, 2.0),
            translation: Vector2::new(10.0, 5.0),
        };
        let moved = apply_affine(&frame, &known).unwrap();
        let anchors = AnchorSet::from_template(AnchorChoice::Default, &template).unwrap();
        let params = estimate_affine(&moved, &anchors).unwrap();
        // recovered params invert the applied map on the anchors
        for &i in anchors.indices() {
            let back = params.apply(moved.point(i));
            assert_abs_diff_eq!(back[0], template.coords[i][0], epsilon = 1e-9);
            assert_abs_diff_eq!(back[1], template.coords[i][1], epsilon = 1e-9);
        }
    }

    #[test]
    fn affine_beats_identity_on_perturbed_anchors() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let template = face_template();
        let anchors = AnchorSet::from_template(AnchorChoice::Default, &template).unwrap();
        for _ in 0..20 {
            let mut coords = template.coords;
            for c in coords.iter_mut() {
                c[0] += rng.random_range(-1.0..1.0f64);
                c[1] += rng.random_range(-1.0..1.0f64);
            }
            let frame = RawFrame::new("s", 0, false, coords, [true; KEYPOINT_COUNT]);
            let params = estimate_affine(&frame, &anchors).unwrap();
            let resid = |f: &AffineParams| -> f64 {
                anchors
                    .indices()
                    .iter()
                    .zip(anchors.template_coords())
                    .map(|(&i, q)| {
                        let p = f.apply(frame.point(i));
                        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
                    })
                    .sum()
            };
            assert!(resid(&params) <= resid(&AffineParams::identity()) + 1e-12);
        }
    }

    #[test]
    fn affine_degenerate_and_missing_anchor_errors() {
        let template = face_template();
        let anchors = AnchorSet::from_template(AnchorChoice::Default, &template).unwrap();
        // collinear anchors
        let mut coords = [[0.0; 2]; KEYPOINT_COUNT];
        for (i, c) in coords.iter_mut().enumerate() {
            *c = [i as f64, 2.0 * i as f64];
        }
        let frame = RawFrame::new("s", 0, false, coords, [true; KEYPOINT_COUNT]);
        assert_eq!(
            estimate_affine(&frame, &anchors).unwrap_err(),
            GeometryError::DegenerateAnchors
        );
        // missing anchor
        let mut validity = [true; KEYPOINT_COUNT];
        validity[16] = false;
        let frame = RawFrame::new("s", 0, false, face_template_coords(), validity);
        assert_eq!(
            estimate_affine(&frame, &anchors).unwrap_err(),
            GeometryError::MissingAnchor(16)
        );
    }

    #[test]
    fn apply_affine_translation_and_roundtrip() {
        let template = face_template();
        let frame = template_frame(&template);
        let shift = AffineParams {
            linear: Matrix2::identity(),
            translation: Vector2::new(1.0, 2.0),
        };
        let moved = apply_affine(&frame, &shift).unwrap();
        for i in 0..KEYPOINT_COUNT {
            assert_abs_diff_eq!(moved.point(i)[0], frame.point(i)[0] + 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(moved.point(i)[1], frame.point(i)[1] + 2.0, epsilon = 1e-12);
        }
        let skew = AffineParams {
            linear: Matrix2::new(1.3, 0.4, -0.2, 0.9),
            translation: Vector2::new(-3.0, 8.0),
        };
        let back = apply_affine(&apply_affine(&frame, &skew).unwrap(), &skew.inverse().unwrap())
            .unwrap();
        for i in 0..KEYPOINT_COUNT {
            assert_abs_diff_eq!(back.point(i)[0], frame.point(i)[0], epsilon = 1e-12);
            assert_abs_diff_eq!(back.point(i)[1], frame.point(i)[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn similarity_identity_and_synthesized_transform() {
        let p0 = [3.0, 4.0];
        let p1 = [10.0, -2.0];
        let id = estimate_similarity_points(&[(p0, p0), (p1, p1)]).unwrap();
        assert_abs_diff_eq!(id.scale, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.rotation, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.translation, Vector2::zeros(), epsilon = 1e-12);

        // source = target rotated 90 deg and scaled x3 => recover s=1/3, theta=-90deg
        let rot = |p: Point| [-3.0 * p[1], 3.0 * p[0]];
        let params = estimate_similarity_points(&[(rot(p0), p0), (rot(p1), p1)]).unwrap();
        assert_abs_diff_eq!(params.scale, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            params.rotation,
            -std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
        for &(src, dst) in &[(rot(p0), p0), (rot(p1), p1)] {
            let mapped = params.apply(src);
            assert_abs_diff_eq!(mapped[0], dst[0], epsilon = 1e-9);
            assert_abs_diff_eq!(mapped[1], dst[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn similarity_two_point_residual_is_exact() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p0 = [rng.random_range(-10.0..10.0f64), rng.random_range(-10.0..10.0f64)];
            let p1 = [rng.random_range(-10.0..10.0f64), rng.random_range(-10.0..10.0f64)];
            if (p0[0] - p1[0]).abs() + (p0[1] - p1[1]).abs() < 1e-3 {
                continue;
            }
            let q0 = [rng.random_range(-10.0..10.0f64), rng.random_range(-10.0..10.0f64)];
            let q1 = [rng.random_range(-10.0..10.0f64), rng.random_range(-10.0..10.0f64)];
            let params = estimate_similarity_points(&[(p0, q0), (p1, q1)]).unwrap();
            for &(p, q) in &[(p0, q0), (p1, q1)] {
                let m = params.apply(p);
                let r = ((m[0] - q[0]).powi(2) + (m[1] - q[1]).powi(2)).sqrt();
                assert!(r <= 1e-12 * (1.0 + q[0].abs() + q[1].abs()), "residual {r}");
            }
        }
    }

    #[test]
    fn similarity_error_cases() {
        assert_eq!(
            estimate_similarity_points(&[([1.0, 1.0], [0.0, 0.0])]).unwrap_err(),
            GeometryError::InsufficientAnchors(1)
        );
        assert_eq!(
            estimate_similarity_points(&[([1.0, 1.0], [0.0, 0.0]), ([1.0, 1.0], [2.0, 2.0])])
                .unwrap_err(),
            GeometryError::CoincidentAnchors
        );
    }

    #[test]
    fn standardize_template_is_fixed_point() {
        let cfg = config();
        let frame = template_frame(&cfg.template);
        let out = standardize_frame(&frame, &cfg).unwrap();
        assert!(out.warnings.is_empty());
        for i in 0..KEYPOINT_COUNT {
            assert_abs_diff_eq!(out.frame.point(i)[0], frame.point(i)[0], epsilon = 1e-9);
            assert_abs_diff_eq!(out.frame.point(i)[1], frame.point(i)[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn standardize_is_affine_invariant() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let cfg = config();
        // a generic expressive frame: template + smooth perturbation
        let mut coords = cfg.template.coords;
        for (i, c) in coords.iter_mut().enumerate() {
            c[0] += (i as f64 * 0.37).sin() * 2.0;
            c[1] += (i as f64 * 0.53).cos() * 2.0;
        }
        let frame = RawFrame::new("s", 1, false, coords, [true; KEYPOINT_COUNT]);
        let base = standardize_frame(&frame, &cfg).unwrap().frame;
        for _ in 0..20 {
            let m = loop {
                let cand = Matrix2::new(
                    rng.random_range(-2.0..2.0f64),
                    rng.random_range(-2.0..2.0f64),
                    rng.random_range(-2.0..2.0f64),
                    rng.random_range(-2.0..2.0f64),
                );
                if cand.determinant().abs() > 0.1 {
                    break cand;
                }
            };
            let params = AffineParams {
                linear: m,
                translation: Vector2::new(rng.random_range(-50.0..50.0f64), rng.random_range(-50.0..50.0f64)),
            };
            let moved = apply_affine(&frame, &params).unwrap();
            let out = standardize_frame(&moved, &cfg).unwrap().frame;
            for i in 0..KEYPOINT_COUNT {
                assert_abs_diff_eq!(out.point(i)[0], base.point(i)[0], epsilon = 1e-9);
                assert_abs_diff_eq!(out.point(i)[1], base.point(i)[1], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn standardize_idempotent_on_anchor_consistent_frames() {
        // Frames whose affine anchors are an exact affine image of the
        // template's are mapped to an exact fixed point of the pipeline.
        let cfg = config();
        let mut coords = cfg.template.coords;
        // perturb non-anchor keypoints only
        let anchor_ids = AnchorChoice::Default.indices();
        for (i, c) in coords.iter_mut().enumerate() {
            if !anchor_ids.contains(&i) {
                c[0] += (i as f64 * 0.71).sin() * 1.5;
                c[1] += (i as f64 * 0.29).cos() * 1.5;
            }
        }
        let frame = RawFrame::new("s", 2, false, coords, [true; KEYPOINT_COUNT]);
        let params = AffineParams {
            linear: Matrix2::new(1.4, 0.3, -0.1, 1.2),
            translation: Vector2::new(17.0, -4.0),
        };
        let moved = apply_affine(&frame, &params).unwrap();
        let once = standardize_frame(&moved, &cfg).unwrap().frame;
        let twice = standardize_frame(&once.to_raw(), &cfg).unwrap().frame;
        for i in 0..KEYPOINT_COUNT {
            assert_abs_diff_eq!(twice.point(i)[0], once.point(i)[0], epsilon = 1e-9);
            assert_abs_diff_eq!(twice.point(i)[1], once.point(i)[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn standardize_skips_invalid_jawline_and_preserves_validity() {
        let template = face_template();
        let mut coords = face_template_coords();
        for c in coords.iter_mut() {
            c[0] = c[0] * 1.5 + 4.0;
            c[1] = c[1] * 1.5 - 2.0;
        }
        let mut validity = [true; KEYPOINT_COUNT];
        for v in validity.iter_mut().take(17) {
            *v = false;
        }
        let frame = RawFrame::new("bp4d", 0, false, coords, validity);
        let cfg = StandardizeConfig {
            template,
            anchors: AnchorChoice::NoJawline,
        };
        let out = standardize_frame(&frame, &cfg).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].group, PartGroup::Jawline);
        assert_eq!(out.frame.validity(), &validity);
        for i in 0..17 {
            assert_eq!(out.frame.point(i), [0.0, 0.0]);
        }
    }

    #[test]
    fn default_anchor_choice_requires_jawline() {
        let template = face_template();
        let mut validity = [true; KEYPOINT_COUNT];
        validity[0] = false;
        let frame = RawFrame::new("s", 0, false, face_template_coords(), validity);
        let cfg = StandardizeConfig {
            template,
            anchors: AnchorChoice::Default,
        };
        assert_eq!(
            standardize_frame(&frame, &cfg).unwrap_err(),
            GeometryError::MissingAnchor(0)
        );
    }
}
