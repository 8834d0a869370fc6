//! End-to-end orchestration: dataset standardization, KPM assembly, and the
//! full fit. Thin glue over the geometry, kpm, and ffm modules that owns
//! cross-module policy (reference-subject choice, neutral selection,
//! exclusion warnings).

use thiserror::Error;

use crate::ffm::{fit_ffm, FfmError, FullFaceModel, GridSpec};
use crate::geometry::{
    standardize_frame_with, AnchorChoice, Frontalizer, GeometryError, IdentityFrontalizer,
    RawFrame, StandardizeConfig, StandardizedFrame, Template,
};
use crate::kpm::{build_matrix, compute_kpm, KpmError, KpmMatrix, KpmVector};
use crate::solvers::SolverConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset is empty")]
    NoFrames,
    #[error("reference subject {0:?} has no frames")]
    ReferenceSubjectMissing(String),
    #[error("reference subject {0:?} has no neutral frame")]
    ReferenceNeutralMissing(String),
    #[error("no subject has a neutral frame")]
    NoNeutralAnywhere,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kpm(#[from] KpmError),
    #[error(transparent)]
    Ffm(#[from] FfmError),
}

/// Non-fatal events collected while running the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum PipelineWarning {
    /// Subject dropped for lacking a neutral frame.
    SubjectExcluded { subject_id: String, reason: String },
    /// A part registration step was skipped for one frame.
    PartSkipped {
        subject_id: String,
        frame_index: u32,
        detail: String,
    },
}

/// A standardized dataset together with the template that defines its
/// coordinate space.
#[derive(Debug, Clone)]
pub struct StandardizedDataset {
    pub frames: Vec<StandardizedFrame>,
    pub template: Template,
    pub anchors: AnchorChoice,
    pub warnings: Vec<PipelineWarning>,
}

/// The neutral frame of a subject: flagged `is_neutral`, lowest frame index
/// winning ties.
fn neutral_of<'a>(frames: &'a [RawFrame], subject: &str) -> Option<&'a RawFrame> {
    frames
        .iter()
        .filter(|f| f.subject_id == subject && f.is_neutral)
        .min_by_key(|f| f.frame_index)
}

/// Standardize a dataset. The template is the (frontalized) neutral frame of
/// `reference_subject`, defaulting to the first subject in file order that
/// has a neutral frame.
pub fn standardize_dataset(
    frames: &[RawFrame],
    anchors: AnchorChoice,
    reference_subject: Option<&str>,
    frontalizer: &dyn Frontalizer,
) -> Result<StandardizedDataset, PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::NoFrames);
    }
    let reference = match reference_subject {
        Some(subject) => {
            if !frames.iter().any(|f| f.subject_id == subject) {
                return Err(PipelineError::ReferenceSubjectMissing(subject.into()));
            }
            neutral_of(frames, subject)
                .ok_or_else(|| PipelineError::ReferenceNeutralMissing(subject.into()))?
        }
        None => {
            let mut seen = Vec::new();
            let mut found = None;
            for f in frames {
                if !seen.contains(&&f.subject_id) {
                    seen.push(&f.subject_id);
                }
            }
            for subject in seen {
                if let Some(n) = neutral_of(frames, subject) {
                    found = Some(n);
                    break;
                }
            }
            found.ok_or(PipelineError::NoNeutralAnywhere)?
        }
    };
    let template = Template::from_reference_neutral(reference, frontalizer);
    standardize_with_template(frames, &template, anchors, frontalizer)
}

/// Standardize against an existing template (e.g. the one persisted in a
/// model archive, so test data lands in the training coordinate space).
pub fn standardize_with_template(
    frames: &[RawFrame],
    template: &Template,
    anchors: AnchorChoice,
    frontalizer: &dyn Frontalizer,
) -> Result<StandardizedDataset, PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::NoFrames);
    }
    let config = StandardizeConfig {
        template: template.clone(),
        anchors,
    };
    let mut out = Vec::with_capacity(frames.len());
    let mut warnings = Vec::new();
    let results = crate::util::par_map(frames.to_vec(), move |f| {
        standardize_frame_with(&f, &config, frontalizer).map(|o| (f, o))
    });
    for res in results {
        let (f, outcome) = res?;
        for w in outcome.warnings {
            warnings.push(PipelineWarning::PartSkipped {
                subject_id: f.subject_id.clone(),
                frame_index: f.frame_index,
                detail: format!("{}: {}", w.group.name(), w.reason),
            });
        }
        out.push(outcome.frame);
    }
    Ok(StandardizedDataset {
        frames: out,
        template: template.clone(),
        anchors,
        warnings,
    })
}

/// Assemble the KPM matrix from standardized frames. Every frame of a
/// subject with a neutral becomes a column (the neutral's own column is
/// zero); subjects without a neutral are excluded with a warning.
pub fn build_kpm(
    frames: &[StandardizedFrame],
    sample: Option<(usize, u64)>,
) -> Result<(KpmMatrix, Vec<PipelineWarning>), PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::NoFrames);
    }
    let mut subjects: Vec<&str> = Vec::new();
    for f in frames {
        if !subjects.contains(&f.subject_id.as_str()) {
            subjects.push(&f.subject_id);
        }
    }
    let mut vectors: Vec<KpmVector> = Vec::new();
    let mut warnings = Vec::new();
    for subject in subjects {
        let neutral = frames
            .iter()
            .filter(|f| f.subject_id == subject && f.is_neutral)
            .min_by_key(|f| f.frame_index);
        let Some(neutral) = neutral else {
            warnings.push(PipelineWarning::SubjectExcluded {
                subject_id: subject.to_string(),
                reason: "no neutral frame".into(),
            });
            continue;
        };
        for frame in frames.iter().filter(|f| f.subject_id == subject) {
            vectors.push(compute_kpm(neutral, frame)?);
        }
    }
    if vectors.is_empty() {
        return Err(PipelineError::NoNeutralAnywhere);
    }
    let matrix = build_matrix(&vectors, sample)?;
    Ok((matrix, warnings))
}

/// Options for the full fit pipeline.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub beta: f64,
    pub grids: GridSpec,
    pub solver: SolverConfig,
    pub anchors: AnchorChoice,
    pub reference_subject: Option<String>,
    /// `(count, seed)` to subsample KPM columns before fitting.
    pub sample: Option<(usize, u64)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            beta: 0.05,
            grids: GridSpec::default_preset(),
            solver: SolverConfig::default(),
            anchors: AnchorChoice::Default,
            reference_subject: None,
            sample: None,
        }
    }
}

/// Everything the fit produced.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: FullFaceModel,
    pub kpm: KpmMatrix,
    pub warnings: Vec<PipelineWarning>,
}

/// Raw frames to fitted model: standardize, assemble the KPM matrix, fit the
/// two-level factorization, and attach the template for archiving.
pub fn fit_pipeline(frames: &[RawFrame], options: &FitOptions) -> Result<FitOutput, PipelineError> {
    let dataset = standardize_dataset(
        frames,
        options.anchors,
        options.reference_subject.as_deref(),
        &IdentityFrontalizer,
    )?;
    let (kpm, mut warnings) = build_kpm(&dataset.frames, options.sample)?;
    warnings.extend(dataset.warnings.iter().cloned());
    let mut model = fit_ffm(&kpm, options.beta, &options.grids, &options.solver)?;
    model.template = Some(dataset.template);
    model.anchor_choice = Some(options.anchors);
    Ok(FitOutput {
        model,
        kpm,
        warnings,
    })
}
