//! Evaluation: variance explained, dataset encoding, sparsity/accuracy
//! tradeoff curves, interpretability scoring, and AU-set comparison.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::solvers::{positive_lasso, positive_lasso_path, LassoPath, SolverError};
use crate::util::par_map;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("data matrix has zero norm")]
    ZeroData,
    #[error("no interpretability records")]
    NoRecords,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Percent variance explained, `100 * (1 - ||X - Xhat||_F^2 / ||X||_F^2)`.
pub fn variance_explained(x: &DMatrix<f64>, xhat: &DMatrix<f64>) -> Result<f64, EvalError> {
    if x.shape() != xhat.shape() {
        return Err(EvalError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x.shape(),
            xhat.shape()
        )));
    }
    let total = x.norm_squared();
    if total <= 0.0 {
        return Err(EvalError::ZeroData);
    }
    Ok(100.0 * (1.0 - (x - xhat).norm_squared() / total))
}

/// How test columns are encoded against a fixed dictionary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EncodingMode {
    /// One positive lasso solve per column at this penalty.
    FixedAlpha(f64),
    /// Full path per column; the stored codes are the path endpoint
    /// (`alpha = 0`, nonnegative least squares).
    FullPath,
}

/// Encoded dataset: codes plus summary statistics.
#[derive(Debug, Clone)]
pub struct EncodingResult {
    /// q x m nonnegative codes.
    pub codes: DMatrix<f64>,
    pub mode: EncodingMode,
    /// Percent VE of the reconstruction against the input.
    pub ve: f64,
    /// Mean L0 (active coefficients per column).
    pub mean_l0: f64,
    /// Mean L1 norm per column.
    pub mean_l1: f64,
    /// Full paths, kept only in [`EncodingMode::FullPath`].
    pub paths: Option<Vec<LassoPath>>,
}

const ACTIVE_EPS: f64 = 1e-10;

/// Encode every column of `x` against the dictionary `u`.
pub fn encode_dataset(
    u: &DMatrix<f64>,
    x: &DMatrix<f64>,
    mode: EncodingMode,
) -> Result<EncodingResult, EvalError> {
    if u.nrows() != x.nrows() {
        return Err(EvalError::ShapeMismatch(format!(
            "dictionary has {} rows, data has {}",
            u.nrows(),
            x.nrows()
        )));
    }
    let (q, m) = (u.ncols(), x.ncols());
    let mut codes = DMatrix::zeros(q, m);
    let mut paths = None;
    match mode {
        EncodingMode::FixedAlpha(alpha) => {
            let cols: Vec<DVector<f64>> = (0..m).map(|c| x.column(c).into_owned()).collect();
            let solved = par_map(cols, |y| positive_lasso(u, &y, alpha));
            for (c, res) in solved.into_iter().enumerate() {
                codes.set_column(c, &res?);
            }
        }
        EncodingMode::FullPath => {
            let cols: Vec<DVector<f64>> = (0..m).map(|c| x.column(c).into_owned()).collect();
            let solved = par_map(cols, |y| positive_lasso_path(u, &y));
            let mut all = Vec::with_capacity(m);
            for (c, res) in solved.into_iter().enumerate() {
                let path = res?;
                codes.set_column(c, &path.solution_at(0.0));
                all.push(path);
            }
            paths = Some(all);
        }
    }
    let ve = variance_explained(x, &(u * &codes)).unwrap_or(f64::NEG_INFINITY);
    let active: usize = codes.iter().filter(|&&v| v > ACTIVE_EPS).count();
    let l1: f64 = codes.iter().sum();
    Ok(EncodingResult {
        codes,
        mode,
        ve,
        mean_l0: active as f64 / m as f64,
        mean_l1: l1 / m as f64,
        paths,
    })
}

/// A sparsity/accuracy tradeoff curve: dataset VE at each budget.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCurve {
    /// Budget values (active-AU count or L1 budget).
    pub axis: Vec<f64>,
    /// Dataset-level percent VE at each budget.
    pub ve: Vec<f64>,
    /// Number of encoded columns behind every point.
    pub sample_count: usize,
}

fn column_paths(u: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<Vec<LassoPath>, EvalError> {
    if u.nrows() != x.nrows() {
        return Err(EvalError::ShapeMismatch(format!(
            "dictionary has {} rows, data has {}",
            u.nrows(),
            x.nrows()
        )));
    }
    let cols: Vec<DVector<f64>> = (0..x.ncols()).map(|c| x.column(c).into_owned()).collect();
    par_map(cols, |y| positive_lasso_path(u, &y))
        .into_iter()
        .map(|r| r.map_err(EvalError::from))
        .collect()
}

/// VE as a function of the number of active AUs per frame. For each column
/// and each budget `k`, the best (lowest-residual) path breakpoint with at
/// most `k` active coefficients is used.
pub fn ve_curve_by_k(
    u: &DMatrix<f64>,
    x: &DMatrix<f64>,
    max_k: usize,
) -> Result<VarianceCurve, EvalError> {
    let total = x.norm_squared();
    if total <= 0.0 {
        return Err(EvalError::ZeroData);
    }
    let paths = column_paths(u, x)?;
    let m = x.ncols();
    let max_k = max_k.max(1);
    let mut resid = vec![0.0f64; max_k + 1];
    for (c, path) in paths.iter().enumerate() {
        let y = x.column(c);
        // residual of the best breakpoint with support <= k; support-0 is
        // the zero solution
        let mut best = vec![y.norm_squared(); max_k + 1];
        for bp in &path.breakpoints {
            let support = bp.coefficients.iter().filter(|&&v| v > ACTIVE_EPS).count();
            if support > max_k {
                continue;
            }
            let r = (y - u * &bp.coefficients).norm_squared();
            for k in support..=max_k {
                if r < best[k] {
                    best[k] = r;
                }
            }
        }
        for k in 0..=max_k {
            resid[k] += best[k];
        }
    }
    Ok(VarianceCurve {
        axis: (0..=max_k).map(|k| k as f64).collect(),
        ve: resid.iter().map(|&r| 100.0 * (1.0 - r / total)).collect(),
        sample_count: m,
    })
}

/// VE as a function of a per-frame L1 budget. The path's L1 norm is
/// continuous and piecewise linear in `alpha`, so each budget is hit exactly
/// by interpolating within a segment (or clamped at the unpenalized
/// endpoint when the budget exceeds it).
pub fn ve_curve_by_l1(
    u: &DMatrix<f64>,
    x: &DMatrix<f64>,
    budgets: &[f64],
) -> Result<VarianceCurve, EvalError> {
    let total = x.norm_squared();
    if total <= 0.0 {
        return Err(EvalError::ZeroData);
    }
    if budgets.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
        return Err(EvalError::ShapeMismatch("budgets must be finite and >= 0".into()));
    }
    let paths = column_paths(u, x)?;
    let m = x.ncols();
    let mut resid = vec![0.0f64; budgets.len()];
    for (c, path) in paths.iter().enumerate() {
        let y = x.column(c).into_owned();
        for (bi, &budget) in budgets.iter().enumerate() {
            let v = solution_at_l1(path, budget);
            resid[bi] += (&y - u * v).norm_squared();
        }
    }
    Ok(VarianceCurve {
        axis: budgets.to_vec(),
        ve: resid.iter().map(|&r| 100.0 * (1.0 - r / total)).collect(),
        sample_count: m,
    })
}

/// The path solution whose L1 norm equals `budget` (clamped to the
/// unpenalized endpoint's L1 norm).
fn solution_at_l1(path: &LassoPath, budget: f64) -> DVector<f64> {
    let k = path.num_coefficients();
    let mut prev = DVector::zeros(k);
    let mut prev_l1 = 0.0;
    for bp in &path.breakpoints {
        let l1: f64 = bp.coefficients.iter().sum();
        // the L1 norm is linear in alpha on the segment, but not monotone
        // across drop events; interpolate within the first segment that
        // brackets the budget
        if (prev_l1 - budget) * (l1 - budget) <= 0.0 && (l1 - prev_l1).abs() > 1e-15 {
            let t = (budget - prev_l1) / (l1 - prev_l1);
            return &prev * (1.0 - t) + &bp.coefficients * t;
        }
        prev = bp.coefficients.clone();
        prev_l1 = l1;
    }
    prev
}

/// One AU's interpretability votes from the three raters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpretabilityRecord {
    pub au_index: usize,
    pub votes: [bool; 3],
}

impl InterpretabilityRecord {
    /// Majority vote: interpretable when at least two raters agree.
    pub fn interpretable(&self) -> bool {
        self.votes.iter().filter(|&&v| v).count() >= 2
    }
}

/// `(k - n_i) / k * 100` where `n_i` is the number of AUs voted
/// non-interpretable by majority.
pub fn interpretability_metric(records: &[InterpretabilityRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let k = records.len();
    let ni = records.iter().filter(|r| !r.interpretable()).count();
    Ok((k - ni) as f64 / k as f64 * 100.0)
}

/// Best cosine match of one reference AU among candidate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AuMatch {
    pub reference_index: usize,
    pub best_index: usize,
    pub cosine: f64,
}

/// Summary of matching a reference AU set against candidate AUs.
#[derive(Debug, Clone, PartialEq)]
pub struct AuComparison {
    pub matches: Vec<AuMatch>,
    pub mean_cosine: f64,
    /// Reference columns with zero norm, excluded from the mean.
    pub skipped: Vec<usize>,
}

/// Match every column of `reference` to its most similar column of
/// `candidates` by cosine similarity of displacement directions.
pub fn compare_au_sets(
    candidates: &DMatrix<f64>,
    reference: &DMatrix<f64>,
) -> Result<AuComparison, EvalError> {
    if candidates.nrows() != reference.nrows() {
        return Err(EvalError::ShapeMismatch(format!(
            "candidates have {} rows, reference has {}",
            candidates.nrows(),
            reference.nrows()
        )));
    }
    if candidates.ncols() == 0 {
        return Err(EvalError::ShapeMismatch("no candidate columns".into()));
    }
    let cand_norms: Vec<f64> = (0..candidates.ncols())
        .map(|j| candidates.column(j).norm())
        .collect();
    let mut matches = Vec::new();
    let mut skipped = Vec::new();
    let mut sum = 0.0;
    for r in 0..reference.ncols() {
        let ref_col = reference.column(r);
        let ref_norm = ref_col.norm();
        if ref_norm <= 1e-12 {
            skipped.push(r);
            continue;
        }
        let mut best_index = 0;
        let mut best = f64::NEG_INFINITY;
        for j in 0..candidates.ncols() {
            if cand_norms[j] <= 1e-12 {
                continue;
            }
            let cos = candidates.column(j).dot(&ref_col) / (cand_norms[j] * ref_norm);
            if cos > best {
                best = cos;
                best_index = j;
            }
        }
        if !best.is_finite() {
            return Err(EvalError::ShapeMismatch("all candidate columns are zero".into()));
        }
        sum += best;
        matches.push(AuMatch {
            reference_index: r,
            best_index,
            cosine: best,
        });
    }
    if matches.is_empty() {
        return Err(EvalError::ZeroData);
    }
    let mean_cosine = sum / matches.len() as f64;
    Ok(AuComparison {
        matches,
        mean_cosine,
        skipped,
    })
}
