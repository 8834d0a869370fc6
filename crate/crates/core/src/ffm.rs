//! The two-level Full Face Model: per-part dictionary grid search, stacking,
//! hierarchy grid search, and the PCA baseline with the `[U -U]` expansion.
//!
//! With variance budget `beta`, each part model must reach
//! `100 * (1 - beta/2)` percent variance explained on its part submatrix so
//! that the hierarchy can still reach `100 * (1 - beta)` against the full
//! data. Grid cells are scanned smallest-model-first, sparsest-first; the
//! first qualifying cell wins. If no cell qualifies the best cell is returned
//! flagged `grid_exhausted`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::eval::variance_explained;
use crate::kpm::{expand_to_full, extract_part, FacePart, KpmMatrix};
use crate::solvers::{
    fit_dictionary, fit_nmf_with_stop, DictionaryModel, NmfModel, SolverConfig, SolverError,
};
use crate::KPM_DIM;

/// Percent-VE upper bound per rank, from the spectrum of `x` (eigenvalues of
/// the smaller Gram matrix). `bound(r)` is the VE of the best rank-`r`
/// approximation; any factorization of rank `<= r` explains at most that.
fn rank_ve_bounds(x: &DMatrix<f64>) -> impl Fn(usize) -> f64 {
    let gram = if x.nrows() <= x.ncols() {
        x * x.transpose()
    } else {
        x.transpose() * x
    };
    let mut eigs: Vec<f64> = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&e| e.max(0.0))
        .collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = eigs.iter().sum();
    move |rank: usize| {
        if total <= 0.0 {
            return 100.0;
        }
        let kept: f64 = eigs.iter().take(rank).sum();
        100.0 * kept / total
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FfmError {
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("part models were fitted on different column counts")]
    ColumnMismatch,
    #[error("no face part carries nonzero data")]
    NoUsableParts,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("beta = {0} must lie strictly between 0 and 1")]
    BadBeta(f64),
}

/// Grid extents for the part-level search.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmGrid {
    /// Candidate atom counts, ascending. Empty means `1..=p` per part.
    pub k_values: Vec<usize>,
    /// Sparsity weights, scanned in the given order (descending by default).
    pub alphas: Vec<f64>,
}

/// Grid extents for the hierarchy-level search.
#[derive(Debug, Clone, PartialEq)]
pub struct HfmGrid {
    /// Candidate inner dimensions, ascending. Empty means `1..=k`.
    pub q_values: Vec<usize>,
    pub alphas_a: Vec<f64>,
    pub alphas_b: Vec<f64>,
}

/// Both grids plus the preset that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub pfm: PfmGrid,
    pub hfm: HfmGrid,
    pub preset: String,
}

fn default_alphas() -> Vec<f64> {
    // 5.0 down to 0.5, step 0.5
    (0..10).map(|i| 5.0 - 0.5 * i as f64).collect()
}

fn paper_si_alphas() -> Vec<f64> {
    // default grid extended with the off-grid values reported for the final
    // models, kept in descending order
    let mut alphas = default_alphas();
    for extra in [2.1, 1.15, 0.1] {
        alphas.push(extra);
    }
    alphas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    alphas
}

impl GridSpec {
    pub fn default_preset() -> Self {
        GridSpec {
            pfm: PfmGrid {
                k_values: vec![],
                alphas: default_alphas(),
            },
            hfm: HfmGrid {
                q_values: vec![],
                alphas_a: default_alphas(),
                alphas_b: default_alphas(),
            },
            preset: "default".into(),
        }
    }

    pub fn paper_si_preset() -> Self {
        GridSpec {
            pfm: PfmGrid {
                k_values: vec![],
                alphas: paper_si_alphas(),
            },
            hfm: HfmGrid {
                q_values: vec![],
                alphas_a: paper_si_alphas(),
                alphas_b: paper_si_alphas(),
            },
            preset: "paper-si".into(),
        }
    }

    pub fn from_preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default_preset()),
            "paper-si" => Some(Self::paper_si_preset()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), FfmError> {
        if self.pfm.alphas.is_empty()
            || self.hfm.alphas_a.is_empty()
            || self.hfm.alphas_b.is_empty()
        {
            return Err(FfmError::EmptyGrid);
        }
        if self
            .pfm
            .alphas
            .iter()
            .chain(&self.hfm.alphas_a)
            .chain(&self.hfm.alphas_b)
            .any(|&a| !(a > 0.0))
        {
            return Err(FfmError::EmptyGrid);
        }
        Ok(())
    }
}

/// A selected part model.
#[derive(Debug, Clone)]
pub struct PartModel {
    pub part: FacePart,
    pub model: DictionaryModel,
    pub k: usize,
    pub alpha: f64,
    /// Percent variance explained on the part submatrix.
    pub ve: f64,
    /// Set when no grid cell reached the part target.
    pub grid_exhausted: bool,
}

/// A selected hierarchy model.
#[derive(Debug, Clone)]
pub struct HierModel {
    pub model: NmfModel,
    pub q: usize,
    pub alpha_a: f64,
    pub alpha_b: f64,
    /// Percent variance explained between X and U*A*B.
    pub ve: f64,
    pub grid_exhausted: bool,
}

/// The composed model; DFECS action units are the columns of `u_prime`.
#[derive(Debug, Clone)]
pub struct FullFaceModel {
    /// Stacked part dictionaries, 136 x k, block sparse by part rows.
    pub u: DMatrix<f64>,
    /// Hierarchy factors.
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// `U' = U * A`, 136 x q.
    pub u_prime: DMatrix<f64>,
    pub beta: f64,
    pub parts: Vec<PartSummary>,
    pub hier: HierSummary,
    /// VE(train) of the full reconstruction U*A*B against X.
    pub ve_train: f64,
    pub seed: u64,
    /// Template attached by the pipeline before archiving.
    pub template: Option<crate::geometry::Template>,
    pub anchor_choice: Option<crate::geometry::AnchorChoice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartSummary {
    pub part: FacePart,
    pub k: usize,
    pub alpha: f64,
    pub ve: f64,
    pub grid_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierSummary {
    pub q: usize,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub ve: f64,
    pub grid_exhausted: bool,
}

impl FullFaceModel {
    pub fn num_aus(&self) -> usize {
        self.u_prime.ncols()
    }
}

/// Part-level grid search: `k` ascending, then `alpha` in grid order
/// (sparsest first); first cell whose VE reaches `100 * (1 - beta/2)` wins.
pub fn fit_pfm(
    x_f: &DMatrix<f64>,
    beta: f64,
    grid: &PfmGrid,
    config: &SolverConfig,
) -> Result<PartModel, FfmError> {
    fit_pfm_inner(x_f, FacePart::LeftEyebrow, beta, grid, config)
}

fn fit_pfm_inner(
    x_f: &DMatrix<f64>,
    part: FacePart,
    beta: f64,
    grid: &PfmGrid,
    config: &SolverConfig,
) -> Result<PartModel, FfmError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(FfmError::BadBeta(beta));
    }
    if grid.alphas.is_empty() {
        return Err(FfmError::EmptyGrid);
    }
    let p = x_f.nrows();
    let m = x_f.ncols();
    let k_values: Vec<usize> = if grid.k_values.is_empty() {
        (1..=p.min(m)).collect()
    } else {
        grid.k_values.iter().copied().filter(|&k| k <= m).collect()
    };
    if k_values.is_empty() {
        return Err(FfmError::EmptyGrid);
    }
    let target = 100.0 * (1.0 - beta / 2.0);
    // winning cells stop early at the target; losing cells get a reduced
    // iteration budget during the scan, and only the fallback cell (no cell
    // reached the target) is refit with the caller's full budget
    let cell_config = SolverConfig {
        target_ve: Some(target),
        max_iterations: config.max_iterations.min(SCAN_ITERATIONS),
        ..config.clone()
    };

    // rank bound: a k-atom model cannot beat the best rank-k approximation,
    // so levels whose SVD bound misses the target are provably losing
    let bound = rank_ve_bounds(x_f);
    let viable: Vec<usize> = k_values
        .iter()
        .copied()
        .filter(|&k| bound(k) >= target)
        .collect();
    let scan = if viable.is_empty() {
        vec![*k_values.last().expect("non-empty")]
    } else {
        viable
    };

    // Each k level is probed at the smallest grid alpha first: VE is in
    // practice non-increasing in alpha, so a level whose probe misses the
    // target has no winning cell and costs one fit instead of a full sweep.
    // Levels stop escalating k once the probe VE stalls twice in a row.
    let probe_alpha = grid.alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best: Option<PartModel> = None;
    let mut prev_probe = f64::NEG_INFINITY;
    let mut stalls = 0u32;
    for &k in &scan {
        let probe = fit_dictionary(x_f, k, probe_alpha, &cell_config)?;
        let probe_ve =
            variance_explained(x_f, &probe.reconstruction()).unwrap_or(f64::NEG_INFINITY);
        if probe_ve < target {
            if best.as_ref().map(|b| probe_ve > b.ve).unwrap_or(true) {
                best = Some(PartModel {
                    part,
                    model: probe,
                    k,
                    alpha: probe_alpha,
                    ve: probe_ve,
                    grid_exhausted: false,
                });
            }
            if probe_ve - prev_probe < PLATEAU_EPS {
                stalls += 1;
                if stalls >= 2 {
                    break;
                }
            } else {
                stalls = 0;
            }
            prev_probe = prev_probe.max(probe_ve);
            continue;
        }
        // a winner exists in this level; cells in grid order, first one
        // reaching the target wins (the probe terminates the scan at worst)
        for &alpha in &grid.alphas {
            let (model, ve) = if alpha == probe_alpha {
                (probe.clone(), probe_ve)
            } else {
                let model = fit_dictionary(x_f, k, alpha, &cell_config)?;
                let ve = variance_explained(x_f, &model.reconstruction())
                    .unwrap_or(f64::NEG_INFINITY);
                (model, ve)
            };
            let candidate = PartModel {
                part,
                model,
                k,
                alpha,
                ve,
                grid_exhausted: false,
            };
            if ve >= target {
                return Ok(candidate);
            }
            if best.as_ref().map(|b| ve > b.ve).unwrap_or(true) {
                best = Some(candidate);
            }
        }
    }
    let fallback = best.expect("at least one grid cell was evaluated");
    // refit the best losing cell with the full iteration budget
    let model = fit_dictionary(x_f, fallback.k, fallback.alpha, config)?;
    let ve = variance_explained(x_f, &model.reconstruction()).unwrap_or(f64::NEG_INFINITY);
    Ok(PartModel {
        part,
        model,
        k: fallback.k,
        alpha: fallback.alpha,
        ve,
        grid_exhausted: true,
    })
}

/// Iteration cap for losing grid cells during the scan.
const SCAN_ITERATIONS: usize = 60;

/// Minimum probe-VE gain (percentage points) per level to keep escalating.
const PLATEAU_EPS: f64 = 0.05;

/// Expand the part dictionaries to full-face rows and stack them (and their
/// codes) in partition order.
pub fn stack_parts(
    part_models: &[PartModel],
) -> Result<(DMatrix<f64>, DMatrix<f64>), FfmError> {
    if part_models.is_empty() {
        return Err(FfmError::NoUsableParts);
    }
    let m = part_models[0].model.codes.ncols();
    if part_models.iter().any(|pm| pm.model.codes.ncols() != m) {
        return Err(FfmError::ColumnMismatch);
    }
    let k_total: usize = part_models.iter().map(|pm| pm.model.dictionary.ncols()).sum();
    let mut u = DMatrix::zeros(KPM_DIM, k_total);
    let mut v = DMatrix::zeros(k_total, m);
    let mut offset = 0;
    for pm in part_models {
        let k_f = pm.model.dictionary.ncols();
        for j in 0..k_f {
            let col = DVector::from_iterator(
                pm.model.dictionary.nrows(),
                pm.model.dictionary.column(j).iter().copied(),
            );
            u.set_column(offset + j, &expand_to_full(&col, pm.part));
            for c in 0..m {
                v[(offset + j, c)] = pm.model.codes[(j, c)];
            }
        }
        offset += k_f;
    }
    Ok((u, v))
}

/// Hierarchy grid search: `q` ascending, then `alpha_A`, then `alpha_B` in
/// grid order. Selection criterion is the full-model VE between `X` and
/// `U*A*B`; the first cell reaching `100 * (1 - beta)` wins.
pub fn fit_hfm(
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    beta: f64,
    grid: &HfmGrid,
    config: &SolverConfig,
) -> Result<HierModel, FfmError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(FfmError::BadBeta(beta));
    }
    if grid.alphas_a.is_empty() || grid.alphas_b.is_empty() {
        return Err(FfmError::EmptyGrid);
    }
    if let Some(neg) = v.iter().find(|&&e| e < -1e-12) {
        return Err(FfmError::Solver(SolverError::BadConfig(format!(
            "stacked codes contain negative entry {neg}"
        ))));
    }
    let k = v.nrows();
    let m = v.ncols();
    let q_values: Vec<usize> = if grid.q_values.is_empty() {
        (1..=k.min(m)).collect()
    } else {
        grid.q_values
            .iter()
            .copied()
            .filter(|&q| q >= 1 && q <= k.min(m))
            .collect()
    };
    if q_values.is_empty() {
        return Err(FfmError::EmptyGrid);
    }
    let target = 100.0 * (1.0 - beta);
    let x_norm_sq = x.norm_squared();
    // the full-model VE via Gram identities: with W = U^T X and G = U^T U,
    // ||X - U A B||^2 = ||X||^2 - 2 <A^T W, B> + <(A^T G A) B, B>; this
    // avoids forming the 136 x m residual on every stop-callback call
    let w = u.transpose() * x;
    let g = u.transpose() * u;
    let full_ve = move |a: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 {
        let aw = a.transpose() * &w;
        let aga = a.transpose() * &g * a;
        let resid_sq = x_norm_sq - 2.0 * aw.dot(b) + (&aga * b).dot(b);
        100.0 * (1.0 - resid_sq / x_norm_sq)
    };
    // rank bound on X itself: U A B has rank <= q, so q levels whose best
    // rank-q approximation of X misses the target are provably losing
    let bound = rank_ve_bounds(x);
    let viable: Vec<usize> = q_values
        .iter()
        .copied()
        .filter(|&q| bound(q) >= target)
        .collect();
    let scan = if viable.is_empty() {
        vec![*q_values.last().expect("non-empty")]
    } else {
        viable
    };

    // same scan policy as the part level: losing cells get a reduced
    // iteration budget, the fallback cell is refit in full
    let scan_config = SolverConfig {
        max_iterations: config.max_iterations.min(SCAN_ITERATIONS),
        ..config.clone()
    };
    // probe-first per q level, as in the part-level search: the level is
    // skipped when even the least-penalized cell misses the target
    let probe_aa = grid.alphas_a.iter().copied().fold(f64::INFINITY, f64::min);
    let probe_ab = grid.alphas_b.iter().copied().fold(f64::INFINITY, f64::min);
    let stop = |a: &DMatrix<f64>, b: &DMatrix<f64>| full_ve(a, b) >= target;
    let mut best: Option<HierModel> = None;
    for &q in &scan {
        let probe = fit_nmf_with_stop(v, q, probe_aa, probe_ab, &scan_config, Some(&stop))?;
        let probe_ve = full_ve(&probe.a, &probe.b);
        if probe_ve < target {
            if best.as_ref().map(|b| probe_ve > b.ve).unwrap_or(true) {
                best = Some(HierModel {
                    model: probe,
                    q,
                    alpha_a: probe_aa,
                    alpha_b: probe_ab,
                    ve: probe_ve,
                    grid_exhausted: false,
                });
            }
            continue;
        }
        let cells: Vec<(f64, f64)> = grid
            .alphas_a
            .iter()
            .flat_map(|&aa| grid.alphas_b.iter().map(move |&ab| (aa, ab)))
            .collect();
        // cells in grid order; first one reaching the target wins (the
        // probe cell terminates the scan at worst)
        for (aa, ab) in cells {
            let (model, ve) = if aa == probe_aa && ab == probe_ab {
                (probe.clone(), probe_ve)
            } else {
                let model = fit_nmf_with_stop(v, q, aa, ab, &scan_config, Some(&stop))?;
                let ve = full_ve(&model.a, &model.b);
                (model, ve)
            };
            let candidate = HierModel {
                model,
                q,
                alpha_a: aa,
                alpha_b: ab,
                ve,
                grid_exhausted: false,
            };
            if ve >= target {
                return Ok(candidate);
            }
            if best.as_ref().map(|b| ve > b.ve).unwrap_or(true) {
                best = Some(candidate);
            }
        }
    }
    let fallback = best.expect("at least one grid cell was evaluated");
    let stop = |a: &DMatrix<f64>, b: &DMatrix<f64>| full_ve(a, b) >= target;
    let model = fit_nmf_with_stop(
        v,
        fallback.q,
        fallback.alpha_a,
        fallback.alpha_b,
        config,
        Some(&stop),
    )?;
    let ve = full_ve(&model.a, &model.b);
    Ok(HierModel {
        model,
        q: fallback.q,
        alpha_a: fallback.alpha_a,
        alpha_b: fallback.alpha_b,
        ve,
        grid_exhausted: ve < target,
    })
}

/// Fit the Full Face Model: per-part search, stacking, hierarchy search.
/// Parts whose submatrix is entirely zero (e.g. a dataset without jawline
/// keypoints) are skipped and excluded from `k`.
pub fn fit_ffm(
    x: &KpmMatrix,
    beta: f64,
    grids: &GridSpec,
    config: &SolverConfig,
) -> Result<FullFaceModel, FfmError> {
    grids.validate()?;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(FfmError::BadBeta(beta));
    }

    let mut part_models = Vec::new();
    for part in FacePart::ALL {
        let x_f = extract_part(&x.x, part);
        if x_f.norm_squared() <= 0.0 {
            continue;
        }
        let pm = fit_pfm_inner(&x_f, part, beta, &grids.pfm, config)?;
        part_models.push(pm);
    }
    if part_models.is_empty() {
        return Err(FfmError::NoUsableParts);
    }

    let (u, v) = stack_parts(&part_models)?;
    let hier = fit_hfm(&x.x, &u, &v, beta, &grids.hfm, config)?;

    let u_prime = &u * &hier.model.a;
    let ve_train = variance_explained(&x.x, &(&u_prime * &hier.model.b))
        .unwrap_or(f64::NEG_INFINITY);
    Ok(FullFaceModel {
        u,
        a: hier.model.a.clone(),
        b: hier.model.b.clone(),
        u_prime,
        beta,
        parts: part_models
            .iter()
            .map(|pm| PartSummary {
                part: pm.part,
                k: pm.k,
                alpha: pm.alpha,
                ve: pm.ve,
                grid_exhausted: pm.grid_exhausted,
            })
            .collect(),
        hier: HierSummary {
            q: hier.q,
            alpha_a: hier.alpha_a,
            alpha_b: hier.alpha_b,
            ve: hier.ve,
            grid_exhausted: hier.grid_exhausted,
        },
        ve_train,
        seed: config.seed,
        template: None,
        anchor_choice: None,
    })
}

/// How many components the PCA baseline keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaTarget {
    /// Smallest component count whose train VE reaches this percentage.
    VePercent(f64),
    Components(usize),
}

/// PCA baseline on uncentered data (optionally centered), with the
/// positive-encoding expansion `[U -U]`.
#[derive(Debug, Clone)]
pub struct PcaModel {
    /// 136 x c, orthonormal columns.
    pub components: DMatrix<f64>,
    /// All singular values of the data matrix, descending.
    pub singular_values: Vec<f64>,
    pub mean_centered: bool,
    pub mean: Option<DVector<f64>>,
}

impl PcaModel {
    /// The `[U -U]` component matrix used for positive encodings.
    pub fn expanded(&self) -> DMatrix<f64> {
        let (r, c) = self.components.shape();
        let mut out = DMatrix::zeros(r, 2 * c);
        for j in 0..c {
            for i in 0..r {
                out[(i, j)] = self.components[(i, j)];
                out[(i, j + c)] = -self.components[(i, j)];
            }
        }
        out
    }

    /// Percent variance explained by the first `c` components.
    pub fn ve_with_components(&self, c: usize) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if total <= 0.0 {
            return 100.0;
        }
        let kept: f64 = self.singular_values.iter().take(c).map(|s| s * s).sum();
        100.0 * kept / total
    }
}

/// Principal components of `X` (columns as samples, no mean term unless
/// `center` is set).
pub fn fit_pca_baseline(
    x: &DMatrix<f64>,
    target: PcaTarget,
    center: bool,
) -> Result<PcaModel, FfmError> {
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(FfmError::Solver(SolverError::DimensionMismatch(
            "empty data matrix".into(),
        )));
    }
    let mean = if center {
        let mut mu = DVector::zeros(x.nrows());
        for c in 0..x.ncols() {
            mu += x.column(c);
        }
        mu /= x.ncols() as f64;
        Some(mu)
    } else {
        None
    };
    let work = match &mean {
        Some(mu) => {
            let mut w = x.clone();
            for c in 0..w.ncols() {
                let col = w.column(c) - mu;
                w.set_column(c, &col);
            }
            w
        }
        None => x.clone(),
    };
    let svd = work.svd(true, false);
    let u_mat = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap()
    });
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    let c = match target {
        PcaTarget::Components(c) => c.clamp(1, order.len()),
        PcaTarget::VePercent(pct) => {
            let mut kept = 0.0;
            let mut c = order.len();
            for (i, s) in singular_values.iter().enumerate() {
                kept += s * s;
                if total <= 0.0 || 100.0 * kept / total >= pct {
                    c = i + 1;
                    break;
                }
            }
            c
        }
    };
    let mut components = DMatrix::zeros(x.nrows(), c);
    for (slot, &comp) in order.iter().take(c).enumerate() {
        components.set_column(slot, &u_mat.column(comp).into_owned());
    }
    Ok(PcaModel {
        components,
        singular_values,
        mean_centered: center,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn grid_presets_are_well_formed() {
        let d = GridSpec::default_preset();
        assert_eq!(d.pfm.alphas.len(), 10);
        assert_eq!(d.pfm.alphas[0], 5.0);
        assert_eq!(d.pfm.alphas[9], 0.5);
        d.validate().unwrap();

        let p = GridSpec::paper_si_preset();
        assert_eq!(p.pfm.alphas.len(), 13);
        assert!(p.pfm.alphas.contains(&1.15));
        assert!(p.pfm.alphas.contains(&2.1));
        assert!(p.pfm.alphas.contains(&0.1));
        assert!(p.pfm.alphas.windows(2).all(|w| w[0] > w[1]));
        p.validate().unwrap();
    }

    #[test]
    fn pfm_selects_small_model_on_planted_rank_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p = 10;
        let m = 50;
        let mut atom = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0f64));
        atom /= atom.norm();
        let codes = DVector::from_fn(m, |_, _| rng.random_range(0.5..2.0f64));
        let x = &atom * codes.transpose();
        let grid = PfmGrid {
            k_values: vec![],
            alphas: vec![0.01],
        };
        let pm = fit_pfm(&x, 0.1, &grid, &SolverConfig::default()).unwrap();
        assert_eq!(pm.k, 1);
        assert!(pm.ve >= 95.0);
        assert!(!pm.grid_exhausted);
    }

    #[test]
    fn pfm_flags_exhausted_grid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let x = DMatrix::from_fn(6, 30, |_, _| rng.random_range(-1.0..1.0f64));
        let grid = PfmGrid {
            k_values: vec![1],
            alphas: vec![5.0],
        };
        let pm = fit_pfm(&x, 0.01, &grid, &SolverConfig::default()).unwrap();
        assert!(pm.grid_exhausted);
    }

    #[test]
    fn stacking_preserves_blockwise_reconstruction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let m = 20;
        let grid = PfmGrid {
            k_values: vec![2],
            alphas: vec![0.1],
        };
        let mut models = Vec::new();
        let mut x_full = DMatrix::zeros(KPM_DIM, m);
        let mut blockwise = 0.0;
        for part in FacePart::ALL {
            let p = part.dim();
            let x_f = DMatrix::from_fn(p, m, |_, _| rng.random_range(-1.0..1.0f64));
            for (r_local, &r_global) in part.rows().iter().enumerate() {
                for c in 0..m {
                    x_full[(r_global, c)] = x_f[(r_local, c)];
                }
            }
            let pm = fit_pfm_inner(&x_f, part, 0.9, &grid, &SolverConfig::default()).unwrap();
            blockwise += (x_f - pm.model.reconstruction()).norm_squared();
            models.push(pm);
        }
        let (u, v) = stack_parts(&models).unwrap();
        assert_eq!(u.shape(), (KPM_DIM, 14));
        assert_eq!(v.shape(), (14, m));
        let full = (x_full - &u * &v).norm_squared();
        assert!((full - blockwise).abs() <= 1e-9 * blockwise.max(1.0));

        // rows outside a part are zero in that part's columns
        let mut offset = 0;
        for pm in &models {
            let rows = pm.part.rows();
            for j in 0..pm.model.dictionary.ncols() {
                for r in 0..KPM_DIM {
                    if !rows.contains(&r) {
                        assert_eq!(u[(r, offset + j)], 0.0);
                    }
                }
            }
            offset += pm.model.dictionary.ncols();
        }
    }

    #[test]
    fn hfm_selects_small_q_on_planted_hierarchy() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let (k, q_true, m) = (8, 2, 60);
        let a0 = DMatrix::from_fn(k, q_true, |_, _| rng.random_range(0.0..1.0f64));
        let b0 = DMatrix::from_fn(q_true, m, |_, _| rng.random_range(0.0..1.0f64));
        let v = &a0 * &b0;
        // orthonormal-block U: identity embedding of the 8 code rows
        let u = DMatrix::<f64>::identity(KPM_DIM, k);
        let x = &u * &v;
        let grid = HfmGrid {
            q_values: vec![],
            alphas_a: vec![1e-4],
            alphas_b: vec![1e-4],
        };
        let hm = fit_hfm(&x, &u, &v, 0.1, &grid, &SolverConfig::default()).unwrap();
        assert!(hm.q <= 3, "selected q = {}", hm.q);
        assert!(hm.ve >= 90.0);
    }

    #[test]
    fn hfm_vacuous_target_selects_q_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let v = DMatrix::from_fn(5, 20, |_, _| rng.random_range(0.0..1.0f64));
        let u = DMatrix::<f64>::identity(KPM_DIM, 5);
        let x = &u * &v;
        let grid = HfmGrid {
            q_values: vec![],
            alphas_a: vec![0.5],
            alphas_b: vec![0.5],
        };
        let hm = fit_hfm(&x, &u, &v, 0.999, &grid, &SolverConfig::default()).unwrap();
        assert_eq!(hm.q, 1);
    }

    #[test]
    fn pca_components_recover_orthogonal_directions() {
        // X with orthogonal columns: components align with normalized columns
        let x = DMatrix::from_columns(&[
            DVector::from_vec(vec![3.0, 0.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 2.0, 0.0, 0.0]),
        ]);
        let pca = fit_pca_baseline(&x, PcaTarget::Components(2), false).unwrap();
        let c0 = pca.components.column(0);
        let c1 = pca.components.column(1);
        assert!((c0[0].abs() - 1.0).abs() < 1e-9, "c0 = {c0:?}");
        assert!((c1[1].abs() - 1.0).abs() < 1e-9, "c1 = {c1:?}");
        assert!((pca.singular_values[0] - 3.0).abs() < 1e-9);
        assert!((pca.singular_values[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn expanded_matrix_negates_second_half() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(16);
        let x = DMatrix::from_fn(10, 30, |_, _| rng.random_range(-1.0..1.0f64));
        let pca = fit_pca_baseline(&x, PcaTarget::Components(4), false).unwrap();
        let e = pca.expanded();
        assert_eq!(e.ncols(), 8);
        for j in 0..4 {
            for i in 0..10 {
                assert_eq!(e[(i, j + 4)], -e[(i, j)]);
            }
        }
        // orthonormality of components
        for a in 0..4 {
            for b in 0..4 {
                let dot = pca.components.column(a).dot(&pca.components.column(b));
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-9);
            }
        }
    }
}
