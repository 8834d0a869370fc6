//! Full positive-lasso solution path, LARS-style with nonnegativity.
//!
//! For `min_v ||y - U v||^2 + alpha ||v||_1, v >= 0` the solution is piecewise
//! linear in `alpha`. Starting at `alpha_max = 2 max_j u_j^T y` with the zero
//! vector, variables enter the active set when their correlation
//! `2 u_j^T (y - U v)` reaches `alpha` and leave when their coefficient hits
//! zero. The path terminates at `alpha = 0` with a nonnegative least-squares
//! solution.

use nalgebra::{DMatrix, DVector};

use super::SolverError;

/// Correlation ties closer than this enter lowest-index-first.
const TIE_EPS: f64 = 1e-12;

/// One breakpoint of the path.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub alpha: f64,
    pub coefficients: DVector<f64>,
    /// Active (strictly positive) coordinate indices on the segment ending here.
    pub active: Vec<usize>,
}

/// Piecewise-linear solution path over decreasing `alpha`.
#[derive(Debug, Clone)]
pub struct LassoPath {
    num_coefficients: usize,
    /// `alpha_max`; the solution is zero for `alpha >= alpha_max`.
    pub alpha_max: f64,
    /// Breakpoints in strictly decreasing `alpha` order, ending at `alpha = 0`.
    pub breakpoints: Vec<PathPoint>,
}

impl LassoPath {
    pub fn num_coefficients(&self) -> usize {
        self.num_coefficients
    }

    /// Evaluate the path at an arbitrary penalty by linear interpolation
    /// between the surrounding breakpoints (exact, the path is piecewise
    /// linear in `alpha`).
    pub fn solution_at(&self, alpha: f64) -> DVector<f64> {
        if self.breakpoints.is_empty() || alpha >= self.alpha_max {
            return DVector::zeros(self.num_coefficients);
        }
        // breakpoints are sorted by decreasing alpha; the solution is the
        // zero vector on the segment above the first breakpoint
        let mut prev_alpha = self.alpha_max;
        let mut prev = DVector::zeros(self.num_coefficients);
        for bp in &self.breakpoints {
            if alpha >= bp.alpha {
                let denom = prev_alpha - bp.alpha;
                if denom <= 0.0 {
                    return bp.coefficients.clone();
                }
                let t = (prev_alpha - alpha) / denom;
                return prev * (1.0 - t) + &bp.coefficients * t;
            }
            prev_alpha = bp.alpha;
            prev = bp.coefficients.clone();
        }
        prev
    }
}

/// On the segment with active set `a`, the solution is
/// `v_a(alpha) = base - (alpha / 2) * dir` with `base = G^-1 U_a^T y` and
/// `dir = G^-1 1`, `G = U_a^T U_a`.
struct Segment {
    base: DVector<f64>,
    dir: DVector<f64>,
}

fn solve_segment(u: &DMatrix<f64>, y: &DVector<f64>, active: &[usize]) -> Option<Segment> {
    let n = active.len();
    let mut gram = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (a, &ja) in active.iter().enumerate() {
        for (b, &jb) in active.iter().enumerate() {
            gram[(a, b)] = u.column(ja).dot(&u.column(jb));
        }
        rhs[a] = u.column(ja).dot(y);
    }
    let lu = gram.lu();
    let base = lu.solve(&rhs)?;
    let dir = lu.solve(&DVector::from_element(n, 1.0))?;
    Some(Segment { base, dir })
}

/// Compute the complete positive-lasso path for one sample.
pub fn positive_lasso_path(u: &DMatrix<f64>, y: &DVector<f64>) -> Result<LassoPath, SolverError> {
    let (r_dim, k) = u.shape();
    if y.len() != r_dim {
        return Err(SolverError::DimensionMismatch(format!(
            "U is {}x{}, y has {}",
            r_dim,
            k,
            y.len()
        )));
    }
    if u.iter().any(|x| !x.is_finite()) || y.iter().any(|x| !x.is_finite()) {
        return Err(SolverError::NonFinite);
    }

    let corr0: Vec<f64> = (0..k).map(|j| 2.0 * u.column(j).dot(y)).collect();
    let alpha_max = corr0.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut path = LassoPath {
        num_coefficients: k,
        alpha_max,
        breakpoints: Vec::new(),
    };
    if alpha_max <= 0.0 {
        // y has no positive correlation with any column: zero throughout
        path.breakpoints.push(PathPoint {
            alpha: 0.0,
            coefficients: DVector::zeros(k),
            active: vec![],
        });
        return Ok(path);
    }

    let mut active: Vec<usize> = Vec::new();
    // first entering variable: max correlation, lowest index on ties
    let mut first = 0usize;
    for j in 1..k {
        if corr0[j] > corr0[first] + TIE_EPS {
            first = j;
        }
    }
    active.push(first);
    let mut alpha_cur = alpha_max;

    let max_events = 10 * k + 50;
    for _ in 0..max_events {
        let seg = match solve_segment(u, y, &active) {
            Some(s) => s,
            None => break, // singular active Gram; freeze the path here
        };
        let value_at = |seg: &Segment, alpha: f64| -> DVector<f64> {
            &seg.base - &seg.dir * (alpha / 2.0)
        };

        // candidate: an active coefficient hits zero as alpha decreases
        let mut drop_alpha = f64::NEG_INFINITY;
        let mut drop_idx = None;
        for (a, &j) in active.iter().enumerate() {
            if seg.dir[a].abs() > 1e-300 {
                let alpha_zero = 2.0 * seg.base[a] / seg.dir[a];
                if alpha_zero < alpha_cur - TIE_EPS && alpha_zero > 0.0 {
                    // only a crossing if the coefficient is positive just below
                    // alpha_cur and vanishes at alpha_zero
                    let v_above = seg.base[a] - seg.dir[a] * (alpha_cur / 2.0) * 0.999_999;
                    if v_above > 0.0
                        && (alpha_zero > drop_alpha + TIE_EPS
                            || (alpha_zero > drop_alpha - TIE_EPS
                                && drop_idx.map_or(true, |(_, dj)| j < dj)))
                    {
                        drop_alpha = alpha_zero;
                        drop_idx = Some((a, j));
                    }
                }
            }
        }

        // candidate: an inactive correlation catches up with alpha
        let mut enter_alpha = f64::NEG_INFINITY;
        let mut enter_idx = None;
        for j in 0..k {
            if active.contains(&j) {
                continue;
            }
            // c_j(alpha) = p_j + q_j alpha
            let mut u_base = DVector::zeros(r_dim);
            let mut u_dir = DVector::zeros(r_dim);
            for (a, &ja) in active.iter().enumerate() {
                u_base.axpy(seg.base[a], &u.column(ja), 1.0);
                u_dir.axpy(seg.dir[a], &u.column(ja), 1.0);
            }
            let p = 2.0 * u.column(j).dot(&(y - &u_base));
            let q = u.column(j).dot(&u_dir);
            let denom = 1.0 - q;
            if denom.abs() <= 1e-300 {
                continue;
            }
            let alpha_hit = p / denom;
            if alpha_hit < alpha_cur - TIE_EPS && alpha_hit > 0.0 {
                // the correlation must approach from below as alpha decreases
                let c_above = p + q * alpha_cur;
                if c_above < alpha_cur + TIE_EPS
                    && (alpha_hit > enter_alpha + TIE_EPS
                        || (alpha_hit > enter_alpha - TIE_EPS
                            && enter_idx.map_or(true, |ej| j < ej)))
                {
                    enter_alpha = alpha_hit;
                    enter_idx = Some(j);
                }
            }
        }

        let next_alpha = drop_alpha.max(enter_alpha).max(0.0);
        let v_seg = value_at(&seg, next_alpha);
        let mut coefficients = DVector::zeros(k);
        for (a, &j) in active.iter().enumerate() {
            coefficients[j] = v_seg[a].max(0.0);
        }
        path.breakpoints.push(PathPoint {
            alpha: next_alpha,
            coefficients,
            active: active.clone(),
        });
        alpha_cur = next_alpha;

        if next_alpha <= 0.0 {
            break;
        }
        if drop_alpha >= enter_alpha {
            if let Some((a, _)) = drop_idx {
                active.remove(a);
                if active.is_empty() {
                    // restart: next entry is where some correlation equals alpha
                    // (can happen after a drop); fall back to ending the path
                    // at zero with the empty solution
                    path.breakpoints.push(PathPoint {
                        alpha: 0.0,
                        coefficients: DVector::zeros(k),
                        active: vec![],
                    });
                    break;
                }
            }
        } else if let Some(j) = enter_idx {
            active.push(j);
            active.sort_unstable();
        }
    }

    // ensure the path ends at alpha = 0
    if path
        .breakpoints
        .last()
        .map(|bp| bp.alpha > 0.0)
        .unwrap_or(true)
    {
        if let Some(seg) = solve_segment(u, y, &active) {
            let mut coefficients = DVector::zeros(k);
            for (a, &j) in active.iter().enumerate() {
                coefficients[j] = seg.base[a].max(0.0);
            }
            path.breakpoints.push(PathPoint {
                alpha: 0.0,
                coefficients,
                active,
            });
        } else if let Some(last) = path.breakpoints.last().cloned() {
            path.breakpoints.push(PathPoint {
                alpha: 0.0,
                coefficients: last.coefficients,
                active: last.active,
            });
        }
    }

    Ok(path)
}
