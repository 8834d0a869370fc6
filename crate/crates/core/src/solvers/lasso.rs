//! Positive lasso at a fixed penalty, by cyclic coordinate descent.
//!
//! Solves `min_v ||y - U v||^2 + alpha * ||v||_1  s.t. v >= 0`. Each
//! coordinate update is the exact minimizer over that coordinate, so the
//! objective never increases; iteration stops once the KKT residual is small.

use nalgebra::{DMatrix, DVector};

use super::SolverError;

/// KKT residual target for a converged solution.
const KKT_TOL: f64 = 1e-9;
/// Hard cap on coordinate-descent sweeps. On ill-conditioned dictionaries
/// coordinate descent converges linearly with a poor rate; past this point
/// the (monotone) iterate is returned as is rather than ground out.
const MAX_SWEEPS: usize = 2_000;

/// Maximum KKT violation of `v` for the positive-lasso objective.
///
/// For `v_j > 0` stationarity requires `2 u_j^T (U v - y) + alpha = 0`; for
/// `v_j = 0` it requires `2 u_j^T (U v - y) + alpha >= 0`.
pub fn kkt_residual(u: &DMatrix<f64>, y: &DVector<f64>, alpha: f64, v: &DVector<f64>) -> f64 {
    let grad = {
        let r = u * v - y;
        2.0 * (u.transpose() * r)
    };
    let mut worst = 0.0f64;
    for j in 0..v.len() {
        let g = grad[j] + alpha;
        let violation = if v[j] > 1e-12 { g.abs() } else { (-g).max(0.0) };
        worst = worst.max(violation);
    }
    worst
}

/// Positive lasso starting from the zero vector.
pub fn positive_lasso(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
) -> Result<DVector<f64>, SolverError> {
    let v0 = DVector::zeros(u.ncols());
    positive_lasso_warm(u, y, alpha, v0)
}

/// Positive lasso warm-started from `v0` (entries clamped to be nonnegative).
pub fn positive_lasso_warm(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    mut v: DVector<f64>,
) -> Result<DVector<f64>, SolverError> {
    let (r_dim, k) = u.shape();
    if y.len() != r_dim || v.len() != k {
        return Err(SolverError::DimensionMismatch(format!(
            "U is {}x{}, y has {}, v0 has {}",
            r_dim,
            k,
            y.len(),
            v.len()
        )));
    }
    if !(alpha >= 0.0) {
        return Err(SolverError::BadConfig(format!("alpha = {alpha} must be >= 0")));
    }
    if u.iter().any(|x| !x.is_finite()) || y.iter().any(|x| !x.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    for x in v.iter_mut() {
        if !x.is_finite() || *x < 0.0 {
            *x = 0.0;
        }
    }

    let col_sq: Vec<f64> = (0..k).map(|j| u.column(j).norm_squared()).collect();
    // residual r = y - U v
    let mut r = y - u * &v;

    let scale = y.norm().max(1.0);
    let tol = KKT_TOL * scale.max(alpha);
    for sweep in 0..MAX_SWEEPS {
        for j in 0..k {
            if col_sq[j] <= 0.0 {
                v[j] = 0.0;
                continue;
            }
            // c = u_j^T (r + u_j v_j) = correlation with v_j removed
            let c = u.column(j).dot(&r) + col_sq[j] * v[j];
            let v_new = ((2.0 * c - alpha) / (2.0 * col_sq[j])).max(0.0);
            let delta = v_new - v[j];
            if delta != 0.0 {
                r.axpy(-delta, &u.column(j), 1.0);
                v[j] = v_new;
            }
        }
        // KKT check from the maintained residual; refresh it now and then to
        // shed accumulated rounding.
        if sweep % 256 == 255 {
            r = y - u * &v;
        }
        let mut worst = 0.0f64;
        for j in 0..k {
            let g = -2.0 * u.column(j).dot(&r) + alpha;
            let violation = if v[j] > 1e-12 { g.abs() } else { (-g).max(0.0) };
            worst = worst.max(violation);
        }
        if worst <= tol {
            break;
        }
    }
    Ok(v)
}
