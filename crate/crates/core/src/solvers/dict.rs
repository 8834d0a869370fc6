//! Dictionary learning with nonnegative sparse codes, by alternating
//! minimization.
//!
//! Objective: `min 0.5 ||X - U V||_F^2 + alpha ||V||_1` subject to
//! `||u_j||_2 <= 1` and `V >= 0`. The sparse-code step solves a positive
//! lasso per column (warm-started); the dictionary step is block coordinate
//! descent over atoms with projection onto the unit ball. Both steps are
//! exact block minimizations, so the objective trace never increases.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as index_sample;
use rand::SeedableRng;

use super::{positive_lasso_warm, SolverConfig, SolverError};
use crate::util::{par_map, relative_change};

/// A fitted per-part dictionary model.
#[derive(Debug, Clone)]
pub struct DictionaryModel {
    /// Dictionary, p x k, column norms <= 1.
    pub dictionary: DMatrix<f64>,
    /// Nonnegative codes, k x m.
    pub codes: DMatrix<f64>,
    pub alpha: f64,
    /// Objective value after each alternation (non-increasing).
    pub objective_trace: Vec<f64>,
}

impl DictionaryModel {
    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.dictionary * &self.codes
    }
}

fn ve_percent(x_norm_sq: f64, resid_sq: f64) -> f64 {
    100.0 * (1.0 - resid_sq / x_norm_sq)
}

/// Seeded initialization: distinct data columns, normalized; zero-norm picks
/// fall back to deterministic unit vectors.
fn init_dictionary(x: &DMatrix<f64>, k: usize, seed: u64) -> DMatrix<f64> {
    let (p, m) = x.shape();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let picks = index_sample(&mut rng, m, k.min(m)).into_vec();
    let mut u = DMatrix::zeros(p, k);
    for (j, &col) in picks.iter().enumerate() {
        let c = x.column(col);
        let norm = c.norm();
        if norm > 1e-12 {
            u.set_column(j, &(c / norm));
        } else {
            u[(j % p, j)] = 1.0;
        }
    }
    for j in picks.len()..k {
        u[(j % p, j)] = 1.0;
    }
    u
}

/// Fit a dictionary with `k` atoms at sparsity weight `alpha`.
pub fn fit_dictionary(
    x: &DMatrix<f64>,
    k: usize,
    alpha: f64,
    config: &SolverConfig,
) -> Result<DictionaryModel, SolverError> {
    config.validate()?;
    if k < 1 {
        return Err(SolverError::BadConfig("k must be >= 1".into()));
    }
    let (p, m) = x.shape();
    if m < k {
        return Err(SolverError::BadConfig(format!(
            "need at least k = {k} data columns, got {m}"
        )));
    }
    for c in 0..m {
        if !x.column(c).norm_squared().is_finite() {
            return Err(SolverError::DegenerateData(c));
        }
    }

    let mut u = init_dictionary(x, k, config.seed);
    let mut v = DMatrix::<f64>::zeros(k, m);
    let x_norm_sq = x.norm_squared();
    let mut trace = Vec::new();
    // the 1/2 data-fit factor maps the per-column problem onto the
    // unscaled positive-lasso objective with penalty 2*alpha
    let lasso_alpha = 2.0 * alpha;

    for _iter in 0..config.max_iterations {
        // sparse-code step, columns are independent
        let jobs: Vec<(DVector<f64>, DVector<f64>)> = (0..m)
            .map(|c| (x.column(c).into_owned(), v.column(c).into_owned()))
            .collect();
        let u_ref = &u;
        let solved = par_map(jobs, move |(y, warm)| {
            positive_lasso_warm(u_ref, &y, lasso_alpha, warm)
        });
        for (c, res) in solved.into_iter().enumerate() {
            v.set_column(c, &res?);
        }

        // dictionary step: block coordinate descent over atoms
        let gram = &v * v.transpose(); // k x k
        let xvt = x * v.transpose(); // p x k
        for j in 0..k {
            let g_jj = gram[(j, j)];
            if g_jj > 1e-12 {
                // u_j <- u_j + (w_j - U g_j) / g_jj, projected onto the ball
                let mut new_col = u.column(j).into_owned();
                let ug = &u * gram.column(j);
                for i in 0..p {
                    new_col[i] += (xvt[(i, j)] - ug[i]) / g_jj;
                }
                let norm = new_col.norm();
                if norm > 1.0 {
                    new_col /= norm;
                }
                u.set_column(j, &new_col);
            } else {
                // dead atom: its code row is zero, so swapping the column in
                // leaves the objective unchanged. Reseed it with the worst
                // reconstructed data column.
                let recon = &u * &v;
                let mut worst = 0usize;
                let mut worst_err = -1.0f64;
                for c in 0..m {
                    let err = (x.column(c) - recon.column(c)).norm_squared();
                    if err > worst_err {
                        worst_err = err;
                        worst = c;
                    }
                }
                let col = x.column(worst);
                let norm = col.norm();
                if norm > 1e-12 {
                    u.set_column(j, &(col / norm));
                }
            }
        }

        let resid_sq = (x - &u * &v).norm_squared();
        let obj = 0.5 * resid_sq + alpha * v.iter().sum::<f64>();
        let done_tol = trace
            .last()
            .map(|&prev| relative_change(prev, obj) < config.tolerance)
            .unwrap_or(false);
        trace.push(obj);
        if done_tol {
            break;
        }
        if let Some(target) = config.target_ve {
            if x_norm_sq > 0.0 && ve_percent(x_norm_sq, resid_sq) >= target {
                break;
            }
        }
    }

    Ok(DictionaryModel {
        dictionary: u,
        codes: v,
        alpha,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn ve(x: &DMatrix<f64>, xhat: &DMatrix<f64>) -> f64 {
        100.0 * (1.0 - (x - xhat).norm_squared() / x.norm_squared())
    }

    #[test]
    fn planted_rank_one_is_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = 10;
        let m = 40;
        let mut atom = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        atom /= atom.norm();
        let codes = DVector::from_fn(m, |_, _| rng.random_range(0.1..2.0));
        let x = &atom * codes.transpose();
        let model = fit_dictionary(&x, 1, 1e-6, &SolverConfig::default()).unwrap();
        assert!(ve(&x, &model.reconstruction()) >= 99.9);
    }

    #[test]
    fn planted_nonnegative_codes_are_fit_almost_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (p, k, m) = (6, 4, 30);
        let mut u0 = DMatrix::from_fn(p, k, |_, _| rng.random_range(-1.0..1.0f64));
        for j in 0..k {
            let n = u0.column(j).norm();
            u0.set_column(j, &(u0.column(j) / n));
        }
        // nonnegative codes with one dominant atom per column
        let mut v0 = DMatrix::zeros(k, m);
        for c in 0..m {
            v0[(c % k, c)] = rng.random_range(1.0..2.0f64);
            v0[((c + 1) % k, c)] = rng.random_range(0.0..0.3f64);
        }
        let x = &u0 * &v0;
        let cfg = SolverConfig {
            max_iterations: 500,
            tolerance: 1e-10,
            target_ve: Some(99.95),
            ..SolverConfig::default()
        };
        let model = fit_dictionary(&x, k, 1e-6, &cfg).unwrap();
        assert!(
            ve(&x, &model.reconstruction()) >= 99.9,
            "VE = {}",
            ve(&x, &model.reconstruction())
        );
    }

    #[test]
    fn invariants_hold_after_fit() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(8, 25, |_, _| rng.random_range(-1.0..1.0));
        let model = fit_dictionary(&x, 4, 0.3, &SolverConfig::default()).unwrap();
        for j in 0..4 {
            assert!(model.dictionary.column(j).norm() <= 1.0 + 1e-9);
        }
        assert!(model.codes.iter().all(|&c| c >= 0.0));
        for w in model.objective_trace.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-9) + 1e-12,
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn rejects_degenerate_data_and_bad_k() {
        let mut x = DMatrix::from_element(4, 6, 1.0);
        x[(0, 2)] = f64::NAN;
        assert!(matches!(
            fit_dictionary(&x, 2, 0.1, &SolverConfig::default()),
            Err(SolverError::DegenerateData(2))
        ));
        let x = DMatrix::from_element(4, 2, 1.0);
        assert!(fit_dictionary(&x, 3, 0.1, &SolverConfig::default()).is_err());
    }
}
