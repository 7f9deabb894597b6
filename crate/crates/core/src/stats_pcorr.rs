//! Partial-correlation scenario: node-wise lasso over pooled fibers,
//! residual covariances, bias correction, and variance estimates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::UpperTri;
use crate::linalg::SymMatrix;
use crate::stats_corr::{GroupEstimates, NU_FLOOR};
use crate::transform::TransformedGroup;

/// Penalty selection for the node-wise regressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// c * sqrt(log(m_{k*}) / N_d) with c = 2.
    Auto,
    /// c * sqrt(log(m_{k*}) / N_d) with a caller-chosen c.
    Scaled(f64),
    /// A fixed penalty value.
    Fixed(f64),
}

impl LambdaRule {
    pub fn resolve(&self, mk: usize, n_eff: usize) -> f64 {
        let base = ((mk as f64).ln() / n_eff as f64).sqrt();
        match self {
            LambdaRule::Auto => 2.0 * base,
            LambdaRule::Scaled(c) => c * base,
            LambdaRule::Fixed(v) => *v,
        }
    }
}

/// Node-wise regression output.
#[derive(Debug, Clone)]
pub struct NodewiseFit {
    /// eta[i] has length m_{k*} - 1: node i regressed on the others in
    /// natural order with node i removed.
    pub eta: Vec<Vec<f64>>,
    pub lambda: f64,
    /// N_d x m_{k*} residual matrix aligned with the pooled fibers.
    pub residuals: DMatrix<f64>,
}

impl NodewiseFit {
    /// Node `node`'s coefficient on variable `var` (var != node).
    pub fn coef(&self, node: usize, var: usize) -> f64 {
        self.eta[node][reduced_index(node, var)]
    }
}

/// Position of variable `var` in the coefficient vector of `node`
/// (natural order with the node's own column removed).
pub fn reduced_index(node: usize, var: usize) -> usize {
    debug_assert!(var != node);
    if var < node {
        var
    } else {
        var - 1
    }
}

/// Residual covariances plus debiased partial-correlation estimates.
#[derive(Debug, Clone)]
pub struct PcorrEstimates {
    pub r_tilde: SymMatrix,
    pub r_hat: SymMatrix,
    pub estimates: GroupEstimates,
}

/// Lasso by cyclic coordinate descent with soft-thresholding:
/// minimizes (2N)^{-1} ||y - X b||^2 + lambda ||b||_1.
///
/// Columns are standardized to unit second moment internally; coefficients
/// are returned on the original scale. Converges when the largest
/// coefficient change in a sweep drops below 1e-8, capped at 1e4 sweeps.
pub fn lasso_cd(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 || y.len() != n {
        return Err(Error::Shape(format!(
            "design is {}x{}, response has {} entries",
            n,
            p,
            y.len()
        )));
    }
    if lambda < 0.0 || !lambda.is_finite() && lambda != f64::INFINITY {
        return Err(Error::Domain(format!("penalty must be >= 0, got {lambda}")));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite values in the lasso inputs".into()));
    }
    let n_f = n as f64;
    // standardize columns to unit second moment; the penalty on the
    // standardized coefficient b_j = s_j beta_j becomes lambda / s_j, so
    // the minimized objective is exactly the one on the original scale
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let ss: f64 = (0..n).map(|r| x[(r, j)] * x[(r, j)]).sum();
            (ss / n_f).sqrt()
        })
        .collect();
    // standardized coefficients
    let mut beta = vec![0.0f64; p];
    let mut resid: Vec<f64> = y.to_vec();
    let max_sweeps = 10_000usize;
    let tol = 1e-8;
    #[cfg(debug_assertions)]
    let mut prev_obj = f64::INFINITY;
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if scale[j] == 0.0 {
                continue;
            }
            let inv_s = 1.0 / scale[j];
            // gradient step on the standardized column
            let mut dot = 0.0;
            for r in 0..n {
                dot += x[(r, j)] * inv_s * resid[r];
            }
            let z = beta[j] + dot / n_f;
            let new = soft_threshold(z, lambda * inv_s);
            let change = new - beta[j];
            if change != 0.0 {
                for r in 0..n {
                    resid[r] -= change * x[(r, j)] * inv_s;
                }
                beta[j] = new;
                // track convergence on the original coefficient scale
                max_change = max_change.max((change * inv_s).abs());
            }
        }
        #[cfg(debug_assertions)]
        {
            let rss: f64 = resid.iter().map(|r| r * r).sum();
            let l1: f64 = beta
                .iter()
                .zip(&scale)
                .filter(|&(_, &s)| s != 0.0)
                .map(|(&b, &s)| (b / s).abs())
                .sum();
            // avoid inf * 0 when the penalty is infinite and beta is 0
            let obj = rss / (2.0 * n_f) + if l1 == 0.0 { 0.0 } else { lambda * l1 };
            debug_assert!(
                obj <= prev_obj + 1e-12 * (1.0 + prev_obj.abs()),
                "objective increased: {prev_obj} -> {obj}"
            );
            prev_obj = obj;
        }
        if max_change < tol {
            // back to the original column scale
            return Ok(beta
                .iter()
                .zip(&scale)
                .map(|(&b, &s)| if s == 0.0 { 0.0 } else { b / s })
                .collect());
        }
    }
    Err(Error::NonConvergence(format!(
        "lasso did not converge in {max_sweeps} sweeps (last max coefficient {:.3e})",
        beta.iter().fold(0.0f64, |a, b| a.max(b.abs()))
    )))
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if lambda == f64::INFINITY {
        return 0.0;
    }
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Node-wise regressions over the pooled mode-k* fibers: one coefficient
/// vector per node, residuals stored per fiber.
///
/// The pooled fiber matrix is first rescaled by a single per-group constant
/// (the root mean fiber variance), which makes the fit, and everything
/// derived from it, invariant to a common rescaling of the observations.
pub fn nodewise_regress(tg: &TransformedGroup, rule: LambdaRule) -> Result<NodewiseFit> {
    let mut fibers = tg.pooled_fibers()?;
    let n = fibers.nrows();
    let mk = fibers.ncols();
    if mk < 2 {
        return Err(Error::Domain(format!(
            "node-wise regression needs at least 2 coordinates, got {mk}"
        )));
    }
    let mean_var: f64 =
        fibers.iter().map(|v| v * v).sum::<f64>() / (n as f64 * mk as f64);
    if mean_var <= 0.0 {
        return Err(Error::Degenerate("all pooled fibers are zero".into()));
    }
    fibers /= mean_var.sqrt();
    let lambda = rule.resolve(mk, n);

    let mut eta = Vec::with_capacity(mk);
    let mut residuals = DMatrix::zeros(n, mk);
    for node in 0..mk {
        let mut design = DMatrix::zeros(n, mk - 1);
        for var in (0..mk).filter(|&v| v != node) {
            let c = reduced_index(node, var);
            for r in 0..n {
                design[(r, c)] = fibers[(r, var)];
            }
        }
        let y: Vec<f64> = (0..n).map(|r| fibers[(r, node)]).collect();
        let beta = lasso_cd(&design, &y, lambda)?;
        for r in 0..n {
            let mut pred = 0.0;
            for c in 0..mk - 1 {
                pred += design[(r, c)] * beta[c];
            }
            residuals[(r, node)] = y[r] - pred;
        }
        eta.push(beta);
    }
    Ok(NodewiseFit { eta, lambda, residuals })
}

/// Residual covariance, debiasing, partial-correlation estimates and their
/// variances from a node-wise fit.
pub fn pcorr_estimates(tg: &TransformedGroup, fit: &NodewiseFit) -> Result<PcorrEstimates> {
    let n = fit.residuals.nrows();
    let mk = fit.residuals.ncols();
    if fit.eta.len() != mk || n != tg.n_eff() {
        return Err(Error::Shape("node-wise fit not aligned with the group".into()));
    }
    let r_tilde =
        SymMatrix::from_matrix(fit.residuals.transpose() * &fit.residuals / n as f64)?;
    debias(&r_tilde, |node, var| fit.coef(node, var), n)
}

/// Debias step shared by the pipeline and the population-optimum checks:
/// r_hat_{ij} = -(r_tilde_{ij} + r_tilde_{ii} c(j, i) + r_tilde_{jj} c(i, j))
/// with c(node, var) the node's regression coefficient on the variable,
/// diagonal carried over unchanged.
pub fn debias(
    r_tilde: &SymMatrix,
    coef: impl Fn(usize, usize) -> f64,
    n_eff: usize,
) -> Result<PcorrEstimates> {
    let mk = r_tilde.dim();
    let mut r_hat = SymMatrix::zeros(mk);
    for i in 0..mk {
        let d = r_tilde.get(i, i);
        if d <= 0.0 {
            return Err(Error::Degenerate(format!(
                "non-positive residual variance at node {i}"
            )));
        }
        r_hat.set(i, i, d);
    }
    for i in 0..mk {
        for j in i + 1..mk {
            let v = -(r_tilde.get(i, j)
                + r_tilde.get(i, i) * coef(j, i)
                + r_tilde.get(j, j) * coef(i, j));
            r_hat.set(i, j, v);
        }
    }
    let mut rho = SymMatrix::identity(mk);
    let mut nu = UpperTri::new(mk);
    let n_f = n_eff as f64;
    for i in 0..mk {
        for j in i + 1..mk {
            let denom = (r_hat.get(i, i) * r_hat.get(j, j)).sqrt();
            rho.set(i, j, (r_hat.get(i, j) / denom).clamp(-1.0, 1.0));
            let c_ji = coef(j, i);
            let v = (1.0 + c_ji * c_ji * r_hat.get(i, i) / r_hat.get(j, j)) / n_f;
            if v < NU_FLOOR {
                return Err(Error::Degenerate(format!(
                    "variance estimate below floor at pair ({i},{j})"
                )));
            }
            nu.set(i, j, v);
        }
    }
    Ok(PcorrEstimates {
        r_tilde: r_tilde.clone(),
        r_hat,
        estimates: GroupEstimates { rho, nu, n_eff },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reduced_index_exhaustive() {
        for mk in 2..=5 {
            for node in 0..mk {
                let mut seen = vec![false; mk - 1];
                for var in (0..mk).filter(|&v| v != node) {
                    let p = reduced_index(node, var);
                    assert!(!seen[p], "collision at node {node}, var {var}");
                    seen[p] = true;
                    // natural order with the node column removed
                    let expect: Vec<usize> = (0..mk).filter(|&v| v != node).collect();
                    assert_eq!(expect[p], var);
                }
                assert!(seen.iter().all(|&s| s));
            }
        }
    }

    #[test]
    fn lasso_orthonormal_least_squares() {
        // columns with unit second moment and zero cross products
        let n = 4;
        let x = DMatrix::from_row_slice(
            n,
            2,
            &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0],
        );
        let y = [1.0, 2.0, -1.0, 0.5];
        let beta = lasso_cd(&x, &y, 0.0).unwrap();
        // beta = X'y / n for this design
        let want0: f64 = (0..n).map(|r| x[(r, 0)] * y[r]).sum::<f64>() / n as f64;
        let want1: f64 = (0..n).map(|r| x[(r, 1)] * y[r]).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(beta[0], want0, epsilon = 1e-8);
        assert_abs_diff_eq!(beta[1], want1, epsilon = 1e-8);
    }

    #[test]
    fn lasso_full_shrinkage_threshold() {
        let x = DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0],
        );
        let y = [1.0, 2.0, -1.0, 0.5];
        let lam_max = (0..2)
            .map(|j| (0..4).map(|r| x[(r, j)] * y[r]).sum::<f64>().abs() / 4.0)
            .fold(0.0f64, f64::max);
        let beta = lasso_cd(&x, &y, lam_max * 1.0001).unwrap();
        assert!(beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn lasso_rejects_non_finite() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(lasso_cd(&x, &[1.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn nodewise_full_shrinkage_gives_raw_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let samples: Vec<DenseTensor> = (0..2)
            .map(|_| {
                let data = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
                DenseTensor::new(vec![3, 2, 2], data).unwrap()
            })
            .collect();
        let tg = TransformedGroup { samples, k_star: 0, conditioning_warning: false };
        let fit = nodewise_regress(&tg, LambdaRule::Fixed(f64::INFINITY)).unwrap();
        assert!(fit.eta.iter().all(|e| e.iter().all(|&c| c == 0.0)));
        // residuals equal the (rescaled) raw fibers
        let fibers = tg.pooled_fibers().unwrap();
        let mean_var: f64 =
            fibers.iter().map(|v| v * v).sum::<f64>() / fibers.len() as f64;
        for r in 0..fit.residuals.nrows() {
            for c in 0..fit.residuals.ncols() {
                assert_abs_diff_eq!(
                    fit.residuals[(r, c)],
                    fibers[(r, c)] / mean_var.sqrt(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn residual_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let samples: Vec<DenseTensor> = (0..3)
            .map(|_| {
                let data = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
                DenseTensor::new(vec![4, 4, 2], data).unwrap()
            })
            .collect();
        let tg = TransformedGroup { samples, k_star: 0, conditioning_warning: false };
        let fit = nodewise_regress(&tg, LambdaRule::Scaled(0.5)).unwrap();
        let mut fibers = tg.pooled_fibers().unwrap();
        let mean_var: f64 =
            fibers.iter().map(|v| v * v).sum::<f64>() / fibers.len() as f64;
        fibers /= mean_var.sqrt();
        for node in 0..4 {
            for r in 0..fibers.nrows() {
                let mut pred = 0.0;
                for var in (0..4).filter(|&v| v != node) {
                    pred += fibers[(r, var)] * fit.coef(node, var);
                }
                assert_abs_diff_eq!(
                    fit.residuals[(r, node)],
                    fibers[(r, node)] - pred,
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn debias_zero_coefficients_specialization() {
        let mut r_tilde = SymMatrix::identity(3);
        r_tilde.set(0, 1, 0.2);
        r_tilde.set(0, 2, -0.1);
        r_tilde.set(1, 2, 0.05);
        let n = 50;
        let out = debias(&r_tilde, |_, _| 0.0, n).unwrap();
        for i in 0..3 {
            for j in i + 1..3 {
                assert_abs_diff_eq!(
                    out.r_hat.get(i, j),
                    -r_tilde.get(i, j),
                    epsilon = 1e-14
                );
                assert_abs_diff_eq!(
                    out.estimates.rho.get(i, j),
                    -r_tilde.get(i, j)
                        / (r_tilde.get(i, i) * r_tilde.get(j, j)).sqrt(),
                    epsilon = 1e-14
                );
                assert_abs_diff_eq!(
                    out.estimates.nu.get(i, j),
                    1.0 / n as f64,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn debias_population_optimum_recovers_normalized_precision() {
        // small precision matrices with closed-form population quantities:
        // eta_i = -Omega_{i,-i}/Omega_{ii}, r_ij = Omega_ij/(Omega_ii Omega_jj)
        let omegas = [
            SymMatrix::from_fn(3, |i, j| match j - i {
                0 => 2.0,
                1 => 0.8,
                _ => 0.0,
            }),
            SymMatrix::from_fn(4, |i, j| match j - i {
                0 => 1.0 + i as f64 * 0.3,
                1 => -0.4,
                2 => 0.15,
                _ => 0.0,
            }),
        ];
        for omega in &omegas {
            let mk = omega.dim();
            assert!(omega.min_eigenvalue() > 0.0);
            let r_pop = SymMatrix::from_fn(mk, |i, j| {
                if i == j {
                    1.0 / omega.get(i, i)
                } else {
                    omega.get(i, j) / (omega.get(i, i) * omega.get(j, j))
                }
            });
            let coef = |node: usize, var: usize| -omega.get(node, var) / omega.get(node, node);
            let out = debias(&r_pop, coef, 100).unwrap();
            for i in 0..mk {
                for j in i + 1..mk {
                    assert_abs_diff_eq!(
                        out.r_hat.get(i, j),
                        omega.get(i, j) / (omega.get(i, i) * omega.get(j, j)),
                        epsilon = 1e-12
                    );
                    assert_abs_diff_eq!(
                        out.estimates.rho.get(i, j),
                        omega.get(i, j) / (omega.get(i, i) * omega.get(j, j)).sqrt(),
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn nu_positive_when_diagonals_positive() {
        let mut r_tilde = SymMatrix::identity(3);
        r_tilde.set(0, 1, 0.3);
        let out = debias(&r_tilde, |n, v| if (n, v) == (1, 0) { -2.5 } else { 0.1 }, 10)
            .unwrap();
        assert!(out.estimates.nu.values().iter().all(|&v| v > 0.0));
    }
}
