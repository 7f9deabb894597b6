//! Correlation-scenario estimates over pooled transformed fibers, and the
//! shared statistic-pair construction used by both scenarios.

use crate::error::{Error, Result};
use crate::field::UpperTri;
use crate::linalg::SymMatrix;
use crate::transform::TransformedGroup;

/// Variances below this are treated as degenerate.
pub const NU_FLOOR: f64 = 1e-15;

/// Per-group correlation (or partial-correlation) estimates.
#[derive(Debug, Clone)]
pub struct GroupEstimates {
    /// Symmetric with unit diagonal, entries clamped into [-1, 1].
    pub rho: SymMatrix,
    /// Upper-triangular variance estimates, strictly positive.
    pub nu: UpperTri<f64>,
    /// Effective pooled fiber count N_d.
    pub n_eff: usize,
}

/// Upper-triangular fields of the primary and auxiliary statistics.
#[derive(Debug, Clone)]
pub struct StatField {
    pub t: UpperTri<f64>,
    pub u: UpperTri<f64>,
    pub kappa: UpperTri<f64>,
}

impl StatField {
    pub fn size(&self) -> usize {
        self.t.size()
    }
}

/// Correlation estimates from pooled mode-k* fibers:
/// sigma_hat = (1/N) sum of fiber outer products, rho_hat its correlation
/// normalization, nu_hat the empirical variance of the products.
pub fn corr_estimates(tg: &TransformedGroup) -> Result<GroupEstimates> {
    let fibers = tg.pooled_fibers()?;
    let n = fibers.nrows();
    let mk = fibers.ncols();
    if n == 0 {
        return Err(Error::Domain("no pooled fibers".into()));
    }
    let n_f = n as f64;
    let sigma = fibers.transpose() * &fibers / n_f;
    for i in 0..mk {
        if sigma[(i, i)] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "non-positive fiber variance at coordinate {i}"
            )));
        }
    }
    let mut rho = SymMatrix::identity(mk);
    for i in 0..mk {
        for j in i + 1..mk {
            let r = sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt();
            rho.set(i, j, r.clamp(-1.0, 1.0));
        }
    }
    let mut nu = UpperTri::new(mk);
    for i in 0..mk {
        for j in i + 1..mk {
            let mut ss = 0.0;
            for r in 0..n {
                let d = fibers[(r, i)] * fibers[(r, j)] - sigma[(i, j)];
                ss += d * d;
            }
            let v = ss / (n_f * n_f * sigma[(i, i)] * sigma[(j, j)]);
            if v < NU_FLOOR {
                return Err(Error::Degenerate(format!(
                    "variance estimate below floor at pair ({i},{j})"
                )));
            }
            nu.set(i, j, v);
        }
    }
    Ok(GroupEstimates { rho, nu, n_eff: n })
}

/// Statistic pairs:
/// T = (rho1 - rho2) / sqrt(nu1 + nu2),
/// U = (rho1 + kappa rho2) / sqrt(nu1 + kappa^2 nu2), kappa = nu1 / nu2.
pub fn stat_pairs(g1: &GroupEstimates, g2: &GroupEstimates) -> Result<StatField> {
    let mk = g1.rho.dim();
    if g2.rho.dim() != mk {
        return Err(Error::Shape("group estimate sizes differ".into()));
    }
    let mut t = UpperTri::new(mk);
    let mut u = UpperTri::new(mk);
    let mut kappa = UpperTri::new(mk);
    for i in 0..mk {
        for j in i + 1..mk {
            let (r1, r2) = (g1.rho.get(i, j), g2.rho.get(i, j));
            let (v1, v2) = (g1.nu.get(i, j), g2.nu.get(i, j));
            if v1 <= 0.0 || v2 <= 0.0 {
                return Err(Error::Domain(format!(
                    "non-positive variance at pair ({i},{j})"
                )));
            }
            let k = v1 / v2;
            t.set(i, j, (r1 - r2) / (v1 + v2).sqrt());
            u.set(i, j, (r1 + k * r2) / (v1 + k * k * v2).sqrt());
            kappa.set(i, j, k);
        }
    }
    Ok(StatField { t, u, kappa })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;
    use approx::assert_abs_diff_eq;

    fn estimates(rho12: f64, nu12: f64) -> GroupEstimates {
        let mut rho = SymMatrix::identity(2);
        rho.set(0, 1, rho12);
        let mut nu = UpperTri::new(2);
        nu.set(0, 1, nu12);
        GroupEstimates { rho, nu, n_eff: 10 }
    }

    fn group_from_fibers(fibers: &[[f64; 2]]) -> TransformedGroup {
        // shape (2, 1, 1): each sample is one mode-0 fiber
        let samples = fibers
            .iter()
            .map(|f| DenseTensor::new(vec![2, 1, 1], f.to_vec()).unwrap())
            .collect();
        TransformedGroup { samples, k_star: 0, conditioning_warning: false }
    }

    #[test]
    fn hand_evaluated_two_fiber_case() {
        // fibers (1,1) and (1,-1): sigma = I, rho = I, nu_{0,1} = 2/4 = 0.5
        let tg = group_from_fibers(&[[1.0, 1.0], [1.0, -1.0]]);
        let est = corr_estimates(&tg).unwrap();
        assert_abs_diff_eq!(est.rho.get(0, 1), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(est.nu.get(0, 1), 0.5, epsilon = 1e-14);
        assert_eq!(est.n_eff, 2);
    }

    #[test]
    fn identical_fibers_degenerate() {
        let tg = group_from_fibers(&[[1.0, 2.0], [1.0, 2.0]]);
        assert!(matches!(corr_estimates(&tg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn stat_pairs_hand_values() {
        let g1 = estimates(0.5, 0.01);
        let g2 = estimates(0.3, 0.01);
        let s = stat_pairs(&g1, &g2).unwrap();
        assert_abs_diff_eq!(s.t.get(0, 1), 0.2 / 0.02f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(s.kappa.get(0, 1), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.u.get(0, 1), 0.8 / 0.02f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(s.t.get(0, 1), 1.41421, epsilon = 1e-4);
        assert_abs_diff_eq!(s.u.get(0, 1), 5.65685, epsilon = 1e-4);
    }

    #[test]
    fn null_case_t_is_zero() {
        let g1 = estimates(0.4, 0.02);
        let g2 = estimates(0.4, 0.07);
        let s = stat_pairs(&g1, &g2).unwrap();
        assert_abs_diff_eq!(s.t.get(0, 1), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn group_swap_negates_t() {
        let g1 = estimates(0.5, 0.013);
        let g2 = estimates(-0.2, 0.021);
        let a = stat_pairs(&g1, &g2).unwrap();
        let b = stat_pairs(&g2, &g1).unwrap();
        assert_abs_diff_eq!(a.t.get(0, 1), -b.t.get(0, 1), epsilon = 1e-14);
        // kappa flips to its reciprocal
        assert_abs_diff_eq!(
            a.kappa.get(0, 1),
            1.0 / b.kappa.get(0, 1),
            epsilon = 1e-12
        );
    }
}
