//! Symmetric matrix utilities: centering rotations, inverse square roots,
//! and pooled per-mode sample covariance for nuisance estimation.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Relative eigenvalue floor used by the matrix square-root routines.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-10;

/// Symmetric real matrix; symmetry is enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    mat: DMatrix<f64>,
}

impl SymMatrix {
    /// Symmetrizes the input as (A + A')/2.
    pub fn from_matrix(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Shape(format!(
                "matrix is {}x{}, expected square",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        Ok(SymMatrix { mat: sym })
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix { mat: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix { mat: DMatrix::zeros(dim, dim) }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mat = DMatrix::from_fn(dim, dim, |i, j| if i <= j { f(i, j) } else { f(j, i) });
        SymMatrix { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.mat[(i, j)] = v;
        self.mat[(j, i)] = v;
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.mat.clone());
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Inverse of an SPD matrix via eigendecomposition.
    pub fn try_inverse(&self) -> Result<SymMatrix> {
        let r = self.powered(-1.0, DEFAULT_EIG_FLOOR)?;
        Ok(r.matrix)
    }

    /// Symmetric square root (eigenvalues clamped below at floor * lambda_max).
    pub fn sqrt(&self) -> Result<SymMatrix> {
        Ok(self.powered(0.5, DEFAULT_EIG_FLOOR)?.matrix)
    }

    fn powered(&self, exponent: f64, floor_ratio: f64) -> Result<PoweredMatrix> {
        let eig = SymmetricEigen::new(self.mat.clone());
        let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lambda_max > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "largest eigenvalue is {lambda_max}"
            )));
        }
        let floor = floor_ratio * lambda_max;
        let mut clamped = 0usize;
        let dim = self.dim();
        let mut scaled = eig.eigenvectors.clone();
        for (c, &lam) in eig.eigenvalues.iter().enumerate() {
            let l = if lam < floor {
                clamped += 1;
                floor
            } else {
                lam
            };
            let w = l.powf(exponent);
            for r in 0..dim {
                scaled[(r, c)] *= w;
            }
        }
        let out = &scaled * eig.eigenvectors.transpose();
        let warning = (clamped as f64) > 0.01 * dim as f64;
        Ok(PoweredMatrix { matrix: SymMatrix::from_matrix(out)?, warning })
    }
}

/// Result of `sym_inv_sqrt`: the matrix plus a flag set when more than 1%
/// of the eigenvalues hit the floor.
#[derive(Debug, Clone)]
pub struct InvSqrt {
    pub matrix: SymMatrix,
    pub warning: bool,
}

/// Inverse symmetric square root with eigenvalue clamping at
/// floor_ratio * lambda_max.
pub fn sym_inv_sqrt(m: &SymMatrix, floor_ratio: f64) -> Result<InvSqrt> {
    let p = m.powered(-0.5, floor_ratio)?;
    Ok(InvSqrt { matrix: p.matrix, warning: p.warning })
}

struct PoweredMatrix {
    matrix: SymMatrix,
    warning: bool,
}

/// Orthogonal n x n Helmert rotation whose last row is (1/sqrt(n), ...).
/// Rows 0..n-2 sum to zero, so the rotation annihilates a common mean.
pub fn centering_rotation(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::Domain(format!(
            "centering rotation needs at least 2 samples, got {n}"
        )));
    }
    let mut q = DMatrix::zeros(n, n);
    for r in 0..n - 1 {
        let s = ((r + 1) as f64 * (r + 2) as f64).sqrt();
        for c in 0..=r {
            q[(r, c)] = 1.0 / s;
        }
        q[(r, r + 1)] = -((r + 1) as f64) / s;
    }
    let last = 1.0 / (n as f64).sqrt();
    for c in 0..n {
        q[(n - 1, c)] = last;
    }
    Ok(q)
}

/// Pooled mode-k sample covariance: subtracts the across-observation sample
/// mean tensor, then averages outer products of all mode-k fibers, dividing
/// by n * m / m_k.
pub fn pooled_mode_covariance(group: &[DenseTensor], k: usize) -> Result<SymMatrix> {
    let first = group
        .first()
        .ok_or_else(|| Error::Domain("empty group for covariance pooling".into()))?;
    let n = group.len();
    if n < 2 {
        return Err(Error::Degenerate(
            "pooled covariance needs at least 2 observations for centering".into(),
        ));
    }
    let order = first.order();
    if k >= order {
        return Err(Error::Index(format!("mode {} out of range for order {}", k, order)));
    }
    let m: usize = first.shape().iter().product();
    let mk = first.shape()[k];
    let mut mean = vec![0.0; m];
    for t in group {
        if t.shape() != first.shape() {
            return Err(Error::Shape("observations have heterogeneous shapes".into()));
        }
        for (a, &b) in mean.iter_mut().zip(t.data()) {
            *a += b;
        }
    }
    let inv_n = 1.0 / n as f64;
    for a in mean.iter_mut() {
        *a *= inv_n;
    }
    let mut acc = DMatrix::<f64>::zeros(mk, mk);
    for t in group {
        let mut centered = t.clone();
        for (a, &b) in centered.data_mut().iter_mut().zip(&mean) {
            *a -= b;
        }
        let unf = centered.matricize(k)?;
        acc += &unf * unf.transpose();
    }
    let scale = 1.0 / (n as f64 * (m / mk) as f64);
    acc *= scale;
    let max_abs = acc.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if max_abs == 0.0 {
        return Err(Error::Degenerate(
            "centered observations are all zero; pooled covariance is degenerate".into(),
        ));
    }
    SymMatrix::from_matrix(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn helmert_2x2() {
        let q = centering_rotation(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(q[(0, 0)], s, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(0, 1)], -s, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(1, 0)], s, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(1, 1)], s, epsilon = 1e-15);
    }

    #[test]
    fn helmert_orthogonal_with_constant_last_row() {
        for n in 2..=8 {
            let q = centering_rotation(n).unwrap();
            let qqt = &q * q.transpose();
            let id = DMatrix::<f64>::identity(n, n);
            for (a, b) in qqt.iter().zip(id.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            for c in 0..n {
                assert_abs_diff_eq!(q[(n - 1, c)], 1.0 / (n as f64).sqrt(), epsilon = 1e-12);
            }
            // rows 0..n-2 are orthogonal to the all-ones vector
            for r in 0..n - 1 {
                let s: f64 = (0..n).map(|c| q[(r, c)]).sum();
                assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn helmert_rejects_n1() {
        assert!(centering_rotation(1).is_err());
    }

    #[test]
    fn inv_sqrt_identity_and_diagonal() {
        let id = SymMatrix::identity(4);
        let r = sym_inv_sqrt(&id, DEFAULT_EIG_FLOOR).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(r.matrix.get(i, j), want, epsilon = 1e-12);
            }
        }
        let d = SymMatrix::from_fn(2, |i, j| {
            if i != j {
                0.0
            } else if i == 0 {
                4.0
            } else {
                9.0
            }
        });
        let r = sym_inv_sqrt(&d, DEFAULT_EIG_FLOOR).unwrap();
        assert_abs_diff_eq!(r.matrix.get(0, 0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.matrix.get(1, 1), 1.0 / 3.0, epsilon = 1e-12);
        assert!(!r.warning);
    }

    #[test]
    fn inv_sqrt_defining_identity_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let dim = 6;
            let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
            let spd =
                SymMatrix::from_matrix(&a * a.transpose() + DMatrix::identity(dim, dim) * 0.5)
                    .unwrap();
            let r = sym_inv_sqrt(&spd, DEFAULT_EIG_FLOOR).unwrap().matrix;
            let prod = r.matrix() * spd.matrix() * r.matrix();
            let id = DMatrix::<f64>::identity(dim, dim);
            for (x, y) in prod.iter().zip(id.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn inv_sqrt_constant_absorption() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dim = 5;
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let spd =
            SymMatrix::from_matrix(&a * a.transpose() + DMatrix::identity(dim, dim)).unwrap();
        let c = 3.7;
        let scaled = SymMatrix::from_matrix(spd.matrix() * c).unwrap();
        let r1 = sym_inv_sqrt(&scaled, DEFAULT_EIG_FLOOR).unwrap().matrix;
        let r2 = sym_inv_sqrt(&spd, DEFAULT_EIG_FLOOR).unwrap().matrix;
        for i in 0..dim {
            for j in 0..dim {
                assert_abs_diff_eq!(
                    r1.get(i, j),
                    r2.get(i, j) / c.sqrt(),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn inv_sqrt_rejects_non_pd() {
        let m = SymMatrix::from_fn(2, |i, j| if i == j { -1.0 } else { 0.0 });
        assert!(sym_inv_sqrt(&m, DEFAULT_EIG_FLOOR).is_err());
    }

    #[test]
    fn inv_sqrt_warns_on_heavy_clamping() {
        // rank-1 PSD: all but one eigenvalue clamped
        let v = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let m = SymMatrix::from_matrix(&v * v.transpose()).unwrap();
        let r = sym_inv_sqrt(&m, DEFAULT_EIG_FLOOR).unwrap();
        assert!(r.warning);
    }

    #[test]
    fn pooled_covariance_single_fiber_pair() {
        // +t and -t with a single nonzero mode-0 fiber f: centered outer
        // products give 2 f f' / (n * m / m_0).
        let f = [1.0, 2.0];
        let mut t = DenseTensor::zeros(vec![2, 3]).unwrap();
        // place fiber f at column 1 of the 2x3 matrix
        t.data_mut()[1] = f[0];
        t.data_mut()[4] = f[1];
        let neg = {
            let mut n = t.clone();
            for v in n.data_mut() {
                *v = -*v;
            }
            n
        };
        let cov = pooled_mode_covariance(&[t, neg], 0).unwrap();
        let scale = 2.0 / (2.0 * 3.0);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(cov.get(i, j), scale * f[i] * f[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pooled_covariance_identical_observations_degenerate() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let err = pooled_mode_covariance(&[t.clone(), t], 0).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn pooled_covariance_rejects_single_observation() {
        let t = DenseTensor::zeros(vec![2, 2]).unwrap();
        assert!(pooled_mode_covariance(&[t], 0).is_err());
    }

    #[test]
    fn pooled_covariance_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs: Vec<DenseTensor> = (0..4)
            .map(|_| {
                let data = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
                DenseTensor::new(vec![2, 3, 4], data).unwrap()
            })
            .collect();
        for k in 0..3 {
            let cov = pooled_mode_covariance(&obs, k).unwrap();
            assert!(cov.min_eigenvalue() > -1e-10);
        }
    }
}
