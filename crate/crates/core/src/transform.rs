//! Sample transformation: whiten the nuisance modes and remove the group
//! mean with an orthogonal rotation, leaving n_d - 1 transformed samples
//! whose mode-of-interest fibers can be pooled as (nearly) i.i.d.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{centering_rotation, pooled_mode_covariance, sym_inv_sqrt, SymMatrix,
    DEFAULT_EIG_FLOOR};
use crate::tensor::{stack, DenseTensor};

/// A transformed group of observations.
#[derive(Debug, Clone)]
pub struct TransformedGroup {
    /// n_d - 1 tensors; mode k* untouched, other modes whitened.
    pub samples: Vec<DenseTensor>,
    pub k_star: usize,
    /// Set when any nuisance inverse square root clamped many eigenvalues.
    pub conditioning_warning: bool,
}

impl TransformedGroup {
    pub fn mode_dim(&self) -> usize {
        self.samples[0].shape()[self.k_star]
    }

    /// Effective pooled fiber count N_d = (n_d - 1) * m / m_{k*}.
    pub fn n_eff(&self) -> usize {
        let m: usize = self.samples[0].shape().iter().product();
        self.samples.len() * (m / self.mode_dim())
    }

    /// All mode-k* fibers across samples as the rows of an N_d x m_{k*}
    /// matrix, sample-major, remaining indices lexicographic.
    pub fn pooled_fibers(&self) -> Result<DMatrix<f64>> {
        let mk = self.mode_dim();
        let per = self.samples[0].len() / mk;
        let mut out = DMatrix::zeros(self.samples.len() * per, mk);
        for (l, s) in self.samples.iter().enumerate() {
            let unf = s.matricize(self.k_star)?;
            for c in 0..per {
                for i in 0..mk {
                    out[(l * per + c, i)] = unf[(i, c)];
                }
            }
        }
        Ok(out)
    }
}

/// Transforms one group of observations (Algorithm: nuisance estimation,
/// orthogonalization, decorrelation + centralization).
///
/// When `nuisances` is `None` the nuisance covariances are estimated by
/// pooled centered sample covariance; when provided (oracle mode) the list
/// carries K-1 matrices for the modes != k_star in mode order.
pub fn transform_group(
    group: &[DenseTensor],
    k_star: usize,
    nuisances: Option<&[SymMatrix]>,
) -> Result<TransformedGroup> {
    let first = group
        .first()
        .ok_or_else(|| Error::Domain("empty observation group".into()))?;
    let n = group.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "sample transformation needs at least 2 observations, got {n}"
        )));
    }
    let order = first.order();
    if k_star >= order {
        return Err(Error::Index(format!(
            "mode of interest {} out of range for order {}",
            k_star, order
        )));
    }

    let nuisance_mats: Vec<SymMatrix> = match nuisances {
        Some(list) => {
            if list.len() != order - 1 {
                return Err(Error::Shape(format!(
                    "expected {} nuisance matrices, got {}",
                    order - 1,
                    list.len()
                )));
            }
            list.to_vec()
        }
        None => {
            let mut v = Vec::with_capacity(order - 1);
            for k in (0..order).filter(|&k| k != k_star) {
                v.push(pooled_mode_covariance(group, k)?);
            }
            v
        }
    };

    let mut warning = false;
    let mut inv_roots: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(order + 1);
    let mut it = nuisance_mats.iter();
    for k in 0..order {
        if k == k_star {
            inv_roots.push(None);
        } else {
            let s = it.next().unwrap();
            if s.dim() != first.shape()[k] {
                return Err(Error::Shape(format!(
                    "nuisance for mode {} is {}x{}, mode size is {}",
                    k,
                    s.dim(),
                    s.dim(),
                    first.shape()[k]
                )));
            }
            let r = sym_inv_sqrt(s, DEFAULT_EIG_FLOOR)?;
            warning |= r.warning;
            inv_roots.push(Some(r.matrix.into_matrix()));
        }
    }
    let q = centering_rotation(n)?;
    inv_roots.push(Some(q));

    let stacked = stack(group)?;
    let refs: Vec<Option<&DMatrix<f64>>> = inv_roots.iter().map(|o| o.as_ref()).collect();
    let z = stacked.tucker(&refs)?;
    // the rotation concentrates the mean in the last slice; drop it
    let samples: Vec<DenseTensor> =
        (0..n - 1).map(|l| z.last_mode_slice(l)).collect::<Result<_>>()?;
    Ok(TransformedGroup { samples, k_star, conditioning_warning: warning })
}
