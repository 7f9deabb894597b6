//! Dense K-th order tensors with fibers, matricization, k-mode products,
//! Tucker products and observation stacking.
//!
//! Layout convention: data is flattened with the LAST index varying fastest,
//! i.e. element (i_1, ..., i_K) lives at offset
//! sum_k i_k * prod_{k' > k} m_{k'} (all indices 0-based).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real tensor of arbitrary order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Builds a tensor from a shape and flat data (last index fastest).
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Shape("tensor order must be >= 1".into()));
        }
        if shape.iter().any(|&m| m == 0) {
            return Err(Error::Shape("all mode sizes must be >= 1".into()));
        }
        let m: usize = shape.iter().product();
        if data.len() != m {
            return Err(Error::Shape(format!(
                "data length {} does not match shape product {}",
                data.len(),
                m
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    /// All-zero tensor.
    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let m: usize = shape.iter().product();
        DenseTensor::new(shape, vec![0.0; m])
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Flat offset of a multi-index (last index fastest).
    pub fn offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.order() {
            return Err(Error::Index(format!(
                "index has {} entries, tensor order is {}",
                idx.len(),
                self.order()
            )));
        }
        let mut off = 0usize;
        for (k, (&i, &mk)) in idx.iter().zip(&self.shape).enumerate() {
            if i >= mk {
                return Err(Error::Index(format!("index {} out of range for mode {}", i, k)));
            }
            off = off * mk + i;
        }
        Ok(off)
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(idx)?])
    }

    /// Mode-k fiber at the given fixed indices of the other modes.
    ///
    /// `fixed` lists the indices for modes 0..K excluding k, in mode order.
    pub fn fiber(&self, k: usize, fixed: &[usize]) -> Result<Vec<f64>> {
        let order = self.order();
        if k >= order {
            return Err(Error::Index(format!("mode {} out of range for order {}", k, order)));
        }
        if fixed.len() != order - 1 {
            return Err(Error::Index(format!(
                "expected {} fixed indices, got {}",
                order - 1,
                fixed.len()
            )));
        }
        let mut idx = Vec::with_capacity(order);
        let mut it = fixed.iter();
        for mode in 0..order {
            if mode == k {
                idx.push(0);
            } else {
                idx.push(*it.next().unwrap());
            }
        }
        let base = self.offset(&idx)?;
        let stride: usize = self.shape[k + 1..].iter().product();
        Ok((0..self.shape[k]).map(|i| self.data[base + i * stride]).collect())
    }

    /// Mode-k unfolding: an m_k x (m/m_k) matrix whose columns are all mode-k
    /// fibers, ordered lexicographically over the remaining modes (last
    /// remaining index fastest).
    pub fn matricize(&self, k: usize) -> Result<DMatrix<f64>> {
        let order = self.order();
        if k >= order {
            return Err(Error::Index(format!("mode {} out of range for order {}", k, order)));
        }
        let mk = self.shape[k];
        let inner: usize = self.shape[k + 1..].iter().product();
        let outer: usize = self.shape[..k].iter().product();
        let ncols = outer * inner;
        let mut out = DMatrix::zeros(mk, ncols);
        for o in 0..outer {
            for i in 0..mk {
                let base = (o * mk + i) * inner;
                for c in 0..inner {
                    out[(i, o * inner + c)] = self.data[base + c];
                }
            }
        }
        Ok(out)
    }

    /// k-mode product with a J x m_k matrix; mode k is resized to J.
    pub fn mode_product(&self, k: usize, a: &DMatrix<f64>) -> Result<DenseTensor> {
        let order = self.order();
        if k >= order {
            return Err(Error::Index(format!("mode {} out of range for order {}", k, order)));
        }
        let mk = self.shape[k];
        if a.ncols() != mk {
            return Err(Error::Shape(format!(
                "matrix has {} columns, mode {} has size {}",
                a.ncols(),
                k,
                mk
            )));
        }
        let j_dim = a.nrows();
        let inner: usize = self.shape[k + 1..].iter().product();
        let outer: usize = self.shape[..k].iter().product();
        let mut shape = self.shape.clone();
        shape[k] = j_dim;
        let mut out = vec![0.0; outer * j_dim * inner];
        for o in 0..outer {
            let in_base = o * mk * inner;
            let out_base = o * j_dim * inner;
            for ik in 0..mk {
                let src = &self.data[in_base + ik * inner..in_base + (ik + 1) * inner];
                for j in 0..j_dim {
                    let w = a[(j, ik)];
                    if w == 0.0 {
                        continue;
                    }
                    let dst = &mut out[out_base + j * inner..out_base + (j + 1) * inner];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        DenseTensor::new(shape, out)
    }

    /// Tucker product: left-to-right chain of mode products. `None` entries
    /// skip the corresponding mode (identity).
    pub fn tucker(&self, mats: &[Option<&DMatrix<f64>>]) -> Result<DenseTensor> {
        if mats.len() != self.order() {
            return Err(Error::Shape(format!(
                "expected {} matrices, got {}",
                self.order(),
                mats.len()
            )));
        }
        let mut out = self.clone();
        for (k, m) in mats.iter().enumerate() {
            if let Some(a) = m {
                out = out.mode_product(k, a)?;
            }
        }
        Ok(out)
    }

    /// Slice of the last mode at index l (an order K-1 tensor), inverse of
    /// `stack` for the observation mode.
    pub fn last_mode_slice(&self, l: usize) -> Result<DenseTensor> {
        let order = self.order();
        if order < 2 {
            return Err(Error::Shape("cannot slice an order-1 tensor".into()));
        }
        let n = self.shape[order - 1];
        if l >= n {
            return Err(Error::Index(format!("slice {} out of range for last mode {}", l, n)));
        }
        let shape = self.shape[..order - 1].to_vec();
        let m: usize = shape.iter().product();
        let mut data = Vec::with_capacity(m);
        for r in 0..m {
            data.push(self.data[r * n + l]);
        }
        DenseTensor::new(shape, data)
    }
}

/// Stacks n same-shape tensors into an order K+1 tensor with last mode size n.
pub fn stack(obs: &[DenseTensor]) -> Result<DenseTensor> {
    let first = obs
        .first()
        .ok_or_else(|| Error::Shape("cannot stack an empty observation list".into()))?;
    for (l, t) in obs.iter().enumerate() {
        if t.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "observation {} has shape {:?}, expected {:?}",
                l,
                t.shape(),
                first.shape()
            )));
        }
    }
    let n = obs.len();
    let m = first.len();
    let mut shape = first.shape().to_vec();
    shape.push(n);
    let mut data = vec![0.0; m * n];
    for (l, t) in obs.iter().enumerate() {
        for (r, &v) in t.data().iter().enumerate() {
            data[r * n + l] = v;
        }
    }
    DenseTensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> DenseTensor {
        let m: usize = shape.iter().product();
        let data = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseTensor::new(shape.to_vec(), data).unwrap()
    }

    fn random_matrix(r: usize, c: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn shape_data_mismatch_rejected() {
        assert!(DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![], vec![]).is_err());
    }

    #[test]
    fn matrix_column_is_mode_1_fiber() {
        // [[1,2],[3,4]] row-major; column 0 (0-based) is (1,3).
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.fiber(0, &[0]).unwrap(), vec![1.0, 3.0]);
        assert_eq!(t.fiber(1, &[1]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn last_index_fastest_layout() {
        let t = DenseTensor::new(vec![2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
        assert_eq!(t.fiber(2, &[0, 0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(t.fiber(0, &[0, 0]).unwrap(), vec![1.0, 5.0]);
    }

    #[test]
    fn fiber_matches_element_lookup() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_tensor(&[3, 2, 4], &mut rng);
        for k in 0..3 {
            let others: Vec<usize> = (0..3).filter(|&m| m != k).collect();
            for a in 0..t.shape()[others[0]] {
                for b in 0..t.shape()[others[1]] {
                    let f = t.fiber(k, &[a, b]).unwrap();
                    for i in 0..t.shape()[k] {
                        let mut idx = [0usize; 3];
                        idx[k] = i;
                        idx[others[0]] = a;
                        idx[others[1]] = b;
                        assert_eq!(f[i], t.get(&idx).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn fiber_out_of_range_errors() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(t.fiber(2, &[0]).is_err());
        assert!(t.fiber(0, &[2]).is_err());
        assert!(t.fiber(0, &[0, 0]).is_err());
    }

    #[test]
    fn matricize_identity_and_transpose() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m1 = t.matricize(0).unwrap();
        assert_eq!(m1, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let m2 = t.matricize(1).unwrap();
        assert_eq!(m2, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
    }

    #[test]
    fn matricize_agrees_with_fiber_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = random_tensor(&[3, 2, 2], &mut rng);
        for k in 0..3 {
            let unf = t.matricize(k).unwrap();
            let others: Vec<usize> = (0..3).filter(|&m| m != k).collect();
            let mut col = 0usize;
            for a in 0..t.shape()[others[0]] {
                for b in 0..t.shape()[others[1]] {
                    let f = t.fiber(k, &[a, b]).unwrap();
                    for i in 0..t.shape()[k] {
                        assert_eq!(unf[(i, col)], f[i]);
                    }
                    col += 1;
                }
            }
            assert_eq!(col, unf.ncols());
        }
    }

    #[test]
    fn mode_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = random_tensor(&[3, 2, 4], &mut rng);
        for k in 0..3 {
            let id = DMatrix::identity(t.shape()[k], t.shape()[k]);
            assert_eq!(t.mode_product(k, &id).unwrap(), t);
        }
    }

    #[test]
    fn mode_product_is_matrix_multiplication_on_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = random_tensor(&[3, 2], &mut rng);
        let a = random_matrix(4, 3, &mut rng);
        let res = t.mode_product(0, &a).unwrap();
        let expected = &a * t.matricize(0).unwrap();
        let got = res.matricize(0).unwrap();
        for (x, y) in got.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn same_mode_products_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let t = random_tensor(&[3, 2, 2], &mut rng);
        let a = random_matrix(4, 3, &mut rng);
        let b = random_matrix(2, 4, &mut rng);
        let lhs = t.mode_product(0, &a).unwrap().mode_product(0, &b).unwrap();
        let rhs = t.mode_product(0, &(&b * &a)).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn distinct_mode_products_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t = random_tensor(&[3, 2, 4], &mut rng);
        let a = random_matrix(2, 3, &mut rng);
        let b = random_matrix(3, 2, &mut rng);
        let lhs = t.mode_product(0, &a).unwrap().mode_product(1, &b).unwrap();
        let rhs = t.mode_product(1, &b).unwrap().mode_product(0, &a).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn tucker_matches_chained_mode_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let t = random_tensor(&[3, 2, 4], &mut rng);
        let a = random_matrix(2, 3, &mut rng);
        let b = random_matrix(3, 4, &mut rng);
        let lhs = t.tucker(&[Some(&a), None, Some(&b)]).unwrap();
        let rhs = t.mode_product(0, &a).unwrap().mode_product(2, &b).unwrap();
        assert_eq!(lhs, rhs);
        assert_eq!(t.tucker(&[None, None, None]).unwrap(), t);
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let t = DenseTensor::zeros(vec![3, 2]).unwrap();
        let a = DMatrix::zeros(2, 4);
        assert!(t.mode_product(0, &a).is_err());
    }

    #[test]
    fn stack_and_slice_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let obs: Vec<DenseTensor> = (0..3).map(|_| random_tensor(&[2, 3], &mut rng)).collect();
        let s = stack(&obs).unwrap();
        assert_eq!(s.shape(), &[2, 3, 3]);
        for (l, t) in obs.iter().enumerate() {
            assert_eq!(&s.last_mode_slice(l).unwrap(), t);
        }
    }

    #[test]
    fn stack_single_observation() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = stack(std::slice::from_ref(&t)).unwrap();
        assert_eq!(s.shape(), &[2, 2, 1]);
        assert_eq!(s.last_mode_slice(0).unwrap(), t);
    }

    #[test]
    fn stack_heterogeneous_shapes_rejected() {
        let a = DenseTensor::zeros(vec![2, 2]).unwrap();
        let b = DenseTensor::zeros(vec![2, 3]).unwrap();
        assert!(stack(&[a, b]).is_err());
    }
}
