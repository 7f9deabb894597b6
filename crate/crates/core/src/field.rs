//! Upper-triangular fields over the hypothesis set {(i, j): i < j}.

use crate::error::{Error, Result};

/// Values indexed by the strict upper triangle of an m x m grid,
/// stored in (i, j) lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTri<T> {
    size: usize,
    vals: Vec<T>,
}

/// Number of strict upper-triangle pairs for dimension m.
pub fn pair_count(m: usize) -> usize {
    m * (m.saturating_sub(1)) / 2
}

impl<T: Copy + Default> UpperTri<T> {
    pub fn new(size: usize) -> Self {
        UpperTri { size, vals: vec![T::default(); pair_count(size)] }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut vals = Vec::with_capacity(pair_count(size));
        for i in 0..size {
            for j in i + 1..size {
                vals.push(f(i, j));
            }
        }
        UpperTri { size, vals }
    }

    pub fn from_values(size: usize, vals: Vec<T>) -> Result<Self> {
        if vals.len() != pair_count(size) {
            return Err(Error::Shape(format!(
                "expected {} upper-triangle values for size {}, got {}",
                pair_count(size),
                size,
                vals.len()
            )));
        }
        Ok(UpperTri { size, vals })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.size);
        i * (2 * self.size - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.vals[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.idx(i, j);
        self.vals[k] = v;
    }

    pub fn values(&self) -> &[T] {
        &self.vals
    }

    /// Iterates (i, j, value) in lexicographic order.
    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let size = self.size;
        (0..size)
            .flat_map(move |i| (i + 1..size).map(move |j| (i, j)))
            .zip(self.vals.iter())
            .map(|((i, j), &v)| (i, j, v))
    }

    /// The (i, j) pair at flat position k.
    pub fn pair_at(&self, k: usize) -> (usize, usize) {
        let mut i = 0usize;
        let mut rem = k;
        loop {
            let row = self.size - i - 1;
            if rem < row {
                return (i, i + 1 + rem);
            }
            rem -= row;
            i += 1;
        }
    }
}
