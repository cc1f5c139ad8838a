//! Compressed-row storage and the matrix-free operator interface used by the
//! eigensolvers and propagators.

use num_complex::Complex64;
use rayon::prelude::*;

/// Rows below this size are applied serially.
const PAR_THRESHOLD: usize = 1 << 14;

/// Anything that can act on a complex vector.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`.
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

/// Matrix entry types supported by [`CsrMatrix`].
pub trait Entry: Copy + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    fn to_c64(self) -> Complex64;
    fn conj(self) -> Self;
    fn zero() -> Self;
}

impl Entry for f64 {
    #[inline]
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn conj(self) -> Self {
        self
    }
    fn zero() -> Self {
        0.0
    }
}

impl Entry for Complex64 {
    #[inline]
    fn to_c64(self) -> Complex64 {
        self
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<T>,
}

impl<T: Entry> CsrMatrix<T> {
    /// Builds from per-row entry lists; duplicate columns within a row are summed
    /// and explicit zeros dropped.
    pub fn from_rows(dim: usize, mut rows: impl FnMut(usize, &mut Vec<(usize, T)>)) -> Self
    where
        T: std::ops::Add<Output = T>,
    {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut buf = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            buf.clear();
            rows(i, &mut buf);
            buf.sort_by_key(|&(c, _)| c);
            let mut j = 0;
            while j < buf.len() {
                let (c, mut v) = buf[j];
                j += 1;
                while j < buf.len() && buf[j].0 == c {
                    v = v + buf[j].1;
                    j += 1;
                }
                if v != T::zero() {
                    col_idx.push(c as u32);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .map(|&c| c as usize)
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&(j as u32)) {
            Ok(p) => self.values[r.start + p],
            Err(_) => T::zero(),
        }
    }

    /// Iterates over all stored `(row, col, value)` triples.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Largest deviation from Hermiticity, `max |A_ij - conj(A_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v.to_c64() - self.get(j, i).conj().to_c64()).norm())
            .fold(0.0, f64::max)
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += self.values[p].to_c64() * x[self.col_idx[p] as usize];
        }
        acc
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v.to_c64();
        }
        m
    }
}

impl<T: Entry> LinearOperator for CsrMatrix<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        if self.dim >= PAR_THRESHOLD {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x);
            }
        }
    }
}

/// `A + shift * diag(d)` without materializing the sum.
pub struct DiagonalShift<'a, A: LinearOperator> {
    pub base: &'a A,
    pub diagonal: &'a [f64],
    pub shift: f64,
}

impl<A: LinearOperator> LinearOperator for DiagonalShift<'_, A> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.base.apply(x, y);
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(self.diagonal) {
            *yi += xi * (self.shift * d);
        }
    }
}
