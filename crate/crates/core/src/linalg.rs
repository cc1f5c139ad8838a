//! Dense and Krylov eigensolvers.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::{OperatorMatrix, SparseOperator};
use crate::sparse::LinearOperator;
use crate::state::{dot, norm};

/// Eigenvalues and orthonormal eigenvectors (columns), ascending.
pub fn dense_eigh(op: &SparseOperator) -> (Vec<f64>, DMatrix<Complex64>) {
    let dim = op.tag_dim();
    match op.matrix() {
        OperatorMatrix::Real(m) => {
            let mut a = DMatrix::<f64>::zeros(dim, dim);
            for (i, j, v) in m.triplets() {
                a[(i, j)] = v;
            }
            let eig = SymmetricEigen::new(a);
            let order = ascending(eig.eigenvalues.as_slice());
            let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let vectors = DMatrix::from_fn(dim, dim, |r, c| {
                Complex64::new(eig.eigenvectors[(r, order[c])], 0.0)
            });
            (values, vectors)
        }
        OperatorMatrix::Complex(m) => {
            let eig = SymmetricEigen::new(m.to_dense());
            let order = ascending(eig.eigenvalues.as_slice());
            let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
            (values, vectors)
        }
    }
}

/// Sorted spectrum only.
pub fn dense_eigenvalues(op: &SparseOperator) -> Vec<f64> {
    let dim = op.tag_dim();
    let mut values: Vec<f64> = match op.matrix() {
        OperatorMatrix::Real(m) => {
            let mut a = DMatrix::<f64>::zeros(dim, dim);
            for (i, j, v) in m.triplets() {
                a[(i, j)] = v;
            }
            a.symmetric_eigenvalues().iter().copied().collect()
        }
        OperatorMatrix::Complex(m) => SymmetricEigen::new(m.to_dense())
            .eigenvalues
            .iter()
            .copied()
            .collect(),
    };
    values.sort_by(f64::total_cmp);
    values
}

fn ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

impl SparseOperator {
    fn tag_dim(&self) -> usize {
        LinearOperator::dim(self)
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix given by its diagonal
/// and off-diagonal.
pub fn tridiagonal_eigh(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let order = ascending(eig.eigenvalues.as_slice());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Settings for [`lowest_eigenpairs`].
#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub count: usize,
    /// Required residual `||A y - lambda y||` of every returned pair.
    pub tol: f64,
    pub max_krylov: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            count: 1,
            tol: 1e-10,
            max_krylov: 300,
            max_restarts: 20,
            seed: 0x5ca2_5eed,
        }
    }
}

/// Lowest `count` eigenpairs by Lanczos with full reorthogonalization.
///
/// Restarts from the sum of the wanted Ritz vectors when the Krylov space
/// reaches `max_krylov` without convergence.
pub fn lowest_eigenpairs<A: LinearOperator + ?Sized>(
    op: &A,
    opts: LanczosOptions,
) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    let dim = op.dim();
    let count = opts.count.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, 0.0))
        .collect();
    let mut last_residual = f64::INFINITY;

    for _ in 0..=opts.max_restarts {
        let (values, vectors) = lanczos_pass(
            op,
            &start,
            count,
            opts.tol,
            opts.max_krylov.max(count + 2),
            &mut rng,
        );
        let mut worst: f64 = 0.0;
        let mut y = vec![Complex64::default(); dim];
        for (v, x) in values.iter().zip(&vectors) {
            op.apply(x, &mut y);
            let r = y
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b * v).norm_sqr())
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r);
        }
        last_residual = worst;
        if worst <= opts.tol && values.len() == count {
            return Ok((values, vectors));
        }
        start = vec![Complex64::default(); dim];
        for x in &vectors {
            for (s, a) in start.iter_mut().zip(x) {
                *s += a;
            }
        }
    }
    Err(Error::Solver {
        residual: last_residual,
    })
}

fn lanczos_pass<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[Complex64],
    count: usize,
    tol: f64,
    max_krylov: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let dim = op.dim();
    let max_krylov = max_krylov.min(dim);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(max_krylov);
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut v = start.to_vec();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![Complex64::default(); dim];
    let check_every = 10;

    loop {
        op.apply(&v, &mut w);
        let a = dot(&v, &w).re;
        alpha.push(a);
        basis.push(std::mem::take(&mut v));
        orthogonalize(&mut w, &basis);
        let mut b = norm(&w);
        let m = basis.len();
        if m >= max_krylov {
            let (values, vecs) = tridiagonal_eigh(&alpha, &beta);
            return ritz(&basis, &values, &vecs, count);
        }
        if b < 1e-12 {
            // Invariant subspace: the Ritz pairs found so far are exact. Continue
            // with a fresh orthogonal direction if more levels are requested.
            if m >= count {
                let (values, vecs) = tridiagonal_eigh(&alpha, &beta);
                return ritz(&basis, &values, &vecs, count);
            }
            w.iter_mut()
                .for_each(|x| *x = Complex64::new(rng.random::<f64>() - 0.5, 0.0));
            orthogonalize(&mut w, &basis);
            let nw = norm(&w);
            w.iter_mut().for_each(|x| *x /= nw);
            beta.push(0.0);
            v = w.clone();
            continue;
        }
        if m >= count && m % check_every == 0 {
            let (values, vecs) = tridiagonal_eigh(&alpha, &beta);
            if (0..count).all(|i| (b * vecs[(m - 1, i)]).abs() < 0.1 * tol) {
                return ritz(&basis, &values, &vecs, count);
            }
        }
        beta.push(b);
        b = 1.0 / b;
        v = w.iter().map(|x| x * b).collect();
    }
}

/// Two passes of classical Gram-Schmidt against `basis`.
fn orthogonalize(w: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= qi * c;
            }
        }
    }
}

fn ritz(
    basis: &[Vec<Complex64>],
    values: &[f64],
    vecs: &DMatrix<f64>,
    count: usize,
) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let dim = basis[0].len();
    let count = count.min(values.len());
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut y = vec![Complex64::default(); dim];
        for (j, q) in basis.iter().enumerate() {
            let c = vecs[(j, i)];
            if c != 0.0 {
                for (yi, qi) in y.iter_mut().zip(q) {
                    *yi += qi * c;
                }
            }
        }
        let n = norm(&y);
        y.iter_mut().for_each(|x| *x /= n);
        out.push(y);
    }
    (values[..count].to_vec(), out)
}
