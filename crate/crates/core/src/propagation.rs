//! Time evolution: exact (eigenbasis), Krylov, and piecewise-constant
//! time-dependent.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::BasisTag;
use crate::error::{Error, Result};
use crate::linalg::{dense_eigh, tridiagonal_eigh};
use crate::operators::{PxpFamily, SparseOperator};
use crate::sparse::LinearOperator;
use crate::state::{dot, norm, StateVector};

/// Largest dimension handled by dense diagonalization when the caller lets
/// the library choose.
pub const DENSE_LIMIT: usize = 4000;

const RESIDUAL_LIMIT: f64 = 1e-9;

/// Full spectral decomposition `H = V diag(values) V^dag`.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    tag: BasisTag,
    values: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

impl EigDecomposition {
    /// Dense diagonalization, validated by `max |H V - V Lambda| <= 1e-9`.
    pub fn new(h: &SparseOperator) -> Result<Self> {
        let (values, vectors) = dense_eigh(h);
        let eig = Self {
            tag: h.tag(),
            values,
            vectors,
        };
        let residual = eig.residual(h);
        if residual > RESIDUAL_LIMIT {
            return Err(Error::Solver { residual });
        }
        Ok(eig)
    }

    fn residual(&self, h: &SparseOperator) -> f64 {
        let dim = self.dim();
        let mut y = vec![Complex64::default(); dim];
        let mut worst: f64 = 0.0;
        for j in 0..dim {
            let col: Vec<Complex64> = self.vectors.column(j).iter().copied().collect();
            h.apply(&col, &mut y);
            for (a, b) in y.iter().zip(&col) {
                worst = worst.max((a - b * self.values[j]).norm());
            }
        }
        worst
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    /// Eigenvectors as columns, in the order of [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.vectors
    }

    pub fn eigenstate(&self, j: usize) -> StateVector {
        StateVector::new(self.tag, self.vectors.column(j).iter().copied().collect())
    }

    /// `c_j = <E_j|psi>`.
    pub fn coefficients(&self, psi: &StateVector) -> Result<Vec<Complex64>> {
        self.check(psi)?;
        let v = DVector::from_column_slice(psi.amplitudes());
        Ok(self.vectors.ad_mul(&v).iter().copied().collect())
    }

    /// `V exp(-i Lambda t) c`.
    pub fn synthesize(&self, coefficients: &[Complex64], t: f64) -> StateVector {
        let phased = DVector::from_iterator(
            self.dim(),
            coefficients
                .iter()
                .zip(&self.values)
                .map(|(c, e)| c * Complex64::from_polar(1.0, -e * t)),
        );
        StateVector::new(self.tag, (&self.vectors * phased).iter().copied().collect())
    }

    pub(crate) fn check(&self, psi: &StateVector) -> Result<()> {
        if psi.tag() != self.tag || psi.dim() != self.dim() {
            return Err(Error::Basis(format!(
                "state ({:?}, dim {}) does not match decomposition ({:?}, dim {})",
                psi.tag(),
                psi.dim(),
                self.tag,
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Uniform sampling `t_start, t_start + dt, ...` ending exactly at `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl TimeGrid {
    /// A zero-length grid (`t_end == t_start`) is accepted and holds one point.
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_end >= t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::Window {
                t0: t_start,
                t1: t_end,
            });
        }
        Ok(Self { t_start, t_end, dt })
    }

    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt - 1e-9)
            .ceil()
            .max(0.0) as usize
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.steps();
        let mut out: Vec<f64> = (0..n).map(|i| self.t_start + i as f64 * self.dt).collect();
        out.push(self.t_end);
        out
    }
}

/// `psi(t) = V exp(-i Lambda t) V^dag psi0` on every grid point.
pub fn evolve_exact(
    eig: &EigDecomposition,
    psi0: &StateVector,
    times: &TimeGrid,
) -> Result<Vec<StateVector>> {
    let c = eig.coefficients(psi0)?;
    Ok(times
        .points()
        .into_iter()
        .map(|t| eig.synthesize(&c, t - times.t_start))
        .collect())
}

/// Krylov dimension cap.
pub const KRYLOV_MAX: usize = 40;
const MAX_SUBSTEPS: usize = 1_000_000;

/// `exp(-i H t) psi0` with error at most `tol`.
pub fn evolve_krylov(
    h: &SparseOperator,
    psi0: &StateVector,
    t: f64,
    tol: f64,
) -> Result<StateVector> {
    if psi0.tag() != h.tag() || psi0.dim() != h.dim() {
        return Err(Error::Basis(
            "state and Hamiltonian live in different spaces".into(),
        ));
    }
    Ok(StateVector::new(
        psi0.tag(),
        expm_krylov(h, psi0.amplitudes(), t, tol)?,
    ))
}

/// Adaptive Lanczos exponential `exp(-i A t) v` for Hermitian `A`.
///
/// Substeps are accepted when the local error estimate
/// `beta_m |[exp(-i tau T_m) e_1]_m|` is below `tol * tau / |t|`.
pub fn expm_krylov<A: LinearOperator + ?Sized>(
    a: &A,
    v: &[Complex64],
    t: f64,
    tol: f64,
) -> Result<Vec<Complex64>> {
    let dim = a.dim();
    let mut w = v.to_vec();
    if t == 0.0 || dim == 0 {
        return Ok(w);
    }
    let total = t.abs();
    let sign = t.signum();
    let mut done = 0.0;
    let mut tau = total;
    let m_max = KRYLOV_MAX.min(dim);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m_max);
    let mut scratch = vec![Complex64::default(); dim];
    let mut substeps = 0;
    let mut last_err = 0.0;

    while done < total {
        substeps += 1;
        if substeps > MAX_SUBSTEPS {
            return Err(Error::Propagation { residual: last_err });
        }
        let beta0 = norm(&w);
        if beta0 == 0.0 {
            return Ok(w);
        }
        basis.clear();
        basis.push(w.iter().map(|x| x / beta0).collect());
        let mut alpha = Vec::with_capacity(m_max);
        let mut beta = Vec::with_capacity(m_max);
        let mut happy = false;
        let mut beta_m = 0.0;
        for j in 0..m_max {
            a.apply(&basis[j], &mut scratch);
            alpha.push(dot(&basis[j], &scratch).re);
            for _ in 0..2 {
                for q in basis.iter() {
                    let c = dot(q, &scratch);
                    for (s, qi) in scratch.iter_mut().zip(q) {
                        *s -= qi * c;
                    }
                }
            }
            let b = norm(&scratch);
            if b < 1e-12 * beta0.max(1.0) {
                happy = true;
                break;
            }
            if j + 1 == m_max {
                beta_m = b;
                break;
            }
            // Stop growing once the current space already meets the budget
            // for the step that would be tried first.
            if j + 1 >= 6 && j % 2 == 1 {
                let trial = tau.min(total - done);
                let (lambda, s) = tridiagonal_eigh(&alpha, &beta);
                let last: Complex64 = (0..=j)
                    .map(|c| {
                        s[(j, c)]
                            * s[(0, c)]
                            * Complex64::from_polar(1.0, -sign * lambda[c] * trial)
                    })
                    .sum();
                if b * last.norm() <= 0.5 * tol * trial / total {
                    beta_m = b;
                    break;
                }
            }
            beta.push(b);
            basis.push(scratch.iter().map(|x| x / b).collect());
        }
        let m = alpha.len();
        let (lambda, s) = tridiagonal_eigh(&alpha, &beta[..m - 1]);
        let remaining = total - done;
        let exp_e1 = |tau: f64| -> Vec<Complex64> {
            (0..m)
                .map(|r| {
                    (0..m)
                        .map(|c| {
                            s[(r, c)]
                                * s[(0, c)]
                                * Complex64::from_polar(1.0, -sign * lambda[c] * tau)
                        })
                        .sum()
                })
                .collect()
        };
        let (step, y) = if happy {
            (remaining, exp_e1(remaining))
        } else {
            tau = tau.min(remaining);
            loop {
                let y = exp_e1(tau);
                let err = beta_m * y[m - 1].norm();
                let budget = 0.5 * tol * tau / total;
                last_err = err;
                if err <= budget {
                    let grow = if err > 0.0 {
                        (budget / err).powf(1.0 / m as f64).min(2.0)
                    } else {
                        2.0
                    };
                    let accepted = tau;
                    tau *= grow.max(1.0);
                    break (accepted, y);
                }
                let shrink = (0.9 * (budget / err).powf(1.0 / m as f64)).clamp(0.1, 0.5);
                tau *= shrink;
                if tau < 1e-14 * total {
                    return Err(Error::Propagation { residual: err });
                }
            }
        };
        let mut next = vec![Complex64::default(); dim];
        for (q, &c) in basis.iter().zip(&y) {
            let c = c * beta0;
            for (n, qi) in next.iter_mut().zip(q) {
                *n += qi * c;
            }
        }
        w = next;
        done += step;
        if happy {
            break;
        }
    }
    Ok(w)
}

/// Evolves under `H(mu(t))` with `mu` frozen at the midpoint of each grid
/// step. `observe` sees the state at every grid point, starting with `psi0`.
pub fn evolve_time_dependent_observed<F, O>(
    schedule: F,
    family: &PxpFamily,
    psi0: &StateVector,
    grid: &TimeGrid,
    tol: f64,
    mut observe: O,
) -> Result<StateVector>
where
    F: Fn(f64) -> Result<f64>,
    O: FnMut(f64, &StateVector),
{
    if psi0.tag() != family.tag() || psi0.dim() != family.dim() {
        return Err(Error::Basis(
            "state and Hamiltonian family live in different spaces".into(),
        ));
    }
    let points = grid.points();
    let mut psi = psi0.clone();
    observe(points[0], &psi);
    let per_step = tol / points.len().max(1) as f64;
    for w in points.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mu = schedule(0.5 * (t0 + t1))?;
        if !mu.is_finite() {
            return Err(Error::Schedule(format!(
                "non-finite chemical potential at t = {}",
                0.5 * (t0 + t1)
            )));
        }
        let amps = expm_krylov(
            &family.at(mu),
            psi.amplitudes(),
            t1 - t0,
            per_step.max(1e-14),
        )?;
        psi = StateVector::new(psi.tag(), amps);
        observe(t1, &psi);
    }
    Ok(psi)
}

/// [`evolve_time_dependent_observed`] without intermediate output.
pub fn evolve_time_dependent<F>(
    schedule: F,
    family: &PxpFamily,
    psi0: &StateVector,
    grid: &TimeGrid,
    tol: f64,
) -> Result<StateVector>
where
    F: Fn(f64) -> Result<f64>,
{
    evolve_time_dependent_observed(schedule, family, psi0, grid, tol, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{
        build_sector, enumerate_basis, BoundaryCondition, ConstrainedBasis, HilbertSpace, Inversion,
    };
    use crate::operators::{build_pxp, HamiltonianParams};

    fn setup(n: usize, mu: f64) -> (ConstrainedBasis, SparseOperator) {
        let basis = enumerate_basis(n, BoundaryCondition::Periodic).unwrap();
        let h = build_pxp(
            &basis,
            &HamiltonianParams::new(mu, BoundaryCondition::Periodic),
        )
        .unwrap();
        (basis, h)
    }

    fn distance(a: &StateVector, b: &StateVector) -> f64 {
        a.amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn grid_points_end_exactly() {
        let g = TimeGrid::new(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        let g = TimeGrid::new(0.0, 20.0, 0.05).unwrap();
        assert_eq!(g.points().len(), 401);
        assert_eq!(TimeGrid::new(2.0, 2.0, 0.1).unwrap().points(), vec![2.0]);
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn exact_evolution_basics() {
        let (basis, h) = setup(10, 0.4);
        let eig = EigDecomposition::new(&h).unwrap();
        let psi0 = basis.z2().unwrap();
        let states = evolve_exact(&eig, &psi0, &TimeGrid::new(0.0, 3.0, 0.5).unwrap()).unwrap();
        assert!(distance(&states[0], &psi0) < 1e-12);
        for s in &states {
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
        let e3 = eig.eigenstate(3);
        for s in evolve_exact(&eig, &e3, &TimeGrid::new(0.0, 5.0, 1.0).unwrap()).unwrap() {
            assert!((e3.overlap(&s).unwrap().norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn krylov_matches_exact() {
        let (basis, h) = setup(12, 0.6);
        let eig = EigDecomposition::new(&h).unwrap();
        let psi0 = basis.z2().unwrap();
        let exact = evolve_exact(&eig, &psi0, &TimeGrid::new(0.0, 20.0, 20.0).unwrap()).unwrap();
        let kry = evolve_krylov(&h, &psi0, 20.0, 1e-9).unwrap();
        assert!(
            distance(&exact[1], &kry) < 1e-8,
            "{}",
            distance(&exact[1], &kry)
        );
        assert!((kry.norm() - 1.0).abs() < 1e-9);
        let back = evolve_krylov(&h, &kry, -20.0, 1e-9).unwrap();
        assert!(distance(&back, &psi0) < 2e-9);
    }

    #[test]
    fn krylov_on_diagonal_gives_phases() {
        let basis = enumerate_basis(8, BoundaryCondition::Periodic).unwrap();
        let family = PxpFamily::new(&basis);
        let diag = family.build(1.3);
        let k = crate::sparse::CsrMatrix::<f64>::from_rows(basis.dim(), |i, out| {
            out.push((i, diag.get(i, i).re));
        });
        let h = SparseOperator::new(basis.tag(), crate::operators::OperatorMatrix::Real(k));
        let amps: Vec<f64> = (0..basis.dim()).map(|i| 1.0 + i as f64).collect();
        let psi = StateVector::from_real(basis.tag(), &amps).normalized();
        let out = evolve_krylov(&h, &psi, 2.5, 1e-10).unwrap();
        for (i, (a, b)) in out.amplitudes().iter().zip(psi.amplitudes()).enumerate() {
            let e = 1.3 * basis.state(i).count_ones() as f64;
            assert!((a - b * Complex64::from_polar(1.0, -e * 2.5)).norm() < 1e-10);
        }
    }

    #[test]
    fn krylov_in_complex_sector() {
        let basis = enumerate_basis(12, BoundaryCondition::Periodic).unwrap();
        let sector = build_sector(&basis, 5, Inversion::None).unwrap();
        let h = build_pxp(
            &sector,
            &HamiltonianParams::new(-0.3, BoundaryCondition::Periodic),
        )
        .unwrap();
        let eig = EigDecomposition::new(&h).unwrap();
        let amps: Vec<f64> = (0..sector.dim()).map(|i| (i as f64 * 1.7).cos()).collect();
        let psi = StateVector::from_real(sector.tag(), &amps).normalized();
        let exact = eig.synthesize(&eig.coefficients(&psi).unwrap(), 7.0);
        let kry = evolve_krylov(&h, &psi, 7.0, 1e-10).unwrap();
        assert!(distance(&exact, &kry) < 1e-9);
    }

    #[test]
    fn time_dependent_constant_schedule() {
        let (basis, h) = setup(10, -0.8);
        let family = PxpFamily::new(&basis);
        let psi0 = basis.z2().unwrap();
        let grid = TimeGrid::new(0.0, 3.0, 0.1).unwrap();
        let td = evolve_time_dependent(|_| Ok(-0.8), &family, &psi0, &grid, 1e-10).unwrap();
        let st = evolve_krylov(&h, &psi0, 3.0, 1e-10).unwrap();
        assert!(distance(&td, &st) < 1e-8);
        let zero = TimeGrid::new(1.0, 1.0, 0.1).unwrap();
        assert_eq!(
            evolve_time_dependent(|_| Ok(0.0), &family, &psi0, &zero, 1e-10).unwrap(),
            psi0
        );
        let bad = evolve_time_dependent(|_| Ok(f64::NAN), &family, &psi0, &grid, 1e-10);
        assert!(matches!(bad, Err(Error::Schedule(_))));
    }
}
