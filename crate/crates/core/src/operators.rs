//! PXP Hamiltonians with uniform or unit-cell modulated chemical potential,
//! plus the diagonal unitaries used alongside them.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{
    is_legal, BasisTag, BoundaryCondition, ConstrainedBasis, HilbertSpace, SymmetrySector,
};
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, DiagonalShift, LinearOperator};
use crate::state::StateVector;

/// Critical chemical potential of the Ising transition of the ground state.
pub const MU_CRITICAL: f64 = -1.31;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianParams {
    /// Rabi frequency; 1 in every reproduction run.
    pub omega: f64,
    pub mu: f64,
    pub bc: BoundaryCondition,
}

impl HamiltonianParams {
    pub fn new(mu: f64, bc: BoundaryCondition) -> Self {
        Self { omega: 1.0, mu, bc }
    }
}

/// Unit-cell periodic chemical potential `w` and phase-pulse angles `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulatedParams {
    pub w: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ModulatedParams {
    pub fn uniform(mu: f64) -> Self {
        Self {
            w: vec![mu],
            gamma: vec![0.0],
        }
    }

    pub fn cell(&self) -> usize {
        self.w.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorMatrix {
    Real(CsrMatrix<f64>),
    Complex(CsrMatrix<Complex64>),
}

/// A Hamiltonian or observable in sparse form, tagged with its space.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    tag: BasisTag,
    matrix: OperatorMatrix,
}

impl SparseOperator {
    pub fn new(tag: BasisTag, matrix: OperatorMatrix) -> Self {
        Self { tag, matrix }
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    pub fn nnz(&self) -> usize {
        match &self.matrix {
            OperatorMatrix::Real(m) => m.nnz(),
            OperatorMatrix::Complex(m) => m.nnz(),
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self.matrix, OperatorMatrix::Real(_))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match &self.matrix {
            OperatorMatrix::Real(m) => Complex64::new(m.get(i, j), 0.0),
            OperatorMatrix::Complex(m) => m.get(i, j),
        }
    }

    pub fn hermiticity_error(&self) -> f64 {
        match &self.matrix {
            OperatorMatrix::Real(m) => m.hermiticity_error(),
            OperatorMatrix::Complex(m) => m.hermiticity_error(),
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        match &self.matrix {
            OperatorMatrix::Real(m) => m
                .triplets()
                .map(|(i, j, v)| (i, j, Complex64::new(v, 0.0)))
                .collect(),
            OperatorMatrix::Complex(m) => m.triplets().collect(),
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        match &self.matrix {
            OperatorMatrix::Real(m) => m.to_dense(),
            OperatorMatrix::Complex(m) => m.to_dense(),
        }
    }

    /// `<psi|A|psi>` for a state in the operator's space.
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        if psi.tag() != self.tag || psi.dim() != self.dim() {
            return Err(Error::Basis(
                "state and operator live in different spaces".into(),
            ));
        }
        let mut y = vec![Complex64::default(); self.dim()];
        self.apply(psi.amplitudes(), &mut y);
        Ok(crate::state::dot(psi.amplitudes(), &y).re)
    }

    /// Writes the operator in Matrix Market coordinate format (1-based).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let trip = self.triplets();
        let field = if self.is_real() { "real" } else { "complex" };
        writeln!(out, "%%MatrixMarket matrix coordinate {field} general")?;
        writeln!(out, "% {:?}", self.tag)?;
        writeln!(out, "{} {} {}", self.dim(), self.dim(), trip.len())?;
        for (i, j, v) in trip {
            if self.is_real() {
                writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v.re)?;
            } else {
                writeln!(out, "{} {} {:.17e} {:.17e}", i + 1, j + 1, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        match &self.matrix {
            OperatorMatrix::Real(m) => m.dim(),
            OperatorMatrix::Complex(m) => m.dim(),
        }
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        match &self.matrix {
            OperatorMatrix::Real(m) => m.apply(x, y),
            OperatorMatrix::Complex(m) => m.apply(x, y),
        }
    }
}

/// Spaces on which the PXP flip term can be assembled.
pub trait PxpSpace: HilbertSpace {
    fn boundary(&self) -> BoundaryCondition;

    /// The kinetic term `sum_j P X_j P` alone.
    fn kinetic_matrix(&self) -> OperatorMatrix;
}

impl PxpSpace for ConstrainedBasis {
    fn boundary(&self) -> BoundaryCondition {
        self.bc()
    }

    fn kinetic_matrix(&self) -> OperatorMatrix {
        let n = self.n_sites();
        let bc = self.bc();
        OperatorMatrix::Real(CsrMatrix::from_rows(self.dim(), |i, out| {
            let s = self.state(i);
            for j in 0..n {
                let t = s ^ (1u32 << j);
                if is_legal(t, n, bc) {
                    out.push((
                        self.index_of(t)
                            .expect("legal configurations are enumerated"),
                        1.0,
                    ));
                }
            }
        }))
    }
}

impl PxpSpace for SymmetrySector {
    fn boundary(&self) -> BoundaryCondition {
        BoundaryCondition::Periodic
    }

    fn kinetic_matrix(&self) -> OperatorMatrix {
        let n = self.n_sites();
        let momentum = self.momentum();
        let p = self.inversion().sign().unwrap_or(1.0);
        let norms = self.norms();
        let reps = self.representatives();
        let element = |a: usize, out: &mut Vec<(usize, Complex64)>| {
            let s = reps[a];
            for j in 0..n {
                let t = s ^ (1u32 << j);
                if !is_legal(t, n, BoundaryCondition::Periodic) {
                    continue;
                }
                let loc = self.locate(t);
                let Some(b) = self.index_of(loc.rep) else {
                    continue;
                };
                let sign = if loc.reflected { p } else { 1.0 };
                let amp = sign * (norms[b] / norms[a]).sqrt();
                // Row a holds <a|H|b> = conj(<b|H|a>).
                out.push((b, Complex64::from_polar(amp, momentum * loc.shift as f64)));
            }
        };
        if self.k() == 0 || 2 * self.k() == n {
            let mut buf = Vec::new();
            OperatorMatrix::Real(CsrMatrix::from_rows(self.dim(), |a, out| {
                buf.clear();
                element(a, &mut buf);
                out.extend(buf.iter().map(|&(b, v)| (b, v.re)));
            }))
        } else {
            OperatorMatrix::Complex(CsrMatrix::from_rows(self.dim(), element))
        }
    }
}

/// `H(mu) = K + mu * D` with the kinetic part `K` and excitation count `D`
/// stored separately so that `mu` can vary cheaply.
#[derive(Debug, Clone)]
pub struct PxpFamily {
    kinetic: SparseOperator,
    excitations: Vec<f64>,
}

impl PxpFamily {
    pub fn new<S: PxpSpace>(space: &S) -> Self {
        let excitations = (0..space.dim())
            .map(|i| space.excitations(i) as f64)
            .collect();
        Self {
            kinetic: SparseOperator::new(space.tag(), space.kinetic_matrix()),
            excitations,
        }
    }

    pub fn tag(&self) -> BasisTag {
        self.kinetic.tag()
    }

    pub fn dim(&self) -> usize {
        self.excitations.len()
    }

    pub fn n_sites(&self) -> usize {
        self.tag().n_sites()
    }

    pub fn kinetic(&self) -> &SparseOperator {
        &self.kinetic
    }

    /// Diagonal of `sum_j Q_j`.
    pub fn excitations(&self) -> &[f64] {
        &self.excitations
    }

    /// Matrix-free view of `H(mu)`.
    pub fn at(&self, mu: f64) -> DiagonalShift<'_, SparseOperator> {
        DiagonalShift {
            base: &self.kinetic,
            diagonal: &self.excitations,
            shift: mu,
        }
    }

    /// Assembled `H(mu)`.
    pub fn build(&self, mu: f64) -> SparseOperator {
        let diag = |i: usize| mu * self.excitations[i];
        let matrix = match self.kinetic.matrix() {
            OperatorMatrix::Real(k) => {
                OperatorMatrix::Real(CsrMatrix::from_rows(self.dim(), |i, out| {
                    out.extend(k.row(i));
                    out.push((i, diag(i)));
                }))
            }
            OperatorMatrix::Complex(k) => {
                OperatorMatrix::Complex(CsrMatrix::from_rows(self.dim(), |i, out| {
                    out.extend(k.row(i));
                    out.push((i, Complex64::new(diag(i), 0.0)));
                }))
            }
        };
        SparseOperator::new(self.tag(), matrix)
    }

    /// `<psi|H(mu)|psi>`.
    pub fn energy(&self, mu: f64, psi: &StateVector) -> Result<f64> {
        if psi.tag() != self.tag() {
            return Err(Error::Basis(
                "state and Hamiltonian live in different spaces".into(),
            ));
        }
        let mut y = vec![Complex64::default(); self.dim()];
        self.at(mu).apply(psi.amplitudes(), &mut y);
        Ok(crate::state::dot(psi.amplitudes(), &y).re)
    }
}

/// Builds `H_PXP(mu)` on a full basis or a symmetry sector.
pub fn build_pxp<S: PxpSpace>(space: &S, params: &HamiltonianParams) -> Result<SparseOperator> {
    if space.boundary() != params.bc {
        return Err(Error::Basis(format!(
            "Hamiltonian requested with {} boundaries on a {} space",
            params.bc,
            space.boundary()
        )));
    }
    let family = PxpFamily::new(space);
    let op = family.build(params.mu);
    if params.omega == 1.0 {
        return Ok(op);
    }
    // Rescale the kinetic part only.
    let scaled = PxpFamily {
        kinetic: scale(&family.kinetic, params.omega),
        excitations: family.excitations,
    };
    Ok(scaled.build(params.mu))
}

fn scale(op: &SparseOperator, f: f64) -> SparseOperator {
    let matrix = match op.matrix() {
        OperatorMatrix::Real(m) => OperatorMatrix::Real(CsrMatrix::from_rows(m.dim(), |i, out| {
            out.extend(m.row(i).map(|(j, v)| (j, v * f)))
        })),
        OperatorMatrix::Complex(m) => {
            OperatorMatrix::Complex(CsrMatrix::from_rows(m.dim(), |i, out| {
                out.extend(m.row(i).map(|(j, v)| (j, v * f)))
            }))
        }
    };
    SparseOperator::new(op.tag(), matrix)
}

fn check_cell(n_sites: usize, cell: usize) -> Result<()> {
    if cell == 0 || n_sites % cell != 0 {
        return Err(Error::Shape { cell, n_sites });
    }
    Ok(())
}

/// Site-modulated chemical potential: diagonal `sum_j w[j mod K] n_j(s)`.
pub fn modulated_diagonal(basis: &ConstrainedBasis, w: &[f64]) -> Result<Vec<f64>> {
    let n = basis.n_sites();
    check_cell(n, w.len())?;
    Ok(basis
        .states()
        .iter()
        .map(|&s| {
            (0..n)
                .filter(|&j| (s >> j) & 1 == 1)
                .map(|j| w[j % w.len()])
                .sum()
        })
        .collect())
}

/// `H(w) = sum_j PXP + sum_j w[j mod K] Q_j` on the full basis.
pub fn build_modulated(
    basis: &ConstrainedBasis,
    params: &ModulatedParams,
) -> Result<SparseOperator> {
    let diag = modulated_diagonal(basis, &params.w)?;
    let OperatorMatrix::Real(k) = basis.kinetic_matrix() else {
        unreachable!("full-basis kinetic term is real")
    };
    let m = CsrMatrix::from_rows(basis.dim(), |i, out| {
        out.extend(k.row(i));
        out.push((i, diag[i]));
    });
    Ok(SparseOperator::new(basis.tag(), OperatorMatrix::Real(m)))
}

/// Applies `prod_j exp(-i gamma[j mod K] Z_j)` with `Z = Q - P`.
pub fn apply_phase_pulse(
    basis: &ConstrainedBasis,
    state: &StateVector,
    gamma: &[f64],
) -> Result<StateVector> {
    if state.tag() != basis.tag() {
        return Err(Error::Basis("phase pulse acts on full-basis states".into()));
    }
    let n = basis.n_sites();
    check_cell(n, gamma.len())?;
    let amps = basis
        .states()
        .iter()
        .zip(state.amplitudes())
        .map(|(&s, &a)| {
            let angle: f64 = (0..n)
                .map(|j| gamma[j % gamma.len()] * if (s >> j) & 1 == 1 { 1.0 } else { -1.0 })
                .sum();
            a * Complex64::from_polar(1.0, -angle)
        })
        .collect();
    Ok(StateVector::new(state.tag(), amps))
}

/// `Pi = prod_j Z_j`: multiplies configuration `s` by `(-1)^(N - popcount s)`.
pub fn apply_pi_reflection<S: HilbertSpace>(space: &S, state: &StateVector) -> Result<StateVector> {
    if state.tag() != space.tag() {
        return Err(Error::Basis("state does not belong to this space".into()));
    }
    let n = space.n_sites() as u32;
    let amps = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if (n - space.excitations(i)) % 2 == 0 {
                a
            } else {
                -a
            }
        })
        .collect();
    Ok(StateVector::new(state.tag(), amps))
}

/// Number operator density `n = (1/N) sum_j Q_j` as a diagonal.
pub fn density_diagonal<S: HilbertSpace>(space: &S) -> Vec<f64> {
    let n = space.n_sites() as f64;
    (0..space.dim())
        .map(|i| space.excitations(i) as f64 / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{all_sectors, build_sector, enumerate_basis, Inversion};
    use crate::linalg::dense_eigenvalues;
    use BoundaryCondition::*;

    fn pxp(n: usize, mu: f64, bc: BoundaryCondition) -> (ConstrainedBasis, SparseOperator) {
        let basis = enumerate_basis(n, bc).unwrap();
        let h = build_pxp(&basis, &HamiltonianParams::new(mu, bc)).unwrap();
        (basis, h)
    }

    #[test]
    fn neel_diagonal_counts_excitations() {
        let (basis, h) = pxp(8, 0.7, Periodic);
        let i = basis.index_of(basis.neel_config()).unwrap();
        assert!((h.get(i, i).re - 0.7 * 4.0).abs() < 1e-14);
    }

    #[test]
    fn polarized_connects_to_single_excitations() {
        let (basis, h) = pxp(4, 0.0, Periodic);
        let i0 = basis.index_of(0).unwrap();
        let row: Vec<_> = h
            .triplets()
            .into_iter()
            .filter(|&(i, _, _)| i == i0)
            .collect();
        assert_eq!(row.len(), 4);
        for (_, j, v) in row {
            assert_eq!(basis.state(j).count_ones(), 1);
            assert_eq!(v, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn hermitian_and_blockade_respecting() {
        for bc in [Periodic, Open] {
            let (basis, h) = pxp(11, -0.4, bc);
            assert!(h.hermiticity_error() < 1e-12);
            for (i, j, _) in h.triplets() {
                assert!(is_legal(basis.state(i), 11, bc) && is_legal(basis.state(j), 11, bc));
                if i != j {
                    assert_eq!((basis.state(i) ^ basis.state(j)).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn open_edges_use_two_site_terms() {
        // 00000 -> 10000 is allowed at the open edge (X_0 P_1).
        let (basis, h) = pxp(5, 0.0, Open);
        let i = basis.index_of(0).unwrap();
        let j = basis.index_of(1).unwrap();
        assert_eq!(h.get(i, j).re, 1.0);
        // 10001 is legal with open boundaries but not periodic ones.
        assert!(basis.index_of(0b10001).is_some());
    }

    #[test]
    fn bc_mismatch_is_rejected() {
        let basis = enumerate_basis(6, Open).unwrap();
        assert!(build_pxp(&basis, &HamiltonianParams::new(0.0, Periodic)).is_err());
    }

    #[test]
    fn pi_anticommutes_with_mirror_hamiltonian() {
        for n in [6, 9, 12] {
            let (basis, hp) = pxp(n, 0.9, Periodic);
            let hm = build_pxp(&basis, &HamiltonianParams::new(-0.9, Periodic)).unwrap();
            let sign = |i: usize| {
                if (n as u32 - basis.state(i).count_ones()) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            };
            // (Pi H(mu))_ij = s_i H_ij, (H(-mu) Pi)_ij = H'_ij s_j.
            for (i, j, v) in hp.triplets() {
                let w = hm.get(i, j);
                assert_eq!(sign(i) * v + w * sign(j), Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn modulated_reduces_to_uniform() {
        let basis = enumerate_basis(8, Periodic).unwrap();
        let h = build_pxp(&basis, &HamiltonianParams::new(0.37, Periodic)).unwrap();
        let hw = build_modulated(&basis, &ModulatedParams::uniform(0.37)).unwrap();
        assert_eq!(h, hw);
        let h0 = build_pxp(&basis, &HamiltonianParams::new(0.0, Periodic)).unwrap();
        let hw0 = build_modulated(
            &basis,
            &ModulatedParams {
                w: vec![0.0, 0.0],
                gamma: vec![0.0, 0.0],
            },
        )
        .unwrap();
        assert_eq!(h0, hw0);
    }

    #[test]
    fn modulated_diagonal_by_site_parity() {
        let basis = enumerate_basis(4, Periodic).unwrap();
        let d = modulated_diagonal(&basis, &[1.0, -1.0]).unwrap();
        // 0b0101: sites 0 and 2, both even.
        assert_eq!(d[basis.index_of(0b0101).unwrap()], 2.0);
        assert_eq!(d[basis.index_of(0b1010).unwrap()], -2.0);
        assert!(matches!(
            modulated_diagonal(&basis, &[0.0; 3]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn phase_pulse_is_unitary() {
        let basis = enumerate_basis(8, Periodic).unwrap();
        let amps: Vec<f64> = (0..basis.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let psi = StateVector::from_real(basis.tag(), &amps).normalized();
        let same = apply_phase_pulse(&basis, &psi, &[0.0, 0.0]).unwrap();
        assert_eq!(same, psi);
        let g = [0.3, -1.1];
        let pulsed = apply_phase_pulse(&basis, &psi, &g).unwrap();
        assert!((pulsed.norm() - 1.0).abs() < 1e-14);
        let back = apply_phase_pulse(&basis, &pulsed, &[-0.3, 1.1]).unwrap();
        for (a, b) in back.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn pi_is_an_involution() {
        let basis = enumerate_basis(7, Periodic).unwrap();
        let zero = basis.polarized();
        let flipped = apply_pi_reflection(&basis, &zero).unwrap();
        assert_eq!(flipped.amplitudes()[0], Complex64::new(-1.0, 0.0));
        assert_eq!(apply_pi_reflection(&basis, &flipped).unwrap(), zero);
    }

    #[test]
    fn sector_blocks_match_projection() {
        for n in [6, 8, 9, 10] {
            let basis = enumerate_basis(n, Periodic).unwrap();
            let h = build_pxp(&basis, &HamiltonianParams::new(0.45, Periodic))
                .unwrap()
                .to_dense();
            for sector in all_sectors(&basis).unwrap() {
                let hs = build_pxp(&sector, &HamiltonianParams::new(0.45, Periodic)).unwrap();
                assert!(hs.hermiticity_error() < 1e-12);
                let d = sector.dim();
                let mut v = nalgebra::DMatrix::<Complex64>::zeros(basis.dim(), d);
                for a in 0..d {
                    for (c, w) in sector.basis_vector_terms(a) {
                        v[(basis.index_of(c).unwrap(), a)] = w;
                    }
                }
                let projected = v.adjoint() * &h * &v;
                let direct = hs.to_dense();
                assert!(
                    (projected - direct).camax() < 1e-12,
                    "N={n} k={}",
                    sector.k()
                );
            }
        }
    }

    #[test]
    fn sector_spectra_are_sub_multisets() {
        let basis = enumerate_basis(12, Periodic).unwrap();
        let full =
            dense_eigenvalues(&build_pxp(&basis, &HamiltonianParams::new(-0.8, Periodic)).unwrap());
        let mut union = Vec::new();
        for sector in all_sectors(&basis).unwrap() {
            union.extend(dense_eigenvalues(
                &build_pxp(&sector, &HamiltonianParams::new(-0.8, Periodic)).unwrap(),
            ));
        }
        union.sort_by(f64::total_cmp);
        assert_eq!(union.len(), full.len());
        for (a, b) in union.iter().zip(&full) {
            assert!((a - b).abs() < 1e-10);
        }
        let k0 = build_sector(&basis, 0, Inversion::Even).unwrap();
        let part =
            dense_eigenvalues(&build_pxp(&k0, &HamiltonianParams::new(-0.8, Periodic)).unwrap());
        let mut used = vec![false; full.len()];
        for e in part {
            let hit = full
                .iter()
                .enumerate()
                .position(|(i, f)| !used[i] && (f - e).abs() < 1e-10);
            used[hit.expect("sector level missing from full spectrum")] = true;
        }
    }
}
