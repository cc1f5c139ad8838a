//! Canonical and diagonal ensemble predictions for the excitation density.

use serde::{Deserialize, Serialize};

use crate::basis::{all_sectors, BoundaryCondition, ConstrainedBasis, HilbertSpace};
use crate::error::{Error, Result};
use crate::operators::{build_pxp, HamiltonianParams, PxpSpace};
use crate::optimize::brent_root;
use crate::propagation::EigDecomposition;
use crate::state::StateVector;

/// Inverse-temperature search interval `[-BETA_CAP, BETA_CAP]`.
pub const BETA_CAP: f64 = 50.0;

/// Energies closer than this are treated as one degenerate level.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Eigenvalues with the eigenstate expectation of the density `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpectrum {
    pub energies: Vec<f64>,
    pub densities: Vec<f64>,
    /// Which space the spectrum covers, recorded in output metadata.
    pub label: String,
}

impl ThermalSpectrum {
    /// Spectrum of one decomposition (a sector or a full basis).
    pub fn from_eig<S: HilbertSpace>(space: &S, eig: &EigDecomposition) -> Result<Self> {
        if space.tag() != eig.tag() {
            return Err(Error::Basis(
                "decomposition does not belong to this space".into(),
            ));
        }
        let n = space.n_sites() as f64;
        let v = eig.eigenvectors();
        let densities = (0..eig.dim())
            .map(|j| {
                v.column(j)
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a.norm_sqr() * space.excitations(i) as f64)
                    .sum::<f64>()
                    / n
            })
            .collect();
        Ok(Self {
            energies: eig.eigenvalues().to_vec(),
            densities,
            label: format!("{:?}", space.tag()),
        })
    }

    /// The whole constrained space. Under periodic boundaries it is assembled
    /// from all momentum/inversion sectors (`n` is diagonal in each of them).
    pub fn full_space(basis: &ConstrainedBasis, mu: f64) -> Result<Self> {
        let params = HamiltonianParams::new(mu, basis.bc());
        let mut out = Self {
            energies: Vec::new(),
            densities: Vec::new(),
            label: "full".into(),
        };
        match basis.bc() {
            BoundaryCondition::Open => {
                let eig = EigDecomposition::new(&build_pxp(basis, &params)?)?;
                out.extend(Self::from_eig(basis, &eig)?);
            }
            BoundaryCondition::Periodic => {
                for sector in all_sectors(basis)? {
                    let eig = EigDecomposition::new(&build_pxp(&sector, &params)?)?;
                    out.extend(Self::from_eig(&sector, &eig)?);
                }
            }
        }
        Ok(out)
    }

    /// A single symmetry sector of `H(mu)`.
    pub fn sector<S: PxpSpace>(space: &S, mu: f64) -> Result<Self> {
        let eig = EigDecomposition::new(&build_pxp(
            space,
            &HamiltonianParams::new(mu, space.boundary()),
        )?)?;
        Self::from_eig(space, &eig)
    }

    fn extend(&mut self, other: Self) {
        self.energies.extend(other.energies);
        self.densities.extend(other.densities);
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    fn e_min(&self) -> f64 {
        self.energies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn e_max(&self) -> f64 {
        self.energies
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(<H>, <n>)` at inverse temperature `beta`, with max-shifted weights.
    pub fn canonical(&self, beta: f64) -> (f64, f64) {
        let shift = if beta >= 0.0 {
            self.e_min()
        } else {
            self.e_max()
        };
        let (mut z, mut e, mut n) = (0.0, 0.0, 0.0);
        for (&ej, &nj) in self.energies.iter().zip(&self.densities) {
            let w = (-beta * (ej - shift)).exp();
            z += w;
            e += w * ej;
            n += w * nj;
        }
        (e / z, n / z)
    }
}

/// Canonical prediction matched to a target energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalResult {
    pub beta: f64,
    pub n_th: f64,
    pub mean_energy: f64,
}

/// Solves `Tr(rho_beta H) = e_target` for `beta` in `[-50, 50]` by Brent's
/// method.
pub fn solve_beta(spectrum: &ThermalSpectrum, e_target: f64, tol: f64) -> Result<CanonicalResult> {
    let (e_min, e_max) = (spectrum.e_min(), spectrum.e_max());
    if !(e_target > e_min + tol && e_target < e_max - tol) {
        return Err(Error::UnboundedBeta {
            target: e_target,
            e_min,
            e_max,
        });
    }
    let g = |b: f64| spectrum.canonical(b).0 - e_target;
    let beta =
        brent_root(g, -BETA_CAP, BETA_CAP, 1e-14, 500).ok_or(Error::Bracket { cap: BETA_CAP })?;
    let (mean_energy, n_th) = spectrum.canonical(beta);
    if (mean_energy - e_target).abs() > tol.max(1e-9 * e_target.abs()) {
        return Err(Error::Bracket { cap: BETA_CAP });
    }
    Ok(CanonicalResult {
        beta,
        n_th,
        mean_energy,
    })
}

/// [`solve_beta`], except that targets out of reach of `|beta| <= BETA_CAP`
/// (a ground state, say) take the value at the nearer cap. The flag reports
/// whether that happened. Targets outside the spectrum by more than `tol`
/// still fail.
pub fn solve_beta_clamped(
    spectrum: &ThermalSpectrum,
    e_target: f64,
    tol: f64,
) -> Result<(CanonicalResult, bool)> {
    match solve_beta(spectrum, e_target, tol) {
        Ok(r) => Ok((r, false)),
        Err(Error::UnboundedBeta { .. } | Error::Bracket { .. })
            if e_target >= spectrum.e_min() - tol && e_target <= spectrum.e_max() + tol =>
        {
            let beta = if e_target < spectrum.canonical(0.0).0 {
                BETA_CAP
            } else {
                -BETA_CAP
            };
            let (mean_energy, n_th) = spectrum.canonical(beta);
            Ok((
                CanonicalResult {
                    beta,
                    n_th,
                    mean_energy,
                },
                true,
            ))
        }
        Err(e) => Err(e),
    }
}

/// Diagonal-ensemble density with the degeneracy structure that was used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalEnsemble {
    pub n_bar: f64,
    /// `(energy, multiplicity)` of every cluster with more than one level.
    pub degenerate_clusters: Vec<(f64, usize)>,
    /// Smallest gap between distinct clusters.
    pub min_gap: f64,
}

/// Infinite-time average of `n`: `sum_B c_B^dag n_B c_B` over clusters of
/// levels within [`DEGENERACY_TOL`], which reduces to `sum_j |c_j|^2 n_jj`
/// when the spectrum is non-degenerate.
pub fn diagonal_ensemble<S: HilbertSpace>(
    space: &S,
    psi0: &StateVector,
    eig: &EigDecomposition,
) -> Result<DiagonalEnsemble> {
    if space.tag() != eig.tag() {
        return Err(Error::Basis(
            "decomposition does not belong to this space".into(),
        ));
    }
    let c = eig.coefficients(psi0)?;
    let v = eig.eigenvectors();
    let e = eig.eigenvalues();
    let d: Vec<f64> = (0..space.dim())
        .map(|i| space.excitations(i) as f64 / space.n_sites() as f64)
        .collect();
    let mut n_bar = 0.0;
    let mut clusters = Vec::new();
    let mut min_gap = f64::INFINITY;
    let mut start = 0;
    while start < e.len() {
        let mut end = start + 1;
        while end < e.len() && e[end] - e[end - 1] < DEGENERACY_TOL {
            end += 1;
        }
        if end < e.len() {
            min_gap = min_gap.min(e[end] - e[end - 1]);
        }
        if end - start > 1 {
            clusters.push((e[start], end - start));
        }
        // c_B^dag (V_B^dag n V_B) c_B = sum_s d_s |sum_{j in B} V_sj c_j|^2.
        n_bar += d
            .iter()
            .enumerate()
            .map(|(s, ds)| {
                ds * (start..end)
                    .map(|j| v[(s, j)] * c[j])
                    .sum::<num_complex::Complex64>()
                    .norm_sqr()
            })
            .sum::<f64>();
        start = end;
    }
    let off_zero: Vec<_> = clusters.iter().filter(|(en, _)| en.abs() > 1e-8).collect();
    if !off_zero.is_empty() {
        log::warn!(
            "diagonal ensemble: {} degenerate clusters away from E = 0 (min gap {:.3e}); off-diagonal terms included",
            off_zero.len(),
            min_gap
        );
    }
    Ok(DiagonalEnsemble {
        n_bar,
        degenerate_clusters: clusters,
        min_gap,
    })
}

/// Shorthand for [`diagonal_ensemble`]`(..).n_bar`.
pub fn diagonal_ensemble_n<S: HilbertSpace>(
    space: &S,
    psi0: &StateVector,
    eig: &EigDecomposition,
) -> Result<f64> {
    Ok(diagonal_ensemble(space, psi0, eig)?.n_bar)
}

/// Diagonal minus canonical density for a quench.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleGap {
    pub e_target: f64,
    pub canonical: CanonicalResult,
    pub n_diag: f64,
    pub delta_n: f64,
}

/// `delta_n = n_bar - n_th` with the canonical ensemble fixed by
/// `<psi0|H|psi0>`.
pub fn ensemble_gap<S: HilbertSpace>(
    space: &S,
    psi0: &StateVector,
    eig: &EigDecomposition,
    thermal: &ThermalSpectrum,
    tol: f64,
) -> Result<EnsembleGap> {
    let c = eig.coefficients(psi0)?;
    let e_target: f64 = c
        .iter()
        .zip(eig.eigenvalues())
        .map(|(c, e)| c.norm_sqr() * e)
        .sum();
    let canonical = solve_beta(thermal, e_target, tol)?;
    let n_diag = diagonal_ensemble_n(space, psi0, eig)?;
    Ok(EnsembleGap {
        e_target,
        canonical,
        n_diag,
        delta_n: n_diag - canonical.n_th,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_sector, enumerate_basis, Inversion};
    use crate::propagation::TimeGrid;

    fn full(n: usize, mu: f64) -> (ConstrainedBasis, EigDecomposition) {
        let basis = enumerate_basis(n, BoundaryCondition::Periodic).unwrap();
        let eig = EigDecomposition::new(
            &build_pxp(
                &basis,
                &HamiltonianParams::new(mu, BoundaryCondition::Periodic),
            )
            .unwrap(),
        )
        .unwrap();
        (basis, eig)
    }

    #[test]
    fn infinite_temperature_mean_gives_zero_beta() {
        let basis = enumerate_basis(10, BoundaryCondition::Periodic).unwrap();
        let th = ThermalSpectrum::full_space(&basis, 0.7).unwrap();
        let mean = th.energies.iter().sum::<f64>() / th.dim() as f64;
        let r = solve_beta(&th, mean, 1e-10).unwrap();
        assert!(r.beta.abs() < 1e-10, "{}", r.beta);
        let trace_n = (0..basis.dim())
            .map(|i| basis.excitations(i) as f64)
            .sum::<f64>()
            / (10.0 * basis.dim() as f64);
        assert!((r.n_th - trace_n).abs() < 1e-10);
    }

    #[test]
    fn full_space_union_matches_dense_full() {
        let (basis, eig) = full(10, -0.4);
        let direct = ThermalSpectrum::from_eig(&basis, &eig).unwrap();
        let union = ThermalSpectrum::full_space(&basis, -0.4).unwrap();
        for beta in [-2.0, -0.3, 0.0, 0.5, 3.0] {
            let (a, b) = (direct.canonical(beta), union.canonical(beta));
            assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10);
        }
    }

    #[test]
    fn beta_is_monotone_and_edges_fail() {
        let basis = enumerate_basis(10, BoundaryCondition::Periodic).unwrap();
        let th = ThermalSpectrum::full_space(&basis, 0.3).unwrap();
        let (lo, hi) = (th.e_min(), th.e_max());
        let mut last = f64::INFINITY;
        for i in 1..20 {
            let e = lo + (hi - lo) * i as f64 / 20.0;
            match solve_beta(&th, e, 1e-10) {
                Ok(r) => {
                    assert!(r.beta < last);
                    last = r.beta;
                }
                Err(Error::Bracket { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
        assert!(matches!(
            solve_beta(&th, lo, 1e-10),
            Err(Error::UnboundedBeta { .. })
        ));
        let (edge, clamped) = solve_beta_clamped(&th, lo, 1e-10).unwrap();
        assert!(clamped && edge.beta == BETA_CAP);
        assert!(solve_beta_clamped(&th, lo - 1.0, 1e-10).is_err());
        let near_gs = solve_beta(&th, lo + 1e-3, 1e-10).unwrap();
        let gs = th.energies.iter().position(|&e| e == lo).unwrap();
        assert!(near_gs.beta > 5.0, "{}", near_gs.beta);
        assert!((near_gs.n_th - th.densities[gs]).abs() < 1e-3);
    }

    #[test]
    fn eigenstate_diagonal_ensemble() {
        let (basis, eig) = full(10, 0.9);
        let psi = eig.eigenstate(0);
        let n = diagonal_ensemble_n(&basis, &psi, &eig).unwrap();
        let direct = crate::observables::excitation_density(&basis, &psi).unwrap();
        assert!((n - direct).abs() < 1e-12);
    }

    #[test]
    fn diagonal_ensemble_is_the_long_time_average() {
        let basis = enumerate_basis(10, BoundaryCondition::Periodic).unwrap();
        let sector = build_sector(&basis, 0, Inversion::Even).unwrap();
        let h = build_pxp(
            &sector,
            &HamiltonianParams::new(0.4, BoundaryCondition::Periodic),
        )
        .unwrap();
        let eig = EigDecomposition::new(&h).unwrap();
        let psi0 = sector.project(&basis, &basis.z_plus().unwrap()).unwrap();
        let n_bar = diagonal_ensemble_n(&sector, &psi0, &eig).unwrap();
        let grid = TimeGrid::new(0.0, 2000.0, 0.5).unwrap();
        let rec = crate::observables::record_quench(&sector, &eig, &psi0, &grid, None).unwrap();
        let avg = rec.density_n.iter().sum::<f64>() / rec.density_n.len() as f64;
        assert!((avg - n_bar).abs() < 1e-3, "{avg} vs {n_bar}");
    }

    #[test]
    fn zero_mode_block_contributes_off_diagonal_terms() {
        // At mu = 0 the E = 0 block is highly degenerate; the block-resolved
        // average must not depend on how the block's eigenvectors are chosen.
        let basis = enumerate_basis(10, BoundaryCondition::Periodic).unwrap();
        let sector = build_sector(&basis, 0, Inversion::Even).unwrap();
        let h = build_pxp(
            &sector,
            &HamiltonianParams::new(0.0, BoundaryCondition::Periodic),
        )
        .unwrap();
        let eig = EigDecomposition::new(&h).unwrap();
        let psi0 = sector.project(&basis, &basis.polarized()).unwrap();
        let de = diagonal_ensemble(&sector, &psi0, &eig).unwrap();
        assert!(de
            .degenerate_clusters
            .iter()
            .any(|(e, m)| e.abs() < 1e-8 && *m > 1));
        let grid = TimeGrid::new(0.0, 2000.0, 0.5).unwrap();
        let rec = crate::observables::record_quench(&sector, &eig, &psi0, &grid, None).unwrap();
        let avg = rec.density_n.iter().sum::<f64>() / rec.density_n.len() as f64;
        assert!((avg - de.n_bar).abs() < 1e-3, "{avg} vs {}", de.n_bar);
    }
}
