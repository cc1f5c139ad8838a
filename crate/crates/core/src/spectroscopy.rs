//! Ground states, momentum-resolved low-energy spectra, magnon pairs and
//! overlap towers.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_sector, enumerate_basis, BoundaryCondition, HilbertSpace, Inversion};
use crate::error::{Error, Result};
use crate::linalg::{dense_eigh, lowest_eigenpairs, LanczosOptions};
use crate::operators::{build_pxp, HamiltonianParams, SparseOperator};
use crate::propagation::EigDecomposition;
use crate::sparse::LinearOperator;
use crate::state::StateVector;

/// Below this dimension ground states come from dense diagonalization.
pub const DENSE_GS_LIMIT: usize = 400;

/// Required residual `||H psi - E psi||` of a ground state.
pub const GS_RESIDUAL_TOL: f64 = 1e-10;

fn fix_phase(amps: &mut [Complex64]) {
    let Some((_, &pivot)) = amps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()).then(b.0.cmp(&a.0)))
    else {
        return;
    };
    if pivot.norm() == 0.0 {
        return;
    }
    let phase = pivot.conj() / pivot.norm();
    for a in amps.iter_mut() {
        *a *= phase;
    }
}

fn residual<A: LinearOperator + ?Sized>(h: &A, e: f64, x: &[Complex64]) -> f64 {
    let mut y = vec![Complex64::default(); x.len()];
    h.apply(x, &mut y);
    y.iter()
        .zip(x)
        .map(|(a, b)| (a - b * e).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Lowest eigenpair, phase-fixed so that the largest-magnitude amplitude is
/// real and positive (ties go to the lowest index).
pub fn ground_state(h: &SparseOperator) -> Result<(f64, StateVector)> {
    let (e, mut amps) = if h.dim() <= DENSE_GS_LIMIT {
        let (values, vectors) = dense_eigh(h);
        (
            values[0],
            vectors.column(0).iter().copied().collect::<Vec<_>>(),
        )
    } else {
        let opts = LanczosOptions {
            tol: GS_RESIDUAL_TOL * 0.5,
            ..Default::default()
        };
        let (values, mut vectors) = lowest_eigenpairs(h, opts)?;
        (values[0], vectors.swap_remove(0))
    };
    let r = residual(h, e, &amps);
    if r > GS_RESIDUAL_TOL {
        return Err(Error::Solver { residual: r });
    }
    fix_phase(&mut amps);
    Ok((e, StateVector::new(h.tag(), amps).normalized()))
}

/// Lowest `count` eigenvalues of a sector operator.
fn lowest_levels(h: &SparseOperator, count: usize) -> Result<Vec<f64>> {
    if h.dim() <= DENSE_GS_LIMIT {
        let (values, _) = dense_eigh(h);
        return Ok(values.into_iter().take(count).collect());
    }
    let opts = LanczosOptions {
        count,
        ..Default::default()
    };
    Ok(lowest_eigenpairs(h, opts)?.0)
}

/// Lowest excitation energy per momentum, `k = 2 pi m / N` for
/// `m = 0..=N/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionBand {
    pub n_sites: usize,
    pub mu: f64,
    pub e_gs: f64,
    pub momenta: Vec<f64>,
    pub energies: Vec<f64>,
}

impl DispersionBand {
    /// `epsilon(k)` for any momentum on the lattice, folded by `k -> 2 pi - k`.
    pub fn at(&self, k: f64) -> Option<f64> {
        let n = self.n_sites as f64;
        let m = (k.rem_euclid(2.0 * PI) * n / (2.0 * PI)).round() as usize % self.n_sites;
        let m = m.min(self.n_sites - m);
        self.energies.get(m).copied()
    }

    /// Excitation energy of a `k = pi` magnon.
    pub fn epsilon_pi(&self) -> f64 {
        *self.energies.last().expect("band is populated")
    }

    /// `max - min` of `epsilon` over band momenta in `[k_lo, k_hi]`.
    pub fn spread(&self, k_lo: f64, k_hi: f64) -> f64 {
        let inside = self
            .momenta
            .iter()
            .zip(&self.energies)
            .filter(|(k, _)| **k >= k_lo - 1e-12 && **k <= k_hi + 1e-12);
        let (lo, hi) = inside.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &e)| {
            (lo.min(e), hi.max(e))
        });
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

/// Momentum-resolved lowest excitations above the global ground state of
/// `H(mu)` on a periodic chain. At `k = 0` the ground state itself is skipped;
/// at `k = 0, pi` both inversion sectors are searched.
pub fn dispersion(n_sites: usize, mu: f64) -> Result<DispersionBand> {
    if n_sites % 2 != 0 || n_sites < 4 || n_sites > 24 {
        return Err(Error::Config(format!(
            "dispersion needs even N in 4..=24, got {n_sites}"
        )));
    }
    let basis = enumerate_basis(n_sites, BoundaryCondition::Periodic)?;
    let params = HamiltonianParams::new(mu, BoundaryCondition::Periodic);
    let half = n_sites / 2;
    // (k, inversion) -> two lowest levels
    let jobs: Vec<(usize, Inversion)> = (0..=half)
        .flat_map(|k| {
            if k == 0 || k == half {
                vec![(k, Inversion::Even), (k, Inversion::Odd)]
            } else {
                vec![(k, Inversion::None)]
            }
        })
        .collect();
    let levels: Vec<(usize, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(k, inv)| -> Result<(usize, Vec<f64>)> {
            let sector = build_sector(&basis, k, inv)?;
            if sector.dim() == 0 {
                return Ok((k, Vec::new()));
            }
            let h = build_pxp(&sector, &params)?;
            Ok((k, lowest_levels(&h, 2.min(sector.dim()))?))
        })
        .collect::<Result<_>>()?;
    let e_gs = levels
        .iter()
        .flat_map(|(_, l)| l.first())
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut energies = vec![f64::INFINITY; half + 1];
    let mut gs_seen = false;
    for (k, l) in &levels {
        for &e in l {
            // The ground state is a single level; every other one is an excitation.
            if !gs_seen && *k == 0 && e == e_gs {
                gs_seen = true;
                continue;
            }
            energies[*k] = energies[*k].min(e - e_gs);
        }
    }
    let momenta = (0..=half)
        .map(|m| 2.0 * PI * m as f64 / n_sites as f64)
        .collect();
    Ok(DispersionBand {
        n_sites,
        mu,
        e_gs,
        momenta,
        energies,
    })
}

/// Non-interacting pair energies `E_GS + eps(k) + eps(-k)` for every band momentum.
pub fn two_magnon_prediction(band: &DispersionBand, e_gs: f64) -> Vec<(f64, f64)> {
    band.momenta
        .iter()
        .map(|&k| {
            (
                k,
                e_gs + band.at(k).unwrap_or(0.0) + band.at(-k).unwrap_or(0.0),
            )
        })
        .collect()
}

/// Relative gap between the lowest pair prediction and the exact first
/// excited level of the `k = 0`, even sector:
/// `|E_pair - E_1| / (E_1 - E_GS)`.
pub fn two_magnon_deviation(band: &DispersionBand) -> Result<f64> {
    let basis = enumerate_basis(band.n_sites, BoundaryCondition::Periodic)?;
    let sector = build_sector(&basis, 0, Inversion::Even)?;
    let h = build_pxp(
        &sector,
        &HamiltonianParams::new(band.mu, BoundaryCondition::Periodic),
    )?;
    let levels = lowest_levels(&h, 2)?;
    let e1 = levels[1];
    let pair = two_magnon_prediction(band, band.e_gs)
        .into_iter()
        .map(|(_, e)| e)
        .fold(f64::INFINITY, f64::min);
    Ok((pair - e1).abs() / (e1 - band.e_gs))
}

/// Eigenstate weights of an initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSpectrum {
    pub energies: Vec<f64>,
    pub overlaps: Vec<f64>,
    /// Tower marker energies, if requested.
    pub markers: Vec<f64>,
}

/// `(E_j, |<E_j|psi0>|^2)` over the eigenbasis.
pub fn overlap_spectrum(psi0: &StateVector, eig: &EigDecomposition) -> Result<OverlapSpectrum> {
    let c = eig.coefficients(psi0)?;
    Ok(OverlapSpectrum {
        energies: eig.eigenvalues().to_vec(),
        overlaps: c.iter().map(|x| x.norm_sqr()).collect(),
        markers: Vec::new(),
    })
}

/// Markers `E_GS + m * spacing`, `m = 1..=count`. Zero-momentum towers are
/// spaced by pairs of `k = pi` magnons, `spacing = 2 eps(pi)`.
pub fn tower_markers(e_gs: f64, spacing: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|m| e_gs + m as f64 * spacing).collect()
}

impl OverlapSpectrum {
    pub fn with_markers(mut self, markers: Vec<f64>) -> Self {
        self.markers = markers;
        self
    }

    /// For each marker, the energy of the largest-overlap eigenstate within
    /// half a marker spacing of it.
    pub fn tower_peaks(&self, e_ref: f64) -> Vec<Option<f64>> {
        let mut out = Vec::new();
        for (i, &m) in self.markers.iter().enumerate() {
            let below = if i == 0 { e_ref } else { self.markers[i - 1] };
            let (lo, hi) = (m - 0.5 * (m - below), m + 0.5 * (m - below));
            let peak = self
                .energies
                .iter()
                .zip(&self.overlaps)
                .filter(|(e, _)| **e >= lo && **e <= hi)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(e, _)| *e);
            out.push(peak);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_basis;
    use crate::linalg::dense_eigenvalues;

    #[test]
    fn ground_state_limits() {
        let basis = enumerate_basis(12, BoundaryCondition::Periodic).unwrap();
        let (_, gs) = ground_state(
            &build_pxp(
                &basis,
                &HamiltonianParams::new(50.0, BoundaryCondition::Periodic),
            )
            .unwrap(),
        )
        .unwrap();
        // Second order: every site dresses |0> with weight 1/mu^2.
        let loss = 1.0 - gs.overlap(&basis.polarized()).unwrap().norm_sqr();
        assert!((loss - 12.0 / 2500.0).abs() < 0.1 * 12.0 / 2500.0, "{loss}");
        // Z+ and Z- are split by ~(1/mu)^(N/2); resolve them by symmetry.
        let sector = build_sector(&basis, 0, Inversion::Even).unwrap();
        let h = build_pxp(
            &sector,
            &HamiltonianParams::new(-50.0, BoundaryCondition::Periodic),
        )
        .unwrap();
        let gs = sector.expand(&basis, &ground_state(&h).unwrap().1).unwrap();
        // Only the N/2 excited sites of a Neel state can flip.
        let loss = 1.0 - gs.overlap(&basis.z_plus().unwrap()).unwrap().norm_sqr();
        assert!((loss - 6.0 / 2500.0).abs() < 0.1 * 6.0 / 2500.0, "{loss}");
    }

    #[test]
    fn lanczos_ground_state_matches_dense() {
        let basis = enumerate_basis(14, BoundaryCondition::Periodic).unwrap();
        let h = build_pxp(
            &basis,
            &HamiltonianParams::new(0.4, BoundaryCondition::Periodic),
        )
        .unwrap();
        assert!(h.dim() > DENSE_GS_LIMIT);
        let (e, gs) = ground_state(&h).unwrap();
        let exact = dense_eigenvalues(&h)[0];
        assert!((e - exact).abs() < 1e-10);
        assert!(residual(&h, e, gs.amplitudes()) <= GS_RESIDUAL_TOL);
        let pivot = gs
            .amplitudes()
            .iter()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap();
        assert!(pivot.im.abs() < 1e-14 && pivot.re > 0.0);
    }

    #[test]
    fn ground_energy_monotone_in_mu() {
        let basis = enumerate_basis(10, BoundaryCondition::Open).unwrap();
        let energies: Vec<f64> = (0..13)
            .map(|i| {
                let mu = -3.0 + 0.5 * i as f64;
                ground_state(
                    &build_pxp(&basis, &HamiltonianParams::new(mu, BoundaryCondition::Open))
                        .unwrap(),
                )
                .unwrap()
                .0
            })
            .collect();
        assert!(energies.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn band_matches_full_spectrum() {
        let n = 10;
        let mu = 0.6;
        let band = dispersion(n, mu).unwrap();
        let basis = enumerate_basis(n, BoundaryCondition::Periodic).unwrap();
        let full = dense_eigenvalues(
            &build_pxp(
                &basis,
                &HamiltonianParams::new(mu, BoundaryCondition::Periodic),
            )
            .unwrap(),
        );
        assert!((band.e_gs - full[0]).abs() < 1e-10);
        // The smallest band energy is the global gap.
        let gap = band.energies.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((gap - (full[1] - full[0])).abs() < 1e-9);
        for m in 1..n / 2 {
            let k = 2.0 * PI * m as f64 / n as f64;
            assert_eq!(band.at(k), band.at(2.0 * PI - k));
        }
    }

    #[test]
    fn flat_band_pairs_sit_on_ground_state() {
        let band = DispersionBand {
            n_sites: 4,
            mu: 0.0,
            e_gs: -1.5,
            momenta: vec![0.0, PI / 2.0, PI],
            energies: vec![0.0; 3],
        };
        assert!(two_magnon_prediction(&band, -1.5)
            .iter()
            .all(|&(_, e)| e == -1.5));
    }

    #[test]
    fn spread_over_window() {
        let band = DispersionBand {
            n_sites: 4,
            mu: 0.0,
            e_gs: 0.0,
            momenta: vec![0.0, PI / 2.0, PI],
            energies: vec![1.0, 3.0, 2.5],
        };
        assert_eq!(band.spread(0.0, PI / 2.0), 2.0);
        assert_eq!(band.spread(PI / 2.0, PI), 0.5);
        assert_eq!(band.epsilon_pi(), 2.5);
    }

    #[test]
    fn eigenstate_overlap_is_single_peak() {
        let basis = enumerate_basis(8, BoundaryCondition::Periodic).unwrap();
        let h = build_pxp(
            &basis,
            &HamiltonianParams::new(0.3, BoundaryCondition::Periodic),
        )
        .unwrap();
        let eig = EigDecomposition::new(&h).unwrap();
        let spec = overlap_spectrum(&eig.eigenstate(3), &eig).unwrap();
        assert!((spec.overlaps[3] - 1.0).abs() < 1e-12);
        assert!((spec.overlaps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
