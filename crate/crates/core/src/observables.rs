//! Scalar diagnostics of quench dynamics.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{ConstrainedBasis, HilbertSpace};
use crate::error::{Error, Result};
use crate::propagation::{EigDecomposition, TimeGrid};
use crate::state::StateVector;

/// Time series of one quench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchRecord {
    pub times: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub density_n: Vec<f64>,
    /// Present when the half-chain entropy was requested.
    pub entropy: Option<Vec<f64>>,
}

/// Closed time window `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub t0: f64,
    pub t1: f64,
}

impl WindowSpec {
    pub fn new(t0: f64, t1: f64) -> Result<Self> {
        if !(t0 >= 0.0 && t1 > t0) {
            return Err(Error::Window { t0, t1 });
        }
        Ok(Self { t0, t1 })
    }

    /// Fidelity-spread window of the phase diagram.
    pub fn delta_f_default() -> Self {
        Self { t0: 1.0, t1: 20.0 }
    }

    /// Density-deviation window of the phase diagram.
    pub fn msd_default() -> Self {
        Self { t0: 10.0, t1: 20.0 }
    }

    fn indices(&self, times: &[f64]) -> Result<Vec<usize>> {
        let eps = 1e-9;
        let idx: Vec<usize> = (0..times.len())
            .filter(|&i| times[i] >= self.t0 - eps && times[i] <= self.t1 + eps)
            .collect();
        if idx.is_empty() {
            return Err(Error::Window {
                t0: self.t0,
                t1: self.t1,
            });
        }
        Ok(idx)
    }
}

/// `|<psi0|psit>|^2`.
pub fn fidelity(psi0: &StateVector, psit: &StateVector) -> Result<f64> {
    Ok(psi0.overlap(psit)?.norm_sqr().min(1.0))
}

/// `max F - min F` over the window.
pub fn delta_f(record: &QuenchRecord, window: &WindowSpec) -> Result<f64> {
    let idx = window.indices(&record.times)?;
    let (lo, hi) = idx
        .iter()
        .map(|&i| record.fidelity[i])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
            (lo.min(f), hi.max(f))
        });
    Ok(hi - lo)
}

/// `(1/N) sum_j <Q_j>`. Valid for sector states too, since the excitation
/// count is constant on translation/inversion orbits.
pub fn excitation_density<S: HilbertSpace>(space: &S, psi: &StateVector) -> Result<f64> {
    if psi.tag() != space.tag() || psi.dim() != space.dim() {
        return Err(Error::Basis("state does not belong to this space".into()));
    }
    let n = space.n_sites() as f64;
    Ok(psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| a.norm_sqr() * space.excitations(i) as f64)
        .sum::<f64>()
        / n)
}

/// Time-averaged `|n(t) - n_th|^2` over the window (trapezoid rule on the
/// samples inside it).
pub fn msd_n(record: &QuenchRecord, n_th: f64, window: &WindowSpec) -> Result<f64> {
    let idx = window.indices(&record.times)?;
    let dev = |i: usize| (record.density_n[i] - n_th).powi(2);
    if idx.len() == 1 {
        return Ok(dev(idx[0]));
    }
    let mut integral = 0.0;
    for w in idx.windows(2) {
        integral += 0.5 * (record.times[w[1]] - record.times[w[0]]) * (dev(w[0]) + dev(w[1]));
    }
    let span = record.times[*idx.last().unwrap()] - record.times[idx[0]];
    Ok(integral / span)
}

/// Squared Schmidt values of the bipartition `[0, cut) | [cut, N)`, descending.
pub fn entanglement_spectrum(
    basis: &ConstrainedBasis,
    psi: &StateVector,
    cut: usize,
) -> Result<Vec<f64>> {
    if psi.tag().is_sector() {
        return Err(Error::Basis(
            "entanglement needs a full-basis state; expand the sector state first".into(),
        ));
    }
    if psi.tag() != basis.tag() {
        return Err(Error::Basis("state does not belong to this basis".into()));
    }
    let n = basis.n_sites();
    if cut == 0 || cut >= n {
        return Err(Error::Basis(format!("cut {cut} outside [1, {}]", n - 1)));
    }
    let mask = (1u32 << cut) - 1;
    let mut left: HashMap<u32, usize> = HashMap::new();
    let mut right: HashMap<u32, usize> = HashMap::new();
    let mut entries = Vec::with_capacity(basis.dim());
    for (&s, &a) in basis.states().iter().zip(psi.amplitudes()) {
        let nl = left.len();
        let l = *left.entry(s & mask).or_insert(nl);
        let nr = right.len();
        let r = *right.entry(s >> cut).or_insert(nr);
        entries.push((l, r, a));
    }
    let mut m = DMatrix::<Complex64>::zeros(left.len(), right.len());
    for (l, r, a) in entries {
        m[(l, r)] = a;
    }
    let mut spectrum: Vec<f64> = m.singular_values().iter().map(|s| s * s).collect();
    spectrum.sort_by(|a, b| b.total_cmp(a));
    Ok(spectrum)
}

/// Von Neumann entropy (natural log) of sites `[0, cut)`.
pub fn entanglement_entropy(
    basis: &ConstrainedBasis,
    psi: &StateVector,
    cut: usize,
) -> Result<f64> {
    let spectrum = entanglement_spectrum(basis, psi, cut)?;
    Ok(spectrum
        .iter()
        .filter(|&&l| l > 1e-300)
        .map(|&l| -l * l.ln())
        .sum())
}

/// `1 / sum_E |<E|psi0>|^4`.
pub fn ipr(psi0: &StateVector, eig: &EigDecomposition) -> Result<f64> {
    let c = eig.coefficients(psi0)?;
    let norm2: f64 = c.iter().map(|x| x.norm_sqr()).sum();
    Ok(norm2 * norm2 / c.iter().map(|x| x.norm_sqr().powi(2)).sum::<f64>())
}

/// Location and height of the first revival: the first strict local maximum of
/// the sampled fidelity with `t > 1` that reaches at least half of the largest
/// such maximum, refined by a parabola through the three surrounding samples.
///
/// The height floor skips the numerical ripples of a fully decayed fidelity.
pub fn first_revival(record: &QuenchRecord) -> Result<(f64, f64)> {
    let f = &record.fidelity;
    let t = &record.times;
    let maxima: Vec<usize> = (1..f.len().saturating_sub(1))
        .filter(|&i| t[i] > 1.0 && f[i] > f[i - 1] && f[i] > f[i + 1])
        .collect();
    let highest = maxima.iter().map(|&i| f[i]).fold(0.0, f64::max);
    let Some(&i) = maxima.iter().find(|&&i| f[i] >= REVIVAL_FLOOR * highest) else {
        return Err(Error::PeakDetection { after: 1.0 });
    };
    let (a, b, c) = (f[i - 1], f[i], f[i + 1]);
    let offset = 0.5 * (a - c) / (a - 2.0 * b + c);
    let peak = b - 0.25 * (a - c) * offset;
    let dt = 0.5 * (t[i + 1] - t[i - 1]);
    Ok((t[i] + offset * dt, peak.clamp(b, 1.0)))
}

/// Fraction of the tallest post-decay maximum a peak must reach to count as
/// the first revival.
pub const REVIVAL_FLOOR: f64 = 0.5;

/// `-ln(F_1) / N` at the first revival peak.
pub fn revival_peak_density(record: &QuenchRecord, n_sites: usize) -> Result<f64> {
    let (_, peak) = first_revival(record)?;
    Ok(-peak.ln() / n_sites as f64)
}

/// Fidelity, density and optionally entropy on a time grid, from an exact
/// eigendecomposition.
pub fn record_quench<S: HilbertSpace>(
    space: &S,
    eig: &EigDecomposition,
    psi0: &StateVector,
    grid: &TimeGrid,
    entropy: Option<&dyn Fn(&StateVector) -> Result<f64>>,
) -> Result<QuenchRecord> {
    let c = eig.coefficients(psi0)?;
    let times = grid.points();
    let mut record = QuenchRecord {
        times: times.clone(),
        fidelity: Vec::with_capacity(times.len()),
        density_n: Vec::with_capacity(times.len()),
        entropy: entropy.map(|_| Vec::with_capacity(times.len())),
    };
    let density_diag: Vec<f64> = (0..space.dim())
        .map(|i| space.excitations(i) as f64 / space.n_sites() as f64)
        .collect();
    for &t in &times {
        let psi = eig.synthesize(&c, t - grid.t_start);
        record.fidelity.push(fidelity(psi0, &psi)?);
        record.density_n.push(
            psi.amplitudes()
                .iter()
                .zip(&density_diag)
                .map(|(a, d)| a.norm_sqr() * d)
                .sum(),
        );
        if let (Some(f), Some(out)) = (entropy, record.entropy.as_mut()) {
            out.push(f(&psi)?);
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_sector, enumerate_basis, BoundaryCondition, Inversion};
    use crate::operators::{build_pxp, HamiltonianParams};
    use std::f64::consts::LN_2;

    fn record(times: Vec<f64>, fidelity: Vec<f64>, density_n: Vec<f64>) -> QuenchRecord {
        QuenchRecord {
            times,
            fidelity,
            density_n,
            entropy: None,
        }
    }

    #[test]
    fn fidelity_limits() {
        let basis = enumerate_basis(6, BoundaryCondition::Periodic).unwrap();
        let a = basis.basis_state(0b000101).unwrap();
        let b = basis.basis_state(0b001001).unwrap();
        assert_eq!(fidelity(&a, &a).unwrap(), 1.0);
        assert_eq!(fidelity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn window_statistics() {
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
        let flat = record(times.clone(), vec![0.3; 41], vec![0.2; 41]);
        assert_eq!(delta_f(&flat, &WindowSpec::delta_f_default()).unwrap(), 0.0);
        assert_eq!(msd_n(&flat, 0.2, &WindowSpec::msd_default()).unwrap(), 0.0);
        assert!((msd_n(&flat, 0.1, &WindowSpec::msd_default()).unwrap() - 0.01).abs() < 1e-15);
        let empty = WindowSpec::new(30.0, 40.0).unwrap();
        assert!(matches!(delta_f(&flat, &empty), Err(Error::Window { .. })));
        assert!(WindowSpec::new(2.0, 1.0).is_err());
        // Linear n(t) = t/20 on [10, 20] against n_th = 0: mean of t^2/400 is 7/12.
        let lin = record(
            times.clone(),
            vec![1.0; 41],
            times.iter().map(|t| t / 20.0).collect(),
        );
        let exact = 7.0 / 12.0;
        assert!((msd_n(&lin, 0.0, &WindowSpec::msd_default()).unwrap() - exact).abs() < 2e-3);
    }

    #[test]
    fn densities_of_reference_states() {
        let basis = enumerate_basis(8, BoundaryCondition::Periodic).unwrap();
        assert_eq!(excitation_density(&basis, &basis.polarized()).unwrap(), 0.0);
        assert_eq!(
            excitation_density(&basis, &basis.z2().unwrap()).unwrap(),
            0.5
        );
        assert!(
            (excitation_density(&basis, &basis.z_plus().unwrap()).unwrap() - 0.5).abs() < 1e-15
        );
    }

    #[test]
    fn entropies_of_reference_states() {
        let basis = enumerate_basis(10, BoundaryCondition::Periodic).unwrap();
        assert!(
            entanglement_entropy(&basis, &basis.z2().unwrap(), 5)
                .unwrap()
                .abs()
                < 1e-14
        );
        assert!(
            entanglement_entropy(&basis, &basis.polarized(), 3)
                .unwrap()
                .abs()
                < 1e-14
        );
        let s = entanglement_entropy(&basis, &basis.z_plus().unwrap(), 5).unwrap();
        assert!((s - LN_2).abs() < 1e-12);
        let sector = build_sector(&basis, 0, Inversion::Even).unwrap();
        let compressed = sector.project(&basis, &basis.z_plus().unwrap()).unwrap();
        assert!(entanglement_entropy(&basis, &compressed, 5).is_err());
        assert!(entanglement_entropy(&basis, &basis.polarized(), 0).is_err());
    }

    #[test]
    fn ipr_bounds() {
        let basis = enumerate_basis(8, BoundaryCondition::Periodic).unwrap();
        let h = build_pxp(
            &basis,
            &HamiltonianParams::new(0.3, BoundaryCondition::Periodic),
        )
        .unwrap();
        let eig = EigDecomposition::new(&h).unwrap();
        assert!((ipr(&eig.eigenstate(2), &eig).unwrap() - 1.0).abs() < 1e-12);
        let c = vec![Complex64::new(1.0 / (eig.dim() as f64).sqrt(), 0.0); eig.dim()];
        let uniform = eig.synthesize(&c, 0.0);
        assert!((ipr(&uniform, &eig).unwrap() - eig.dim() as f64).abs() < 1e-9);
    }

    #[test]
    fn revival_detection() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let fid: Vec<f64> = times.iter().map(|t| 0.5 + 0.5 * (t * 1.3).cos()).collect();
        let rec = record(times, fid, vec![0.0; 200]);
        let (t, f) = first_revival(&rec).unwrap();
        assert!((t - 2.0 * std::f64::consts::PI / 1.3).abs() < 1e-3);
        assert!((f - 1.0).abs() < 1e-6);
        assert!(revival_peak_density(&rec, 10).unwrap().abs() < 1e-6);
        let decay = record(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![1.0, 0.5, 0.2, 0.1],
            vec![0.0; 4],
        );
        assert!(matches!(
            first_revival(&decay),
            Err(Error::PeakDetection { .. })
        ));
    }

    #[test]
    fn record_starts_at_unit_fidelity() {
        let basis = enumerate_basis(10, BoundaryCondition::Periodic).unwrap();
        let h = build_pxp(
            &basis,
            &HamiltonianParams::new(0.0, BoundaryCondition::Periodic),
        )
        .unwrap();
        let eig = EigDecomposition::new(&h).unwrap();
        let psi0 = basis.z2().unwrap();
        let ent = |psi: &StateVector| entanglement_entropy(&basis, psi, 5);
        let rec = record_quench(
            &basis,
            &eig,
            &psi0,
            &TimeGrid::new(0.0, 6.0, 0.05).unwrap(),
            Some(&ent),
        )
        .unwrap();
        assert!((rec.fidelity[0] - 1.0).abs() < 1e-10);
        assert_eq!(rec.entropy.as_ref().unwrap().len(), rec.times.len());
        let (t, f) = first_revival(&rec).unwrap();
        // PXP scar revival of the Neel state near 2 pi / 1.33.
        assert!((4.0..5.5).contains(&t) && f > 0.5, "t={t} f={f}");
    }
}
