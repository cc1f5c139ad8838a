use num_complex::Complex64;
use proptest::prelude::*;

use scarsim::basis::{dimension, is_legal, reflect};
use scarsim::linalg::dense_eigenvalues;
use scarsim::observables::{entanglement_entropy, fidelity};
use scarsim::propagation::expm_krylov;
use scarsim::ramping::{ramp_time_curve, RampOptions, RampSchedule};
use scarsim::sparse::LinearOperator;
use scarsim::tdvp::{energy_density, integrate_orbit, leakage, mps_state};
use scarsim::{
    all_sectors, apply_pi_reflection, build_pxp, enumerate_basis, ground_state, BoundaryCondition,
    ConstrainedBasis, HamiltonianParams, HilbertSpace, StateVector, TdvpPoint,
};

fn bc_strategy() -> impl Strategy<Value = BoundaryCondition> {
    prop_oneof![
        Just(BoundaryCondition::Periodic),
        Just(BoundaryCondition::Open)
    ]
}

fn random_state(basis: &ConstrainedBasis, seed: &[f64]) -> StateVector {
    let amps: Vec<Complex64> = (0..basis.dim())
        .map(|i| {
            let a = seed[(2 * i) % seed.len()] + 0.01 * i as f64;
            let b = seed[(2 * i + 1) % seed.len()] - 0.003 * i as f64;
            Complex64::new(a.sin(), (3.0 * b).cos())
        })
        .collect();
    StateVector::new(basis.tag(), amps).normalized()
}

fn reflected(basis: &ConstrainedBasis, psi: &StateVector) -> StateVector {
    let n = basis.n_sites();
    let mut out = vec![Complex64::default(); basis.dim()];
    for (i, &s) in basis.states().iter().enumerate() {
        out[basis.index_of(reflect(s, n)).unwrap()] = psi.amplitudes()[i];
    }
    StateVector::new(basis.tag(), out)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn basis_matches_brute_force(n in 1usize..=14, bc in bc_strategy()) {
        let basis = enumerate_basis(n, bc).unwrap();
        let brute: Vec<u32> = (0..1u32 << n).filter(|&s| is_legal(s, n, bc)).collect();
        prop_assert_eq!(basis.states(), &brute[..]);
        prop_assert_eq!(dimension(n, bc).unwrap(), brute.len());
        for (i, &s) in basis.states().iter().enumerate() {
            prop_assert_eq!(basis.index_of(s), Some(i));
        }
    }

    #[test]
    fn sectors_partition_the_space(n in 3usize..=14) {
        let basis = enumerate_basis(n, BoundaryCondition::Periodic).unwrap();
        let total: usize = all_sectors(&basis).unwrap().iter().map(|s| s.dim()).sum();
        prop_assert_eq!(total, basis.dim());
    }

    #[test]
    fn hamiltonian_is_hermitian_and_blockaded(half in 2usize..=6, mu in -5.0f64..5.0, bc in bc_strategy()) {
        let n = 2 * half;
        let basis = enumerate_basis(n, bc).unwrap();
        let h = build_pxp(&basis, &HamiltonianParams::new(mu, bc)).unwrap();
        prop_assert!(h.hermiticity_error() < 1e-12);
        for (i, j, _) in h.triplets() {
            prop_assert!(is_legal(basis.state(i), n, bc) && is_legal(basis.state(j), n, bc));
            if i != j {
                prop_assert_eq!((basis.state(i) ^ basis.state(j)).count_ones(), 1);
            }
        }
    }

    #[test]
    fn pi_reflection_anticommutes(half in 2usize..=6, mu in -5.0f64..5.0, bc in bc_strategy(), seed in prop::collection::vec(-3.0f64..3.0, 8)) {
        let basis = enumerate_basis(2 * half, bc).unwrap();
        let hp = build_pxp(&basis, &HamiltonianParams::new(mu, bc)).unwrap();
        let hm = build_pxp(&basis, &HamiltonianParams::new(-mu, bc)).unwrap();
        let psi = random_state(&basis, &seed);
        let mut a = vec![Complex64::default(); basis.dim()];
        hp.apply(psi.amplitudes(), &mut a);
        let lhs = apply_pi_reflection(&basis, &StateVector::new(basis.tag(), a)).unwrap();
        let mut b = vec![Complex64::default(); basis.dim()];
        hm.apply(apply_pi_reflection(&basis, &psi).unwrap().amplitudes(), &mut b);
        for (x, y) in lhs.amplitudes().iter().zip(&b) {
            prop_assert!((x + y).norm() == 0.0, "{} {}", x, y);
        }
    }

    #[test]
    fn fidelity_is_symmetric_and_phase_blind(seed in prop::collection::vec(-3.0f64..3.0, 6), phase in 0.0f64..6.3) {
        let basis = enumerate_basis(8, BoundaryCondition::Periodic).unwrap();
        let a = random_state(&basis, &seed);
        let b = random_state(&basis, &seed[1..]);
        let rot = StateVector::new(basis.tag(), a.amplitudes().iter().map(|x| x * Complex64::from_polar(1.0, phase)).collect());
        let f = fidelity(&a, &b).unwrap();
        prop_assert!((f - fidelity(&b, &a).unwrap()).abs() < 1e-14);
        prop_assert!((f - fidelity(&rot, &b).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn entropy_agrees_from_both_ends(n in 4usize..=12, cut_frac in 0.1f64..0.9, bc in bc_strategy(), seed in prop::collection::vec(-3.0f64..3.0, 6)) {
        let basis = enumerate_basis(n, bc).unwrap();
        let cut = ((n as f64 * cut_frac).round() as usize).clamp(1, n - 1);
        let psi = random_state(&basis, &seed);
        let left = entanglement_entropy(&basis, &psi, cut).unwrap();
        let right = entanglement_entropy(&basis, &reflected(&basis, &psi), n - cut).unwrap();
        prop_assert!((left - right).abs() < 1e-10, "{} {}", left, right);
        prop_assert!(entanglement_entropy(&basis, &basis.polarized(), cut).unwrap().abs() < 1e-12);
    }

    #[test]
    fn krylov_is_unitary_and_reversible(mu in -3.0f64..3.0, t in 0.1f64..3.0, seed in prop::collection::vec(-3.0f64..3.0, 6)) {
        let basis = enumerate_basis(12, BoundaryCondition::Periodic).unwrap();
        let h = build_pxp(&basis, &HamiltonianParams::new(mu, BoundaryCondition::Periodic)).unwrap();
        let psi = random_state(&basis, &seed);
        let tol = 1e-10;
        let fwd = expm_krylov(&h, psi.amplitudes(), t, tol).unwrap();
        let norm: f64 = fwd.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-10);
        let back = expm_krylov(&h, &fwd, -t, tol).unwrap();
        let err: f64 = back.iter().zip(psi.amplitudes()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err < 2.0 * tol, "{}", err);
    }

    #[test]
    fn polarized_fidelity_is_even_in_mu(mu in 0.1f64..4.0, t in 0.0f64..10.0) {
        let basis = enumerate_basis(10, BoundaryCondition::Periodic).unwrap();
        let z = basis.polarized();
        let f = |m: f64| {
            let h = build_pxp(&basis, &HamiltonianParams::new(m, BoundaryCondition::Periodic)).unwrap();
            fidelity(&z, &StateVector::new(basis.tag(), expm_krylov(&h, z.amplitudes(), t, 1e-12).unwrap())).unwrap()
        };
        prop_assert!((f(mu) - f(-mu)).abs() < 1e-9);
    }

    #[test]
    fn mps_states_are_normalized_and_blockaded(theta in -3.2f64..3.2, phi in -3.2f64..3.2, n in 4usize..=12) {
        let basis = enumerate_basis(n, BoundaryCondition::Periodic).unwrap();
        let psi = mps_state(&basis, TdvpPoint::new(theta, phi));
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        prop_assert!(leakage(theta) >= 0.0);
    }

    #[test]
    fn orbits_conserve_energy(theta in -1.5f64..1.5, phi in -3.1f64..3.1, mu in -4.0f64..4.0) {
        let orbit = integrate_orbit(TdvpPoint::new(theta, phi), mu, 10.0, 1e-10).unwrap();
        prop_assert!(orbit.energy_drift() <= 1e-9, "{}", orbit.energy_drift());
        let e0 = energy_density(TdvpPoint::new(theta, phi), mu);
        prop_assert!((orbit.energy_density[0] - e0).abs() < 1e-14);
    }

    #[test]
    fn ground_energy_is_monotone_in_mu(n in 4usize..=12, mu in -4.0f64..4.0, step in 0.01f64..1.0) {
        let basis = enumerate_basis(n, BoundaryCondition::Periodic).unwrap();
        let e = |m: f64| ground_state(&build_pxp(&basis, &HamiltonianParams::new(m, BoundaryCondition::Periodic)).unwrap()).unwrap().0;
        prop_assert!(e(mu - step) <= e(mu) + 1e-10);
    }
}

#[test]
fn spectra_reflect_under_mu_sign() {
    for bc in [BoundaryCondition::Periodic, BoundaryCondition::Open] {
        let basis = enumerate_basis(10, bc).unwrap();
        for mu in [0.3, 1.31, 2.7] {
            let spec = |m: f64| {
                dense_eigenvalues(&build_pxp(&basis, &HamiltonianParams::new(m, bc)).unwrap())
            };
            let plus = spec(mu);
            let mut minus: Vec<f64> = spec(-mu).iter().map(|e| -e).collect();
            minus.sort_by(f64::total_cmp);
            assert!(plus.iter().zip(&minus).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }
}

#[test]
fn orbit_angle_is_even_in_mu() {
    for mu in [0.4, 1.6, 3.0] {
        let a = integrate_orbit(TdvpPoint::new(0.0, 0.0), mu, 8.0, 1e-10).unwrap();
        let b = integrate_orbit(TdvpPoint::new(0.0, 0.0), -mu, 8.0, 1e-10).unwrap();
        for t in [1.0, 3.0, 6.5] {
            let at = |o: &scarsim::TdvpOrbit| {
                let i = o.times.iter().position(|&x| x >= t).unwrap();
                let (t0, t1) = (o.times[i - 1], o.times[i]);
                let w = (t - t0) / (t1 - t0);
                (1.0 - w) * o.points[i - 1].theta.sin().powi(2)
                    + w * o.points[i].theta.sin().powi(2)
            };
            assert!((at(&a) - at(&b)).abs() < 1e-6, "mu {mu} t {t}");
        }
    }
}

/// Running the same schedule at half speed, `mu'(t) = mu(t / 2)`, never
/// hurts the preparation of a gapped target.
#[test]
fn slower_ramps_do_not_lose_overlap() {
    let fast = RampSchedule::default();
    let slow = RampSchedule {
        a: 4.0 * fast.a,
        b: 2.0 * fast.b,
        c: 2.0 * fast.c,
        ..fast
    };
    let targets = [-4.0, 1.0, 4.0];
    let opts = RampOptions {
        sector: true,
        dt: 0.005,
        ..RampOptions::default()
    };
    let a = ramp_time_curve(10, &fast, &targets, &opts).unwrap();
    let b = ramp_time_curve(
        10,
        &slow,
        &targets,
        &RampOptions {
            t_max: 2.0 * opts.t_max,
            ..opts
        },
    )
    .unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!(
            q.overlap >= p.overlap - 1e-6,
            "mu {}: {} -> {}",
            p.mu,
            p.overlap,
            q.overlap
        );
        assert!(
            (q.t_ramp - 2.0 * p.t_ramp).abs() < 0.25,
            "{} {}",
            p.t_ramp,
            q.t_ramp
        );
    }
}
