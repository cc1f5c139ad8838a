//! Ground-state preparation by a double-pole chemical-potential ramp.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{
    build_sector, enumerate_basis, BoundaryCondition, ConstrainedBasis, HilbertSpace, Inversion,
    SymmetrySector,
};
use crate::error::{Error, Result};
use crate::operators::{build_pxp, HamiltonianParams, PxpFamily, MU_CRITICAL};
use crate::propagation::{evolve_time_dependent_observed, TimeGrid};
use crate::spectroscopy::ground_state;
use crate::state::StateVector;

/// `mu(t) = A/(t-B)^2 - A/(t-C)^2 + mu_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub mu_c: f64,
}

impl Default for RampSchedule {
    fn default() -> Self {
        Self {
            a: -40.0,
            b: 30.0,
            c: -0.1,
            mu_c: MU_CRITICAL,
        }
    }
}

/// Closest approach to a pole that is still evaluated.
pub const POLE_GUARD: f64 = 1e-9;

impl RampSchedule {
    /// The same schedule with `A` of the sign that sweeps from the side of
    /// `initial` towards the other phase.
    pub fn for_initial(&self, initial: RampInitial) -> Self {
        let a = match initial {
            RampInitial::Polarized => -self.a.abs(),
            RampInitial::Neel => self.a.abs(),
        };
        Self { a, ..*self }
    }

    pub fn mu(&self, t: f64) -> Result<f64> {
        mu_of_t(self, t)
    }
}

/// Evaluates the schedule; poles and non-finite values are schedule errors.
pub fn mu_of_t(s: &RampSchedule, t: f64) -> Result<f64> {
    for pole in [s.b, s.c] {
        if (t - pole).abs() < POLE_GUARD {
            return Err(Error::Schedule(format!("t = {t} hits the pole at {pole}")));
        }
    }
    let mu = s.a / (t - s.b).powi(2) - s.a / (t - s.c).powi(2) + s.mu_c;
    if !mu.is_finite() {
        return Err(Error::Schedule(format!("mu({t}) is not finite")));
    }
    Ok(mu)
}

/// Starting state of a ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampInitial {
    /// `|0>`, the ground state at `mu -> +inf`.
    Polarized,
    /// The Neel pair `|Z+>`, the periodic ground state at `mu -> -inf`.
    Neel,
}

impl RampInitial {
    /// Phase of the target: `|Z+>` below the critical point, `|0>` otherwise.
    pub fn for_target(target_mu: f64, mu_c: f64) -> Self {
        if target_mu < mu_c {
            Self::Neel
        } else {
            Self::Polarized
        }
    }
}

/// Integration and scan settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampOptions {
    pub t_max: f64,
    pub dt: f64,
    /// Overlaps are recorded every `dt_scan`.
    pub dt_scan: f64,
    pub tol: f64,
    /// Evolve in the `k = 0`, even sector instead of the full basis.
    pub sector: bool,
}

impl Default for RampOptions {
    fn default() -> Self {
        Self {
            t_max: 25.0,
            dt: 0.0025,
            dt_scan: 0.1,
            tol: 1e-8,
            sector: false,
        }
    }
}

/// Outcome of [`ramp_prepare`].
#[derive(Debug, Clone, PartialEq)]
pub struct RampResult {
    pub state: StateVector,
    pub t_ramp: f64,
    pub overlap: f64,
    /// `(t, mu(t), overlap)` at every scan time.
    pub curve: Vec<(f64, f64, f64)>,
    /// Largest `| ||psi|| - 1 |` seen along the ramp.
    pub norm_drift: f64,
}

enum RampSpace {
    Full(ConstrainedBasis),
    Sector(SymmetrySector),
}

impl RampSpace {
    fn new(n_sites: usize, sector: bool) -> Result<Self> {
        let basis = enumerate_basis(n_sites, BoundaryCondition::Periodic)?;
        Ok(if sector {
            Self::Sector(build_sector(&basis, 0, Inversion::Even)?)
        } else {
            Self::Full(basis)
        })
    }

    fn family(&self) -> PxpFamily {
        match self {
            Self::Full(b) => PxpFamily::new(b),
            Self::Sector(s) => PxpFamily::new(s),
        }
    }

    fn ground_state(&self, mu: f64) -> Result<StateVector> {
        let params = HamiltonianParams::new(mu, BoundaryCondition::Periodic);
        match self {
            Self::Full(b) => {
                // The zero-momentum even sector holds the ground state on both
                // sides of the transition; solving there avoids the Z+/Z-
                // near-degeneracy deep in the ordered phase.
                let s = build_sector(b, 0, Inversion::Even)?;
                s.expand(b, &ground_state(&build_pxp(&s, &params)?)?.1)
            }
            Self::Sector(s) => Ok(ground_state(&build_pxp(s, &params)?)?.1),
        }
    }

    fn initial(&self, initial: RampInitial) -> Result<StateVector> {
        let full = match self {
            Self::Full(b) => b.clone(),
            Self::Sector(s) => enumerate_basis(s.n_sites(), BoundaryCondition::Periodic)?,
        };
        let psi = match initial {
            RampInitial::Polarized => full.polarized(),
            RampInitial::Neel => full.z_plus()?,
        };
        match self {
            Self::Full(_) => Ok(psi),
            Self::Sector(s) => s.project(&full, &psi),
        }
    }
}

/// One ramp evolution scored against several targets at once. Returns, per
/// target, the best `(t, overlap, state)` and the full scan curve.
fn scan_ramp(
    space: &RampSpace,
    schedule: &RampSchedule,
    initial: RampInitial,
    targets: &[StateVector],
    opts: &RampOptions,
) -> Result<(Vec<(f64, f64, StateVector)>, Vec<Vec<(f64, f64, f64)>>, f64)> {
    if !(opts.dt > 0.0 && opts.dt_scan >= opts.dt && opts.t_max > 0.0) {
        return Err(Error::Config(
            "ramp needs dt > 0, dt_scan >= dt and t_max > 0".into(),
        ));
    }
    for pole in [schedule.b, schedule.c] {
        if pole >= 0.0 && pole <= opts.t_max {
            return Err(Error::Schedule(format!(
                "pole at t = {pole} lies inside the ramp window [0, {}]",
                opts.t_max
            )));
        }
    }
    let family = space.family();
    let psi0 = space.initial(initial)?;
    let grid = TimeGrid::new(0.0, opts.t_max, opts.dt)?;
    let every = (opts.dt_scan / opts.dt).round().max(1.0) as usize;
    let mut step = 0usize;
    let mut best: Vec<(f64, f64, StateVector)> =
        targets.iter().map(|_| (0.0, -1.0, psi0.clone())).collect();
    let mut curves: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); targets.len()];
    let mut drift: f64 = 0.0;
    let mut failure: Option<Error> = None;
    evolve_time_dependent_observed(
        |t| schedule.mu(t),
        &family,
        &psi0,
        &grid,
        opts.tol,
        |t, psi| {
            drift = drift.max((psi.norm() - 1.0).abs());
            let on_scan = step % every == 0 || (t - opts.t_max).abs() < 1e-12;
            step += 1;
            if !on_scan {
                return;
            }
            let mu = match schedule.mu(t) {
                Ok(mu) => mu,
                Err(e) => {
                    failure.get_or_insert(e);
                    return;
                }
            };
            for (i, target) in targets.iter().enumerate() {
                let o = target.overlap(psi).map(|c| c.norm_sqr()).unwrap_or(0.0);
                curves[i].push((t, mu, o));
                if o > best[i].1 {
                    best[i] = (t, o, psi.clone());
                }
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((best, curves, drift))
}

/// Prepares `GS(target_mu)` by ramping from `initial` and stopping at the
/// scan time of highest overlap. `|Z2>` is represented by its symmetric
/// partner `|Z+>`.
pub fn ramp_prepare(
    n_sites: usize,
    schedule: &RampSchedule,
    target_mu: f64,
    initial: RampInitial,
    opts: &RampOptions,
) -> Result<RampResult> {
    let space = RampSpace::new(n_sites, opts.sector)?;
    let target = space.ground_state(target_mu)?;
    let (mut best, mut curves, norm_drift) = scan_ramp(
        &space,
        schedule,
        initial,
        std::slice::from_ref(&target),
        opts,
    )?;
    let (t_ramp, overlap, state) = best.remove(0);
    if overlap <= 0.5 {
        return Err(Error::PreparationFailed {
            best_overlap: overlap,
            best_time: t_ramp,
        });
    }
    Ok(RampResult {
        state,
        t_ramp,
        overlap,
        curve: curves.remove(0),
        norm_drift,
    })
}

/// One row of [`ramp_time_curve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampPoint {
    pub mu: f64,
    pub initial: RampInitial,
    pub t_ramp: f64,
    pub overlap: f64,
    /// Set when the point failed; `t_ramp` and `overlap` then describe the
    /// best attempt.
    pub error: Option<String>,
}

/// Optimal stopping times over a grid of targets. Each target uses the
/// initial state of its own phase and the matching sign of `A`; targets
/// sharing a phase share one evolution.
pub fn ramp_time_curve(
    n_sites: usize,
    schedule: &RampSchedule,
    mu_grid: &[f64],
    opts: &RampOptions,
) -> Result<Vec<RampPoint>> {
    let space = RampSpace::new(n_sites, opts.sector)?;
    let targets: Vec<Result<StateVector>> = mu_grid
        .par_iter()
        .map(|&mu| space.ground_state(mu))
        .collect();
    let mut out: Vec<Option<RampPoint>> = vec![None; mu_grid.len()];
    for initial in [RampInitial::Polarized, RampInitial::Neel] {
        let idx: Vec<usize> = (0..mu_grid.len())
            .filter(|&i| {
                RampInitial::for_target(mu_grid[i], schedule.mu_c) == initial && targets[i].is_ok()
            })
            .collect();
        if idx.is_empty() {
            continue;
        }
        let states: Vec<StateVector> = idx
            .iter()
            .map(|&i| targets[i].as_ref().unwrap().clone())
            .collect();
        let sched = schedule.for_initial(initial);
        match scan_ramp(&space, &sched, initial, &states, opts) {
            Ok((best, _, _)) => {
                for (&i, (t, o, _)) in idx.iter().zip(best) {
                    let error = (o <= 0.5).then(|| {
                        Error::PreparationFailed {
                            best_overlap: o,
                            best_time: t,
                        }
                        .to_string()
                    });
                    out[i] = Some(RampPoint {
                        mu: mu_grid[i],
                        initial,
                        t_ramp: t,
                        overlap: o,
                        error,
                    });
                }
            }
            Err(e) => {
                for &i in &idx {
                    out[i] = Some(RampPoint {
                        mu: mu_grid[i],
                        initial,
                        t_ramp: f64::NAN,
                        overlap: f64::NAN,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            p.unwrap_or_else(|| RampPoint {
                mu: mu_grid[i],
                initial: RampInitial::for_target(mu_grid[i], schedule.mu_c),
                t_ramp: f64::NAN,
                overlap: f64::NAN,
                error: Some(
                    targets[i]
                        .as_ref()
                        .err()
                        .map(|e| e.to_string())
                        .unwrap_or_default(),
                ),
            })
        })
        .collect())
}
