//! The chi = 2 blockade MPS manifold: states, semiclassical flow, leakage,
//! projection of exact states, and the modulated-ground-state ansatz.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_sector, BoundaryCondition, ConstrainedBasis, HilbertSpace, Inversion};
use crate::error::{Error, Result};
use crate::operators::{
    apply_phase_pulse, build_modulated, build_pxp, HamiltonianParams, ModulatedParams,
};
use crate::optimize::nelder_mead;
use crate::sparse::LinearOperator;
use crate::spectroscopy::ground_state;
use crate::state::{dot, StateVector};

/// Manifold coordinates. Angles are kept unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdvpPoint {
    pub theta: f64,
    pub phi: f64,
}

impl TdvpPoint {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    /// Regular chart `(u, v) = (sin t cos p, sin t sin p)`; the unit disk is the
    /// whole physical manifold.
    pub fn chart(&self) -> (f64, f64) {
        let s = self.theta.sin();
        (s * self.phi.cos(), s * self.phi.sin())
    }

    /// The same physical state with `theta` in `[0, pi/2]` and `phi` in
    /// `(-pi, pi]`, using `(t, p) ~ (pi - t, p)` (global sign),
    /// `(t, p) ~ (-t, p + pi)` and `2 pi` periodicity.
    pub fn canonical(&self) -> Self {
        let mut t = wrap(self.theta);
        let mut p = self.phi;
        if t < 0.0 {
            t = -t;
            p += PI;
        }
        if t > FRAC_PI_2 {
            t = PI - t;
        }
        Self {
            theta: t,
            phi: wrap(p),
        }
    }

    /// Chart point mapped back to angles, choosing the branch closest to `prev`.
    pub fn from_chart_near(u: f64, v: f64, prev: TdvpPoint) -> Self {
        let s = u.hypot(v).min(1.0);
        let a = s.asin();
        let mut best = prev;
        let mut best_d = f64::INFINITY;
        for sigma in [1.0, -1.0] {
            let phi = if s > 0.0 {
                unwrap_near((sigma * v).atan2(sigma * u), prev.phi)
            } else {
                prev.phi
            };
            for theta in [sigma * a, sigma * (PI - a)] {
                let theta = unwrap_near(theta, prev.theta);
                let d = (theta - prev.theta).abs() + (phi - prev.phi).abs();
                if d < best_d {
                    best_d = d;
                    best = Self { theta, phi };
                }
            }
        }
        best
    }
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

fn unwrap_near(x: f64, reference: f64) -> f64 {
    x + 2.0 * PI * ((reference - x) / (2.0 * PI)).round()
}

fn site_matrices(p: &TdvpPoint) -> ([[Complex64; 2]; 2], [[Complex64; 2]; 2]) {
    let z = Complex64::default();
    let a0 = [
        [Complex64::new(p.theta.cos(), 0.0), z],
        [Complex64::new(p.theta.sin(), 0.0), z],
    ];
    // i e^{-i phi}: the phase that makes `eom_rhs` and `energy_density` the
    // flow and energy of this state under `sum P X P + mu n`.
    let a1 = [[z, Complex64::from_polar(1.0, FRAC_PI_2 - p.phi)], [z, z]];
    (a0, a1)
}

fn mat_mul(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut c = [[Complex64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Unnormalized amplitude of one configuration: the trace (periodic) or
/// `(1,0) . prod . (1,1)` (open) of the site matrices, site 0 leftmost,
/// site `j` using `cell[j mod K]`.
pub fn mps_amplitude(
    config: u32,
    n_sites: usize,
    bc: BoundaryCondition,
    cell: &[TdvpPoint],
) -> Complex64 {
    let mats: Vec<_> = cell.iter().map(site_matrices).collect();
    let one = Complex64::new(1.0, 0.0);
    let mut m = [[one, Complex64::default()], [Complex64::default(), one]];
    for j in 0..n_sites {
        let (a0, a1) = &mats[j % cell.len()];
        m = mat_mul(&m, if (config >> j) & 1 == 1 { a1 } else { a0 });
    }
    match bc {
        BoundaryCondition::Periodic => m[0][0] + m[1][1],
        BoundaryCondition::Open => m[0][0] + m[0][1],
    }
}

/// Normalized K-site-cell MPS state on a full basis.
pub fn mps_state_cell(basis: &ConstrainedBasis, cell: &[TdvpPoint]) -> Result<StateVector> {
    let n = basis.n_sites();
    if cell.is_empty() || n % cell.len() != 0 {
        return Err(Error::Shape {
            cell: cell.len(),
            n_sites: n,
        });
    }
    let amps = basis
        .states()
        .iter()
        .map(|&s| mps_amplitude(s, n, basis.bc(), cell))
        .collect();
    Ok(StateVector::new(basis.tag(), amps).normalized())
}

/// Normalized uniform (`K = 1`) MPS state.
pub fn mps_state(basis: &ConstrainedBasis, point: TdvpPoint) -> StateVector {
    mps_state_cell(basis, &[point]).expect("a one-site cell divides every chain")
}

/// Squared norm of the unnormalized periodic uniform MPS:
/// `Tr(M^N) = 1 + (-sin^2 theta)^N` with `M = [[cos^2, 1], [sin^2, 0]]`.
pub fn mps_norm_sq_periodic(theta: f64, n_sites: usize) -> f64 {
    1.0 + (-theta.sin().powi(2)).powi(n_sites as i32)
}

/// Right-hand side of the uniform-manifold equations of motion
/// `(d theta / dt, d phi / dt)`.
///
/// Below `|sin theta| < 1e-6` the ratio `sin phi / sin theta` is replaced by
/// its value on the `phi = 0` ray through the pole, giving `d phi / dt = mu`
/// there. Orbits are integrated in the regular chart instead.
pub fn eom_rhs(point: TdvpPoint, mu: f64) -> (f64, f64) {
    let (st, ct) = point.theta.sin_cos();
    let (sp, cp) = point.phi.sin_cos();
    let s2 = st * st;
    let dtheta = -ct * cp * (1.0 + s2);
    let ratio = if st.abs() < 1e-6 { 0.0 } else { sp / st };
    (dtheta, mu + ratio * (1.0 - 4.0 * s2 - s2 * s2))
}

/// Equations of motion in the chart `(u, v)`; regular everywhere.
pub fn chart_rhs(u: f64, v: f64, mu: f64) -> (f64, f64) {
    let s2 = u * u + v * v;
    (-1.0 + s2 * s2 + 4.0 * v * v - mu * v, u * (mu - 4.0 * v))
}

/// Energy per site of the uniform MPS in the thermodynamic limit.
pub fn energy_density(point: TdvpPoint, mu: f64) -> f64 {
    let st = point.theta.sin();
    let ct = point.theta.cos();
    st / (1.0 + st * st) * (mu * st + 2.0 * ct * ct * point.phi.sin())
}

fn chart_energy(u: f64, v: f64, mu: f64) -> f64 {
    let s2 = u * u + v * v;
    (mu * s2 + 2.0 * (1.0 - s2) * v) / (1.0 + s2)
}

/// Leakage rate `gamma^2 = sin^6 theta / (1 + sin^2 theta)`.
pub fn leakage(theta: f64) -> f64 {
    let s2 = theta.sin().powi(2);
    s2 * s2 * s2 / (1.0 + s2)
}

/// Point of the polarized-state orbit opposite to `(0, 0)`: zero energy and
/// `phi = sign(mu) pi / 2`, `sin theta = (|mu| - sqrt(mu^2 + 16)) / 4`.
pub fn antipodal_point(mu: f64) -> TdvpPoint {
    let s = (mu.abs() - (mu * mu + 16.0).sqrt()) / 4.0;
    let phi = if mu < 0.0 { -FRAC_PI_2 } else { FRAC_PI_2 };
    TdvpPoint {
        theta: s.asin(),
        phi,
    }
}

/// Integrated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdvpOrbit {
    pub times: Vec<f64>,
    pub points: Vec<TdvpPoint>,
    pub energy_density: Vec<f64>,
    pub mu: f64,
    /// First return to the start point, if found.
    pub period: Option<f64>,
    /// Zeros of `d theta / dt` (`cos phi = 0`) in time order.
    pub turning_points: Vec<(f64, TdvpPoint)>,
    /// Coordinates used by the integrator.
    pub chart: String,
}

impl TdvpOrbit {
    /// `max |E(t) - E(0)|` per site.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy_density[0];
        self.energy_density
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }
}

/// Integrator settings for [`integrate_orbit_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitOptions {
    pub tol: f64,
    /// Output spacing; `None` records every accepted step.
    pub sample_dt: Option<f64>,
    /// Distance to the start below which a nearest approach counts as a return.
    pub return_tol: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            sample_dt: None,
            return_tol: 1e-6,
        }
    }
}

/// Adaptive Dormand-Prince 5(4) integration from `start` up to `t_end`.
pub fn integrate_orbit(start: TdvpPoint, mu: f64, t_end: f64, tol: f64) -> Result<TdvpOrbit> {
    integrate_orbit_with(
        start,
        mu,
        t_end,
        OrbitOptions {
            tol,
            ..Default::default()
        },
    )
}

type Y = [f64; 2];

/// Local error target per step as a fraction of the requested tolerance, so
/// that the accumulated energy error over long orbits stays within `10 tol`.
const LOCAL_TOL_FRACTION: f64 = 0.01;

fn f(y: &Y, mu: f64) -> Y {
    let (a, b) = chart_rhs(y[0], y[1], mu);
    [a, b]
}

/// One Dormand-Prince step: fifth-order solution and error estimate.
fn dp_step(y: &Y, h: f64, mu: f64) -> (Y, f64) {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut k = [[0.0; 2]; 7];
    k[0] = f(y, mu);
    for s in 0..6 {
        let mut yi = *y;
        for (j, kj) in k.iter().enumerate().take(s + 1) {
            yi[0] += h * C[s][j] * kj[0];
            yi[1] += h * C[s][j] * kj[1];
        }
        k[s + 1] = f(&yi, mu);
    }
    let mut y5 = *y;
    for (j, kj) in k.iter().enumerate().take(6) {
        y5[0] += h * C[5][j] * kj[0];
        y5[1] += h * C[5][j] * kj[1];
    }
    let mut err: f64 = 0.0;
    for i in 0..2 {
        let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * h;
        err = err.max(e.abs());
    }
    (y5, err)
}

/// Root of `g` between `y0` (at offset 0) and a full step `h`, by bisection
/// on re-integrated sub-steps. Returns the offset and state.
fn locate<G: Fn(&Y) -> f64>(y0: &Y, h: f64, mu: f64, g: G) -> (f64, Y) {
    let g0 = g(y0);
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (ym, _) = dp_step(y0, mid, mu);
        if g(&ym).signum() == g0.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    (tau, dp_step(y0, tau, mu).0)
}

/// [`integrate_orbit`] with explicit options.
pub fn integrate_orbit_with(
    start: TdvpPoint,
    mu: f64,
    t_end: f64,
    opts: OrbitOptions,
) -> Result<TdvpOrbit> {
    if !(start.theta.is_finite()
        && start.phi.is_finite()
        && mu.is_finite()
        && t_end.is_finite()
        && t_end >= 0.0)
    {
        return Err(Error::Config(
            "orbit needs finite start, mu and a non-negative duration".into(),
        ));
    }
    let (u0, v0) = start.chart();
    let y_start: Y = [u0, v0];
    let mut y = y_start;
    let mut t = 0.0;
    let mut h = 0.01f64.min(t_end.max(1e-12));
    let mut prev = start;
    let mut orbit = TdvpOrbit {
        times: vec![0.0],
        points: vec![start],
        energy_density: vec![chart_energy(u0, v0, mu)],
        mu,
        period: None,
        turning_points: Vec::new(),
        chart: "uv".into(),
    };
    let mut next_sample = opts.sample_dt.map(|dt| dt.min(t_end));
    let mut max_dist: f64 = 0.0;
    let dist2 = |y: &Y| (y[0] - y_start[0]).powi(2) + (y[1] - y_start[1]).powi(2);
    let approach = |y: &Y| {
        let d = f(y, mu);
        (y[0] - y_start[0]) * d[0] + (y[1] - y_start[1]) * d[1]
    };

    while t < t_end {
        let mut step = h.min(t_end - t);
        if let Some(ts) = next_sample {
            step = step.min(ts - t);
        }
        if step <= 0.0 {
            break;
        }
        let (y_new, err_abs) = dp_step(&y, step, mu);
        let scale = LOCAL_TOL_FRACTION * opts.tol * (1.0 + y[0].abs().max(y[1].abs()));
        let err = err_abs / scale;
        if err > 1.0 {
            h = step * (0.9 * err.powf(-0.2)).max(0.2);
            if h < 1e-14 {
                return Err(Error::Propagation { residual: err_abs });
            }
            continue;
        }

        // Turning points: sign change of u strictly inside the step.
        if y[0] != 0.0 && y[0].signum() != y_new[0].signum() {
            let (tau, yc) = locate(&y, step, mu, |z| z[0]);
            let p = TdvpPoint::from_chart_near(yc[0], yc[1], prev);
            orbit.turning_points.push((t + tau, p));
        }
        // First return: distance to the start has a minimum after leaving it.
        if orbit.period.is_none() && max_dist.sqrt() > 100.0 * opts.return_tol {
            let (g0, g1) = (approach(&y), approach(&y_new));
            if g0 < 0.0 && g1 >= 0.0 {
                let (tau, yc) = locate(&y, step, mu, approach);
                if dist2(&yc).sqrt() < opts.return_tol {
                    orbit.period = Some(t + tau);
                }
            }
        }
        max_dist = max_dist.max(dist2(&y_new));

        t += step;
        y = y_new;
        prev = TdvpPoint::from_chart_near(y[0], y[1], prev);
        let record = match next_sample {
            Some(ts) if (t - ts).abs() <= 1e-12 * ts.max(1.0) => {
                let dt = opts.sample_dt.unwrap();
                next_sample = Some((ts + dt).min(t_end));
                true
            }
            Some(_) => false,
            None => true,
        };
        if record || t >= t_end {
            if orbit.times.last() != Some(&t) {
                orbit.times.push(t);
                orbit.points.push(prev);
                orbit.energy_density.push(chart_energy(y[0], y[1], mu));
            }
        }
        h = step
            * if err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
    }
    Ok(orbit)
}

/// Finite-size leakage `||iH psi + sum_x xdot d_x psi - a psi||^2 / N`
/// minimized over `a`, with thermodynamic-limit velocities and central
/// finite-difference tangents.
pub fn finite_size_leakage(basis: &ConstrainedBasis, point: TdvpPoint, mu: f64) -> Result<f64> {
    let h = build_pxp(basis, &HamiltonianParams::new(mu, basis.bc()))?;
    let psi = mps_state(basis, point);
    let (dtheta, dphi) = eom_rhs(point, mu);
    let eps = 1e-5;
    let diff = |dt: f64, dp: f64| -> Vec<Complex64> {
        let plus = mps_state(basis, TdvpPoint::new(point.theta + dt, point.phi + dp));
        let minus = mps_state(basis, TdvpPoint::new(point.theta - dt, point.phi - dp));
        plus.amplitudes()
            .iter()
            .zip(minus.amplitudes())
            .map(|(a, b)| (a - b) / (2.0 * eps))
            .collect()
    };
    let d_theta = diff(eps, 0.0);
    let d_phi = diff(0.0, eps);
    let mut hpsi = vec![Complex64::default(); psi.dim()];
    h.apply(psi.amplitudes(), &mut hpsi);
    let i = Complex64::new(0.0, 1.0);
    let mut r: Vec<Complex64> = (0..psi.dim())
        .map(|k| i * hpsi[k] + d_theta[k] * dtheta + d_phi[k] * dphi)
        .collect();
    let along = dot(psi.amplitudes(), &r);
    for (rk, pk) in r.iter_mut().zip(psi.amplitudes()) {
        *rk -= pk * along;
    }
    Ok(r.iter().map(|x| x.norm_sqr()).sum::<f64>() / basis.n_sites() as f64)
}

/// Thermodynamic-limit leakage from finite periodic chains: least-squares fit
/// of `g + a/N + (b + cN)(-sin^2 theta)^N` to [`finite_size_leakage`] over
/// `sizes`. Returns `(g, per-size values)`.
pub fn extrapolated_leakage(point: TdvpPoint, mu: f64, sizes: &[usize]) -> Result<(f64, Vec<f64>)> {
    if sizes.len() < 4 {
        return Err(Error::Config(
            "leakage extrapolation needs at least four sizes".into(),
        ));
    }
    let values = sizes
        .iter()
        .map(|&n| {
            finite_size_leakage(
                &ConstrainedBasis::new(n, BoundaryCondition::Periodic)?,
                point,
                mu,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let q = -point.theta.sin().powi(2);
    let design = nalgebra::DMatrix::from_fn(sizes.len(), 4, |r, c| {
        let n = sizes[r] as f64;
        match c {
            0 => 1.0,
            1 => 1.0 / n,
            2 => q.powi(sizes[r] as i32),
            _ => n * q.powi(sizes[r] as i32),
        }
    });
    let rhs = nalgebra::DVector::from_column_slice(&values);
    let fit = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Config(format!("leakage fit failed: {e}")))?;
    Ok((fit[0], values))
}

/// Amplitude sums of a state over the classes on which the uniform MPS is
/// constant: excitation count `m` and, for open chains, whether the last site
/// is excited.
#[derive(Debug, Clone)]
struct ClassSums {
    n_sites: usize,
    /// `(m, last, sum of amplitudes, class size)`.
    classes: Vec<(i32, i32, Complex64, f64)>,
}

impl ClassSums {
    fn new(basis: &ConstrainedBasis, psi: &StateVector) -> Self {
        let n = basis.n_sites();
        let open = basis.bc() == BoundaryCondition::Open;
        let mut table = vec![(Complex64::default(), 0.0); 2 * (n + 1)];
        for (&s, &a) in basis.states().iter().zip(psi.amplitudes()) {
            let m = s.count_ones() as usize;
            let last = if open {
                ((s >> (n - 1)) & 1) as usize
            } else {
                0
            };
            let e = &mut table[2 * m + last];
            e.0 += a;
            e.1 += 1.0;
        }
        let classes = table
            .iter()
            .enumerate()
            .filter(|(_, e)| e.1 > 0.0)
            .map(|(k, e)| ((k / 2) as i32, (k % 2) as i32, e.0, e.1))
            .collect();
        Self {
            n_sites: n,
            classes,
        }
    }

    /// `|<psi_MPS(theta, phi)|psi>|^2`.
    fn overlap(&self, p: TdvpPoint) -> f64 {
        let (s, c) = p.theta.sin_cos();
        let n = self.n_sites as i32;
        let mut amp = Complex64::default();
        let mut norm = 0.0;
        for &(m, last, w, count) in &self.classes {
            let mag = c.powi(n - 2 * m + last) * s.powi(m - last);
            amp += Complex64::from_polar(mag, m as f64 * (p.phi - FRAC_PI_2)) * w;
            norm += count * mag * mag;
        }
        if norm <= 0.0 {
            return 0.0;
        }
        amp.norm_sqr() / norm
    }
}

/// `|<psi_MPS(point)|psi>|^2` for a normalized full-basis state.
pub fn manifold_overlap(
    basis: &ConstrainedBasis,
    psi: &StateVector,
    point: TdvpPoint,
) -> Result<f64> {
    if psi.tag() != basis.tag() {
        return Err(Error::Basis(
            "manifold overlaps need a full-basis state".into(),
        ));
    }
    Ok(ClassSums::new(basis, psi).overlap(point))
}

/// Best uniform-MPS approximation of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldProjection {
    pub point: TdvpPoint,
    pub overlap: f64,
    /// Up to three best grid cells that are local maxima of the coarse scan.
    pub top_cells: Vec<(TdvpPoint, f64)>,
}

/// Grid spacing of the coarse projection scan.
pub const PROJECTION_GRID_STEP: f64 = PI / 64.0;

/// Maximizes `|<psi_MPS(theta, phi)|psi>|^2`: coarse scan of
/// `[-pi, pi)^2` with step pi/64, then simplex refinement from the three best
/// grid maxima.
pub fn project_to_manifold(
    basis: &ConstrainedBasis,
    psi: &StateVector,
) -> Result<ManifoldProjection> {
    if psi.tag() != basis.tag() {
        return Err(Error::Basis(
            "manifold projection needs a full-basis state".into(),
        ));
    }
    let sums = ClassSums::new(basis, psi);
    let m = (2.0 * PI / PROJECTION_GRID_STEP).round() as usize;
    let angle = |i: usize| -PI + i as f64 * PROJECTION_GRID_STEP;
    let grid: Vec<f64> = (0..m * m)
        .into_par_iter()
        .map(|k| sums.overlap(TdvpPoint::new(angle(k / m), angle(k % m))))
        .collect();
    let at = |i: usize, j: usize| grid[(i % m) * m + (j % m)];
    let mut maxima: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let g = at(i, j);
            let is_max = [
                (m - 1, 0),
                (1, 0),
                (0, m - 1),
                (0, 1),
                (m - 1, m - 1),
                (1, 1),
                (m - 1, 1),
                (1, m - 1),
            ]
            .iter()
            .all(|&(di, dj)| at(i + di, j + dj) <= g);
            if is_max {
                maxima.push((i, j, g));
            }
        }
    }
    maxima.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    // Symmetry images of one maximum count once.
    let mut top_cells: Vec<(TdvpPoint, f64)> = Vec::new();
    for &(i, j, g) in &maxima {
        let p = TdvpPoint::new(angle(i), angle(j));
        let c = p.canonical();
        let duplicate = top_cells.iter().any(|(q, _)| {
            let d = q.canonical();
            let near = |a: f64, b: f64| (a - b).abs() < 2.5 * PROJECTION_GRID_STEP;
            // phi is meaningless at the poles theta = 0 and pi/2.
            let pole = (near(d.theta, 0.0) && near(c.theta, 0.0))
                || (near(d.theta, FRAC_PI_2) && near(c.theta, FRAC_PI_2));
            pole || (near(d.theta, c.theta)
                && wrap(d.phi - c.phi).abs() < 2.5 * PROJECTION_GRID_STEP)
        });
        if !duplicate {
            top_cells.push((p, g));
        }
        if top_cells.len() == 3 {
            break;
        }
    }

    let mut best = (top_cells[0].0, top_cells[0].1);
    for &(p, _) in &top_cells {
        let fit = nelder_mead(
            |x| -sums.overlap(TdvpPoint::new(x[0], x[1])),
            &[p.theta, p.phi],
            &[0.5 * PROJECTION_GRID_STEP, 0.5 * PROJECTION_GRID_STEP],
            1e-15,
            1e-10,
            2000,
        );
        if -fit.value > best.1 {
            best = (TdvpPoint::new(fit.x[0], fit.x[1]), -fit.value);
        }
    }
    Ok(ManifoldProjection {
        point: best.0.canonical(),
        overlap: best.1,
        top_cells,
    })
}

/// Unit-cell modulated chemical potential and phase pulse.
pub type AnsatzParams = ModulatedParams;

/// `Theta(gamma) GS(H(w))` on a full basis. Uniform periodic cells are solved
/// in the symmetric zero-momentum sector and expanded.
pub fn ansatz_state(basis: &ConstrainedBasis, params: &AnsatzParams) -> Result<StateVector> {
    let gs = if params.cell() == 1 && basis.bc() == BoundaryCondition::Periodic {
        let sector = build_sector(basis, 0, Inversion::Even)?;
        let h = build_pxp(
            &sector,
            &HamiltonianParams::new(params.w[0], BoundaryCondition::Periodic),
        )?;
        sector.expand(basis, &ground_state(&h)?.1)?
    } else {
        ground_state(&build_modulated(basis, params)?)?.1
    };
    apply_phase_pulse(basis, &gs, &params.gamma)
}

/// Outcome of [`optimize_ansatz_params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzFit {
    pub params: AnsatzParams,
    pub overlap: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Maximizes `|<Theta(gamma) GS(H(w))|target>|^2` over `(w, gamma)` for
/// `K = 1` or `2`: coarse scan, then simplex refinement from the best three
/// starts. Stagnation is reported through `converged = false`.
pub fn optimize_ansatz_params(
    basis: &ConstrainedBasis,
    target: &StateVector,
    k: usize,
) -> Result<AnsatzFit> {
    if !(k == 1 || k == 2) {
        return Err(Error::Shape {
            cell: k,
            n_sites: basis.n_sites(),
        });
    }
    if basis.n_sites() % k != 0 {
        return Err(Error::Shape {
            cell: k,
            n_sites: basis.n_sites(),
        });
    }
    if target.tag() != basis.tag() {
        return Err(Error::Basis(
            "ansatz targets must be full-basis states".into(),
        ));
    }
    // |w| beyond the cap changes nothing visible; gamma has period pi.
    const W_CAP: f64 = 50.0;
    let split = |x: &[f64]| AnsatzParams {
        w: x[..k].iter().map(|w| w.clamp(-W_CAP, W_CAP)).collect(),
        gamma: x[k..].iter().map(|g| g - PI * (g / PI).round()).collect(),
    };
    let objective = |x: &[f64]| -> f64 {
        match ansatz_state(basis, &split(x)) {
            Ok(s) => s.overlap(target).map(|o| o.norm_sqr()).unwrap_or(0.0),
            Err(_) => 0.0,
        }
    };

    let w_grid: &[f64] = if k == 1 {
        &[-6.0, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 6.0]
    } else {
        &[-3.0, -1.0, 0.0, 1.0, 3.0]
    };
    let g_steps = if k == 1 { 16 } else { 4 };
    let g_grid: Vec<f64> = (0..g_steps)
        .map(|i| -FRAC_PI_2 + PI * i as f64 / g_steps as f64)
        .collect();
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if k == 1 {
        for &w in w_grid {
            for &g in &g_grid {
                starts.push(vec![w, g]);
            }
        }
    } else {
        for &w1 in w_grid {
            for &w2 in w_grid {
                for &g1 in &g_grid {
                    for &g2 in &g_grid {
                        starts.push(vec![w1, w2, g1, g2]);
                    }
                }
            }
        }
    }
    let mut scored: Vec<(f64, Vec<f64>)> =
        starts.into_par_iter().map(|x| (objective(&x), x)).collect();
    let mut evaluations = scored.len();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for (_, x0) in scored.iter().take(3) {
        let step: Vec<f64> = (0..2 * k).map(|i| if i < k { 0.5 } else { 0.2 }).collect();
        let fit = nelder_mead(|x| -objective(x), x0, &step, 1e-12, 1e-7, 3000);
        evaluations += fit.evaluations;
        let value = -fit.value;
        if best.as_ref().is_none_or(|b| value > b.0) {
            best = Some((value, fit.x, fit.converged));
        }
    }
    let (overlap, x, converged) = best.expect("at least one start");
    Ok(AnsatzFit {
        params: split(&x),
        overlap,
        converged,
        evaluations,
    })
}
