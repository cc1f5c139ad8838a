//! Quench grid over `(mu_i, mu_f)`: the dynamical phase diagram.
//!
//! Each cell takes the ground state of `H(mu_i)`, evolves it under `H(mu_f)`
//! and reports the requested diagnostics. Under periodic boundaries the
//! dynamics run in the zero-momentum inversion-even sector, where the
//! translation-invariant ground state lives; the thermal reference always uses
//! the whole constrained space.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_sector, enumerate_basis, BoundaryCondition, ConstrainedBasis, Inversion};
use crate::ensembles::{diagonal_ensemble_n, solve_beta_clamped, ThermalSpectrum};
use crate::error::{Error, Result};
use crate::observables::{delta_f, ipr, msd_n, record_quench, WindowSpec};
use crate::operators::{build_pxp, HamiltonianParams, PxpSpace};
use crate::propagation::{EigDecomposition, TimeGrid};
use crate::spectroscopy::ground_state;
use crate::state::StateVector;

/// Version of the JSON config layout.
pub const CONFIG_SCHEMA: u32 = 1;

/// Environment variable that overrides the configured thread count.
pub const THREADS_ENV: &str = "SCARSIM_THREADS";

const BETA_TOL: f64 = 1e-10;

/// Inclusive arithmetic range written `start:stop:step`. A bare number is a
/// one-point range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl RangeSpec {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(Error::Config("range bounds must be finite".into()));
        }
        if step <= 0.0 {
            return Err(Error::Config(format!(
                "range step must be positive, got {step}"
            )));
        }
        if stop < start {
            return Err(Error::Config(format!("empty range {start}:{stop}:{step}")));
        }
        Ok(Self { start, stop, step })
    }

    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| round_grid(self.start + i as f64 * self.step))
            .collect()
    }
}

// Strips the accumulated floating error of `start + i * step`.
fn round_grid(x: f64) -> f64 {
    (x * 1e10).round() / 1e10
}

impl FromStr for RangeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{p}' in range '{s}'")))
        };
        match parts.as_slice() {
            [x] => {
                let x = num(x)?;
                Self::new(x, x, 1.0)
            }
            [a, b, c] => Self::new(num(a)?, num(b)?, num(c)?),
            _ => Err(Error::Config(format!("range '{s}' is not start:stop:step"))),
        }
    }
}

impl TryFrom<String> for RangeSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RangeSpec> for String {
    fn from(r: RangeSpec) -> String {
        r.to_string()
    }
}

impl fmt::Display for RangeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

/// Which diagnostics a sweep computes. Deserializes from an object of flags or
/// from the same comma list the CLI takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayersRepr")]
pub struct Layers {
    pub delta_f: bool,
    pub msd_n: bool,
    pub ipr: bool,
    pub delta_n: bool,
}

impl Default for Layers {
    fn default() -> Self {
        Self {
            delta_f: true,
            msd_n: true,
            ipr: true,
            delta_n: true,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LayersRepr {
    List(String),
    Fields {
        #[serde(default = "yes")]
        delta_f: bool,
        #[serde(default = "yes")]
        msd_n: bool,
        #[serde(default = "yes")]
        ipr: bool,
        #[serde(default = "yes")]
        delta_n: bool,
    },
}

fn yes() -> bool {
    true
}

impl TryFrom<LayersRepr> for Layers {
    type Error = Error;

    fn try_from(r: LayersRepr) -> Result<Self> {
        match r {
            LayersRepr::List(s) => s.parse(),
            LayersRepr::Fields {
                delta_f,
                msd_n,
                ipr,
                delta_n,
            } => Ok(Self {
                delta_f,
                msd_n,
                ipr,
                delta_n,
            }),
        }
    }
}

impl FromStr for Layers {
    type Err = Error;

    /// Comma-separated subset of `delta_f,msd_n,ipr,delta_n`, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(Self::default());
        }
        let mut out = Self {
            delta_f: false,
            msd_n: false,
            ipr: false,
            delta_n: false,
        };
        for name in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match name {
                "delta_f" => out.delta_f = true,
                "msd_n" => out.msd_n = true,
                "ipr" => out.ipr = true,
                "delta_n" => out.delta_n = true,
                other => return Err(Error::Config(format!("unknown layer '{other}'"))),
            }
        }
        Ok(out)
    }
}

/// Sweep configuration, also the JSON config file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub schema: u32,
    #[serde(alias = "n")]
    pub n_sites: usize,
    pub bc: BoundaryCondition,
    pub mu_i: RangeSpec,
    pub mu_f: RangeSpec,
    /// Off-grid rows and columns merged into the axes.
    pub extra_mu_i: Vec<f64>,
    pub extra_mu_f: Vec<f64>,
    pub delta_f_window: WindowSpec,
    pub msd_window: WindowSpec,
    pub dt: f64,
    pub t_max: f64,
    pub layers: Layers,
    pub threads: Option<usize>,
    /// CSV path; metadata goes next to it with a `.json` extension.
    pub output: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let axis = RangeSpec {
            start: -6.0,
            stop: 6.0,
            step: 0.25,
        };
        Self {
            schema: CONFIG_SCHEMA,
            n_sites: 14,
            bc: BoundaryCondition::Periodic,
            mu_i: axis,
            mu_f: axis,
            extra_mu_i: Vec::new(),
            extra_mu_f: Vec::new(),
            delta_f_window: WindowSpec::delta_f_default(),
            msd_window: WindowSpec::msd_default(),
            dt: 0.05,
            t_max: 20.0,
            layers: Layers::default(),
            threads: None,
            output: None,
        }
    }
}

impl SweepConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported config schema {} (expected {CONFIG_SCHEMA})",
                self.schema
            )));
        }
        for r in [self.mu_i, self.mu_f] {
            RangeSpec::new(r.start, r.stop, r.step)?;
        }
        for w in [self.delta_f_window, self.msd_window] {
            WindowSpec::new(w.t0, w.t1)?;
            if w.t1 > self.t_max + 1e-9 {
                return Err(Error::Config(format!(
                    "window [{}, {}] extends past t_max = {}",
                    w.t0, w.t1, self.t_max
                )));
            }
        }
        if !(self.dt > 0.0 && self.t_max > 0.0) {
            return Err(Error::Config("dt and t_max must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self
            .extra_mu_i
            .iter()
            .chain(&self.extra_mu_f)
            .any(|x| !x.is_finite())
        {
            return Err(Error::Config("extra grid values must be finite".into()));
        }
        Ok(())
    }

    pub fn mu_i_values(&self) -> Vec<f64> {
        merge_axis(self.mu_i.values(), &self.extra_mu_i)
    }

    pub fn mu_f_values(&self) -> Vec<f64> {
        merge_axis(self.mu_f.values(), &self.extra_mu_f)
    }
}

fn merge_axis(mut values: Vec<f64>, extra: &[f64]) -> Vec<f64> {
    values.extend(extra.iter().copied().map(round_grid));
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    values
}

/// `SCARSIM_THREADS` if set and valid, else `configured`, else the number of
/// available cores.
pub fn resolve_threads(configured: Option<usize>) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .or(configured)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    /// An upstream ground state or decomposition failed.
    Skipped,
    Failed,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Skipped => "skipped",
            Self::Failed => "failed",
        }
    }
}

/// One grid point of the phase diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub mu_i: f64,
    pub mu_f: f64,
    pub delta_f: Option<f64>,
    pub msd_n: Option<f64>,
    pub ipr: Option<f64>,
    pub delta_n: Option<f64>,
    pub status: CellStatus,
    pub error: Option<String>,
    /// Set when the thermal reference had to be taken at the inverse
    /// temperature cap.
    pub beta_clamped: bool,
    pub seconds: f64,
}

/// Cells in row-major `(mu_i, mu_f)` order with timing totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mu_i: Vec<f64>,
    pub mu_f: Vec<f64>,
    pub cells: Vec<SweepCell>,
    pub threads: usize,
    pub wall_seconds: f64,
    pub thermal_space: String,
}

impl SweepResult {
    pub fn cell(&self, mu_i: f64, mu_f: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| (c.mu_i - mu_i).abs() < 1e-9 && (c.mu_f - mu_f).abs() < 1e-9)
    }

    pub fn cell_seconds(&self) -> f64 {
        self.cells.iter().map(|c| c.seconds).sum()
    }
}

struct Column {
    eig: EigDecomposition,
    thermal: Option<ThermalSpectrum>,
}

/// Runs the whole grid on a pool of [`resolve_threads`] workers. Per-cell
/// failures are recorded in the cell status.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let threads = resolve_threads(config.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let basis = enumerate_basis(config.n_sites, config.bc)?;
    let (mu_i, mu_f, cells) = pool.install(|| match config.bc {
        BoundaryCondition::Periodic => {
            let sector = build_sector(&basis, 0, Inversion::Even)?;
            sweep_on(&sector, &basis, config)
        }
        BoundaryCondition::Open => sweep_on(&basis, &basis, config),
    })?;
    Ok(SweepResult {
        mu_i,
        mu_f,
        cells,
        threads,
        wall_seconds: start.elapsed().as_secs_f64(),
        thermal_space: "full".into(),
    })
}

fn sweep_on<S: PxpSpace + Sync>(
    space: &S,
    basis: &ConstrainedBasis,
    config: &SweepConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<SweepCell>)> {
    let mu_i = config.mu_i_values();
    let mu_f = config.mu_f_values();
    let layers = config.layers;
    let need_thermal = layers.msd_n || layers.delta_n;
    let bc = config.bc;

    let rows: Vec<Result<StateVector>> = mu_i
        .par_iter()
        .map(|&mu| Ok(ground_state(&build_pxp(space, &HamiltonianParams::new(mu, bc))?)?.1))
        .collect();
    let columns: Vec<Result<Column>> = mu_f
        .par_iter()
        .map(|&mu| {
            let eig = EigDecomposition::new(&build_pxp(space, &HamiltonianParams::new(mu, bc))?)?;
            let thermal = if need_thermal {
                Some(ThermalSpectrum::full_space(basis, mu)?)
            } else {
                None
            };
            Ok(Column { eig, thermal })
        })
        .collect();

    let grid = TimeGrid::new(0.0, config.t_max, config.dt)?;
    let cells = (0..mu_i.len() * mu_f.len())
        .into_par_iter()
        .map(|idx| {
            let (i, f) = (idx / mu_f.len(), idx % mu_f.len());
            let started = Instant::now();
            let mut cell = SweepCell {
                mu_i: mu_i[i],
                mu_f: mu_f[f],
                delta_f: None,
                msd_n: None,
                ipr: None,
                delta_n: None,
                status: CellStatus::Ok,
                error: None,
                beta_clamped: false,
                seconds: 0.0,
            };
            match (&rows[i], &columns[f]) {
                (Ok(psi0), Ok(col)) => {
                    if let Err(e) = fill_cell(&mut cell, space, psi0, col, &grid, config) {
                        cell.status = CellStatus::Failed;
                        cell.error = Some(e.to_string());
                        cell.delta_f = None;
                        cell.msd_n = None;
                        cell.ipr = None;
                        cell.delta_n = None;
                    }
                }
                (Err(e), _) | (_, Err(e)) => {
                    cell.status = CellStatus::Skipped;
                    cell.error = Some(e.to_string());
                }
            }
            cell.seconds = started.elapsed().as_secs_f64();
            cell
        })
        .collect();
    Ok((mu_i, mu_f, cells))
}

fn fill_cell<S: PxpSpace>(
    cell: &mut SweepCell,
    space: &S,
    psi0: &StateVector,
    col: &Column,
    grid: &TimeGrid,
    config: &SweepConfig,
) -> Result<()> {
    let layers = config.layers;
    let n_th = match &col.thermal {
        Some(thermal) => {
            let c = col.eig.coefficients(psi0)?;
            let e0: f64 = c
                .iter()
                .zip(col.eig.eigenvalues())
                .map(|(c, e)| c.norm_sqr() * e)
                .sum();
            let (canonical, clamped) = solve_beta_clamped(thermal, e0, BETA_TOL)?;
            cell.beta_clamped = clamped;
            Some(canonical.n_th)
        }
        None => None,
    };
    if layers.delta_f || layers.msd_n {
        let record = record_quench(space, &col.eig, psi0, grid, None)?;
        if layers.delta_f {
            cell.delta_f = Some(delta_f(&record, &config.delta_f_window)?);
        }
        if let (true, Some(n_th)) = (layers.msd_n, n_th) {
            cell.msd_n = Some(msd_n(&record, n_th, &config.msd_window)?);
        }
    }
    if layers.ipr {
        cell.ipr = Some(ipr(psi0, &col.eig)?);
    }
    if let (true, Some(n_th)) = (layers.delta_n, n_th) {
        cell.delta_n = Some(diagonal_ensemble_n(space, psi0, &col.eig)? - n_th);
    }
    Ok(())
}

/// `x` with 12 significant digits, positional when the exponent is moderate.
pub fn format_sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub const CSV_HEADER: &str = "mu_i,mu_f,delta_f,msd_n,ipr,delta_n,status";

/// The CSV table. Layers that were not computed leave empty fields.
pub fn to_csv(result: &SweepResult) -> String {
    let opt = |x: Option<f64>| x.map(format_sig12).unwrap_or_default();
    let mut out = String::with_capacity(64 * (result.cells.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for c in &result.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            format_sig12(c.mu_i),
            format_sig12(c.mu_f),
            opt(c.delta_f),
            opt(c.msd_n),
            opt(c.ipr),
            opt(c.delta_n),
            c.status.as_str()
        ));
    }
    out
}

/// Metadata companion of the CSV.
pub fn metadata(result: &SweepResult, config: &SweepConfig) -> serde_json::Value {
    let count = |s: CellStatus| result.cells.iter().filter(|c| c.status == s).count();
    let failures: Vec<_> = result
        .cells
        .iter()
        .filter(|c| c.error.is_some())
        .map(|c| serde_json::json!({ "mu_i": c.mu_i, "mu_f": c.mu_f, "error": c.error }))
        .collect();
    serde_json::json!({
        "config": config,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": result.threads,
        "wall_seconds": result.wall_seconds,
        "cell_seconds": result.cell_seconds(),
        "thermal_space": result.thermal_space,
        "grid": { "mu_i": result.mu_i.len(), "mu_f": result.mu_f.len() },
        "cells": { "ok": count(CellStatus::Ok), "skipped": count(CellStatus::Skipped), "failed": count(CellStatus::Failed) },
        "beta_clamped": result.cells.iter().filter(|c| c.beta_clamped).count(),
        "errors": failures,
    })
}

/// Writes the CSV to `csv_path` and the metadata next to it. Returns the
/// metadata path.
pub fn write_outputs(
    result: &SweepResult,
    config: &SweepConfig,
    csv_path: &Path,
) -> Result<PathBuf> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    fs::write(csv_path, to_csv(result)).map_err(io(csv_path))?;
    let meta_path = csv_path.with_extension("json");
    let mut f = fs::File::create(&meta_path).map_err(io(&meta_path))?;
    let text =
        serde_json::to_string_pretty(&metadata(result, config)).expect("metadata serializes");
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(io(&meta_path))?;
    Ok(meta_path)
}
