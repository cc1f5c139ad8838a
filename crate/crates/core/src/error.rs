use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("system size {0} outside supported range 1..=32")]
    Size(usize),

    #[error("unsupported symmetry: {0}")]
    UnsupportedSymmetry(String),

    #[error("basis mismatch: {0}")]
    Basis(String),

    #[error("unit cell of {cell} sites does not divide chain of {n_sites} sites")]
    Shape { cell: usize, n_sites: usize },

    #[error("state is sector-compressed; expand it to the full basis first")]
    SectorState,

    #[error("propagation did not converge (residual {residual:.3e})")]
    Propagation { residual: f64 },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("empty time window [{t0}, {t1}]")]
    Window { t0: f64, t1: f64 },

    #[error("no revival peak found after t = {after}")]
    PeakDetection { after: f64 },

    #[error("eigensolver did not converge (residual {residual:.3e})")]
    Solver { residual: f64 },

    #[error("target energy {target} is at the spectral edge [{e_min}, {e_max}]: beta unbounded")]
    UnboundedBeta { target: f64, e_min: f64, e_max: f64 },

    #[error("no sign change of the energy residual in beta bracket [-{cap}, {cap}]")]
    Bracket { cap: f64 },

    #[error("state preparation failed: best overlap {best_overlap:.6} at t = {best_time}")]
    PreparationFailed { best_overlap: f64, best_time: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
