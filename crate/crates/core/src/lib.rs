//! Exact dynamics, variational orbits and spectroscopy of the PXP model with a
//! chemical potential.

pub mod basis;
pub mod ensembles;
pub mod error;
pub mod linalg;
pub mod observables;
pub mod operators;
pub mod optimize;
pub mod propagation;
pub mod ramping;
pub mod sparse;
pub mod spectroscopy;
pub mod state;
pub mod sweep;
pub mod tdvp;

pub use basis::{
    all_sectors, build_sector, enumerate_basis, BasisTag, BoundaryCondition, ConstrainedBasis,
    HilbertSpace, Inversion, SymmetrySector,
};
pub use error::{Error, Result};
pub use operators::{
    apply_phase_pulse, apply_pi_reflection, build_modulated, build_pxp, HamiltonianParams,
    ModulatedParams, PxpFamily, SparseOperator, MU_CRITICAL,
};
pub use ramping::{
    ramp_prepare, ramp_time_curve, RampInitial, RampOptions, RampResult, RampSchedule,
};
pub use spectroscopy::{
    dispersion, ground_state, overlap_spectrum, DispersionBand, OverlapSpectrum,
};
pub use state::StateVector;
pub use sweep::{run_sweep, write_outputs, RangeSpec, SweepCell, SweepConfig, SweepResult};
pub use tdvp::{integrate_orbit, mps_state, project_to_manifold, TdvpOrbit, TdvpPoint};
