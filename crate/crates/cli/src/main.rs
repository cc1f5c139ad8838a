//! `scarsim` command-line front end.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use scarsim::basis::dimension;
use scarsim::ensembles::{diagonal_ensemble_n, solve_beta_clamped, ThermalSpectrum};
use scarsim::observables::{
    delta_f, entanglement_entropy, excitation_density, fidelity, first_revival, record_quench,
    QuenchRecord, WindowSpec,
};
use scarsim::propagation::{evolve_krylov, EigDecomposition, TimeGrid, DENSE_LIMIT};
use scarsim::sparse::LinearOperator;
use scarsim::spectroscopy::{tower_markers, two_magnon_deviation};
use scarsim::sweep::{format_sig12, resolve_threads, Layers, RangeSpec};
use scarsim::tdvp::{
    extrapolated_leakage, finite_size_leakage, integrate_orbit_with, leakage, OrbitOptions,
};
use scarsim::{
    build_pxp, build_sector, dispersion, enumerate_basis, ground_state, overlap_spectrum,
    ramp_prepare, run_sweep, write_outputs, BoundaryCondition, ConstrainedBasis, HamiltonianParams,
    HilbertSpace, Inversion, RampInitial, RampOptions, RampSchedule, StateVector, SweepConfig,
    TdvpPoint, MU_CRITICAL,
};

#[derive(Parser, Debug)]
#[command(
    name = "scarsim",
    version,
    about = "Exact dynamics of the PXP chain with a chemical potential"
)]
struct Cli {
    /// JSON file with default values for the subcommand's flags (keys are
    /// flag names with underscores). Flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads. SCARSIM_THREADS overrides it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Write the table here instead of stdout.
    #[arg(short, long, global = true, value_name = "FILE")]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dimension of the constrained space (or of one symmetry sector).
    Basis(BasisArgs),
    /// Builds H(mu) and reports its size; optionally dumps it.
    Hamiltonian(HamiltonianArgs),
    /// Global quench: fidelity, density and entropy against time.
    Quench(QuenchArgs),
    /// The (mu_i, mu_f) phase-diagram grid.
    Sweep(SweepArgs),
    /// Variational orbit on the two-angle manifold.
    TdvpOrbit(OrbitArgs),
    /// Leakage out of the variational manifold on a (theta, phi) grid.
    LeakageMap(LeakageArgs),
    /// Single-magnon band above the ground state.
    Dispersion(DispersionArgs),
    /// Eigenstate overlaps of a ground state under a quench.
    Towers(TowersArgs),
    /// Diagonal vs canonical density along a mu_f cut.
    Ensembles(EnsembleArgs),
    /// Ground-state preparation by a chemical-potential ramp.
    Ramp(RampArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Parity {
    Even,
    Odd,
    None,
}

impl From<Parity> for Inversion {
    fn from(p: Parity) -> Self {
        match p {
            Parity::Even => Inversion::Even,
            Parity::Odd => Inversion::Odd,
            Parity::None => Inversion::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InitialState {
    /// Ground state of H(mu_i).
    Gs,
    Polarized,
    /// Single Neel configuration.
    Neel,
    /// Symmetric Neel pair.
    Zplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RampStart {
    Auto,
    Polarized,
    Neel,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisArgs {
    /// Number of sites.
    #[arg(long)]
    n: Option<usize>,
    /// Boundary condition: pbc or obc [default: pbc].
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Momentum index k (0..n) of a periodic sector.
    #[arg(long)]
    k: Option<usize>,
    /// Inversion sector, used with --k [default: none].
    #[arg(long, value_enum)]
    parity: Option<Parity>,
    /// Also print every configuration (sector representatives) in hex.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    dump: bool,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HamiltonianArgs {
    /// Number of sites.
    #[arg(long)]
    n: Option<usize>,
    /// Boundary condition: pbc or obc [default: pbc].
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Chemical potential [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Momentum index k of a periodic sector.
    #[arg(long)]
    k: Option<usize>,
    /// Inversion sector, used with --k [default: none].
    #[arg(long, value_enum)]
    parity: Option<Parity>,
    /// Write the matrix in Matrix Market format ('-' for stdout).
    #[arg(long, value_name = "FILE")]
    dump_mm: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuenchArgs {
    /// Number of sites.
    #[arg(long)]
    n: Option<usize>,
    /// Boundary condition: pbc or obc [default: pbc].
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Chemical potential of the initial ground state (with --initial gs).
    #[arg(long, allow_hyphen_values = true)]
    mu_i: Option<f64>,
    /// Chemical potential of the evolution.
    #[arg(long, allow_hyphen_values = true)]
    mu_f: Option<f64>,
    /// Initial state [default: gs].
    #[arg(long, value_enum)]
    initial: Option<InitialState>,
    /// Final time [default: 20].
    #[arg(long)]
    t_max: Option<f64>,
    /// Sampling step [default: 0.05].
    #[arg(long)]
    dt: Option<f64>,
    /// Also record the half-chain entanglement entropy.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    entropy: bool,
}

/// Keys follow the sweep config file.
#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepArgs {
    /// Number of sites [default: 14].
    #[arg(long)]
    #[serde(rename = "n_sites")]
    n: Option<usize>,
    /// Boundary condition: pbc or obc [default: pbc].
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Initial chemical potentials, start:stop:step [default: -6:6:0.25].
    #[arg(long, allow_hyphen_values = true)]
    mu_i: Option<RangeSpec>,
    /// Final chemical potentials, start:stop:step [default: -6:6:0.25].
    #[arg(long, allow_hyphen_values = true)]
    mu_f: Option<RangeSpec>,
    /// Extra mu_i rows, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    extra_mu_i: Option<Vec<f64>>,
    /// Extra mu_f columns, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    extra_mu_f: Option<Vec<f64>>,
    /// Sampling step [default: 0.05].
    #[arg(long)]
    dt: Option<f64>,
    /// Final time [default: 20].
    #[arg(long)]
    t_max: Option<f64>,
    /// Layers to compute: all, or a comma list of delta_f,msd_n,ipr,delta_n.
    #[arg(long)]
    layers: Option<Layers>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrbitArgs {
    /// Chemical potential.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Starting polar angle [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Starting azimuth [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// Final time [default: 20].
    #[arg(long)]
    t_max: Option<f64>,
    /// Output spacing [default: 0.05].
    #[arg(long)]
    dt: Option<f64>,
    /// Integrator tolerance [default: 1e-10].
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeakageArgs {
    /// Grid points in theta over [0, pi] [default: 33].
    #[arg(long)]
    n_theta: Option<usize>,
    /// Grid points in phi over [-pi, pi] [default: 33].
    #[arg(long)]
    n_phi: Option<usize>,
    /// Evaluate numerically on a periodic chain of this size instead of the
    /// closed form.
    #[arg(long)]
    n: Option<usize>,
    /// Chemical potential of the numerical evaluation [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Numerical evaluation extrapolated from N = 8..16.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    extrapolate: bool,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DispersionArgs {
    /// Number of sites (even, periodic).
    #[arg(long)]
    n: Option<usize>,
    /// Chemical potential.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TowersArgs {
    /// Number of sites (even, periodic).
    #[arg(long)]
    n: Option<usize>,
    /// Chemical potential of the initial ground state [default: critical point].
    #[arg(long, allow_hyphen_values = true)]
    mu_i: Option<f64>,
    /// Chemical potential of the quench Hamiltonian.
    #[arg(long, allow_hyphen_values = true)]
    mu_f: Option<f64>,
    /// Number of tower markers reported [default: 3].
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleArgs {
    /// Number of sites.
    #[arg(long)]
    n: Option<usize>,
    /// Boundary condition: pbc or obc [default: pbc].
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Chemical potential of the initial ground state.
    #[arg(long, allow_hyphen_values = true)]
    mu_i: Option<f64>,
    /// Final chemical potentials, start:stop:step.
    #[arg(long, allow_hyphen_values = true)]
    mu_f: Option<RangeSpec>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RampArgs {
    /// Number of sites (periodic).
    #[arg(long)]
    n: Option<usize>,
    /// Target chemical potential.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Starting state; auto picks the phase of the target [default: auto].
    #[arg(long, value_enum)]
    initial: Option<RampStart>,
    /// Pole strength |A|; its sign follows the starting state [default: 40].
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    /// First pole [default: 30].
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    /// Second pole [default: -0.1].
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Scan window [default: 25].
    #[arg(long)]
    t_max: Option<f64>,
    /// Integration step [default: 0.0025].
    #[arg(long)]
    dt: Option<f64>,
    /// Overlap sampling step [default: 0.1].
    #[arg(long)]
    dt_scan: Option<f64>,
    /// Evolve in the zero-momentum even sector (faster, same result).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    sector: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<scarsim::Error> for CliError {
    fn from(e: scarsim::Error) -> Self {
        match e {
            scarsim::Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn load_config(path: Option<&Path>) -> CliResult<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::Usage(format!(
            "config {} must hold a JSON object",
            path.display()
        )));
    }
    Ok(value)
}

/// Overlays the flags that were given on top of the config file values.
fn merged<F: Serialize, T: DeserializeOwned>(config: &Value, flags: &F) -> CliResult<T> {
    let mut base = config.clone();
    let map = base.as_object_mut().expect("config is an object");
    if let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") {
        for (k, v) in given {
            if !v.is_null() {
                map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("config: {e}")))
}

struct Table {
    out: Box<dyn Write>,
}

impl Table {
    fn open(path: Option<&Path>, header: &str) -> CliResult<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => {
                Box::new(io::BufWriter::new(fs::File::create(p).map_err(|e| {
                    CliError::Runtime(format!("{}: {e}", p.display()))
                })?))
            }
            None => Box::new(io::BufWriter::new(io::stdout().lock())),
        };
        let mut t = Self { out };
        t.line(header)?;
        Ok(t)
    }

    fn line(&mut self, s: &str) -> CliResult<()> {
        writeln!(self.out, "{s}").map_err(|e| CliError::Runtime(format!("write failed: {e}")))
    }

    fn row(&mut self, values: &[Option<f64>]) -> CliResult<()> {
        let cells: Vec<String> = values
            .iter()
            .map(|v| v.map(format_sig12).unwrap_or_default())
            .collect();
        self.line(&cells.join(","))
    }

    fn finish(mut self) -> CliResult<()> {
        self.out
            .flush()
            .map_err(|e| CliError::Runtime(format!("write failed: {e}")))
    }
}

/// Ground state; periodic chains are solved in the zero-momentum even sector,
/// which sidesteps the Neel-pair near-degeneracy in the ordered phase.
fn ground_state_full(basis: &ConstrainedBasis, mu: f64) -> scarsim::Result<StateVector> {
    let params = HamiltonianParams::new(mu, basis.bc());
    match basis.bc() {
        BoundaryCondition::Periodic => {
            let sector = build_sector(basis, 0, Inversion::Even)?;
            sector.expand(basis, &ground_state(&build_pxp(&sector, &params)?)?.1)
        }
        BoundaryCondition::Open => Ok(ground_state(&build_pxp(basis, &params)?)?.1),
    }
}

fn cmd_basis(args: BasisArgs, out: Option<&Path>) -> CliResult<()> {
    let n = required(args.n, "n")?;
    let bc = args.bc.unwrap_or(BoundaryCondition::Periodic);
    let mut table = Table::open(out, &dimension_line(n, bc, args.k, args.parity)?)?;
    if args.dump {
        let width = n.div_ceil(4);
        let basis = enumerate_basis(n, bc)?;
        let configs: Vec<u32> = match args.k {
            Some(k) => build_sector(&basis, k, args.parity.unwrap_or(Parity::None).into())?
                .representatives()
                .to_vec(),
            None => basis.states().to_vec(),
        };
        for c in configs {
            table.line(&format!("0x{c:0width$x}"))?;
        }
    }
    table.finish()
}

fn dimension_line(
    n: usize,
    bc: BoundaryCondition,
    k: Option<usize>,
    parity: Option<Parity>,
) -> CliResult<String> {
    Ok(match k {
        Some(k) => {
            let basis = enumerate_basis(n, bc)?;
            build_sector(&basis, k, parity.unwrap_or(Parity::None).into())?
                .dim()
                .to_string()
        }
        None => {
            if parity.is_some() {
                return Err(CliError::Usage("--parity needs --k".into()));
            }
            dimension(n, bc)?.to_string()
        }
    })
}

fn cmd_hamiltonian(args: HamiltonianArgs, out: Option<&Path>) -> CliResult<()> {
    let n = required(args.n, "n")?;
    let bc = args.bc.unwrap_or(BoundaryCondition::Periodic);
    let params = HamiltonianParams::new(args.mu.unwrap_or(0.0), bc);
    let basis = enumerate_basis(n, bc)?;
    let h = match args.k {
        Some(k) => build_pxp(
            &build_sector(&basis, k, args.parity.unwrap_or(Parity::None).into())?,
            &params,
        )?,
        None => build_pxp(&basis, &params)?,
    };
    let summary = format!(
        "dimension {}\nnonzeros {}\nreal {}\nhermiticity_error {:e}",
        h.dim(),
        h.nnz(),
        h.is_real(),
        h.hermiticity_error()
    );
    let to_stdout = args.dump_mm.as_deref() == Some(Path::new("-"));
    if let Some(path) = &args.dump_mm {
        let io_err = |e: io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
        if to_stdout {
            h.write_matrix_market(io::BufWriter::new(io::stdout().lock()))
                .map_err(io_err)?;
        } else {
            h.write_matrix_market(io::BufWriter::new(fs::File::create(path).map_err(io_err)?))
                .map_err(io_err)?;
        }
    }
    if to_stdout {
        eprintln!("{summary}");
        Ok(())
    } else {
        let table = Table::open(out, &summary)?;
        table.finish()
    }
}

fn cmd_quench(args: QuenchArgs, out: Option<&Path>) -> CliResult<()> {
    let n = required(args.n, "n")?;
    let mu_f = required(args.mu_f, "mu-f")?;
    let bc = args.bc.unwrap_or(BoundaryCondition::Periodic);
    let initial = args.initial.unwrap_or(InitialState::Gs);
    let grid = TimeGrid::new(0.0, args.t_max.unwrap_or(20.0), args.dt.unwrap_or(0.05))?;
    let basis = enumerate_basis(n, bc)?;
    let psi0 = match initial {
        InitialState::Gs => ground_state_full(&basis, required(args.mu_i, "mu-i")?)?,
        InitialState::Polarized => basis.polarized(),
        InitialState::Neel => basis.z2()?,
        InitialState::Zplus => basis.z_plus()?,
    };
    let cut = n / 2;
    let entropy_fn = |psi: &StateVector| entanglement_entropy(&basis, psi, cut);
    let entropy: Option<&dyn Fn(&StateVector) -> scarsim::Result<f64>> =
        args.entropy.then_some(&entropy_fn as _);
    let h = build_pxp(&basis, &HamiltonianParams::new(mu_f, bc))?;
    let record = if basis.dim() <= DENSE_LIMIT {
        record_quench(&basis, &EigDecomposition::new(&h)?, &psi0, &grid, entropy)?
    } else {
        let times = grid.points();
        let mut rec = QuenchRecord {
            times: times.clone(),
            fidelity: Vec::new(),
            density_n: Vec::new(),
            entropy: entropy.map(|_| Vec::new()),
        };
        let mut psi = psi0.clone();
        for (i, &t) in times.iter().enumerate() {
            if i > 0 {
                psi = evolve_krylov(&h, &psi, t - times[i - 1], 1e-10)?;
            }
            rec.fidelity.push(fidelity(&psi0, &psi)?);
            rec.density_n.push(excitation_density(&basis, &psi)?);
            if let (Some(f), Some(s)) = (entropy, rec.entropy.as_mut()) {
                s.push(f(&psi)?);
            }
        }
        rec
    };
    let mut table = Table::open(out, "t,fidelity,n_density,entropy")?;
    for i in 0..record.times.len() {
        let s = record.entropy.as_ref().map(|e| e[i]);
        table.row(&[
            Some(record.times[i]),
            Some(record.fidelity[i]),
            Some(record.density_n[i]),
            s,
        ])?;
    }
    table.finish()?;
    match first_revival(&record) {
        Ok((t, f)) => eprintln!("first revival t = {t:.4}, fidelity = {f:.6}"),
        Err(_) => eprintln!("no revival found"),
    }
    if let Ok(d) = delta_f(&record, &WindowSpec::delta_f_default()) {
        eprintln!("delta_f[1, 20] = {d:.6}");
    }
    Ok(())
}

fn cmd_sweep(
    args: SweepArgs,
    config: &Value,
    threads: Option<usize>,
    out: Option<&Path>,
) -> CliResult<()> {
    let mut cfg: SweepConfig = merged(config, &args)?;
    if threads.is_some() {
        cfg.threads = threads;
    }
    if let Some(p) = out {
        cfg.output = Some(p.to_path_buf());
    }
    cfg.validate()?;
    let result = run_sweep(&cfg)?;
    match &cfg.output {
        Some(path) => {
            let meta = write_outputs(&result, &cfg, path)?;
            eprintln!("wrote {} and {}", path.display(), meta.display());
        }
        None => {
            print!("{}", scarsim::sweep::to_csv(&result));
        }
    }
    let failed = result
        .cells
        .iter()
        .filter(|c| c.status != scarsim::sweep::CellStatus::Ok)
        .count();
    eprintln!(
        "{} cells ({failed} not ok) in {:.2} s on {} threads",
        result.cells.len(),
        result.wall_seconds,
        result.threads
    );
    Ok(())
}

fn cmd_orbit(args: OrbitArgs, out: Option<&Path>) -> CliResult<()> {
    let mu = required(args.mu, "mu")?;
    let start = TdvpPoint::new(args.theta.unwrap_or(0.0), args.phi.unwrap_or(0.0));
    let opts = OrbitOptions {
        tol: args.tol.unwrap_or(1e-10),
        sample_dt: Some(args.dt.unwrap_or(0.05)),
        ..Default::default()
    };
    let orbit = integrate_orbit_with(start, mu, args.t_max.unwrap_or(20.0), opts)?;
    let mut table = Table::open(out, "t,theta,phi,energy,leakage")?;
    for ((t, p), e) in orbit
        .times
        .iter()
        .zip(&orbit.points)
        .zip(&orbit.energy_density)
    {
        table.row(&[
            Some(*t),
            Some(p.theta),
            Some(p.phi),
            Some(*e),
            Some(leakage(p.theta)),
        ])?;
    }
    table.finish()?;
    match orbit.period {
        Some(t) => eprintln!("period {t:.8}"),
        None => eprintln!("no return within the window"),
    }
    if let Some((t, p)) = orbit.turning_points.first() {
        eprintln!(
            "first turning point t = {t:.8} at theta = {:.8}, phi = {:.8}",
            p.theta, p.phi
        );
    }
    eprintln!("energy drift {:.3e}", orbit.energy_drift());
    Ok(())
}

fn cmd_leakage(args: LeakageArgs, out: Option<&Path>) -> CliResult<()> {
    let (nt, np) = (args.n_theta.unwrap_or(33), args.n_phi.unwrap_or(33));
    if nt < 2 || np < 2 {
        return Err(CliError::Usage(
            "--n-theta and --n-phi need at least 2 points".into(),
        ));
    }
    let mu = args.mu.unwrap_or(0.0);
    let basis = args
        .n
        .map(|n| enumerate_basis(n, BoundaryCondition::Periodic))
        .transpose()?;
    let points: Vec<TdvpPoint> = (0..nt)
        .flat_map(|i| {
            (0..np).map(move |j| {
                TdvpPoint::new(
                    std::f64::consts::PI * i as f64 / (nt - 1) as f64,
                    -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / (np - 1) as f64,
                )
            })
        })
        .collect();
    let values: Vec<scarsim::Result<f64>> = points
        .par_iter()
        .map(|&p| {
            if args.extrapolate {
                Ok(extrapolated_leakage(p, mu, &[8, 10, 12, 14, 16])?.0)
            } else if let Some(b) = &basis {
                finite_size_leakage(b, p, mu)
            } else {
                Ok(leakage(p.theta))
            }
        })
        .collect();
    let mut table = Table::open(out, "theta,phi,gamma2")?;
    for (p, v) in points.iter().zip(values) {
        table.row(&[Some(p.theta), Some(p.phi), Some(v?)])?;
    }
    table.finish()
}

fn cmd_dispersion(args: DispersionArgs, out: Option<&Path>) -> CliResult<()> {
    let band = dispersion(required(args.n, "n")?, required(args.mu, "mu")?)?;
    let mut table = Table::open(out, "k,epsilon")?;
    for (k, e) in band.momenta.iter().zip(&band.energies) {
        table.row(&[Some(*k), Some(*e)])?;
    }
    table.finish()?;
    eprintln!("ground state energy {:.10}", band.e_gs);
    eprintln!("epsilon(pi) {:.8}", band.epsilon_pi());
    if let Ok(d) = two_magnon_deviation(&band) {
        eprintln!("two-magnon relative deviation {d:.6}");
    }
    Ok(())
}

fn cmd_towers(args: TowersArgs, out: Option<&Path>) -> CliResult<()> {
    let n = required(args.n, "n")?;
    let mu_f = required(args.mu_f, "mu-f")?;
    let mu_i = args.mu_i.unwrap_or(MU_CRITICAL);
    let basis = enumerate_basis(n, BoundaryCondition::Periodic)?;
    let sector = build_sector(&basis, 0, Inversion::Even)?;
    let psi0 = ground_state(&build_pxp(
        &sector,
        &HamiltonianParams::new(mu_i, BoundaryCondition::Periodic),
    )?)?
    .1;
    let eig = EigDecomposition::new(&build_pxp(
        &sector,
        &HamiltonianParams::new(mu_f, BoundaryCondition::Periodic),
    )?)?;
    let band = dispersion(n, mu_f)?;
    let markers = tower_markers(band.e_gs, 2.0 * band.epsilon_pi(), args.count.unwrap_or(3));
    let spec = overlap_spectrum(&psi0, &eig)?.with_markers(markers.clone());
    let mut table = Table::open(out, "energy,overlap")?;
    for (e, o) in spec.energies.iter().zip(&spec.overlaps) {
        table.row(&[Some(*e), Some(*o)])?;
    }
    table.finish()?;
    for (m, p) in markers.iter().zip(spec.tower_peaks(band.e_gs)) {
        match p {
            Some(p) => eprintln!("marker {m:.6}: peak at {p:.6}"),
            None => eprintln!("marker {m:.6}: no level in range"),
        }
    }
    Ok(())
}

fn cmd_ensembles(args: EnsembleArgs, out: Option<&Path>) -> CliResult<()> {
    let n = required(args.n, "n")?;
    let mu_i = required(args.mu_i, "mu-i")?;
    let mu_f = required(args.mu_f, "mu-f")?.values();
    let bc = args.bc.unwrap_or(BoundaryCondition::Periodic);
    let basis = enumerate_basis(n, bc)?;
    let psi0 = ground_state_full(&basis, mu_i)?;
    let rows: Vec<scarsim::Result<[f64; 5]>> = mu_f
        .par_iter()
        .map(|&mu| {
            let eig = EigDecomposition::new(&build_pxp(&basis, &HamiltonianParams::new(mu, bc))?)?;
            let c = eig.coefficients(&psi0)?;
            let e0: f64 = c
                .iter()
                .zip(eig.eigenvalues())
                .map(|(c, e)| c.norm_sqr() * e)
                .sum();
            let thermal = ThermalSpectrum::from_eig(&basis, &eig)?;
            let (canonical, _) = solve_beta_clamped(&thermal, e0, 1e-10)?;
            let n_diag = diagonal_ensemble_n(&basis, &psi0, &eig)?;
            Ok([
                mu,
                canonical.beta,
                canonical.n_th,
                n_diag,
                n_diag - canonical.n_th,
            ])
        })
        .collect();
    let mut table = Table::open(out, "mu_f,beta,n_th,n_diag,delta_n")?;
    for r in rows {
        table.row(&r?.map(Some))?;
    }
    table.finish()
}

fn cmd_ramp(args: RampArgs, out: Option<&Path>) -> CliResult<()> {
    let n = required(args.n, "n")?;
    let target = required(args.mu, "mu")?;
    let base = RampSchedule::default();
    let schedule = RampSchedule {
        a: args.a.map(f64::abs).unwrap_or(base.a.abs()),
        b: args.b.unwrap_or(base.b),
        c: args.c.unwrap_or(base.c),
        ..base
    };
    let initial = match args.initial.unwrap_or(RampStart::Auto) {
        RampStart::Auto => RampInitial::for_target(target, schedule.mu_c),
        RampStart::Polarized => RampInitial::Polarized,
        RampStart::Neel => RampInitial::Neel,
    };
    let d = RampOptions::default();
    let opts = RampOptions {
        t_max: args.t_max.unwrap_or(d.t_max),
        dt: args.dt.unwrap_or(d.dt),
        dt_scan: args.dt_scan.unwrap_or(d.dt_scan),
        sector: args.sector,
        ..d
    };
    let result = ramp_prepare(n, &schedule.for_initial(initial), target, initial, &opts)?;
    let mut table = Table::open(out, "t,mu,overlap")?;
    for (t, mu, o) in &result.curve {
        table.row(&[Some(*t), Some(*mu), Some(*o)])?;
    }
    table.finish()?;
    eprintln!(
        "t_ramp {:.4} overlap {:.8} norm_drift {:.2e}",
        result.t_ramp, result.overlap, result.norm_drift
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let config = load_config(cli.config.as_deref())?;
    let out = cli.output.as_deref();
    if !matches!(cli.command, Command::Sweep(_)) {
        let threads = resolve_threads(cli.threads);
        // Ignored if a pool already exists; only the first call can succeed.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match cli.command {
        Command::Basis(a) => cmd_basis(merged(&config, &a)?, out),
        Command::Hamiltonian(a) => cmd_hamiltonian(merged(&config, &a)?, out),
        Command::Quench(a) => cmd_quench(merged(&config, &a)?, out),
        Command::Sweep(a) => cmd_sweep(a, &config, cli.threads, out),
        Command::TdvpOrbit(a) => cmd_orbit(merged(&config, &a)?, out),
        Command::LeakageMap(a) => cmd_leakage(merged(&config, &a)?, out),
        Command::Dispersion(a) => cmd_dispersion(merged(&config, &a)?, out),
        Command::Towers(a) => cmd_towers(merged(&config, &a)?, out),
        Command::Ensembles(a) => cmd_ensembles(merged(&config, &a)?, out),
        Command::Ramp(a) => cmd_ramp(merged(&config, &a)?, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("Run with --help for usage.");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
