//! Blockade-constrained Hilbert spaces and their translation/inversion sectors.
//!
//! Configurations are stored as `u32` with bit `j` holding the occupation of
//! site `j` (1 = excitation). A configuration is legal when no two adjacent
//! sites are both excited; under periodic boundaries sites `0` and `N-1` are
//! adjacent.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::StateVector;

/// Largest chain length representable in one machine word.
pub const MAX_SITES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryCondition {
    #[serde(rename = "pbc", alias = "periodic")]
    Periodic,
    #[serde(rename = "obc", alias = "open")]
    Open,
}

impl FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pbc" | "periodic" => Ok(Self::Periodic),
            "obc" | "open" => Ok(Self::Open),
            other => Err(Error::Config(format!(
                "unknown boundary condition '{other}' (expected pbc or obc)"
            ))),
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Periodic => "pbc",
            Self::Open => "obc",
        })
    }
}

/// Spatial inversion quantum number of a sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Inversion {
    /// Inversion not resolved.
    None,
    Even,
    Odd,
}

impl Inversion {
    pub fn sign(self) -> Option<f64> {
        match self {
            Self::None => None,
            Self::Even => Some(1.0),
            Self::Odd => Some(-1.0),
        }
    }
}

impl FromStr for Inversion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+1" | "1" | "+" | "even" => Ok(Self::Even),
            "-1" | "-" | "odd" => Ok(Self::Odd),
            "none" | "0" => Ok(Self::None),
            other => Err(Error::Config(format!(
                "unknown inversion flag '{other}' (expected +1, -1 or none)"
            ))),
        }
    }
}

impl fmt::Display for Inversion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Even => "+1",
            Self::Odd => "-1",
        })
    }
}

/// Identifies the space a vector or operator lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisTag {
    Full {
        n_sites: usize,
        bc: BoundaryCondition,
    },
    Sector {
        n_sites: usize,
        k: usize,
        inversion: Inversion,
    },
}

impl BasisTag {
    pub fn n_sites(&self) -> usize {
        match *self {
            Self::Full { n_sites, .. } | Self::Sector { n_sites, .. } => n_sites,
        }
    }

    pub fn is_sector(&self) -> bool {
        matches!(self, Self::Sector { .. })
    }
}

/// Common view over the full constrained basis and symmetry sectors.
pub trait HilbertSpace {
    fn dim(&self) -> usize;
    fn n_sites(&self) -> usize;
    fn tag(&self) -> BasisTag;
    /// Number of excitations of basis state `i` (translation invariant, so
    /// well defined on sector states as well).
    fn excitations(&self, i: usize) -> u32;
}

fn mask(n: usize) -> u32 {
    if n >= 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

/// Translation by one site: the occupation of site `j` moves to `j + 1`.
#[inline]
pub fn translate(s: u32, n: usize) -> u32 {
    if n == 32 {
        s.rotate_left(1)
    } else {
        ((s << 1) | (s >> (n - 1))) & mask(n)
    }
}

/// Spatial inversion `j -> N - 1 - j`.
#[inline]
pub fn reflect(s: u32, n: usize) -> u32 {
    s.reverse_bits() >> (32 - n)
}

/// Blockade legality of a configuration.
#[inline]
pub fn is_legal(s: u32, n: usize, bc: BoundaryCondition) -> bool {
    if s & !mask(n) != 0 {
        return false;
    }
    match bc {
        BoundaryCondition::Open => s & (s >> 1) == 0,
        BoundaryCondition::Periodic => s & translate(s, n) == 0,
    }
}

fn check_size(n_sites: usize) -> Result<()> {
    if (1..=MAX_SITES).contains(&n_sites) {
        Ok(())
    } else {
        Err(Error::Size(n_sites))
    }
}

/// Sorted list of blockade-legal configurations.
#[derive(Debug, Clone)]
pub struct ConstrainedBasis {
    n_sites: usize,
    bc: BoundaryCondition,
    states: Vec<u32>,
}

/// Enumerates all legal configurations in increasing integer order.
pub fn enumerate_basis(n_sites: usize, bc: BoundaryCondition) -> Result<ConstrainedBasis> {
    check_size(n_sites)?;
    let mut states = Vec::with_capacity(dimension(n_sites, bc)?);
    // Depth-first over sites from the most significant bit down, choosing 0
    // before 1, which yields ascending integers.
    fn descend(
        site: isize,
        prefix: u32,
        prev_one: bool,
        n: usize,
        bc: BoundaryCondition,
        out: &mut Vec<u32>,
    ) {
        if site < 0 {
            if is_legal(prefix, n, bc) {
                out.push(prefix);
            }
            return;
        }
        descend(site - 1, prefix, false, n, bc, out);
        if !prev_one {
            descend(site - 1, prefix | (1u32 << site), true, n, bc, out);
        }
    }
    descend(n_sites as isize - 1, 0, false, n_sites, bc, &mut states);
    Ok(ConstrainedBasis {
        n_sites,
        bc,
        states,
    })
}

/// Number of legal configurations, by recurrence: Fibonacci `F(N+2)` for open
/// chains and Lucas `L(N)` for rings.
pub fn dimension(n_sites: usize, bc: BoundaryCondition) -> Result<usize> {
    check_size(n_sites)?;
    let fib = |m: usize| -> u64 {
        let (mut a, mut b) = (0u64, 1u64);
        for _ in 0..m {
            (a, b) = (b, a + b);
        }
        a
    };
    let d = match bc {
        BoundaryCondition::Open => fib(n_sites + 2),
        BoundaryCondition::Periodic if n_sites == 1 => 1,
        BoundaryCondition::Periodic => fib(n_sites - 1) + fib(n_sites + 1),
    };
    Ok(d as usize)
}

impl ConstrainedBasis {
    pub fn new(n_sites: usize, bc: BoundaryCondition) -> Result<Self> {
        enumerate_basis(n_sites, bc)
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn state(&self, i: usize) -> u32 {
        self.states[i]
    }

    /// Ordinal of a configuration, if legal.
    pub fn index_of(&self, config: u32) -> Option<usize> {
        self.states.binary_search(&config).ok()
    }

    /// Basis vector for a single configuration.
    pub fn basis_state(&self, config: u32) -> Result<StateVector> {
        let i = self.index_of(config).ok_or_else(|| {
            Error::Basis(format!("configuration {config:#x} is not blockade-legal"))
        })?;
        let mut amps = vec![Complex64::new(0.0, 0.0); self.dim()];
        amps[i] = Complex64::new(1.0, 0.0);
        Ok(StateVector::new(self.tag(), amps))
    }

    /// The Neel configuration `1010...` with site 0 excited.
    pub fn neel_config(&self) -> u32 {
        (0..self.n_sites).step_by(2).fold(0u32, |s, j| s | (1 << j)) & mask(self.n_sites)
    }

    /// `|Z2>`; requires an even ring or any open chain.
    pub fn z2(&self) -> Result<StateVector> {
        self.basis_state(self.neel_config())
    }

    /// `(|Z2> + |Z2 bar>)/sqrt 2`.
    pub fn z_plus(&self) -> Result<StateVector> {
        let a = self.neel_config();
        let b = a << 1 & mask(self.n_sites);
        let (ia, ib) = match (self.index_of(a), self.index_of(b)) {
            (Some(ia), Some(ib)) if ia != ib => (ia, ib),
            _ => return Err(Error::Basis("Neel pair not available in this basis".into())),
        };
        let mut amps = vec![Complex64::new(0.0, 0.0); self.dim()];
        let w = std::f64::consts::FRAC_1_SQRT_2;
        amps[ia] = Complex64::new(w, 0.0);
        amps[ib] = Complex64::new(w, 0.0);
        Ok(StateVector::new(self.tag(), amps))
    }

    /// The polarized state `|00...0>`.
    pub fn polarized(&self) -> StateVector {
        self.basis_state(0)
            .expect("empty configuration is always legal")
    }
}

impl HilbertSpace for ConstrainedBasis {
    fn dim(&self) -> usize {
        self.states.len()
    }

    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn tag(&self) -> BasisTag {
        BasisTag::Full {
            n_sites: self.n_sites,
            bc: self.bc,
        }
    }

    fn excitations(&self, i: usize) -> u32 {
        self.states[i].count_ones()
    }
}

/// A momentum (and optionally inversion) block of a periodic chain.
///
/// Sector state for representative `a`:
/// `|a(k,p)> = N_a^{-1/2} sum_r e^{-i k r} T^r (1 + p P) |a>`, with the
/// inversion factor dropped when `p` is not resolved.
#[derive(Debug, Clone)]
pub struct SymmetrySector {
    n_sites: usize,
    k: usize,
    inversion: Inversion,
    representatives: Vec<u32>,
    norms: Vec<f64>,
}

/// Where a configuration sits relative to its orbit representative:
/// `rep = T^shift P^reflected config`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrbitLocation {
    pub rep: u32,
    pub shift: usize,
    pub reflected: bool,
}

/// Minimal orbit element under translations (and inversion, when requested).
pub fn find_representative(s: u32, n: usize, with_inversion: bool) -> OrbitLocation {
    let mut best = OrbitLocation {
        rep: s,
        shift: 0,
        reflected: false,
    };
    let mut t = s;
    for l in 1..n {
        t = translate(t, n);
        if t < best.rep {
            best = OrbitLocation {
                rep: t,
                shift: l,
                reflected: false,
            };
        }
    }
    if with_inversion {
        let mut t = reflect(s, n);
        for l in 0..n {
            if t < best.rep {
                best = OrbitLocation {
                    rep: t,
                    shift: l,
                    reflected: true,
                };
            }
            t = translate(t, n);
        }
    }
    best
}

/// Accumulates `O|a>` as a short list of (configuration, coefficient).
fn orbit_expansion(a: u32, n: usize, k: usize, inversion: Inversion) -> Vec<(u32, Complex64)> {
    let mut terms: Vec<(u32, Complex64)> = Vec::with_capacity(2 * n);
    let mut push = |c: u32, w: Complex64| {
        if let Some(entry) = terms.iter_mut().find(|(x, _)| *x == c) {
            entry.1 += w;
        } else {
            terms.push((c, w));
        }
    };
    let kk = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
    let mut t = a;
    let mut tr = reflect(a, n);
    for r in 0..n {
        let phase = Complex64::from_polar(1.0, -kk * r as f64);
        push(t, phase);
        if let Some(p) = inversion.sign() {
            push(tr, phase * p);
        }
        t = translate(t, n);
        tr = translate(tr, n);
    }
    terms
}

const NORM_EPS: f64 = 1e-10;

/// Builds the `(k, p)` block of a periodic constrained basis.
pub fn build_sector(
    basis: &ConstrainedBasis,
    k: usize,
    inversion: Inversion,
) -> Result<SymmetrySector> {
    let n = basis.n_sites;
    if basis.bc != BoundaryCondition::Periodic {
        return Err(Error::UnsupportedSymmetry(
            "momentum sectors require periodic boundary conditions".into(),
        ));
    }
    if k >= n {
        return Err(Error::UnsupportedSymmetry(format!(
            "momentum index {k} outside [0, {n})"
        )));
    }
    if inversion != Inversion::None && !(k == 0 || 2 * k == n) {
        return Err(Error::UnsupportedSymmetry(format!(
            "inversion only commutes with translations at k = 0 or k = N/2 (got k = {k})"
        )));
    }
    let with_inv = inversion != Inversion::None;
    let mut representatives = Vec::new();
    let mut norms = Vec::new();
    for &s in &basis.states {
        if find_representative(s, n, with_inv).rep != s {
            continue;
        }
        let norm: f64 = orbit_expansion(s, n, k, inversion)
            .iter()
            .map(|(_, w)| w.norm_sqr())
            .sum();
        if norm > NORM_EPS {
            representatives.push(s);
            norms.push(norm);
        }
    }
    Ok(SymmetrySector {
        n_sites: n,
        k,
        inversion,
        representatives,
        norms,
    })
}

impl SymmetrySector {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Lattice momentum `2 pi k / N`.
    pub fn momentum(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.k as f64 / self.n_sites as f64
    }

    pub fn inversion(&self) -> Inversion {
        self.inversion
    }

    pub fn representatives(&self) -> &[u32] {
        &self.representatives
    }

    /// Squared norm `N_a` of the unnormalized sector state of each representative.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn index_of(&self, rep: u32) -> Option<usize> {
        self.representatives.binary_search(&rep).ok()
    }

    pub fn locate(&self, config: u32) -> OrbitLocation {
        find_representative(config, self.n_sites, self.inversion != Inversion::None)
    }

    /// Orthonormal sector basis vector `a` written in the full basis.
    pub fn basis_vector_terms(&self, a: usize) -> Vec<(u32, Complex64)> {
        let scale = 1.0 / self.norms[a].sqrt();
        orbit_expansion(
            self.representatives[a],
            self.n_sites,
            self.k,
            self.inversion,
        )
        .into_iter()
        .filter(|(_, w)| w.norm() > 1e-14)
        .map(|(c, w)| (c, w * scale))
        .collect()
    }

    /// Expands a sector state into the full periodic basis.
    pub fn expand(&self, full: &ConstrainedBasis, state: &StateVector) -> Result<StateVector> {
        if state.tag() != self.tag() {
            return Err(Error::Basis(format!(
                "expected state in {:?}, got {:?}",
                self.tag(),
                state.tag()
            )));
        }
        if full.bc != BoundaryCondition::Periodic || full.n_sites != self.n_sites {
            return Err(Error::Basis("full basis does not match sector".into()));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); full.dim()];
        for (a, &coef) in state.amplitudes().iter().enumerate() {
            if coef == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (c, w) in self.basis_vector_terms(a) {
                let i = full.index_of(c).expect("orbit members are legal");
                amps[i] += w * coef;
            }
        }
        Ok(StateVector::new(full.tag(), amps))
    }

    /// Projects a full-basis state onto the sector: `<a(k,p)|psi>`.
    pub fn project(&self, full: &ConstrainedBasis, state: &StateVector) -> Result<StateVector> {
        if state.tag() != full.tag()
            || full.bc != BoundaryCondition::Periodic
            || full.n_sites != self.n_sites
        {
            return Err(Error::Basis(
                "state is not in the matching full periodic basis".into(),
            ));
        }
        let psi = state.amplitudes();
        let amps = (0..self.dim())
            .map(|a| {
                self.basis_vector_terms(a)
                    .into_iter()
                    .map(|(c, w)| {
                        w.conj() * psi[full.index_of(c).expect("orbit members are legal")]
                    })
                    .sum()
            })
            .collect();
        Ok(StateVector::new(self.tag(), amps))
    }
}

impl HilbertSpace for SymmetrySector {
    fn dim(&self) -> usize {
        self.representatives.len()
    }

    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn tag(&self) -> BasisTag {
        BasisTag::Sector {
            n_sites: self.n_sites,
            k: self.k,
            inversion: self.inversion,
        }
    }

    fn excitations(&self, i: usize) -> u32 {
        self.representatives[i].count_ones()
    }
}

/// All momentum sectors (with inversion resolved at `k = 0, N/2`), which
/// together partition the full periodic space.
pub fn all_sectors(basis: &ConstrainedBasis) -> Result<Vec<SymmetrySector>> {
    let n = basis.n_sites;
    let mut out = Vec::new();
    for k in 0..n {
        if k == 0 || 2 * k == n {
            for inv in [Inversion::Even, Inversion::Odd] {
                let s = build_sector(basis, k, inv)?;
                if s.dim() > 0 {
                    out.push(s);
                }
            }
        } else {
            let s = build_sector(basis, k, Inversion::None)?;
            if s.dim() > 0 {
                out.push(s);
            }
        }
    }
    Ok(out)
}
