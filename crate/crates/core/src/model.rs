//! Lattice parameters and the three finite Hamiltonians: the infinite chain with
//! one side-coupled resonator, its folded half-space version, and the finite
//! chain with balanced gain and loss resonators at both ends.
//!
//! Sites are 1-based in labels and dumps. The side-coupled chain uses signed
//! indices `-M..=M` plus a side site `S`. Matrices are dense, row-major, so
//! memory is `O(dim^2)` complex entries (about 64 MB at dim 2000 in `f64`).

use std::fmt;
use std::io::{self, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cx, im, re, Cx, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    SideCoupledChain,
    FoldedSemiInfinite,
    PtFinite,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Topology::SideCoupledChain => "side-coupled-chain",
            Topology::FoldedSemiInfinite => "folded-semi-infinite",
            Topology::PtFinite => "pt-finite",
        };
        f.write_str(s)
    }
}

/// How the end resonator of the folded chain is attached.
///
/// `SqrtTwoKappa`: uniform `-κ` bonds on sites `1..=N` and a `-√2κ` bond to the
/// end resonator `N+1`.
///
/// `ExplicitG`: the right half of the gain/loss chain, i.e. `-√2κ` between
/// sites `N-1` and `N` and `-g` between `N` and the end resonator. This is the
/// layout whose critical rate is `g²/(2κ)` and is the one the dynamics use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndCoupling {
    SqrtTwoKappa,
    #[default]
    ExplicitG,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryTag {
    Hermitian,
    PtSymmetric,
    General,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("background loss gamma_p must be >= 0, got {0}")]
    NegativeBackgroundLoss(f64),
    #[error("n_sites must be >= {min}, got {got}")]
    TooFewSites { got: usize, min: usize },
    #[error("half_width must be >= 2, got {0}")]
    HalfWidthTooSmall(usize),
    #[error("builder for {expected} called with a {found} lattice")]
    WrongTopology { expected: Topology, found: Topology },
    #[error("matrix needs {expected} entries for dim {dim}, got {got}")]
    BadShape { dim: usize, expected: usize, got: usize },
}

/// Physical parameters of a lattice.
///
/// `gamma` is the gain (positive) or loss (negative) rate of the special
/// resonator relative to the background; `gamma_p` is a uniform background
/// loss applied to every site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + Real"))]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec<T> {
    pub kappa: T,
    pub g: T,
    pub gamma: T,
    #[serde(default = "zero")]
    pub gamma_p: T,
    pub n_sites: usize,
    pub topology: Topology,
}

fn zero<T: Real>() -> T {
    T::zero()
}

pub const MIN_SITES: usize = 4;

impl<T: Real> LatticeSpec<T> {
    pub fn new(kappa: T, g: T, gamma: T, n_sites: usize, topology: Topology) -> Self {
        Self { kappa, g, gamma, gamma_p: T::zero(), n_sites, topology }
    }

    pub fn with_gamma(mut self, gamma: T) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_gamma_p(mut self, gamma_p: T) -> Self {
        self.gamma_p = gamma_p;
        self
    }

    /// Critical rate `σ g²/(2κ)`; `sigma = +1` is the gain branch.
    pub fn critical_gamma(&self, sigma: i8) -> T {
        T::lit(sigma.signum() as f64) * self.g * self.g / (T::lit(2.0) * self.kappa)
    }

    /// Same lattice with `gamma = σγ_c (1 + δ)`.
    pub fn at_deviation(self, sigma: i8, delta: T) -> Self {
        let gamma = self.critical_gamma(sigma) * (T::one() + delta);
        self.with_gamma(gamma)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("kappa", self.kappa)?;
        positive("g", self.g)?;
        finite("gamma", self.gamma)?;
        finite("gamma_p", self.gamma_p)?;
        if self.gamma_p < T::zero() {
            return Err(ModelError::NegativeBackgroundLoss(self.gamma_p.to_f64_lossy()));
        }
        if self.n_sites < MIN_SITES {
            return Err(ModelError::TooFewSites { got: self.n_sites, min: MIN_SITES });
        }
        Ok(())
    }

    fn expect_topology(&self, expected: Topology) -> Result<(), ModelError> {
        if self.topology != expected {
            return Err(ModelError::WrongTopology { expected, found: self.topology });
        }
        Ok(())
    }

    fn symmetry(&self) -> SymmetryTag {
        if self.gamma == T::zero() && self.gamma_p == T::zero() {
            SymmetryTag::Hermitian
        } else if self.topology == Topology::PtFinite && self.gamma_p == T::zero() {
            SymmetryTag::PtSymmetric
        } else {
            SymmetryTag::General
        }
    }
}

fn positive<T: Real>(name: &'static str, v: T) -> Result<(), ModelError> {
    if v.is_finite() && v > T::zero() {
        Ok(())
    } else {
        Err(ModelError::NonPositive { name, value: v.to_f64_lossy() })
    }
}

fn finite<T: Real>(name: &'static str, v: T) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NotFinite { name, value: v.to_f64_lossy() })
    }
}

/// Human-facing name of a matrix row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteLabel {
    /// 1-based site of a finite chain.
    Site(usize),
    /// Signed chain index of the side-coupled lattice.
    Chain(i64),
    /// The side resonator.
    Side,
}

impl fmt::Display for SiteLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteLabel::Site(j) => write!(f, "{j}"),
            SiteLabel::Chain(j) => write!(f, "{j}"),
            SiteLabel::Side => f.write_str("S"),
        }
    }
}

/// Which builder produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    SideCoupled { half_width: usize },
    Folded { end_coupling: EndCoupling },
    Pt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Origin<T> {
    pub spec: LatticeSpec<T>,
    pub layout: Layout,
}

/// Dense complex Hamiltonian with symmetry metadata and site labels.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix<T> {
    dim: usize,
    entries: Vec<Cx<T>>,
    symmetry: SymmetryTag,
    labels: Vec<SiteLabel>,
    origin: Option<Origin<T>>,
}

impl<T: Real> HamiltonianMatrix<T> {
    /// Wraps a row-major matrix. Sites are labelled `1..=dim`.
    pub fn from_dense(dim: usize, entries: Vec<Cx<T>>, symmetry: SymmetryTag) -> Result<Self, ModelError> {
        if entries.len() != dim * dim {
            return Err(ModelError::BadShape { dim, expected: dim * dim, got: entries.len() });
        }
        Ok(Self { dim, entries, symmetry, labels: (1..=dim).map(SiteLabel::Site).collect(), origin: None })
    }

    fn zeros(dim: usize, symmetry: SymmetryTag, labels: Vec<SiteLabel>, origin: Origin<T>) -> Self {
        Self { dim, entries: vec![Cx::default(); dim * dim], symmetry, labels, origin: Some(origin) }
    }

    fn bond(&mut self, i: usize, j: usize, w: T) {
        self.entries[i * self.dim + j] = re(-w);
        self.entries[j * self.dim + i] = re(-w);
    }

    fn add_diag(&mut self, i: usize, v: Cx<T>) {
        self.entries[i * self.dim + i] = self.entries[i * self.dim + i] + v;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Cx<T> {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Cx<T>] {
        &self.entries
    }

    pub fn row(&self, row: usize) -> &[Cx<T>] {
        &self.entries[row * self.dim..(row + 1) * self.dim]
    }

    pub fn symmetry(&self) -> SymmetryTag {
        self.symmetry
    }

    pub fn labels(&self) -> &[SiteLabel] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> SiteLabel {
        self.labels[index]
    }

    pub fn index_of(&self, label: SiteLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn origin(&self) -> Option<&Origin<T>> {
        self.origin.as_ref()
    }

    /// Hopping scale: `κ` when built from a spec, otherwise the largest
    /// off-diagonal magnitude.
    pub fn energy_scale(&self) -> T {
        if let Some(o) = &self.origin {
            return o.spec.kappa;
        }
        let mut s = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j {
                    s = s.max(self.get(i, j).norm());
                }
            }
        }
        if s == T::zero() {
            T::one()
        } else {
            s
        }
    }

    /// 0-based rows where a uniform `-κ` recursion holds, for plane-wave fits.
    pub fn bulk_sites(&self) -> Option<Range<usize>> {
        let o = self.origin.as_ref()?;
        let n = o.spec.n_sites;
        match o.layout {
            Layout::Pt => Some(2..n),
            Layout::Folded { end_coupling: EndCoupling::ExplicitG } => Some(0..n - 1),
            Layout::Folded { end_coupling: EndCoupling::SqrtTwoKappa } => Some(0..n),
            Layout::SideCoupled { .. } => None,
        }
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        (0..self.dim).all(|i| (i..self.dim).all(|j| (self.get(i, j) - self.get(j, i).conj()).norm() <= tol))
    }

    pub fn conjugate_transpose(&self) -> Self {
        let n = self.dim;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.entries[i * n + j] = self.entries[j * n + i].conj();
            }
        }
        out
    }

    /// `P conj(H) P` with `P` the site reversal.
    pub fn pt_image(&self) -> Self {
        let n = self.dim;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.entries[i * n + j] = self.entries[(n - 1 - i) * n + (n - 1 - j)].conj();
            }
        }
        out
    }

    /// Adds `shift` to every diagonal entry.
    pub fn with_diagonal_shift(&self, shift: Cx<T>) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.add_diag(i, shift);
        }
        if shift.im != T::zero() {
            out.symmetry = SymmetryTag::General;
        }
        out
    }

    /// Square sub-block starting at 0-based `start`.
    pub fn block(&self, start: usize, len: usize) -> Vec<Cx<T>> {
        let mut out = Vec::with_capacity(len * len);
        for i in start..start + len {
            out.extend_from_slice(&self.entries[i * self.dim + start..i * self.dim + start + len]);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.entries.iter().zip(&other.entries).fold(T::zero(), |m, (a, b)| m.max((*a - *b).norm()))
    }

    /// Writes the non-zero entries as `row col re im`, rows and columns given
    /// by site label. Diagnostic only.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# dim={} symmetry={:?}", self.dim, self.symmetry)?;
        writeln!(w, "# row col re im")?;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let z = self.get(i, j);
                if z.re != T::zero() || z.im != T::zero() {
                    writeln!(w, "{} {} {:e} {:e}", self.labels[i], self.labels[j], z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Infinite uniform chain truncated to `-M..=M`, site 0 coupled to a side
/// resonator carrying the gain or loss. Rows: chain `-M..=M` then `S`.
pub fn build_side_coupled_chain<T: Real>(
    spec: &LatticeSpec<T>,
    half_width: usize,
) -> Result<HamiltonianMatrix<T>, ModelError> {
    spec.expect_topology(Topology::SideCoupledChain)?;
    spec.validate()?;
    if half_width < 2 {
        return Err(ModelError::HalfWidthTooSmall(half_width));
    }
    let chain = 2 * half_width + 1;
    let dim = chain + 1;
    let mut labels: Vec<SiteLabel> = (-(half_width as i64)..=half_width as i64).map(SiteLabel::Chain).collect();
    labels.push(SiteLabel::Side);
    let origin = Origin { spec: *spec, layout: Layout::SideCoupled { half_width } };
    let mut h = HamiltonianMatrix::zeros(dim, spec.symmetry(), labels, origin);
    for i in 0..chain - 1 {
        h.bond(i, i + 1, spec.kappa);
    }
    h.bond(half_width, chain, spec.g);
    h.add_diag(chain, im(spec.gamma));
    apply_background(&mut h, spec.gamma_p);
    Ok(h)
}

/// Half-space chain of `N` sites plus one end resonator (dimension `N+1`).
pub fn build_folded_chain<T: Real>(
    spec: &LatticeSpec<T>,
    end_coupling: EndCoupling,
) -> Result<HamiltonianMatrix<T>, ModelError> {
    spec.expect_topology(Topology::FoldedSemiInfinite)?;
    spec.validate()?;
    let n = spec.n_sites;
    let dim = n + 1;
    let origin = Origin { spec: *spec, layout: Layout::Folded { end_coupling } };
    let mut h = HamiltonianMatrix::zeros(dim, spec.symmetry(), (1..=dim).map(SiteLabel::Site).collect(), origin);
    let sqrt2k = T::SQRT_2() * spec.kappa;
    match end_coupling {
        EndCoupling::SqrtTwoKappa => {
            for i in 0..n - 1 {
                h.bond(i, i + 1, spec.kappa);
            }
            h.bond(n - 1, n, sqrt2k);
        }
        EndCoupling::ExplicitG => {
            for i in 0..n - 2 {
                h.bond(i, i + 1, spec.kappa);
            }
            h.bond(n - 2, n - 1, sqrt2k);
            h.bond(n - 1, n, spec.g);
        }
    }
    h.add_diag(n, im(spec.gamma));
    apply_background(&mut h, spec.gamma_p);
    Ok(h)
}

/// Finite chain with loss `-iγ` at site 1 and gain `+iγ` at site `N+2`.
pub fn build_pt_chain<T: Real>(spec: &LatticeSpec<T>) -> Result<HamiltonianMatrix<T>, ModelError> {
    spec.expect_topology(Topology::PtFinite)?;
    spec.validate()?;
    let n = spec.n_sites;
    let dim = n + 2;
    let origin = Origin { spec: *spec, layout: Layout::Pt };
    let mut h = HamiltonianMatrix::zeros(dim, spec.symmetry(), (1..=dim).map(SiteLabel::Site).collect(), origin);
    let sqrt2k = T::SQRT_2() * spec.kappa;
    h.bond(0, 1, spec.g);
    h.bond(1, 2, sqrt2k);
    for i in 2..n - 1 {
        h.bond(i, i + 1, spec.kappa);
    }
    h.bond(n - 1, n, sqrt2k);
    h.bond(n, n + 1, spec.g);
    h.add_diag(0, im(-spec.gamma));
    h.add_diag(n + 1, im(spec.gamma));
    apply_background(&mut h, spec.gamma_p);
    Ok(h)
}

/// Builds whichever lattice `spec.topology` names. The side-coupled chain
/// takes `half_width`; the folded chain takes `end_coupling`.
pub fn build<T: Real>(
    spec: &LatticeSpec<T>,
    half_width: usize,
    end_coupling: EndCoupling,
) -> Result<HamiltonianMatrix<T>, ModelError> {
    match spec.topology {
        Topology::SideCoupledChain => build_side_coupled_chain(spec, half_width),
        Topology::FoldedSemiInfinite => build_folded_chain(spec, end_coupling),
        Topology::PtFinite => build_pt_chain(spec),
    }
}

fn apply_background<T: Real>(h: &mut HamiltonianMatrix<T>, gamma_p: T) {
    if gamma_p != T::zero() {
        for i in 0..h.dim {
            h.add_diag(i, cx(T::zero(), -gamma_p));
        }
    }
}
