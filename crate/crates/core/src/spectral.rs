//! Eigenanalysis of finite lattices in double precision: left/right
//! eigenvectors, biorthogonal overlaps, bound states, exceptional-point
//! diagnostics for the gain/loss chain and its quantisation condition.

use faer::Mat;
use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::StateFilter;
use crate::model::{build_pt_chain, HamiltonianMatrix, LatticeSpec, ModelError, SymmetryTag, Topology};
use crate::scattering::i_pow;

pub type C64 = Complex<f64>;

/// Largest matrix `full_spectrum` accepts.
pub const MAX_DIM: usize = 4096;
/// Eigenvalues closer than this (times `κ`) are treated as one cluster.
pub const CLUSTER_TOL: f64 = 1e-7;
/// Overlap below which the analytic zero-energy states count as coalesced.
pub const EP_OVERLAP_TOL: f64 = 1e-8;
/// Overlap of unit-normalised numerical left/right eigenvectors below which
/// a pair is treated as coalesced. Rounding splits an exceptional pair by
/// about `1e-8`, which leaves overlaps of a few `1e-8` rather than zero.
pub const NUMERICAL_EP_OVERLAP_TOL: f64 = 1e-6;
/// Inverse participation ratio above which a state counts as localised.
pub const LOCALISED_IPR: f64 = 0.1;
/// Relative singular value below which a direction counts as null.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("eigen-solver failed on a {dim}x{dim} matrix (Frobenius norm {frobenius:.3e}): {detail}")]
    Solver { dim: usize, frobenius: f64, detail: String },
    #[error("matrix dimension {dim} exceeds the dense limit {max}")]
    TooLarge { dim: usize, max: usize },
    #[error("biorthogonal basis refused: smallest left/right overlap {min_overlap:.3e} signals an exceptional point")]
    NearEp { min_overlap: f64 },
    #[error("requires the gain/loss chain, got {0}")]
    NotPtChain(Topology),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Bulk plane-wave decomposition `f_l = A e^{ikl} + B e^{-ikl}` of a right
/// eigenvector and the matching coefficients of its left partner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneWaveCoeffs {
    pub a: C64,
    pub b: C64,
    pub a_dual: C64,
    pub b_dual: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub energy: C64,
    /// Unit-norm eigenvector of `H`.
    pub right: Vec<C64>,
    /// Unit-norm eigenvector of `H†` with eigenvalue `conj(energy)`.
    pub left: Vec<C64>,
    /// `Σ conj(left_l) right_l`.
    pub overlap: C64,
    pub k_label: Option<f64>,
    pub plane_wave: Option<PlaneWaveCoeffs>,
    pub ipr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Complex,
    PureImaginary,
    LocalisedReal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundState {
    pub index: usize,
    #[serde(serialize_with = "ser_c64")]
    pub energy: C64,
    pub kind: BoundKind,
    pub ipr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EpVerdict {
    NotEp,
    /// Coalesced pair forming a 2x2 Jordan block.
    Ep2,
    DegenerateDiagonalizable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub pairs: Vec<EigenPair>,
    pub bound_states: Vec<BoundState>,
    pub ep_verdict: EpVerdict,
    /// Smallest `|overlap|` over all pairs (unit-norm vectors).
    pub min_overlap: f64,
    /// Largest distance from `-E` to the nearest unmatched eigenvalue.
    pub chiral_defect: f64,
    /// Same for the pairing `E <-> -conj(E)`.
    pub conjugate_chiral_defect: f64,
    pub energy_scale: f64,
}

impl SpectralReport {
    pub fn energies(&self) -> Vec<C64> {
        self.pairs.iter().map(|p| p.energy).collect()
    }

    pub fn count_bound(&self, kind: BoundKind) -> usize {
        self.bound_states.iter().filter(|b| b.kind == kind).count()
    }

    pub fn is_bound(&self, index: usize) -> bool {
        self.bound_states.iter().any(|b| b.index == index)
    }
}

fn ser_c64<S: serde::Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

pub(crate) fn to_faer(h: &HamiltonianMatrix<f64>) -> Mat<C64> {
    Mat::from_fn(h.dim(), h.dim(), |i, j| h.get(i, j))
}

fn frobenius(h: &HamiltonianMatrix<f64>) -> f64 {
    h.entries().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn normalise(v: &mut [C64]) {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
}

pub fn ipr(v: &[C64]) -> f64 {
    let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    v.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / (n2 * n2)
}

fn eigen(h: &HamiltonianMatrix<f64>, m: &Mat<C64>) -> Result<(Vec<C64>, Vec<Vec<C64>>), SpectralError> {
    let dim = h.dim();
    let e = m.eigen().map_err(|err| SpectralError::Solver { dim, frobenius: frobenius(h), detail: format!("{err:?}") })?;
    let s = e.S().column_vector();
    let u = e.U();
    let vals: Vec<C64> = (0..dim).map(|i| s[i]).collect();
    let vecs = (0..dim)
        .map(|c| {
            let mut v: Vec<C64> = (0..dim).map(|r| u[(r, c)]).collect();
            normalise(&mut v);
            v
        })
        .collect();
    if vals.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SpectralError::Solver { dim, frobenius: frobenius(h), detail: "non-finite eigenvalue".into() });
    }
    Ok((vals, vecs))
}

/// Greedy nearest matching of `a[i]` to `target(a[i])` among `b`; returns
/// the permutation and the largest matched distance.
fn match_nearest(a: &[C64], b: &[C64], target: impl Fn(C64) -> C64) -> (Vec<usize>, f64) {
    let n = a.len();
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, &x) in a.iter().enumerate() {
        let t = target(x);
        for (j, &y) in b.iter().enumerate() {
            cand.push(((t - y).norm(), i, j));
        }
    }
    cand.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; n];
    let mut used_b = vec![false; b.len()];
    let mut perm = vec![usize::MAX; n];
    let mut worst: f64 = 0.0;
    let mut left = n;
    for (d, i, j) in cand {
        if left == 0 {
            break;
        }
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            perm[i] = j;
            worst = worst.max(d);
            left -= 1;
        }
    }
    (perm, worst)
}

/// Single-linkage clusters of eigenvalues closer than `tol`.
fn clusters(vals: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = vals.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (vals[i] - vals[j]).norm() < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

fn plane_wave_fit(v: &[C64], k: f64, bulk: std::ops::Range<usize>) -> Option<(C64, C64)> {
    if bulk.len() < 2 {
        return None;
    }
    // columns e^{ikl}, e^{-ikl} with 1-based l
    let (mut g11, mut g12, mut r1, mut r2) = (0.0, C64::default(), C64::default(), C64::default());
    let mut g22 = 0.0;
    for idx in bulk {
        let l = (idx + 1) as f64;
        let c1 = C64::from_polar(1.0, k * l);
        let c2 = c1.conj();
        g11 += 1.0;
        g22 += 1.0;
        g12 += c1.conj() * c2;
        r1 += c1.conj() * v[idx];
        r2 += c2.conj() * v[idx];
    }
    let det = g11 * g22 - g12.norm_sqr();
    if det.abs() < 1e-9 * g11 * g22 {
        return None;
    }
    let a = (r1 * g22 - g12 * r2) / det;
    let b = (r2 * g11 - g12.conj() * r1) / det;
    Some((a, b))
}

fn chiral_defect(vals: &[C64], target: impl Fn(C64) -> C64) -> f64 {
    match_nearest(vals, vals, target).1
}

/// All eigenvalues with right and left eigenvectors, bound-state
/// classification and an exceptional-point verdict.
pub fn full_spectrum(h: &HamiltonianMatrix<f64>) -> Result<SpectralReport, SpectralError> {
    let dim = h.dim();
    if dim > MAX_DIM {
        return Err(SpectralError::TooLarge { dim, max: MAX_DIM });
    }
    let scale = h.energy_scale();
    let m = to_faer(h);
    let (vals, right) = eigen(h, &m)?;
    let (lvals, left) = eigen(h, &m.adjoint().to_owned())?;

    let (perm, _) = match_nearest(&vals, &lvals, |e| e.conj());
    let mut pairs: Vec<EigenPair> = (0..dim)
        .map(|i| {
            let l = left[perm[i]].clone();
            let overlap = dot(&l, &right[i]);
            EigenPair { energy: vals[i], ipr: ipr(&right[i]), right: right[i].clone(), left: l, overlap, k_label: None, plane_wave: None }
        })
        .collect();

    // Within a cluster the pairing by eigenvalue is arbitrary; re-pair by
    // largest overlap.
    let groups = clusters(&vals, CLUSTER_TOL * scale);
    for g in groups.iter().filter(|g| g.len() > 1) {
        let lefts: Vec<Vec<C64>> = g.iter().map(|&i| pairs[i].left.clone()).collect();
        let mut taken = vec![false; g.len()];
        for &i in g {
            let (best, _) = lefts
                .iter()
                .enumerate()
                .filter(|(j, _)| !taken[*j])
                .map(|(j, l)| (j, dot(l, &pairs[i].right).norm()))
                .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            taken[best] = true;
            pairs[i].left = lefts[best].clone();
            pairs[i].overlap = dot(&pairs[i].left, &pairs[i].right);
        }
    }

    let tol_im = CLUSTER_TOL * scale;
    let bulk = h.bulk_sites();
    for p in pairs.iter_mut() {
        if p.energy.im.abs() < tol_im && p.energy.re.abs() < 2.0 * scale {
            let k = (-p.energy.re / (2.0 * scale)).acos();
            p.k_label = Some(k);
            if let Some(bulk) = bulk.clone() {
                if let (Some((a, b)), Some((ad, bd))) =
                    (plane_wave_fit(&p.right, k, bulk.clone()), plane_wave_fit(&p.left, k, bulk))
                {
                    p.plane_wave = Some(PlaneWaveCoeffs { a, b, a_dual: ad, b_dual: bd });
                }
            }
        }
    }

    let mut bound_states = Vec::new();
    for (index, p) in pairs.iter().enumerate() {
        let complex = p.energy.im.abs() > tol_im;
        let localised = p.ipr > LOCALISED_IPR;
        let bound = match h.symmetry() {
            SymmetryTag::General => localised,
            SymmetryTag::Hermitian | SymmetryTag::PtSymmetric => complex || localised,
        };
        if bound {
            let kind = if !complex {
                BoundKind::LocalisedReal
            } else if p.energy.re.abs() < tol_im {
                BoundKind::PureImaginary
            } else {
                BoundKind::Complex
            };
            bound_states.push(BoundState { index, energy: p.energy, kind, ipr: p.ipr });
        }
    }

    let mut ep_verdict = EpVerdict::NotEp;
    for g in groups.iter().filter(|g| g.len() > 1) {
        let collapsed = g.iter().any(|&i| pairs[i].overlap.norm() < NUMERICAL_EP_OVERLAP_TOL);
        let v = if collapsed { EpVerdict::Ep2 } else { EpVerdict::DegenerateDiagonalizable };
        if ep_verdict != EpVerdict::Ep2 {
            ep_verdict = v;
        }
    }

    let min_overlap = pairs.iter().map(|p| p.overlap.norm()).fold(f64::INFINITY, f64::min);
    Ok(SpectralReport {
        chiral_defect: chiral_defect(&vals, |e| -e),
        conjugate_chiral_defect: chiral_defect(&vals, |e| -e.conj()),
        pairs,
        bound_states,
        ep_verdict,
        min_overlap,
        energy_scale: scale,
    })
}

/// Right vectors `φ_k = v_k/√G_k` and left vectors `φ̃_k = u_k conj(1/√G_k)`
/// so that `<φ̃_k|φ_k'> = δ_kk'`.
#[derive(Debug, Clone)]
pub struct BiorthBasis {
    pub energies: Vec<C64>,
    pub right: Vec<Vec<C64>>,
    pub left: Vec<Vec<C64>>,
    pub bound: Vec<bool>,
}

pub fn biorth_basis(h: &HamiltonianMatrix<f64>) -> Result<BiorthBasis, SpectralError> {
    let report = full_spectrum(h)?;
    biorth_basis_from(&report)
}

pub fn biorth_basis_from(report: &SpectralReport) -> Result<BiorthBasis, SpectralError> {
    if report.ep_verdict == EpVerdict::Ep2 || report.min_overlap < NUMERICAL_EP_OVERLAP_TOL {
        return Err(SpectralError::NearEp { min_overlap: report.min_overlap });
    }
    let mut basis = BiorthBasis { energies: vec![], right: vec![], left: vec![], bound: vec![] };
    for (i, p) in report.pairs.iter().enumerate() {
        let c = C64::new(1.0, 0.0) / p.overlap.sqrt();
        basis.energies.push(p.energy);
        basis.right.push(p.right.iter().map(|z| z * c).collect());
        basis.left.push(p.left.iter().map(|z| z * c.conj()).collect());
        basis.bound.push(report.is_bound(i));
    }
    Ok(basis)
}

impl BiorthBasis {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `<φ̃_k|ψ>` for every `k`.
    pub fn coefficients(&self, state: &[C64]) -> Vec<C64> {
        self.left.iter().map(|l| dot(l, state)).collect()
    }

    /// `Σ_k e^{-iE_k t} <φ̃_k|ψ> |φ_k>` over the modes `keep` accepts.
    pub fn propagate_with(&self, state: &[C64], t: f64, keep: impl Fn(usize) -> bool) -> Vec<C64> {
        let coeffs = self.coefficients(state);
        let mut out = vec![C64::default(); state.len()];
        for (k, c) in coeffs.iter().enumerate() {
            if !keep(k) {
                continue;
            }
            let w = c * (C64::new(0.0, -t) * self.energies[k]).exp();
            for (o, r) in out.iter_mut().zip(&self.right[k]) {
                *o += w * r;
            }
        }
        out
    }

    pub fn propagate(&self, state: &[C64], t: f64) -> Vec<C64> {
        self.propagate_with(state, t, |_| true)
    }

    /// `max |<φ̃_i|φ_j> - δ_ij|`.
    pub fn biorthogonality_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = dot(&self.left[i], &self.right[j]) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// `max |Σ_k |φ_k><φ̃_k| - I|` entrywise.
    pub fn completeness_defect(&self) -> f64 {
        let n = self.dim();
        let mut acc = vec![C64::default(); n * n];
        for k in 0..n {
            let r = &self.right[k];
            let l = &self.left[k];
            for a in 0..n {
                let ra = r[a];
                let row = &mut acc[a * n..(a + 1) * n];
                for (b, x) in row.iter_mut().enumerate() {
                    *x += ra * l[b].conj();
                }
            }
        }
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let d = acc[a * n + b] - if a == b { 1.0 } else { 0.0 };
                worst = worst.max(d.norm());
            }
        }
        worst
    }
}

/// Removes the components along chosen eigenvectors of `H`:
/// `ψ -> ψ - Σ_b |v_b> <ũ_b|ψ>` with `<ũ_b|v_b> = 1`.
#[derive(Debug, Clone)]
pub struct ModeProjector {
    right: Vec<Vec<C64>>,
    dual: Vec<Vec<C64>>,
    pub energies: Vec<C64>,
}

impl ModeProjector {
    /// Projector onto the complement of the localised states of `report`.
    pub fn localised(report: &SpectralReport) -> Self {
        let mut p = ModeProjector { right: vec![], dual: vec![], energies: vec![] };
        for b in report.bound_states.iter().filter(|b| b.ipr > LOCALISED_IPR) {
            let pair = &report.pairs[b.index];
            let s = pair.overlap.conj();
            p.right.push(pair.right.clone());
            p.dual.push(pair.left.iter().map(|z| z / s).collect());
            p.energies.push(pair.energy);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.right.is_empty()
    }

    /// Weights `<ũ_b|ψ>` of the projected modes.
    pub fn weights(&self, state: &[C64]) -> Vec<C64> {
        self.dual.iter().map(|d| dot(d, state)).collect()
    }
}

impl StateFilter<f64> for ModeProjector {
    fn apply(&self, state: &mut [C64]) {
        for (v, d) in self.right.iter().zip(&self.dual) {
            let c = dot(d, state);
            for (s, x) in state.iter_mut().zip(v) {
                *s -= c * x;
            }
        }
    }
}

/// Left-hand side of the quantisation condition of the gain/loss chain,
/// `{4κ²[κ² sin²2k + γ² sin²k] - g⁴} sin((N-1)k) + 4g²κ² sin 2k cos((N-1)k)`.
pub fn critical_function(k: f64, spec: &LatticeSpec<f64>, n: usize) -> f64 {
    let (kap, g, gam) = (spec.kappa, spec.g, spec.gamma);
    let s2 = (2.0 * k).sin();
    let s1 = k.sin();
    let m = (n as f64 - 1.0) * k;
    (4.0 * kap * kap * (kap * kap * s2 * s2 + gam * gam * s1 * s1) - g.powi(4)) * m.sin()
        + 4.0 * g * g * kap * kap * s2 * m.cos()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalRoots {
    /// All roots in `(0, π)`, ascending.
    pub roots: Vec<f64>,
    /// Roots where the function touches zero without changing sign.
    pub tangent: Vec<f64>,
    pub warnings: Vec<String>,
}

impl CriticalRoots {
    pub fn contains(&self, k: f64, tol: f64) -> bool {
        self.roots.iter().any(|r| (r - k).abs() < tol)
    }

    /// The `count` roots closest to `center`, ascending.
    pub fn nearest(&self, center: f64, count: usize) -> Vec<f64> {
        let mut r = self.roots.clone();
        r.sort_by(|a, b| (a - center).abs().total_cmp(&(b - center).abs()));
        r.truncate(count);
        r.sort_by(f64::total_cmp);
        r
    }

    /// For each root within `window` of `π/2`: `(root, nπ/N nearest to it)`.
    pub fn compare_with_uniform_grid(&self, n: usize, window: f64) -> Vec<(f64, f64)> {
        let step = std::f64::consts::PI / n as f64;
        self.roots
            .iter()
            .filter(|r| (*r - std::f64::consts::FRAC_PI_2).abs() <= window)
            .map(|&r| (r, (r / step).round() * step))
            .collect()
    }
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    while b - a > 1e-12 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while b - a > 1e-13 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

/// Real roots of [`critical_function`] in `(0, π)`: sign changes on a grid
/// of `8N` points refined by bisection to `1e-12`, plus tangent zeros found
/// by minimising `|F|` around grid-local minima.
pub fn solve_critical_equation(spec: &LatticeSpec<f64>, n: usize) -> CriticalRoots {
    let f = |k: f64| critical_function(k, spec, n);
    let pts = 8 * n.max(1);
    let h = std::f64::consts::PI / pts as f64;
    let ks: Vec<f64> = (0..pts).map(|i| (i as f64 + 0.5) * h).collect();
    let fs: Vec<f64> = ks.iter().map(|&k| f(k)).collect();
    let scale = fs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut out = CriticalRoots { roots: vec![], tangent: vec![], warnings: vec![] };
    for i in 0..pts - 1 {
        if (fs[i] > 0.0) != (fs[i + 1] > 0.0) {
            out.roots.push(bisect(&f, ks[i], ks[i + 1]));
        }
    }
    let absf = |k: f64| f(k).abs();
    for i in 1..pts - 1 {
        let (a, b, c) = (fs[i - 1].abs(), fs[i].abs(), fs[i + 1].abs());
        let same_sign = (fs[i - 1] > 0.0) == (fs[i] > 0.0) && (fs[i] > 0.0) == (fs[i + 1] > 0.0);
        if b <= a && b <= c && same_sign {
            let k = golden_min(&absf, ks[i - 1], ks[i + 1]);
            let v = absf(k);
            if v < 1e-10 * scale {
                out.roots.push(k);
                out.tangent.push(k);
            } else if v < 1e-3 * scale {
                out.warnings.push(format!("possible unresolved root pair near k = {k:.9} (|F| = {v:.3e})"));
            }
        }
    }
    out.roots.sort_by(f64::total_cmp);
    out
}

/// Analytic zero-energy state of `H` at `γ = g²/(2κ)` with `f_2 = 1`.
pub fn zero_mode_right(spec: &LatticeSpec<f64>, n: usize) -> Vec<C64> {
    let (kap, g) = (spec.kappa, spec.g);
    let mut f = vec![C64::default(); n + 2];
    f[0] = C64::new(0.0, 2.0 * kap / g);
    f[1] = C64::new(1.0, 0.0);
    for l in 3..=n {
        f[l - 1] = -std::f64::consts::SQRT_2 * i_pow::<f64>(-(l as i64));
    }
    f[n] = i_pow(-(n as i64 - 1));
    f[n + 1] = i_pow::<f64>(-(n as i64)) * (2.0 * kap / g);
    f
}

/// Analytic zero-energy state of `H†` at `γ = g²/(2κ)` with `f̃_2 = 1`.
pub fn zero_mode_left(spec: &LatticeSpec<f64>, n: usize) -> Vec<C64> {
    let (kap, g) = (spec.kappa, spec.g);
    let mut f = vec![C64::default(); n + 2];
    f[0] = C64::new(0.0, -2.0 * kap / g);
    f[1] = C64::new(1.0, 0.0);
    for l in 3..=n {
        f[l - 1] = -std::f64::consts::SQRT_2 * i_pow::<f64>(l as i64);
    }
    f[n] = i_pow(n as i64 - 1);
    f[n + 1] = i_pow::<f64>(n as i64) * (2.0 * kap / g);
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroModeRanks {
    /// `dim ker H`.
    pub geometric: usize,
    /// `dim ker H²`, capped at the Jordan chain length probed.
    pub algebraic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpReport {
    pub verdict: EpVerdict,
    /// `<φ̃_{π/2}|φ_{π/2}>` from the analytic states.
    #[serde(serialize_with = "ser_c64")]
    pub overlap: C64,
    /// `max(‖Hφ‖, ‖H†φ̃‖) / ‖φ‖`; small only at `γ = g²/(2κ)`.
    pub closed_form_residual: f64,
    pub ranks: ZeroModeRanks,
    /// The analytic and rank diagnostics give the same answer.
    pub consistent: bool,
}

fn null_dim(m: &Mat<C64>) -> Result<usize, SpectralError> {
    let sv = m.singular_values().map_err(|e| SpectralError::Solver {
        dim: m.nrows(),
        frobenius: m.norm_l2(),
        detail: format!("{e:?}"),
    })?;
    let top = sv.iter().cloned().fold(0.0f64, f64::max);
    Ok(sv.iter().filter(|&&s| s <= RANK_TOL * top).count())
}

fn apply(h: &HamiltonianMatrix<f64>, v: &[C64]) -> Vec<C64> {
    (0..h.dim()).map(|i| h.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Exceptional-point diagnosis of the `N`-site gain/loss chain with the
/// couplings and rate of `spec`.
pub fn ep_detect(spec: &LatticeSpec<f64>, n: usize) -> Result<EpReport, SpectralError> {
    if spec.topology != Topology::PtFinite {
        return Err(SpectralError::NotPtChain(spec.topology));
    }
    let spec = LatticeSpec { n_sites: n, ..*spec };
    let h = build_pt_chain(&spec)?;
    let f = zero_mode_right(&spec, n);
    let ft = zero_mode_left(&spec, n);
    let overlap = dot(&ft, &f);
    let hd = h.conjugate_transpose();
    let residual = (norm(&apply(&h, &f)) / norm(&f)).max(norm(&apply(&hd, &ft)) / norm(&ft));

    let m = to_faer(&h);
    let m2 = &m * &m;
    let ranks = ZeroModeRanks { geometric: null_dim(&m)?, algebraic: null_dim(&m2)? };
    let jordan = ranks.geometric == 1 && ranks.algebraic == 2;
    let analytic = residual < 1e-10 * spec.kappa && overlap.norm() < EP_OVERLAP_TOL;
    let verdict = if analytic || jordan {
        EpVerdict::Ep2
    } else if ranks.geometric >= 2 {
        EpVerdict::DegenerateDiagonalizable
    } else {
        EpVerdict::NotEp
    };
    let consistent = residual >= 1e-10 * spec.kappa || analytic == jordan;
    Ok(EpReport { verdict, overlap, closed_form_residual: residual, ranks, consistent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Topology;

    fn pt(n: usize, gamma: f64) -> HamiltonianMatrix<f64> {
        build_pt_chain(&LatticeSpec::new(1.0, 1.0, gamma, n, Topology::PtFinite)).unwrap()
    }

    #[test]
    fn hermitian_pt_chain_is_real_and_symmetric() {
        let r = full_spectrum(&pt(20, 0.0)).unwrap();
        assert!(r.pairs.iter().all(|p| p.energy.im.abs() < 1e-12));
        assert!(r.chiral_defect < 1e-10);
        assert_eq!(r.ep_verdict, EpVerdict::NotEp);
        assert!(r.bound_states.iter().all(|b| b.kind == BoundKind::LocalisedReal));
    }

    #[test]
    fn bound_state_counts_across_threshold() {
        let weak = full_spectrum(&pt(40, 0.3)).unwrap();
        assert_eq!(weak.count_bound(BoundKind::Complex), 4);
        assert_eq!(weak.count_bound(BoundKind::PureImaginary), 0);
        let strong = full_spectrum(&pt(40, 0.8)).unwrap();
        assert_eq!(strong.count_bound(BoundKind::Complex), 4);
        assert_eq!(strong.count_bound(BoundKind::PureImaginary), 2);
    }

    #[test]
    fn eigenvector_residuals() {
        let h = pt(30, 0.3);
        let hd = h.conjugate_transpose();
        let r = full_spectrum(&h).unwrap();
        for p in &r.pairs {
            let hv = apply(&h, &p.right);
            let res: f64 = hv.iter().zip(&p.right).map(|(a, b)| (a - p.energy * b).norm_sqr()).sum::<f64>().sqrt();
            assert!(res < 1e-9, "{res}");
            let hu = apply(&hd, &p.left);
            let res: f64 = hu.iter().zip(&p.left).map(|(a, b)| (a - p.energy.conj() * b).norm_sqr()).sum::<f64>().sqrt();
            assert!(res < 1e-9, "{res}");
        }
    }

    #[test]
    fn closed_form_zero_modes() {
        for n in [6usize, 7, 40, 41] {
            let spec = LatticeSpec::new(1.0, 1.0, 0.5, n, Topology::PtFinite);
            let h = build_pt_chain(&spec).unwrap();
            let f = zero_mode_right(&spec, n);
            assert!(norm(&apply(&h, &f)) < 1e-12);
            let ft = zero_mode_left(&spec, n);
            assert!(norm(&apply(&h.conjugate_transpose(), &ft)) < 1e-12);
        }
    }

    #[test]
    fn ep_detect_examples() {
        let spec = LatticeSpec::new(1.0, 1.0, 0.5, 40, Topology::PtFinite);
        let even = ep_detect(&spec, 40).unwrap();
        assert_eq!(even.verdict, EpVerdict::Ep2);
        assert!(even.overlap.norm() < 1e-12);
        assert_eq!(even.ranks, ZeroModeRanks { geometric: 1, algebraic: 2 });
        assert!(even.consistent);

        let odd = ep_detect(&spec, 41).unwrap();
        assert_eq!(odd.verdict, EpVerdict::NotEp);
        assert!((odd.overlap - C64::new(-8.0, 0.0)).norm() < 1e-12);
        assert_eq!(odd.ranks, ZeroModeRanks { geometric: 1, algebraic: 1 });

        let herm = ep_detect(&spec.with_gamma(0.0), 40).unwrap();
        assert_eq!(herm.verdict, EpVerdict::NotEp);
    }

    #[test]
    fn numerical_ep_is_flagged_and_basis_refused() {
        let h = pt(40, 0.5);
        let r = full_spectrum(&h).unwrap();
        assert_eq!(r.ep_verdict, EpVerdict::Ep2);
        assert!(matches!(biorth_basis_from(&r), Err(SpectralError::NearEp { .. })));
        let zero = r.pairs.iter().find(|p| p.energy.norm() < 1e-6).unwrap();
        let pw = zero.plane_wave.unwrap();
        assert!(pw.a.norm() < 1e-6 * pw.b.norm());
        assert!(pw.b_dual.norm() < 1e-6 * pw.a_dual.norm());
    }

    #[test]
    fn odd_chain_basis_is_complete() {
        let b = biorth_basis(&pt(41, 0.5)).unwrap();
        assert!(b.biorthogonality_defect() < 1e-8);
        assert!(b.completeness_defect() < 1e-7);
        let herm = biorth_basis(&pt(20, 0.0)).unwrap();
        assert!(herm.biorthogonality_defect() < 1e-10);
    }

    #[test]
    fn critical_roots_half_pi() {
        let spec = LatticeSpec::new(1.0, 1.0, 0.5, 0, Topology::PtFinite);
        let half = std::f64::consts::FRAC_PI_2;
        assert!(solve_critical_equation(&spec, 41).contains(half, 1e-9));
        let at_ep = solve_critical_equation(&spec, 40);
        assert!(at_ep.contains(half, 1e-9));
        assert_eq!(at_ep.tangent.len(), 1);
        assert!(!solve_critical_equation(&spec.with_gamma(0.3), 40).contains(half, 1e-6));
    }

    #[test]
    fn real_roots_match_real_spectrum() {
        let spec = LatticeSpec::new(1.0, 1.0, 0.3, 40, Topology::PtFinite);
        let roots = solve_critical_equation(&spec, 40);
        let r = full_spectrum(&build_pt_chain(&spec).unwrap()).unwrap();
        let mut real: Vec<f64> = r.pairs.iter().filter(|p| p.energy.im.abs() < 1e-7).map(|p| p.energy.re).collect();
        real.sort_by(f64::total_cmp);
        let mut from_roots: Vec<f64> = roots.roots.iter().map(|k| -2.0 * k.cos()).collect();
        from_roots.sort_by(f64::total_cmp);
        assert_eq!(real.len(), from_roots.len());
        for (a, b) in real.iter().zip(&from_roots) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }
}
