//! Closed-form scattering off the side-coupled resonator: `η_k`, reflection and
//! transmission amplitudes, the critical rate, the steady states at the
//! singularity and the overlap between even eigenstates of `H` and `H†`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::LatticeSpec;
use crate::scalar::{cx, re, Cx, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatteringError {
    #[error("wave vector {0} outside the open interval (0, pi)")]
    KOutOfDomain(f64),
    #[error("wave vector {k} is not on the grid n*pi/{half_width}")]
    OffGrid { k: f64, half_width: usize },
    #[error("steady-state profile is undefined at the scattering site j = 0")]
    ScatteringSite,
    #[error("half_width must be >= 2, got {0}")]
    HalfWidthTooSmall(usize),
}

/// Gain (`σ = +1`) or loss (`σ = -1`) side of the singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Gain,
    Loss,
}

impl Branch {
    pub fn sigma(self) -> i8 {
        match self {
            Branch::Gain => 1,
            Branch::Loss => -1,
        }
    }

    pub fn from_sigma(sigma: i8) -> Option<Self> {
        match sigma {
            1 => Some(Branch::Gain),
            -1 => Some(Branch::Loss),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Reflection/transmission pair, or a flag when `|η_k|` is below threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplitudes<T> {
    Finite { r: Cx<T>, t: Cx<T> },
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringSolution<T> {
    pub k: T,
    pub energy: T,
    pub eta: Cx<T>,
    pub amplitudes: Amplitudes<T>,
    /// Overlap of the even eigenstates of `H` and `H†` per unit window,
    /// `4 η_k η_{-k}`. Complex once both `γ` and `cos k` are non-zero.
    pub overlap_even: Cx<T>,
    /// Same for the odd state `sin(kj)`, which does not see the resonator.
    pub overlap_odd: T,
}

impl<T: Real> ScatteringSolution<T> {
    pub fn is_divergent(&self) -> bool {
        matches!(self.amplitudes, Amplitudes::Divergent)
    }

    pub fn r(&self) -> Option<Cx<T>> {
        match self.amplitudes {
            Amplitudes::Finite { r, .. } => Some(r),
            Amplitudes::Divergent => None,
        }
    }

    pub fn t(&self) -> Option<Cx<T>> {
        match self.amplitudes {
            Amplitudes::Finite { t, .. } => Some(t),
            Amplitudes::Divergent => None,
        }
    }

    pub fn reflectance(&self) -> Option<T> {
        self.r().map(|r| r.norm_sqr())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularityPoint<T> {
    pub k_c: T,
    pub gamma_c: T,
    pub sigma: i8,
}

/// Reflection amplitude of a `k = π/2` wave off the folded end resonator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FoldedReflection<T> {
    Finite(T),
    Divergent,
}

impl<T: Real> FoldedReflection<T> {
    pub fn amplitude(self) -> Option<T> {
        match self {
            FoldedReflection::Finite(r) => Some(r),
            FoldedReflection::Divergent => None,
        }
    }

    pub fn reflectance(self) -> Option<T> {
        self.amplitude().map(|r| r * r)
    }
}

/// Divergence threshold on `|η_k|` (and on `|2κγ - g²|`), `1e-10 g²`.
pub fn divergence_threshold<T: Real>(g: T) -> T {
    T::lit(1e-10) * g * g
}

/// `η_k = 2iκ sin k (iγ + 2κ cos k) + g²` without a domain check.
pub fn eta_raw<T: Real>(k: T, kappa: T, g: T, gamma: T) -> Cx<T> {
    let two = T::lit(2.0);
    cx(T::zero(), two * kappa * k.sin()) * cx(two * kappa * k.cos(), gamma) + re(g * g)
}

fn check_k<T: Real>(k: T) -> Result<(), ScatteringError> {
    if k > T::zero() && k < T::PI() {
        Ok(())
    } else {
        Err(ScatteringError::KOutOfDomain(k.to_f64_lossy()))
    }
}

pub fn eta<T: Real>(k: T, spec: &LatticeSpec<T>) -> Result<Cx<T>, ScatteringError> {
    check_k(k)?;
    Ok(eta_raw(k, spec.kappa, spec.g, spec.gamma))
}

/// Amplitudes of the solution with incident `e^{ikj}` from the left,
/// `r = -g²/η_k`, `t = r + 1`.
pub fn reflection_transmission<T: Real>(k: T, spec: &LatticeSpec<T>) -> Result<ScatteringSolution<T>, ScatteringError> {
    let eta_k = eta(k, spec)?;
    let eta_mk = eta_raw(-k, spec.kappa, spec.g, spec.gamma);
    let amplitudes = if eta_k.norm() < divergence_threshold(spec.g) {
        Amplitudes::Divergent
    } else {
        let r = re(-spec.g * spec.g) / eta_k;
        Amplitudes::Finite { r, t: r + re(T::one()) }
    };
    Ok(ScatteringSolution {
        k,
        energy: -T::lit(2.0) * spec.kappa * k.cos(),
        eta: eta_k,
        amplitudes,
        overlap_even: eta_k * eta_mk * re(T::lit(4.0)),
        overlap_odd: T::one(),
    })
}

/// `r = (2κγ + g²)/(2κγ - g²)` for the folded chain at `k = π/2`.
pub fn folded_reflection<T: Real>(gamma: T, g: T, kappa: T) -> FoldedReflection<T> {
    let a = T::lit(2.0) * kappa * gamma;
    let g2 = g * g;
    let den = a - g2;
    if den.abs() < divergence_threshold(g) {
        FoldedReflection::Divergent
    } else {
        FoldedReflection::Finite((a + g2) / den)
    }
}

/// Reflection amplitude of the folded chain at any `k`, i.e. of the even
/// sector of the side-coupled chain: `r + t = 1 - 2g²/η_k`. `None` when
/// `|η_k|` is below the divergence threshold. Reduces to
/// [`folded_reflection`] at `k = π/2`.
pub fn folded_reflection_at<T: Real>(k: T, spec: &LatticeSpec<T>) -> Result<Option<Cx<T>>, ScatteringError> {
    let e = eta(k, spec)?;
    if e.norm() < divergence_threshold(spec.g) {
        return Ok(None);
    }
    Ok(Some(re(T::one()) - re(T::lit(2.0) * spec.g * spec.g) / e))
}

pub fn locate_singularity<T: Real>(spec: &LatticeSpec<T>, branch: Branch) -> SingularityPoint<T> {
    SingularityPoint { k_c: T::FRAC_PI_2(), gamma_c: spec.critical_gamma(branch.sigma()), sigma: branch.sigma() }
}

/// `i^n` without rounding.
pub(crate) fn i_pow<T: Real>(n: i64) -> Cx<T> {
    match n.rem_euclid(4) {
        0 => re(T::one()),
        1 => cx(T::zero(), T::one()),
        2 => re(-T::one()),
        _ => cx(T::zero(), -T::one()),
    }
}

/// Steady state at the singularity, `e^{iσπ|j|/2}` away from the scattering site.
pub fn steady_state_profile<T: Real>(branch: Branch, sites: &[i64]) -> Result<Vec<Cx<T>>, ScatteringError> {
    let sigma = branch.sigma() as i64;
    sites
        .iter()
        .map(|&j| if j == 0 { Err(ScatteringError::ScatteringSite) } else { Ok(i_pow(sigma * j.abs())) })
        .collect()
}

/// Odd eigenstate `sin(kj)`; identical for `H` and `H†`.
pub fn odd_parity_state<T: Real>(k: T, sites: &[i64]) -> Vec<T> {
    sites.iter().map(|&j| (k * T::lit(j as f64)).sin()).collect()
}

/// Even eigenstate of `H` at chain site `j != 0`.
pub fn even_parity_state<T: Real>(k: T, spec: &LatticeSpec<T>, j: i64) -> Cx<T> {
    let ek = eta_raw(k, spec.kappa, spec.g, spec.gamma);
    let emk = eta_raw(-k, spec.kappa, spec.g, spec.gamma);
    let ph = Cx::from_polar(T::one(), k * T::lit(j as f64));
    if j < 0 {
        ek * ph - emk * ph.conj()
    } else {
        -emk * ph + ek * ph.conj()
    }
}

/// Even eigenstate of `H†`, obtained from the `H` state by `γ -> -γ`.
pub fn even_parity_dual_state<T: Real>(k: T, spec: &LatticeSpec<T>, j: i64) -> Cx<T> {
    let flipped = spec.with_gamma(-spec.gamma);
    even_parity_state(k, &flipped, j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiorthOverlap<T> {
    /// `Σ_j conj(ψ̄_j) ψ_j` over `0 < |j| <= M`, divided by `M`.
    pub value: Cx<T>,
    pub collapsed: bool,
}

/// Direct summation of the overlap between the eigenstates of `H` and `H†`
/// with the same `k` and parity on the window `0 < |j| <= M`.
///
/// `k` must be `nπ/M` for some integer `0 < n < M`. Collapse is flagged when
/// `|C| < 1e-10 g⁴`; the even overlap scales as `g⁴`.
pub fn biorth_overlap<T: Real>(
    k: T,
    parity: Parity,
    spec: &LatticeSpec<T>,
    half_width: usize,
) -> Result<BiorthOverlap<T>, ScatteringError> {
    check_k(k)?;
    if half_width < 2 {
        return Err(ScatteringError::HalfWidthTooSmall(half_width));
    }
    let m = T::count(half_width);
    let n = k * m / T::PI();
    if (n - n.round()).abs() > T::lit(1e-9) * m.max(T::one()) {
        return Err(ScatteringError::OffGrid { k: k.to_f64_lossy(), half_width });
    }
    let mut sum = Cx::<T>::default();
    let window = (1..=half_width as i64).flat_map(|j| [-j, j]);
    match parity {
        Parity::Even => {
            for j in window {
                sum = sum + even_parity_dual_state(k, spec, j).conj() * even_parity_state(k, spec, j);
            }
        }
        Parity::Odd => {
            for j in window {
                let s = (k * T::lit(j as f64)).sin();
                sum = sum + re(s * s);
            }
        }
    }
    let value = sum / re(m);
    let g2 = spec.g * spec.g;
    Ok(BiorthOverlap { value, collapsed: value.norm() < T::lit(1e-10) * g2 * g2 })
}
