use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::scalar::{Cx, Real};

/// Gaussian packet `Ω^{-1/2} e^{-α²(j-N_c)²/2} e^{ikj}` on 1-based sites.
///
/// With `k` in `(0, π)` the packet moves towards larger `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavePacketSpec<T> {
    pub alpha: T,
    pub k: T,
    pub center: usize,
}

impl<T: Real> WavePacketSpec<T> {
    pub fn new(alpha: T, k: T, center: usize) -> Self {
        Self { alpha, k, center }
    }

    /// `Δ = 2√(2 ln 2)/α`: full width at half maximum of the amplitude
    /// envelope. The intensity `|Φ|²` is narrower by `√2`.
    pub fn fwhm(&self) -> T {
        T::lit(2.0) * (T::lit(2.0) * T::LN_2()).sqrt() / self.alpha
    }

    /// `Ω = √π/α`.
    pub fn norm_factor(&self) -> T {
        T::PI().sqrt() / self.alpha
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.alpha.is_finite() && self.alpha > T::zero()) {
            return Err(DynamicsError::InvalidPacket(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !self.k.is_finite() {
            return Err(DynamicsError::InvalidPacket(format!("k must be finite, got {}", self.k)));
        }
        Ok(())
    }
}

/// Unit-norm packet on sites `1..=dim`.
pub fn gaussian_packet<T: Real>(spec: &WavePacketSpec<T>, dim: usize) -> Result<Vec<Cx<T>>, DynamicsError> {
    spec.validate()?;
    let c = T::count(spec.center);
    let reach = T::lit(2.0) * spec.fwhm();
    let (low, high) = (c - reach, c + reach);
    if low < T::one() || high > T::count(dim) {
        return Err(DynamicsError::PacketOutsideLattice { low: low.to_f64_lossy(), high: high.to_f64_lossy(), dim });
    }
    let pref = spec.norm_factor().powf(T::lit(-0.5));
    let a2 = spec.alpha * spec.alpha;
    let mut psi: Vec<Cx<T>> = (1..=dim)
        .map(|j| {
            let x = T::count(j) - c;
            Cx::from_polar(pref * (-a2 * x * x / T::lit(2.0)).exp(), spec.k * T::count(j))
        })
        .collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b).sqrt();
    psi.iter_mut().for_each(|z| *z = *z / norm);
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn norm2(v: &[Cx<f64>]) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum()
    }

    #[test]
    fn reference_packet() {
        let spec = WavePacketSpec::new(0.02, FRAC_PI_2, 400);
        assert!((spec.fwhm() - 117.741_002_251_547_47).abs() < 1e-9);
        let p = gaussian_packet(&spec, 801).unwrap();
        assert!((norm2(&p) - 1.0).abs() < 1e-12);
        let d = spec.fwhm();
        let inside: f64 = p
            .iter()
            .enumerate()
            .filter(|(i, _)| ((i + 1) as f64 - 400.0).abs() <= d)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        assert!(1.0 - inside < 1e-3);
        // amplitude falls to one half at distance Δ/2 from the center
        let half = p[399 + 59].norm() / p[399].norm();
        assert!((half - 0.5).abs() < 0.01, "{half}");
    }

    #[test]
    fn unnormalised_prefactor_is_already_close() {
        let spec = WavePacketSpec::new(0.02, FRAC_PI_2, 400);
        let pref2 = 1.0 / spec.norm_factor();
        let raw: f64 = (1..=801).map(|j| pref2 * (-(0.02f64 * (j as f64 - 400.0)).powi(2)).exp()).sum();
        assert!((raw - 1.0).abs() < 1e-10);
    }

    #[test]
    fn narrow_packet() {
        let p = gaussian_packet(&WavePacketSpec::new(2.0, FRAC_PI_2, 10), 20).unwrap();
        assert!((norm2(&p) - 1.0).abs() < 1e-12);
        assert!(p[9].norm_sqr() > 0.95);
    }

    #[test]
    fn rejects_packet_leaving_lattice() {
        let spec = WavePacketSpec::new(0.02, FRAC_PI_2, 200);
        assert!(matches!(gaussian_packet(&spec, 801), Err(DynamicsError::PacketOutsideLattice { .. })));
        let spec = WavePacketSpec::new(0.02, FRAC_PI_2, 700);
        assert!(gaussian_packet(&spec, 801).is_err());
        assert!(gaussian_packet(&WavePacketSpec::new(-1.0, 0.0, 10), 20).is_err());
    }

    #[test]
    fn single_precision_packet() {
        let p = gaussian_packet(&WavePacketSpec::new(0.1f32, 1.0, 50), 100).unwrap();
        let n: f32 = p.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-5);
    }
}
