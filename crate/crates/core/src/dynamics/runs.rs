//! Experiment drivers: emission and absorption on the folded chain, the
//! stepped trace of the gain/loss chain, deviation studies and the
//! eigenbasis cross-check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evolve, first_crossing, front_position, gaussian_packet, median, platform_height, rate_events, BoundaryMonitor,
    DynamicsError, EvolutionTrace, EvolveOptions, RateEventKind, WavePacketSpec,
};
use crate::harness::fit::{fit_scaling, FitModel, FitResult};
use crate::model::{build_folded_chain, build_pt_chain, EndCoupling, HamiltonianMatrix, LatticeSpec, Topology};
use crate::scalar::{erf, Cx, Real};
use crate::scattering::{folded_reflection_at, Branch};
use crate::spectral::{biorth_basis_from, full_spectrum, ModeProjector, C64};

/// Quiet threshold for [`rate_events`], relative to the peak rate.
pub const QUIET_RATE: f64 = 0.01;
/// Head arrival threshold relative to the initial peak site probability:
/// the Gaussian intensity one FWHM away from its center, `2^-8`.
pub const HEAD_FRACTION: f64 = 1.0 / 256.0;
/// Band around 1 inside which the growth ratio counts as quadratic.
pub const GROWTH_TOL: f64 = 0.005;

/// `h = 2 (γ_c/κ)² √π/α`.
pub fn expected_platform_height<T: Real>(gamma_c: T, kappa: T, alpha: T) -> T {
    let r = gamma_c / kappa;
    T::lit(2.0) * r * r * T::PI().sqrt() / alpha
}

/// Parameters of the erf-shaped emission profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErfParams<T> {
    pub height: T,
    pub fwhm: T,
    /// Front position at `t = 0`: `2(N+1) - N_c` on the folded chain,
    /// `2(N+2) - N_c` on the gain/loss chain.
    pub front_origin: T,
    pub kappa: T,
}

impl<T: Real> ErfParams<T> {
    pub fn folded(spec: &LatticeSpec<T>, packet: &WavePacketSpec<T>) -> Self {
        Self::with_sites(spec, packet, spec.n_sites + 1)
    }

    pub fn pt(spec: &LatticeSpec<T>, packet: &WavePacketSpec<T>) -> Self {
        Self::with_sites(spec, packet, spec.n_sites + 2)
    }

    fn with_sites(spec: &LatticeSpec<T>, packet: &WavePacketSpec<T>, sites: usize) -> Self {
        let gamma_c = spec.critical_gamma(1);
        Self {
            height: expected_platform_height(gamma_c, spec.kappa, packet.alpha),
            fwhm: packet.fwhm(),
            front_origin: T::lit(2.0) * T::count(sites) - T::count(packet.center),
            kappa: spec.kappa,
        }
    }

    pub fn front(&self, t: T) -> T {
        self.front_origin - T::lit(2.0) * self.kappa * t
    }
}

/// `-(√h/2) {1 + erf[2^{3/4}(j - N_t)/Δ]} e^{-iπj/2}`.
pub fn erf_profile<T: Real>(j: i64, t: T, params: &ErfParams<T>) -> Cx<T> {
    let x = T::lit(2f64.powf(0.75)) * (T::lit(j as f64) - params.front(t)) / params.fwhm;
    let amp = -params.height.sqrt() / T::lit(2.0) * (T::one() + erf(x));
    let phase = crate::scattering::i_pow::<T>(-j);
    phase * amp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub dt: f64,
    pub sample_interval: f64,
    pub t_final: Option<f64>,
    pub measure_time: Option<f64>,
    pub filter_bound_states: bool,
    pub monitor_boundary: bool,
    pub snapshot_times: Vec<f64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            dt: 0.01,
            sample_interval: 1.0,
            t_final: None,
            measure_time: None,
            filter_bound_states: false,
            monitor_boundary: true,
            snapshot_times: vec![],
        }
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), DynamicsError> {
    if cond {
        Ok(())
    } else {
        Err(DynamicsError::Precondition(msg()))
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

fn require_half_pi(packet: &WavePacketSpec<f64>) -> Result<(), DynamicsError> {
    require(close(packet.k, std::f64::consts::FRAC_PI_2), || format!("packet momentum must be pi/2, got {}", packet.k))
}

/// `t` moved to the nearest integration step, where snapshots are taken.
fn on_grid(t: f64, dt: f64) -> f64 {
    (t / dt).round() * dt
}

fn projector_for(h: &HamiltonianMatrix<f64>, enabled: bool) -> Result<Option<ModeProjector>, DynamicsError> {
    if !enabled {
        return Ok(None);
    }
    let p = ModeProjector::localised(&full_spectrum(h)?);
    Ok((!p.is_empty()).then_some(p))
}

fn run(
    h: &HamiltonianMatrix<f64>,
    psi: &[C64],
    t_final: f64,
    settings: &RunSettings,
    extra_snapshots: &[f64],
    watch: Vec<(String, Vec<usize>)>,
    monitor: Option<BoundaryMonitor<f64>>,
) -> Result<EvolutionTrace<f64>, DynamicsError> {
    let projector = projector_for(h, settings.filter_bound_states)?;
    let mut snaps: Vec<f64> = settings.snapshot_times.iter().chain(extra_snapshots).copied().collect();
    snaps.sort_by(f64::total_cmp);
    snaps.dedup();
    let mut opts = EvolveOptions::new(settings.dt).sample_every(settings.sample_interval).snapshots(snaps);
    opts.watch = watch;
    if let Some(m) = monitor {
        opts = opts.monitor(m);
    }
    if let Some(p) = &projector {
        opts = opts.filter(p, 1.0 / h.energy_scale());
    }
    evolve(h, psi, t_final, &opts)
}

fn linear_rate(trace: &EvolutionTrace<f64>, from: f64) -> Option<FitResult> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        trace.times.iter().zip(&trace.total_probability).filter(|(t, _)| **t >= from).map(|(t, p)| (*t, *p)).unzip();
    fit_scaling(&xs, &ys, FitModel::Linear).ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionReport {
    pub trace: EvolutionTrace<f64>,
    pub head_arrival: Option<f64>,
    /// `(N - N_c - Δ)/(2κ)`.
    pub expected_head_arrival: f64,
    pub measure_time: f64,
    pub platform_height: f64,
    pub expected_height: f64,
    pub platform_window: (f64, f64),
    pub front: Option<f64>,
    pub expected_front: f64,
    /// Slope of `P(t)` after the platform has formed.
    pub growth_rate: Option<f64>,
    /// `max_j |P(j) - |Φ_erf(j)|²| / h` over sites `1..=N+1-Δ/2`.
    pub erf_max_deviation: f64,
}

/// Packet hitting the gain resonator of the folded chain at the singularity.
///
/// The platform is measured at `measure_time`, by default the time at which
/// the reflected front sits midway between `1 + 2Δ` and `N+1 - 2.5Δ`.
pub fn emission_run(
    spec: &LatticeSpec<f64>,
    packet: &WavePacketSpec<f64>,
    settings: &RunSettings,
) -> Result<EmissionReport, DynamicsError> {
    require(spec.topology == Topology::FoldedSemiInfinite, || format!("emission needs the folded chain, got {}", spec.topology))?;
    let gamma_c = spec.critical_gamma(1);
    require(close(spec.gamma, gamma_c), || format!("emission needs gamma = +gamma_c = {gamma_c}, got {}", spec.gamma))?;
    require_half_pi(packet)?;
    let h = build_folded_chain(spec, EndCoupling::ExplicitG)?;
    let dim = h.dim();
    let psi = gaussian_packet(packet, dim)?;
    let (n, nc, d, kap) = (spec.n_sites as f64, packet.center as f64, packet.fwhm(), spec.kappa);
    let erf = ErfParams::folded(spec, packet);
    let expected_head_arrival = (n - nc - d) / (2.0 * kap);
    let formed = expected_head_arrival + d / kap;

    let measure_time = match settings.measure_time {
        Some(t) => t,
        None => {
            let (lo, hi) = (1.0 + 2.0 * d, n + 1.0 - 2.5 * d);
            if lo > hi {
                return Err(DynamicsError::PlatformNotFound { time: formed, low: lo, high: hi, required: d });
            }
            let t = (erf.front_origin - 0.5 * (lo + hi)) / (2.0 * kap);
            on_grid(t.max(formed), settings.dt)
        }
    };
    let t_final = settings.t_final.unwrap_or(measure_time).max(measure_time);
    let end: Vec<usize> = (dim - 5..dim).collect();
    let monitor = settings.monitor_boundary.then(|| BoundaryMonitor::left_end(dim));
    let mut trace = run(&h, &psi, t_final, settings, &[measure_time], vec![("end".into(), end)], monitor)?;

    let peak0 = psi.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    let head_arrival = first_crossing(&trace.times, &trace.watch[0].values, HEAD_FRACTION * peak0);
    let expected_front = erf.front(measure_time);
    let window = (expected_front + d, n + 1.0 - 0.5 * d);
    if window.1 - window.0 < d {
        return Err(DynamicsError::PlatformNotFound { time: measure_time, low: window.0, high: window.1, required: d });
    }
    let snap = trace.snapshot_at(measure_time).expect("measurement snapshot recorded");
    let probs = snap.probabilities.clone();
    let h_meas = platform_height(&probs, window.0, window.1).ok_or(DynamicsError::PlatformNotFound {
        time: measure_time,
        low: window.0,
        high: window.1,
        required: d,
    })?;
    let front = front_position(&probs, h_meas / 4.0);
    let last = (n + 1.0 - 0.5 * d).floor() as usize;
    let erf_max_deviation = (1..=last)
        .map(|j| (probs[j - 1] - erf_profile(j as i64, measure_time, &erf).norm_sqr()).abs())
        .fold(0.0, f64::max)
        / erf.height;
    let growth_rate = linear_rate(&trace, formed).map(|f| f.coefficients[1]);

    trace.platform_height = Some(h_meas);
    if let Some(t0) = head_arrival {
        trace.push_event("t0", t0);
    }
    Ok(EmissionReport {
        trace,
        head_arrival,
        expected_head_arrival,
        measure_time,
        platform_height: h_meas,
        expected_height: erf.height,
        platform_window: window,
        front,
        expected_front,
        growth_rate,
        erf_max_deviation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionReport {
    pub trace: EvolutionTrace<f64>,
    /// `(N - N_c)/(2κ)`: packet center reaches the absorber.
    pub arrival_time: f64,
    pub probability_at_arrival: f64,
    /// Probability at arrival outside the junction site and the absorber.
    pub array_probability_at_arrival: f64,
    /// `arrival + Δ/(2κ) + 50/κ`.
    pub residual_time: f64,
    pub residual: f64,
    /// `∫ |r(k)|² w(k) dk` over the packet's momentum distribution.
    pub oracle_residual: f64,
    /// `max_j |P(j) - P_gauss(j)| / max P_gauss` at half the arrival time.
    pub gaussian_profile_deviation: f64,
}

/// `∫ |r(k)|² w(k) dk` with `w` the normalised momentum distribution of the
/// packet, `e^{-(k-k0)²/α²}/(α√π)`, and `r` the folded-chain reflection.
pub fn momentum_space_residual(spec: &LatticeSpec<f64>, packet: &WavePacketSpec<f64>) -> f64 {
    let (k0, a) = (packet.k, packet.alpha);
    let (lo, hi) = ((k0 - 10.0 * a).max(1e-9), (k0 + 10.0 * a).min(std::f64::consts::PI - 1e-9));
    let m = 4000;
    let h = (hi - lo) / m as f64;
    let f = |k: f64| {
        let w = (-((k - k0) / a).powi(2)).exp() / (a * std::f64::consts::PI.sqrt());
        let r2 = folded_reflection_at(k, spec).ok().flatten().map_or(f64::INFINITY, |r| r.norm_sqr());
        r2 * w
    };
    // composite Simpson
    let mut s = f(lo) + f(hi);
    for i in 1..m {
        let k = lo + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(k);
    }
    s * h / 3.0
}

/// Packet absorbed by the lossy resonator of the folded chain. Any loss
/// rate is accepted so that deviations from `-γ_c` can be studied.
pub fn absorption_run(
    spec: &LatticeSpec<f64>,
    packet: &WavePacketSpec<f64>,
    settings: &RunSettings,
) -> Result<AbsorptionReport, DynamicsError> {
    require(spec.topology == Topology::FoldedSemiInfinite, || format!("absorption needs the folded chain, got {}", spec.topology))?;
    require(spec.gamma < 0.0, || format!("absorption needs a loss rate gamma < 0, got {}", spec.gamma))?;
    require_half_pi(packet)?;
    let h = build_folded_chain(spec, EndCoupling::ExplicitG)?;
    let dim = h.dim();
    let psi = gaussian_packet(packet, dim)?;
    let (n, nc, d, kap) = (spec.n_sites as f64, packet.center as f64, packet.fwhm(), spec.kappa);
    let arrival_time = on_grid((n - nc) / (2.0 * kap), settings.dt);
    let residual_time =
        on_grid(settings.measure_time.unwrap_or(arrival_time + d / (2.0 * kap) + 50.0 / kap), settings.dt);
    let check_time = on_grid(0.5 * arrival_time, settings.dt);
    let t_final = settings.t_final.unwrap_or(residual_time).max(residual_time);
    let monitor = settings.monitor_boundary.then(|| BoundaryMonitor::left_end(dim));
    let watch = vec![("end".to_string(), vec![dim - 2, dim - 1])];
    let trace = run(&h, &psi, t_final, settings, &[check_time, arrival_time, residual_time], watch, monitor)?;

    let at = |t: f64| trace.snapshot_at(t).expect("snapshot recorded").probabilities.as_slice();
    let arrival = at(arrival_time);
    let probability_at_arrival: f64 = arrival.iter().sum();
    let array_probability_at_arrival: f64 = arrival[..dim - 2].iter().sum();
    let residual: f64 = at(residual_time).iter().sum();

    let snap = trace.snapshot_at(check_time).expect("profile snapshot recorded");
    let center = nc + 2.0 * kap * check_time;
    let omega = packet.norm_factor();
    let gauss: Vec<f64> =
        (1..=dim).map(|j| (-(packet.alpha * (j as f64 - center)).powi(2)).exp() / omega).collect();
    let gmax = gauss.iter().cloned().fold(0.0, f64::max);
    let gaussian_profile_deviation =
        snap.probabilities.iter().zip(&gauss).map(|(p, g)| (p - g).abs()).fold(0.0, f64::max) / gmax;

    Ok(AbsorptionReport {
        trace,
        arrival_time,
        probability_at_arrival,
        array_probability_at_arrival,
        residual_time,
        residual,
        oracle_residual: momentum_space_residual(spec, packet),
        gaussian_profile_deviation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtReport {
    pub trace: EvolutionTrace<f64>,
    /// Detected onsets and ends of growth, in time order.
    pub events: Vec<f64>,
    /// `t_n = (N - N_c)/(2κ) + nN/(2κ)`.
    pub expected_events: Vec<f64>,
    /// `(max - min)/mean` of `P` on `[t_1 + Δ/κ, t_2 - Δ/κ]`.
    pub plateau_flatness: Option<f64>,
    pub plateau_window: (f64, f64),
    /// Quadratic fit of `P` against `κt` at `t = mN/κ`.
    pub quadratic_fit: Option<FitResult>,
    pub quadratic_coefficient: Option<f64>,
    /// `h/N`.
    pub expected_coefficient: f64,
}

/// Packet launched towards the gain end of the gain/loss chain at the
/// exceptional point. Runs to `4N/κ` unless told otherwise.
pub fn pt_run(
    spec: &LatticeSpec<f64>,
    packet: &WavePacketSpec<f64>,
    settings: &RunSettings,
) -> Result<PtReport, DynamicsError> {
    require(spec.topology == Topology::PtFinite, || format!("needs the gain/loss chain, got {}", spec.topology))?;
    require(spec.n_sites.is_multiple_of(2), || format!("needs even N, got {}", spec.n_sites))?;
    let gamma_c = spec.critical_gamma(1);
    require(close(spec.gamma, gamma_c), || format!("needs gamma = gamma_c = {gamma_c}, got {}", spec.gamma))?;
    require_half_pi(packet)?;
    let h = build_pt_chain(spec)?;
    let psi = gaussian_packet(packet, h.dim())?;
    let (n, nc, d, kap) = (spec.n_sites as f64, packet.center as f64, packet.fwhm(), spec.kappa);
    let period = n / kap;
    let t_final = settings.t_final.unwrap_or(4.0 * period);
    let mut trace = run(&h, &psi, t_final, settings, &[], vec![], None)?;

    let events: Vec<f64> = rate_events(&trace.times, &trace.total_probability, QUIET_RATE)
        .into_iter()
        .map(|e| e.time)
        .collect();
    for (i, &t) in events.iter().enumerate() {
        trace.push_event(format!("t{i}"), t);
    }
    let t0 = (n - nc) / (2.0 * kap);
    let expected_events: Vec<f64> =
        (0..).map(|i| t0 + i as f64 * n / (2.0 * kap)).take_while(|&t| t <= t_final).collect();

    let plateau_window = match (events.get(1), events.get(2)) {
        (Some(&a), Some(&b)) => (a + d / kap, b - d / kap),
        _ => (expected_events.get(1).copied().unwrap_or(0.0) + d / kap, expected_events.get(2).copied().unwrap_or(0.0) - d / kap),
    };
    let plateau: Vec<f64> = trace
        .times
        .iter()
        .zip(&trace.total_probability)
        .filter(|(t, _)| **t >= plateau_window.0 && **t <= plateau_window.1)
        .map(|(_, p)| *p)
        .collect();
    let plateau_flatness = (!plateau.is_empty()).then(|| {
        let (lo, hi) = plateau.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
        (hi - lo) / (plateau.iter().sum::<f64>() / plateau.len() as f64)
    });

    let (xs, ys): (Vec<f64>, Vec<f64>) = (1..)
        .map(|m| m as f64 * period)
        .take_while(|&t| t <= t_final + 1e-9)
        .map(|t| (kap * t, trace.probability_at(t)))
        .unzip();
    let quadratic_fit = fit_scaling(&xs, &ys, FitModel::Quadratic).ok();
    let quadratic_coefficient = quadratic_fit.as_ref().map(|f| f.coefficients[2]);
    let expected_coefficient = expected_platform_height(gamma_c, kap, packet.alpha) / n;
    Ok(PtReport {
        trace,
        events,
        expected_events,
        plateau_flatness,
        plateau_window,
        quadratic_fit,
        quadratic_coefficient,
        expected_coefficient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthClass {
    Oscillatory,
    Quadratic,
    Exponential,
}

/// Classifies long-time growth from `s_m = √P(m·period)`: the median over
/// `m >= 2` of `(s_{m+1} + s_{m-1})/(2 s_m)` is `cos` of a phase for
/// oscillation, `cosh` of a rate for exponential growth and `1` for linear
/// `s_m` (quadratic `P`).
pub fn classify_growth(trace: &EvolutionTrace<f64>, period: f64) -> Option<(GrowthClass, f64)> {
    let t_end = *trace.times.last()?;
    let s: Vec<f64> = (0..)
        .map(|m| m as f64 * period)
        .take_while(|&t| t <= t_end + 1e-9)
        .map(|t| trace.probability_at(t).sqrt())
        .collect();
    if s.len() < 4 {
        return None;
    }
    let ratios: Vec<f64> = (2..s.len() - 1).map(|m| (s[m + 1] + s[m - 1]) / (2.0 * s[m])).collect();
    let lambda = median(&ratios)?;
    let class = if lambda < 1.0 - GROWTH_TOL {
        GrowthClass::Oscillatory
    } else if lambda > 1.0 + GROWTH_TOL {
        GrowthClass::Exponential
    } else {
        GrowthClass::Quadratic
    };
    Some((class, lambda))
}

/// `γ = γ_c (1 + δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationSpec {
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationRow {
    pub delta: f64,
    pub gamma: f64,
    /// Total probability at the comparison time.
    pub probability: f64,
    pub reference_probability: f64,
    /// `|1 - P_γ/P_γc|`.
    pub difference: f64,
    /// Loss branch: probability left after absorption, and its
    /// momentum-space estimate.
    pub residual: Option<f64>,
    pub oracle_residual: Option<f64>,
    /// Gain/loss chain: growth class and the ratio it was read from.
    pub growth: Option<GrowthClass>,
    pub growth_ratio: Option<f64>,
    /// Gain/loss chain: square of the eigenvalue pair nearest zero; positive
    /// for a real pair, negative for an imaginary one.
    pub near_zero_energy_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationTable {
    pub topology: Topology,
    pub branch: Branch,
    pub compare_time: f64,
    pub rows: Vec<DeviationRow>,
}

struct Point {
    gamma: f64,
    probability: f64,
    residual: Option<f64>,
    oracle: Option<f64>,
    growth: Option<(GrowthClass, f64)>,
    e2: Option<f64>,
}

/// Runs `γ = σγ_c(1 + δ)` for every `δ` plus the reference `δ = 0`, in
/// parallel, and compares total probabilities at a common time.
///
/// Folded chain, gain: compared at `t* = 900/κ` by default. Folded chain,
/// loss: compared at the residual time of [`absorption_run`]. Gain/loss
/// chain: runs to `10N/κ` and classifies the growth. The reflecting left end
/// of the finite chain is part of the model here, so boundary monitoring is
/// off.
pub fn deviation_study(
    base: &LatticeSpec<f64>,
    branch: Branch,
    packet: &WavePacketSpec<f64>,
    deltas: &[DeviationSpec],
    settings: &RunSettings,
) -> Result<DeviationTable, DynamicsError> {
    require(deltas.iter().all(|d| d.delta.is_finite()), || "deviation values must be finite".into())?;
    require_half_pi(packet)?;
    let kap = base.kappa;
    let n = base.n_sites as f64;
    let compare_time = match base.topology {
        Topology::FoldedSemiInfinite => match branch {
            Branch::Gain => settings.measure_time.unwrap_or(900.0 / kap),
            Branch::Loss => {
                settings.measure_time.unwrap_or((n - packet.center as f64) / (2.0 * kap) + packet.fwhm() / (2.0 * kap) + 50.0 / kap)
            }
        },
        Topology::PtFinite => settings.t_final.unwrap_or(10.0 * n / kap),
        t => return Err(DynamicsError::Precondition(format!("deviation study needs the folded or gain/loss chain, got {t}"))),
    };
    let mut all: Vec<f64> = vec![0.0];
    all.extend(deltas.iter().map(|d| d.delta).filter(|&d| d != 0.0));
    let mut local = settings.clone();
    local.monitor_boundary = false;
    local.measure_time = Some(compare_time);
    local.t_final = Some(compare_time);

    let points: Vec<Result<Point, DynamicsError>> = all
        .par_iter()
        .map(|&delta| {
            let spec = base.at_deviation(branch.sigma(), delta);
            match spec.topology {
                Topology::PtFinite => {
                    let h = build_pt_chain(&spec)?;
                    let psi = gaussian_packet(packet, h.dim())?;
                    let report = full_spectrum(&h)?;
                    let e2 = report
                        .pairs
                        .iter()
                        .map(|p| p.energy)
                        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
                        .map(|e| (e * e).re);
                    let projector = local.filter_bound_states.then(|| ModeProjector::localised(&report));
                    let mut opts = EvolveOptions::new(local.dt).sample_every(local.sample_interval);
                    if let Some(p) = projector.as_ref().filter(|p| !p.is_empty()) {
                        opts = opts.filter(p, 1.0 / kap);
                    }
                    let trace = evolve(&h, &psi, compare_time, &opts)?;
                    Ok(Point {
                        gamma: spec.gamma,
                        probability: *trace.total_probability.last().unwrap(),
                        residual: None,
                        oracle: None,
                        growth: classify_growth(&trace, n / kap),
                        e2,
                    })
                }
                _ => {
                    let h = build_folded_chain(&spec, EndCoupling::ExplicitG)?;
                    let psi = gaussian_packet(packet, h.dim())?;
                    let trace = run(&h, &psi, compare_time, &local, &[], vec![], None)?;
                    let p = trace.probability_at(compare_time);
                    let loss = branch == Branch::Loss;
                    Ok(Point {
                        gamma: spec.gamma,
                        probability: p,
                        residual: loss.then_some(p),
                        oracle: loss.then(|| momentum_space_residual(&spec, packet)),
                        growth: None,
                        e2: None,
                    })
                }
            }
        })
        .collect();
    let points: Vec<Point> = points.into_iter().collect::<Result<_, _>>()?;
    let reference = points[0].probability;
    let rows = all
        .iter()
        .zip(&points)
        .map(|(&delta, p)| DeviationRow {
            delta,
            gamma: p.gamma,
            probability: p.probability,
            reference_probability: reference,
            difference: (1.0 - p.probability / reference).abs(),
            residual: p.residual,
            oracle_residual: p.oracle,
            growth: p.growth.map(|g| g.0),
            growth_ratio: p.growth.map(|g| g.1),
            near_zero_energy_squared: p.e2,
        })
        .collect();
    Ok(DeviationTable { topology: base.topology, branch, compare_time, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiorthCheck {
    /// `max_l |ψ_direct(l) - ψ_basis(l)|` at `t_final`.
    pub full_basis_deviation: f64,
    /// Same with localised and complex-energy modes left out.
    pub bound_dropped_deviation: f64,
    /// `max_l |ψ_direct(l)|`.
    pub amplitude_scale: f64,
    pub bound_modes: usize,
}

/// Propagates a packet on the gain/loss chain by direct integration and by
/// expansion in the biorthogonal eigenbasis and compares the final states.
pub fn biorth_evolution_check(
    spec: &LatticeSpec<f64>,
    packet: &WavePacketSpec<f64>,
    t_final: f64,
    dt: f64,
) -> Result<BiorthCheck, DynamicsError> {
    require(spec.topology == Topology::PtFinite, || format!("needs the gain/loss chain, got {}", spec.topology))?;
    let h = build_pt_chain(spec)?;
    let report = full_spectrum(&h)?;
    let basis = biorth_basis_from(&report)?;
    let psi = gaussian_packet(packet, h.dim())?;
    let trace = evolve(&h, &psi, t_final, &EvolveOptions::new(dt).sample_every(t_final))?;
    let direct = &trace.final_state;
    let full = basis.propagate(&psi, t_final);
    let dropped = basis.propagate_with(&psi, t_final, |k| !basis.bound[k]);
    let dev = |v: &[C64]| direct.iter().zip(v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(BiorthCheck {
        full_basis_deviation: dev(&full),
        bound_dropped_deviation: dev(&dropped),
        amplitude_scale: direct.iter().map(|z| z.norm()).fold(0.0, f64::max),
        bound_modes: basis.bound.iter().filter(|b| **b).count(),
    })
}

/// Rise/fall labels of the detected events, for output files.
pub fn event_kinds(trace: &EvolutionTrace<f64>) -> Vec<RateEventKind> {
    rate_events(&trace.times, &trace.total_probability, QUIET_RATE).into_iter().map(|e| e.kind).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_profile_limits() {
        let spec = LatticeSpec::new(1.0, 1.0, 0.5, 800, Topology::FoldedSemiInfinite);
        let packet = WavePacketSpec::new(0.02, std::f64::consts::FRAC_PI_2, 400);
        let p = ErfParams::folded(&spec, &packet);
        assert!((p.height - 44.311_346_272_637_9).abs() < 1e-9);
        // N_t = 2(N+1) - N_c - 2κt
        assert_eq!(p.front(100.0), 1002.0);
        let at_front = erf_profile(1002, 100.0, &p).norm_sqr();
        assert!((at_front - p.height / 4.0).abs() < 1e-12);
        let far = erf_profile(1002 + 2000, 100.0, &p).norm_sqr();
        assert!((far - p.height).abs() < 1e-9);
        assert_eq!(ErfParams::pt(&spec, &packet).front(0.0), 2.0 * 802.0 - 400.0);
    }

    #[test]
    fn platform_height_matches_fwhm_form() {
        // sqrt(pi / (2 ln 2)) (γc/κ)² Δ
        let packet = WavePacketSpec::new(0.02, 0.0, 400);
        let alt = (std::f64::consts::PI / (2.0 * std::f64::consts::LN_2)).sqrt() * 0.25 * packet.fwhm();
        assert!((expected_platform_height(0.5, 1.0, 0.02) - alt).abs() < 1e-10);
    }

    #[test]
    fn growth_classes_from_synthetic_traces() {
        let mk = |f: &dyn Fn(f64) -> f64| {
            let times: Vec<f64> = (0..=100).map(|i| i as f64).collect();
            let total = times.iter().map(|&t| f(t)).collect();
            EvolutionTrace {
                times,
                total_probability: total,
                snapshots: vec![],
                labels: vec![],
                watch: vec![],
                events: vec![],
                platform_height: None,
                boundary_contamination: false,
                final_state: vec![],
            }
        };
        let quad = mk(&|t| (1.0 + 0.3 * t).powi(2));
        assert_eq!(classify_growth(&quad, 10.0).unwrap().0, GrowthClass::Quadratic);
        let exp = mk(&|t| (0.02 * t).cosh().powi(2));
        assert_eq!(classify_growth(&exp, 10.0).unwrap().0, GrowthClass::Exponential);
        let osc = mk(&|t| (2.0 + (0.1 * t).cos()).powi(2) * 0.0 + (10.0 * (0.1 * t + 0.3).sin()).powi(2) + 1e-9);
        assert_eq!(classify_growth(&osc, 10.0).unwrap().0, GrowthClass::Oscillatory);
    }
}
