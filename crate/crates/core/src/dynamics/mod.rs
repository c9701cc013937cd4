//! Time evolution of Gaussian packets and the observables extracted from it.
//!
//! The packet, the integrator and the observables are generic over the real
//! type. The experiment drivers in [`runs`] work in `f64` because they lean on
//! the eigen-solver to project out localised states.

mod evolve;
mod observe;
mod packet;
pub mod runs;

pub use evolve::{evolve, BoundaryMonitor, BoundaryPolicy, EvolveOptions, SparseOperator, StepGuard};
pub use observe::{
    center_of_mass, first_crossing, front_position, median, platform_height, rate_events, RateEvent, RateEventKind,
};
pub use packet::{gaussian_packet, WavePacketSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, SiteLabel};
use crate::scalar::{Cx, Real};
use crate::spectral::SpectralError;

/// In-place map applied to the state between integration steps.
pub trait StateFilter<T>: Send + Sync {
    fn apply(&self, state: &mut [Cx<T>]);
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("packet window [{low:.1}, {high:.1}] (center +- 2 FWHM) leaves the lattice [1, {dim}]")]
    PacketOutsideLattice { low: f64, high: f64, dim: usize },
    #[error("invalid packet: {0}")]
    InvalidPacket(String),
    #[error("time step {dt} exceeds the limit {max} (0.02/kappa)")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("estimated local truncation error {estimate:.3e} per step exceeds 1e-8")]
    StepSize { estimate: f64 },
    #[error("probability {probability:.3e} reached the outer sites at t = {time}")]
    BoundaryContamination { time: f64, probability: f64 },
    #[error("no flat platform of length >= {required:.1} sites at t = {time} (window [{low:.1}, {high:.1}])")]
    PlatformNotFound { time: f64, low: f64, high: f64, required: f64 },
    #[error("state became non-finite at t = {0}")]
    NonFinite(f64),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Site-resolved probabilities at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<T> {
    pub time: T,
    pub probabilities: Vec<T>,
    #[serde(skip)]
    pub amplitudes: Option<Vec<Cx<T>>>,
}

/// Summed probability of a named group of sites at every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatchSeries<T> {
    pub name: String,
    pub sites: Vec<usize>,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event<T> {
    pub label: String,
    pub time: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionTrace<T> {
    pub times: Vec<T>,
    /// `Σ_j P(j,t)` at every sample.
    pub total_probability: Vec<T>,
    pub snapshots: Vec<Snapshot<T>>,
    pub labels: Vec<SiteLabel>,
    pub watch: Vec<WatchSeries<T>>,
    pub events: Vec<Event<T>>,
    pub platform_height: Option<T>,
    pub boundary_contamination: bool,
    pub final_state: Vec<Cx<T>>,
}

impl<T: Real> EvolutionTrace<T> {
    pub fn snapshot_at(&self, time: T) -> Option<&Snapshot<T>> {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.time - time).abs().partial_cmp(&(b.time - time).abs()).unwrap())
            .filter(|s| (s.time - time).abs() < T::lit(1e-6))
    }

    /// Total probability at the sample nearest `time`.
    pub fn probability_at(&self, time: T) -> T {
        let i = self.sample_index(time);
        self.total_probability[i]
    }

    pub fn sample_index(&self, time: T) -> usize {
        let mut best = 0;
        for (i, &t) in self.times.iter().enumerate() {
            if (t - time).abs() < (self.times[best] - time).abs() {
                best = i;
            }
        }
        best
    }

    pub fn watch_series(&self, name: &str) -> Option<&WatchSeries<T>> {
        self.watch.iter().find(|w| w.name == name)
    }

    pub fn push_event(&mut self, label: impl Into<String>, time: T) {
        self.events.push(Event { label: label.into(), time });
    }
}
