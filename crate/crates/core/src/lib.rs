//! Tight-binding lattices with gain and loss: Hamiltonian construction,
//! scattering amplitudes, spectra and exceptional points, and wave-packet
//! dynamics, plus the experiment harness that drives them.
//!
//! The model, scattering and integrator layers are generic over the real
//! type; the `f64` aliases below cover the common case.

pub mod dynamics;
pub mod harness;
pub mod model;
pub mod scalar;
pub mod scattering;
pub mod spectral;

pub type Lattice = model::LatticeSpec<f64>;
pub type Hamiltonian = model::HamiltonianMatrix<f64>;
pub type Packet = dynamics::WavePacketSpec<f64>;
pub type Trace = dynamics::EvolutionTrace<f64>;
pub type Complex64 = scalar::Cx<f64>;
