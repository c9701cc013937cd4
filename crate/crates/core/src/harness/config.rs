use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::runs::RunSettings;
use crate::dynamics::WavePacketSpec;
use crate::model::{LatticeSpec, Topology};
use crate::scattering::Branch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("unknown preset `{0}` (available: {1})")]
    UnknownPreset(String, String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn field(name: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: name.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Scatter,
    Emission,
    Absorption,
    PtTrace,
    Deviation,
    Spectrum,
    ScalingSweep,
}

impl Experiment {
    pub fn needs_packet(self) -> bool {
        !matches!(self, Experiment::Scatter | Experiment::Spectrum)
    }

    /// Experiments that integrate the equations of motion.
    pub fn is_evolution(self) -> bool {
        matches!(self, Experiment::Emission | Experiment::Absorption | Experiment::PtTrace | Experiment::Deviation)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Experiment::Scatter => "scatter",
            Experiment::Emission => "emission",
            Experiment::Absorption => "absorption",
            Experiment::PtTrace => "pt-trace",
            Experiment::Deviation => "deviation",
            Experiment::Spectrum => "spectrum",
            Experiment::ScalingSweep => "scaling-sweep",
        };
        f.write_str(s)
    }
}

/// A lattice or packet field that a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Kappa,
    G,
    Gamma,
    GammaP,
    NSites,
    Alpha,
    K,
    Center,
}

impl SweepParameter {
    fn is_integer(self) -> bool {
        matches!(self, SweepParameter::NSites | SweepParameter::Center)
    }

    fn on_packet(self) -> bool {
        matches!(self, SweepParameter::Alpha | SweepParameter::K | SweepParameter::Center)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepParameter::Kappa => "kappa",
            SweepParameter::G => "g",
            SweepParameter::Gamma => "gamma",
            SweepParameter::GammaP => "gamma_p",
            SweepParameter::NSites => "n_sites",
            SweepParameter::Alpha => "alpha",
            SweepParameter::K => "k",
            SweepParameter::Center => "center",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterSettings {
    /// Interior points of the `k` grid on `(0, π)`.
    pub k_points: usize,
    /// When set, tabulate the folded-chain reflection at `k = π/2` against
    /// these rates instead of scanning `k`.
    pub gamma_values: Option<Vec<f64>>,
}

impl Default for ScatterSettings {
    fn default() -> Self {
        Self { k_points: 255, gamma_values: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationSettings {
    pub branch: Branch,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSettings {
    /// Solve the quantisation condition of the gain/loss chain as well.
    pub critical_roots: bool,
    /// Run the direct-versus-eigenbasis propagation check up to this time
    /// (needs a packet).
    pub biorth_t_final: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub lattice: LatticeSpec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet: Option<WavePacketSpec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Reserved; every computation is deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter: Option<ScatterSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSettings>,
}

/// The part of a manifest needed to rerun it.
#[derive(Deserialize)]
struct ManifestConfig {
    config: RunConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    /// Reads a TOML config, or the `config` member of a `manifest.json`.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: ManifestConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
            m.config.validate()?;
            Ok(m.config)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.lattice.validate().map_err(|e| field("lattice", e.to_string()))?;
        if let Some(p) = &self.packet {
            p.validate().map_err(|e| field("packet", e.to_string()))?;
        } else if self.experiment.needs_packet() {
            return Err(field("packet", format!("required for experiment {}", self.experiment)));
        }
        let topo = self.lattice.topology;
        let want = match self.experiment {
            Experiment::Emission | Experiment::Absorption | Experiment::ScalingSweep => {
                Some(Topology::FoldedSemiInfinite)
            }
            Experiment::PtTrace => Some(Topology::PtFinite),
            _ => None,
        };
        if let Some(w) = want.filter(|w| *w != topo) {
            return Err(field("lattice.topology", format!("experiment {} needs {w}, got {topo}", self.experiment)));
        }
        if self.experiment == Experiment::Deviation {
            let d = self.deviation.as_ref().ok_or_else(|| field("deviation", "required for experiment deviation"))?;
            if d.deltas.iter().any(|x| !x.is_finite()) {
                return Err(field("deviation.deltas", "values must be finite"));
            }
            if topo == Topology::SideCoupledChain {
                return Err(field("lattice.topology", "deviation study needs the folded or gain/loss chain"));
            }
        }
        if self.experiment == Experiment::ScalingSweep && self.sweep.is_none() {
            return Err(field("sweep", "required for experiment scaling-sweep"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(field("sweep.values", "empty"));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(field("sweep.values", "values must be finite"));
            }
            if s.parameter.is_integer() && s.values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
                return Err(field("sweep.values", format!("{} takes non-negative integers", s.parameter)));
            }
            if s.parameter.on_packet() && self.packet.is_none() {
                return Err(field("sweep.parameter", format!("{} needs a packet", s.parameter)));
            }
            for &v in &s.values {
                let point = self.at_sweep_point(v);
                point.lattice.validate().map_err(|e| field("sweep.values", format!("{v}: {e}")))?;
                if let Some(p) = &point.packet {
                    p.validate().map_err(|e| field("sweep.values", format!("{v}: {e}")))?;
                }
            }
        }
        let r = &self.run;
        if !(r.dt > 0.0 && r.dt.is_finite()) {
            return Err(field("run.dt", "must be positive"));
        }
        if !(r.sample_interval > 0.0 && r.sample_interval.is_finite()) {
            return Err(field("run.sample_interval", "must be positive"));
        }
        if let Some(sc) = &self.scatter {
            if sc.k_points == 0 {
                return Err(field("scatter.k_points", "must be positive"));
            }
            if sc.gamma_values.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(field("scatter.gamma_values", "values must be finite"));
            }
        }
        Ok(())
    }

    /// This config with the sweep parameter set to `value` and the sweep
    /// removed. Scaling sweeps keep the lattice at the gain singularity.
    pub fn at_sweep_point(&self, value: f64) -> RunConfig {
        let mut c = self.clone();
        c.sweep = None;
        let Some(s) = &self.sweep else { return c };
        match s.parameter {
            SweepParameter::Kappa => c.lattice.kappa = value,
            SweepParameter::G => c.lattice.g = value,
            SweepParameter::Gamma => c.lattice.gamma = value,
            SweepParameter::GammaP => c.lattice.gamma_p = value,
            SweepParameter::NSites => c.lattice.n_sites = value as usize,
            SweepParameter::Alpha => {
                if let Some(p) = c.packet.as_mut() {
                    p.alpha = value
                }
            }
            SweepParameter::K => {
                if let Some(p) = c.packet.as_mut() {
                    p.k = value
                }
            }
            SweepParameter::Center => {
                if let Some(p) = c.packet.as_mut() {
                    p.center = value as usize
                }
            }
        }
        if self.experiment == Experiment::ScalingSweep {
            c.lattice.gamma = c.lattice.critical_gamma(1);
        }
        c
    }
}
