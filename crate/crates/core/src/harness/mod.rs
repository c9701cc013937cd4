//! Config files, figure presets, dispatch and output files.

pub mod config;
pub mod fit;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{ConfigError, Experiment, RunConfig, SweepParameter, SweepSpec};
pub use fit::{fit_scaling, FitError, FitModel, FitResult};
pub use presets::{preset, preset_names};
pub use run::{run, HarnessError, Outcome};
