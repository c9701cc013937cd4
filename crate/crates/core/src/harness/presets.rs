use super::config::{ConfigError, RunConfig};

/// Checked-in configs named after the figures they reproduce.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig2", include_str!("../../presets/fig2.toml")),
    ("fig3a", include_str!("../../presets/fig3a.toml")),
    ("fig3b", include_str!("../../presets/fig3b.toml")),
    ("fig4", include_str!("../../presets/fig4.toml")),
    ("fig6", include_str!("../../presets/fig6.toml")),
    ("fig7a", include_str!("../../presets/fig7a.toml")),
    ("fig7b", include_str!("../../presets/fig7b.toml")),
    ("fig7c", include_str!("../../presets/fig7c.toml")),
    ("fig7d", include_str!("../../presets/fig7d.toml")),
    ("fig7e", include_str!("../../presets/fig7e.toml")),
    ("fig7f", include_str!("../../presets/fig7f.toml")),
    ("fig8a", include_str!("../../presets/fig8a.toml")),
    ("fig8b", include_str!("../../presets/fig8b.toml")),
    ("fig8c", include_str!("../../presets/fig8c.toml")),
    ("fig8d", include_str!("../../presets/fig8d.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
    let src = preset_source(name)
        .ok_or_else(|| ConfigError::UnknownPreset(name.to_string(), preset_names().collect::<Vec<_>>().join(", ")))?;
    RunConfig::from_toml_str(src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Experiment;
    use crate::model::Topology;

    #[test]
    fn every_preset_parses() {
        for name in preset_names() {
            preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert_eq!(PRESETS.len(), 15);
    }

    #[test]
    fn figure_parameters() {
        let f2 = preset("fig2").unwrap();
        assert_eq!(f2.experiment, Experiment::Emission);
        let (l, p) = (f2.lattice, f2.packet.unwrap());
        assert_eq!((l.kappa, l.g, l.gamma, l.n_sites), (1.0, 1.0, 0.5, 800));
        assert_eq!((p.alpha, p.center), (0.02, 400));

        let f6 = preset("fig6").unwrap();
        assert_eq!(f6.experiment, Experiment::PtTrace);
        assert_eq!(f6.lattice.topology, Topology::PtFinite);
        assert_eq!((f6.lattice.g, f6.lattice.kappa, f6.lattice.n_sites), (1.0, 1.0, 800));
        assert_eq!(f6.packet.unwrap().alpha, 0.02);

        let f7c = preset("fig7c").unwrap();
        assert_eq!(f7c.experiment, Experiment::Deviation);
        let p = f7c.packet.unwrap();
        assert_eq!((p.alpha, p.center, f7c.lattice.g), (0.04, 200, 1.0));
        assert!(matches!(preset("fig9"), Err(ConfigError::UnknownPreset(..))));
    }
}
