//! Bundled run configurations that reproduce the reference figures.

use crate::error::{CliError, CliResult};
use crate::run_config::RunConfig;

pub const PRESETS: &[(&str, &str)] = &[
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig9", include_str!("../presets/fig9.toml")),
    ("fig10", include_str!("../presets/fig10.toml")),
    ("fig11", include_str!("../presets/fig11.toml")),
    ("fig12", include_str!("../presets/fig12.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> CliResult<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            CliError::config(format!(
                "unknown preset `{name}` (known: {})",
                preset_names().join(", ")
            ))
        })
}

pub fn load_preset(name: &str) -> CliResult<RunConfig> {
    RunConfig::from_toml_str(preset_text(name)?).map_err(|e| e.context(format!("preset {name}")))
}
