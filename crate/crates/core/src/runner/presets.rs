//! Scenario files shipped with the binary.

use super::config::{parse_scenario_str, ScenarioConfig};
use super::RunnerError;

pub const PRESETS: &[(&str, &str)] = &[
    (
        "baseline_wifi_only",
        include_str!("../../presets/baseline_wifi_only.toml"),
    ),
    (
        "fig3_qci5_dmtc40",
        include_str!("../../presets/fig3_qci5_dmtc40.toml"),
    ),
    (
        "fig3_qci5_dmtc80",
        include_str!("../../presets/fig3_qci5_dmtc80.toml"),
    ),
    (
        "fig3_qci5_dmtc160",
        include_str!("../../presets/fig3_qci5_dmtc160.toml"),
    ),
    (
        "fig3_qci7_dmtc40",
        include_str!("../../presets/fig3_qci7_dmtc40.toml"),
    ),
    (
        "fig3_qci7_dmtc80",
        include_str!("../../presets/fig3_qci7_dmtc80.toml"),
    ),
    (
        "fig3_qci7_dmtc160",
        include_str!("../../presets/fig3_qci7_dmtc160.toml"),
    ),
    (
        "fig3_qci9_dmtc40",
        include_str!("../../presets/fig3_qci9_dmtc40.toml"),
    ),
    (
        "fig3_qci9_dmtc80",
        include_str!("../../presets/fig3_qci9_dmtc80.toml"),
    ),
    (
        "fig3_qci9_dmtc160",
        include_str!("../../presets/fig3_qci9_dmtc160.toml"),
    ),
    (
        "fig4_baseline",
        include_str!("../../presets/fig4_baseline.toml"),
    ),
    ("fig4_qci5", include_str!("../../presets/fig4_qci5.toml")),
    ("fig4_qci7", include_str!("../../presets/fig4_qci7.toml")),
    ("fig4_qci9", include_str!("../../presets/fig4_qci9.toml")),
    (
        "legacy_optionA",
        include_str!("../../presets/legacy_optionA.toml"),
    ),
    (
        "legacy_optionB_cw4",
        include_str!("../../presets/legacy_optionB_cw4.toml"),
    ),
    (
        "legacy_optionB_cw32",
        include_str!("../../presets/legacy_optionB_cw32.toml"),
    ),
    (
        "duty_cycle_89",
        include_str!("../../presets/duty_cycle_89.toml"),
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<ScenarioConfig, RunnerError> {
    let text = source(name).ok_or_else(|| RunnerError::UnknownPreset(name.to_string()))?;
    parse_scenario_str(text, &format!("preset {name}"))
}
