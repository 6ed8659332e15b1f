use super::config::ExperimentConfig;
use crate::error::{Error, Result};

const PRESETS: &[(&str, &str)] = &[
    ("obj1-budget", include_str!("../../presets/obj1-budget.toml")),
    ("obj1-lambda", include_str!("../../presets/obj1-lambda.toml")),
    (
        "routing-rate-curve",
        include_str!("../../presets/routing-rate-curve.toml"),
    ),
    ("lb-rate-curve", include_str!("../../presets/lb-rate-curve.toml")),
    ("routing-train", include_str!("../../presets/routing-train.toml")),
    ("lb-train", include_str!("../../presets/lb-train.toml")),
    ("routing-tradeoff", include_str!("../../presets/routing-tradeoff.toml")),
    ("bound-check", include_str!("../../presets/bound-check.toml")),
    ("bound-worked", include_str!("../../presets/bound-worked.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Built-in experiment by name; the same documents ship under `presets/`.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
    ExperimentConfig::from_toml(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_validates() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.id, name);
            assert!(cfg.kind.is_some());
        }
        assert!(preset("nope").is_err());
    }
}
