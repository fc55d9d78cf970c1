//! Training configuration files and the `train` command.

use std::fs;
use std::path::Path;

use crate::trainer::{train, TrainConfig, TrainSummary};

use super::HarnessError;

/// Name of the fully-resolved configuration written next to the outputs.
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

/// Parses a configuration document. Every key must be present; a missing or
/// unknown key is reported by name.
pub fn parse_config(text: &str) -> Result<TrainConfig, HarnessError> {
    let config: TrainConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<TrainConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// The default configuration rendered with every key explicit.
pub fn render_config(config: &TrainConfig) -> Result<String, HarnessError> {
    toml::to_string_pretty(config).map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn default_config_toml() -> String {
    render_config(&TrainConfig::default()).expect("default config serializes")
}

/// Loads the config, snapshots it to the output directory and trains.
pub fn cli_train(config_path: &Path, seed: u64, out_dir: &Path, resume: Option<&Path>) -> Result<TrainSummary, HarnessError> {
    let config = load_config(config_path)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(RESOLVED_CONFIG), render_config(&config)?)?;
    Ok(train(&config, seed, out_dir, resume)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let text = default_config_toml();
        assert_eq!(parse_config(&text).unwrap(), TrainConfig::default());
    }

    #[test]
    fn missing_key_is_named() {
        let text = default_config_toml().replace("k_phi = 0.1\n", "");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("k_phi"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = default_config_toml().replace("k_phi = 0.1\n", "k_phi = 0.1\nk_psi = 2.0\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("k_psi"), "{err}");
    }

    #[test]
    fn out_of_range_value_is_named() {
        let text = default_config_toml().replace("k_phi = 0.1\n", "k_phi = 1.5\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("priority.k_phi"), "{err}");
    }
}
