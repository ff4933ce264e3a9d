//! Hyperparameter files.
//!
//! A training config is a flat TOML table keyed by hyperparameter name:
//!
//! ```toml
//! "Embedding size" = 64
//! "LR" = 0.001
//! "Base loss" = "SSM"
//! ```
//!
//! A search space adds ranges under `[space]` and takes fixed values from an
//! optional `[base]` table:
//!
//! ```toml
//! [base]
//! "Max epochs" = 20
//!
//! [space."LR"]
//! kind = "log-uniform"
//! low = 1e-4
//! high = 1e-2
//! ```

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use uipc_core::train::{ParamRange, ParamValue, SearchSpace, TrainConfig};

fn to_param(key: &str, value: &toml::Value) -> Result<ParamValue> {
    Ok(match value {
        toml::Value::Integer(i) => ParamValue::Int(*i),
        toml::Value::Float(f) => ParamValue::Real(*f),
        toml::Value::String(s) => ParamValue::Text(s.clone()),
        other => bail!("{key}: unsupported value {other}"),
    })
}

fn apply_table(config: &mut TrainConfig, table: &toml::Table) -> Result<()> {
    for (key, value) in table {
        let param = to_param(key, value)?;
        config.set_param(key, &param).map_err(|e| anyhow!("{e}"))?;
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    text.parse::<toml::Table>()
        .with_context(|| format!("cannot parse {}", path.display()))
}

pub fn parse_train_config(text: &str, base: TrainConfig) -> Result<TrainConfig> {
    let table: toml::Table = text.parse()?;
    let mut config = base;
    apply_table(&mut config, &table)?;
    config.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(config)
}

pub fn load_train_config(path: &Path, base: TrainConfig) -> Result<TrainConfig> {
    let table = read_table(path)?;
    let mut config = base;
    apply_table(&mut config, &table).with_context(|| path.display().to_string())?;
    config.validate().map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(config)
}

/// Every hyperparameter of `config` as a flat TOML table that
/// [`parse_train_config`] reads back to the same values.
pub fn train_config_to_toml(config: &TrainConfig) -> String {
    let mut out = String::new();
    for (key, value) in config.params() {
        let v = match value {
            ParamValue::Int(i) => toml::Value::Integer(i),
            ParamValue::Real(f) => toml::Value::Float(f),
            ParamValue::Text(s) => toml::Value::String(s),
        };
        out.push_str(&format!("{} = {v}\n", toml::Value::String(key.to_owned())));
    }
    let form = match config.l2_form {
        uipc_core::losses::L2Form::Squared => "squared",
        uipc_core::losses::L2Form::Norm => "norm",
    };
    out.push_str(&format!("\"L2 form\" = \"{form}\"\n"));
    out
}

pub fn parse_search_space(text: &str, base: TrainConfig) -> Result<SearchSpace> {
    let table: toml::Table = text.parse()?;
    let mut config = base;
    let mut space = SearchSpace::default();
    for (key, value) in table {
        match (key.as_str(), value) {
            ("base", toml::Value::Table(t)) => apply_table(&mut config, &t)?,
            ("space", toml::Value::Table(t)) => {
                for (name, range) in t {
                    let range: ParamRange = range
                        .try_into()
                        .map_err(|e| anyhow!("range for {name:?}: {e}"))?;
                    space.ranges.insert(name, range);
                }
            }
            (other, _) => bail!("unexpected top-level key {other:?} (expected [base] and [space])"),
        }
    }
    space.base = config;
    space.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(space)
}

pub fn load_search_space(path: &Path, base: TrainConfig) -> Result<SearchSpace> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read search space {}", path.display()))?;
    parse_search_space(&text, base).with_context(|| path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use uipc_core::losses::L2Form;

    #[test]
    fn toml_round_trip() {
        let mut c = TrainConfig::default();
        c.learning_rate = 0.1 + 0.2;
        c.reg.l1_pref = 1e-3;
        c.l2_form = L2Form::Norm;
        c.dim = 48;
        let back = parse_train_config(&train_config_to_toml(&c), TrainConfig::default()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_lists_known_ones() {
        let err = parse_train_config("\"Learning speed\" = 3", TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("Embedding size"), "{err}");
    }

    #[test]
    fn search_space() {
        let text = r#"
            [base]
            "Max epochs" = 3
            [space."LR"]
            kind = "log-uniform"
            low = 1e-4
            high = 1e-2
            [space."Base loss"]
            kind = "choice"
            options = ["BPR", "SSM"]
        "#;
        let s = parse_search_space(text, TrainConfig::default()).unwrap();
        assert_eq!(s.base.max_epochs, 3);
        assert_eq!(s.ranges.len(), 2);
        assert!(parse_search_space("[base]\n", TrainConfig::default()).is_err());
    }
}
