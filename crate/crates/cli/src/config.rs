//! Flat `key = value` run configuration.
//!
//! Values come from defaults, then the config file, then command-line
//! flags. Lines starting with `#` or `{` are skipped, so an epoch log (whose
//! header is the effective configuration) can be passed back as a config
//! file to repeat a run.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sentcap::data::EXTERNAL_MIN_COUNT;
use sentcap::{TrainConfig, Variant};

pub const KEYS: [&str; 10] = [
    "variant",
    "epochs",
    "learning_rate",
    "batch_size",
    "lambda",
    "seed",
    "clip_norm",
    "embed_dim",
    "hidden_dim",
    "min_count",
];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub train: TrainConfig,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub min_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::Flow,
            train: TrainConfig::default(),
            embed_dim: 32,
            hidden_dim: 64,
            min_count: EXTERNAL_MIN_COUNT,
        }
    }
}

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('{') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", i + 1)))?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

fn parsed<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| ConfigError(format!("`{key}`: cannot parse `{value}`: {e}")))
}

impl RunConfig {
    /// Applies `key = value` pairs on top of the current values.
    pub fn apply(&mut self, pairs: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            match k.as_str() {
                "variant" => self.variant = parsed(k, v)?,
                "epochs" => self.train.epochs = parsed(k, v)?,
                "learning_rate" | "lr" => self.train.learning_rate = parsed(k, v)?,
                "batch_size" => self.train.batch_size = parsed(k, v)?,
                "lambda" => self.train.lambda = parsed(k, v)?,
                "seed" => self.train.seed = parsed(k, v)?,
                "clip_norm" => {
                    self.train.clip_norm = match v.as_str() {
                        "none" | "off" => None,
                        _ => Some(parsed(k, v)?),
                    }
                }
                "embed_dim" => self.embed_dim = parsed(k, v)?,
                "hidden_dim" => self.hidden_dim = parsed(k, v)?,
                "min_count" => self.min_count = parsed(k, v)?,
                other => return Err(ConfigError(format!("unknown config key `{other}` (known: {})", KEYS.join(", ")))),
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        parse_pairs(&text)
    }

    /// Every effective value, one `key = value` line each, in `KEYS` order.
    pub fn echo(&self) -> String {
        let t = &self.train;
        let clip = t.clip_norm.map_or("none".to_string(), |c| format!("{c:?}"));
        [
            format!("variant = {}", self.variant.as_str()),
            format!("epochs = {}", t.epochs),
            format!("learning_rate = {:?}", t.learning_rate),
            format!("batch_size = {}", t.batch_size),
            format!("lambda = {:?}", t.lambda),
            format!("seed = {}", t.seed),
            format!("clip_norm = {clip}"),
            format!("embed_dim = {}", self.embed_dim),
            format!("hidden_dim = {}", self.hidden_dim),
            format!("min_count = {}", self.min_count),
        ]
        .join("\n")
            + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply(&parse_pairs("variant = direct\nlr = 0.003\nclip-norm = none\n# note\n").unwrap()).unwrap();
        let mut again = RunConfig::default();
        again.apply(&parse_pairs(&cfg.echo()).unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(cfg.train.clip_norm, None);
        assert_eq!(cfg.echo().lines().count(), KEYS.len());
    }

    #[test]
    fn errors_name_the_key() {
        let mut cfg = RunConfig::default();
        let e = cfg.apply(&parse_pairs("epochs = many").unwrap()).unwrap_err();
        assert!(e.0.contains("epochs"));
        let e = cfg.apply(&parse_pairs("colour = red").unwrap()).unwrap_err();
        assert!(e.0.contains("colour"));
        assert!(parse_pairs("just text").is_err());
    }
}
