//! Flat `key = value` configuration files. Command-line flags take precedence.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Keys accepted in a config file; the same names as the long flags.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "output",
    "format",
    "quiet",
    "r",
    "T",
    "n",
    "k",
    "topology",
    "cz-weight",
    "excess-noise",
    "squeezed",
    "frame",
    "r-min",
    "r-max",
    "r-steps",
    "transmissivities",
    "rounds",
    "reveal-fraction",
    "basis-probability",
    "cov-file",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Blank lines and `#` comments are ignored. `_` and `-` are interchangeable in keys.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", lineno + 1)))?;
            let key = normalize(key);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("config line {}: unknown key `{key}`", lineno + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value, else config value, else `default`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.raw(key) {
            Some(raw) => raw.parse().map_err(|e| CliError::Config(format!("config key `{key}` = `{raw}`: {e}"))),
            None => Ok(default),
        }
    }
}

fn normalize(key: &str) -> String {
    let key = key.trim().replace('_', "-");
    // `T` is the only case-sensitive key; everything else is lowercase.
    if key == "T" || key == "t" {
        "T".into()
    } else {
        key.to_ascii_lowercase()
    }
}
