//! Flat `key = value` configuration files.
//!
//! One setting per line; blank lines and lines starting with `#` are
//! skipped; the key and value are trimmed. Keys must be known and may
//! appear once. Command-line flags take precedence over file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

use crate::errors::validation;

pub const KNOWN_KEYS: &[&str] = &[
    "background_rate",
    "block_correlation",
    "burst_rate",
    "centrality_max_iter",
    "centrality_tol",
    "close",
    "cluster_sizes",
    "clusters",
    "cond_limit",
    "days",
    "delta_ns",
    "directions",
    "factor_vol",
    "factors",
    "fraction",
    "idio_vol",
    "intercept",
    "jitter_ns",
    "leverage",
    "measure",
    "n_perm",
    "open",
    "regimes",
    "sampling_sec",
    "seed",
    "snap",
    "start_date",
    "symbols",
    "two_sided",
];

/// Resolved settings: file values, overridden by flags, recorded for the
/// run manifest.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
        Ok(Settings {
            file: parse(&text).with_context(|| format!("in config {}", path.display()))?,
            resolved: BTreeMap::new(),
        })
    }

    /// Flag value if given, else file value, else `default`.
    pub fn pick<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(text) => text.parse().map_err(|e| validation(format!("config key {key}: {e}")))?,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| validation(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(validation(format!("line {}: unknown key {key:?}", n + 1)));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(validation(format!("line {}: duplicate key {key:?}", n + 1)));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let m = parse("# run\n\nseed = 7\n  clusters=5  \nleverage = inf\n").unwrap();
        assert_eq!(m["seed"], "7");
        assert_eq!(m["clusters"], "5");
        assert_eq!(m["leverage"], "inf");
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(parse("colour = red\n").is_err());
        assert!(parse("seed = 1\nseed = 2\n").is_err());
        assert!(parse("seed\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut s = Settings {
            file: parse("seed = 3\nclusters = 4\n").unwrap(),
            resolved: BTreeMap::new(),
        };
        assert_eq!(s.pick("seed", Some(9u64), 0).unwrap(), 9);
        assert_eq!(s.pick("clusters", None, 2usize).unwrap(), 4);
        assert_eq!(s.pick("factors", None, 2usize).unwrap(), 2);
        assert_eq!(s.resolved()["seed"], "9");
    }
}
