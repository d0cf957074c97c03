//! Flat key-value config files and flag resolution.
//!
//! Config files hold one `key = value` pair per line, `#` comments and blank
//! lines allowed, values optionally double-quoted. Keys use the long flag
//! names without the leading dashes. Precedence: command-line flag, then
//! config value, then built-in default. Every resolved value (including
//! defaulted ones) is recorded so runs can be reproduced from the echoed
//! config.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config file {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got `{raw}`", no + 1);
        };
        let key = key.trim();
        if key.is_empty() {
            bail!("line {}: empty key", no + 1);
        }
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        map.insert(key.to_string(), value.to_string());
    }
    Ok(map)
}

/// Resolves each field from flag, config or default, recording the outcome.
pub struct Resolver {
    cfg: HashMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(config_path: Option<&Path>) -> Result<Self> {
        let cfg = match config_path {
            Some(p) => parse_config_file(p)?,
            None => HashMap::new(),
        };
        Ok(Resolver {
            cfg,
            resolved: BTreeMap::new(),
        })
    }

    fn from_cfg<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.cfg.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key `{key}`: cannot parse `{raw}`: {e}")),
        }
    }

    /// Flag value, else config value, else default.
    pub fn value<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.from_cfg(key)?.unwrap_or(default),
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Flag value, else config value, else an error naming the field.
    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self
                .from_cfg(key)?
                .ok_or_else(|| anyhow::anyhow!("missing required value: pass --{key} or set `{key}` in the config file"))?,
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Optional value with no default; absent stays absent.
    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_cfg(key)?,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    /// The fully-resolved assignment, for the reproducibility echo.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Parse a comma-separated probability vector like `0.6,0.4`.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number `{part}` in vector `{text}`"))
        })
        .collect()
}

/// Parse a semicolon-separated matrix like `0.1,0.5;0.4,0.8` (rows of the
/// reciprocity matrix, target class by row).
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';').map(parse_vector).collect()
}
