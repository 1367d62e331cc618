//! Flat `key=value` configuration with presets and strict key checking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{bad_value, CliError, Result};

/// Parameter bundle: the paper's budgets or reduced desk-scale ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(format!("expected `desk` or `paper`, got `{other}`")),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

/// Settings shared by every experiment.
#[derive(Debug, Clone, Serialize)]
pub struct RunContext {
    pub scale: Scale,
    pub seed: u64,
    /// Canonical thread count; results do not depend on it.
    pub threads: usize,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scale: Scale::Desk,
            seed: 0,
            threads: 1,
            out_dir: out_dir.into(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.scale = scale;
        self
    }
}

/// User-supplied parameter values, from a config file and `--set` flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    values: BTreeMap<String, String>,
}

impl Overrides {
    /// Parses `key = value` lines. `#` starts a comment; blank lines are
    /// skipped; a repeated key is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::ConfigSyntax {
                line: i + 1,
                message: "expected `key=value`".into(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(CliError::ConfigSyntax {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::ConfigSyntax {
                    line: i + 1,
                    message: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Later values win.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.values.insert(key.into(), value.into());
    }

    /// Parses a `key=value` assignment from the command line.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| bad_value(assignment, "expected `key=value`"))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    /// Removes and returns a key, for the global settings.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn resolver(&self) -> Resolver<'_> {
        Resolver {
            overrides: self,
            used: BTreeSet::new(),
        }
    }
}

/// A value type that can appear on the right of `key=value`.
pub trait Param: Sized {
    fn parse_param(s: &str) -> std::result::Result<Self, String>;
}

macro_rules! from_str_param {
    ($($t:ty),*) => {$(
        impl Param for $t {
            fn parse_param(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
        }
    )*};
}

from_str_param!(f64, usize, u32, u64, bool, String);

impl Param for Option<usize> {
    fn parse_param(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" | "" => Ok(None),
            v => v.parse().map(Some).map_err(|e| format!("{e}")),
        }
    }
}

impl Param for Vec<usize> {
    fn parse_param(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|e| format!("`{t}`: {e}")))
            .collect()
    }
}

/// Reads keys from [`Overrides`] and remembers which ones were consumed, so
/// leftovers can be rejected.
pub struct Resolver<'a> {
    overrides: &'a Overrides,
    used: BTreeSet<String>,
}

impl Resolver<'_> {
    pub fn get<T: Param>(&mut self, key: &str, default: T) -> Result<T> {
        self.used.insert(key.to_string());
        match self.overrides.values.get(key) {
            None => Ok(default),
            Some(raw) => T::parse_param(raw).map_err(|m| bad_value(key, m)),
        }
    }

    pub fn update<T: Param>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        self.used.insert(key.to_string());
        if let Some(raw) = self.overrides.values.get(key) {
            *slot = T::parse_param(raw).map_err(|m| bad_value(key, m))?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&str> = self
            .overrides
            .values
            .keys()
            .filter(|k| !self.used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::UnknownKeys(unknown.join(", ")))
        }
    }
}

/// Flattens a serializable parameter struct into `key=value` lines that
/// [`Overrides::parse`] reads back.
pub fn to_flat_config(params: &impl Serialize) -> Result<String> {
    let value = serde_json::to_value(params)?;
    let mut out = String::new();
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            let rendered = match v {
                serde_json::Value::Null => "none".to_string(),
                serde_json::Value::String(s) => s,
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            out.push_str(&format!("{k}={rendered}\n"));
        }
    }
    Ok(out)
}
