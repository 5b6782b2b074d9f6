//! Flat key-value run configuration.
//!
//! Grammar: one `key = value` per line; keys are dotted lowercase section
//! paths; `#` starts a comment (whole line or trailing); blank lines are
//! ignored. Values are words, numbers, or whitespace-separated number
//! lists. Duplicate keys and unrecognized keys are validation errors, so
//! config files double as exact experiment provenance.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use crate::error::CliError;

pub struct Config {
    entries: BTreeMap<String, String>,
    consumed: Mutex<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::validation(format!(
                    "config line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(CliError::validation(format!(
                    "config line {}: empty key or value",
                    lineno + 1
                )));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(CliError::validation(format!(
                    "config line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(Config {
            entries,
            consumed: Mutex::new(BTreeSet::new()),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Config::parse(&text)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        let v = self.entries.get(key).map(|s| s.as_str());
        if v.is_some() {
            self.consumed.lock().unwrap().insert(key.to_string());
        }
        v
    }

    pub fn require_str(&self, key: &str) -> Result<&str, CliError> {
        self.get_str(key)
            .ok_or_else(|| CliError::validation(format!("missing required config key '{key}'")))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.get_str(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| CliError::validation(format!("key '{key}': expected a number, got '{s}'"))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, CliError> {
        self.get_f64(key)?
            .ok_or_else(|| CliError::validation(format!("missing required config key '{key}'")))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.get_str(key) {
            None => Ok(None),
            Some(s) => s.parse::<usize>().map(Some).map_err(|_| {
                CliError::validation(format!("key '{key}': expected a nonnegative integer, got '{s}'"))
            }),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.get_usize(key)?.unwrap_or(default))
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.get_str(key) {
            None => Ok(None),
            Some(s) => s.parse::<u64>().map(Some).map_err(|_| {
                CliError::validation(format!("key '{key}': expected an integer, got '{s}'"))
            }),
        }
    }

    pub fn get_floats(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.get_str(key) {
            None => Ok(None),
            Some(s) => {
                let mut out = Vec::new();
                for tok in s.split_whitespace() {
                    out.push(tok.parse::<f64>().map_err(|_| {
                        CliError::validation(format!("key '{key}': expected numbers, got '{tok}'"))
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    /// Errors on unrecognized keys after all builders have run.
    pub fn finish(&self) -> Result<(), CliError> {
        let consumed = self.consumed.lock().unwrap();
        let unknown: Vec<&String> = self
            .entries
            .keys()
            .filter(|k| !consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            let list: Vec<String> = unknown.iter().map(|s| s.to_string()).collect();
            Err(CliError::validation(format!(
                "unrecognized config keys: {}",
                list.join(", ")
            )))
        }
    }
}
