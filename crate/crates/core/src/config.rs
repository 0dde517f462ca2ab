//! Flat `key = value` text files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are namespaced
//! with dots (`surface.speed_x_cm_per_s`). A later assignment to the same key
//! replaces an earlier one, which is how command-line overrides are layered.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("missing key '{0}'")]
    Missing(String),
    #[error("key '{key}': cannot parse '{value}': {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("unknown key '{0}'")]
    Unknown(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            kv.set_assignment(line).map_err(|reason| ConfigError::Syntax { line: i + 1, reason })?;
        }
        Ok(kv)
    }

    /// Applies one `key=value` assignment.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), String> {
        let (key, value) =
            assignment.split_once('=').ok_or_else(|| format!("expected 'key = value', got '{assignment}'"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err("empty key".into());
        }
        self.set(key, value.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn parsed<V>(&self, key: &str) -> Result<Option<V>, ConfigError>
    where
        V: FromStr,
        V::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(value) => value.parse().map(Some).map_err(|e: V::Err| ConfigError::Invalid {
                key: key.to_string(),
                value: value.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.parsed(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    /// Writes the value into `slot` when the key is present.
    pub fn apply<V>(&self, key: &str, slot: &mut V) -> Result<(), ConfigError>
    where
        V: FromStr,
        V::Err: std::fmt::Display,
    {
        if let Some(v) = self.parsed(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Parses a list of numbers: comma separated values and/or
    /// `start:stop:step` ranges (stop inclusive).
    pub fn number_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(value) = self.get(key) else { return Ok(None) };
        parse_number_list(value).map(Some).map_err(|reason| ConfigError::Invalid {
            key: key.into(),
            value: value.into(),
            reason,
        })
    }

    /// Parses `x,y; x,y; ...`.
    pub fn point_list(&self, key: &str) -> Result<Option<Vec<(f64, f64)>>, ConfigError> {
        let Some(value) = self.get(key) else { return Ok(None) };
        let invalid = |reason: String| ConfigError::Invalid { key: key.into(), value: value.into(), reason };
        let mut out = Vec::new();
        for item in value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (x, y) = item.split_once(',').ok_or_else(|| invalid(format!("point '{item}' is not 'x,y'")))?;
            let x = x.trim().parse::<f64>().map_err(|e| invalid(e.to_string()))?;
            let y = y.trim().parse::<f64>().map_err(|e| invalid(e.to_string()))?;
            out.push((x, y));
        }
        Ok(Some(out))
    }
}

fn parse_number_list(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').map(str::trim).collect();
        match parts.as_slice() {
            [single] => out.push(single.parse::<f64>().map_err(|e| e.to_string())?),
            [start, stop, step] => {
                let start: f64 = start.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
                let stop: f64 = stop.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
                let step: f64 = step.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
                if !(step > 0.0) || stop < start {
                    return Err(format!("range '{item}' needs start <= stop and a positive step"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| start + i as f64 * step));
            }
            _ => return Err(format!("cannot parse '{item}'")),
        }
    }
    Ok(out)
}
