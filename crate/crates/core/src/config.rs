//! `key = value` text configs: one pair per line, `#` starts a comment line.

use std::fs;
use std::path::Path;

use crate::error::{NerError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_key_values(text: &str) -> Result<Vec<ConfigEntry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(NerError::Config(format!(
                "line {}: expected `key = value`, found {line:?}",
                idx + 1
            )));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(NerError::Config(format!("line {}: empty key", idx + 1)));
        }
        out.push(ConfigEntry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: idx + 1,
        });
    }
    Ok(out)
}

pub fn read_key_values(path: impl AsRef<Path>) -> Result<Vec<ConfigEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| NerError::io(path, e))?;
    parse_key_values(&text)
}

impl ConfigEntry {
    pub fn parse<T: std::str::FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| {
            NerError::Config(format!(
                "line {}: cannot parse {:?} for `{}`",
                self.line, self.value, self.key
            ))
        })
    }

    pub fn parse_list<T: std::str::FromStr>(&self) -> Result<Vec<T>> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| {
                    NerError::Config(format!(
                        "line {}: cannot parse list item {s:?} for `{}`",
                        self.line, self.key
                    ))
                })
            })
            .collect()
    }

    pub fn unknown(&self) -> NerError {
        NerError::Config(format!("line {}: unknown key `{}`", self.line, self.key))
    }
}
