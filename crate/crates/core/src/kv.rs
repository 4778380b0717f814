//! Flat `key = value` text files.
//!
//! Used for workload specs, run manifests, CLI config files and scenario
//! definitions. One entry per line, `#` starts a comment line, keys may repeat
//! (callers decide whether the last one wins or all are collected).

use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("{}invalid value for `{key}`: {reason}", at_line(*line))]
    InvalidValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("{}unknown key `{key}`", at_line(*line))]
    UnknownKey { line: usize, key: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn at_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    /// Source line, or 0 for entries not read from a file.
    pub line: usize,
}

impl KvEntry {
    pub fn parse<T: std::str::FromStr>(&self) -> Result<T, KvError>
    where
        T::Err: std::fmt::Display,
    {
        self.value.parse::<T>().map_err(|e| self.invalid(e))
    }

    pub fn parse_bool(&self) -> Result<bool, KvError> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            _ => Err(self.invalid("expected true or false")),
        }
    }

    pub fn invalid(&self, reason: impl std::fmt::Display) -> KvError {
        KvError::InvalidValue {
            line: self.line,
            key: self.key.clone(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDoc {
    entries: Vec<KvEntry>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(KvError::Malformed {
                    line: idx + 1,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(KvError::Malformed {
                    line: idx + 1,
                    text: raw.to_string(),
                });
            }
            entries.push(KvEntry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: idx + 1,
            });
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self, KvError> {
        let text = std::fs::read_to_string(path).map_err(|source| KvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push(KvEntry {
            key: key.into(),
            value: value.to_string(),
            line: 0,
        });
    }

    /// Appends a copy of `entry`, keeping its source line.
    pub fn push_entry(&mut self, entry: &KvEntry) {
        self.entries.push(entry.clone());
    }

    /// Drops every entry for `key`.
    pub fn remove(&mut self, key: &str) {
        self.entries.retain(|e| e.key != key);
    }

    /// Appends all entries of `other`, so they take precedence on lookup.
    pub fn extend(&mut self, other: &KvDoc) {
        self.entries.extend(other.entries.iter().cloned());
    }

    /// Last entry for `key`.
    pub fn get(&self, key: &str) -> Option<&KvEntry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&KvEntry, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a KvEntry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    pub fn entries(&self) -> &[KvEntry] {
        &self.entries
    }

    /// Fails on the first key not in `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), KvError> {
        match self.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            Some(e) => Err(KvError::UnknownKey {
                line: e.line,
                key: e.key.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{} = {}", e.key, e.value);
        }
        out
    }
}
