//! Flat key=value run-configuration files.
//!
//! One `key=value` per line; blank lines and `#` comments are ignored. Keys
//! must belong to the invoking subcommand's schema: values are consumed with
//! [`KvFile::take`] and anything left over fails [`KvFile::finish`]. Flag
//! values take precedence over file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug)]
pub struct KvFile {
    source: String,
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                format!("{}:{}: expected key=value, got {raw:?}", path.display(), idx + 1)
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(format!("{}:{}: empty key", path.display(), idx + 1));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(format!(
                    "{}:{}: key {key:?} appears twice",
                    path.display(),
                    idx + 1
                ));
            }
        }
        Ok(KvFile {
            source: path.display().to_string(),
            entries,
        })
    }

    pub fn empty() -> Self {
        KvFile {
            source: String::new(),
            entries: BTreeMap::new(),
        }
    }

    /// Consumes and parses `key`; `None` when the file does not set it.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| format!("{}: key {key}={raw:?}: {e}", self.source)),
        }
    }

    /// Rejects any keys the subcommand did not consume.
    pub fn finish(self) -> Result<(), String> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        Err(format!(
            "{}: unknown keys: {}",
            self.source,
            keys.join(", ")
        ))
    }
}
