//! Parsers for the two tab-separated input formats.
//!
//! Interactions: one `<user>\t<item>` pair per line. Attributes: one
//! `<entity>\t<attr>` line per entity with one or more attribute fields;
//! repeated entity lines merge. Files are UTF-8; blank lines are skipped and
//! a trailing carriage return is tolerated.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{PgdError, Result};

/// Parsed interaction file: unique pairs in first-occurrence order, plus the
/// number of duplicate lines that were dropped.
#[derive(Debug, Clone)]
pub struct InteractionsFile {
    pub pairs: Vec<(String, String)>,
    pub duplicates: usize,
}

/// Which attribute family a file describes; used in error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrKind {
    User,
    Item,
}

impl fmt::Display for AttrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttrKind::User => "user",
            AttrKind::Item => "item",
        })
    }
}

/// Loads a `<user>\t<item>` interaction file.
///
/// Duplicate pairs are dropped (first occurrence wins) and counted. A file
/// with no interactions at all is an error.
pub fn load_interactions(path: &Path) -> Result<InteractionsFile> {
    let (pairs, duplicates) = read_pairs(path)?;
    if pairs.is_empty() {
        return Err(PgdError::EmptyDataset(format!(
            "no interactions in {}",
            path.display()
        )));
    }
    Ok(InteractionsFile { pairs, duplicates })
}

/// Loads a pair file that is allowed to be empty (split partitions).
pub(crate) fn load_pairs_allow_empty(path: &Path) -> Result<Vec<(String, String)>> {
    Ok(read_pairs(path)?.0)
}

fn read_pairs(path: &Path) -> Result<(Vec<(String, String)>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| PgdError::io(path, e))?;
    let mut pairs = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut duplicates = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (user, item) = match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(i), None) if !u.is_empty() && !i.is_empty() => (u, i),
            _ => {
                return Err(PgdError::parse(
                    path,
                    lineno + 1,
                    format!("expected `<user>\\t<item>`, got {line:?}"),
                ))
            }
        };
        let pair = (user.to_string(), item.to_string());
        if seen.insert(pair.clone()) {
            pairs.push(pair);
        } else {
            duplicates += 1;
        }
    }
    Ok((pairs, duplicates))
}

/// Loads an `<entity>\t<attr>...` attribute file into a map of attribute
/// sets. Every line must carry at least one attribute, and attribute tokens
/// that parse as numbers are rejected: attributes are categorical, and a
/// numeric token almost always means a column mix-up.
pub fn load_attributes(
    path: &Path,
    kind: AttrKind,
) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let text = fs::read_to_string(path).map_err(|e| PgdError::io(path, e))?;
    let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let entity = fields.next().unwrap_or("");
        if entity.is_empty() {
            return Err(PgdError::parse(path, lineno + 1, "empty entity field"));
        }
        let attrs: Vec<&str> = fields.collect();
        if attrs.is_empty() {
            return Err(PgdError::parse(
                path,
                lineno + 1,
                format!("{kind} {entity:?} has zero attributes"),
            ));
        }
        for attr in &attrs {
            if attr.is_empty() {
                return Err(PgdError::parse(
                    path,
                    lineno + 1,
                    format!("empty attribute field for {kind} {entity:?}"),
                ));
            }
            if attr.parse::<f64>().is_ok() {
                return Err(PgdError::parse(
                    path,
                    lineno + 1,
                    format!("numeric attribute token {attr:?} for {kind} {entity:?}"),
                ));
            }
        }
        let entry = map.entry(entity.to_string()).or_default();
        entry.extend(attrs.iter().map(|a| a.to_string()));
    }
    Ok(map)
}
