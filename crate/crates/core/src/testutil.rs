//! Shared fixtures for unit tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::Dataset;

pub(crate) fn to_attr_map(entries: &[(&str, &[&str])]) -> BTreeMap<String, BTreeSet<String>> {
    entries
        .iter()
        .map(|(e, attrs)| {
            (
                e.to_string(),
                attrs.iter().map(|a| a.to_string()).collect(),
            )
        })
        .collect()
}

/// Two users, two items, three interactions. Attribute a0 is shared by both
/// users, a1 is declared in the vocabulary but carried by nobody, b0 is
/// shared by both items. Global attribute IDs: a0=0, a1=1, b0=2.
pub(crate) fn two_by_two() -> Dataset {
    let pairs = vec![
        ("u0".to_string(), "i0".to_string()),
        ("u1".to_string(), "i0".to_string()),
        ("u1".to_string(), "i1".to_string()),
    ];
    crate::data::assemble(
        &pairs,
        &to_attr_map(&[("u0", &["a0"]), ("u1", &["a0"])]),
        &to_attr_map(&[("i0", &["b0"]), ("i1", &["b0"])]),
        vec!["a0".to_string(), "a1".to_string()],
        vec!["b0".to_string()],
    )
    .unwrap()
}
