//! Dataset assembly: external string IDs to dense indices.
//!
//! Index conventions used everywhere downstream:
//! * users occupy `[0, M)`, lexicographic by external ID;
//! * items occupy `[0, N)`, lexicographic by external ID;
//! * attribute IDs are global: user attributes `[0, D_u)`, item attributes
//!   `[D_u, D_u + D_v)`, each family lexicographic by name.

mod load;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use load::{load_attributes, load_interactions, AttrKind, InteractionsFile};
pub use split::{
    generate_split, load_split, save_split, NewEntity, SplitBundle, SplitFractions,
};

use crate::error::{PgdError, Result};

/// Bidirectional mapping between external string IDs and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdIndex {
    names: Vec<String>,
    positions: HashMap<String, usize>,
}

impl IdIndex {
    /// Builds an index from names already sorted ascending and unique.
    pub fn from_sorted(names: Vec<String>) -> Self {
        debug_assert!(names.windows(2).all(|w| w[0] < w[1]));
        let positions = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        IdIndex { names, positions }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.positions.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// An interaction dataset with per-entity attribute sets, fully indexed.
///
/// Invariants: interactions are unique `(user, item)` pairs with indices in
/// range; every user and item has at least one attribute; attribute lists are
/// sorted ascending and hold global attribute IDs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub interactions: Vec<(usize, usize)>,
    pub user_attrs: Vec<Vec<usize>>,
    pub item_attrs: Vec<Vec<usize>>,
    pub users: IdIndex,
    pub items: IdIndex,
    pub user_attr_names: IdIndex,
    pub item_attr_names: IdIndex,
}

impl Dataset {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_user_attrs(&self) -> usize {
        self.user_attr_names.len()
    }

    pub fn num_item_attrs(&self) -> usize {
        self.item_attr_names.len()
    }

    /// Total attribute count `D_u + D_v`.
    pub fn num_attrs(&self) -> usize {
        self.num_user_attrs() + self.num_item_attrs()
    }

    /// Global ID of the first item attribute.
    pub fn item_attr_offset(&self) -> usize {
        self.num_user_attrs()
    }

    /// Items interacted with by each user, sorted ascending.
    pub fn items_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_users()];
        for &(u, i) in &self.interactions {
            out[u].push(i);
        }
        for list in &mut out {
            list.sort_unstable();
        }
        out
    }
}

/// Builds a [`Dataset`] from string-level interactions and attribute maps.
///
/// The entity populations are the attribute-map keys, so entities that carry
/// attributes but never interact are retained. Every interacting entity must
/// appear in its attribute map. Repeated interaction pairs are collapsed to
/// their first occurrence.
pub fn build_dataset(
    interactions: &[(String, String)],
    user_attr_map: &BTreeMap<String, BTreeSet<String>>,
    item_attr_map: &BTreeMap<String, BTreeSet<String>>,
) -> Result<Dataset> {
    let user_vocab = attr_vocab(user_attr_map);
    let item_vocab = attr_vocab(item_attr_map);
    assemble(
        interactions,
        user_attr_map,
        item_attr_map,
        user_vocab,
        item_vocab,
    )
}

/// Sorted union of all attribute names in a map.
fn attr_vocab(map: &BTreeMap<String, BTreeSet<String>>) -> Vec<String> {
    let mut vocab: BTreeSet<&String> = BTreeSet::new();
    for attrs in map.values() {
        vocab.extend(attrs);
    }
    vocab.into_iter().cloned().collect()
}

/// Like [`build_dataset`], but with attribute vocabularies supplied by the
/// caller. The vocabularies may be supersets of the attributes actually used
/// (a reloaded training split keeps attributes carried only by new entities).
pub(crate) fn assemble(
    interactions: &[(String, String)],
    user_attr_map: &BTreeMap<String, BTreeSet<String>>,
    item_attr_map: &BTreeMap<String, BTreeSet<String>>,
    user_attr_vocab: Vec<String>,
    item_attr_vocab: Vec<String>,
) -> Result<Dataset> {
    let users = IdIndex::from_sorted(user_attr_map.keys().cloned().collect());
    let items = IdIndex::from_sorted(item_attr_map.keys().cloned().collect());
    let user_attr_names = IdIndex::from_sorted(user_attr_vocab);
    let item_attr_names = IdIndex::from_sorted(item_attr_vocab);
    let offset = user_attr_names.len();

    let user_attrs = index_attr_lists(user_attr_map, &users, &user_attr_names, 0, "user")?;
    let item_attrs = index_attr_lists(item_attr_map, &items, &item_attr_names, offset, "item")?;

    let mut seen = BTreeSet::new();
    let mut indexed = Vec::with_capacity(interactions.len());
    let mut missing = Vec::new();
    for (user, item) in interactions {
        let u = users.get(user);
        let i = items.get(item);
        match (u, i) {
            (Some(u), Some(i)) => {
                if seen.insert((u, i)) {
                    indexed.push((u, i));
                }
            }
            _ => {
                if u.is_none() {
                    missing.push(format!("user {user:?} has no attribute record"));
                }
                if i.is_none() {
                    missing.push(format!("item {item:?} has no attribute record"));
                }
            }
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(PgdError::Inconsistent(offender_list(&missing)));
    }

    Ok(Dataset {
        interactions: indexed,
        user_attrs,
        item_attrs,
        users,
        items,
        user_attr_names,
        item_attr_names,
    })
}

/// Converts one attribute map to per-entity sorted global-ID lists.
fn index_attr_lists(
    map: &BTreeMap<String, BTreeSet<String>>,
    entities: &IdIndex,
    vocab: &IdIndex,
    offset: usize,
    kind: &str,
) -> Result<Vec<Vec<usize>>> {
    let mut lists = vec![Vec::new(); entities.len()];
    for (entity, attrs) in map {
        if attrs.is_empty() {
            return Err(PgdError::Inconsistent(format!(
                "{kind} {entity:?} has an empty attribute set"
            )));
        }
        let e = entities.get(entity).expect("entity keys define the index");
        let mut ids = Vec::with_capacity(attrs.len());
        for a in attrs {
            match vocab.get(a) {
                Some(k) => ids.push(offset + k),
                None => {
                    return Err(PgdError::Inconsistent(format!(
                        "{kind} {entity:?} carries attribute {a:?} missing from the vocabulary"
                    )))
                }
            }
        }
        ids.sort_unstable();
        lists[e] = ids;
    }
    Ok(lists)
}

/// Formats up to five offenders, then a count of the rest.
fn offender_list(items: &[String]) -> String {
    const SHOW: usize = 5;
    if items.len() <= SHOW {
        items.join("; ")
    } else {
        format!(
            "{}; and {} more",
            items[..SHOW].join("; "),
            items.len() - SHOW
        )
    }
}
