//! Synthetic clustered interaction data for tests and benchmarks.
//!
//! Users and items are assigned round-robin to latent clusters. Every
//! interaction stays inside its user's cluster, so cluster membership fully
//! determines relevance. Attributes are the only lossy channel: each entity
//! carries one attribute per "slot", drawn from its own cluster's vocabulary
//! with probability `attr_fidelity` and from a uniformly random other
//! cluster otherwise. A model that recovers cluster structure from
//! attributes alone can therefore be measured against chance.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{build_dataset, Dataset};

/// Shape and noise parameters for [`clustered`].
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    /// Independent attribute slots per entity; distinct vocabularies, so an
    /// entity's attribute set always has exactly this many elements.
    pub attr_slots: usize,
    /// Probability that a slot's attribute names the entity's own cluster.
    pub attr_fidelity: f64,
    /// Distinct items sampled per user, capped at the user's cluster size.
    pub interactions_per_user: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 400,
            items: 400,
            clusters: 4,
            attr_slots: 3,
            attr_fidelity: 0.9,
            interactions_per_user: 20,
            seed: 17,
        }
    }
}

/// String-level synthetic data: interaction pairs plus attribute maps, in
/// the same shape the file loaders produce.
pub struct SyntheticData {
    pub interactions: Vec<(String, String)>,
    pub user_attrs: BTreeMap<String, BTreeSet<String>>,
    pub item_attrs: BTreeMap<String, BTreeSet<String>>,
}

/// Generates clustered data at the string level.
///
/// Entity IDs are zero-padded, so lexicographic indexing preserves the
/// generation order and `index % clusters` recovers an entity's cluster.
pub fn clustered_raw(spec: &SyntheticSpec) -> SyntheticData {
    assert!(spec.clusters >= 1 && spec.users >= 1 && spec.items >= 1);
    assert!(spec.attr_slots >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let uw = digits(spec.users);
    let iw = digits(spec.items);

    let mut user_attrs = BTreeMap::new();
    for u in 0..spec.users {
        user_attrs.insert(
            format!("u{u:0uw$}"),
            draw_attrs(&mut rng, spec, u % spec.clusters, "ua"),
        );
    }
    let mut item_attrs = BTreeMap::new();
    for i in 0..spec.items {
        item_attrs.insert(
            format!("i{i:0iw$}"),
            draw_attrs(&mut rng, spec, i % spec.clusters, "ia"),
        );
    }

    // Items of each cluster, in index order.
    let mut cluster_items: Vec<Vec<usize>> = vec![Vec::new(); spec.clusters];
    for i in 0..spec.items {
        cluster_items[i % spec.clusters].push(i);
    }

    let mut interactions = Vec::with_capacity(spec.users * spec.interactions_per_user);
    for u in 0..spec.users {
        let pool = &cluster_items[u % spec.clusters];
        let count = spec.interactions_per_user.min(pool.len());
        for p in rand::seq::index::sample(&mut rng, pool.len(), count) {
            interactions.push((format!("u{u:0uw$}"), format!("i{:0iw$}", pool[p])));
        }
    }

    SyntheticData {
        interactions,
        user_attrs,
        item_attrs,
    }
}

/// Generates clustered data and assembles it into a [`Dataset`].
pub fn clustered(spec: &SyntheticSpec) -> Dataset {
    let data = clustered_raw(spec);
    build_dataset(&data.interactions, &data.user_attrs, &data.item_attrs)
        .expect("synthetic data is consistent by construction")
}

fn draw_attrs(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    own_cluster: usize,
    prefix: &str,
) -> BTreeSet<String> {
    (0..spec.attr_slots)
        .map(|slot| {
            let cluster = if spec.clusters == 1 || rng.gen_bool(spec.attr_fidelity) {
                own_cluster
            } else {
                // Uniform over the other clusters.
                let mut c = rng.gen_range(0..spec.clusters - 1);
                if c >= own_cluster {
                    c += 1;
                }
                c
            };
            format!("{prefix}{slot}x{cluster}")
        })
        .collect()
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}
