//! Dense oracles: adjacency matrices built straight from dataset semantics,
//! quadratic propagation, and helpers for comparing against the library.
//!
//! Shared between integration targets; not every target uses every helper.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pgd_core::data::{build_dataset, Dataset};
use pgd_core::propagate::EmbeddingTable;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(rows: usize, cols: usize) -> Mat {
    vec![vec![0.0; cols]; rows]
}

/// Unit-weight heterogeneous adjacency over `[users | items | attributes]`.
pub fn dense_teacher(ds: &Dataset) -> Mat {
    let m = ds.num_users();
    let n = ds.num_items();
    let total = m + n + ds.num_attrs();
    let mut a = zeros(total, total);
    for &(u, i) in &ds.interactions {
        a[u][m + i] = 1.0;
        a[m + i][u] = 1.0;
    }
    for (u, attrs) in ds.user_attrs.iter().enumerate() {
        for &k in attrs {
            a[u][m + n + k] = 1.0;
            a[m + n + k][u] = 1.0;
        }
    }
    for (i, attrs) in ds.item_attrs.iter().enumerate() {
        for &k in attrs {
            a[m + i][m + n + k] = 1.0;
            a[m + n + k][m + i] = 1.0;
        }
    }
    a
}

/// Co-occurrence adjacency over `[items | user attributes]`: entry (j, k)
/// counts interactions of item j with users carrying attribute k.
pub fn dense_user_student(ds: &Dataset, binarize: bool) -> Mat {
    let n = ds.num_items();
    let du = ds.num_user_attrs();
    let mut a = zeros(n + du, n + du);
    for &(u, j) in &ds.interactions {
        for &k in &ds.user_attrs[u] {
            a[j][n + k] += 1.0;
        }
    }
    finish_student(&mut a, n, binarize);
    a
}

/// Co-occurrence adjacency over `[users | item attributes]`.
pub fn dense_item_student(ds: &Dataset, binarize: bool) -> Mat {
    let m = ds.num_users();
    let dv = ds.num_item_attrs();
    let offset = ds.item_attr_offset();
    let mut a = zeros(m + dv, m + dv);
    for &(u, j) in &ds.interactions {
        for &k in &ds.item_attrs[j] {
            a[u][m + k - offset] += 1.0;
        }
    }
    finish_student(&mut a, m, binarize);
    a
}

fn finish_student(a: &mut Mat, entities: usize, binarize: bool) {
    let total = a.len();
    for row in a.iter_mut().take(entities) {
        for w in row.iter_mut().skip(entities) {
            if binarize && *w > 0.0 {
                *w = 1.0;
            }
        }
    }
    for e in 0..entities {
        for k in entities..total {
            a[k][e] = a[e][k];
        }
    }
}

/// Divides each row by its weight sum; zero rows stay zero.
pub fn normalize_dense(a: &Mat) -> Mat {
    a.iter()
        .map(|row| {
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                row.clone()
            } else {
                row.iter().map(|w| w / sum).collect()
            }
        })
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    let mut out = zeros(a[0].len(), a.len());
    for (r, row) in a.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            out[c][r] = w;
        }
    }
    out
}

/// `layers` applications of `x <- x + a x`.
pub fn dense_propagate(a: &Mat, x: &Mat, layers: usize) -> Mat {
    let mut cur = x.to_vec();
    for _ in 0..layers {
        let mut next = cur.clone();
        for (r, row) in a.iter().enumerate() {
            for (c, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    for d in 0..cur[c].len() {
                        next[r][d] += w * cur[c][d];
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

pub fn table_to_mat(t: &EmbeddingTable) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut worst = 0.0f64;
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len());
        for (&x, &y) in ra.iter().zip(rb) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// Vertically concatenates rows of the given matrices.
pub fn vstack(mats: &[&Mat]) -> Mat {
    let mut out = Vec::new();
    for m in mats {
        out.extend(m.iter().cloned());
    }
    out
}

/// An irregular random dataset: every entity is attributed (1 to 3 user
/// attributes, 1 to 2 item attributes), interactions are distinct uniform
/// pairs. Zero-padded names make lexicographic ids equal generation order.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    users: usize,
    items: usize,
    user_attrs: usize,
    item_attrs: usize,
    interactions: usize,
) -> Dataset {
    let mut user_map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for u in 0..users {
        let count = rng.gen_range(1..=3.min(user_attrs));
        let mut set = BTreeSet::new();
        while set.len() < count {
            set.insert(format!("ua{:02}", rng.gen_range(0..user_attrs)));
        }
        user_map.insert(format!("u{u:03}"), set);
    }
    let mut item_map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for i in 0..items {
        let count = rng.gen_range(1..=2.min(item_attrs));
        let mut set = BTreeSet::new();
        while set.len() < count {
            set.insert(format!("ia{:02}", rng.gen_range(0..item_attrs)));
        }
        item_map.insert(format!("i{i:03}"), set);
    }
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    while pairs.len() < interactions.min(users * items) {
        pairs.insert((rng.gen_range(0..users), rng.gen_range(0..items)));
    }
    let pairs: Vec<(String, String)> = pairs
        .into_iter()
        .map(|(u, i)| (format!("u{u:03}"), format!("i{i:03}")))
        .collect();
    build_dataset(&pairs, &user_map, &item_map).unwrap()
}
