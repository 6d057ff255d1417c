//! Sparse graph construction over users, items, and attributes.
//!
//! Three undirected graphs drive the models:
//!
//! * teacher: nodes `[users | items | attributes]` with unit-weight edges
//!   for interactions and attribute ownership;
//! * user-side student: nodes `[items | user attributes]`, where the weight
//!   between item `j` and user attribute `k` counts interactions of `j` with
//!   users carrying `k`;
//! * item-side student: nodes `[users | item attributes]`, symmetric.
//!
//! Adjacency is CSR with rows sorted by `(row, col)`, structurally
//! symmetric, with no self-loops and no stored zeros. Row-normalizing by
//! weighted degree yields the propagation operator; zero-degree rows stay
//! zero rows.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::{PgdError, Result};

/// Compressed sparse row adjacency with per-row weighted degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    column_indices: Vec<usize>,
    edge_weights: Vec<f64>,
    degree: Vec<f64>,
}

impl SparseAdjacency {
    /// Builds CSR from directed entries. Entries may arrive in any order;
    /// undirected graphs must include both directions. Rejects out-of-range
    /// indices, self-loops, duplicate entries, and weights that are not
    /// strictly positive and finite.
    pub fn from_entries(num_nodes: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, w) in &entries {
            if r >= num_nodes || c >= num_nodes {
                return Err(PgdError::Contract(format!(
                    "entry ({r}, {c}) out of range for {num_nodes} nodes"
                )));
            }
            if r == c {
                return Err(PgdError::Contract(format!("self-loop at node {r}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(PgdError::Contract(format!(
                    "entry ({r}, {c}) has invalid weight {w}"
                )));
            }
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(PgdError::Contract(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }

        let mut row_offsets = vec![0usize; num_nodes + 1];
        for &(r, _, _) in &entries {
            row_offsets[r + 1] += 1;
        }
        for r in 0..num_nodes {
            row_offsets[r + 1] += row_offsets[r];
        }
        let mut column_indices = Vec::with_capacity(entries.len());
        let mut edge_weights = Vec::with_capacity(entries.len());
        let mut degree = vec![0.0; num_nodes];
        for (r, c, w) in entries {
            column_indices.push(c);
            edge_weights.push(w);
            degree[r] += w;
        }
        Ok(SparseAdjacency {
            num_nodes,
            row_offsets,
            column_indices,
            edge_weights,
            degree,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Stored directed entries; an undirected edge counts twice.
    pub fn nnz(&self) -> usize {
        self.column_indices.len()
    }

    /// Column indices and weights of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.column_indices[span.clone()], &self.edge_weights[span])
    }

    /// Weighted degree per row (sum of row weights).
    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    /// True iff entry `(r, c)` implies entry `(c, r)` with equal weight.
    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes).all(|r| {
            let (cols, weights) = self.row(r);
            cols.iter()
                .zip(weights)
                .all(|(&c, &w)| self.weight_of(c, r) == Some(w))
        })
    }

    fn weight_of(&self, r: usize, c: usize) -> Option<f64> {
        let (cols, weights) = self.row(r);
        cols.binary_search(&c).ok().map(|p| weights[p])
    }

    /// Debug dump: one `row\tcol\tweight` line per stored entry, sorted by
    /// `(row, col)`. Weights use the shortest round-trip decimal form, so
    /// equal graphs dump to identical bytes.
    pub fn entries_tsv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.num_nodes {
            let (cols, weights) = self.row(r);
            for (&c, &w) in cols.iter().zip(weights) {
                let _ = writeln!(out, "{r}\t{c}\t{w}");
            }
        }
        out
    }
}

/// Row-normalized adjacency, ready for propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperator {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    column_indices: Vec<usize>,
    weights: Vec<f64>,
}

impl PropagationOperator {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn nnz(&self) -> usize {
        self.column_indices.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.column_indices[span.clone()], &self.weights[span])
    }

    /// An operator with no edges over `num_nodes` nodes.
    pub fn identityless(num_nodes: usize) -> Self {
        PropagationOperator {
            num_nodes,
            row_offsets: vec![0; num_nodes + 1],
            column_indices: Vec::new(),
            weights: Vec::new(),
        }
    }
}

/// Divides each row by its weighted degree. Rows with no entries (degree
/// zero) remain empty, so propagation there reduces to the residual term.
pub fn normalize_rows(adj: &SparseAdjacency) -> PropagationOperator {
    let mut weights = Vec::with_capacity(adj.nnz());
    for r in 0..adj.num_nodes {
        let (_, row_weights) = adj.row(r);
        let d = adj.degree[r];
        for &w in row_weights {
            weights.push(w / d);
        }
    }
    PropagationOperator {
        num_nodes: adj.num_nodes,
        row_offsets: adj.row_offsets.clone(),
        column_indices: adj.column_indices.clone(),
        weights,
    }
}

/// Heterogeneous graph over `[users | items | attributes]`.
///
/// Node layout: user `u` at `u`, item `j` at `M + j`, global attribute `k`
/// at `M + N + k`. All edges have weight 1.
#[derive(Debug, Clone)]
pub struct TeacherGraph {
    pub adjacency: SparseAdjacency,
    pub num_users: usize,
    pub num_items: usize,
    pub num_attrs: usize,
}

impl TeacherGraph {
    pub fn build(ds: &Dataset) -> Self {
        let m = ds.num_users();
        let n = ds.num_items();
        let d = ds.num_attrs();
        let mut entries = Vec::new();
        let mut push_undirected = |a: usize, b: usize| {
            entries.push((a, b, 1.0));
            entries.push((b, a, 1.0));
        };
        for &(u, i) in &ds.interactions {
            push_undirected(u, m + i);
        }
        for (u, attrs) in ds.user_attrs.iter().enumerate() {
            for &k in attrs {
                push_undirected(u, m + n + k);
            }
        }
        for (i, attrs) in ds.item_attrs.iter().enumerate() {
            for &k in attrs {
                push_undirected(m + i, m + n + k);
            }
        }
        let adjacency = SparseAdjacency::from_entries(m + n + d, entries)
            .expect("dataset invariants rule out duplicates and self-loops");
        TeacherGraph {
            adjacency,
            num_users: m,
            num_items: n,
            num_attrs: d,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items + self.num_attrs
    }
}

/// Which side a student graph serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudentSide {
    /// Entities are items; attributes are user attributes. Embeds new users.
    User,
    /// Entities are users; attributes are item attributes. Embeds new items.
    Item,
}

/// Bipartite co-occurrence graph over `[entities | attributes]`.
///
/// The weight between entity `e` and attribute `a` counts the interactions
/// of `e` whose counterpart carries `a`; `binarize` collapses counts to 1.
/// Attribute node IDs are local to the family: attribute `a` sits at node
/// `num_entities + a`.
#[derive(Debug, Clone)]
pub struct StudentGraph {
    pub side: StudentSide,
    pub adjacency: SparseAdjacency,
    pub num_entities: usize,
    pub num_attrs: usize,
}

impl StudentGraph {
    pub fn build(ds: &Dataset, side: StudentSide, binarize: bool) -> Self {
        let (num_entities, num_attrs) = match side {
            StudentSide::User => (ds.num_items(), ds.num_user_attrs()),
            StudentSide::Item => (ds.num_users(), ds.num_item_attrs()),
        };
        let offset = ds.item_attr_offset();
        let mut counts: HashMap<(usize, usize), f64> = HashMap::new();
        for &(u, i) in &ds.interactions {
            match side {
                StudentSide::User => {
                    for &k in &ds.user_attrs[u] {
                        *counts.entry((i, k)).or_insert(0.0) += 1.0;
                    }
                }
                StudentSide::Item => {
                    for &k in &ds.item_attrs[i] {
                        *counts.entry((u, k - offset)).or_insert(0.0) += 1.0;
                    }
                }
            }
        }
        let mut entries = Vec::with_capacity(counts.len() * 2);
        for ((e, a), count) in counts {
            let w = if binarize { 1.0 } else { count };
            entries.push((e, num_entities + a, w));
            entries.push((num_entities + a, e, w));
        }
        let adjacency = SparseAdjacency::from_entries(num_entities + num_attrs, entries)
            .expect("count aggregation yields unique positive entries");
        StudentGraph {
            side,
            adjacency,
            num_entities,
            num_attrs,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_entities + self.num_attrs
    }
}
