//! Teacher-student graph propagation models for cold-start recommendation.
//!
//! The crate builds three linear propagation models from implicit-feedback
//! data with entity attributes:
//!
//! * a *teacher* over the heterogeneous user-item-attribute graph, able to
//!   score warm users against warm items;
//! * a *user-side student* over an item / user-attribute co-occurrence graph,
//!   able to embed users it has never seen from their attributes alone;
//! * an *item-side student*, symmetric to the above for unseen items.
//!
//! Students are trained jointly with the teacher by distilling its embeddings
//! and pairwise scores, so attribute compositions remain compatible with the
//! teacher's latent space. Combining warm and attribute-composed embeddings
//! yields scores for all four recommendation regimes: warm, new-user,
//! new-item, and new-user/new-item.
//!
//! Module layout follows the pipeline: [`data`] (loading and splitting),
//! [`graph`] (sparse adjacency construction), [`propagate`] (forward and
//! adjoint propagation), [`model`] (parameters, forwards, scoring,
//! checkpoints), [`train`] (sampling, losses, optimization), [`eval`]
//! (ranking metrics), and [`synth`] (synthetic clustered data for tests and
//! benchmarks).

pub mod data;
pub mod error;
#[cfg(test)]
pub(crate) mod testutil;
pub mod eval;
pub mod graph;
pub mod model;
pub mod propagate;
pub mod synth;
pub mod train;

pub use error::{PgdError, Result};
