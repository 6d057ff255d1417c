//! Model parameters, forward passes, scoring, and checkpoints.
//!
//! Five free tables are trained: user embeddings `U` (shared by the teacher
//! and the item-side student), item embeddings `V` (shared by the teacher
//! and the user-side student), teacher attribute embeddings, and one
//! attribute table per student. A forward pass stacks the relevant tables in
//! node order, propagates, and splits the last layer back into families.
//!
//! A new entity never has a trained row; its embedding is the sum of its
//! attribute embeddings from the matching student. Scores are dot products
//! between a user-side and an item-side embedding, picked per task.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{PgdError, Result};
use crate::graph::{normalize_rows, PropagationOperator, StudentGraph, StudentSide, TeacherGraph};
use crate::propagate::{propagate, EmbeddingTable, PropagationTrace};

/// Default embedding width.
pub const DEFAULT_DIM: usize = 64;
/// Standard deviation of the Gaussian initializer (variance 0.01).
pub const INIT_STD: f64 = 0.1;

/// Entity and attribute counts plus embedding width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub num_users: usize,
    pub num_items: usize,
    pub num_user_attrs: usize,
    pub num_item_attrs: usize,
    pub dim: usize,
}

impl ModelDims {
    pub fn from_dataset(ds: &Dataset, dim: usize) -> Self {
        ModelDims {
            num_users: ds.num_users(),
            num_items: ds.num_items(),
            num_user_attrs: ds.num_user_attrs(),
            num_item_attrs: ds.num_item_attrs(),
            dim,
        }
    }

    pub fn num_attrs(&self) -> usize {
        self.num_user_attrs + self.num_item_attrs
    }

    pub fn teacher_nodes(&self) -> usize {
        self.num_users + self.num_items + self.num_attrs()
    }
}

/// Propagation depths for the three models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCounts {
    pub teacher: usize,
    pub user_student: usize,
    pub item_student: usize,
}

impl LayerCounts {
    pub fn uniform(layers: usize) -> Self {
        LayerCounts {
            teacher: layers,
            user_student: layers,
            item_student: layers,
        }
    }
}

impl Default for LayerCounts {
    fn default() -> Self {
        LayerCounts::uniform(2)
    }
}

/// All trainable tables plus the dimensions, depths, and init seed that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PgdParams {
    pub dims: ModelDims,
    pub layers: LayerCounts,
    pub seed: u64,
    /// `M x d`, shared by teacher and item-side student.
    pub user: EmbeddingTable,
    /// `N x d`, shared by teacher and user-side student.
    pub item: EmbeddingTable,
    /// `(D_u + D_v) x d`, teacher attribute rows in global attribute order.
    pub teacher_attr: EmbeddingTable,
    /// `D_u x d`, user-side student attribute rows.
    pub user_student_attr: EmbeddingTable,
    /// `D_v x d`, item-side student attribute rows.
    pub item_student_attr: EmbeddingTable,
}

impl PgdParams {
    /// Short identifier used in reports.
    pub fn summary(&self) -> String {
        format!(
            "M{}-N{}-d{}-L{}.{}.{}-seed{}",
            self.dims.num_users,
            self.dims.num_items,
            self.dims.dim,
            self.layers.teacher,
            self.layers.user_student,
            self.layers.item_student,
            self.seed
        )
    }
}

/// Draws all tables from `N(0, 0.01)` using one ChaCha8 stream.
///
/// Fill order is fixed (user, item, teacher attributes, user-student
/// attributes, item-student attributes; row-major within a table), so equal
/// seeds give bit-identical parameters.
pub fn init_params(dims: ModelDims, layers: LayerCounts, seed: u64) -> PgdParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("constant std is valid");
    let mut fill = |rows: usize| {
        let values: Vec<f64> = (0..rows * dims.dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        EmbeddingTable::from_values(rows, dims.dim, values).expect("sized to match")
    };
    let user = fill(dims.num_users);
    let item = fill(dims.num_items);
    let teacher_attr = fill(dims.num_attrs());
    let user_student_attr = fill(dims.num_user_attrs);
    let item_student_attr = fill(dims.num_item_attrs);
    PgdParams {
        dims,
        layers,
        seed,
        user,
        item,
        teacher_attr,
        user_student_attr,
        item_student_attr,
    }
}

/// The three normalized operators a forward pass needs.
#[derive(Debug, Clone)]
pub struct ModelOps {
    pub teacher: PropagationOperator,
    pub user_student: PropagationOperator,
    pub item_student: PropagationOperator,
}

/// Builds and normalizes all three graphs of a dataset.
pub fn build_operators(ds: &Dataset, binarize_students: bool) -> ModelOps {
    ModelOps {
        teacher: normalize_rows(&TeacherGraph::build(ds).adjacency),
        user_student: normalize_rows(
            &StudentGraph::build(ds, StudentSide::User, binarize_students).adjacency,
        ),
        item_student: normalize_rows(
            &StudentGraph::build(ds, StudentSide::Item, binarize_students).adjacency,
        ),
    }
}

/// Teacher output at the last layer, split by node family.
#[derive(Debug, Clone)]
pub struct TeacherForward<'op> {
    pub user: EmbeddingTable,
    pub item: EmbeddingTable,
    pub attr: EmbeddingTable,
    pub trace: PropagationTrace<'op>,
}

/// Student output at the last layer: entity rows and attribute rows.
#[derive(Debug, Clone)]
pub struct StudentForward<'op> {
    pub side: StudentSide,
    pub entity: EmbeddingTable,
    pub attr: EmbeddingTable,
    pub trace: PropagationTrace<'op>,
}

/// Everything scoring and training read from one set of parameters.
#[derive(Debug, Clone)]
pub struct ForwardOutputs<'op> {
    pub dims: ModelDims,
    pub teacher: TeacherForward<'op>,
    pub user_student: StudentForward<'op>,
    pub item_student: StudentForward<'op>,
}

/// Propagates `[U; V; teacher_attr]` through the teacher operator.
pub fn teacher_forward<'op>(
    params: &PgdParams,
    op: &'op PropagationOperator,
) -> Result<TeacherForward<'op>> {
    let dims = params.dims;
    if op.num_nodes() != dims.teacher_nodes() {
        return Err(PgdError::Shape(format!(
            "teacher operator has {} nodes, model expects {}",
            op.num_nodes(),
            dims.teacher_nodes()
        )));
    }
    let input = EmbeddingTable::stack(&[&params.user, &params.item, &params.teacher_attr])?;
    let trace = propagate(op, &input, params.layers.teacher)?;
    let out = trace.output();
    Ok(TeacherForward {
        user: out.slice_rows(0, dims.num_users),
        item: out.slice_rows(dims.num_users, dims.num_items),
        attr: out.slice_rows(dims.num_users + dims.num_items, dims.num_attrs()),
        trace,
    })
}

/// Propagates a student. The user-side student stacks `[V; E]` over
/// `[items | user attributes]`; the item-side student stacks `[U; F]` over
/// `[users | item attributes]`. Free entity tables are the teacher's.
pub fn student_forward<'op>(
    params: &PgdParams,
    op: &'op PropagationOperator,
    side: StudentSide,
) -> Result<StudentForward<'op>> {
    let (entity_table, attr_table, layers) = match side {
        StudentSide::User => (
            &params.item,
            &params.user_student_attr,
            params.layers.user_student,
        ),
        StudentSide::Item => (
            &params.user,
            &params.item_student_attr,
            params.layers.item_student,
        ),
    };
    let expected = entity_table.rows() + attr_table.rows();
    if op.num_nodes() != expected {
        return Err(PgdError::Shape(format!(
            "student operator has {} nodes, model expects {}",
            op.num_nodes(),
            expected
        )));
    }
    let input = EmbeddingTable::stack(&[entity_table, attr_table])?;
    let trace = propagate(op, &input, layers)?;
    let out = trace.output();
    Ok(StudentForward {
        side,
        entity: out.slice_rows(0, entity_table.rows()),
        attr: out.slice_rows(entity_table.rows(), attr_table.rows()),
        trace,
    })
}

/// Runs all three forward passes.
pub fn forward<'op>(params: &PgdParams, ops: &'op ModelOps) -> Result<ForwardOutputs<'op>> {
    Ok(ForwardOutputs {
        dims: params.dims,
        teacher: teacher_forward(params, &ops.teacher)?,
        user_student: student_forward(params, &ops.user_student, StudentSide::User)?,
        item_student: student_forward(params, &ops.item_student, StudentSide::Item)?,
    })
}

/// Sums the given rows of an attribute table. Rows must be nonempty and in
/// range: an entity without attributes has no embedding at all.
pub fn compose_embedding(table: &EmbeddingTable, rows: &[usize]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(PgdError::Contract(
            "cannot compose an embedding from zero attributes".into(),
        ));
    }
    let mut out = vec![0.0; table.dim()];
    for &r in rows {
        if r >= table.rows() {
            return Err(PgdError::Contract(format!(
                "attribute row {r} out of range for {} rows",
                table.rows()
            )));
        }
        for (dst, &v) in out.iter_mut().zip(table.row(r)) {
            *dst += v;
        }
    }
    Ok(out)
}

/// The four scoring regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TaskKind {
    #[serde(rename = "warm")]
    Warm,
    #[serde(rename = "nu")]
    NewUser,
    #[serde(rename = "ni")]
    NewItem,
    #[serde(rename = "nn")]
    NewBoth,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Warm,
        TaskKind::NewUser,
        TaskKind::NewItem,
        TaskKind::NewBoth,
    ];

    pub fn token(self) -> &'static str {
        match self {
            TaskKind::Warm => "warm",
            TaskKind::NewUser => "nu",
            TaskKind::NewItem => "ni",
            TaskKind::NewBoth => "nn",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "warm" => Ok(TaskKind::Warm),
            "nu" => Ok(TaskKind::NewUser),
            "ni" => Ok(TaskKind::NewItem),
            "nn" => Ok(TaskKind::NewBoth),
            other => Err(PgdError::Config(format!(
                "unknown task {other:?}; expected warm, nu, ni, or nn"
            ))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One side of a score: a trained entity by index, or an unseen entity
/// described by its global attribute IDs.
#[derive(Debug, Clone, Copy)]
pub enum EntityRef<'a> {
    Warm(usize),
    Cold(&'a [usize]),
}

/// Scores a user against an item under a task.
///
/// The task dictates which side must be warm and which cold; passing the
/// wrong reference kind is a contract violation, as is an index outside its
/// family (user attributes live in `[0, D_u)`, item attributes in
/// `[D_u, D_u + D_v)`).
pub fn score(
    outputs: &ForwardOutputs<'_>,
    task: TaskKind,
    user: EntityRef<'_>,
    item: EntityRef<'_>,
) -> Result<f64> {
    let user_vec = match (task, user) {
        (TaskKind::Warm | TaskKind::NewItem, EntityRef::Warm(u)) => {
            if u >= outputs.dims.num_users {
                return Err(PgdError::Contract(format!(
                    "user index {u} out of range for {} users",
                    outputs.dims.num_users
                )));
            }
            outputs.teacher.user.row(u).to_vec()
        }
        (TaskKind::NewUser | TaskKind::NewBoth, EntityRef::Cold(attrs)) => {
            if let Some(&bad) = attrs.iter().find(|&&a| a >= outputs.dims.num_user_attrs) {
                return Err(PgdError::Contract(format!(
                    "attribute {bad} is not a user attribute (D_u = {})",
                    outputs.dims.num_user_attrs
                )));
            }
            compose_embedding(&outputs.user_student.attr, attrs)?
        }
        (task, other) => {
            return Err(PgdError::Contract(format!(
                "task {task} cannot score a {} user reference",
                ref_kind(&other)
            )))
        }
    };
    let item_vec = match (task, item) {
        (TaskKind::Warm | TaskKind::NewUser, EntityRef::Warm(i)) => {
            if i >= outputs.dims.num_items {
                return Err(PgdError::Contract(format!(
                    "item index {i} out of range for {} items",
                    outputs.dims.num_items
                )));
            }
            outputs.teacher.item.row(i).to_vec()
        }
        (TaskKind::NewItem | TaskKind::NewBoth, EntityRef::Cold(attrs)) => {
            let offset = outputs.dims.num_user_attrs;
            let end = offset + outputs.dims.num_item_attrs;
            if let Some(&bad) = attrs.iter().find(|&&a| a < offset || a >= end) {
                return Err(PgdError::Contract(format!(
                    "attribute {bad} is not an item attribute (range [{offset}, {end}))"
                )));
            }
            let local: Vec<usize> = attrs.iter().map(|&a| a - offset).collect();
            compose_embedding(&outputs.item_student.attr, &local)?
        }
        (task, other) => {
            return Err(PgdError::Contract(format!(
                "task {task} cannot score a {} item reference",
                ref_kind(&other)
            )))
        }
    };
    Ok(dot(&user_vec, &item_vec))
}

fn ref_kind(r: &EntityRef<'_>) -> &'static str {
    match r {
        EntityRef::Warm(_) => "warm",
        EntityRef::Cold(_) => "cold",
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PGDCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Serializes parameters: an 8-byte magic, version, dimensions, layer
/// counts, and seed, followed by the five tables row-major as little-endian
/// f64 in fill order.
pub fn write_checkpoint(params: &PgdParams, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for dim in [
        params.dims.num_users,
        params.dims.num_items,
        params.dims.num_user_attrs,
        params.dims.num_item_attrs,
        params.dims.dim,
    ] {
        w.write_all(&(dim as u64).to_le_bytes())?;
    }
    for layers in [
        params.layers.teacher,
        params.layers.user_student,
        params.layers.item_student,
    ] {
        w.write_all(&(layers as u32).to_le_bytes())?;
    }
    w.write_all(&params.seed.to_le_bytes())?;
    for table in [
        &params.user,
        &params.item,
        &params.teacher_attr,
        &params.user_student_attr,
        &params.item_student_attr,
    ] {
        for v in table.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(params: &PgdParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf).expect("writing to a Vec cannot fail");
    fs::write(path, buf).map_err(|e| PgdError::io(path, e))
}

/// Parses a checkpoint, validating the header, the exact byte length, and
/// that every value is finite.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<PgdParams> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(PgdError::Checkpoint("bad magic; not a checkpoint".into()));
    }
    let version = cursor.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(PgdError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let num_users = cursor.u64_as_usize()?;
    let num_items = cursor.u64_as_usize()?;
    let num_user_attrs = cursor.u64_as_usize()?;
    let num_item_attrs = cursor.u64_as_usize()?;
    let dim = cursor.u64_as_usize()?;
    let dims = ModelDims {
        num_users,
        num_items,
        num_user_attrs,
        num_item_attrs,
        dim,
    };
    let layers = LayerCounts {
        teacher: cursor.u32()? as usize,
        user_student: cursor.u32()? as usize,
        item_student: cursor.u32()? as usize,
    };
    let seed = cursor.u64()?;

    let counts = [
        num_users,
        num_items,
        dims.num_attrs(),
        num_user_attrs,
        num_item_attrs,
    ];
    let mut tables = Vec::with_capacity(counts.len());
    for rows in counts {
        let n = rows
            .checked_mul(dim)
            .ok_or_else(|| PgdError::Checkpoint("table size overflows".into()))?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let v = cursor.f64()?;
            if !v.is_finite() {
                return Err(PgdError::Checkpoint("non-finite value in table".into()));
            }
            values.push(v);
        }
        tables.push(EmbeddingTable::from_values(rows, dim, values)?);
    }
    if cursor.pos != bytes.len() {
        return Err(PgdError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - cursor.pos
        )));
    }
    let mut it = tables.into_iter();
    Ok(PgdParams {
        dims,
        layers,
        seed,
        user: it.next().expect("five tables"),
        item: it.next().expect("five tables"),
        teacher_attr: it.next().expect("five tables"),
        user_student_attr: it.next().expect("five tables"),
        item_student_attr: it.next().expect("five tables"),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<PgdParams> {
    let bytes = fs::read(path).map_err(|e| PgdError::io(path, e))?;
    parse_checkpoint(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(PgdError::Checkpoint("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u64_as_usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?)
            .map_err(|_| PgdError::Checkpoint("dimension exceeds platform limits".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::two_by_two;

    fn table(rows: usize, dim: usize, values: &[f64]) -> EmbeddingTable {
        EmbeddingTable::from_values(rows, dim, values.to_vec()).unwrap()
    }

    /// two_by_two params with dim 1 and node-index values, so propagation
    /// arithmetic can be checked by hand.
    fn indexed_params(layers: LayerCounts) -> PgdParams {
        let ds = two_by_two();
        let dims = ModelDims::from_dataset(&ds, 1);
        PgdParams {
            dims,
            layers,
            seed: 0,
            user: table(2, 1, &[0.0, 1.0]),
            item: table(2, 1, &[2.0, 3.0]),
            teacher_attr: table(3, 1, &[4.0, 5.0, 6.0]),
            user_student_attr: table(2, 1, &[10.0, 20.0]),
            item_student_attr: table(1, 1, &[30.0]),
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let dims = ModelDims {
            num_users: 5,
            num_items: 4,
            num_user_attrs: 3,
            num_item_attrs: 2,
            dim: 8,
        };
        let a = init_params(dims, LayerCounts::default(), 9);
        let b = init_params(dims, LayerCounts::default(), 9);
        let c = init_params(dims, LayerCounts::default(), 10);
        assert_eq!(a, b);
        assert_ne!(a.user, c.user);
        assert_eq!(a.user.rows(), 5);
        assert_eq!(a.teacher_attr.rows(), 5);
        assert_eq!(a.item_student_attr.rows(), 2);
    }

    #[test]
    fn init_matches_the_declared_distribution() {
        let dims = ModelDims {
            num_users: 400,
            num_items: 0,
            num_user_attrs: 0,
            num_item_attrs: 0,
            dim: 64,
        };
        let p = init_params(dims, LayerCounts::default(), 3);
        let values = p.user.values();
        let n = values.len() as f64;
        let mean: f64 = values.iter().sum::<f64>() / n;
        let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var.sqrt() - INIT_STD).abs() < 0.005, "std {}", var.sqrt());
    }

    #[test]
    fn teacher_forward_propagates_by_node_family() {
        let ds = two_by_two();
        let ops = build_operators(&ds, false);
        let params = indexed_params(LayerCounts::uniform(1));
        let tf = teacher_forward(&params, &ops.teacher).unwrap();
        // Node values before propagation equal node indices:
        // u0 + (i0 + a0) / 2 = 0 + (2 + 4) / 2.
        assert_eq!(tf.user.row(0), &[3.0]);
        // u1 + (i0 + i1 + a0) / 3 = 1 + 3.
        assert_eq!(tf.user.row(1), &[4.0]);
        // i0 + (u0 + u1 + b0) / 3 = 2 + 7/3.
        assert!((tf.item.row(0)[0] - (2.0 + 7.0 / 3.0)).abs() < 1e-15);
        // Isolated attribute a1 keeps its value.
        assert_eq!(tf.attr.row(1), &[5.0]);
        assert_eq!(tf.trace.depth(), 1);
    }

    #[test]
    fn student_forwards_share_free_entity_tables() {
        let ds = two_by_two();
        let ops = build_operators(&ds, false);
        let params = indexed_params(LayerCounts::uniform(1));
        let sf = student_forward(&params, &ops.user_student, StudentSide::User).unwrap();
        // i0's only student edge is a0 with normalized weight 1:
        // i0 + e0 = 2 + 10.
        assert_eq!(sf.entity.row(0), &[12.0]);
        assert_eq!(sf.entity.row(1), &[13.0]);
        // a0 + (2/3) i0 + (1/3) i1 = 10 + 4/3 + 1.
        assert!((sf.attr.row(0)[0] - (10.0 + 4.0 / 3.0 + 1.0)).abs() < 1e-15);
        // Attribute a1 has no edges.
        assert_eq!(sf.attr.row(1), &[20.0]);

        let sf_item = student_forward(&params, &ops.item_student, StudentSide::Item).unwrap();
        // u1 has two b0 co-occurrences, u0 one; both rows get + f0 whole.
        assert_eq!(sf_item.entity.row(0), &[0.0 + 30.0]);
        assert_eq!(sf_item.entity.row(1), &[1.0 + 30.0]);
    }

    #[test]
    fn forward_on_mismatched_operator_is_a_shape_error() {
        let ds = two_by_two();
        let ops = build_operators(&ds, false);
        let mut params = indexed_params(LayerCounts::default());
        params.dims.num_users = 3;
        params.user = table(3, 1, &[0.0, 1.0, 2.0]);
        assert!(matches!(
            teacher_forward(&params, &ops.teacher),
            Err(PgdError::Shape(_))
        ));
    }

    #[test]
    fn compose_sums_rows() {
        let t = table(3, 2, &[1.0, 2.0, 10.0, 20.0, 100.0, 200.0]);
        assert_eq!(compose_embedding(&t, &[1]).unwrap(), vec![10.0, 20.0]);
        assert_eq!(
            compose_embedding(&t, &[0, 2]).unwrap(),
            vec![101.0, 202.0]
        );
        // Repeated rows are summed again, matching a multiset composition.
        assert_eq!(compose_embedding(&t, &[0, 0]).unwrap(), vec![2.0, 4.0]);
        assert!(compose_embedding(&t, &[]).is_err());
        assert!(compose_embedding(&t, &[3]).is_err());
    }

    #[test]
    fn score_picks_sides_by_task() {
        let ds = two_by_two();
        let ops = build_operators(&ds, false);
        let params = indexed_params(LayerCounts::uniform(1));
        let out = forward(&params, &ops).unwrap();

        let warm = score(&out, TaskKind::Warm, EntityRef::Warm(0), EntityRef::Warm(1)).unwrap();
        assert_eq!(warm, out.teacher.user.row(0)[0] * out.teacher.item.row(1)[0]);

        // New user carrying both user attributes (a1 is isolated).
        let nu = score(
            &out,
            TaskKind::NewUser,
            EntityRef::Cold(&[0, 1]),
            EntityRef::Warm(0),
        )
        .unwrap();
        let composed = out.user_student.attr.row(0)[0] + out.user_student.attr.row(1)[0];
        assert_eq!(nu, composed * out.teacher.item.row(0)[0]);

        // New item carrying b0 (global ID 2).
        let ni = score(
            &out,
            TaskKind::NewItem,
            EntityRef::Warm(1),
            EntityRef::Cold(&[2]),
        )
        .unwrap();
        assert_eq!(ni, out.teacher.user.row(1)[0] * out.item_student.attr.row(0)[0]);

        let nn = score(
            &out,
            TaskKind::NewBoth,
            EntityRef::Cold(&[0]),
            EntityRef::Cold(&[2]),
        )
        .unwrap();
        assert_eq!(
            nn,
            out.user_student.attr.row(0)[0] * out.item_student.attr.row(0)[0]
        );
    }

    #[test]
    fn score_rejects_mismatched_references() {
        let ds = two_by_two();
        let ops = build_operators(&ds, false);
        let params = indexed_params(LayerCounts::uniform(1));
        let out = forward(&params, &ops).unwrap();

        for (task, user, item) in [
            (TaskKind::Warm, EntityRef::Cold(&[0][..]), EntityRef::Warm(0)),
            (TaskKind::Warm, EntityRef::Warm(0), EntityRef::Cold(&[2][..])),
            (TaskKind::NewUser, EntityRef::Warm(0), EntityRef::Warm(0)),
            (TaskKind::NewItem, EntityRef::Warm(0), EntityRef::Warm(0)),
            // Item attribute used as a user attribute and vice versa.
            (TaskKind::NewUser, EntityRef::Cold(&[2][..]), EntityRef::Warm(0)),
            (TaskKind::NewItem, EntityRef::Warm(0), EntityRef::Cold(&[0][..])),
        ] {
            assert!(
                matches!(score(&out, task, user, item), Err(PgdError::Contract(_))),
                "{task:?}"
            );
        }
        assert!(matches!(
            score(&out, TaskKind::Warm, EntityRef::Warm(9), EntityRef::Warm(0)),
            Err(PgdError::Contract(_))
        ));
    }

    #[test]
    fn zero_embedding_scores_zero() {
        let ds = two_by_two();
        let ops = build_operators(&ds, false);
        let mut params = indexed_params(LayerCounts::uniform(1));
        params.user = EmbeddingTable::zeros(2, 1);
        params.item = EmbeddingTable::zeros(2, 1);
        params.teacher_attr = EmbeddingTable::zeros(3, 1);
        let out = forward(&params, &ops).unwrap();
        let s = score(&out, TaskKind::Warm, EntityRef::Warm(0), EntityRef::Warm(0)).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dims = ModelDims {
            num_users: 3,
            num_items: 4,
            num_user_attrs: 2,
            num_item_attrs: 2,
            dim: 5,
        };
        let params = init_params(dims, LayerCounts { teacher: 3, user_student: 1, item_student: 2 }, 77);
        let mut bytes = Vec::new();
        write_checkpoint(&params, &mut bytes).unwrap();
        let loaded = parse_checkpoint(&bytes).unwrap();
        assert_eq!(loaded, params);

        let mut bytes2 = Vec::new();
        write_checkpoint(&loaded, &mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dims = ModelDims {
            num_users: 2,
            num_items: 2,
            num_user_attrs: 1,
            num_item_attrs: 1,
            dim: 2,
        };
        let params = init_params(dims, LayerCounts::default(), 1);
        let mut bytes = Vec::new();
        write_checkpoint(&params, &mut bytes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            parse_checkpoint(&bad_magic),
            Err(PgdError::Checkpoint(_))
        ));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            parse_checkpoint(truncated),
            Err(PgdError::Checkpoint(_))
        ));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(
            parse_checkpoint(&trailing),
            Err(PgdError::Checkpoint(_))
        ));

        let mut nan = bytes.clone();
        let tail = nan.len() - 8;
        nan[tail..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(parse_checkpoint(&nan), Err(PgdError::Checkpoint(_))));
    }

    #[test]
    fn save_and_load_via_files() {
        let dims = ModelDims {
            num_users: 2,
            num_items: 2,
            num_user_attrs: 2,
            num_item_attrs: 1,
            dim: 3,
        };
        let params = init_params(dims, LayerCounts::default(), 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&params, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), params);
    }
}
