//! Joint optimization of the teacher and both students.
//!
//! Each step recomputes all three forward passes, then accumulates two loss
//! groups at the last layers:
//!
//! * ranking: BPR over sampled `(user, positive, negative)` triples on
//!   teacher scores, plus L2 on the two free entity tables;
//! * distillation: squared distance between warm teacher embeddings and the
//!   students' attribute compositions (weights `lambda` for users, `mu` for
//!   items), plus squared score disagreement on uniformly sampled warm pairs
//!   (weight `eta`).
//!
//! Output gradients are pulled to layer 0 through the exact propagation
//! adjoints and applied with Adam. By default the teacher's outputs act as
//! fixed targets inside the distillation terms (no gradient flows back into
//! the teacher from them); `detach_teacher = false` differentiates them too.
//!
//! All randomness comes from one ChaCha8 stream seeded with `seed + 1`
//! (initialization uses `seed` itself). Per epoch: positive order is
//! shuffled, then per step negatives, then optional distillation entity
//! draws, then score pairs. Equal config and split give bit-identical runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, SplitBundle};
use crate::error::{PgdError, Result};
use crate::eval;
use crate::model::{
    build_operators, forward, init_params, LayerCounts, ModelDims, PgdParams, DEFAULT_DIM,
};
use crate::propagate::{backpropagate, EmbeddingTable};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Everything that controls a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub layers: LayerCounts,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// L2 weight on the free user and item tables.
    pub l2_reg: f64,
    /// Weight of the user-embedding distillation term (lambda).
    pub user_distill_weight: f64,
    /// Weight of the item-embedding distillation term (mu).
    pub item_distill_weight: f64,
    /// Weight of the score distillation term (eta).
    pub score_distill_weight: f64,
    pub negatives_per_positive: usize,
    /// Validate every this many epochs; 0 disables validation entirely.
    pub eval_every: usize,
    /// Users entering the embedding-distillation term per step; 0 means the
    /// users of the current batch.
    pub distill_users_per_step: usize,
    /// Items entering the embedding-distillation term per step; 0 means the
    /// positive and negative items of the current batch.
    pub distill_items_per_step: usize,
    /// Warm pairs entering the score-distillation term per step.
    pub distill_pairs_per_step: usize,
    /// Treat teacher outputs as constants inside the distillation terms.
    pub detach_teacher: bool,
    pub binarize_student_graph: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embedding_dim: DEFAULT_DIM,
            layers: LayerCounts::default(),
            epochs: 50,
            batch_size: 2048,
            learning_rate: 1e-3,
            l2_reg: 1e-4,
            user_distill_weight: 1.0,
            item_distill_weight: 1.0,
            score_distill_weight: 0.01,
            negatives_per_positive: 1,
            eval_every: 1,
            distill_users_per_step: 0,
            distill_items_per_step: 0,
            distill_pairs_per_step: 2048,
            detach_teacher: true,
            binarize_student_graph: false,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// Known preset names, in the order they are documented.
    pub const PRESETS: [&'static str; 3] = ["yelp", "amazon", "xing"];

    /// Overwrites the distillation weights this preset pins; weights the
    /// preset does not mention keep their current values.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        match name {
            "yelp" => {
                self.user_distill_weight = 100.0;
                self.item_distill_weight = 1.0;
                self.score_distill_weight = 0.01;
            }
            "amazon" => {
                self.item_distill_weight = 10.0;
            }
            "xing" => {
                self.user_distill_weight = 1.0;
                self.item_distill_weight = 100.0;
                self.score_distill_weight = 0.001;
            }
            other => {
                return Err(PgdError::Config(format!(
                    "unknown preset {other:?}; expected one of {:?}",
                    Self::PRESETS
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(PgdError::Config("embedding_dim must be at least 1".into()));
        }
        for (name, l) in [
            ("teacher", self.layers.teacher),
            ("user-student", self.layers.user_student),
            ("item-student", self.layers.item_student),
        ] {
            if l == 0 {
                return Err(PgdError::Config(format!(
                    "{name} layer count must be at least 1"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(PgdError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(PgdError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, w) in [
            ("l2_reg", self.l2_reg),
            ("lambda", self.user_distill_weight),
            ("mu", self.item_distill_weight),
            ("eta", self.score_distill_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(PgdError::Config(format!(
                    "{name} must be finite and nonnegative, got {w}"
                )));
            }
        }
        if self.negatives_per_positive == 0 {
            return Err(PgdError::Config(
                "negatives_per_positive must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One BPR comparison: the user should rank `pos` above `neg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// One pass over all positives in shuffled order, pairing each with
/// rejection-sampled negatives. Positives of users who interacted with every
/// item are skipped and counted: they admit no negative.
pub fn sample_epoch_triples(
    positives: &[(usize, usize)],
    items_by_user: &[Vec<usize>],
    num_items: usize,
    negatives_per_positive: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<BprTriple>, usize) {
    let mut order: Vec<usize> = (0..positives.len()).collect();
    order.shuffle(rng);
    let mut triples = Vec::with_capacity(positives.len() * negatives_per_positive);
    let mut skipped = 0;
    for p in order {
        let (user, pos) = positives[p];
        let seen = &items_by_user[user];
        if seen.len() >= num_items {
            skipped += 1;
            continue;
        }
        for _ in 0..negatives_per_positive {
            let neg = loop {
                let candidate = rng.gen_range(0..num_items);
                if seen.binary_search(&candidate).is_err() {
                    break candidate;
                }
            };
            triples.push(BprTriple { user, pos, neg });
        }
    }
    (triples, skipped)
}

/// BPR loss and gradients. Ranking gradients land on the teacher's output
/// tables; the L2 term contributes loss and layer-0 gradients on the free
/// tables directly.
#[derive(Debug, Clone)]
pub struct BprGrads {
    pub loss: f64,
    pub d_user_out: EmbeddingTable,
    pub d_item_out: EmbeddingTable,
    pub d_free_user: EmbeddingTable,
    pub d_free_item: EmbeddingTable,
}

/// `sum(-ln sigmoid(s_pos - s_neg)) + l2_reg * (|U|^2 + |V|^2)` with exact
/// gradients. Scores are dot products of last-layer teacher rows.
pub fn bpr_loss_and_grads(
    triples: &[BprTriple],
    user_out: &EmbeddingTable,
    item_out: &EmbeddingTable,
    free_user: &EmbeddingTable,
    free_item: &EmbeddingTable,
    l2_reg: f64,
) -> BprGrads {
    let mut loss = 0.0;
    let mut d_user_out = EmbeddingTable::zeros(user_out.rows(), user_out.dim());
    let mut d_item_out = EmbeddingTable::zeros(item_out.rows(), item_out.dim());
    for t in triples {
        let u = user_out.row(t.user);
        let vp = item_out.row(t.pos);
        let vn = item_out.row(t.neg);
        let margin: f64 = u
            .iter()
            .zip(vp.iter().zip(vn))
            .map(|(&uu, (&p, &n))| uu * (p - n))
            .sum();
        loss += softplus(-margin);
        // d/d_margin of softplus(-margin) is -sigmoid(-margin).
        let slope = sigmoid(-margin);
        d_user_out.add_scaled_row(t.user, vp, -slope);
        d_user_out.add_scaled_row(t.user, vn, slope);
        d_item_out.add_scaled_row(t.pos, u, -slope);
        d_item_out.add_scaled_row(t.neg, u, slope);
    }
    let mut d_free_user = EmbeddingTable::zeros(free_user.rows(), free_user.dim());
    let mut d_free_item = EmbeddingTable::zeros(free_item.rows(), free_item.dim());
    if l2_reg > 0.0 {
        loss += l2_reg * (free_user.squared_norm() + free_item.squared_norm());
        for (d, &p) in d_free_user.values_mut().iter_mut().zip(free_user.values()) {
            *d = 2.0 * l2_reg * p;
        }
        for (d, &p) in d_free_item.values_mut().iter_mut().zip(free_item.values()) {
            *d = 2.0 * l2_reg * p;
        }
    }
    BprGrads {
        loss,
        d_user_out,
        d_item_out,
        d_free_user,
        d_free_item,
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Distillation weights `(lambda, mu, eta)`.
#[derive(Debug, Clone, Copy)]
pub struct DistillWeights {
    pub user: f64,
    pub item: f64,
    pub score: f64,
}

/// Raw (unweighted) distillation losses and weighted output gradients.
#[derive(Debug, Clone)]
pub struct DistillGrads {
    pub user_loss: f64,
    pub item_loss: f64,
    pub score_loss: f64,
    pub d_teacher_user_out: EmbeddingTable,
    pub d_teacher_item_out: EmbeddingTable,
    pub d_user_student_attr_out: EmbeddingTable,
    pub d_item_student_attr_out: EmbeddingTable,
}

/// Computes the three distillation terms over explicit entity and pair
/// samples. Terms with zero weight are skipped entirely and report a loss
/// of 0. With `detach_teacher`, the teacher-side gradients stay zero.
#[allow(clippy::too_many_arguments)]
pub fn distill_loss_and_grads(
    ds: &Dataset,
    users: &[usize],
    items: &[usize],
    pairs: &[(usize, usize)],
    teacher_user: &EmbeddingTable,
    teacher_item: &EmbeddingTable,
    user_student_attr: &EmbeddingTable,
    item_student_attr: &EmbeddingTable,
    weights: DistillWeights,
    detach_teacher: bool,
) -> DistillGrads {
    let dim = teacher_user.dim();
    let offset = ds.item_attr_offset();
    let mut out = DistillGrads {
        user_loss: 0.0,
        item_loss: 0.0,
        score_loss: 0.0,
        d_teacher_user_out: EmbeddingTable::zeros(teacher_user.rows(), dim),
        d_teacher_item_out: EmbeddingTable::zeros(teacher_item.rows(), dim),
        d_user_student_attr_out: EmbeddingTable::zeros(user_student_attr.rows(), dim),
        d_item_student_attr_out: EmbeddingTable::zeros(item_student_attr.rows(), dim),
    };

    let compose_user = |u: usize| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for &k in &ds.user_attrs[u] {
            for (dst, &x) in v.iter_mut().zip(user_student_attr.row(k)) {
                *dst += x;
            }
        }
        v
    };
    let compose_item = |i: usize| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for &k in &ds.item_attrs[i] {
            for (dst, &x) in v.iter_mut().zip(item_student_attr.row(k - offset)) {
                *dst += x;
            }
        }
        v
    };

    if weights.user > 0.0 {
        for &u in users {
            let composed = compose_user(u);
            let mut residual = teacher_user.row(u).to_vec();
            for (r, c) in residual.iter_mut().zip(&composed) {
                *r -= c;
            }
            out.user_loss += residual.iter().map(|r| r * r).sum::<f64>();
            for &k in &ds.user_attrs[u] {
                out.d_user_student_attr_out
                    .add_scaled_row(k, &residual, -2.0 * weights.user);
            }
            if !detach_teacher {
                out.d_teacher_user_out
                    .add_scaled_row(u, &residual, 2.0 * weights.user);
            }
        }
    }

    if weights.item > 0.0 {
        for &i in items {
            let composed = compose_item(i);
            let mut residual = teacher_item.row(i).to_vec();
            for (r, c) in residual.iter_mut().zip(&composed) {
                *r -= c;
            }
            out.item_loss += residual.iter().map(|r| r * r).sum::<f64>();
            for &k in &ds.item_attrs[i] {
                out.d_item_student_attr_out.add_scaled_row(
                    k - offset,
                    &residual,
                    -2.0 * weights.item,
                );
            }
            if !detach_teacher {
                out.d_teacher_item_out
                    .add_scaled_row(i, &residual, 2.0 * weights.item);
            }
        }
    }

    if weights.score > 0.0 {
        for &(u, i) in pairs {
            let teacher_score = crate::model::dot(teacher_user.row(u), teacher_item.row(i));
            let cu = compose_user(u);
            let ci = compose_item(i);
            let student_score = crate::model::dot(&cu, &ci);
            let gap = teacher_score - student_score;
            out.score_loss += gap * gap;
            let pull = -2.0 * weights.score * gap;
            for &k in &ds.user_attrs[u] {
                out.d_user_student_attr_out.add_scaled_row(k, &ci, pull);
            }
            for &k in &ds.item_attrs[i] {
                out.d_item_student_attr_out
                    .add_scaled_row(k - offset, &cu, pull);
            }
            if !detach_teacher {
                out.d_teacher_user_out
                    .add_scaled_row(u, teacher_item.row(i), 2.0 * weights.score * gap);
                out.d_teacher_item_out
                    .add_scaled_row(i, teacher_user.row(u), 2.0 * weights.score * gap);
            }
        }
    }
    out
}

/// Layer-0 gradients for every trainable table.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub user: EmbeddingTable,
    pub item: EmbeddingTable,
    pub teacher_attr: EmbeddingTable,
    pub user_student_attr: EmbeddingTable,
    pub item_student_attr: EmbeddingTable,
}

/// Pulls all output gradients through the three traces and sums the results
/// per free table. The shared tables collect from two models each: `U` from
/// the teacher and the item-side student, `V` from the teacher and the
/// user-side student.
pub fn backprop_to_params(
    outputs: &crate::model::ForwardOutputs<'_>,
    bpr: &BprGrads,
    distill: &DistillGrads,
) -> Result<ParamGrads> {
    let dims = outputs.dims;
    let d = dims.dim;

    let mut teacher_user_grad = bpr.d_user_out.clone();
    teacher_user_grad.add_assign(&distill.d_teacher_user_out);
    let mut teacher_item_grad = bpr.d_item_out.clone();
    teacher_item_grad.add_assign(&distill.d_teacher_item_out);
    let teacher_out_grad = EmbeddingTable::stack(&[
        &teacher_user_grad,
        &teacher_item_grad,
        &EmbeddingTable::zeros(dims.num_attrs(), d),
    ])?;
    let teacher0 = backpropagate(&outputs.teacher.trace, &teacher_out_grad)?;

    let user_student_out_grad = EmbeddingTable::stack(&[
        &EmbeddingTable::zeros(dims.num_items, d),
        &distill.d_user_student_attr_out,
    ])?;
    let user_student0 = backpropagate(&outputs.user_student.trace, &user_student_out_grad)?;

    let item_student_out_grad = EmbeddingTable::stack(&[
        &EmbeddingTable::zeros(dims.num_users, d),
        &distill.d_item_student_attr_out,
    ])?;
    let item_student0 = backpropagate(&outputs.item_student.trace, &item_student_out_grad)?;

    let mut user = teacher0.slice_rows(0, dims.num_users);
    user.add_assign(&item_student0.slice_rows(0, dims.num_users));
    user.add_assign(&bpr.d_free_user);

    let mut item = teacher0.slice_rows(dims.num_users, dims.num_items);
    item.add_assign(&user_student0.slice_rows(0, dims.num_items));
    item.add_assign(&bpr.d_free_item);

    Ok(ParamGrads {
        user,
        item,
        teacher_attr: teacher0.slice_rows(dims.num_users + dims.num_items, dims.num_attrs()),
        user_student_attr: user_student0.slice_rows(dims.num_items, dims.num_user_attrs),
        item_student_attr: item_student0.slice_rows(dims.num_users, dims.num_item_attrs),
    })
}

/// Adam moment buffers, one pair per table, plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    moments: Vec<(EmbeddingTable, EmbeddingTable)>,
}

impl AdamState {
    pub fn new(params: &PgdParams) -> Self {
        let zero_like =
            |t: &EmbeddingTable| (EmbeddingTable::zeros(t.rows(), t.dim()), EmbeddingTable::zeros(t.rows(), t.dim()));
        AdamState {
            step: 0,
            moments: vec![
                zero_like(&params.user),
                zero_like(&params.item),
                zero_like(&params.teacher_attr),
                zero_like(&params.user_student_attr),
                zero_like(&params.item_student_attr),
            ],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over all five tables with bias correction. Validates
/// every gradient before touching any parameter, so a non-finite gradient
/// leaves the model unchanged.
pub fn adam_step(
    params: &mut PgdParams,
    state: &mut AdamState,
    grads: &ParamGrads,
    learning_rate: f64,
) -> Result<()> {
    let named_grads: [(&'static str, &EmbeddingTable); 5] = [
        ("user", &grads.user),
        ("item", &grads.item),
        ("teacher_attr", &grads.teacher_attr),
        ("user_student_attr", &grads.user_student_attr),
        ("item_student_attr", &grads.item_student_attr),
    ];
    for (table, grad) in &named_grads {
        if !grad.is_finite() {
            return Err(PgdError::NonFiniteGradient { table });
        }
    }

    let t = state.step + 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    let tables: [&mut EmbeddingTable; 5] = [
        &mut params.user,
        &mut params.item,
        &mut params.teacher_attr,
        &mut params.user_student_attr,
        &mut params.item_student_attr,
    ];
    for ((table, (_, grad)), (m, v)) in tables
        .into_iter()
        .zip(named_grads)
        .zip(state.moments.iter_mut())
    {
        let values = table.values_mut();
        let ms = m.values_mut();
        let vs = v.values_mut();
        for (((p, &g), m), v) in values.iter_mut().zip(grad.values()).zip(ms).zip(vs) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    state.step = t;
    Ok(())
}

/// Per-epoch means of the per-step loss sums, plus validation NDCG@20 when
/// this epoch evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub bpr_loss: f64,
    pub user_distill_loss: f64,
    pub item_distill_loss: f64,
    pub score_distill_loss: f64,
    pub val_ndcg20: Option<f64>,
}

impl EpochRecord {
    /// One log line: `epoch=<n> Lr=<v> Lu=<v> Lv=<v> Ls=<v>` with
    /// ` val_ndcg20=<v>` appended on validation epochs.
    pub fn line(&self) -> String {
        let mut s = format!(
            "epoch={} Lr={} Lu={} Lv={} Ls={}",
            self.epoch,
            self.bpr_loss,
            self.user_distill_loss,
            self.item_distill_loss,
            self.score_distill_loss
        );
        if let Some(v) = self.val_ndcg20 {
            s.push_str(&format!(" val_ndcg20={v}"));
        }
        s
    }
}

/// A finished (or cleanly halted) training run.
#[derive(Debug)]
pub struct TrainOutput {
    /// Best-validation parameters when validation ran, final otherwise.
    pub params: PgdParams,
    pub history: Vec<EpochRecord>,
    /// `(epoch, NDCG@20)` of the retained parameters, when validation ran.
    pub best: Option<(usize, f64)>,
    /// Epoch at which a non-finite loss or gradient halted training. The
    /// returned parameters predate the bad update and are finite.
    pub diverged_at: Option<usize>,
    /// Positives dropped because their user had interacted with every item.
    pub skipped_positives: usize,
}

pub fn train(split: &SplitBundle, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with_logger(split, cfg, |_| {})
}

/// Trains, invoking `on_epoch` after each epoch record is finalized.
pub fn train_with_logger(
    split: &SplitBundle,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let ds = &split.train;
    if ds.interactions.is_empty() {
        return Err(PgdError::EmptyDataset(
            "training requires at least one interaction".into(),
        ));
    }

    let dims = ModelDims::from_dataset(ds, cfg.embedding_dim);
    let mut params = init_params(dims, cfg.layers, cfg.seed);
    let ops = build_operators(ds, cfg.binarize_student_graph);
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let items_by_user = ds.items_by_user();
    let weights = DistillWeights {
        user: cfg.user_distill_weight,
        item: cfg.item_distill_weight,
        score: cfg.score_distill_weight,
    };

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64)> = None;
    let mut best_params: Option<PgdParams> = None;
    let mut skipped_positives = 0;
    let mut diverged_at = None;

    'epochs: for epoch in 1..=cfg.epochs {
        let (triples, skipped) = sample_epoch_triples(
            &ds.interactions,
            &items_by_user,
            ds.num_items(),
            cfg.negatives_per_positive,
            &mut rng,
        );
        skipped_positives += skipped;

        let mut sums = [0.0f64; 4];
        let mut steps = 0usize;
        for batch in triples.chunks(cfg.batch_size) {
            let outputs = forward(&params, &ops)?;
            let bpr = bpr_loss_and_grads(
                batch,
                &outputs.teacher.user,
                &outputs.teacher.item,
                &params.user,
                &params.item,
                cfg.l2_reg,
            );
            let users = distill_users(batch, cfg, ds, &mut rng);
            let items = distill_items(batch, cfg, ds, &mut rng);
            let pairs = distill_pairs(cfg, ds, &mut rng);
            let distill = distill_loss_and_grads(
                ds,
                &users,
                &items,
                &pairs,
                &outputs.teacher.user,
                &outputs.teacher.item,
                &outputs.user_student.attr,
                &outputs.item_student.attr,
                weights,
                cfg.detach_teacher,
            );
            let total = bpr.loss
                + weights.user * distill.user_loss
                + weights.item * distill.item_loss
                + weights.score * distill.score_loss;
            if !total.is_finite() {
                diverged_at = Some(epoch);
                break 'epochs;
            }
            let grads = backprop_to_params(&outputs, &bpr, &distill)?;
            match adam_step(&mut params, &mut adam, &grads, cfg.learning_rate) {
                Ok(()) => {}
                Err(PgdError::NonFiniteGradient { .. }) => {
                    diverged_at = Some(epoch);
                    break 'epochs;
                }
                Err(other) => return Err(other),
            }
            sums[0] += bpr.loss;
            sums[1] += distill.user_loss;
            sums[2] += distill.item_loss;
            sums[3] += distill.score_loss;
            steps += 1;
        }

        let evaluate_now = cfg.eval_every > 0
            && !split.val.is_empty()
            && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        let val_ndcg20 = if evaluate_now {
            let outputs = forward(&params, &ops)?;
            Some(eval::validation_ndcg20(split, &outputs)?)
        } else {
            None
        };
        if let Some(v) = val_ndcg20 {
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((epoch, v));
                best_params = Some(params.clone());
            }
        }

        let denom = steps.max(1) as f64;
        let record = EpochRecord {
            epoch,
            bpr_loss: sums[0] / denom,
            user_distill_loss: sums[1] / denom,
            item_distill_loss: sums[2] / denom,
            score_distill_loss: sums[3] / denom,
            val_ndcg20,
        };
        on_epoch(&record);
        history.push(record);
    }

    let params = best_params.unwrap_or(params);
    Ok(TrainOutput {
        params,
        history,
        best,
        diverged_at,
        skipped_positives,
    })
}

/// Users entering the embedding-distillation term this step.
fn distill_users(
    batch: &[BprTriple],
    cfg: &TrainConfig,
    ds: &Dataset,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    if cfg.user_distill_weight == 0.0 {
        return Vec::new();
    }
    sample_or_collect(
        cfg.distill_users_per_step,
        ds.num_users(),
        batch.iter().map(|t| t.user),
        rng,
    )
}

fn distill_items(
    batch: &[BprTriple],
    cfg: &TrainConfig,
    ds: &Dataset,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    if cfg.item_distill_weight == 0.0 {
        return Vec::new();
    }
    sample_or_collect(
        cfg.distill_items_per_step,
        ds.num_items(),
        batch.iter().flat_map(|t| [t.pos, t.neg]),
        rng,
    )
}

fn sample_or_collect(
    requested: usize,
    population: usize,
    from_batch: impl Iterator<Item = usize>,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    if requested == 0 {
        let set: std::collections::BTreeSet<usize> = from_batch.collect();
        set.into_iter().collect()
    } else if requested >= population {
        (0..population).collect()
    } else {
        let mut drawn: Vec<usize> = rand::seq::index::sample(rng, population, requested).into_vec();
        drawn.sort_unstable();
        drawn
    }
}

fn distill_pairs(cfg: &TrainConfig, ds: &Dataset, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    if cfg.score_distill_weight == 0.0 {
        return Vec::new();
    }
    (0..cfg.distill_pairs_per_step)
        .map(|_| (rng.gen_range(0..ds.num_users()), rng.gen_range(0..ds.num_items())))
        .collect()
}
