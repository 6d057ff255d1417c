//! Top-K ranking evaluation with hit rate and NDCG over full candidate sets.
//!
//! Every task ranks all legal candidates:
//!
//! * warm: validation users against all trained items, minus the items each
//!   user already interacted with in train;
//! * new user: attribute-composed users against all trained items;
//! * new item: trained users against all attribute-composed new items;
//! * new both: composed users against composed items.
//!
//! A unit is one ranking: by default a user with its full relevant set, or
//! one held-out pair when `per_interaction` is set. Units evaluate in
//! parallel and reduce in index order, so reports do not depend on the
//! thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{NewEntity, SplitBundle};
use crate::error::{PgdError, Result};
use crate::model::{
    build_operators, compose_embedding, dot, forward, score, EntityRef, ForwardOutputs,
    ModelDims, PgdParams, TaskKind,
};
use crate::propagate::EmbeddingTable;

/// What to evaluate and how to aggregate it.
#[derive(Debug, Clone)]
pub struct EvalSpec {
    pub task: TaskKind,
    /// Cutoff depths, each reported separately.
    pub cutoffs: Vec<usize>,
    /// One unit per held-out pair instead of one per user.
    pub per_interaction: bool,
    /// Must match the flag the checkpoint was trained with so the student
    /// graphs are rebuilt identically.
    pub binarize_student_graph: bool,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            task: TaskKind::Warm,
            cutoffs: vec![10, 20, 50],
            per_interaction: false,
            binarize_student_graph: false,
        }
    }
}

impl EvalSpec {
    fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() {
            return Err(PgdError::Config("at least one cutoff is required".into()));
        }
        if let Some(&bad) = self.cutoffs.iter().find(|&&k| k == 0) {
            return Err(PgdError::Config(format!("cutoff must be positive, got {bad}")));
        }
        Ok(())
    }
}

/// Mean metrics at one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMetrics {
    pub k: usize,
    pub hit_rate: f64,
    pub ndcg: f64,
}

/// Aggregated evaluation result.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub metrics: Vec<KMetrics>,
    /// Units that entered the means.
    pub units: usize,
    /// Units dropped: no relevant items, no candidates, or a new user
    /// without attributes.
    pub skipped: usize,
    pub checkpoint_id: String,
    /// Measured by [`evaluate`]; excluded from serialization so equal inputs
    /// serialize to equal reports.
    #[serde(skip)]
    pub wall_secs: f64,
}

impl EvalReport {
    /// One line per cutoff: `task=<t> K=<k> hr=<v> ndcg=<v> users=<n>`.
    pub fn lines(&self) -> Vec<String> {
        self.metrics
            .iter()
            .map(|m| {
                format!(
                    "task={} K={} hr={} ndcg={} users={}",
                    self.task, m.k, m.hit_rate, m.ndcg, self.units
                )
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Fraction of the relevant set recovered in the top `k`.
pub fn hit_rate_at_k(ranked: &[usize], relevant: &BTreeSet<usize>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|c| relevant.contains(c))
        .count();
    hits as f64 / relevant.len() as f64
}

/// DCG of the top `k` against the ideal DCG of the whole relevant set, with
/// gain 1 for relevant candidates and the standard `1/log2(position + 1)`
/// discount. Normalizing by the full ideal (rather than its top-`k`
/// truncation) keeps the value nondecreasing in `k`.
pub fn ndcg_at_k(ranked: &[usize], relevant: &BTreeSet<usize>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, c)| relevant.contains(c))
        .map(|(p, _)| 1.0 / ((p + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..relevant.len())
        .map(|p| 1.0 / ((p + 2) as f64).log2())
        .sum();
    dcg / ideal
}

/// Ranks candidates for one query through [`score`], returning positions
/// into `candidates` by descending score, ties by ascending position.
pub fn rank_candidates(
    outputs: &ForwardOutputs<'_>,
    task: TaskKind,
    user: EntityRef<'_>,
    candidates: &[EntityRef<'_>],
) -> Result<Vec<usize>> {
    let mut scored = Vec::with_capacity(candidates.len());
    for (idx, &cand) in candidates.iter().enumerate() {
        scored.push((idx, score(outputs, task, user, cand)?));
    }
    Ok(order_desc(scored))
}

/// Ranks raw scores: indices by descending score, ties by ascending index.
pub fn rank_scores(scores: &[f64]) -> Vec<usize> {
    order_desc(scores.iter().copied().enumerate().collect())
}

fn order_desc(mut scored: Vec<(usize, f64)>) -> Vec<usize> {
    scored.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().map(|(idx, _)| idx).collect()
}

/// Candidate embeddings: warm rows of a propagated table, or composed
/// vectors for new items.
enum Pool<'a> {
    Table(&'a EmbeddingTable),
    Rows(Vec<Vec<f64>>),
}

impl Pool<'_> {
    fn len(&self) -> usize {
        match self {
            Pool::Table(t) => t.rows(),
            Pool::Rows(r) => r.len(),
        }
    }

    fn row(&self, idx: usize) -> &[f64] {
        match self {
            Pool::Table(t) => t.row(idx),
            Pool::Rows(r) => &r[idx],
        }
    }
}

/// One ranking job: a query vector, its relevant candidate ids, and sorted
/// candidate ids to drop.
struct Unit {
    query: Vec<f64>,
    relevant: BTreeSet<usize>,
    excluded: Vec<usize>,
}

fn rank_pool(unit: &Unit, pool: &Pool<'_>) -> Vec<usize> {
    let scored: Vec<(usize, f64)> = (0..pool.len())
        .filter(|j| unit.excluded.binary_search(j).is_err())
        .map(|j| (j, dot(&unit.query, pool.row(j))))
        .collect();
    order_desc(scored)
}

fn grouped(pairs: &[(usize, usize)]) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut map: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(a, b) in pairs {
        map.entry(a).or_default().insert(b);
    }
    map
}

/// Composes one new user; `None` (a skip) when it carries no attributes.
fn compose_new_user(outputs: &ForwardOutputs<'_>, entity: &NewEntity) -> Result<Option<Vec<f64>>> {
    if entity.attrs.is_empty() {
        return Ok(None);
    }
    compose_embedding(&outputs.user_student.attr, &entity.attrs).map(Some)
}

/// Composes every new item. Attribute-less new items are rejected: they are
/// candidates, not units, and cannot be skipped without renumbering.
fn compose_new_items(outputs: &ForwardOutputs<'_>, items: &[NewEntity]) -> Result<Vec<Vec<f64>>> {
    let offset = outputs.dims.num_user_attrs;
    items
        .iter()
        .enumerate()
        .map(|(ord, e)| {
            if e.attrs.is_empty() {
                return Err(PgdError::Contract(format!(
                    "new item {ord} has no attributes and cannot be embedded"
                )));
            }
            let local: Vec<usize> = e
                .attrs
                .iter()
                .map(|&a| {
                    a.checked_sub(offset).ok_or_else(|| {
                        PgdError::Inconsistent(format!(
                            "new item {ord} lists attribute {a}, below the item block start {offset}"
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            compose_embedding(&outputs.item_student.attr, &local)
        })
        .collect()
}

struct UnitSet<'a> {
    units: Vec<Unit>,
    pool: Pool<'a>,
    /// Units dropped before ranking (new users without attributes).
    pre_skipped: usize,
}

fn build_units<'a>(
    split: &SplitBundle,
    outputs: &'a ForwardOutputs<'_>,
    spec: &EvalSpec,
) -> Result<UnitSet<'a>> {
    let dims = outputs.dims;
    let check_user = |u: usize| -> Result<()> {
        if u >= dims.num_users {
            return Err(PgdError::Inconsistent(format!(
                "held-out pair references train user {u}, but the model has {} users",
                dims.num_users
            )));
        }
        Ok(())
    };
    let check_item = |i: usize| -> Result<()> {
        if i >= dims.num_items {
            return Err(PgdError::Inconsistent(format!(
                "held-out pair references train item {i}, but the model has {} items",
                dims.num_items
            )));
        }
        Ok(())
    };
    let check_ordinal = |o: usize, total: usize, what: &str| -> Result<()> {
        if o >= total {
            return Err(PgdError::Inconsistent(format!(
                "held-out pair references {what} ordinal {o}, but the split holds {total}"
            )));
        }
        Ok(())
    };

    let mut units = Vec::new();
    let mut pre_skipped = 0;
    let pool = match spec.task {
        TaskKind::Warm => {
            let items_by_user = split.train.items_by_user();
            let mut push = |u: usize, relevant: BTreeSet<usize>| -> Result<()> {
                check_user(u)?;
                for &i in &relevant {
                    check_item(i)?;
                }
                units.push(Unit {
                    query: outputs.teacher.user.row(u).to_vec(),
                    relevant,
                    excluded: items_by_user[u].clone(),
                });
                Ok(())
            };
            if spec.per_interaction {
                for &(u, i) in &split.val {
                    push(u, BTreeSet::from([i]))?;
                }
            } else {
                for (u, relevant) in grouped(&split.val) {
                    push(u, relevant)?;
                }
            }
            Pool::Table(&outputs.teacher.item)
        }
        TaskKind::NewUser => {
            let mut push = |ord: usize, relevant: BTreeSet<usize>| -> Result<()> {
                check_ordinal(ord, split.new_users.len(), "new-user")?;
                for &i in &relevant {
                    check_item(i)?;
                }
                match compose_new_user(outputs, &split.new_users[ord])? {
                    Some(query) => units.push(Unit {
                        query,
                        relevant,
                        excluded: Vec::new(),
                    }),
                    None => pre_skipped += 1,
                }
                Ok(())
            };
            if spec.per_interaction {
                for &(ord, i) in &split.test_new_user {
                    push(ord, BTreeSet::from([i]))?;
                }
            } else {
                for (ord, relevant) in grouped(&split.test_new_user) {
                    push(ord, relevant)?;
                }
            }
            Pool::Table(&outputs.teacher.item)
        }
        TaskKind::NewItem => {
            let composed = compose_new_items(outputs, &split.new_items)?;
            let total = composed.len();
            let mut push = |u: usize, relevant: BTreeSet<usize>| -> Result<()> {
                check_user(u)?;
                for &o in &relevant {
                    check_ordinal(o, total, "new-item")?;
                }
                units.push(Unit {
                    query: outputs.teacher.user.row(u).to_vec(),
                    relevant,
                    excluded: Vec::new(),
                });
                Ok(())
            };
            if spec.per_interaction {
                for &(u, o) in &split.test_new_item {
                    push(u, BTreeSet::from([o]))?;
                }
            } else {
                for (u, relevant) in grouped(&split.test_new_item) {
                    push(u, relevant)?;
                }
            }
            Pool::Rows(composed)
        }
        TaskKind::NewBoth => {
            let composed = compose_new_items(outputs, &split.new_items)?;
            let total = composed.len();
            let mut push = |ord: usize, relevant: BTreeSet<usize>| -> Result<()> {
                check_ordinal(ord, split.new_users.len(), "new-user")?;
                for &o in &relevant {
                    check_ordinal(o, total, "new-item")?;
                }
                match compose_new_user(outputs, &split.new_users[ord])? {
                    Some(query) => units.push(Unit {
                        query,
                        relevant,
                        excluded: Vec::new(),
                    }),
                    None => pre_skipped += 1,
                }
                Ok(())
            };
            if spec.per_interaction {
                for &(ord, o) in &split.test_new_both {
                    push(ord, BTreeSet::from([o]))?;
                }
            } else {
                for (ord, relevant) in grouped(&split.test_new_both) {
                    push(ord, relevant)?;
                }
            }
            Pool::Rows(composed)
        }
    };
    Ok(UnitSet {
        units,
        pool,
        pre_skipped,
    })
}

/// Evaluates already-propagated outputs against a split.
pub fn evaluate_with_outputs(
    split: &SplitBundle,
    outputs: &ForwardOutputs<'_>,
    spec: &EvalSpec,
) -> Result<EvalReport> {
    spec.validate()?;
    let expected = ModelDims::from_dataset(&split.train, outputs.dims.dim);
    if outputs.dims != expected {
        return Err(PgdError::Inconsistent(format!(
            "model dimensions {:?} do not match the split's training data {:?}",
            outputs.dims, expected
        )));
    }

    let UnitSet {
        units,
        pool,
        pre_skipped,
    } = build_units(split, outputs, spec)?;

    let per_unit: Vec<Option<Vec<(f64, f64)>>> = units
        .par_iter()
        .map(|unit| {
            if unit.relevant.is_empty() {
                return None;
            }
            let ranked = rank_pool(unit, &pool);
            if ranked.is_empty() {
                return None;
            }
            Some(
                spec.cutoffs
                    .iter()
                    .map(|&k| {
                        (
                            hit_rate_at_k(&ranked, &unit.relevant, k),
                            ndcg_at_k(&ranked, &unit.relevant, k),
                        )
                    })
                    .collect(),
            )
        })
        .collect();

    let mut sums = vec![(0.0f64, 0.0f64); spec.cutoffs.len()];
    let mut evaluated = 0usize;
    let mut skipped = pre_skipped;
    for result in per_unit {
        match result {
            Some(metrics) => {
                evaluated += 1;
                for (sum, m) in sums.iter_mut().zip(metrics) {
                    sum.0 += m.0;
                    sum.1 += m.1;
                }
            }
            None => skipped += 1,
        }
    }

    let denom = evaluated.max(1) as f64;
    let metrics = spec
        .cutoffs
        .iter()
        .zip(sums)
        .map(|(&k, (hr, ndcg))| KMetrics {
            k,
            hit_rate: hr / denom,
            ndcg: ndcg / denom,
        })
        .collect();
    Ok(EvalReport {
        task: spec.task,
        metrics,
        units: evaluated,
        skipped,
        checkpoint_id: String::new(),
        wall_secs: 0.0,
    })
}

/// Rebuilds the operators, propagates, and evaluates. The checkpoint id is
/// set to the parameter summary; callers may overwrite it with a path.
pub fn evaluate(split: &SplitBundle, params: &PgdParams, spec: &EvalSpec) -> Result<EvalReport> {
    let started = Instant::now();
    let expected = ModelDims::from_dataset(&split.train, params.dims.dim);
    if params.dims != expected {
        return Err(PgdError::Inconsistent(format!(
            "checkpoint dimensions {:?} do not match the split's training data {:?}",
            params.dims, expected
        )));
    }
    let ops = build_operators(&split.train, spec.binarize_student_graph);
    let outputs = forward(params, &ops)?;
    let mut report = evaluate_with_outputs(split, &outputs, spec)?;
    report.checkpoint_id = params.summary();
    report.wall_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Warm NDCG@20 over the validation pairs, used for model selection.
pub fn validation_ndcg20(split: &SplitBundle, outputs: &ForwardOutputs<'_>) -> Result<f64> {
    let spec = EvalSpec {
        task: TaskKind::Warm,
        cutoffs: vec![20],
        ..Default::default()
    };
    Ok(evaluate_with_outputs(split, outputs, &spec)?.metrics[0].ndcg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, Dataset, SplitFractions};
    use crate::graph::StudentSide;
    use crate::model::{build_operators, ModelOps, StudentForward, TeacherForward};
    use crate::propagate::propagate;
    use crate::testutil::to_attr_map;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(ids: &[usize]) -> BTreeSet<usize> {
        ids.iter().copied().collect()
    }

    #[test]
    fn hit_rate_counts_recovered_fraction() {
        let ranked = vec![5, 7, 3, 1, 0];
        assert_eq!(hit_rate_at_k(&ranked, &set(&[3]), 10), 1.0);
        assert_eq!(hit_rate_at_k(&ranked, &set(&[3]), 2), 0.0);
        assert_eq!(hit_rate_at_k(&ranked, &set(&[7, 0]), 3), 0.5);
    }

    #[test]
    fn ndcg_matches_closed_forms() {
        let ranked = vec![5, 7, 3, 1];
        assert_eq!(ndcg_at_k(&ranked, &set(&[5]), 10), 1.0);
        // Rank 3: DCG = 1/log2(4) = 0.5 against IDCG 1.
        assert_eq!(ndcg_at_k(&ranked, &set(&[3]), 10), 0.5);
        assert_eq!(ndcg_at_k(&ranked, &set(&[3]), 2), 0.0);
        // Two relevant at ranks 1 and 3 of an ideal 1,2.
        let expected = (1.0 + 0.5) / (1.0 + 1.0 / 3f64.log2());
        assert!((ndcg_at_k(&ranked, &set(&[5, 3]), 10) - expected).abs() < 1e-15);
    }

    #[test]
    fn ranking_is_descending_with_index_ties() {
        let unit = Unit {
            query: vec![1.0],
            relevant: set(&[0]),
            excluded: Vec::new(),
        };
        let pool = Pool::Rows(vec![vec![0.2], vec![0.9], vec![0.2], vec![0.9]]);
        assert_eq!(rank_pool(&unit, &pool), vec![1, 3, 0, 2]);
        let all_equal = Pool::Rows(vec![vec![0.5]; 4]);
        assert_eq!(rank_pool(&unit, &all_equal), vec![0, 1, 2, 3]);
    }

    #[test]
    fn exclusions_drop_candidates_entirely() {
        let unit = Unit {
            query: vec![1.0],
            relevant: set(&[2]),
            excluded: vec![0, 3],
        };
        let pool = Pool::Rows(vec![vec![9.0], vec![1.0], vec![2.0], vec![8.0]]);
        assert_eq!(rank_pool(&unit, &pool), vec![2, 1]);
    }

    #[test]
    fn metrics_are_invariant_under_increasing_score_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let unit = Unit {
                query: vec![1.0],
                relevant: set(&[rng.gen_range(0..12)]),
                excluded: Vec::new(),
            };
            let pool_a = Pool::Rows(raw.iter().map(|&v| vec![v]).collect());
            let pool_b = Pool::Rows(raw.iter().map(|&v| vec![2.0 * v + 1.0]).collect());
            assert_eq!(rank_pool(&unit, &pool_a), rank_pool(&unit, &pool_b));
        }
    }

    #[test]
    fn metrics_are_nondecreasing_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let ranked: Vec<usize> = {
                let mut v: Vec<usize> = (0..15).collect();
                use rand::seq::SliceRandom;
                v.shuffle(&mut rng);
                v
            };
            let relevant: BTreeSet<usize> =
                (0..15).filter(|_| rng.gen_bool(0.3)).collect();
            if relevant.is_empty() {
                continue;
            }
            let mut prev = (0.0, 0.0);
            for k in [1, 3, 5, 10, 15, 20] {
                let cur = (
                    hit_rate_at_k(&ranked, &relevant, k),
                    ndcg_at_k(&ranked, &relevant, k),
                );
                assert!(cur.0 >= prev.0 - 1e-15 && cur.1 >= prev.1 - 1e-15);
                assert!(cur.0 <= 1.0 + 1e-15 && cur.1 <= 1.0 + 1e-15);
                prev = cur;
            }
        }
    }

    #[test]
    fn random_scores_hit_about_k_over_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (n, c, k) = (400, 25usize, 5usize);
        let mut total = 0.0;
        for _ in 0..n {
            let pool = Pool::Rows((0..c).map(|_| vec![rng.gen::<f64>()]).collect());
            let unit = Unit {
                query: vec![1.0],
                relevant: set(&[rng.gen_range(0..c)]),
                excluded: Vec::new(),
            };
            total += hit_rate_at_k(&rank_pool(&unit, &pool), &unit.relevant, k);
        }
        let mean = total / n as f64;
        let p = k as f64 / c as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((mean - p).abs() < 3.0 * sigma, "mean {mean}, expected {p}");
    }

    /// Six items, three users, one attribute each; relevance is planted so a
    /// crafted model ranks it perfectly.
    fn planted_dataset() -> Dataset {
        build_dataset(
            &[
                ("u0".into(), "i0".into()),
                ("u1".into(), "i1".into()),
                ("u2".into(), "i2".into()),
            ],
            &to_attr_map(&[("u0", &["a0"]), ("u1", &["a1"]), ("u2", &["a2"])]),
            &to_attr_map(&[
                ("i0", &["b0"]),
                ("i1", &["b1"]),
                ("i2", &["b2"]),
                ("i3", &["b0"]),
                ("i4", &["b1"]),
                ("i5", &["b2"]),
            ]),
        )
        .unwrap()
    }

    fn empty_split(train: Dataset) -> SplitBundle {
        SplitBundle {
            train,
            val: Vec::new(),
            test_new_user: Vec::new(),
            test_new_item: Vec::new(),
            test_new_both: Vec::new(),
            new_users: Vec::new(),
            new_items: Vec::new(),
            fractions: SplitFractions {
                new_user: 0.1,
                new_item: 0.1,
                val: 0.1,
            },
            seed: 0,
        }
    }

    /// Builds outputs whose last-layer tables are handed in directly; the
    /// traces are placeholders that evaluation never reads.
    fn crafted_outputs<'op>(
        ds: &Dataset,
        ops: &'op ModelOps,
        dim: usize,
        teacher_user: EmbeddingTable,
        teacher_item: EmbeddingTable,
        us_attr: EmbeddingTable,
        is_attr: EmbeddingTable,
    ) -> ForwardOutputs<'op> {
        let dims = ModelDims::from_dataset(ds, dim);
        let t_in = EmbeddingTable::zeros(dims.teacher_nodes(), dim);
        let su_in = EmbeddingTable::zeros(dims.num_items + dims.num_user_attrs, dim);
        let si_in = EmbeddingTable::zeros(dims.num_users + dims.num_item_attrs, dim);
        ForwardOutputs {
            dims,
            teacher: TeacherForward {
                user: teacher_user,
                item: teacher_item,
                attr: EmbeddingTable::zeros(dims.num_attrs(), dim),
                trace: propagate(&ops.teacher, &t_in, 1).unwrap(),
            },
            user_student: StudentForward {
                side: StudentSide::User,
                entity: EmbeddingTable::zeros(dims.num_items, dim),
                attr: us_attr,
                trace: propagate(&ops.user_student, &su_in, 1).unwrap(),
            },
            item_student: StudentForward {
                side: StudentSide::Item,
                entity: EmbeddingTable::zeros(dims.num_users, dim),
                attr: is_attr,
                trace: propagate(&ops.item_student, &si_in, 1).unwrap(),
            },
        }
    }

    fn table(rows: usize, dim: usize, values: &[f64]) -> EmbeddingTable {
        EmbeddingTable::from_values(rows, dim, values.to_vec()).unwrap()
    }

    #[test]
    fn warm_evaluation_is_perfect_for_a_planted_model() {
        let ds = planted_dataset();
        let ops = build_operators(&ds, false);
        // User u gets score 1 exactly on items u and u+3; u is in train, so
        // exclusion must leave u+3 as the only perfect candidate.
        let teacher_user = table(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let teacher_item = table(
            6,
            3,
            &[1., 0., 0., 0., 1., 0., 0., 0., 1., 1., 0., 0., 0., 1., 0., 0., 0., 1.],
        );
        let outputs = crafted_outputs(
            &ds,
            &ops,
            3,
            teacher_user,
            teacher_item,
            EmbeddingTable::zeros(3, 3),
            EmbeddingTable::zeros(3, 3),
        );
        let mut split = empty_split(ds.clone());
        split.val = vec![(0, 3), (1, 4), (2, 5)];
        let spec = EvalSpec {
            task: TaskKind::Warm,
            cutoffs: vec![1, 10],
            ..Default::default()
        };
        let report = evaluate_with_outputs(&split, &outputs, &spec).unwrap();
        assert_eq!(report.units, 3);
        assert_eq!(report.skipped, 0);
        for m in &report.metrics {
            assert_eq!(m.hit_rate, 1.0, "K={}", m.k);
            assert_eq!(m.ndcg, 1.0, "K={}", m.k);
        }
    }

    #[test]
    fn without_exclusion_the_trained_item_would_win() {
        // Same planted model, but the trained twin scores equal and has a
        // lower index: if exclusion broke, the relevant item would land at
        // rank 2 and NDCG@1 would be 0.
        let ds = planted_dataset();
        let ops = build_operators(&ds, false);
        let teacher_user = table(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let teacher_item = table(
            6,
            3,
            &[1., 0., 0., 0., 1., 0., 0., 0., 1., 1., 0., 0., 0., 1., 0., 0., 0., 1.],
        );
        let outputs = crafted_outputs(
            &ds,
            &ops,
            3,
            teacher_user,
            teacher_item,
            EmbeddingTable::zeros(3, 3),
            EmbeddingTable::zeros(3, 3),
        );
        let mut split = empty_split(ds.clone());
        split.val = vec![(0, 3)];
        let unit_relevant = set(&[3]);
        // Manual ranking without exclusion puts item 0 first by the tie rule.
        let unit = Unit {
            query: outputs.teacher.user.row(0).to_vec(),
            relevant: unit_relevant,
            excluded: Vec::new(),
        };
        let ranked = rank_pool(&unit, &Pool::Table(&outputs.teacher.item));
        assert_eq!(ranked[0], 0);
        // The real evaluation excludes item 0 and scores perfectly.
        let spec = EvalSpec {
            task: TaskKind::Warm,
            cutoffs: vec![1],
            ..Default::default()
        };
        let report = evaluate_with_outputs(&split, &outputs, &spec).unwrap();
        assert_eq!(report.metrics[0].ndcg, 1.0);
    }

    #[test]
    fn new_user_task_composes_attribute_queries() {
        let ds = planted_dataset();
        let ops = build_operators(&ds, false);
        // Student attribute rows are basis vectors; a new user with
        // attributes {a0, a1} must rank items aligned with either axis.
        let us_attr = table(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let teacher_item = table(
            6,
            3,
            &[1., 0., 0., 0., 1., 0., 0., 0., 1., 1., 0., 0., 0., 1., 0., 0., 0., 1.],
        );
        let outputs = crafted_outputs(
            &ds,
            &ops,
            3,
            EmbeddingTable::zeros(3, 3),
            teacher_item,
            us_attr,
            EmbeddingTable::zeros(3, 3),
        );
        let mut split = empty_split(ds.clone());
        split.new_users = vec![
            NewEntity {
                external_id: "nu0".into(),
                attrs: vec![0, 1],
            },
            NewEntity {
                external_id: "nu1".into(),
                attrs: vec![2],
            },
        ];
        // nu0's composed query scores 1 on items {0,1,3,4}; all four are its
        // relevant set, so every cutoff >= 4 is perfect.
        split.test_new_user = vec![(0, 0), (0, 1), (0, 3), (0, 4), (1, 2), (1, 5)];
        let spec = EvalSpec {
            task: TaskKind::NewUser,
            cutoffs: vec![4, 10],
            ..Default::default()
        };
        let report = evaluate_with_outputs(&split, &outputs, &spec).unwrap();
        assert_eq!(report.units, 2);
        assert_eq!(report.metrics[0].hit_rate, 1.0);
        assert_eq!(report.metrics[0].ndcg, 1.0);
    }

    #[test]
    fn new_item_and_new_both_tasks_use_composed_candidates() {
        let ds = planted_dataset();
        let ops = build_operators(&ds, false);
        let teacher_user = table(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let us_attr = table(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let is_attr = table(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let outputs = crafted_outputs(
            &ds,
            &ops,
            3,
            teacher_user,
            EmbeddingTable::zeros(6, 3),
            us_attr,
            is_attr,
        );
        let mut split = empty_split(ds.clone());
        // Item attributes are global ids: b0 = 3, b1 = 4, b2 = 5.
        split.new_items = vec![
            NewEntity {
                external_id: "ni0".into(),
                attrs: vec![3],
            },
            NewEntity {
                external_id: "ni1".into(),
                attrs: vec![4],
            },
        ];
        split.new_users = vec![NewEntity {
            external_id: "nu0".into(),
            attrs: vec![1],
        }];
        split.test_new_item = vec![(0, 0), (1, 1)];
        split.test_new_both = vec![(0, 1)];
        let spec = EvalSpec {
            task: TaskKind::NewItem,
            cutoffs: vec![1],
            ..Default::default()
        };
        let report = evaluate_with_outputs(&split, &outputs, &spec).unwrap();
        assert_eq!(report.units, 2);
        assert_eq!(report.metrics[0].ndcg, 1.0);

        let spec = EvalSpec {
            task: TaskKind::NewBoth,
            cutoffs: vec![1],
            ..Default::default()
        };
        let report = evaluate_with_outputs(&split, &outputs, &spec).unwrap();
        assert_eq!(report.units, 1);
        assert_eq!(report.metrics[0].ndcg, 1.0);
    }

    #[test]
    fn per_interaction_mode_scores_each_pair_alone() {
        let ds = planted_dataset();
        let ops = build_operators(&ds, false);
        // u0 has two relevant items; one ranks first, the other third.
        let teacher_user = table(3, 2, &[1., 0., 0., 1., 0., 0.]);
        let teacher_item = table(6, 2, &[0., 0., 9., 0., 5., 0., 7., 0., 0., 0., 0., 0.]);
        let outputs = crafted_outputs(
            &ds,
            &ops,
            2,
            teacher_user,
            teacher_item,
            EmbeddingTable::zeros(3, 2),
            EmbeddingTable::zeros(3, 2),
        );
        let mut split = empty_split(ds.clone());
        split.val = vec![(0, 1), (0, 2)];
        // Candidates after excluding train item 0: ranked by score 1 > 3 > 2.
        // Grouped: one unit, DCG = 1 + 1/log2(4), IDCG = 1 + 1/log2(3).
        let grouped_spec = EvalSpec {
            task: TaskKind::Warm,
            cutoffs: vec![3],
            ..Default::default()
        };
        let grouped = evaluate_with_outputs(&split, &outputs, &grouped_spec).unwrap();
        assert_eq!(grouped.units, 1);
        let expected = (1.0 + 0.5) / (1.0 + 1.0 / 3f64.log2());
        assert!((grouped.metrics[0].ndcg - expected).abs() < 1e-15);

        let per_spec = EvalSpec {
            per_interaction: true,
            ..grouped_spec
        };
        let per = evaluate_with_outputs(&split, &outputs, &per_spec).unwrap();
        assert_eq!(per.units, 2);
        // Pair (0,1) ranks first (1.0); pair (0,2) ranks third (0.5).
        assert!((per.metrics[0].ndcg - 0.75).abs() < 1e-15);
        assert_eq!(per.metrics[0].hit_rate, 1.0);
    }

    #[test]
    fn attribute_less_new_users_are_skipped_and_counted() {
        let ds = planted_dataset();
        let ops = build_operators(&ds, false);
        let outputs = crafted_outputs(
            &ds,
            &ops,
            2,
            EmbeddingTable::zeros(3, 2),
            table(6, 2, &[1., 0., 2., 0., 3., 0., 4., 0., 5., 0., 6., 0.]),
            table(3, 2, &[1., 1., 1., 1., 1., 1.]),
            EmbeddingTable::zeros(3, 2),
        );
        let mut split = empty_split(ds.clone());
        split.new_users = vec![
            NewEntity {
                external_id: "nu0".into(),
                attrs: vec![],
            },
            NewEntity {
                external_id: "nu1".into(),
                attrs: vec![0],
            },
        ];
        split.test_new_user = vec![(0, 1), (1, 2)];
        let spec = EvalSpec {
            task: TaskKind::NewUser,
            cutoffs: vec![10],
            ..Default::default()
        };
        let report = evaluate_with_outputs(&split, &outputs, &spec).unwrap();
        assert_eq!(report.units, 1);
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn spec_and_dimension_validation_fail_loudly() {
        let ds = planted_dataset();
        let ops = build_operators(&ds, false);
        let outputs = crafted_outputs(
            &ds,
            &ops,
            2,
            EmbeddingTable::zeros(3, 2),
            EmbeddingTable::zeros(6, 2),
            EmbeddingTable::zeros(3, 2),
            EmbeddingTable::zeros(3, 2),
        );
        let split = empty_split(ds.clone());
        let no_cutoffs = EvalSpec {
            cutoffs: vec![],
            ..Default::default()
        };
        assert!(evaluate_with_outputs(&split, &outputs, &no_cutoffs).is_err());
        let zero_cutoff = EvalSpec {
            cutoffs: vec![0],
            ..Default::default()
        };
        assert!(evaluate_with_outputs(&split, &outputs, &zero_cutoff).is_err());

        // A checkpoint over different dimensions is rejected up front.
        let other = crate::model::init_params(
            ModelDims {
                num_users: 2,
                num_items: 6,
                num_user_attrs: 3,
                num_item_attrs: 3,
                dim: 2,
            },
            crate::model::LayerCounts::default(),
            0,
        );
        let err = evaluate(&split, &other, &EvalSpec::default()).unwrap_err();
        assert!(matches!(err, PgdError::Inconsistent(_)), "{err}");
    }

    #[test]
    fn rank_candidates_agrees_with_the_pooled_path() {
        let ds = planted_dataset();
        let ops = build_operators(&ds, false);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dims = ModelDims::from_dataset(&ds, 4);
        let mut rand_table = |rows: usize| {
            let values: Vec<f64> = (0..rows * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            EmbeddingTable::from_values(rows, 4, values).unwrap()
        };
        let teacher_user = rand_table(dims.num_users);
        let teacher_item = rand_table(dims.num_items);
        let us_attr = rand_table(dims.num_user_attrs);
        let is_attr = rand_table(dims.num_item_attrs);
        let outputs = crafted_outputs(
            &ds,
            &ops,
            4,
            teacher_user,
            teacher_item,
            us_attr,
            is_attr,
        );
        // Warm user 1 against all items through both paths.
        let refs: Vec<EntityRef<'_>> = (0..dims.num_items).map(EntityRef::Warm).collect();
        let via_score =
            rank_candidates(&outputs, TaskKind::Warm, EntityRef::Warm(1), &refs).unwrap();
        let unit = Unit {
            query: outputs.teacher.user.row(1).to_vec(),
            relevant: BTreeSet::new(),
            excluded: Vec::new(),
        };
        let via_pool = rank_pool(&unit, &Pool::Table(&outputs.teacher.item));
        assert_eq!(via_score, via_pool);
    }

    #[test]
    fn report_lines_and_json_have_the_documented_shape() {
        let report = EvalReport {
            task: TaskKind::NewUser,
            metrics: vec![
                KMetrics {
                    k: 10,
                    hit_rate: 0.5,
                    ndcg: 0.25,
                },
                KMetrics {
                    k: 20,
                    hit_rate: 0.75,
                    ndcg: 0.5,
                },
            ],
            units: 7,
            skipped: 1,
            checkpoint_id: "ckpt".into(),
            wall_secs: 1.25,
        };
        assert_eq!(
            report.lines(),
            vec![
                "task=nu K=10 hr=0.5 ndcg=0.25 users=7",
                "task=nu K=20 hr=0.75 ndcg=0.5 users=7",
            ]
        );
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["task"], "nu");
        assert_eq!(json["units"], 7);
        assert_eq!(json["metrics"][1]["ndcg"], 0.5);
        assert!(json.get("wall_secs").is_none(), "wall clock is not serialized");
    }
}
