//! Cold-start splitting: hold out whole entities, not just interactions.
//!
//! A split removes a sampled fraction of users and items from the training
//! graph entirely. Interactions are routed by endpoint class: both endpoints
//! warm feeds train/validation, the rest feed the three cold-start test
//! partitions (new user, new item, both new).
//!
//! Draw order from one ChaCha8 stream seeded with `seed`: new users, then
//! new items, then validation positions within the residual warm pairs.
//! Everything else is deterministic, so equal inputs give byte-identical
//! bundles on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::load::{load_attributes, load_interactions, load_pairs_allow_empty, AttrKind};
use super::{assemble, Dataset, IdIndex};
use crate::error::{PgdError, Result};

/// Fractions controlling a split: entity hold-out rates and the share of
/// residual warm interactions reserved for validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub new_user: f64,
    pub new_item: f64,
    pub val: f64,
}

/// A held-out entity: its external ID and global attribute IDs (sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct NewEntity {
    pub external_id: String,
    pub attrs: Vec<usize>,
}

/// A complete train/validation/test split.
///
/// `train` is a [`Dataset`] over warm entities only, reindexed densely but
/// keeping the full attribute vocabulary of the source dataset. Partition
/// pairs use train indices for warm entities and ordinals into `new_users` /
/// `new_items` for held-out ones.
#[derive(Debug, Clone)]
pub struct SplitBundle {
    pub train: Dataset,
    /// Warm pairs held out for model selection: `(train user, train item)`.
    pub val: Vec<(usize, usize)>,
    /// `(new-user ordinal, train item)`.
    pub test_new_user: Vec<(usize, usize)>,
    /// `(train user, new-item ordinal)`.
    pub test_new_item: Vec<(usize, usize)>,
    /// `(new-user ordinal, new-item ordinal)`.
    pub test_new_both: Vec<(usize, usize)>,
    pub new_users: Vec<NewEntity>,
    pub new_items: Vec<NewEntity>,
    pub fractions: SplitFractions,
    pub seed: u64,
}

impl SplitBundle {
    /// Users of the source dataset, warm plus held out.
    pub fn total_users(&self) -> usize {
        self.train.num_users() + self.new_users.len()
    }

    pub fn total_items(&self) -> usize {
        self.train.num_items() + self.new_items.len()
    }
}

/// Samples a cold-start split from a dataset.
///
/// `floor(new_user_frac * M)` users and `floor(new_item_frac * N)` items are
/// held out uniformly without replacement; `floor(val_frac * residual)` warm
/// pairs become validation. Fractions must lie strictly inside `(0, 1)`.
/// Fails if the training partition would be empty or no test partition
/// received any interaction; individual empty partitions are fine.
pub fn generate_split(
    dataset: &Dataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitBundle> {
    for (name, f) in [
        ("new_user_frac", fractions.new_user),
        ("new_item_frac", fractions.new_item),
        ("val_frac", fractions.val),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(PgdError::Config(format!(
                "{name} must lie strictly between 0 and 1, got {f}"
            )));
        }
    }
    if dataset.interactions.is_empty() {
        return Err(PgdError::EmptyDataset(
            "cannot split a dataset with no interactions".into(),
        ));
    }

    let m = dataset.num_users();
    let n = dataset.num_items();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_new_users = (fractions.new_user * m as f64).floor() as usize;
    let num_new_items = (fractions.new_item * n as f64).floor() as usize;

    let mut is_new_user = vec![false; m];
    for u in rand::seq::index::sample(&mut rng, m, num_new_users) {
        is_new_user[u] = true;
    }
    let mut is_new_item = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, num_new_items) {
        is_new_item[i] = true;
    }

    // Dense ranks within each class; entity order (lexicographic) is kept.
    let mut warm_user_rank = vec![usize::MAX; m];
    let mut new_user_rank = vec![usize::MAX; m];
    let (mut warm_u, mut new_u) = (0, 0);
    for u in 0..m {
        if is_new_user[u] {
            new_user_rank[u] = new_u;
            new_u += 1;
        } else {
            warm_user_rank[u] = warm_u;
            warm_u += 1;
        }
    }
    let mut warm_item_rank = vec![usize::MAX; n];
    let mut new_item_rank = vec![usize::MAX; n];
    let (mut warm_i, mut new_i) = (0, 0);
    for i in 0..n {
        if is_new_item[i] {
            new_item_rank[i] = new_i;
            new_i += 1;
        } else {
            warm_item_rank[i] = warm_i;
            warm_i += 1;
        }
    }

    // Route interactions in dataset order.
    let mut residual = Vec::new();
    let mut test_new_user = Vec::new();
    let mut test_new_item = Vec::new();
    let mut test_new_both = Vec::new();
    for &(u, i) in &dataset.interactions {
        match (is_new_user[u], is_new_item[i]) {
            (false, false) => residual.push((warm_user_rank[u], warm_item_rank[i])),
            (true, false) => test_new_user.push((new_user_rank[u], warm_item_rank[i])),
            (false, true) => test_new_item.push((warm_user_rank[u], new_item_rank[i])),
            (true, true) => test_new_both.push((new_user_rank[u], new_item_rank[i])),
        }
    }

    let num_val = (fractions.val * residual.len() as f64).floor() as usize;
    let mut in_val = vec![false; residual.len()];
    for p in rand::seq::index::sample(&mut rng, residual.len(), num_val) {
        in_val[p] = true;
    }
    let mut train_pairs = Vec::with_capacity(residual.len() - num_val);
    let mut val = Vec::with_capacity(num_val);
    for (p, pair) in residual.into_iter().enumerate() {
        if in_val[p] {
            val.push(pair);
        } else {
            train_pairs.push(pair);
        }
    }

    if train_pairs.is_empty() {
        return Err(PgdError::Split(format!(
            "training partition is empty under seed {seed}; try another seed or smaller fractions"
        )));
    }
    if test_new_user.is_empty() && test_new_item.is_empty() && test_new_both.is_empty() {
        return Err(PgdError::Split(format!(
            "no interaction touches a held-out entity under seed {seed}; \
             try another seed or larger fractions"
        )));
    }

    let warm_users: Vec<String> = (0..m)
        .filter(|&u| !is_new_user[u])
        .map(|u| dataset.users.name(u).to_string())
        .collect();
    let warm_items: Vec<String> = (0..n)
        .filter(|&i| !is_new_item[i])
        .map(|i| dataset.items.name(i).to_string())
        .collect();
    let train = Dataset {
        interactions: train_pairs,
        user_attrs: (0..m)
            .filter(|&u| !is_new_user[u])
            .map(|u| dataset.user_attrs[u].clone())
            .collect(),
        item_attrs: (0..n)
            .filter(|&i| !is_new_item[i])
            .map(|i| dataset.item_attrs[i].clone())
            .collect(),
        users: IdIndex::from_sorted(warm_users),
        items: IdIndex::from_sorted(warm_items),
        user_attr_names: dataset.user_attr_names.clone(),
        item_attr_names: dataset.item_attr_names.clone(),
    };

    let new_users = (0..m)
        .filter(|&u| is_new_user[u])
        .map(|u| NewEntity {
            external_id: dataset.users.name(u).to_string(),
            attrs: dataset.user_attrs[u].clone(),
        })
        .collect();
    let new_items = (0..n)
        .filter(|&i| is_new_item[i])
        .map(|i| NewEntity {
            external_id: dataset.items.name(i).to_string(),
            attrs: dataset.item_attrs[i].clone(),
        })
        .collect();

    Ok(SplitBundle {
        train,
        val,
        test_new_user,
        test_new_item,
        test_new_both,
        new_users,
        new_items,
        fractions,
        seed,
    })
}

const META_FILE: &str = "meta.kv";
const TRAIN_FILE: &str = "train.tsv";
const VAL_FILE: &str = "val.tsv";
const TEST_NU_FILE: &str = "test_nu.tsv";
const TEST_NI_FILE: &str = "test_ni.tsv";
const TEST_NN_FILE: &str = "test_nn.tsv";
const TRAIN_USER_ATTRS_FILE: &str = "train_user_attrs.tsv";
const TRAIN_ITEM_ATTRS_FILE: &str = "train_item_attrs.tsv";
const NEW_USER_ATTRS_FILE: &str = "new_user_attrs.tsv";
const NEW_ITEM_ATTRS_FILE: &str = "new_item_attrs.tsv";

/// Writes a bundle as a directory of TSV files plus `meta.kv`.
///
/// All entity references use external IDs, orders are deterministic, and
/// lines end with `\n`, so two saves of equal bundles are byte-identical.
pub fn save_split(bundle: &SplitBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PgdError::io(dir, e))?;

    let train = &bundle.train;
    let user_name = |u: usize| train.users.name(u);
    let item_name = |i: usize| train.items.name(i);
    let new_user_name = |u: usize| bundle.new_users[u].external_id.as_str();
    let new_item_name = |i: usize| bundle.new_items[i].external_id.as_str();

    let mut meta = String::new();
    let _ = writeln!(meta, "seed={}", bundle.seed);
    let _ = writeln!(meta, "new_user_frac={}", bundle.fractions.new_user);
    let _ = writeln!(meta, "new_item_frac={}", bundle.fractions.new_item);
    let _ = writeln!(meta, "val_frac={}", bundle.fractions.val);
    let _ = writeln!(meta, "M={}", train.num_users());
    let _ = writeln!(meta, "N={}", train.num_items());
    let _ = writeln!(meta, "D_u={}", train.num_user_attrs());
    let _ = writeln!(meta, "D_v={}", train.num_item_attrs());
    write_file(dir, META_FILE, &meta)?;

    write_file(
        dir,
        TRAIN_FILE,
        &pair_lines(&train.interactions, user_name, item_name),
    )?;
    write_file(dir, VAL_FILE, &pair_lines(&bundle.val, user_name, item_name))?;
    write_file(
        dir,
        TEST_NU_FILE,
        &pair_lines(&bundle.test_new_user, new_user_name, item_name),
    )?;
    write_file(
        dir,
        TEST_NI_FILE,
        &pair_lines(&bundle.test_new_item, user_name, new_item_name),
    )?;
    write_file(
        dir,
        TEST_NN_FILE,
        &pair_lines(&bundle.test_new_both, new_user_name, new_item_name),
    )?;

    let user_attr_name = |a: usize| train.user_attr_names.name(a);
    let item_attr_name = |a: usize| train.item_attr_names.name(a - train.item_attr_offset());
    write_file(
        dir,
        TRAIN_USER_ATTRS_FILE,
        &attr_lines_indexed(&train.user_attrs, user_name, user_attr_name),
    )?;
    write_file(
        dir,
        TRAIN_ITEM_ATTRS_FILE,
        &attr_lines_indexed(&train.item_attrs, item_name, item_attr_name),
    )?;
    write_file(
        dir,
        NEW_USER_ATTRS_FILE,
        &attr_lines_new(&bundle.new_users, user_attr_name),
    )?;
    write_file(
        dir,
        NEW_ITEM_ATTRS_FILE,
        &attr_lines_new(&bundle.new_items, item_attr_name),
    )?;
    Ok(())
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| PgdError::io(path, e))
}

fn pair_lines<'a>(
    pairs: &[(usize, usize)],
    left: impl Fn(usize) -> &'a str,
    right: impl Fn(usize) -> &'a str,
) -> String {
    let mut out = String::new();
    for &(l, r) in pairs {
        let _ = writeln!(out, "{}\t{}", left(l), right(r));
    }
    out
}

fn attr_lines_indexed<'a>(
    attr_lists: &[Vec<usize>],
    entity: impl Fn(usize) -> &'a str,
    attr: impl Fn(usize) -> &'a str,
) -> String {
    let mut out = String::new();
    for (e, attrs) in attr_lists.iter().enumerate() {
        let _ = write!(out, "{}", entity(e));
        for &a in attrs {
            let _ = write!(out, "\t{}", attr(a));
        }
        out.push('\n');
    }
    out
}

fn attr_lines_new<'a>(entities: &[NewEntity], attr: impl Fn(usize) -> &'a str) -> String {
    let mut out = String::new();
    for e in entities {
        let _ = write!(out, "{}", e.external_id);
        for &a in &e.attrs {
            let _ = write!(out, "\t{}", attr(a));
        }
        out.push('\n');
    }
    out
}

/// Reads a bundle directory written by [`save_split`].
///
/// The global attribute vocabulary is rebuilt as the union of warm and
/// held-out attribute files and checked against `meta.kv`, as are the train
/// dimensions. Partition files must reference known entities.
pub fn load_split(dir: &Path) -> Result<SplitBundle> {
    let meta = read_meta(&dir.join(META_FILE))?;

    let train_user_map = load_attributes(&dir.join(TRAIN_USER_ATTRS_FILE), AttrKind::User)?;
    let train_item_map = load_attributes(&dir.join(TRAIN_ITEM_ATTRS_FILE), AttrKind::Item)?;
    let new_user_map = load_attributes(&dir.join(NEW_USER_ATTRS_FILE), AttrKind::User)?;
    let new_item_map = load_attributes(&dir.join(NEW_ITEM_ATTRS_FILE), AttrKind::Item)?;

    let user_vocab = union_vocab(&train_user_map, &new_user_map);
    let item_vocab = union_vocab(&train_item_map, &new_item_map);
    if user_vocab.len() != meta.num_user_attrs {
        return Err(PgdError::Inconsistent(format!(
            "meta.kv says D_u={}, attribute files define {}",
            meta.num_user_attrs,
            user_vocab.len()
        )));
    }
    if item_vocab.len() != meta.num_item_attrs {
        return Err(PgdError::Inconsistent(format!(
            "meta.kv says D_v={}, attribute files define {}",
            meta.num_item_attrs,
            item_vocab.len()
        )));
    }

    let train_pairs = load_interactions(&dir.join(TRAIN_FILE))?;
    let train = assemble(
        &train_pairs.pairs,
        &train_user_map,
        &train_item_map,
        user_vocab,
        item_vocab,
    )?;
    if train.num_users() != meta.num_users || train.num_items() != meta.num_items {
        return Err(PgdError::Inconsistent(format!(
            "meta.kv says M={} N={}, train files define M={} N={}",
            meta.num_users,
            meta.num_items,
            train.num_users(),
            train.num_items()
        )));
    }

    let offset = train.item_attr_offset();
    let new_users = new_entities(&new_user_map, &train.user_attr_names, 0);
    let new_items = new_entities(&new_item_map, &train.item_attr_names, offset);
    let new_user_ord: BTreeMap<&str, usize> = new_users
        .iter()
        .enumerate()
        .map(|(k, e)| (e.external_id.as_str(), k))
        .collect();
    let new_item_ord: BTreeMap<&str, usize> = new_items
        .iter()
        .enumerate()
        .map(|(k, e)| (e.external_id.as_str(), k))
        .collect();

    let warm_user = |id: &str| {
        train
            .users
            .get(id)
            .ok_or_else(|| PgdError::Inconsistent(format!("unknown warm user {id:?}")))
    };
    let warm_item = |id: &str| {
        train
            .items
            .get(id)
            .ok_or_else(|| PgdError::Inconsistent(format!("unknown warm item {id:?}")))
    };
    let cold_user = |id: &str| {
        new_user_ord
            .get(id)
            .copied()
            .ok_or_else(|| PgdError::Inconsistent(format!("unknown new user {id:?}")))
    };
    let cold_item = |id: &str| {
        new_item_ord
            .get(id)
            .copied()
            .ok_or_else(|| PgdError::Inconsistent(format!("unknown new item {id:?}")))
    };

    let val = map_pairs(&dir.join(VAL_FILE), &warm_user, &warm_item)?;
    let test_new_user = map_pairs(&dir.join(TEST_NU_FILE), &cold_user, &warm_item)?;
    let test_new_item = map_pairs(&dir.join(TEST_NI_FILE), &warm_user, &cold_item)?;
    let test_new_both = map_pairs(&dir.join(TEST_NN_FILE), &cold_user, &cold_item)?;

    Ok(SplitBundle {
        train,
        val,
        test_new_user,
        test_new_item,
        test_new_both,
        new_users,
        new_items,
        fractions: meta.fractions,
        seed: meta.seed,
    })
}

fn union_vocab(
    a: &BTreeMap<String, std::collections::BTreeSet<String>>,
    b: &BTreeMap<String, std::collections::BTreeSet<String>>,
) -> Vec<String> {
    let mut vocab: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for attrs in a.values().chain(b.values()) {
        vocab.extend(attrs.iter().cloned());
    }
    vocab.into_iter().collect()
}

fn new_entities(
    map: &BTreeMap<String, std::collections::BTreeSet<String>>,
    vocab: &IdIndex,
    offset: usize,
) -> Vec<NewEntity> {
    map.iter()
        .map(|(id, attrs)| NewEntity {
            external_id: id.clone(),
            attrs: attrs
                .iter()
                .map(|a| offset + vocab.get(a).expect("vocab is the union of all files"))
                .collect(),
        })
        .collect()
}

fn map_pairs(
    path: &Path,
    left: &dyn Fn(&str) -> Result<usize>,
    right: &dyn Fn(&str) -> Result<usize>,
) -> Result<Vec<(usize, usize)>> {
    load_pairs_allow_empty(path)?
        .into_iter()
        .map(|(l, r)| Ok((left(&l)?, right(&r)?)))
        .collect()
}

struct Meta {
    seed: u64,
    fractions: SplitFractions,
    num_users: usize,
    num_items: usize,
    num_user_attrs: usize,
    num_item_attrs: usize,
}

fn read_meta(path: &Path) -> Result<Meta> {
    let text = fs::read_to_string(path).map_err(|e| PgdError::io(path, e))?;
    let mut values: BTreeMap<&str, &str> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            PgdError::parse(path, lineno + 1, format!("expected `key=value`, got {line:?}"))
        })?;
        if values.insert(key, value).is_some() {
            return Err(PgdError::parse(
                path,
                lineno + 1,
                format!("duplicate key {key:?}"),
            ));
        }
    }
    let fetch = |key: &str| {
        values
            .get(key)
            .copied()
            .ok_or_else(|| PgdError::parse(path, 0, format!("missing key {key:?}")))
    };
    let parse_f64 = |key: &str| -> Result<f64> {
        fetch(key)?
            .parse()
            .map_err(|_| PgdError::parse(path, 0, format!("key {key:?} is not a number")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        fetch(key)?
            .parse()
            .map_err(|_| PgdError::parse(path, 0, format!("key {key:?} is not an integer")))
    };
    let known = [
        "seed",
        "new_user_frac",
        "new_item_frac",
        "val_frac",
        "M",
        "N",
        "D_u",
        "D_v",
    ];
    for key in values.keys() {
        if !known.contains(key) {
            return Err(PgdError::parse(path, 0, format!("unknown key {key:?}")));
        }
    }
    Ok(Meta {
        seed: fetch("seed")?
            .parse()
            .map_err(|_| PgdError::parse(path, 0, "key \"seed\" is not an integer"))?,
        fractions: SplitFractions {
            new_user: parse_f64("new_user_frac")?,
            new_item: parse_f64("new_item_frac")?,
            val: parse_f64("val_frac")?,
        },
        num_users: parse_usize("M")?,
        num_items: parse_usize("N")?,
        num_user_attrs: parse_usize("D_u")?,
        num_item_attrs: parse_usize("D_v")?,
    })
}
