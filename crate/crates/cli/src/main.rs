//! `pgd`: command-line front end for the teacher/student recommender.
//!
//! Subcommands cover the full experiment loop: `split` ingests raw TSV files
//! and writes a reproducible split directory, `train` fits a model and saves
//! the best checkpoint, `eval` ranks held-out interactions, `sweep` runs
//! grids over depth and distillation weights, and `inspect` prints artifact
//! statistics.
//!
//! Exit codes: 0 success, 1 runtime failure (compute or output I/O), 2
//! usage error (bad flags, bad config, unreadable or inconsistent inputs).
//! `PGD_THREADS` caps internal parallelism; results do not depend on it.

mod config;

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pgd_core::data::{
    build_dataset, generate_split, load_attributes, load_interactions, load_split, save_split,
    AttrKind, SplitBundle, SplitFractions,
};
use pgd_core::eval::{evaluate, EvalReport, EvalSpec};
use pgd_core::graph::{StudentGraph, StudentSide, TeacherGraph};
use pgd_core::model::{load_checkpoint, save_checkpoint, LayerCounts, ModelDims, TaskKind};
use pgd_core::train::{train_with_logger, TrainConfig};

use config::KvFile;

#[derive(Parser)]
#[command(
    name = "pgd",
    version,
    about = "Cold-start recommendation via graph propagation and attribute distillation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a cold-start split from raw interaction and attribute files.
    Split(SplitArgs),
    /// Train on a split directory and write the best checkpoint.
    Train(TrainArgs),
    /// Rank held-out interactions with a checkpoint and report HR/NDCG.
    Eval(EvalArgs),
    /// Train and evaluate a grid over depth and distillation weights.
    Sweep(SweepArgs),
    /// Print statistics of a split directory or a checkpoint.
    Inspect(InspectArgs),
}

/// A failed command: usage errors exit 2, runtime errors exit 1.
enum Failure {
    Usage(String),
    Runtime(String),
}

fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|()| match cli.command {
        Command::Split(args) => cmd_split(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Inspect(args) => cmd_inspect(args),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn init_threads() -> CmdResult {
    let Ok(raw) = std::env::var("PGD_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| usage(format!("PGD_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(runtime)
}

/// Splits a comma list of task tokens, rejecting empties and duplicates.
fn parse_tasks(raw: &str) -> Result<Vec<TaskKind>, Failure> {
    let mut tasks = Vec::new();
    for token in raw.split(',') {
        let task = TaskKind::parse(token.trim()).map_err(usage)?;
        if tasks.contains(&task) {
            return Err(usage(format!("task {task} listed twice")));
        }
        tasks.push(task);
    }
    Ok(tasks)
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>, Failure>
where
    T::Err: Display,
{
    let mut out = Vec::new();
    for token in raw.split(',') {
        let token = token.trim();
        if token.is_empty() {
            return Err(usage(format!("{what}: empty entry in list {raw:?}")));
        }
        out.push(token.parse().map_err(|e| usage(format!("{what}: {e}")))?);
    }
    Ok(out)
}

// --- split -----------------------------------------------------------------

#[derive(Args)]
struct SplitArgs {
    /// Interactions file: one `user<TAB>item` per line.
    #[arg(long)]
    interactions: PathBuf,
    /// User attribute file: `user<TAB>attr[<TAB>attr...]` per line.
    #[arg(long)]
    user_attrs: PathBuf,
    /// Item attribute file, same layout as the user file.
    #[arg(long)]
    item_attrs: PathBuf,
    /// Output directory for the split.
    #[arg(long)]
    out: PathBuf,
    /// Optional key=value config file (keys: new_user_frac, new_item_frac,
    /// val_frac, seed).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fraction of users held out as new.
    #[arg(long)]
    new_user_frac: Option<f64>,
    /// Fraction of items held out as new.
    #[arg(long)]
    new_item_frac: Option<f64>,
    /// Fraction of residual warm interactions used for validation.
    #[arg(long)]
    val_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_split(args: SplitArgs) -> CmdResult {
    let mut file = match &args.config {
        Some(path) => KvFile::load(path).map_err(usage)?,
        None => KvFile::empty(),
    };
    let fractions = SplitFractions {
        new_user: pick(args.new_user_frac, file.take("new_user_frac").map_err(usage)?, 0.3),
        new_item: pick(args.new_item_frac, file.take("new_item_frac").map_err(usage)?, 0.3),
        val: pick(args.val_frac, file.take("val_frac").map_err(usage)?, 0.1),
    };
    let seed = pick(args.seed, file.take("seed").map_err(usage)?, 42);
    file.finish().map_err(usage)?;

    let interactions = load_interactions(&args.interactions).map_err(usage)?;
    let user_map = load_attributes(&args.user_attrs, AttrKind::User).map_err(usage)?;
    let item_map = load_attributes(&args.item_attrs, AttrKind::Item).map_err(usage)?;
    let dataset = build_dataset(&interactions.pairs, &user_map, &item_map).map_err(usage)?;
    let bundle = generate_split(&dataset, fractions, seed).map_err(usage)?;

    save_split(&bundle, &args.out).map_err(runtime)?;
    if interactions.duplicates > 0 {
        println!(
            "deduplicated {} repeated interaction lines",
            interactions.duplicates
        );
    }
    print_split_stats(&bundle);
    println!("split written to {}", args.out.display());
    Ok(())
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn print_split_stats(bundle: &SplitBundle) {
    let train = &bundle.train;
    let interactions = train.interactions.len()
        + bundle.val.len()
        + bundle.test_new_user.len()
        + bundle.test_new_item.len()
        + bundle.test_new_both.len();
    let sparsity = 1.0
        - interactions as f64 / (bundle.total_users() as f64 * bundle.total_items() as f64);
    println!(
        "users: total={} train={} new={}",
        bundle.total_users(),
        train.num_users(),
        bundle.new_users.len()
    );
    println!(
        "items: total={} train={} new={}",
        bundle.total_items(),
        train.num_items(),
        bundle.new_items.len()
    );
    println!(
        "user_attrs={} item_attrs={}",
        train.num_user_attrs(),
        train.num_item_attrs()
    );
    println!(
        "interactions: total={} train={} val={} test_nu={} test_ni={} test_nn={}",
        interactions,
        train.interactions.len(),
        bundle.val.len(),
        bundle.test_new_user.len(),
        bundle.test_new_item.len(),
        bundle.test_new_both.len()
    );
    println!("sparsity={sparsity:.6}");
}

// --- train -----------------------------------------------------------------

/// Training knobs shared by `train` and `sweep`. Flags override config-file
/// keys of the same name; both override the preset, which overrides the
/// defaults.
#[derive(Args)]
struct TrainOpts {
    /// Optional key=value config file; keys mirror these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named distillation-weight preset: yelp, amazon, or xing.
    #[arg(long)]
    preset: Option<String>,
    /// Embedding width d.
    #[arg(long)]
    dim: Option<usize>,
    /// Propagation depth for all three models.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    teacher_layers: Option<usize>,
    #[arg(long)]
    user_student_layers: Option<usize>,
    #[arg(long)]
    item_student_layers: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// L2 weight on the free user/item tables.
    #[arg(long)]
    l2: Option<f64>,
    /// User-embedding distillation weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Item-embedding distillation weight.
    #[arg(long)]
    mu: Option<f64>,
    /// Score distillation weight.
    #[arg(long)]
    eta: Option<f64>,
    /// Negative items sampled per positive.
    #[arg(long)]
    negatives: Option<usize>,
    /// Validate every this many epochs (0 disables validation).
    #[arg(long)]
    eval_every: Option<usize>,
    /// Users per step in the embedding-distillation term (0: batch users).
    #[arg(long)]
    distill_users: Option<usize>,
    /// Items per step in the embedding-distillation term (0: batch items).
    #[arg(long)]
    distill_items: Option<usize>,
    /// Warm pairs per step in the score-distillation term.
    #[arg(long)]
    distill_pairs: Option<usize>,
    /// Let distillation gradients flow back into the teacher.
    #[arg(long)]
    no_detach_teacher: bool,
    /// Collapse student co-occurrence counts to 0/1 weights.
    #[arg(long)]
    binarize: bool,
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainOpts {
    fn resolve(&self) -> Result<TrainConfig, Failure> {
        let mut cfg = TrainConfig::default();
        if let Some(preset) = &self.preset {
            cfg.apply_preset(preset).map_err(usage)?;
        }
        let mut file = match &self.config {
            Some(path) => KvFile::load(path).map_err(usage)?,
            None => KvFile::empty(),
        };
        merge(&mut file, "dim", &mut cfg.embedding_dim)?;
        if let Some(uniform) = file.take("layers").map_err(usage)? {
            cfg.layers = LayerCounts::uniform(uniform);
        }
        merge(&mut file, "teacher_layers", &mut cfg.layers.teacher)?;
        merge(&mut file, "user_student_layers", &mut cfg.layers.user_student)?;
        merge(&mut file, "item_student_layers", &mut cfg.layers.item_student)?;
        merge(&mut file, "epochs", &mut cfg.epochs)?;
        merge(&mut file, "batch_size", &mut cfg.batch_size)?;
        merge(&mut file, "lr", &mut cfg.learning_rate)?;
        merge(&mut file, "l2", &mut cfg.l2_reg)?;
        merge(&mut file, "lambda", &mut cfg.user_distill_weight)?;
        merge(&mut file, "mu", &mut cfg.item_distill_weight)?;
        merge(&mut file, "eta", &mut cfg.score_distill_weight)?;
        merge(&mut file, "negatives", &mut cfg.negatives_per_positive)?;
        merge(&mut file, "eval_every", &mut cfg.eval_every)?;
        merge(&mut file, "distill_users", &mut cfg.distill_users_per_step)?;
        merge(&mut file, "distill_items", &mut cfg.distill_items_per_step)?;
        merge(&mut file, "distill_pairs", &mut cfg.distill_pairs_per_step)?;
        merge(&mut file, "detach_teacher", &mut cfg.detach_teacher)?;
        merge(&mut file, "binarize", &mut cfg.binarize_student_graph)?;
        merge(&mut file, "seed", &mut cfg.seed)?;
        file.finish().map_err(usage)?;

        set(&mut cfg.embedding_dim, self.dim);
        if let Some(uniform) = self.layers {
            cfg.layers = LayerCounts::uniform(uniform);
        }
        set(&mut cfg.layers.teacher, self.teacher_layers);
        set(&mut cfg.layers.user_student, self.user_student_layers);
        set(&mut cfg.layers.item_student, self.item_student_layers);
        set(&mut cfg.epochs, self.epochs);
        set(&mut cfg.batch_size, self.batch_size);
        set(&mut cfg.learning_rate, self.lr);
        set(&mut cfg.l2_reg, self.l2);
        set(&mut cfg.user_distill_weight, self.lambda);
        set(&mut cfg.item_distill_weight, self.mu);
        set(&mut cfg.score_distill_weight, self.eta);
        set(&mut cfg.negatives_per_positive, self.negatives);
        set(&mut cfg.eval_every, self.eval_every);
        set(&mut cfg.distill_users_per_step, self.distill_users);
        set(&mut cfg.distill_items_per_step, self.distill_items);
        set(&mut cfg.distill_pairs_per_step, self.distill_pairs);
        if self.no_detach_teacher {
            cfg.detach_teacher = false;
        }
        if self.binarize {
            cfg.binarize_student_graph = true;
        }
        set(&mut cfg.seed, self.seed);

        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(value) = flag {
        *slot = value;
    }
}

/// Overwrites `slot` with the config-file value under `key`, if present.
fn merge<T: std::str::FromStr>(file: &mut KvFile, key: &str, slot: &mut T) -> CmdResult
where
    T::Err: Display,
{
    if let Some(value) = file.take::<T>(key).map_err(usage)? {
        *slot = value;
    }
    Ok(())
}

fn render_config(cfg: &TrainConfig) -> String {
    format!(
        "dim={}\nteacher_layers={}\nuser_student_layers={}\nitem_student_layers={}\n\
         epochs={}\nbatch_size={}\nlr={}\nl2={}\nlambda={}\nmu={}\neta={}\nnegatives={}\n\
         eval_every={}\ndistill_users={}\ndistill_items={}\ndistill_pairs={}\n\
         detach_teacher={}\nbinarize={}\nseed={}\n",
        cfg.embedding_dim,
        cfg.layers.teacher,
        cfg.layers.user_student,
        cfg.layers.item_student,
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate,
        cfg.l2_reg,
        cfg.user_distill_weight,
        cfg.item_distill_weight,
        cfg.score_distill_weight,
        cfg.negatives_per_positive,
        cfg.eval_every,
        cfg.distill_users_per_step,
        cfg.distill_items_per_step,
        cfg.distill_pairs_per_step,
        cfg.detach_teacher,
        cfg.binarize_student_graph,
        cfg.seed
    )
}

#[derive(Args)]
struct TrainArgs {
    /// Split directory produced by `pgd split`.
    #[arg(long)]
    split: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Also append per-epoch log lines to this file.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Print the resolved configuration and exit without training.
    #[arg(long)]
    print_config: bool,
    #[command(flatten)]
    opts: TrainOpts,
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let cfg = args.opts.resolve()?;
    if args.print_config {
        print!("{}", render_config(&cfg));
        return Ok(());
    }
    let split = load_split(&args.split).map_err(usage)?;

    let mut log_file = match &args.log {
        Some(path) => Some(fs::File::create(path).map_err(runtime)?),
        None => None,
    };
    let mut log_error: Option<std::io::Error> = None;
    let output = train_with_logger(&split, &cfg, |record| {
        let line = record.line();
        println!("{line}");
        if let (Some(file), None) = (log_file.as_mut(), &log_error) {
            if let Err(e) = writeln!(file, "{line}") {
                log_error = Some(e);
            }
        }
    })
    .map_err(runtime)?;
    if let Some(e) = log_error {
        return Err(runtime(format!("writing log file: {e}")));
    }

    save_checkpoint(&output.params, &args.out).map_err(runtime)?;
    if let Some(epoch) = output.diverged_at {
        eprintln!(
            "warning: non-finite loss at epoch {epoch}; training halted and the \
             checkpoint predates the failed update"
        );
    }
    if output.skipped_positives > 0 {
        eprintln!(
            "warning: skipped {} positives whose user interacted with every item",
            output.skipped_positives
        );
    }
    if let Some((epoch, ndcg)) = output.best {
        println!("best epoch={epoch} val_ndcg20={ndcg}");
    }
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}

// --- eval ------------------------------------------------------------------

#[derive(Args)]
struct EvalArgs {
    /// Split directory produced by `pgd split`.
    #[arg(long)]
    split: PathBuf,
    /// Checkpoint produced by `pgd train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Optional key=value config file (keys: tasks, k, per_interaction,
    /// binarize).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma list of tasks: warm, nu, ni, nn.
    #[arg(long)]
    tasks: Option<String>,
    /// Comma list of cutoff depths.
    #[arg(long)]
    k: Option<String>,
    /// Score each held-out pair as its own unit.
    #[arg(long)]
    per_interaction: bool,
    /// Rebuild student graphs with 0/1 weights (must match training).
    #[arg(long)]
    binarize: bool,
    /// Also write the reports as JSON to this path.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let mut file = match &args.config {
        Some(path) => KvFile::load(path).map_err(usage)?,
        None => KvFile::empty(),
    };
    let tasks_raw = pick(
        args.tasks.clone(),
        file.take("tasks").map_err(usage)?,
        "warm,nu,ni,nn".to_string(),
    );
    let tasks = parse_tasks(&tasks_raw)?;
    let cutoffs_raw = pick(
        args.k.clone(),
        file.take("k").map_err(usage)?,
        "10,20,50".to_string(),
    );
    let cutoffs: Vec<usize> = parse_list(&cutoffs_raw, "--k")?;
    let per_interaction = args.per_interaction
        || file.take("per_interaction").map_err(usage)?.unwrap_or(false);
    let binarize = args.binarize || file.take("binarize").map_err(usage)?.unwrap_or(false);
    file.finish().map_err(usage)?;

    let split = load_split(&args.split).map_err(usage)?;
    let params = load_checkpoint(&args.checkpoint).map_err(usage)?;
    let expected = ModelDims::from_dataset(&split.train, params.dims.dim);
    if params.dims != expected {
        return Err(usage(format!(
            "checkpoint {} was trained on different data: {:?} vs split {:?}",
            args.checkpoint.display(),
            params.dims,
            expected
        )));
    }

    let mut reports: Vec<EvalReport> = Vec::new();
    for &task in &tasks {
        let spec = EvalSpec {
            task,
            cutoffs: cutoffs.clone(),
            per_interaction,
            binarize_student_graph: binarize,
        };
        let mut report = evaluate(&split, &params, &spec).map_err(runtime)?;
        report.checkpoint_id = args.checkpoint.display().to_string();
        for line in report.lines() {
            println!("{line}");
        }
        reports.push(report);
    }
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&reports).map_err(runtime)?;
        fs::write(path, json).map_err(runtime)?;
    }
    Ok(())
}

// --- sweep -----------------------------------------------------------------

#[derive(Args)]
struct SweepArgs {
    /// Split directory produced by `pgd split`.
    #[arg(long)]
    split: PathBuf,
    /// Comma list of propagation depths to sweep.
    #[arg(long = "layers", value_name = "CSV")]
    layer_grid: Option<String>,
    /// Comma list of lambda values to sweep.
    #[arg(long = "lambda", value_name = "CSV")]
    lambda_grid: Option<String>,
    /// Comma list of mu values to sweep.
    #[arg(long = "mu", value_name = "CSV")]
    mu_grid: Option<String>,
    /// Comma list of eta values to sweep.
    #[arg(long = "eta", value_name = "CSV")]
    eta_grid: Option<String>,
    /// Comma list of tasks to report.
    #[arg(long)]
    tasks: Option<String>,
    /// Optional key=value config file with base training keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named distillation-weight preset for the base configuration.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    distill_pairs: Option<usize>,
    #[arg(long)]
    no_detach_teacher: bool,
    #[arg(long)]
    binarize: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let base_opts = TrainOpts {
        config: args.config.clone(),
        preset: args.preset.clone(),
        dim: args.dim,
        layers: None,
        teacher_layers: None,
        user_student_layers: None,
        item_student_layers: None,
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        l2: None,
        lambda: None,
        mu: None,
        eta: None,
        negatives: args.negatives,
        eval_every: None,
        distill_users: None,
        distill_items: None,
        distill_pairs: args.distill_pairs,
        no_detach_teacher: args.no_detach_teacher,
        binarize: args.binarize,
        seed: args.seed,
    };
    let base = base_opts.resolve()?;
    let layer_grid: Vec<usize> = match &args.layer_grid {
        Some(raw) => parse_list(raw, "--layers")?,
        None => vec![base.layers.teacher],
    };
    let lambda_grid: Vec<f64> = match &args.lambda_grid {
        Some(raw) => parse_list(raw, "--lambda")?,
        None => vec![base.user_distill_weight],
    };
    let mu_grid: Vec<f64> = match &args.mu_grid {
        Some(raw) => parse_list(raw, "--mu")?,
        None => vec![base.item_distill_weight],
    };
    let eta_grid: Vec<f64> = match &args.eta_grid {
        Some(raw) => parse_list(raw, "--eta")?,
        None => vec![base.score_distill_weight],
    };
    let tasks = parse_tasks(args.tasks.as_deref().unwrap_or("warm,nu,ni,nn"))?;
    let split = load_split(&args.split).map_err(usage)?;

    // Grid points run sequentially with the shared base seed; a failing
    // point becomes an error row instead of aborting the sweep.
    for &layers in &layer_grid {
        for &lambda in &lambda_grid {
            for &mu in &mu_grid {
                for &eta in &eta_grid {
                    let mut cfg = base.clone();
                    cfg.layers = LayerCounts::uniform(layers);
                    cfg.user_distill_weight = lambda;
                    cfg.item_distill_weight = mu;
                    cfg.score_distill_weight = eta;
                    let point = format!("layers={layers} lambda={lambda} mu={mu} eta={eta}");
                    match sweep_point(&split, &cfg, &tasks) {
                        Ok(rows) => {
                            for (task, ndcg) in rows {
                                println!("{point} task={task} ndcg20={ndcg}");
                            }
                        }
                        Err(message) => println!("{point} error={message}"),
                    }
                }
            }
        }
    }
    Ok(())
}

fn sweep_point(
    split: &SplitBundle,
    cfg: &TrainConfig,
    tasks: &[TaskKind],
) -> Result<Vec<(TaskKind, f64)>, String> {
    cfg.validate().map_err(|e| e.to_string())?;
    let output = pgd_core::train::train(split, cfg).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for &task in tasks {
        let spec = EvalSpec {
            task,
            cutoffs: vec![20],
            per_interaction: false,
            binarize_student_graph: cfg.binarize_student_graph,
        };
        let report = evaluate(split, &output.params, &spec).map_err(|e| e.to_string())?;
        rows.push((task, report.metrics[0].ndcg));
    }
    Ok(rows)
}

// --- inspect ---------------------------------------------------------------

#[derive(Args)]
struct InspectArgs {
    #[command(subcommand)]
    target: InspectTarget,
}

#[derive(Subcommand)]
enum InspectTarget {
    /// Print partition and graph statistics of a split directory.
    Split {
        dir: PathBuf,
        /// Write teacher/user-student/item-student edge lists into this
        /// directory as TSV.
        #[arg(long)]
        dump_edges: Option<PathBuf>,
    },
    /// Print dimensions, layer counts, and table norms of a checkpoint.
    Checkpoint { path: PathBuf },
}

fn cmd_inspect(args: InspectArgs) -> CmdResult {
    match args.target {
        InspectTarget::Split { dir, dump_edges } => {
            let bundle = load_split(&dir).map_err(usage)?;
            print_split_stats(&bundle);
            let teacher = TeacherGraph::build(&bundle.train);
            let user_student = StudentGraph::build(&bundle.train, StudentSide::User, false);
            let item_student = StudentGraph::build(&bundle.train, StudentSide::Item, false);
            println!(
                "teacher graph: nodes={} edges={}",
                teacher.adjacency.num_nodes(),
                teacher.adjacency.nnz()
            );
            println!(
                "user student graph: nodes={} edges={}",
                user_student.adjacency.num_nodes(),
                user_student.adjacency.nnz()
            );
            println!(
                "item student graph: nodes={} edges={}",
                item_student.adjacency.num_nodes(),
                item_student.adjacency.nnz()
            );
            if let Some(out) = dump_edges {
                fs::create_dir_all(&out).map_err(runtime)?;
                for (name, graph) in [
                    ("teacher_edges.tsv", &teacher.adjacency),
                    ("user_student_edges.tsv", &user_student.adjacency),
                    ("item_student_edges.tsv", &item_student.adjacency),
                ] {
                    fs::write(out.join(name), graph.entries_tsv()).map_err(runtime)?;
                }
                println!("edge lists written to {}", out.display());
            }
            Ok(())
        }
        InspectTarget::Checkpoint { path } => {
            let params = load_checkpoint(&path).map_err(usage)?;
            let dims = params.dims;
            println!(
                "users={} items={} user_attrs={} item_attrs={} dim={}",
                dims.num_users, dims.num_items, dims.num_user_attrs, dims.num_item_attrs, dims.dim
            );
            println!(
                "teacher_layers={} user_student_layers={} item_student_layers={}",
                params.layers.teacher, params.layers.user_student, params.layers.item_student
            );
            println!("seed={}", params.seed);
            for (name, table) in [
                ("user", &params.user),
                ("item", &params.item),
                ("teacher_attr", &params.teacher_attr),
                ("user_student_attr", &params.user_student_attr),
                ("item_student_attr", &params.item_student_attr),
            ] {
                println!(
                    "table {name}: rows={} l2_norm={:.6}",
                    table.rows(),
                    table.squared_norm().sqrt()
                );
            }
            Ok(())
        }
    }
}
