//! Command-line pipeline: prepare data, train models, run attacks,
//! evaluate, and render leaderboards — all seeded and replayable.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime
//! failure. Diagnostics go to standard error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::PrepError;
use crate::eval::{
    emit_leaderboard, parse_leaderboard, run_matrix, stable_hash, AttackKind, AttackSpec,
    Defense, EmitFormat, MatrixConfig,
};
use crate::graph::GraphBundle;
use crate::models::{load_checkpoint, save_checkpoint, Arch, ModelSpec};
use crate::prep::{
    budget_preset, degree_split, load_splits, save_splits, standardize_arctan,
    standardize_arctan_per_column, AttackBudget, BudgetPreset, Difficulty, Scenario,
    SplitConfig, DEFAULT_EDGE_RATIO,
};
use crate::train::{adversarial_train, at_preset, train_with_log, TrainConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "grb", version, about = "Graph robustness benchmarking pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a dataset: synthesize or load, normalize features, split.
    Prep(PrepArgs),
    /// Train a model (optionally adversarially) on a prepared dataset.
    Train(TrainArgs),
    /// Run one attack against a surrogate and save the artifact.
    Attack(AttackArgs),
    /// Run the attack-by-defense matrix and write leaderboard files.
    Eval(EvalArgs),
    /// Re-render a leaderboard JSON file in another format.
    Leaderboard(LeaderboardArgs),
    /// Run the built-in gradient and metric oracles.
    Selftest,
}

#[derive(Args, Debug)]
struct PrepArgs {
    /// Builtin name (toy, grb-cora, ...) or a bundle directory to reload.
    #[arg(long)]
    dataset: String,
    /// Output directory; defaults to $GRB_DATA_DIR/<name> or ./data/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Normalize each feature column separately instead of globally.
    #[arg(long)]
    per_column: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Prepared dataset directory (bundle + splits.json).
    #[arg(long)]
    data: PathBuf,
    /// Architecture: gcn, sgc, tagcn, appnp, gin, sage.
    #[arg(long, default_value = "gcn")]
    model: String,
    /// Enable the layer-norm variant.
    #[arg(long)]
    ln: bool,
    /// Train with on-the-fly injection attacks after a warm-up.
    #[arg(long)]
    adversarial: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    /// Comma-separated hidden sizes.
    #[arg(long)]
    hidden: Option<String>,
    /// Checkpoint output path; defaults to <data>/<model>[.at].grbm.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training log (JSON lines); defaults next to the checkpoint.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[arg(long)]
    data: PathBuf,
    /// Surrogate checkpoint (attacker-trained model).
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// rnd | fgsm | pgd | speit | tdgia | rnd-mod | dice | flip | fga | pgd-mod
    #[arg(long)]
    method: Option<String>,
    /// Replay a saved attack artifact instead of running a method; the
    /// payload is applied to the dataset and scored against --defense.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Defense checkpoint to score a replayed artifact against.
    #[arg(long)]
    defense: Option<PathBuf>,
    /// Difficulty tier: E, M, H or F.
    #[arg(long, default_value = "F")]
    difficulty: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gradient step size; defaults to the dataset preset.
    #[arg(long)]
    step: Option<f64>,
    /// Iteration count; defaults to the dataset preset.
    #[arg(long)]
    iters: Option<usize>,
    /// Modification budget as a fraction of |E|.
    #[arg(long, default_value_t = DEFAULT_EDGE_RATIO)]
    edge_ratio: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// Comma-separated attack method names.
    #[arg(long)]
    attacks: Option<String>,
    /// Comma-separated defense checkpoint paths.
    #[arg(long)]
    defenses: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the matrix; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LeaderboardArgs {
    #[arg(long)]
    input: PathBuf,
    /// json | csv | markdown
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Structured run configuration for `eval`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub surrogate: Option<PathBuf>,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub defenses: Vec<DefenseConfig>,
    pub scenario: Option<Scenario>,
    /// Budget preset name; defaults to the dataset name.
    pub budget_preset: Option<String>,
    #[serde(default)]
    pub budget_overrides: BudgetOverrides,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub id: String,
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub svd_rank: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct BudgetOverrides {
    pub injected_nodes: Option<[usize; 4]>,
    pub edges_per_node: Option<usize>,
    pub feature_min: Option<f64>,
    pub feature_max: Option<f64>,
    pub edge_ratio: Option<f64>,
    pub step_size: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    command: &'a str,
    seed: u64,
    config_hash: String,
    effective_config: serde_json::Value,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    config: &serde_json::Value,
) -> std::io::Result<()> {
    let hash = stable_hash(&[config.to_string().as_bytes()]);
    let manifest = Manifest {
        tool_version: TOOL_VERSION,
        command,
        seed,
        config_hash: format!("{hash:016x}"),
        effective_config: config.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    fs::write(dir.join("manifest.json"), json)
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Entry point used by the `grb` binary; maps every outcome to an exit
/// code and keeps diagnostics on stderr.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the same path
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { 0 } else { 1 };
        }
    };
    let outcome = match cli.command {
        Command::Prep(args) => cmd_prep(args),
        Command::Train(args) => cmd_train(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Leaderboard(args) => cmd_leaderboard(args),
        Command::Selftest => cmd_selftest(),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn data_root() -> PathBuf {
    std::env::var_os("GRB_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn load_prepared(dir: &Path) -> Result<(GraphBundle, crate::prep::DifficultySplit), CliError> {
    let g = crate::io::load_bundle(dir).map_err(validation)?;
    let split = load_splits(dir.join("splits.json")).map_err(validation)?;
    Ok((g, split))
}

fn cmd_prep(args: PrepArgs) -> Result<(), CliError> {
    let source = Path::new(&args.dataset);
    let raw = if source.is_dir() {
        crate::io::load_bundle(source).map_err(validation)?
    } else {
        crate::synth::builtin(&args.dataset).map_err(validation)?
    };
    let normalized = if args.per_column {
        standardize_arctan_per_column(raw.features())
    } else {
        standardize_arctan(raw.features()).map_err(validation)?
    };
    let g = raw.with_features(normalized).map_err(runtime)?;
    let split_cfg = SplitConfig::default().with_seed(args.seed);
    let split = degree_split(&g, &split_cfg).map_err(validation)?;

    let out = args
        .out
        .unwrap_or_else(|| data_root().join(g.name()));
    fs::create_dir_all(&out).map_err(runtime)?;
    crate::io::save_bundle(&g, &out).map_err(runtime)?;
    save_splits(&split, out.join("splits.json")).map_err(runtime)?;
    let config = serde_json::json!({
        "dataset": args.dataset,
        "seed": args.seed,
        "per_column": args.per_column,
        "split": split_cfg,
    });
    write_manifest(&out, "prep", args.seed, &config).map_err(runtime)?;
    println!(
        "prepared {} ({} nodes, {} edges) -> {}",
        g.name(),
        g.num_nodes(),
        g.num_edges(),
        out.display()
    );
    Ok(())
}

fn parse_hidden(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| validation(format!("bad --hidden: {e}")))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let (g, split) = load_prepared(&args.data)?;
    let arch = Arch::parse(&args.model)
        .ok_or_else(|| validation(format!("unknown model: {}", args.model)))?;
    let mut spec = ModelSpec::new(arch).with_dropout(args.dropout);
    if let Some(hidden) = &args.hidden {
        spec = spec.with_hidden(parse_hidden(hidden)?);
    }
    if args.ln {
        spec = spec.with_layer_norm();
    }
    let cfg = TrainConfig {
        lr: args.lr,
        max_epochs: args.epochs,
        patience: args.patience,
        seed: args.seed,
    };
    let started = std::time::Instant::now();
    let (model, log) = if args.adversarial {
        let at = at_preset(g.name()).map_err(validation)?;
        let model = adversarial_train(&spec, &g, &split, &cfg, &at).map_err(runtime)?;
        (model, Vec::new())
    } else {
        train_with_log(&spec, &g, &split, &cfg, None).map_err(runtime)?
    };
    let suffix = if args.adversarial { ".at" } else { "" };
    let out = args
        .out
        .unwrap_or_else(|| args.data.join(format!("{}{}.grbm", spec.id(), suffix)));
    save_checkpoint(&model, &out).map_err(runtime)?;
    if !log.is_empty() {
        let log_path = args
            .log
            .unwrap_or_else(|| out.with_extension("log.jsonl"));
        let mut text = String::new();
        for entry in &log {
            text.push_str(&serde_json::to_string(entry).expect("log entry serializes"));
            text.push('\n');
        }
        fs::write(&log_path, text).map_err(runtime)?;
    }
    if let Some(dir) = out.parent() {
        let config = serde_json::json!({
            "model": spec,
            "train": cfg,
            "adversarial": args.adversarial,
            "data": args.data,
        });
        write_manifest(dir, "train", args.seed, &config).map_err(runtime)?;
    }
    let last_val = log.last().map_or(f64::NAN, |e| e.val_acc);
    println!(
        "trained {} in {:.1}s (final val acc {:.4}) -> {}",
        spec.id(),
        started.elapsed().as_secs_f64(),
        last_val,
        out.display()
    );
    Ok(())
}

/// Method-name to kind mapping shared by `attack` and `eval`.
pub fn attack_kind(
    method: &str,
    preset: &BudgetPreset,
    step: Option<f64>,
    iters: Option<usize>,
) -> Result<AttackKind, PrepError> {
    let step = step.unwrap_or(preset.step_size);
    let iters = iters.unwrap_or(preset.iterations);
    let kind = match method {
        "rnd" => AttackKind::InjectRnd,
        "fgsm" => AttackKind::InjectFgsm { step, iters },
        "pgd" => AttackKind::InjectPgd { step, iters },
        "speit" => AttackKind::InjectSpeit { step, iters },
        "tdgia" => AttackKind::InjectTdgia {
            step,
            iters,
            batch: preset.injected_nodes[3].div_ceil(4).max(1),
            lambda: 0.5,
        },
        "rnd-mod" => AttackKind::ModifyRnd,
        "dice" => AttackKind::ModifyDice,
        "flip" => AttackKind::ModifyFlip,
        "fga" => AttackKind::ModifyFga {
            recompute_every: 10,
            dense_limit: crate::attack::FGA_DENSE_LIMIT,
        },
        "pgd-mod" => AttackKind::ModifyPgd { step, iters },
        other => return Err(PrepError::UnknownDataset(format!("unknown method {other}"))),
    };
    Ok(kind)
}

fn preset_for(g: &GraphBundle, scenario: Scenario, edge_ratio: f64) -> BudgetPreset {
    let mut preset = budget_preset(g.name(), scenario).unwrap_or_else(|_| BudgetPreset {
        dataset: g.name().to_string(),
        scenario,
        injected_nodes: [
            (g.num_nodes() / 100).max(1),
            (g.num_nodes() / 100).max(1),
            (g.num_nodes() / 100).max(1),
            (3 * g.num_nodes() / 100).max(1),
        ],
        edges_per_node: 10,
        feature_min: -1.0,
        feature_max: 1.0,
        step_size: 0.01,
        iterations: 200,
        edge_ratio,
    });
    preset.scenario = scenario;
    preset.edge_ratio = edge_ratio;
    preset
}

fn cmd_attack(args: AttackArgs) -> Result<(), CliError> {
    let (g, split) = load_prepared(&args.data)?;
    let difficulty = Difficulty::parse(&args.difficulty)
        .ok_or_else(|| validation(format!("bad difficulty: {}", args.difficulty)))?;

    if let Some(artifact) = &args.replay {
        return replay_attack(&g, &split, difficulty, artifact, args.defense.as_deref());
    }
    let method = args
        .method
        .ok_or_else(|| validation("pass --method, or --replay for a saved artifact"))?;
    let surrogate_path = args
        .surrogate
        .ok_or_else(|| validation("pass --surrogate with --method"))?;
    let surrogate = load_checkpoint(&surrogate_path).map_err(validation)?;
    let scenario = match method.as_str() {
        "rnd" | "fgsm" | "pgd" | "speit" | "tdgia" => Scenario::Injection,
        _ => Scenario::Modification,
    };
    let preset = preset_for(&g, scenario, args.edge_ratio);
    let kind = attack_kind(&args.method, &preset, args.step, args.iters).map_err(validation)?;
    let budget = preset.budget(difficulty);
    budget.validate().map_err(validation)?;

    let targets = split.test_subset(difficulty);
    let masked = g.with_labels_masked(&{
        let mut m = split.test_full();
        m.extend_from_slice(&split.val);
        m
    });
    let ctx = crate::attack::AttackContext::new(&surrogate, &masked, &targets, budget.clone(), args.seed);
    let started = std::time::Instant::now();
    let result = crate::eval::run_attack(&kind, &ctx).map_err(runtime)?;
    let report = crate::attack::check_budget(&g, &result, &budget);
    if !report.passes() {
        return Err(runtime(format!(
            "attack violated its own budget: {}",
            report.violations.join("; ")
        )));
    }
    let out = args.out.unwrap_or_else(|| {
        args.data.join(format!(
            "{}-{}.grba",
            args.method,
            difficulty.letter().to_lowercase()
        ))
    });
    crate::attack::save_result(&result, &out).map_err(runtime)?;
    if let Some(dir) = out.parent() {
        let config = serde_json::json!({
            "method": args.method,
            "difficulty": difficulty,
            "seed": args.seed,
            "budget": budget,
        });
        write_manifest(dir, "attack", args.seed, &config).map_err(runtime)?;
    }
    println!(
        "{} on {} targets in {:.1}s (surrogate agreement after: {:.4}) -> {}",
        args.method,
        targets.len(),
        started.elapsed().as_secs_f64(),
        result.surrogate_accuracy_after,
        out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let mut config: RunConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(validation)?;
            serde_json::from_str(&text).map_err(validation)?
        }
        None => RunConfig::default(),
    };
    // Flags win over the config file.
    if let Some(d) = args.data {
        config.data = Some(d);
    }
    if let Some(s) = args.surrogate {
        config.surrogate = Some(s);
    }
    if let Some(r) = args.repeats {
        config.repeats = Some(r);
    }
    if let Some(s) = args.seed {
        config.seed = Some(s);
    }
    if let Some(j) = args.jobs {
        config.jobs = Some(j);
    }
    if let Some(o) = args.out {
        config.out = Some(o);
    }
    let data = config
        .data
        .clone()
        .ok_or_else(|| validation("no dataset: pass --data or set it in the config"))?;
    let (g, split) = load_prepared(&data)?;
    let scenario = config.scenario.unwrap_or(Scenario::Injection);
    let edge_ratio = config
        .budget_overrides
        .edge_ratio
        .unwrap_or(DEFAULT_EDGE_RATIO);
    let preset_name = config.budget_preset.clone().unwrap_or_else(|| g.name().to_string());
    let mut preset = if preset_name == g.name() {
        preset_for(&g, scenario, edge_ratio)
    } else {
        budget_preset(&preset_name, scenario).map_err(validation)?
    };
    let o = &config.budget_overrides;
    if let Some(v) = o.injected_nodes {
        preset.injected_nodes = v;
    }
    if let Some(v) = o.edges_per_node {
        preset.edges_per_node = v;
    }
    if let Some(v) = o.feature_min {
        preset.feature_min = v;
    }
    if let Some(v) = o.feature_max {
        preset.feature_max = v;
    }
    if let Some(v) = o.edge_ratio {
        preset.edge_ratio = v;
    }
    if let Some(v) = o.step_size {
        preset.step_size = v;
    }
    if let Some(v) = o.iterations {
        preset.iterations = v;
    }

    if let Some(list) = &args.attacks {
        config.attacks = list
            .split(',')
            .map(|m| {
                let m = m.trim();
                attack_kind(m, &preset, None, None).map(|kind| AttackSpec {
                    id: m.to_string(),
                    kind,
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(validation)?;
    }
    if let Some(list) = &args.defenses {
        config.defenses = list
            .split(',')
            .map(|p| {
                let p = p.trim();
                let id = Path::new(p)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.to_string());
                DefenseConfig {
                    id,
                    checkpoint: PathBuf::from(p),
                    svd_rank: None,
                }
            })
            .collect();
    }
    if config.attacks.is_empty() {
        return Err(validation("no attacks: pass --attacks or set them in the config"));
    }
    if config.defenses.is_empty() {
        return Err(validation("no defenses: pass --defenses or set them in the config"));
    }
    let surrogate_path = config
        .surrogate
        .clone()
        .ok_or_else(|| validation("no surrogate checkpoint configured"))?;
    let surrogate = load_checkpoint(&surrogate_path).map_err(validation)?;
    let defenses: Vec<Defense> = config
        .defenses
        .iter()
        .map(|d| {
            load_checkpoint(&d.checkpoint).map(|model| Defense {
                id: d.id.clone(),
                model,
                svd_rank: d.svd_rank,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(validation)?;

    let matrix_cfg = MatrixConfig {
        repeats: config.repeats.unwrap_or(10),
        base_seed: config.seed.unwrap_or(0),
        jobs: config.jobs.unwrap_or(0),
    };
    let budget_fn = {
        let preset = preset.clone();
        move |d: Difficulty| -> AttackBudget { preset.budget(d) }
    };
    let started = std::time::Instant::now();
    let lb = run_matrix(
        &g,
        &split,
        &surrogate,
        &config.attacks,
        &defenses,
        &budget_fn,
        &matrix_cfg,
    )
    .map_err(runtime)?;

    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(runtime)?;
    fs::write(
        out.join("leaderboard.json"),
        emit_leaderboard(&lb, EmitFormat::Json).map_err(runtime)?,
    )
    .map_err(runtime)?;
    fs::write(
        out.join("leaderboard.csv"),
        emit_leaderboard(&lb, EmitFormat::Csv).map_err(runtime)?,
    )
    .map_err(runtime)?;
    fs::write(
        out.join("leaderboard.md"),
        emit_leaderboard(&lb, EmitFormat::Markdown).map_err(runtime)?,
    )
    .map_err(runtime)?;
    let config_value = serde_json::to_value(&config).map_err(runtime)?;
    write_manifest(&out, "eval", matrix_cfg.base_seed, &config_value).map_err(runtime)?;
    println!(
        "evaluated {} attacks x {} defenses x 4 difficulties (repeats {}) in {:.1}s -> {}",
        config.attacks.len(),
        defenses.len(),
        matrix_cfg.repeats,
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn cmd_leaderboard(args: LeaderboardArgs) -> Result<(), CliError> {
    let format = EmitFormat::parse(&args.format)
        .ok_or_else(|| validation(format!("unknown format: {}", args.format)))?;
    let text = fs::read_to_string(&args.input).map_err(validation)?;
    let lb = parse_leaderboard(&text).map_err(validation)?;
    let rendered = emit_leaderboard(&lb, format).map_err(runtime)?;
    match args.out {
        Some(path) => fs::write(path, rendered).map_err(runtime)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_selftest() -> Result<(), CliError> {
    use crate::eval::{weighted_score, Order};
    use rand::{Rng, SeedableRng};

    // Metric oracle: weighted score against direct formula evaluation.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let got = weighted_score(&scores, Order::Descending);
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let denom: f64 = (1..=n).map(|j| 1.0 / (j * j) as f64).sum();
        let expect: f64 = sorted
            .iter()
            .enumerate()
            .map(|(i, s)| s * (1.0 / ((i + 1) * (i + 1)) as f64) / denom)
            .sum();
        worst = worst.max((got - expect).abs());
    }
    let metrics_ok = worst < 1e-12;
    println!(
        "metric oracle: max abs deviation {worst:.3e} {}",
        if metrics_ok { "PASS" } else { "FAIL" }
    );

    // Gradient checks: every architecture, with and without layer norm.
    let g = crate::synth::two_cluster(8, 4, 0.5, 3);
    let mut grads_ok = true;
    for arch in Arch::ALL {
        for ln in [false, true] {
            let mut spec = ModelSpec::new(arch).with_hidden(vec![5]).with_dropout(0.0);
            if ln {
                spec = spec.with_layer_norm();
            }
            let err = crate::train::feature_grad_check(&spec, &g, 17)
                .map_err(|e| runtime(format!("grad check failed to run: {e}")))?;
            let ok = err < 1e-4;
            grads_ok &= ok;
            println!(
                "grad check {:>6}{}: max rel err {err:.3e} {}",
                arch.name(),
                if ln { "+ln" } else { "   " },
                if ok { "PASS" } else { "FAIL" }
            );
        }
    }
    if metrics_ok && grads_ok {
        Ok(())
    } else {
        Err(CliError::Runtime("selftest failed".into()))
    }
}
