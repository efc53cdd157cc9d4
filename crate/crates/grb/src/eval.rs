//! The unified evaluator: runs the attack-by-defense matrix per difficulty,
//! computes rank-weighted metrics, and assembles leaderboards.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{
    apply_attack, check_budget, inject_fgsm, inject_pgd, inject_rnd, inject_speit, inject_tdgia,
    modify_fga, modify_heuristic, modify_pgd, AttackContext, AttackResult, HeuristicKind,
};
use crate::error::AttackError;
use crate::error::EvalError;
use crate::graph::GraphBundle;
use crate::models::{build_operator_dense, TrainedModel};
use crate::prep::{AttackBudget, Difficulty, DifficultySplit, Scenario};
use crate::svd::svd_low_rank;

pub const LEADERBOARD_MAGIC: &str = "GRBL1";

/// Fraction of masked nodes whose prediction matches the label.
pub fn subset_accuracy(preds: &[u32], labels: &[u32], mask: &[u32]) -> Result<f64, EvalError> {
    if mask.is_empty() {
        return Err(EvalError::EmptyMask);
    }
    if preds.len() < labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let hits = mask
        .iter()
        .filter(|&&v| preds[v as usize] == labels[v as usize])
        .count();
    Ok(hits as f64 / mask.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Descending,
    Ascending,
}

/// Inverse-square rank-weighted mean: sort per `order`, weight the i-th
/// score (1-indexed) by `(1/i^2) / sum_j (1/j^2)`.
///
/// Descending order weights the most robust defenses (attack metric);
/// ascending weights the most effective attacks (defense metric).
pub fn weighted_score(scores: &[f64], order: Order) -> f64 {
    assert!(!scores.is_empty(), "weighted_score needs at least one score");
    let mut sorted = scores.to_vec();
    match order {
        Order::Descending => sorted.sort_by(|a, b| b.partial_cmp(a).unwrap()),
        Order::Ascending => sorted.sort_by(|a, b| a.partial_cmp(b).unwrap()),
    }
    let denom: f64 = (1..=sorted.len()).map(|j| 1.0 / (j * j) as f64).sum();
    sorted
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let w = (1.0 / ((i + 1) * (i + 1)) as f64) / denom;
            w * s
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremeSide {
    Max,
    Min,
}

/// Mean of the k largest (Max) or smallest (Min) scores; short lists use
/// every score.
pub fn avg_k_extreme(scores: &[f64], k: usize, side: ExtremeSide) -> f64 {
    assert!(!scores.is_empty(), "avg_k_extreme needs at least one score");
    let mut sorted = scores.to_vec();
    match side {
        ExtremeSide::Max => sorted.sort_by(|a, b| b.partial_cmp(a).unwrap()),
        ExtremeSide::Min => sorted.sort_by(|a, b| a.partial_cmp(b).unwrap()),
    }
    let k = k.min(sorted.len()).max(1);
    sorted[..k].iter().sum::<f64>() / k as f64
}

/// An attack method plus its parameters, runnable by id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: AttackKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum AttackKind {
    InjectRnd,
    InjectFgsm { step: f64, iters: usize },
    InjectPgd { step: f64, iters: usize },
    InjectSpeit { step: f64, iters: usize },
    InjectTdgia { step: f64, iters: usize, batch: usize, lambda: f64 },
    ModifyRnd,
    ModifyDice,
    ModifyFlip,
    ModifyFga { recompute_every: usize, dense_limit: usize },
    ModifyPgd { step: f64, iters: usize },
}

impl AttackKind {
    pub fn scenario(&self) -> Scenario {
        match self {
            AttackKind::InjectRnd
            | AttackKind::InjectFgsm { .. }
            | AttackKind::InjectPgd { .. }
            | AttackKind::InjectSpeit { .. }
            | AttackKind::InjectTdgia { .. } => Scenario::Injection,
            _ => Scenario::Modification,
        }
    }

    /// Canonical id for this method.
    pub fn default_id(&self) -> &'static str {
        match self {
            AttackKind::InjectRnd => "rnd",
            AttackKind::InjectFgsm { .. } => "fgsm",
            AttackKind::InjectPgd { .. } => "pgd",
            AttackKind::InjectSpeit { .. } => "speit",
            AttackKind::InjectTdgia { .. } => "tdgia",
            AttackKind::ModifyRnd => "rnd-mod",
            AttackKind::ModifyDice => "dice",
            AttackKind::ModifyFlip => "flip",
            AttackKind::ModifyFga { .. } => "fga",
            AttackKind::ModifyPgd { .. } => "pgd-mod",
        }
    }
}

/// Run one attack method against a context.
pub fn run_attack(kind: &AttackKind, ctx: &AttackContext<'_>) -> Result<AttackResult, AttackError> {
    match kind {
        AttackKind::InjectRnd => inject_rnd(ctx),
        AttackKind::InjectFgsm { step, iters } => inject_fgsm(ctx, *step, *iters),
        AttackKind::InjectPgd { step, iters } => inject_pgd(ctx, *step, *iters),
        AttackKind::InjectSpeit { step, iters } => inject_speit(ctx, *step, *iters),
        AttackKind::InjectTdgia {
            step,
            iters,
            batch,
            lambda,
        } => inject_tdgia(ctx, *step, *iters, *batch, *lambda),
        AttackKind::ModifyRnd => modify_heuristic(ctx, HeuristicKind::Rnd),
        AttackKind::ModifyDice => modify_heuristic(ctx, HeuristicKind::Dice),
        AttackKind::ModifyFlip => modify_heuristic(ctx, HeuristicKind::Flip),
        AttackKind::ModifyFga {
            recompute_every,
            dense_limit,
        } => modify_fga(ctx, *recompute_every, *dense_limit),
        AttackKind::ModifyPgd { step, iters } => modify_pgd(ctx, *step, *iters),
    }
}

/// A defense entry in the matrix: a trained model, optionally behind
/// low-rank adjacency preprocessing.
#[derive(Debug, Clone)]
pub struct Defense {
    pub id: String,
    pub model: TrainedModel,
    /// Rank of the adjacency reconstruction applied at inference time.
    pub svd_rank: Option<usize>,
}

impl Defense {
    pub fn plain(id: impl Into<String>, model: TrainedModel) -> Self {
        Defense {
            id: id.into(),
            model,
            svd_rank: None,
        }
    }

    pub fn with_svd(id: impl Into<String>, model: TrainedModel, rank: usize) -> Self {
        Defense {
            id: id.into(),
            model,
            svd_rank: Some(rank),
        }
    }

    /// Predictions on a (possibly perturbed) graph, preprocessing first.
    pub fn predict(&self, g: &GraphBundle) -> Result<Vec<u32>, EvalError> {
        let preds = match self.svd_rank {
            None => self
                .model
                .predict(g)
                .map_err(|e| EvalError::Malformed(e.to_string()))?,
            Some(rank) => {
                let rank = rank.min(g.num_nodes());
                let low = svd_low_rank(g, rank)
                    .map_err(|e| EvalError::Malformed(e.to_string()))?;
                let op = Arc::new(build_operator_dense(self.model.spec.arch, &low.adjacency));
                self.model
                    .predict_with_operator(&op, g.features())
                    .map_err(|e| EvalError::Malformed(e.to_string()))?
            }
        };
        Ok(preds)
    }
}

/// Display id of the no-attack baseline row.
pub const WITHOUT_ATTACK: &str = "w/o-attack";

/// One (attack, defense, difficulty) cell: mean and standard deviation of
/// accuracy over repeats, on original nodes only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderboardCell {
    pub attack: String,
    pub defense: String,
    pub difficulty: Difficulty,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-entity metric triple at one difficulty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    pub difficulty: Difficulty,
    pub avg: f64,
    pub avg3: f64,
    pub weighted: f64,
}

/// The assembled matrix with rankings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Leaderboard {
    pub version: String,
    pub dataset: String,
    pub repeats: usize,
    pub base_seed: u64,
    /// Attack ids in ranked order (most effective first), baseline last.
    pub attacks: Vec<String>,
    /// Defense ids in ranked order (most robust first).
    pub defenses: Vec<String>,
    pub cells: Vec<LeaderboardCell>,
    /// Attack metrics: Avg / Avg-3-Max / Weighted over defense scores.
    pub attack_metrics: Vec<MetricRow>,
    /// Defense metrics: Avg / Avg-3-Min / Weighted over attack scores.
    pub defense_metrics: Vec<MetricRow>,
}

impl Leaderboard {
    pub fn cell(&self, attack: &str, defense: &str, d: Difficulty) -> Option<&LeaderboardCell> {
        self.cells.iter().find(|c| {
            c.attack == attack && c.defense == defense && c.difficulty == d
        })
    }
}

/// Stable 64-bit FNV-1a over structured seed components.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for part in parts {
        for &b in *part {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash ^= 0xff;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn cell_seed(base: u64, attack: &str, difficulty: Difficulty, repeat: usize) -> u64 {
    stable_hash(&[
        &base.to_le_bytes(),
        attack.as_bytes(),
        difficulty.letter().as_bytes(),
        &(repeat as u64).to_le_bytes(),
    ])
}

/// Matrix run configuration.
#[derive(Debug, Clone)]
pub struct MatrixConfig {
    pub repeats: usize,
    pub base_seed: u64,
    /// Worker threads for attack generation; 0 means rayon's default.
    pub jobs: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            repeats: 10,
            base_seed: 0,
            jobs: 0,
        }
    }
}

/// Run the full attack-by-defense matrix.
///
/// Per difficulty, each attack generates one perturbed graph per repeat
/// against the shared surrogate (seeded by a stable hash of base seed,
/// attack id, difficulty, and repeat); every defense is then evaluated on
/// every perturbed graph. The `W/O Attack` pseudo-row evaluates defenses on
/// the clean graph. Attackers receive the host graph with test labels
/// masked. Per-cell failures are flagged and excluded from metric vectors;
/// the matrix always completes.
pub fn run_matrix(
    g: &GraphBundle,
    split: &DifficultySplit,
    surrogate: &TrainedModel,
    attacks: &[AttackSpec],
    defenses: &[Defense],
    budget_for: &(dyn Fn(Difficulty) -> AttackBudget + Sync),
    cfg: &MatrixConfig,
) -> Result<Leaderboard, EvalError> {
    if defenses.is_empty() {
        return Err(EvalError::Malformed("no defenses supplied".into()));
    }
    let masked_host = g.with_labels_masked(&{
        let mut all = split.test_full();
        all.extend_from_slice(&split.val);
        all
    });

    struct Job<'a> {
        attack: &'a AttackSpec,
        difficulty: Difficulty,
        repeat: usize,
    }
    let mut jobs = Vec::new();
    for attack in attacks {
        for &difficulty in &Difficulty::ALL {
            for repeat in 0..cfg.repeats.max(1) {
                jobs.push(Job {
                    attack,
                    difficulty,
                    repeat,
                });
            }
        }
    }

    // Accuracy vectors per (attack, defense, difficulty), plus failures.
    type Key = (String, String, Difficulty);
    let run_job = |job: &Job<'_>| -> Vec<(Key, Result<f64, String>)> {
        let targets = split.test_subset(job.difficulty);
        let budget = budget_for(job.difficulty);
        let seed = cell_seed(cfg.base_seed, &job.attack.id, job.difficulty, job.repeat);
        let ctx = AttackContext::new(surrogate, &masked_host, &targets, budget.clone(), seed);
        let outcome = run_attack(&job.attack.kind, &ctx).and_then(|result| {
            let report = check_budget(g, &result, &budget);
            if !report.passes() {
                return Err(AttackError::BadArtifact(format!(
                    "budget violation: {}",
                    report.violations.join("; ")
                )));
            }
            Ok(result)
        });
        match outcome {
            Err(e) => defenses
                .iter()
                .map(|d| {
                    (
                        (job.attack.id.clone(), d.id.clone(), job.difficulty),
                        Err(e.to_string()),
                    )
                })
                .collect(),
            Ok(result) => {
                let perturbed = match apply_attack(g, &result.payload) {
                    Ok(p) => p,
                    Err(e) => {
                        return defenses
                            .iter()
                            .map(|d| {
                                (
                                    (job.attack.id.clone(), d.id.clone(), job.difficulty),
                                    Err(e.to_string()),
                                )
                            })
                            .collect()
                    }
                };
                defenses
                    .iter()
                    .map(|d| {
                        let key = (job.attack.id.clone(), d.id.clone(), job.difficulty);
                        let acc = d.predict(&perturbed).and_then(|preds| {
                            subset_accuracy(&preds, g.labels(), &targets)
                        });
                        (key, acc.map_err(|e| e.to_string()))
                    })
                    .collect()
            }
        }
    };

    let results: Vec<Vec<(Key, Result<f64, String>)>> = if cfg.jobs == 1 {
        jobs.iter().map(run_job).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| EvalError::Malformed(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(run_job).collect())
    };

    let mut samples: std::collections::BTreeMap<(String, String, String), Vec<f64>> =
        std::collections::BTreeMap::new();
    let mut failures: std::collections::BTreeMap<(String, String, String), String> =
        std::collections::BTreeMap::new();
    for batch in results {
        for ((attack, defense, difficulty), outcome) in batch {
            let key = (attack, defense, difficulty.letter().to_string());
            match outcome {
                Ok(acc) => samples.entry(key).or_default().push(acc),
                Err(e) => {
                    failures.entry(key).or_insert(e);
                }
            }
        }
    }

    // Baseline row: defenses on the clean graph; deterministic, std 0.
    let mut cells = Vec::new();
    for d in defenses {
        let preds = d.predict(g);
        for &difficulty in &Difficulty::ALL {
            let targets = split.test_subset(difficulty);
            let cell = match &preds {
                Ok(p) => match subset_accuracy(p, g.labels(), &targets) {
                    Ok(acc) => LeaderboardCell {
                        attack: WITHOUT_ATTACK.into(),
                        defense: d.id.clone(),
                        difficulty,
                        mean: Some(acc),
                        std: Some(0.0),
                        error: None,
                    },
                    Err(e) => failed_cell(WITHOUT_ATTACK, &d.id, difficulty, e.to_string()),
                },
                Err(e) => failed_cell(WITHOUT_ATTACK, &d.id, difficulty, e.to_string()),
            };
            cells.push(cell);
        }
    }
    for attack in attacks {
        for d in defenses {
            for &difficulty in &Difficulty::ALL {
                let key = (
                    attack.id.clone(),
                    d.id.clone(),
                    difficulty.letter().to_string(),
                );
                let cell = if let Some(values) = samples.get(&key) {
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    let var = values
                        .iter()
                        .map(|v| (v - mean).powi(2))
                        .sum::<f64>()
                        / values.len() as f64;
                    LeaderboardCell {
                        attack: attack.id.clone(),
                        defense: d.id.clone(),
                        difficulty,
                        mean: Some(mean),
                        std: Some(var.sqrt()),
                        error: None,
                    }
                } else {
                    let msg = failures
                        .get(&key)
                        .cloned()
                        .unwrap_or_else(|| "no samples".into());
                    failed_cell(&attack.id, &d.id, difficulty, msg)
                };
                cells.push(cell);
            }
        }
    }

    Ok(assemble(
        g.name().to_string(),
        cfg,
        attacks,
        defenses,
        cells,
    ))
}

fn failed_cell(attack: &str, defense: &str, difficulty: Difficulty, msg: String) -> LeaderboardCell {
    LeaderboardCell {
        attack: attack.into(),
        defense: defense.into(),
        difficulty,
        mean: None,
        std: None,
        error: Some(msg),
    }
}

/// Metrics and rankings from a finished cell list.
fn assemble(
    dataset: String,
    cfg: &MatrixConfig,
    attacks: &[AttackSpec],
    defenses: &[Defense],
    cells: Vec<LeaderboardCell>,
) -> Leaderboard {
    let attack_ids: Vec<String> = attacks.iter().map(|a| a.id.clone()).collect();
    let defense_ids: Vec<String> = defenses.iter().map(|d| d.id.clone()).collect();
    let find = |attack: &str, defense: &str, d: Difficulty| -> Option<f64> {
        cells
            .iter()
            .find(|c| c.attack == attack && c.defense == defense && c.difficulty == d)
            .and_then(|c| c.mean)
    };

    // Defense metrics: score vector = accuracies under every attack row
    // including the baseline (failed cells drop out).
    let mut defense_metrics = Vec::new();
    for id in &defense_ids {
        for &d in &Difficulty::ALL {
            let mut scores: Vec<f64> = Vec::new();
            for a in attack_ids.iter().map(String::as_str).chain([WITHOUT_ATTACK]) {
                if let Some(v) = find(a, id, d) {
                    scores.push(v);
                }
            }
            if scores.is_empty() {
                continue;
            }
            defense_metrics.push(MetricRow {
                id: id.clone(),
                difficulty: d,
                avg: scores.iter().sum::<f64>() / scores.len() as f64,
                avg3: avg_k_extreme(&scores, 3, ExtremeSide::Min),
                weighted: weighted_score(&scores, Order::Ascending),
            });
        }
    }
    // Attack metrics: score vector = accuracies of every defense.
    let mut attack_metrics = Vec::new();
    for id in attack_ids.iter().map(String::as_str).chain([WITHOUT_ATTACK]) {
        for &d in &Difficulty::ALL {
            let scores: Vec<f64> = defense_ids
                .iter()
                .filter_map(|def| find(id, def, d))
                .collect();
            if scores.is_empty() {
                continue;
            }
            attack_metrics.push(MetricRow {
                id: id.to_string(),
                difficulty: d,
                avg: scores.iter().sum::<f64>() / scores.len() as f64,
                avg3: avg_k_extreme(&scores, 3, ExtremeSide::Max),
                weighted: weighted_score(&scores, Order::Descending),
            });
        }
    }

    // Rankings at difficulty F: defenses by descending weighted accuracy,
    // attacks ascending. Ties break by Avg, then id.
    let metric_at = |rows: &[MetricRow], id: &str| -> (f64, f64) {
        rows.iter()
            .find(|r| r.id == id && r.difficulty == Difficulty::Full)
            .map(|r| (r.weighted, r.avg))
            .unwrap_or((f64::NAN, f64::NAN))
    };
    let mut ranked_defenses = defense_ids.clone();
    ranked_defenses.sort_by(|a, b| {
        let (wa, aa) = metric_at(&defense_metrics, a);
        let (wb, ab) = metric_at(&defense_metrics, b);
        wb.partial_cmp(&wa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ab.partial_cmp(&aa).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(b))
    });
    let mut ranked_attacks = attack_ids.clone();
    ranked_attacks.sort_by(|a, b| {
        let (wa, aa) = metric_at(&attack_metrics, a);
        let (wb, ab) = metric_at(&attack_metrics, b);
        wa.partial_cmp(&wb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(aa.partial_cmp(&ab).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(b))
    });
    ranked_attacks.push(WITHOUT_ATTACK.to_string());

    Leaderboard {
        version: LEADERBOARD_MAGIC.to_string(),
        dataset,
        repeats: cfg.repeats,
        base_seed: cfg.base_seed,
        attacks: ranked_attacks,
        defenses: ranked_defenses,
        cells,
        attack_metrics,
        defense_metrics,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Json,
    Csv,
    Markdown,
}

impl EmitFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Some(EmitFormat::Json),
            "csv" => Some(EmitFormat::Csv),
            "markdown" | "md" => Some(EmitFormat::Markdown),
            _ => None,
        }
    }
}

fn fmt_cell(mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{:.2}±{:.2}", m * 100.0, s * 100.0),
        _ => "—".to_string(),
    }
}

/// Render a leaderboard. Column order is the ranked defense order; row
/// order is the ranked attack order with the baseline last.
pub fn emit_leaderboard(lb: &Leaderboard, format: EmitFormat) -> Result<String, EvalError> {
    match format {
        EmitFormat::Json => {
            let mut s = serde_json::to_string_pretty(lb)
                .map_err(|e| EvalError::Malformed(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        EmitFormat::Csv => {
            let mut out = String::from("attack,defense,difficulty,mean,std,error\n");
            for attack in &lb.attacks {
                for defense in &lb.defenses {
                    for &d in &Difficulty::ALL {
                        if let Some(c) = lb.cell(attack, defense, d) {
                            out.push_str(&format!(
                                "{},{},{},{},{},{}\n",
                                c.attack,
                                c.defense,
                                d.letter(),
                                c.mean.map_or(String::new(), |v| format!("{v}")),
                                c.std.map_or(String::new(), |v| format!("{v}")),
                                c.error.clone().unwrap_or_default()
                            ));
                        }
                    }
                }
            }
            Ok(out)
        }
        EmitFormat::Markdown => {
            let mut out = String::new();
            out.push_str(&format!(
                "# Leaderboard: {} (repeats {}, seed {})\n\n",
                lb.dataset, lb.repeats, lb.base_seed
            ));
            out.push_str("| Attack | D |");
            for d in &lb.defenses {
                out.push_str(&format!(" {d} |"));
            }
            out.push_str(" Avg | Avg-3 | Weighted |\n");
            out.push_str("|---|---|");
            for _ in &lb.defenses {
                out.push_str("---|");
            }
            out.push_str("---|---|---|\n");
            for attack in &lb.attacks {
                for &d in &Difficulty::ALL {
                    out.push_str(&format!("| {attack} | {} |", d.letter()));
                    for defense in &lb.defenses {
                        let cell = lb.cell(attack, defense, d);
                        out.push_str(&format!(
                            " {} |",
                            cell.map_or("—".into(), |c| fmt_cell(c.mean, c.std))
                        ));
                    }
                    let m = lb
                        .attack_metrics
                        .iter()
                        .find(|r| &r.id == attack && r.difficulty == d);
                    match m {
                        Some(m) => out.push_str(&format!(
                            " {:.2} | {:.2} | {:.2} |\n",
                            m.avg * 100.0,
                            m.avg3 * 100.0,
                            m.weighted * 100.0
                        )),
                        None => out.push_str(" — | — | — |\n"),
                    }
                }
            }
            // defense metric footer
            for (label, pick) in [
                ("Avg", 0usize),
                ("Avg-3-Min", 1),
                ("Weighted", 2),
            ] {
                for &d in &Difficulty::ALL {
                    out.push_str(&format!("| {label} | {} |", d.letter()));
                    for defense in &lb.defenses {
                        let m = lb
                            .defense_metrics
                            .iter()
                            .find(|r| &r.id == defense && r.difficulty == d);
                        let v = m.map(|m| match pick {
                            0 => m.avg,
                            1 => m.avg3,
                            _ => m.weighted,
                        });
                        out.push_str(&format!(
                            " {} |",
                            v.map_or("—".into(), |v| format!("{:.2}", v * 100.0))
                        ));
                    }
                    out.push_str(" — | — | — |\n");
                }
            }
            Ok(out)
        }
    }
}

/// Parse a leaderboard back from its JSON form.
pub fn parse_leaderboard(json: &str) -> Result<Leaderboard, EvalError> {
    let lb: Leaderboard =
        serde_json::from_str(json).map_err(|e| EvalError::Malformed(e.to_string()))?;
    if lb.version != LEADERBOARD_MAGIC {
        return Err(EvalError::Malformed(format!(
            "unsupported leaderboard version {}",
            lb.version
        )));
    }
    Ok(lb)
}
