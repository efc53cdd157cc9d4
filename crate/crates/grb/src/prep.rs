//! Robustness-oriented dataset preparation: feature normalization,
//! degree-based difficulty splitting, and attack-budget presets.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::PrepError;
use crate::graph::GraphBundle;

/// Test-set difficulty tier. Tiers are ordered by the average degree of
/// their nodes; low-degree nodes are easier to attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Full,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Easy,
        Difficulty::Medium,
        Difficulty::Hard,
        Difficulty::Full,
    ];

    pub fn letter(self) -> &'static str {
        match self {
            Difficulty::Easy => "E",
            Difficulty::Medium => "M",
            Difficulty::Hard => "H",
            Difficulty::Full => "F",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "E" | "EASY" => Some(Difficulty::Easy),
            "M" | "MEDIUM" => Some(Difficulty::Medium),
            "H" | "HARD" => Some(Difficulty::Hard),
            "F" | "FULL" => Some(Difficulty::Full),
            _ => None,
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.letter())
    }
}

/// Train/val and Easy/Medium/Hard test index sets. All id vectors are sorted
/// ascending and pairwise disjoint; their union covers `[0, N)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultySplit {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test_easy: Vec<u32>,
    pub test_medium: Vec<u32>,
    pub test_hard: Vec<u32>,
    pub seed: u64,
}

impl DifficultySplit {
    /// Union of the three test tiers, sorted ascending.
    pub fn test_full(&self) -> Vec<u32> {
        let mut all = Vec::with_capacity(
            self.test_easy.len() + self.test_medium.len() + self.test_hard.len(),
        );
        all.extend_from_slice(&self.test_easy);
        all.extend_from_slice(&self.test_medium);
        all.extend_from_slice(&self.test_hard);
        all.sort_unstable();
        all
    }

    pub fn test_subset(&self, d: Difficulty) -> Vec<u32> {
        match d {
            Difficulty::Easy => self.test_easy.clone(),
            Difficulty::Medium => self.test_medium.clone(),
            Difficulty::Hard => self.test_hard.clone(),
            Difficulty::Full => self.test_full(),
        }
    }

    /// Sorted union of train and val ids (the inductive training graph).
    pub fn train_val(&self) -> Vec<u32> {
        let mut all = Vec::with_capacity(self.train.len() + self.val.len());
        all.extend_from_slice(&self.train);
        all.extend_from_slice(&self.val);
        all.sort_unstable();
        all
    }
}

/// Parameters of the degree-based splitting procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction trimmed from each end of the degree ranking.
    pub trim_fraction: f64,
    /// Number of degree-ordered partitions to sample test tiers from.
    pub partition_count: usize,
    /// Fraction of N sampled from each partition as one test tier.
    pub sample_fraction_per_partition: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            trim_fraction: 0.05,
            partition_count: 3,
            sample_fraction_per_partition: 0.1,
            train_fraction: 0.6,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Standardize a feature matrix by its global mean and standard deviation,
/// then squash through `(2/pi)*atan`, bounding every entry inside (-1, 1).
pub fn standardize_arctan(features: &Array2<f64>) -> Result<Array2<f64>, PrepError> {
    let n = features.len();
    if n == 0 {
        return Err(PrepError::ZeroVariance);
    }
    let mean = features.sum() / n as f64;
    let var = features.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return Err(PrepError::ZeroVariance);
    }
    let std = var.sqrt();
    Ok(features.mapv(|x| (2.0 / std::f64::consts::PI) * ((x - mean) / std).atan()))
}

/// Per-column variant of [`standardize_arctan`]; off the default path.
/// Columns with zero variance map to zero.
pub fn standardize_arctan_per_column(features: &Array2<f64>) -> Array2<f64> {
    let mut out = features.clone();
    for mut col in out.columns_mut() {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            let std = var.sqrt();
            col.mapv_inplace(|x| (2.0 / std::f64::consts::PI) * ((x - mean) / std).atan());
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Split nodes into train/val and Easy/Medium/Hard test tiers by degree.
///
/// Procedure: rank nodes ascending by (degree, id); drop the bottom and top
/// `trim_fraction` from test candidacy; cut the remaining ranking into
/// `partition_count` contiguous partitions of equal size (±1); sample
/// `floor(sample_fraction_per_partition * N)` nodes uniformly without
/// replacement from each partition (seeded); everything else, including the
/// trimmed extremes, goes to a pool shuffled and split train:val by the
/// configured fractions.
pub fn degree_split(g: &GraphBundle, cfg: &SplitConfig) -> Result<DifficultySplit, PrepError> {
    let n = g.num_nodes();
    if n < 100 {
        return Err(PrepError::TooSmall {
            num_nodes: n,
            min: 100,
        });
    }
    let total_fraction = cfg.train_fraction
        + cfg.val_fraction
        + cfg.sample_fraction_per_partition * cfg.partition_count as f64;
    if total_fraction > 1.0 + 1e-9 {
        return Err(PrepError::FractionOverflow(total_fraction));
    }
    if cfg.partition_count == 0 {
        return Err(PrepError::FractionOverflow(0.0));
    }

    let degrees = g.degrees();
    // Deterministic, seed-independent ranking: degree, then node id.
    let mut ranked: Vec<u32> = (0..n as u32).collect();
    ranked.sort_unstable_by_key(|&v| (degrees[v as usize], v));

    let trim = (cfg.trim_fraction * n as f64).floor() as usize;
    let middle = &ranked[trim..n - trim];
    let part_count = cfg.partition_count;
    let base = middle.len() / part_count;
    let extra = middle.len() % part_count;
    let per_tier = (cfg.sample_fraction_per_partition * n as f64).floor() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tiers: Vec<Vec<u32>> = Vec::with_capacity(part_count);
    let mut start = 0usize;
    for p in 0..part_count {
        let len = base + usize::from(p < extra);
        let partition = &middle[start..start + len];
        start += len;
        if per_tier > partition.len() {
            return Err(PrepError::FractionOverflow(
                cfg.sample_fraction_per_partition * part_count as f64,
            ));
        }
        let mut pick: Vec<u32> = partition.to_vec();
        pick.shuffle(&mut rng);
        pick.truncate(per_tier);
        pick.sort_unstable();
        tiers.push(pick);
    }

    let mut in_test = vec![false; n];
    for tier in &tiers {
        for &v in tier {
            in_test[v as usize] = true;
        }
    }
    let mut pool: Vec<u32> = (0..n as u32).filter(|&v| !in_test[v as usize]).collect();
    pool.shuffle(&mut rng);
    let val_share = cfg.val_fraction / (cfg.train_fraction + cfg.val_fraction);
    let val_count = (pool.len() as f64 * val_share).round() as usize;
    let mut val: Vec<u32> = pool.split_off(pool.len() - val_count);
    let mut train = pool;
    train.sort_unstable();
    val.sort_unstable();

    let mut it = tiers.into_iter();
    Ok(DifficultySplit {
        train,
        val,
        test_easy: it.next().unwrap_or_default(),
        test_medium: it.next().unwrap_or_default(),
        test_hard: it.next().unwrap_or_default(),
        seed: cfg.seed,
    })
}

/// Mean degree of a node subset.
pub fn mean_degree(g: &GraphBundle, nodes: &[u32]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let degrees = g.degrees();
    nodes.iter().map(|&v| degrees[v as usize] as f64).sum::<f64>() / nodes.len() as f64
}

pub fn save_splits(split: &DifficultySplit, path: impl AsRef<Path>) -> Result<(), PrepError> {
    let mut json = serde_json::to_vec_pretty(split)
        .map_err(|e| PrepError::Malformed(e.to_string()))?;
    json.push(b'\n');
    fs::write(path, json)?;
    Ok(())
}

pub fn load_splits(path: impl AsRef<Path>) -> Result<DifficultySplit, PrepError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PrepError::Malformed(e.to_string()))
}

/// Attack scenario: rewiring the existing graph, or adding new nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Modification,
    Injection,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::Modification => f.write_str("modification"),
            Scenario::Injection => f.write_str("injection"),
        }
    }
}

/// Hard perturbation limits handed to an attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackBudget {
    pub scenario: Scenario,
    /// Modification: maximum edits as a fraction of |E|.
    pub edge_ratio: f64,
    /// Injection: maximum number of new nodes.
    pub max_injected_nodes: usize,
    /// Injection: maximum degree of each new node.
    pub max_edges_per_injected: usize,
    pub feature_min: f64,
    pub feature_max: f64,
}

impl AttackBudget {
    pub fn injection(nodes: usize, edges: usize, fmin: f64, fmax: f64) -> Self {
        AttackBudget {
            scenario: Scenario::Injection,
            edge_ratio: 0.0,
            max_injected_nodes: nodes,
            max_edges_per_injected: edges,
            feature_min: fmin,
            feature_max: fmax,
        }
    }

    pub fn modification(edge_ratio: f64, fmin: f64, fmax: f64) -> Self {
        AttackBudget {
            scenario: Scenario::Modification,
            edge_ratio,
            max_injected_nodes: 0,
            max_edges_per_injected: 0,
            feature_min: fmin,
            feature_max: fmax,
        }
    }

    pub fn validate(&self) -> Result<(), PrepError> {
        if self.feature_min >= self.feature_max {
            return Err(PrepError::InvalidBudget(format!(
                "feature range [{}, {}] is empty",
                self.feature_min, self.feature_max
            )));
        }
        match self.scenario {
            Scenario::Modification => {
                if !(self.edge_ratio > 0.0 && self.edge_ratio <= 1.0) {
                    return Err(PrepError::InvalidBudget(format!(
                        "edge ratio {} outside (0, 1]",
                        self.edge_ratio
                    )));
                }
            }
            Scenario::Injection => {
                if self.max_injected_nodes < 1 || self.max_edges_per_injected < 1 {
                    return Err(PrepError::InvalidBudget(
                        "injection budget needs at least one node and one edge".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-dataset attack preset: injection counts per difficulty tier, the
/// per-node edge cap, the feature range, and gradient-attack defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetPreset {
    pub dataset: String,
    pub scenario: Scenario,
    /// Injected-node caps for E/M/H/F.
    pub injected_nodes: [usize; 4],
    pub edges_per_node: usize,
    pub feature_min: f64,
    pub feature_max: f64,
    pub step_size: f64,
    pub iterations: usize,
    /// Modification: edit cap as a fraction of |E|.
    pub edge_ratio: f64,
}

impl BudgetPreset {
    /// Budget instance for one difficulty tier.
    pub fn budget(&self, d: Difficulty) -> AttackBudget {
        let idx = match d {
            Difficulty::Easy => 0,
            Difficulty::Medium => 1,
            Difficulty::Hard => 2,
            Difficulty::Full => 3,
        };
        match self.scenario {
            Scenario::Injection => AttackBudget::injection(
                self.injected_nodes[idx],
                self.edges_per_node,
                self.feature_min,
                self.feature_max,
            ),
            Scenario::Modification => {
                AttackBudget::modification(self.edge_ratio, self.feature_min, self.feature_max)
            }
        }
    }
}

/// Modification attacks default to this fraction of |E|; sweepable via CLI.
pub const DEFAULT_EDGE_RATIO: f64 = 0.05;

/// Look up the published per-dataset attack preset.
pub fn budget_preset(dataset: &str, scenario: Scenario) -> Result<BudgetPreset, PrepError> {
    let (nodes, edges, fmin, fmax, iters) = match dataset {
        "grb-cora" => ([20, 20, 20, 60], 20, -0.94, 0.94, 1000),
        "grb-citeseer" => ([30, 30, 30, 90], 20, -0.96, 0.89, 1000),
        "grb-flickr" => ([200, 200, 200, 600], 100, -0.47, 0.99, 2000),
        "grb-reddit" => ([500, 500, 500, 1500], 200, -0.98, 0.99, 2000),
        "grb-aminer" => ([500, 500, 500, 1500], 100, -0.93, 0.93, 5000),
        "toy" => ([4, 4, 4, 12], 4, -1.0, 1.0, 100),
        other => return Err(PrepError::UnknownDataset(other.to_string())),
    };
    Ok(BudgetPreset {
        dataset: dataset.to_string(),
        scenario,
        injected_nodes: nodes,
        edges_per_node: edges,
        feature_min: fmin,
        feature_max: fmax,
        step_size: 0.01,
        iterations: iters,
        edge_ratio: DEFAULT_EDGE_RATIO,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn arctan_fixed_points() {
        // Entries 0/2 give global mean 1 and population std exactly 1.
        let f = arr2(&[[0.0, 2.0], [0.0, 2.0]]);
        let out = standardize_arctan(&f).unwrap();
        assert!((out[[0, 1]] - 0.5).abs() < 1e-12, "z=1 maps to exactly 0.5");
        assert!((out[[0, 0]] + 0.5).abs() < 1e-12, "z=-1 maps to exactly -0.5");

        // An entry equal to the global mean maps to zero.
        let f = arr2(&[[1.0, 2.0, 3.0]]);
        let out = standardize_arctan(&f).unwrap();
        assert!((out[[0, 1]] - 0.0).abs() < 1e-12, "mean maps to 0");
    }

    #[test]
    fn arctan_rejects_constant_matrix() {
        let f = Array2::from_elem((3, 3), 4.2);
        assert!(matches!(
            standardize_arctan(&f),
            Err(PrepError::ZeroVariance)
        ));
    }

    #[test]
    fn arctan_outputs_bounded() {
        let f = arr2(&[[1e9, -1e9], [0.0, 1.0]]);
        let out = standardize_arctan(&f).unwrap();
        for &x in out.iter() {
            assert!(x > -1.0 && x < 1.0);
        }
    }

    #[test]
    fn per_column_handles_constant_columns() {
        let f = arr2(&[[1.0, 5.0], [2.0, 5.0]]);
        let out = standardize_arctan_per_column(&f);
        assert_eq!(out[[0, 1]], 0.0);
        assert_eq!(out[[1, 1]], 0.0);
        assert!(out[[0, 0]] < 0.0 && out[[1, 0]] > 0.0);
    }

    fn ladder(n: usize) -> GraphBundle {
        // Node v gets roughly v/10 neighbors among earlier nodes, giving a
        // spread-out degree distribution.
        let mut edges = Vec::new();
        for v in 1..n {
            let k = 1 + v * 3 / n;
            for j in 1..=k {
                if v >= j * 7 {
                    edges.push((v as u32, (v - j * 7) as u32));
                }
            }
            edges.push((v as u32, (v - 1) as u32));
        }
        GraphBundle::from_edge_list(
            "ladder",
            n,
            &edges,
            Array2::zeros((n, 2)),
            vec![0; n],
            1,
        )
        .unwrap()
    }

    #[test]
    fn split_sets_disjoint_and_cover() {
        let g = ladder(500);
        let split = degree_split(&g, &SplitConfig::default().with_seed(3)).unwrap();
        let mut seen = vec![0u8; 500];
        for set in [
            &split.train,
            &split.val,
            &split.test_easy,
            &split.test_medium,
            &split.test_hard,
        ] {
            for &v in set.iter() {
                seen[v as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "disjoint cover of [0, N)");
        assert_eq!(split.test_easy.len(), 50);
        assert_eq!(split.test_medium.len(), 50);
        assert_eq!(split.test_hard.len(), 50);
        assert_eq!(split.test_full().len(), 150);
        assert_eq!(split.train.len(), 300);
        assert_eq!(split.val.len(), 50);
    }

    #[test]
    fn split_sizes_on_thousand_node_power_law() {
        let g = crate::synth::power_law(1000, 2, 5);
        let split = degree_split(&g, &SplitConfig::default().with_seed(4)).unwrap();
        assert_eq!(split.test_easy.len(), 100);
        assert_eq!(split.test_medium.len(), 100);
        assert_eq!(split.test_hard.len(), 100);
        assert_eq!(split.test_full().len(), 300);
        assert_eq!(split.train.len(), 600);
        assert_eq!(split.val.len(), 100);
        let e = mean_degree(&g, &split.test_easy);
        let h = mean_degree(&g, &split.test_hard);
        assert!(e < h);
    }

    #[test]
    fn split_deterministic_per_seed() {
        let g = ladder(300);
        let a = degree_split(&g, &SplitConfig::default().with_seed(9)).unwrap();
        let b = degree_split(&g, &SplitConfig::default().with_seed(9)).unwrap();
        assert_eq!(a, b);
        let c = degree_split(&g, &SplitConfig::default().with_seed(10)).unwrap();
        assert_ne!(a.test_easy, c.test_easy);
    }

    #[test]
    fn split_difficulty_ordering() {
        let g = ladder(600);
        let split = degree_split(&g, &SplitConfig::default().with_seed(1)).unwrap();
        let e = mean_degree(&g, &split.test_easy);
        let m = mean_degree(&g, &split.test_medium);
        let h = mean_degree(&g, &split.test_hard);
        assert!(e < m && m < h, "expected {e} < {m} < {h}");
    }

    #[test]
    fn split_equal_degrees_tie_break_by_id() {
        // Cycle: every node has degree 2; partitions come from ids alone.
        let n = 200;
        let edges: Vec<(u32, u32)> =
            (0..n).map(|v| (v as u32, ((v + 1) % n) as u32)).collect();
        let g = GraphBundle::from_edge_list("cycle", n, &edges, Array2::zeros((n, 1)), vec![0; n], 1)
            .unwrap();
        let split = degree_split(&g, &SplitConfig::default().with_seed(5)).unwrap();
        let e = mean_degree(&g, &split.test_easy);
        let h = mean_degree(&g, &split.test_hard);
        assert_eq!(e, h);
        assert!(split.test_easy.iter().max() < split.test_hard.iter().min());
    }

    #[test]
    fn split_too_small_rejected() {
        let g = ladder(80);
        assert!(matches!(
            degree_split(&g, &SplitConfig::default()),
            Err(PrepError::TooSmall { .. })
        ));
    }

    #[test]
    fn preset_values() {
        let p = budget_preset("grb-cora", Scenario::Injection).unwrap();
        assert_eq!(p.injected_nodes, [20, 20, 20, 60]);
        assert_eq!(p.edges_per_node, 20);
        assert_eq!(p.budget(Difficulty::Full).max_injected_nodes, 60);
        assert_eq!((p.feature_min, p.feature_max), (-0.94, 0.94));

        let c = budget_preset("grb-citeseer", Scenario::Injection).unwrap();
        assert_eq!(c.injected_nodes, [30, 30, 30, 90]);
        assert_eq!((c.feature_min, c.feature_max), (-0.96, 0.89));

        assert!(matches!(
            budget_preset("unknown", Scenario::Injection),
            Err(PrepError::UnknownDataset(_))
        ));
    }

    #[test]
    fn splits_round_trip() {
        let g = ladder(300);
        let split = degree_split(&g, &SplitConfig::default().with_seed(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("splits.json");
        save_splits(&split, &path).unwrap();
        assert_eq!(load_splits(&path).unwrap(), split);
    }
}
