//! Black-box evasion attacks: perturbations are optimized against a
//! surrogate model and transferred to unknown defenses, with hard budget
//! enforcement on every emitted payload.

mod injection;
mod modification;

pub use injection::{inject_fgsm, inject_pgd, inject_rnd, inject_speit, inject_tdgia};
pub use modification::{modify_fga, modify_heuristic, modify_pgd, HeuristicKind, FGA_DENSE_LIMIT};

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::AttackError;
use crate::graph::{EdgeEdit, GraphBundle, InjectionPatch};
use crate::models::TrainedModel;
use crate::prep::{AttackBudget, Scenario};

pub const ARTIFACT_MAGIC: &[u8; 5] = b"GRBA1";

/// Everything an attack is allowed to see: the attacker-trained surrogate,
/// the host graph (test labels withheld by convention — attacks only ever
/// read labels through the surrogate's predictions), the target node set,
/// the budget, and a seed.
pub struct AttackContext<'a> {
    pub surrogate: &'a TrainedModel,
    pub host: &'a GraphBundle,
    pub targets: &'a [u32],
    pub budget: AttackBudget,
    pub seed: u64,
}

impl<'a> AttackContext<'a> {
    pub fn new(
        surrogate: &'a TrainedModel,
        host: &'a GraphBundle,
        targets: &'a [u32],
        budget: AttackBudget,
        seed: u64,
    ) -> Self {
        AttackContext {
            surrogate,
            host,
            targets,
            budget,
            seed,
        }
    }

    pub(crate) fn require(&self, scenario: Scenario) -> Result<(), AttackError> {
        if self.targets.is_empty() {
            return Err(AttackError::NoTargets);
        }
        if self.budget.scenario != scenario {
            return Err(AttackError::WrongScenario {
                expected: scenario.to_string(),
                actual: self.budget.scenario.to_string(),
            });
        }
        Ok(())
    }
}

/// The perturbation an attack emits.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackPayload {
    Modification {
        edits: Vec<EdgeEdit>,
        /// Feature rows rewritten by methods that declare feature
        /// perturbation; pairs of (node id, new row).
        feature_updates: Vec<(u32, Vec<f64>)>,
    },
    Injection(InjectionPatch),
}

/// Attack output: the payload plus attacker-side diagnostics.
///
/// `surrogate_accuracy_after` is the fraction of targets whose surrogate
/// prediction survived the attack — an attacker-computable quantity (true
/// test labels stay hidden).
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub attack_id: String,
    pub scenario: Scenario,
    pub payload: AttackPayload,
    pub surrogate_accuracy_after: f64,
    pub iterations_used: usize,
    /// Set when the graph ran out of eligible edits before the budget.
    pub budget_exhausted: bool,
}

/// Outcome of a budget check; empty means the payload passes.
#[derive(Debug, Clone, Default)]
pub struct BudgetReport {
    pub violations: Vec<String>,
}

impl BudgetReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: String) {
        self.violations.push(msg);
    }
}

/// Recount a payload against a budget. Never fails; violations come back as
/// a list.
///
/// Injection passes iff the node count, per-node degree, and feature range
/// (closed interval) all hold — original rows cannot be touched by an
/// injection payload by construction. Modification passes iff the edit
/// count stays within `edge_ratio * |E|` of the original graph; declared
/// feature updates must stay within the feature range.
pub fn check_budget(
    original: &GraphBundle,
    result: &AttackResult,
    budget: &AttackBudget,
) -> BudgetReport {
    let mut report = BudgetReport::default();
    match (&result.payload, budget.scenario) {
        (AttackPayload::Injection(patch), Scenario::Injection) => {
            if patch.num_injected > budget.max_injected_nodes {
                report.push(format!(
                    "node count: {} injected, budget {}",
                    patch.num_injected, budget.max_injected_nodes
                ));
            }
            for (i, d) in patch.injected_degrees().iter().enumerate() {
                if *d > budget.max_edges_per_injected {
                    report.push(format!(
                        "edges: injected node {i} has {d} edges, budget {}",
                        budget.max_edges_per_injected
                    ));
                }
            }
            for ((i, j), &x) in patch.features.indexed_iter() {
                if x < budget.feature_min || x > budget.feature_max {
                    report.push(format!(
                        "feature [{i},{j}] = {x} outside [{}, {}]",
                        budget.feature_min, budget.feature_max
                    ));
                }
            }
            for &(_, host) in &patch.edges_to_host {
                if host as usize >= original.num_nodes() {
                    report.push(format!("edge target {host} outside the host graph"));
                }
            }
        }
        (
            AttackPayload::Modification {
                edits,
                feature_updates,
            },
            Scenario::Modification,
        ) => {
            let cap = budget.edge_ratio * original.num_edges() as f64;
            if edits.len() as f64 > cap + 1e-9 {
                report.push(format!(
                    "edit count: {} edits, budget {:.2}",
                    edits.len(),
                    cap
                ));
            }
            for (node, row) in feature_updates {
                if *node as usize >= original.num_nodes() {
                    report.push(format!("feature update on unknown node {node}"));
                    continue;
                }
                for (j, &x) in row.iter().enumerate() {
                    if x < budget.feature_min || x > budget.feature_max {
                        report.push(format!(
                            "feature update [{node},{j}] = {x} outside [{}, {}]",
                            budget.feature_min, budget.feature_max
                        ));
                    }
                }
            }
        }
        (payload, scenario) => {
            let kind = match payload {
                AttackPayload::Injection(_) => "injection",
                AttackPayload::Modification { .. } => "modification",
            };
            report.push(format!("{kind} payload under a {scenario} budget"));
        }
    }
    report
}

/// Apply an attack payload to a graph, producing the perturbed graph.
pub fn apply_attack(g: &GraphBundle, payload: &AttackPayload) -> Result<GraphBundle, AttackError> {
    match payload {
        AttackPayload::Injection(patch) => Ok(g.apply_injection(patch)?),
        AttackPayload::Modification {
            edits,
            feature_updates,
        } => {
            let mut out = g.apply_edits(edits)?;
            if !feature_updates.is_empty() {
                let mut features = out.features().clone();
                for (node, row) in feature_updates {
                    for (j, &x) in row.iter().enumerate() {
                        features[[*node as usize, j]] = x;
                    }
                }
                out = out.with_features(features)?;
            }
            Ok(out)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ArtifactManifest {
    attack_id: String,
    scenario: Scenario,
    surrogate_accuracy_after: f64,
    iterations_used: usize,
    budget_exhausted: bool,
    edits: Vec<EdgeEdit>,
    feature_update_nodes: Vec<u32>,
    num_injected: usize,
    feature_width: usize,
    edges_to_host: Vec<(u32, u32)>,
    edges_internal: Vec<(u32, u32)>,
}

/// Persist an attack result: JSON manifest, then a little-endian f32 blob
/// holding injected features (injection) or replacement rows
/// (modification), prefixed by the `GRBA1` magic.
pub fn save_result(result: &AttackResult, path: impl AsRef<Path>) -> Result<(), AttackError> {
    let (manifest, blob): (ArtifactManifest, Vec<f64>) = match &result.payload {
        AttackPayload::Injection(patch) => (
            ArtifactManifest {
                attack_id: result.attack_id.clone(),
                scenario: result.scenario,
                surrogate_accuracy_after: result.surrogate_accuracy_after,
                iterations_used: result.iterations_used,
                budget_exhausted: result.budget_exhausted,
                edits: Vec::new(),
                feature_update_nodes: Vec::new(),
                num_injected: patch.num_injected,
                feature_width: patch.features.ncols(),
                edges_to_host: patch.edges_to_host.clone(),
                edges_internal: patch.edges_internal.clone(),
            },
            patch.features.iter().copied().collect(),
        ),
        AttackPayload::Modification {
            edits,
            feature_updates,
        } => {
            let width = feature_updates.first().map_or(0, |(_, r)| r.len());
            (
                ArtifactManifest {
                    attack_id: result.attack_id.clone(),
                    scenario: result.scenario,
                    surrogate_accuracy_after: result.surrogate_accuracy_after,
                    iterations_used: result.iterations_used,
                    budget_exhausted: result.budget_exhausted,
                    edits: edits.clone(),
                    feature_update_nodes: feature_updates.iter().map(|(n, _)| *n).collect(),
                    num_injected: 0,
                    feature_width: width,
                    edges_to_host: Vec::new(),
                    edges_internal: Vec::new(),
                },
                feature_updates
                    .iter()
                    .flat_map(|(_, r)| r.iter().copied())
                    .collect(),
            )
        }
    };
    let manifest_json = serde_json::to_vec(&manifest)
        .map_err(|e| AttackError::BadArtifact(e.to_string()))?;
    let mut file = fs::File::create(path)?;
    file.write_all(ARTIFACT_MAGIC)?;
    file.write_all(&(manifest_json.len() as u32).to_le_bytes())?;
    file.write_all(&manifest_json)?;
    for x in blob {
        file.write_all(&(x as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Load a persisted attack result for replay.
pub fn load_result(path: impl AsRef<Path>) -> Result<AttackResult, AttackError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 9 || &bytes[..5] != ARTIFACT_MAGIC {
        return Err(AttackError::BadArtifact("bad magic".into()));
    }
    let len = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
    let end = 9 + len;
    if bytes.len() < end {
        return Err(AttackError::BadArtifact("truncated manifest".into()));
    }
    let manifest: ArtifactManifest = serde_json::from_slice(&bytes[9..end])
        .map_err(|e| AttackError::BadArtifact(e.to_string()))?;
    let blob: Vec<f64> = bytes[end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let payload = match manifest.scenario {
        Scenario::Injection => {
            let expected = manifest.num_injected * manifest.feature_width;
            if blob.len() != expected {
                return Err(AttackError::BadArtifact(format!(
                    "blob holds {} floats, expected {expected}",
                    blob.len()
                )));
            }
            AttackPayload::Injection(InjectionPatch {
                num_injected: manifest.num_injected,
                features: Array2::from_shape_vec(
                    (manifest.num_injected, manifest.feature_width),
                    blob,
                )
                .map_err(|e| AttackError::BadArtifact(e.to_string()))?,
                edges_to_host: manifest.edges_to_host,
                edges_internal: manifest.edges_internal,
            })
        }
        Scenario::Modification => {
            let nodes = manifest.feature_update_nodes;
            let expected = nodes.len() * manifest.feature_width;
            if blob.len() != expected {
                return Err(AttackError::BadArtifact(format!(
                    "blob holds {} floats, expected {expected}",
                    blob.len()
                )));
            }
            let feature_updates = nodes
                .into_iter()
                .enumerate()
                .map(|(i, n)| {
                    let row = blob[i * manifest.feature_width..(i + 1) * manifest.feature_width]
                        .to_vec();
                    (n, row)
                })
                .collect();
            AttackPayload::Modification {
                edits: manifest.edits,
                feature_updates,
            }
        }
    };
    Ok(AttackResult {
        attack_id: manifest.attack_id,
        scenario: manifest.scenario,
        payload,
        surrogate_accuracy_after: manifest.surrogate_accuracy_after,
        iterations_used: manifest.iterations_used,
        budget_exhausted: manifest.budget_exhausted,
    })
}

/// Fraction of target rows whose prediction matches the reference labels.
pub(crate) fn fraction_preserved(preds: &[u32], reference: &[u32], targets: &[u32]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hits = targets
        .iter()
        .filter(|&&t| preds[t as usize] == reference[t as usize])
        .count();
    hits as f64 / targets.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn host() -> GraphBundle {
        GraphBundle::from_edge_list(
            "h",
            4,
            &[(0, 1), (1, 2), (2, 3)],
            Array2::zeros((4, 3)),
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap()
    }

    fn injection_result(patch: InjectionPatch) -> AttackResult {
        AttackResult {
            attack_id: "test".into(),
            scenario: Scenario::Injection,
            payload: AttackPayload::Injection(patch),
            surrogate_accuracy_after: 0.5,
            iterations_used: 1,
            budget_exhausted: false,
        }
    }

    #[test]
    fn budget_counts_nodes() {
        let g = host();
        let budget = AttackBudget::injection(1, 2, -1.0, 1.0);
        let patch = InjectionPatch {
            num_injected: 2,
            features: Array2::zeros((2, 3)),
            edges_to_host: vec![(0, 0), (1, 1)],
            edges_internal: vec![],
        };
        let report = check_budget(&g, &injection_result(patch), &budget);
        assert!(!report.passes());
        assert!(report.violations[0].contains("node count"));
    }

    #[test]
    fn budget_feature_boundary_is_closed() {
        let g = host();
        let budget = AttackBudget::injection(1, 2, -1.0, 1.0);
        let patch = InjectionPatch {
            num_injected: 1,
            features: arr2(&[[1.0, -1.0, 0.0]]), // exactly at the bounds
            edges_to_host: vec![(0, 0)],
            edges_internal: vec![],
        };
        assert!(check_budget(&g, &injection_result(patch), &budget).passes());
        let over = InjectionPatch {
            num_injected: 1,
            features: arr2(&[[1.0 + 1e-9, 0.0, 0.0]]),
            edges_to_host: vec![(0, 0)],
            edges_internal: vec![],
        };
        assert!(!check_budget(&g, &injection_result(over), &budget).passes());
    }

    #[test]
    fn budget_counts_internal_edges_against_degree() {
        let g = host();
        let budget = AttackBudget::injection(2, 1, -1.0, 1.0);
        let patch = InjectionPatch {
            num_injected: 2,
            features: Array2::zeros((2, 3)),
            edges_to_host: vec![(0, 0), (1, 1)],
            edges_internal: vec![(0, 1)], // pushes both nodes to degree 2
        };
        let report = check_budget(&g, &injection_result(patch), &budget);
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn modification_edit_cap() {
        let g = host(); // |E| = 3
        let budget = AttackBudget::modification(0.34, -1.0, 1.0); // cap 1.02
        let result = AttackResult {
            attack_id: "m".into(),
            scenario: Scenario::Modification,
            payload: AttackPayload::Modification {
                edits: vec![EdgeEdit::remove(0, 1), EdgeEdit::add(0, 2)],
                feature_updates: vec![],
            },
            surrogate_accuracy_after: 0.5,
            iterations_used: 0,
            budget_exhausted: false,
        };
        let report = check_budget(&g, &result, &budget);
        assert!(!report.passes());
    }

    #[test]
    fn artifact_round_trip_injection() {
        let patch = InjectionPatch {
            num_injected: 2,
            features: arr2(&[[0.5, -0.25, 0.0], [1.0, 0.0, -1.0]]),
            edges_to_host: vec![(0, 1), (1, 3)],
            edges_internal: vec![(0, 1)],
        };
        let result = injection_result(patch);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attack.grba");
        save_result(&result, &path).unwrap();
        let loaded = load_result(&path).unwrap();
        assert_eq!(loaded.attack_id, result.attack_id);
        match (&loaded.payload, &result.payload) {
            (AttackPayload::Injection(a), AttackPayload::Injection(b)) => {
                assert_eq!(a, b);
            }
            _ => panic!("wrong payload kind"),
        }
    }

    #[test]
    fn artifact_round_trip_modification() {
        let result = AttackResult {
            attack_id: "pgd-mod".into(),
            scenario: Scenario::Modification,
            payload: AttackPayload::Modification {
                edits: vec![EdgeEdit::add(0, 3)],
                feature_updates: vec![(2, vec![0.25, -0.5, 0.75])],
            },
            surrogate_accuracy_after: 0.25,
            iterations_used: 10,
            budget_exhausted: true,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attack.grba");
        save_result(&result, &path).unwrap();
        let loaded = load_result(&path).unwrap();
        assert!(loaded.budget_exhausted);
        assert_eq!(loaded.payload, result.payload);
    }

    #[test]
    fn apply_attack_feature_updates() {
        let g = host();
        let payload = AttackPayload::Modification {
            edits: vec![],
            feature_updates: vec![(1, vec![9.0, 8.0, 7.0])],
        };
        let h = apply_attack(&g, &payload).unwrap();
        assert_eq!(h.features()[[1, 0]], 9.0);
        assert_eq!(h.features()[[0, 0]], 0.0);
    }
}
