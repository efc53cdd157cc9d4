//! Node-injection attacks. Topology is wired first, then injected feature
//! rows are optimized against the surrogate; gradients flow only into the
//! injected rows.

use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{fraction_preserved, AttackContext, AttackError, AttackPayload, AttackResult};
use crate::graph::{GraphBundle, InjectionPatch};
use crate::models::{
    build_operator, forward_with_injection, plan_injection_forward, InjectionForward,
    TrainedModel,
};
use crate::operator::GraphOperator;
use crate::prep::Scenario;
use crate::tape::Tape;

/// Wire each injected node to `edges_per_node` distinct targets sampled
/// uniformly (fewer when the target set is smaller).
fn wire_uniform(
    num_injected: usize,
    edges_per_node: usize,
    targets: &[u32],
    rng: &mut ChaCha8Rng,
) -> Vec<(u32, u32)> {
    let mut edges = Vec::with_capacity(num_injected * edges_per_node);
    let picks = edges_per_node.min(targets.len());
    for i in 0..num_injected {
        let mut seen = BTreeSet::new();
        while seen.len() < picks {
            seen.insert(targets[rng.random_range(0..targets.len())]);
        }
        for t in seen {
            edges.push((i as u32, t));
        }
    }
    edges
}

/// Evaluates surrogate logits/loss on the injected graph and produces
/// gradients w.r.t. the injected feature rows only.
///
/// For architectures whose first transform is row-separable, the host
/// portion of the first layer is precomputed once: the surrogate weights
/// are fixed during the attack, so only the injected rows change.
struct FeatureGradientEngine<'a> {
    surrogate: &'a TrainedModel,
    host: &'a GraphBundle,
    operator: Arc<GraphOperator>,
    plan: InjectionForward,
    target_rows: Vec<usize>,
    pseudo_labels: Vec<u32>,
}

enum AttackLoss {
    /// Maximize cross-entropy of the surrogate's own clean predictions.
    NllAscent,
    /// Minimize the margin between the predicted class and the runner-up.
    MarginDescent,
}

struct LossAndGrad {
    loss: f64,
    grad: Array2<f64>,
}

impl<'a> FeatureGradientEngine<'a> {
    fn new(
        ctx: &'a AttackContext<'a>,
        patch: &InjectionPatch,
    ) -> Result<Self, AttackError> {
        let injected = ctx.host.apply_injection(patch)?;
        let operator = Arc::new(build_operator(ctx.surrogate.spec.arch, &injected));
        let plan = plan_injection_forward(ctx.surrogate, ctx.host.features())?;
        let clean_preds = ctx.surrogate.predict(ctx.host)?;
        let target_rows: Vec<usize> = ctx.targets.iter().map(|&t| t as usize).collect();
        let pseudo_labels: Vec<u32> = target_rows.iter().map(|&r| clean_preds[r]).collect();
        Ok(FeatureGradientEngine {
            surrogate: ctx.surrogate,
            host: ctx.host,
            operator,
            plan,
            target_rows,
            pseudo_labels,
        })
    }

    /// Rebuild after the topology changed (sequential attacks).
    fn rewire(&mut self, ctx: &AttackContext<'_>, patch: &InjectionPatch) -> Result<(), AttackError> {
        let injected = ctx.host.apply_injection(patch)?;
        self.operator = Arc::new(build_operator(ctx.surrogate.spec.arch, &injected));
        Ok(())
    }

    fn evaluate(
        &self,
        features: &Array2<f64>,
        loss_kind: &AttackLoss,
        want_grad: bool,
    ) -> Result<LossAndGrad, AttackError> {
        let mut tape = Tape::new(false, 0);
        let inj_x = tape.input(features.clone(), want_grad);
        let logits =
            forward_with_injection(&mut tape, self.surrogate, &self.plan, &self.operator, inj_x)?;
        let loss_node = match loss_kind {
            AttackLoss::NllAscent => {
                let logp = tape.log_softmax(logits);
                let picked = tape.gather_rows(logp, &self.target_rows)?;
                tape.nll_loss(picked, &self.pseudo_labels)?
            }
            AttackLoss::MarginDescent => {
                let picked = tape.gather_rows(logits, &self.target_rows)?;
                tape.cw_margin(picked, &self.pseudo_labels)?
            }
        };
        let loss = tape.value(loss_node)[[0, 0]];
        let grad = if want_grad {
            tape.backward(loss_node)?;
            tape.grad(inj_x)
                .cloned()
                .ok_or_else(|| AttackError::GradientUnavailable("no injected-feature gradient".into()))?
        } else {
            Array2::zeros((0, 0))
        };
        Ok(LossAndGrad { loss, grad })
    }

    /// Surviving-prediction fraction on the targets after injection.
    fn surrogate_accuracy_after(&self, patch: &InjectionPatch) -> Result<f64, AttackError> {
        let perturbed = self.host.apply_injection(patch)?;
        let preds = self
            .surrogate
            .predict_with_operator(&self.operator, perturbed.features())?;
        let mut clean = vec![0u32; self.host.num_nodes()];
        for (row, label) in self.target_rows.iter().zip(self.pseudo_labels.iter()) {
            clean[*row] = *label;
        }
        let targets: Vec<u32> = self.target_rows.iter().map(|&r| r as u32).collect();
        Ok(fraction_preserved(&preds, &clean, &targets))
    }
}

/// Random injection: uniform wiring, Gaussian features (sigma 0.1) clipped
/// to the budget range.
pub fn inject_rnd(ctx: &AttackContext<'_>) -> Result<AttackResult, AttackError> {
    ctx.require(Scenario::Injection)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let budget = &ctx.budget;
    let normal = Normal::new(0.0, 0.1).expect("valid sigma");
    let features = Array2::from_shape_simple_fn(
        (budget.max_injected_nodes, ctx.host.num_features()),
        || {
            let x: f64 = normal.sample(&mut rng);
            x.clamp(budget.feature_min, budget.feature_max)
        },
    );
    let patch = InjectionPatch {
        num_injected: budget.max_injected_nodes,
        features,
        edges_to_host: wire_uniform(
            budget.max_injected_nodes,
            budget.max_edges_per_injected,
            ctx.targets,
            &mut rng,
        ),
        edges_internal: Vec::new(),
    };
    let engine = FeatureGradientEngine::new(ctx, &patch)?;
    let surrogate_accuracy_after = engine.surrogate_accuracy_after(&patch)?;
    Ok(AttackResult {
        attack_id: "rnd".into(),
        scenario: Scenario::Injection,
        payload: AttackPayload::Injection(patch),
        surrogate_accuracy_after,
        iterations_used: 0,
        budget_exhausted: false,
    })
}

/// Iterative gradient-sign injection: uniform wiring, features start at
/// zero and take signed steps up the surrogate loss, clipped to the range.
pub fn inject_fgsm(
    ctx: &AttackContext<'_>,
    step: f64,
    iters: usize,
) -> Result<AttackResult, AttackError> {
    ctx.require(Scenario::Injection)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let budget = &ctx.budget;
    let mut patch = InjectionPatch {
        num_injected: budget.max_injected_nodes,
        features: Array2::zeros((budget.max_injected_nodes, ctx.host.num_features())),
        edges_to_host: wire_uniform(
            budget.max_injected_nodes,
            budget.max_edges_per_injected,
            ctx.targets,
            &mut rng,
        ),
        edges_internal: Vec::new(),
    };
    let engine = FeatureGradientEngine::new(ctx, &patch)?;
    for _ in 0..iters {
        let out = engine.evaluate(&patch.features, &AttackLoss::NllAscent, true)?;
        ndarray::Zip::from(&mut patch.features)
            .and(&out.grad)
            .for_each(|x, &g| {
                *x = (*x + step * g.signum()).clamp(budget.feature_min, budget.feature_max);
            });
    }
    let surrogate_accuracy_after = engine.surrogate_accuracy_after(&patch)?;
    Ok(AttackResult {
        attack_id: "fgsm".into(),
        scenario: Scenario::Injection,
        payload: AttackPayload::Injection(patch),
        surrogate_accuracy_after,
        iterations_used: iters,
        budget_exhausted: false,
    })
}

/// Projected gradient ascent: features start uniform in the range; steps
/// follow the max-norm-normalized gradient and project back into the box.
/// Steps that would lower the loss beyond a small tolerance are rejected,
/// so the accepted loss trace is monotone.
pub fn inject_pgd(
    ctx: &AttackContext<'_>,
    step: f64,
    iters: usize,
) -> Result<AttackResult, AttackError> {
    ctx.require(Scenario::Injection)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let budget = &ctx.budget;
    let mut patch = InjectionPatch {
        num_injected: budget.max_injected_nodes,
        features: Array2::from_shape_simple_fn(
            (budget.max_injected_nodes, ctx.host.num_features()),
            || rng.random_range(budget.feature_min..budget.feature_max),
        ),
        edges_to_host: wire_uniform(
            budget.max_injected_nodes,
            budget.max_edges_per_injected,
            ctx.targets,
            &mut rng,
        ),
        edges_internal: Vec::new(),
    };
    let engine = FeatureGradientEngine::new(ctx, &patch)?;
    let mut current_loss = if iters > 0 {
        engine
            .evaluate(&patch.features, &AttackLoss::NllAscent, false)?
            .loss
    } else {
        0.0
    };
    let mut used = 0usize;
    for _ in 0..iters {
        let out = engine.evaluate(&patch.features, &AttackLoss::NllAscent, true)?;
        let max_abs = out.grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
        if max_abs == 0.0 {
            break;
        }
        let mut candidate = patch.features.clone();
        ndarray::Zip::from(&mut candidate)
            .and(&out.grad)
            .for_each(|x, &g| {
                *x = (*x + step * g / max_abs).clamp(budget.feature_min, budget.feature_max);
            });
        let new_loss = engine
            .evaluate(&candidate, &AttackLoss::NllAscent, false)?
            .loss;
        used += 1;
        if new_loss >= current_loss - 1e-6 {
            patch.features = candidate;
            current_loss = new_loss;
        }
    }
    let surrogate_accuracy_after = engine.surrogate_accuracy_after(&patch)?;
    Ok(AttackResult {
        attack_id: "pgd".into(),
        scenario: Scenario::Injection,
        payload: AttackPayload::Injection(patch),
        surrogate_accuracy_after,
        iterations_used: used,
    budget_exhausted: false,
    })
}

/// Structured injection: a chain over the injected nodes plus disjoint
/// target blocks per group, then gradient steps smoothed over the last five
/// sign matrices.
pub fn inject_speit(
    ctx: &AttackContext<'_>,
    step: f64,
    iters: usize,
) -> Result<AttackResult, AttackError> {
    ctx.require(Scenario::Injection)?;
    let budget = &ctx.budget;
    let n_inject = budget.max_injected_nodes;
    let cap = budget.max_edges_per_injected;

    // Fixed adjacency pattern before any feature optimization.
    let mut edges_internal = Vec::new();
    let mut degree = vec![0usize; n_inject];
    for i in 1..n_inject {
        if degree[i - 1] < cap && degree[i] < cap {
            edges_internal.push(((i - 1) as u32, i as u32));
            degree[i - 1] += 1;
            degree[i] += 1;
        }
    }
    let group_size = n_inject.div_ceil(8).max(1);
    let num_groups = n_inject.div_ceil(group_size);
    let mut edges_to_host = Vec::new();
    let mut covered = BTreeSet::new();
    let block = ctx.targets.len() / num_groups.max(1);
    for g in 0..num_groups {
        let lo = g * block;
        let hi = if g + 1 == num_groups {
            ctx.targets.len()
        } else {
            (g + 1) * block
        };
        let members: Vec<usize> = (g * group_size..((g + 1) * group_size).min(n_inject)).collect();
        let mut cursor = lo;
        'outer: loop {
            let mut progressed = false;
            for &i in &members {
                if degree[i] >= cap {
                    continue;
                }
                while cursor < hi && covered.contains(&ctx.targets[cursor]) {
                    cursor += 1;
                }
                if cursor >= hi {
                    break 'outer;
                }
                let t = ctx.targets[cursor];
                cursor += 1;
                edges_to_host.push((i as u32, t));
                covered.insert(t);
                degree[i] += 1;
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
    }
    // A node that got neither chain nor block edges still needs one edge.
    for (i, d) in degree.iter_mut().enumerate() {
        if *d == 0 {
            let t = ctx.targets[i % ctx.targets.len()];
            edges_to_host.push((i as u32, t));
            *d += 1;
        }
    }

    let mut patch = InjectionPatch {
        num_injected: n_inject,
        features: Array2::zeros((n_inject, ctx.host.num_features())),
        edges_to_host,
        edges_internal,
    };
    let engine = FeatureGradientEngine::new(ctx, &patch)?;
    let mut sign_window: VecDeque<Array2<f64>> = VecDeque::with_capacity(5);
    for _ in 0..iters {
        let out = engine.evaluate(&patch.features, &AttackLoss::NllAscent, true)?;
        let signs = out.grad.mapv(f64::signum);
        if sign_window.len() == 5 {
            sign_window.pop_front();
        }
        sign_window.push_back(signs);
        let mut smoothed = Array2::zeros(patch.features.raw_dim());
        for s in &sign_window {
            smoothed += s;
        }
        smoothed /= sign_window.len() as f64;
        ndarray::Zip::from(&mut patch.features)
            .and(&smoothed)
            .for_each(|x, &g| {
                *x = (*x + step * g).clamp(budget.feature_min, budget.feature_max);
            });
    }
    let surrogate_accuracy_after = engine.surrogate_accuracy_after(&patch)?;
    Ok(AttackResult {
        attack_id: "speit".into(),
        scenario: Scenario::Injection,
        payload: AttackPayload::Injection(patch),
        surrogate_accuracy_after,
        iterations_used: iters,
        budget_exhausted: false,
    })
}

/// Sequential injection around topologically vulnerable targets.
///
/// Rounds of `batch` nodes each: targets are scored by
/// `lambda / (1 + deg) + (1 - lambda) * (1 - max class probability)`,
/// the top scorers get wired round-robin, then all injected features are
/// optimized jointly by margin descent on the surrogate.
pub fn inject_tdgia(
    ctx: &AttackContext<'_>,
    step: f64,
    iters: usize,
    batch: usize,
    lambda: f64,
) -> Result<AttackResult, AttackError> {
    ctx.require(Scenario::Injection)?;
    let budget = &ctx.budget;
    let n_total = budget.max_injected_nodes;
    let batch = batch.clamp(1, n_total);
    let num_rounds = n_total.div_ceil(batch);
    let iters_per_round = iters / num_rounds.max(1);

    let d = ctx.host.num_features();
    let mut patch = InjectionPatch {
        num_injected: 0,
        features: Array2::zeros((0, d)),
        edges_to_host: Vec::new(),
        edges_internal: Vec::new(),
    };
    let mut engine = FeatureGradientEngine::new(ctx, &patch)?;
    let mut used = 0usize;

    while patch.num_injected < n_total {
        let round_nodes = batch.min(n_total - patch.num_injected);
        // Vulnerability scores on the current (already injected) graph.
        let current = ctx.host.apply_injection(&patch)?;
        let op = Arc::new(build_operator(ctx.surrogate.spec.arch, &current));
        let logits = ctx.surrogate.logits(&op, current.features())?;
        let degrees = current.degrees();
        let mut scored: Vec<(f64, u32)> = ctx
            .targets
            .iter()
            .map(|&t| {
                let row = logits.row(t as usize);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                let max_prob = 1.0 / sum; // softmax of the max logit
                let w = lambda / (1.0 + degrees[t as usize] as f64)
                    + (1.0 - lambda) * (1.0 - max_prob);
                (w, t)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

        // Wire the round's nodes to the best targets, round-robin, one edge
        // per (node, target) pair.
        let base = patch.num_injected;
        let want = round_nodes * budget.max_edges_per_injected;
        let chosen: Vec<u32> = scored.iter().take(want).map(|&(_, t)| t).collect();
        for (slot, &t) in chosen.iter().enumerate() {
            let node = base + slot % round_nodes;
            patch.edges_to_host.push((node as u32, t));
        }
        let mut grown = Array2::zeros((base + round_nodes, d));
        grown
            .slice_mut(ndarray::s![..base, ..])
            .assign(&patch.features);
        patch.features = grown;
        patch.num_injected = base + round_nodes;
        // A starved node (fewer targets than nodes) still needs one edge.
        for i in base..patch.num_injected {
            if !patch.edges_to_host.iter().any(|&(n, _)| n as usize == i) {
                patch
                    .edges_to_host
                    .push((i as u32, ctx.targets[i % ctx.targets.len()]));
            }
        }
        engine.rewire(ctx, &patch)?;

        for _ in 0..iters_per_round {
            let out = engine.evaluate(&patch.features, &AttackLoss::MarginDescent, true)?;
            let max_abs = out.grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
            if max_abs == 0.0 {
                break;
            }
            ndarray::Zip::from(&mut patch.features)
                .and(&out.grad)
                .for_each(|x, &g| {
                    *x = (*x - step * g / max_abs)
                        .clamp(budget.feature_min, budget.feature_max);
                });
            used += 1;
        }
    }
    let surrogate_accuracy_after = engine.surrogate_accuracy_after(&patch)?;
    Ok(AttackResult {
        attack_id: "tdgia".into(),
        scenario: Scenario::Injection,
        payload: AttackPayload::Injection(patch),
        surrogate_accuracy_after,
        iterations_used: used,
        budget_exhausted: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Arch, ModelSpec};
    use crate::prep::AttackBudget;

    fn setup() -> (GraphBundle, TrainedModel) {
        let g = crate::synth::two_cluster(40, 4, 0.3, 11);
        let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![8]).with_dropout(0.0);
        let m = TrainedModel::init(spec, g.num_features(), g.num_classes(), 1).unwrap();
        (g, m)
    }

    #[test]
    fn rnd_single_node_single_edge() {
        let (g, m) = setup();
        let targets = vec![3u32];
        let budget = AttackBudget::injection(1, 1, -1.0, 1.0);
        let ctx = AttackContext::new(&m, &g, &targets, budget, 0);
        let result = inject_rnd(&ctx).unwrap();
        let AttackPayload::Injection(patch) = &result.payload else {
            panic!()
        };
        assert_eq!(patch.num_injected, 1);
        assert_eq!(patch.edges_to_host, vec![(0, 3)]);
    }

    #[test]
    fn rnd_features_always_in_range() {
        let (g, m) = setup();
        let targets: Vec<u32> = (0..10).collect();
        let budget = AttackBudget::injection(50, 3, -0.05, 0.05);
        let ctx = AttackContext::new(&m, &g, &targets, budget, 3);
        let result = inject_rnd(&ctx).unwrap();
        let AttackPayload::Injection(patch) = &result.payload else {
            panic!()
        };
        assert!(patch
            .features
            .iter()
            .all(|&x| (-0.05..=0.05).contains(&x)));
    }

    #[test]
    fn fgsm_zero_iters_leaves_zero_features() {
        let (g, m) = setup();
        let targets: Vec<u32> = (0..8).collect();
        let budget = AttackBudget::injection(2, 2, -1.0, 1.0);
        let ctx = AttackContext::new(&m, &g, &targets, budget, 5);
        let result = inject_fgsm(&ctx, 0.01, 0).unwrap();
        let AttackPayload::Injection(patch) = &result.payload else {
            panic!()
        };
        assert!(patch.features.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fgsm_single_step_moves_by_step_size() {
        let (g, m) = setup();
        let targets: Vec<u32> = (0..8).collect();
        let budget = AttackBudget::injection(2, 2, -1.0, 1.0);
        let ctx = AttackContext::new(&m, &g, &targets, budget, 5);
        let result = inject_fgsm(&ctx, 0.01, 1).unwrap();
        let AttackPayload::Injection(patch) = &result.payload else {
            panic!()
        };
        // every feature moved by exactly ±0.01 or stayed (zero gradient)
        assert!(patch
            .features
            .iter()
            .all(|&x| x == 0.0 || (x.abs() - 0.01).abs() < 1e-12));
        assert!(patch.features.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn pgd_zero_iters_keeps_uniform_init() {
        let (g, m) = setup();
        let targets: Vec<u32> = (0..8).collect();
        let budget = AttackBudget::injection(2, 2, -0.5, 0.5);
        let ctx = AttackContext::new(&m, &g, &targets, budget, 5);
        let result = inject_pgd(&ctx, 0.01, 0).unwrap();
        let AttackPayload::Injection(patch) = &result.payload else {
            panic!()
        };
        // distinguishable from the FGSM zero init
        assert!(patch.features.iter().any(|&x| x != 0.0));
        assert!(patch.features.iter().all(|&x| (-0.5..=0.5).contains(&x)));
    }

    #[test]
    fn pgd_loss_trace_monotone() {
        let (g, m) = setup();
        let targets: Vec<u32> = (0..12).collect();
        let budget = AttackBudget::injection(3, 2, -1.0, 1.0);
        let ctx = AttackContext::new(&m, &g, &targets, budget, 7);
        // run twice with growing iteration counts: accepted loss never drops
        let mut last = f64::NEG_INFINITY;
        for iters in [1, 4, 10] {
            let result = inject_pgd(&ctx, 0.05, iters).unwrap();
            let AttackPayload::Injection(patch) = &result.payload else {
                panic!()
            };
            let engine = FeatureGradientEngine::new(&ctx, patch).unwrap();
            let loss = engine
                .evaluate(&patch.features, &AttackLoss::NllAscent, false)
                .unwrap()
                .loss;
            assert!(loss >= last - 1e-6, "loss {loss} dropped below {last}");
            last = loss;
        }
    }

    #[test]
    fn speit_structure_and_chain() {
        let (g, m) = setup();
        let targets: Vec<u32> = (0..8).collect();
        let budget = AttackBudget::injection(4, 2, -1.0, 1.0);
        let ctx = AttackContext::new(&m, &g, &targets, budget, 1);
        let result = inject_speit(&ctx, 0.01, 0).unwrap();
        let AttackPayload::Injection(patch) = &result.payload else {
            panic!()
        };
        // chain over 4 nodes has 3 internal edges
        assert_eq!(patch.edges_internal.len(), 3);
        // zero iterations leave zero features
        assert!(patch.features.iter().all(|&x| x == 0.0));
        // every target covered at most once
        let mut seen = BTreeSet::new();
        for &(_, t) in &patch.edges_to_host {
            assert!(seen.insert(t), "target {t} covered twice");
        }
        // chain edges count against the per-node cap
        for (i, d) in patch.injected_degrees().iter().enumerate() {
            assert!(*d <= 2, "node {i} has degree {d}");
        }
    }

    #[test]
    fn tdgia_degree_only_scoring_prefers_leaves() {
        // Star: hub 0, leaves 1..6. With lambda=1 scoring is pure degree.
        let mut edges = Vec::new();
        for v in 1..7u32 {
            edges.push((0, v));
        }
        let g = GraphBundle::from_edge_list(
            "star",
            7,
            &edges,
            Array2::zeros((7, 4)),
            vec![0, 1, 1, 1, 1, 1, 1],
            2,
        )
        .unwrap();
        let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![4]).with_dropout(0.0);
        let m = TrainedModel::init(spec, 4, 2, 2).unwrap();
        let targets: Vec<u32> = (0..7).collect();
        let budget = AttackBudget::injection(1, 3, -1.0, 1.0);
        let ctx = AttackContext::new(&m, &g, &targets, budget, 3);
        let result = inject_tdgia(&ctx, 0.01, 0, 1, 1.0).unwrap();
        let AttackPayload::Injection(patch) = &result.payload else {
            panic!()
        };
        // all wired targets are leaves, never the hub
        assert!(patch.edges_to_host.iter().all(|&(_, t)| t != 0));
    }

    #[test]
    fn tdgia_batch_equals_total_is_single_round() {
        let (g, m) = setup();
        let targets: Vec<u32> = (0..12).collect();
        let budget = AttackBudget::injection(4, 2, -1.0, 1.0);
        let ctx = AttackContext::new(&m, &g, &targets, budget, 9);
        let a = inject_tdgia(&ctx, 0.05, 4, 4, 0.5).unwrap();
        let AttackPayload::Injection(pa) = &a.payload else {
            panic!()
        };
        assert_eq!(pa.num_injected, 4);
    }

    #[test]
    fn deterministic_given_seed() {
        let (g, m) = setup();
        let targets: Vec<u32> = (0..10).collect();
        let budget = AttackBudget::injection(3, 2, -1.0, 1.0);
        let ctx = AttackContext::new(&m, &g, &targets, budget.clone(), 21);
        let a = inject_fgsm(&ctx, 0.01, 3).unwrap();
        let ctx2 = AttackContext::new(&m, &g, &targets, budget, 21);
        let b = inject_fgsm(&ctx2, 0.01, 3).unwrap();
        match (&a.payload, &b.payload) {
            (AttackPayload::Injection(x), AttackPayload::Injection(y)) => assert_eq!(x, y),
            _ => panic!(),
        }
    }
}
