//! Training loops: standard inductive training with Adam and early
//! stopping, plus adversarial training with on-the-fly node injection.
//!
//! Training only ever sees the subgraph induced on train∪val nodes; test
//! rows are physically absent, so the inductive contract holds by
//! construction.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PrepError, TrainError};
use crate::graph::{GraphBundle, InjectionPatch};
use crate::models::{
    build_operator, forward_on_tape, ModelSpec, ParamNodes, ParamSet, TrainedModel,
};
use crate::prep::DifficultySplit;
use crate::tape::Tape;

/// Optimizer and stopping configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Early-stop patience on validation accuracy.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            max_epochs: 1000,
            patience: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }
}

/// Adversarial-training schedule: warm up, then inject fresh attack nodes
/// each epoch and train on the perturbed graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtConfig {
    pub warmup_epochs: usize,
    pub step_size: f64,
    /// Attack steps per training iteration.
    pub attack_steps: usize,
    pub injected_nodes: usize,
    pub edges_per_node: usize,
    pub feature_min: f64,
    pub feature_max: f64,
    /// Optimizer epochs spent on each injected graph before the next
    /// attack round.
    #[serde(default = "default_inner_epochs")]
    pub inner_epochs: usize,
}

fn default_inner_epochs() -> usize {
    5
}

impl AtConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.feature_min >= self.feature_max {
            return Err(TrainError::InvalidConfig("empty feature range".into()));
        }
        Ok(())
    }
}

/// Published adversarial-training preset per dataset.
pub fn at_preset(dataset: &str) -> Result<AtConfig, PrepError> {
    let (nodes, edges, fmin, fmax) = match dataset {
        "grb-cora" => (20, 20, -0.94, 0.94),
        "grb-citeseer" => (30, 20, -0.96, 0.89),
        "grb-flickr" => (200, 100, -0.47, 0.99),
        "grb-reddit" => (500, 200, -0.98, 0.99),
        "grb-aminer" => (500, 100, -0.93, 0.93),
        "toy" => (4, 4, -1.0, 1.0),
        other => return Err(PrepError::UnknownDataset(other.to_string())),
    };
    Ok(AtConfig {
        warmup_epochs: 100,
        step_size: 0.01,
        attack_steps: 10,
        injected_nodes: nodes,
        edges_per_node: edges,
        feature_min: fmin,
        feature_max: fmax,
        inner_epochs: default_inner_epochs(),
    })
}

/// One training-log line, serialized as JSON-lines by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

/// Adam with bias correction; state per parameter matrix.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: usize,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    /// Apply one update. Parameters and gradients must line up with the
    /// shapes given at construction; a missing gradient leaves that
    /// parameter untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Array2<f64>>]) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (i, (param, grad)) in params.values_mut().zip(grads.iter()).enumerate() {
            let Some(g) = grad else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            });
            ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| {
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            });
            ndarray::Zip::from(param)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

/// Standard training: cross-entropy on train nodes of the induced
/// train∪val subgraph, Adam, early stopping on validation accuracy,
/// best-validation parameters returned. Deterministic given the seed.
pub fn train(
    spec: &ModelSpec,
    g: &GraphBundle,
    split: &DifficultySplit,
    cfg: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    Ok(train_with_log(spec, g, split, cfg, None)?.0)
}

/// Adversarial training: after a warm-up, every epoch injects fresh
/// gradient-crafted nodes targeting train nodes on the current weights,
/// then minimizes the loss of the original train nodes on the injected
/// graph. Injected nodes are discarded after each epoch; the attack in one
/// epoch is independent of previous epochs.
pub fn adversarial_train(
    spec: &ModelSpec,
    g: &GraphBundle,
    split: &DifficultySplit,
    cfg: &TrainConfig,
    at: &AtConfig,
) -> Result<TrainedModel, TrainError> {
    at.validate()?;
    Ok(train_with_log(spec, g, split, cfg, Some(at))?.0)
}

/// Training engine shared by [`train`] and [`adversarial_train`].
pub fn train_with_log(
    spec: &ModelSpec,
    g: &GraphBundle,
    split: &DifficultySplit,
    cfg: &TrainConfig,
    at: Option<&AtConfig>,
) -> Result<(TrainedModel, Vec<TrainLogEntry>), TrainError> {
    if split.train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if cfg.patience == 0 {
        return Err(TrainError::InvalidConfig("patience must be >= 1".into()));
    }
    spec.validate().map_err(TrainError::Model)?;

    // The inductive subgraph: only train and val rows exist here.
    let keep = split.train_val();
    let (sub, mapping) = g.induced_subgraph(&keep)?;
    let mut position = std::collections::HashMap::new();
    for (new_id, &old) in mapping.iter().enumerate() {
        position.insert(old, new_id);
    }
    let train_rows: Vec<usize> = split.train.iter().map(|v| position[v]).collect();
    let val_rows: Vec<usize> = split.val.iter().map(|v| position[v]).collect();
    let train_labels: Vec<u32> = train_rows.iter().map(|&r| sub.labels()[r]).collect();
    let val_labels: Vec<u32> = val_rows.iter().map(|&r| sub.labels()[r]).collect();

    let input_dim = g.num_features();
    let output_dim = g.num_classes();
    let mut model = TrainedModel::init(spec.clone(), input_dim, output_dim, cfg.seed)?;
    let shapes: Vec<(usize, usize)> = model
        .params
        .values()
        .map(|v| (v.nrows(), v.ncols()))
        .collect();
    let mut adam = Adam::new(cfg.lr, &shapes);

    let clean_op = Arc::new(build_operator(spec.arch, &sub));
    // Separate stream for attack randomness so disabling AT leaves the
    // training stream untouched.
    let mut attack_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));

    // An AT schedule whose warm-up covers every epoch (or with no attack
    // steps) degenerates to plain training.
    let at_active = at.filter(|a| {
        a.attack_steps > 0 && a.injected_nodes > 0 && a.warmup_epochs < cfg.max_epochs
    });
    // Plain training early-stops on clean validation accuracy. Adversarial
    // training runs its warm-up to completion and then scores checkpoints
    // by validation accuracy *under a fresh injection targeting the
    // validation rows*: clean validation peaks during the warm-up, so
    // selecting on it would hand back an effectively vanilla model, and
    // robustness on long runs degrades again after its own peak.
    let track_from = at_active.map_or(0, |a| a.warmup_epochs);

    let mut best_val = f64::NEG_INFINITY;
    let mut best_params = model.params.clone();
    let mut best_epoch = track_from;
    let mut log = Vec::new();

    let mut epoch = 0usize;
    'training: while epoch < cfg.max_epochs {
        let at_round = at_active.filter(|a| epoch >= a.warmup_epochs);

        // Prepare this round's graph: one fresh injection per round, then
        // several optimizer epochs on it. Injected nodes append after the
        // originals, so train row indices stay valid.
        let injected_graph;
        let graph: &GraphBundle;
        let op: Arc<crate::operator::GraphOperator>;
        let round_epochs;
        if let Some(a) = at_round {
            let patch = craft_training_injection(
                &model,
                &sub,
                &train_rows,
                &train_labels,
                a,
                &mut attack_rng,
            )?;
            injected_graph = sub.apply_injection(&patch)?;
            op = Arc::new(build_operator(spec.arch, &injected_graph));
            graph = &injected_graph;
            round_epochs = a.inner_epochs.max(1);
        } else {
            graph = &sub;
            op = Arc::clone(&clean_op);
            round_epochs = 1;
        }

        for _ in 0..round_epochs {
            if epoch >= cfg.max_epochs {
                break;
            }
            // Forward/backward with dropout active.
            let mut tape = Tape::new(true, cfg.seed.wrapping_add(epoch as u64));
            let x = tape.constant(graph.features().clone());
            let param_nodes = ParamNodes::register(&mut tape, &model.params, true);
            let logits = forward_on_tape(&mut tape, spec, &param_nodes, &op, x)?;
            let logp = tape.log_softmax(logits);
            let picked = tape.gather_rows(logp, &train_rows)?;
            let loss_node = tape.nll_loss(picked, &train_labels)?;
            let loss = tape.value(loss_node)[[0, 0]];
            if !loss.is_finite() {
                return Err(TrainError::Diverged(epoch));
            }
            tape.backward(loss_node)?;
            let grads: Vec<Option<Array2<f64>>> = param_nodes
                .ids()
                .map(|id| tape.grad(id).cloned())
                .collect();
            adam.step(&mut model.params, &grads);

            // Validation accuracy on the clean subgraph, eval mode.
            let val_acc = if val_rows.is_empty() {
                // degenerate but allowed: fall back to train accuracy
                accuracy_on(&model, &clean_op, &sub, &train_rows, &train_labels)?
            } else {
                accuracy_on(&model, &clean_op, &sub, &val_rows, &val_labels)?
            };
            log.push(TrainLogEntry {
                epoch,
                train_loss: loss,
                val_acc,
            });
            epoch += 1;

            if at_active.is_none() {
                let e = epoch - 1;
                if val_acc > best_val {
                    best_val = val_acc;
                    best_params = model.params.clone();
                    best_epoch = e;
                } else if e - best_epoch >= cfg.patience {
                    break 'training;
                }
            }
        }

        if let Some(a) = at_round {
            // Robust validation: fresh injection aimed at the val rows.
            let robust_val = if val_rows.is_empty() {
                log.last().map_or(0.0, |e| e.val_acc)
            } else {
                let probe = craft_training_injection(
                    &model,
                    &sub,
                    &val_rows,
                    &val_labels,
                    a,
                    &mut attack_rng,
                )?;
                let attacked = sub.apply_injection(&probe)?;
                let attacked_op = Arc::new(build_operator(spec.arch, &attacked));
                accuracy_on(&model, &attacked_op, &attacked, &val_rows, &val_labels)?
            };
            if robust_val > best_val {
                best_val = robust_val;
                best_params = model.params.clone();
                best_epoch = epoch;
            } else if epoch - best_epoch >= cfg.patience {
                break;
            }
        }
    }

    model.params = best_params;
    Ok((model, log))
}

/// Finite-difference check of the training-loss gradient with respect to
/// the feature matrix: builds a fresh seeded model, computes the analytic
/// gradient on the tape, and compares against central differences.
/// Returns the maximum relative error over all feature entries.
pub fn feature_grad_check(
    spec: &ModelSpec,
    g: &GraphBundle,
    seed: u64,
) -> Result<f64, TrainError> {
    let model = TrainedModel::init(spec.clone(), g.num_features(), g.num_classes(), seed)?;
    let op = Arc::new(build_operator(spec.arch, g));
    let labels = g.labels().to_vec();
    let rows: Vec<usize> = (0..g.num_nodes()).collect();
    let build_loss = |tape: &mut Tape, x: crate::tape::NodeId| -> Result<f64, TrainError> {
        let params = ParamNodes::register(tape, &model.params, false);
        let logits = forward_on_tape(tape, spec, &params, &op, x)?;
        let logp = tape.log_softmax(logits);
        let picked = tape.gather_rows(logp, &rows)?;
        let loss = tape.nll_loss(picked, &labels)?;
        tape.backward(loss)?;
        Ok(tape.value(loss)[[0, 0]])
    };
    let mut tape = Tape::new(false, 0);
    let xn = tape.input(g.features().clone(), true);
    build_loss(&mut tape, xn)?;
    let analytic = tape
        .grad(xn)
        .cloned()
        .ok_or_else(|| TrainError::InvalidConfig("no feature gradient".into()))?;
    let loss_of = |x: &Array2<f64>| -> f64 {
        let mut tape = Tape::new(false, 0);
        let xn = tape.constant(x.clone());
        let params = ParamNodes::register(&mut tape, &model.params, false);
        let logits = forward_on_tape(&mut tape, spec, &params, &op, xn).expect("forward");
        let logp = tape.log_softmax(logits);
        let picked = tape.gather_rows(logp, &rows).expect("gather");
        let loss = tape.nll_loss(picked, &labels).expect("loss");
        tape.value(loss)[[0, 0]]
    };
    Ok(crate::tape::grad_check(
        loss_of,
        g.features(),
        &analytic,
        1e-5,
    ))
}

fn accuracy_on(
    model: &TrainedModel,
    op: &Arc<crate::operator::GraphOperator>,
    g: &GraphBundle,
    rows: &[usize],
    labels: &[u32],
) -> Result<f64, TrainError> {
    let preds = model.predict_with_operator(op, g.features())?;
    let correct = rows
        .iter()
        .zip(labels.iter())
        .filter(|(&r, &l)| preds[r] == l)
        .count();
    Ok(correct as f64 / rows.len().max(1) as f64)
}

/// Gradient-sign node injection against the current weights, used inside
/// adversarial training. Targets are train nodes; the loss being maximized
/// is the true-label cross-entropy of the target rows, and gradients flow
/// only into the injected feature rows.
fn craft_training_injection(
    model: &TrainedModel,
    sub: &GraphBundle,
    train_rows: &[usize],
    train_labels: &[u32],
    at: &AtConfig,
    rng: &mut ChaCha8Rng,
) -> Result<InjectionPatch, TrainError> {
    let d = sub.num_features();
    let n_inject = at.injected_nodes;
    // Concentrate the round's edges on a random train subset at roughly
    // the density an inference-time injection attack achieves (about 1.5
    // edges per target); spreading them thinly over all train nodes would
    // leave every attacked row below the pressure the model must survive.
    let total_edges = n_inject * at.edges_per_node;
    let subset_size = ((total_edges as f64 / 1.5).ceil() as usize)
        .clamp(1, train_rows.len());
    let mut pool: Vec<u32> = train_rows.iter().map(|&r| r as u32).collect();
    for i in 0..subset_size {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let subset = &pool[..subset_size];
    let mut edges_to_host = Vec::with_capacity(total_edges);
    for i in 0..n_inject {
        let mut seen = std::collections::BTreeSet::new();
        let picks = at.edges_per_node.min(subset.len());
        while seen.len() < picks {
            seen.insert(subset[rng.random_range(0..subset.len())]);
        }
        for t in seen {
            edges_to_host.push((i as u32, t));
        }
    }
    let mut patch = InjectionPatch {
        num_injected: n_inject,
        features: Array2::zeros((n_inject, d)),
        edges_to_host,
        edges_internal: Vec::new(),
    };
    let injected = sub.apply_injection(&patch)?;
    let op = Arc::new(build_operator(model.spec.arch, &injected));
    // Classic fast-gradient-sign: the first move jumps the full budget to
    // the adversarial corner; the remaining steps refine at the configured
    // step size.
    for step in 0..at.attack_steps.max(1) {
        let mut tape = Tape::new(false, 0);
        let host_x = tape.constant(sub.features().clone());
        let inj_x = tape.input(patch.features.clone(), true);
        let full_x = tape.concat_rows(host_x, inj_x)?;
        let params = ParamNodes::register(&mut tape, &model.params, false);
        let logits = forward_on_tape(&mut tape, &model.spec, &params, &op, full_x)?;
        let logp = tape.log_softmax(logits);
        let picked = tape.gather_rows(logp, train_rows)?;
        let loss = tape.nll_loss(picked, train_labels)?;
        tape.backward(loss)?;
        let Some(grad) = tape.grad(inj_x) else { break };
        let magnitude = if step == 0 {
            at.feature_max.abs().max(at.feature_min.abs())
        } else {
            at.step_size
        };
        // ascend the training loss
        ndarray::Zip::from(&mut patch.features)
            .and(grad)
            .for_each(|x, &g| {
                *x = (*x + magnitude * g.signum())
                    .clamp(at.feature_min, at.feature_max);
            });
    }
    Ok(patch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Arch;
    use crate::synth;

    fn toy_setup() -> (GraphBundle, DifficultySplit) {
        let g = synth::two_cluster(120, 6, 0.4, 7);
        let split = crate::prep::degree_split(
            &g,
            &crate::prep::SplitConfig::default().with_seed(1),
        )
        .unwrap();
        (g, split)
    }

    #[test]
    fn overfits_two_cluster_graph() {
        let (g, split) = toy_setup();
        let spec = ModelSpec::new(Arch::Gcn)
            .with_hidden(vec![16])
            .with_dropout(0.0);
        let cfg = TrainConfig {
            max_epochs: 200,
            patience: 200,
            ..TrainConfig::default()
        };
        let model = train(&spec, &g, &split, &cfg).unwrap();
        // train accuracy on the induced subgraph
        let keep = split.train_val();
        let (sub, mapping) = g.induced_subgraph(&keep).unwrap();
        let mut pos = std::collections::HashMap::new();
        for (i, &v) in mapping.iter().enumerate() {
            pos.insert(v, i);
        }
        let preds = model.predict(&sub).unwrap();
        let correct = split
            .train
            .iter()
            .filter(|v| preds[pos[*v]] == g.labels()[**v as usize])
            .count();
        let acc = correct as f64 / split.train.len() as f64;
        assert!(acc >= 1.0 - 1e-9, "expected full train accuracy, got {acc}");
    }

    #[test]
    fn same_seed_bit_identical_parameters() {
        let (g, split) = toy_setup();
        let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![8]);
        let cfg = TrainConfig {
            max_epochs: 30,
            ..TrainConfig::default()
        }
        .with_seed(11);
        let a = train(&spec, &g, &split, &cfg).unwrap();
        let b = train(&spec, &g, &split, &cfg).unwrap();
        for ((_, x), (_, y)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn training_never_reads_test_rows() {
        let (g, split) = toy_setup();
        // Poison every test row with NaN; training must still succeed.
        let mut features = g.features().clone();
        for &v in split
            .test_easy
            .iter()
            .chain(&split.test_medium)
            .chain(&split.test_hard)
        {
            features.row_mut(v as usize).fill(f64::NAN);
        }
        let poisoned = g.with_features(features).unwrap();
        let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![8]);
        let cfg = TrainConfig {
            max_epochs: 20,
            ..TrainConfig::default()
        };
        let model = train(&spec, &poisoned, &split, &cfg).unwrap();
        assert!(model.params.values().all(|p| p.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn at_warmup_equals_plain_training() {
        let (g, split) = toy_setup();
        let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![8]);
        let cfg = TrainConfig {
            max_epochs: 25,
            ..TrainConfig::default()
        }
        .with_seed(5);
        let at = AtConfig {
            warmup_epochs: 25, // warm-up covers every epoch: AT disabled
            step_size: 0.01,
            attack_steps: 10,
            injected_nodes: 4,
            edges_per_node: 2,
            feature_min: -1.0,
            feature_max: 1.0,
            inner_epochs: 5,
        };
        let plain = train(&spec, &g, &split, &cfg).unwrap();
        let adv = adversarial_train(&spec, &g, &split, &cfg, &at).unwrap();
        for ((_, x), (_, y)) in plain.params.iter().zip(adv.params.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn at_zero_steps_equals_plain_training() {
        let (g, split) = toy_setup();
        let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![8]);
        let cfg = TrainConfig {
            max_epochs: 25,
            ..TrainConfig::default()
        }
        .with_seed(5);
        let at = AtConfig {
            warmup_epochs: 0,
            step_size: 0.01,
            attack_steps: 0, // no attack: must match train() exactly
            injected_nodes: 4,
            edges_per_node: 2,
            feature_min: -1.0,
            feature_max: 1.0,
            inner_epochs: 5,
        };
        let plain = train(&spec, &g, &split, &cfg).unwrap();
        let adv = adversarial_train(&spec, &g, &split, &cfg, &at).unwrap();
        for ((_, x), (_, y)) in plain.params.iter().zip(adv.params.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut params = ParamSet::new();
        params.push("w", Array2::from_elem((2, 2), 0.5));
        let mut adam = Adam::new(0.01, &[(2, 2)]);
        let grads = vec![Some(Array2::zeros((2, 2)))];
        adam.step(&mut params, &grads);
        for &v in params.get("w").unwrap().iter() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn at_loss_mask_excludes_injected_rows() {
        // Gradient of the masked loss w.r.t. injected logits must be zero:
        // the nll only gathers original train rows.
        let (g, split) = toy_setup();
        let keep = split.train_val();
        let (sub, mapping) = g.induced_subgraph(&keep).unwrap();
        let mut pos = std::collections::HashMap::new();
        for (i, &v) in mapping.iter().enumerate() {
            pos.insert(v, i);
        }
        let train_rows: Vec<usize> = split.train.iter().map(|v| pos[v]).collect();
        let train_labels: Vec<u32> = train_rows.iter().map(|&r| sub.labels()[r]).collect();
        let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![8]).with_dropout(0.0);
        let model = TrainedModel::init(spec.clone(), sub.num_features(), sub.num_classes(), 3)
            .unwrap();
        let patch = InjectionPatch {
            num_injected: 2,
            features: Array2::zeros((2, sub.num_features())),
            edges_to_host: vec![(0, train_rows[0] as u32), (1, train_rows[1] as u32)],
            edges_internal: vec![],
        };
        let injected = sub.apply_injection(&patch).unwrap();
        let op = Arc::new(build_operator(spec.arch, &injected));
        let mut tape = Tape::new(false, 0);
        let x = tape.constant(injected.features().clone());
        let params = ParamNodes::register(&mut tape, &model.params, false);
        let logits = forward_on_tape(&mut tape, &spec, &params, &op, x).unwrap();
        let logp = tape.log_softmax(logits);
        // mark the logits as a gradient target through an identity update
        let probe = tape.input(Array2::zeros((2, sub.num_classes())), true);
        let rows: Vec<usize> = (sub.num_nodes()..injected.num_nodes()).collect();
        let patched = tape.row_update(logp, probe, &rows).unwrap();
        let picked = tape.gather_rows(patched, &train_rows).unwrap();
        let loss = tape.nll_loss(picked, &train_labels).unwrap();
        tape.backward(loss).unwrap();
        let grad = tape.grad(probe).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }
}
