//! The model zoo: pure forward builders over the tape, plus checkpoint
//! persistence.
//!
//! Every architecture maps a propagation operator and an `N×D` feature
//! matrix to `N×L` logits. Forward passes are pure; a [`TrainedModel`] is
//! immutable and safe to share across threads.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::graph::GraphBundle;
use crate::operator::{
    gcn_normalize, gcn_normalize_dense, raw_adjacency, row_normalize, row_normalize_dense,
    GraphOperator,
};
use crate::tape::{NodeId, Tape};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"GRBM1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Sgc,
    Tagcn,
    Appnp,
    Gin,
    Sage,
}

impl Arch {
    pub const ALL: [Arch; 6] = [
        Arch::Gcn,
        Arch::Sgc,
        Arch::Tagcn,
        Arch::Appnp,
        Arch::Gin,
        Arch::Sage,
    ];

    pub fn parse(s: &str) -> Option<Arch> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Some(Arch::Gcn),
            "sgc" | "sgcn" => Some(Arch::Sgc),
            "tagcn" => Some(Arch::Tagcn),
            "appnp" => Some(Arch::Appnp),
            "gin" => Some(Arch::Gin),
            "sage" | "graphsage" => Some(Arch::Sage),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Sgc => "sgc",
            Arch::Tagcn => "tagcn",
            Arch::Appnp => "appnp",
            Arch::Gin => "gin",
            Arch::Sage => "sage",
        }
    }
}

/// Architecture configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub hidden_sizes: Vec<usize>,
    pub with_layer_norm: bool,
    pub dropout: f64,
    /// Propagation hops for SGC and TAGCN.
    pub hops: usize,
    /// Teleport weight for APPNP.
    pub alpha: f64,
    /// Power-iteration count for APPNP.
    pub propagation_iters: usize,
}

impl ModelSpec {
    /// Published defaults: hidden 64/64/64 (APPNP: 64), dropout 0.5,
    /// SGC k=4, TAGCN k=2, APPNP alpha=0.01 k=10.
    pub fn new(arch: Arch) -> Self {
        let hidden_sizes = match arch {
            Arch::Appnp => vec![64],
            _ => vec![64, 64, 64],
        };
        let hops = match arch {
            Arch::Sgc => 4,
            Arch::Tagcn => 2,
            _ => 1,
        };
        ModelSpec {
            arch,
            hidden_sizes,
            with_layer_norm: false,
            dropout: 0.5,
            hops,
            alpha: 0.01,
            propagation_iters: 10,
        }
    }

    pub fn with_layer_norm(mut self) -> Self {
        self.with_layer_norm = true;
        self
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden_sizes = hidden;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    pub fn with_hops(mut self, k: usize) -> Self {
        self.hops = k;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_sizes.is_empty() {
            return Err(ModelError::InvalidSpec("hidden_sizes is empty".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidSpec(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.hops < 1 {
            return Err(ModelError::InvalidSpec("hops must be >= 1".into()));
        }
        if self.arch == Arch::Appnp && !(0.0..=1.0).contains(&self.alpha) {
            return Err(ModelError::InvalidSpec(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Display id like `gcn+ln`.
    pub fn id(&self) -> String {
        if self.with_layer_norm {
            format!("{}+ln", self.arch.name())
        } else {
            self.arch.name().to_string()
        }
    }
}

/// Named parameter matrices in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Array2<f64>)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Result<&Array2<f64>, ModelError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| ModelError::MissingParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.entries.iter_mut().map(|(_, v)| v)
    }

    pub fn values(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.entries.iter().map(|(_, v)| v)
    }

    pub fn num_scalars(&self) -> usize {
        self.values().map(|v| v.len()).sum()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// An architecture plus its learned parameters.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub input_dim: usize,
    pub output_dim: usize,
    pub params: ParamSet,
    pub seed: u64,
}

/// Shapes of every parameter a spec requires for the given dims, in order.
pub fn parameter_shapes(
    spec: &ModelSpec,
    input_dim: usize,
    output_dim: usize,
) -> Vec<(String, (usize, usize))> {
    let mut shapes = Vec::new();
    let mut ln_idx = 0usize;
    let mut push_ln = |shapes: &mut Vec<(String, (usize, usize))>, width: usize| {
        shapes.push((format!("ln{ln_idx}.gain"), (1, width)));
        shapes.push((format!("ln{ln_idx}.bias"), (1, width)));
        ln_idx += 1;
    };
    let dims: Vec<usize> = std::iter::once(input_dim)
        .chain(spec.hidden_sizes.iter().copied())
        .chain(std::iter::once(output_dim))
        .collect();
    let layers = dims.len() - 1;
    match spec.arch {
        Arch::Gcn | Arch::Sgc | Arch::Sage | Arch::Appnp => {
            // LN parameters: one on the input, one after every layer
            // except the last.
            for l in 0..layers {
                let fan_in = match spec.arch {
                    Arch::Sage => dims[l] * 2,
                    _ => dims[l],
                };
                if spec.with_layer_norm && l == 0 {
                    push_ln(&mut shapes, dims[0]);
                }
                shapes.push((format!("w{l}"), (fan_in, dims[l + 1])));
                shapes.push((format!("b{l}"), (1, dims[l + 1])));
                if spec.with_layer_norm && l + 1 < layers {
                    push_ln(&mut shapes, dims[l + 1]);
                }
            }
        }
        Arch::Tagcn => {
            for l in 0..layers {
                if spec.with_layer_norm && l == 0 {
                    push_ln(&mut shapes, dims[0]);
                }
                shapes.push((format!("w{l}"), (dims[l] * (spec.hops + 1), dims[l + 1])));
                shapes.push((format!("b{l}"), (1, dims[l + 1])));
                if spec.with_layer_norm && l + 1 < layers {
                    push_ln(&mut shapes, dims[l + 1]);
                }
            }
        }
        Arch::Gin => {
            // Each GIN layer applies a two-linear MLP to (1+eps)X + AX.
            for l in 0..layers - 1 {
                if spec.with_layer_norm && l == 0 {
                    push_ln(&mut shapes, dims[0]);
                }
                shapes.push((format!("w{l}a"), (dims[l], dims[l + 1])));
                shapes.push((format!("b{l}a"), (1, dims[l + 1])));
                shapes.push((format!("w{l}b"), (dims[l + 1], dims[l + 1])));
                shapes.push((format!("b{l}b"), (1, dims[l + 1])));
                if spec.with_layer_norm && l + 1 < layers - 1 {
                    push_ln(&mut shapes, dims[l + 1]);
                }
            }
            let last_hidden = dims[layers - 1];
            shapes.push(("w_out".into(), (last_hidden, output_dim)));
            shapes.push(("b_out".into(), (1, output_dim)));
        }
    }
    shapes
}

/// Seeded uniform Glorot initialization for every parameter of a spec.
pub fn init_params(
    spec: &ModelSpec,
    input_dim: usize,
    output_dim: usize,
    seed: u64,
) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for (name, (rows, cols)) in parameter_shapes(spec, input_dim, output_dim) {
        let value = if name.ends_with(".gain") {
            Array2::ones((rows, cols))
        } else if name.ends_with(".bias") || name.starts_with('b') {
            Array2::zeros((rows, cols))
        } else {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
        };
        params.push(name, value);
    }
    params
}

/// Parameter nodes registered on a tape, in spec order.
pub struct ParamNodes {
    entries: Vec<(String, NodeId)>,
}

impl ParamNodes {
    /// Put every parameter on the tape. `trainable` marks them as gradient
    /// targets (training); pass `false` when a frozen model is attacked.
    pub fn register(tape: &mut Tape, params: &ParamSet, trainable: bool) -> Self {
        let entries = params
            .iter()
            .map(|(name, value)| (name.to_string(), tape.input(value.clone(), trainable)))
            .collect();
        ParamNodes { entries }
    }

    pub fn get(&self, name: &str) -> Result<NodeId, ModelError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| ModelError::MissingParameter(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.iter().map(|(_, id)| *id)
    }
}

struct LnCounter(usize);

impl LnCounter {
    fn apply(
        &mut self,
        tape: &mut Tape,
        params: &ParamNodes,
        x: NodeId,
    ) -> Result<NodeId, ModelError> {
        let gain = params.get(&format!("ln{}.gain", self.0))?;
        let bias = params.get(&format!("ln{}.bias", self.0))?;
        self.0 += 1;
        Ok(tape.layer_norm_rows(x, gain, bias)?)
    }
}

/// Build the logits of `spec` on an existing tape.
///
/// The propagation operator must match the architecture (see
/// [`build_operator`]). With layer norm enabled, normalization is applied to
/// the input and after every layer except the last.
pub fn forward_on_tape(
    tape: &mut Tape,
    spec: &ModelSpec,
    params: &ParamNodes,
    op: &Arc<GraphOperator>,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    let mut ln = LnCounter(0);
    let layers = spec.hidden_sizes.len() + 1;
    match spec.arch {
        Arch::Gcn => {
            let mut h = x;
            for l in 0..layers {
                if spec.with_layer_norm {
                    h = ln.apply(tape, params, h)?;
                }
                if l > 0 {
                    h = tape.dropout(h, spec.dropout);
                }
                let hw = tape.matmul(h, params.get(&format!("w{l}"))?)?;
                let prop = tape.spmm(op, hw)?;
                h = tape.add_bias(prop, params.get(&format!("b{l}"))?)?;
                if l + 1 < layers {
                    h = tape.relu(h);
                }
            }
            Ok(h)
        }
        Arch::Sgc => {
            // Hop-k propagation once, then an affine chain (a linear model).
            let mut h = x;
            if spec.with_layer_norm {
                h = ln.apply(tape, params, h)?;
            }
            for _ in 0..spec.hops {
                h = tape.spmm(op, h)?;
            }
            for l in 0..layers {
                if l > 0 && spec.with_layer_norm {
                    h = ln.apply(tape, params, h)?;
                }
                if l > 0 {
                    h = tape.dropout(h, spec.dropout);
                }
                let hw = tape.matmul(h, params.get(&format!("w{l}"))?)?;
                h = tape.add_bias(hw, params.get(&format!("b{l}"))?)?;
            }
            Ok(h)
        }
        Arch::Tagcn => {
            let mut h = x;
            for l in 0..layers {
                if spec.with_layer_norm {
                    h = ln.apply(tape, params, h)?;
                }
                if l > 0 {
                    h = tape.dropout(h, spec.dropout);
                }
                // concat(H, A H, ..., A^k H) over feature columns.
                let mut hops = vec![h];
                let mut cur = h;
                for _ in 0..spec.hops {
                    cur = tape.spmm(op, cur)?;
                    hops.push(cur);
                }
                let cat = tape.concat_cols(&hops)?;
                let hw = tape.matmul(cat, params.get(&format!("w{l}"))?)?;
                h = tape.add_bias(hw, params.get(&format!("b{l}"))?)?;
                if l + 1 < layers {
                    h = tape.relu(h);
                }
            }
            Ok(h)
        }
        Arch::Appnp => {
            // MLP head, then personalized-PageRank style propagation:
            // Z <- (1-alpha) A Z + alpha H.
            let mut h = x;
            for l in 0..layers {
                if spec.with_layer_norm {
                    h = ln.apply(tape, params, h)?;
                }
                if l > 0 {
                    h = tape.dropout(h, spec.dropout);
                }
                let hw = tape.matmul(h, params.get(&format!("w{l}"))?)?;
                h = tape.add_bias(hw, params.get(&format!("b{l}"))?)?;
                if l + 1 < layers {
                    h = tape.relu(h);
                }
            }
            let head = h;
            let mut z = head;
            for _ in 0..spec.propagation_iters {
                let az = tape.spmm(op, z)?;
                z = tape.scale_add(1.0 - spec.alpha, az, spec.alpha, head)?;
            }
            Ok(z)
        }
        Arch::Gin => {
            // Sum aggregation with a two-linear MLP per layer.
            let eps = 0.0;
            let mut h = x;
            let hidden_layers = spec.hidden_sizes.len();
            for l in 0..hidden_layers {
                if spec.with_layer_norm {
                    h = ln.apply(tape, params, h)?;
                }
                if l > 0 {
                    h = tape.dropout(h, spec.dropout);
                }
                let ah = tape.spmm(op, h)?;
                let agg = tape.scale_add(1.0 + eps, h, 1.0, ah)?;
                let h1 = tape.matmul(agg, params.get(&format!("w{l}a"))?)?;
                let h1 = tape.add_bias(h1, params.get(&format!("b{l}a"))?)?;
                let h1 = tape.relu(h1);
                let h2 = tape.matmul(h1, params.get(&format!("w{l}b"))?)?;
                let h2 = tape.add_bias(h2, params.get(&format!("b{l}b"))?)?;
                h = tape.relu(h2);
            }
            let out = tape.matmul(h, params.get("w_out")?)?;
            let out = tape.add_bias(out, params.get("b_out")?)?;
            Ok(out)
        }
        Arch::Sage => {
            // Mean aggregation: concat(H, A H) W + b per layer.
            let mut h = x;
            for l in 0..layers {
                if spec.with_layer_norm {
                    h = ln.apply(tape, params, h)?;
                }
                if l > 0 {
                    h = tape.dropout(h, spec.dropout);
                }
                let ah = tape.spmm(op, h)?;
                let cat = tape.concat_cols(&[h, ah])?;
                let hw = tape.matmul(cat, params.get(&format!("w{l}"))?)?;
                h = tape.add_bias(hw, params.get(&format!("b{l}"))?)?;
                if l + 1 < layers {
                    h = tape.relu(h);
                }
            }
            Ok(h)
        }
    }
}

/// Precomputed host-side state for repeated forward passes over a graph
/// whose injected feature rows change while everything else stays fixed.
///
/// For architectures whose pipeline starts with row-separable transforms
/// (GCN: optional input LN then the first weight matrix; APPNP: the whole
/// MLP head), the host rows of that prefix are computed once; per-pass
/// tapes then only transform the injected rows before the first
/// propagation. Other architectures fall back to the full forward.
pub enum InjectionForward {
    Generic {
        host_features: Array2<f64>,
    },
    /// GCN: host rows of `ln0?(X) . W0`.
    GcnSplit {
        host_first: Array2<f64>,
    },
    /// APPNP: host rows of the MLP head output.
    AppnpSplit {
        host_head: Array2<f64>,
    },
}

/// Choose and precompute the fastest valid plan for a model and host.
pub fn plan_injection_forward(
    model: &TrainedModel,
    host_features: &Array2<f64>,
) -> Result<InjectionForward, ModelError> {
    match model.spec.arch {
        Arch::Gcn => {
            let mut tape = Tape::new(false, 0);
            let x = tape.constant(host_features.clone());
            let params = ParamNodes::register(&mut tape, &model.params, false);
            let h = if model.spec.with_layer_norm {
                let gain = params.get("ln0.gain")?;
                let bias = params.get("ln0.bias")?;
                tape.layer_norm_rows(x, gain, bias)?
            } else {
                x
            };
            let first = tape.matmul(h, params.get("w0")?)?;
            Ok(InjectionForward::GcnSplit {
                host_first: tape.value(first).clone(),
            })
        }
        Arch::Appnp => {
            let mut tape = Tape::new(false, 0);
            let x = tape.constant(host_features.clone());
            let params = ParamNodes::register(&mut tape, &model.params, false);
            let head = mlp_head_on_tape(&mut tape, &model.spec, &params, x)?;
            Ok(InjectionForward::AppnpSplit {
                host_head: tape.value(head).clone(),
            })
        }
        _ => Ok(InjectionForward::Generic {
            host_features: host_features.clone(),
        }),
    }
}

/// The row-wise MLP of an APPNP spec (everything before propagation).
fn mlp_head_on_tape(
    tape: &mut Tape,
    spec: &ModelSpec,
    params: &ParamNodes,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    let layers = spec.hidden_sizes.len() + 1;
    let mut ln = LnCounter(0);
    let mut h = x;
    for l in 0..layers {
        if spec.with_layer_norm {
            h = ln.apply(tape, params, h)?;
        }
        if l > 0 {
            h = tape.dropout(h, spec.dropout);
        }
        let hw = tape.matmul(h, params.get(&format!("w{l}"))?)?;
        h = tape.add_bias(hw, params.get(&format!("b{l}"))?)?;
        if l + 1 < layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Logits of the injected graph, with gradients flowing only through
/// `injected` (the injected nodes' feature rows). The operator must match
/// the injected graph's node count.
pub fn forward_with_injection(
    tape: &mut Tape,
    model: &TrainedModel,
    plan: &InjectionForward,
    op: &Arc<GraphOperator>,
    injected: NodeId,
) -> Result<NodeId, ModelError> {
    let params = ParamNodes::register(tape, &model.params, false);
    let spec = &model.spec;
    match plan {
        InjectionForward::Generic { host_features } => {
            let host = tape.constant(host_features.clone());
            let full = tape.concat_rows(host, injected)?;
            forward_on_tape(tape, spec, &params, op, full)
        }
        InjectionForward::GcnSplit { host_first } => {
            let layers = spec.hidden_sizes.len() + 1;
            let mut ln = LnCounter(0);
            let inj_h = if spec.with_layer_norm {
                ln.apply(tape, &params, injected)?
            } else {
                injected
            };
            let inj_first = tape.matmul(inj_h, params.get("w0")?)?;
            let host = tape.constant(host_first.clone());
            let full = tape.concat_rows(host, inj_first)?;
            let prop = tape.spmm(op, full)?;
            let mut h = tape.add_bias(prop, params.get("b0")?)?;
            if layers > 1 {
                h = tape.relu(h);
            }
            for l in 1..layers {
                if spec.with_layer_norm {
                    h = ln.apply(tape, &params, h)?;
                }
                let hw = tape.matmul(h, params.get(&format!("w{l}"))?)?;
                let prop = tape.spmm(op, hw)?;
                h = tape.add_bias(prop, params.get(&format!("b{l}"))?)?;
                if l + 1 < layers {
                    h = tape.relu(h);
                }
            }
            Ok(h)
        }
        InjectionForward::AppnpSplit { host_head } => {
            let inj_head = mlp_head_on_tape(tape, spec, &params, injected)?;
            let host = tape.constant(host_head.clone());
            let head = tape.concat_rows(host, inj_head)?;
            let mut z = head;
            for _ in 0..spec.propagation_iters {
                let az = tape.spmm(op, z)?;
                z = tape.scale_add(1.0 - spec.alpha, az, spec.alpha, head)?;
            }
            Ok(z)
        }
    }
}

/// Architecture-appropriate propagation operator for a graph.
///
/// GCN/SGC/TAGCN/APPNP use symmetric normalization, SAGE mean aggregation,
/// GIN raw sum aggregation.
pub fn build_operator(arch: Arch, g: &GraphBundle) -> GraphOperator {
    match arch {
        Arch::Sage => row_normalize(g),
        Arch::Gin => raw_adjacency(g),
        _ => gcn_normalize(g),
    }
}

/// Dense-adjacency counterpart of [`build_operator`] for preprocessed graphs.
pub fn build_operator_dense(arch: Arch, adj: &Array2<f64>) -> GraphOperator {
    match arch {
        Arch::Sage => row_normalize_dense(adj),
        Arch::Gin => GraphOperator::Dense(adj.clone()),
        _ => gcn_normalize_dense(adj),
    }
}

impl TrainedModel {
    /// Fresh model with seeded Glorot weights.
    pub fn init(
        spec: ModelSpec,
        input_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        spec.validate()?;
        let params = init_params(&spec, input_dim, output_dim, seed);
        Ok(TrainedModel {
            spec,
            input_dim,
            output_dim,
            params,
            seed,
        })
    }

    /// Eval-mode logits against a prebuilt operator.
    pub fn logits(
        &self,
        op: &Arc<GraphOperator>,
        x: &Array2<f64>,
    ) -> Result<Array2<f64>, ModelError> {
        let mut tape = Tape::new(false, 0);
        let xn = tape.constant(x.clone());
        let params = ParamNodes::register(&mut tape, &self.params, false);
        let out = forward_on_tape(&mut tape, &self.spec, &params, op, xn)?;
        Ok(tape.value(out).clone())
    }

    /// Row-wise argmax with ties broken by the lowest class id.
    pub fn predict_with_operator(
        &self,
        op: &Arc<GraphOperator>,
        x: &Array2<f64>,
    ) -> Result<Vec<u32>, ModelError> {
        let logits = self.logits(op, x)?;
        Ok(argmax_rows(&logits))
    }

    /// Predictions on a bundle, building the arch-appropriate operator.
    pub fn predict(&self, g: &GraphBundle) -> Result<Vec<u32>, ModelError> {
        let op = Arc::new(build_operator(self.spec.arch, g));
        self.predict_with_operator(&op, g.features())
    }
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<u32> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    spec: ModelSpec,
    input_dim: usize,
    output_dim: usize,
    seed: u64,
    shapes: Vec<(String, (usize, usize))>,
}

/// Write a checkpoint: magic, u32 header length, JSON header, then the
/// parameter blob as little-endian f32 in header order.
pub fn save_checkpoint(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let header = CheckpointHeader {
        spec: model.spec.clone(),
        input_dim: model.input_dim,
        output_dim: model.output_dim,
        seed: model.seed,
        shapes: model
            .params
            .iter()
            .map(|(n, v)| (n.to_string(), (v.nrows(), v.ncols())))
            .collect(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
    let mut file = fs::File::create(path)?;
    file.write_all(CHECKPOINT_MAGIC)?;
    file.write_all(&(header_json.len() as u32).to_le_bytes())?;
    file.write_all(&header_json)?;
    for value in model.params.values() {
        for &x in value.iter() {
            file.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 9 || &bytes[..5] != CHECKPOINT_MAGIC {
        return Err(ModelError::BadCheckpoint("bad magic".into()));
    }
    let header_len = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
    let header_end = 9 + header_len;
    if bytes.len() < header_end {
        return Err(ModelError::BadCheckpoint("truncated header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[9..header_end])
        .map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
    let mut params = ParamSet::new();
    let mut offset = header_end;
    for (name, (rows, cols)) in &header.shapes {
        let count = rows * cols;
        let end = offset + count * 4;
        if bytes.len() < end {
            return Err(ModelError::BadCheckpoint("truncated blob".into()));
        }
        let data: Vec<f64> = bytes[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        offset = end;
        let value = Array2::from_shape_vec((*rows, *cols), data)
            .map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
        params.push(name.clone(), value);
    }
    if offset != bytes.len() {
        return Err(ModelError::BadCheckpoint("trailing bytes".into()));
    }
    Ok(TrainedModel {
        spec: header.spec,
        input_dim: header.input_dim,
        output_dim: header.output_dim,
        params,
        seed: header.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::seq::SliceRandom;

    fn toy_graph(n: usize, seed: u64) -> GraphBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for v in 1..n {
            let u = rng.random_range(0..v);
            edges.push((u as u32, v as u32));
        }
        let d = 5;
        let features =
            Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0f64) as f32 as f64);
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        GraphBundle::from_edge_list("toy", n, &edges, features, labels, 3).unwrap()
    }

    #[test]
    fn zero_weight_gcn_predicts_class_zero() {
        let g = toy_graph(6, 1);
        let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![4]);
        let mut m = TrainedModel::init(spec, 5, 3, 0).unwrap();
        for v in m.params.values_mut() {
            v.fill(0.0);
        }
        let preds = m.predict(&g).unwrap();
        assert!(preds.iter().all(|&p| p == 0), "tie-break to lowest index");
    }

    #[test]
    fn argmax_tie_break() {
        assert_eq!(argmax_rows(&arr2(&[[0.1, 0.9]])), vec![1]);
        assert_eq!(argmax_rows(&arr2(&[[0.5, 0.5]])), vec![0]);
    }

    #[test]
    fn sgc_identity_operator_equals_affine_chain() {
        // Isolated nodes make the normalized operator the identity, so SGC
        // collapses to its affine head.
        let g = GraphBundle::from_edge_list(
            "iso",
            3,
            &[],
            arr2(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
            vec![0, 1, 2],
            3,
        )
        .unwrap();
        let spec = ModelSpec::new(Arch::Sgc).with_hidden(vec![2]).with_hops(1);
        let m = TrainedModel::init(spec, 2, 3, 9).unwrap();
        let op = Arc::new(build_operator(Arch::Sgc, &g));
        let logits = m.logits(&op, g.features()).unwrap();
        // Oracle: the same affine chain computed with plain dense algebra.
        let w0 = m.params.get("w0").unwrap();
        let b0 = m.params.get("b0").unwrap();
        let w1 = m.params.get("w1").unwrap();
        let b1 = m.params.get("b1").unwrap();
        let oracle = (g.features().dot(w0) + b0.row(0)).dot(w1) + b1.row(0);
        for (a, b) in logits.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sgc_equals_collapsed_gcn_chain() {
        // SGC(k=2) with weights W0.W1 equals A(A X W0) W1 computed densely.
        let g = toy_graph(8, 3);
        let spec = ModelSpec::new(Arch::Sgc).with_hidden(vec![4]).with_hops(2);
        let mut m = TrainedModel::init(spec, 5, 3, 11).unwrap();
        for v in m.params.values_mut() {
            if v.nrows() == 1 {
                v.fill(0.0); // drop biases so the product collapses exactly
            }
        }
        let op = Arc::new(build_operator(Arch::Sgc, &g));
        let logits = m.logits(&op, g.features()).unwrap();
        let dense = match op.as_ref() {
            GraphOperator::Sparse { forward, .. } => forward.to_dense(),
            GraphOperator::Dense(d) => d.clone(),
        };
        let w0 = m.params.get("w0").unwrap();
        let w1 = m.params.get("w1").unwrap();
        let oracle = dense.dot(&dense.dot(&g.features().dot(w0))).dot(w1);
        for (a, b) in logits.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn appnp_alpha_one_equals_mlp_head() {
        let g = toy_graph(7, 4);
        let mut spec = ModelSpec::new(Arch::Appnp).with_hidden(vec![4]);
        spec.alpha = 1.0;
        let m = TrainedModel::init(spec, 5, 3, 2).unwrap();
        let op = Arc::new(build_operator(Arch::Appnp, &g));
        let logits = m.logits(&op, g.features()).unwrap();
        let w0 = m.params.get("w0").unwrap();
        let b0 = m.params.get("b0").unwrap();
        let w1 = m.params.get("w1").unwrap();
        let b1 = m.params.get("b1").unwrap();
        let hidden = (g.features().dot(w0) + b0.row(0)).mapv(|v| v.max(0.0));
        let head = hidden.dot(w1) + b1.row(0);
        for (a, b) in logits.iter().zip(head.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariance_all_archs() {
        let n = 12;
        for arch in Arch::ALL {
            for with_ln in [false, true] {
                let g = toy_graph(n, 17);
                let mut spec = ModelSpec::new(arch).with_hidden(vec![6, 6]);
                if with_ln {
                    spec = spec.with_layer_norm();
                }
                let m = TrainedModel::init(spec, 5, 3, 5).unwrap();
                let op = Arc::new(build_operator(arch, &g));
                let base = m.logits(&op, g.features()).unwrap();

                let mut perm: Vec<u32> = (0..n as u32).collect();
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(23));
                // node i in the permuted graph is perm[i] in the original
                let mut edges = Vec::new();
                let mut inverse = vec![0u32; n];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p as usize] = i as u32;
                }
                for (u, v) in g.edges() {
                    edges.push((inverse[u as usize], inverse[v as usize]));
                }
                let mut features = Array2::zeros((n, 5));
                let mut labels = vec![0u32; n];
                for i in 0..n {
                    features.row_mut(i).assign(&g.features().row(perm[i] as usize));
                    labels[i] = g.labels()[perm[i] as usize];
                }
                let pg = GraphBundle::from_edge_list("perm", n, &edges, features, labels, 3)
                    .unwrap();
                let pop = Arc::new(build_operator(arch, &pg));
                let permuted = m.logits(&pop, pg.features()).unwrap();
                for i in 0..n {
                    for c in 0..3 {
                        let a = permuted[[i, c]];
                        let b = base[[perm[i] as usize, c]];
                        assert!(
                            (a - b).abs() < 1e-9,
                            "{arch:?} ln={with_ln} row {i} class {c}: {a} vs {b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn layer_norm_keeps_scaled_inputs_finite() {
        for arch in Arch::ALL {
            let g = toy_graph(10, 8);
            let scaled = g.with_features(g.features() * 1e3).unwrap();
            let spec = ModelSpec::new(arch).with_hidden(vec![4]).with_layer_norm();
            let m = TrainedModel::init(spec, 5, 3, 3).unwrap();
            let op = Arc::new(build_operator(arch, &scaled));
            let logits = m.logits(&op, scaled.features()).unwrap();
            assert!(
                logits.iter().all(|v| v.is_finite()),
                "{arch:?} produced non-finite logits"
            );
        }
    }

    #[test]
    fn injection_fast_paths_match_generic_forward() {
        let host = toy_graph(10, 6);
        let patch = crate::graph::InjectionPatch {
            num_injected: 3,
            features: Array2::from_shape_simple_fn((3, 5), || 0.3),
            edges_to_host: vec![(0, 1), (1, 4), (2, 7)],
            edges_internal: vec![(0, 2)],
        };
        let injected = host.apply_injection(&patch).unwrap();
        for arch in [Arch::Gcn, Arch::Appnp, Arch::Sage] {
            for ln in [false, true] {
                let mut spec = ModelSpec::new(arch).with_hidden(vec![4]).with_dropout(0.0);
                if ln {
                    spec = spec.with_layer_norm();
                }
                let m = TrainedModel::init(spec, 5, 3, 8).unwrap();
                let op = Arc::new(build_operator(arch, &injected));
                let expect = m.logits(&op, injected.features()).unwrap();

                let plan = plan_injection_forward(&m, host.features()).unwrap();
                let mut tape = Tape::new(false, 0);
                let inj = tape.input(patch.features.clone(), true);
                let got = forward_with_injection(&mut tape, &m, &plan, &op, inj).unwrap();
                // split vs fused matmul reassociates float sums; allow ulps
                for (a, b) in tape.value(got).iter().zip(expect.iter()) {
                    assert!(
                        (a - b).abs() < 1e-8,
                        "{arch:?} ln={ln}: {a} vs {b}"
                    );
                }
                // gradient reaches the injected rows
                let loss = tape.sum_all(got);
                tape.backward(loss).unwrap();
                assert!(tape.grad(inj).is_some());
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = ModelSpec::new(Arch::Tagcn).with_hidden(vec![4, 4]).with_layer_norm();
        let m = TrainedModel::init(spec, 5, 3, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.grbm");
        save_checkpoint(&m, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.spec, m.spec);
        assert_eq!(loaded.params.len(), m.params.len());
        for ((_, a), (_, b)) in m.params.iter().zip(loaded.params.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }
}
