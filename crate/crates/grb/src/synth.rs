//! Deterministic synthetic datasets.
//!
//! `builtin` reproduces the five benchmark fixtures by name. The two small
//! citation graphs are generated at full scale with matching node/edge
//! counts, degree profile, and feature statistics; the three larger ones
//! come back as reduced-scale miniatures with proportional structure, since
//! their full sizes serve no purpose on a development machine.
//!
//! Generators are pure functions of their seed: every call with the same
//! arguments yields a bit-identical bundle.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::PrepError;
use crate::graph::GraphBundle;

/// Blueprint for a degree-profiled homophilous attributed graph.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub name: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_features: usize,
    pub num_classes: usize,
    /// Mean degrees the middle three degree terciles should hit (after
    /// trimming 5% from each end of the degree ranking).
    pub tercile_means: [f64; 3],
    /// Fraction of the bottom-trim nodes left isolated.
    pub isolated_fraction: f64,
    /// Probability that an edge endpoint pairs inside its own class.
    pub homophily: f64,
    /// Class-mean separation in units of the noise deviation.
    pub signal: f64,
    /// Fraction of nodes whose label is flipped away from its latent
    /// class after structure and features are drawn.
    pub label_noise: f64,
    /// Global feature moments and the exact raw extremes to plant.
    pub feature_mean: f64,
    pub feature_std: f64,
    pub feature_min: f64,
    pub feature_max: f64,
    pub seed: u64,
}

/// Generate the named builtin fixture.
pub fn builtin(name: &str) -> Result<GraphBundle, PrepError> {
    if name == "toy" {
        return Ok(toy(7));
    }
    Ok(generate(&spec_for(name)?))
}

fn spec_for(name: &str) -> Result<SynthSpec, PrepError> {
    let spec = match name {
        "grb-cora" => SynthSpec {
            name: "grb-cora".into(),
            num_nodes: 2680,
            num_edges: 5148,
            num_features: 302,
            num_classes: 7,
            tercile_means: [1.53, 2.96, 5.23],
            isolated_fraction: 0.25,
            homophily: 0.81,
            signal: 0.25,
            label_noise: 0.08,
            feature_mean: 0.05,
            feature_std: 0.222_140,
            feature_min: -2.30,
            feature_max: 2.40,
            seed: 0xC0DA,
        },
        "grb-citeseer" => SynthSpec {
            name: "grb-citeseer".into(),
            num_nodes: 3191,
            num_edges: 4172,
            num_features: 768,
            num_classes: 6,
            tercile_means: [1.01, 1.74, 3.82],
            isolated_fraction: 0.55,
            homophily: 0.74,
            signal: 0.28,
            label_noise: 0.08,
            feature_mean: 0.0219,
            feature_std: 0.287_64,
            feature_min: -4.55,
            feature_max: 1.67,
            seed: 0xC17E,
        },
        // Miniatures of the three larger graphs: real feature widths and
        // class counts, scaled-down node counts, same degree shape.
        "grb-flickr" => SynthSpec {
            name: "grb-flickr".into(),
            num_nodes: 3000,
            num_edges: 15120,
            num_features: 500,
            num_classes: 7,
            tercile_means: [5.0, 6.02, 11.03],
            isolated_fraction: 0.0,
            homophily: 0.60,
            signal: 0.75,
            label_noise: 0.10,
            feature_mean: 0.30,
            feature_std: 1.3203,
            feature_min: -0.90,
            feature_max: 269.96,
            seed: 0xF11C,
        },
        "grb-reddit" => SynthSpec {
            name: "grb-reddit".into(),
            num_nodes: 2400,
            num_edges: 59580,
            num_features: 602,
            num_classes: 41,
            tercile_means: [29.23, 68.36, 150.99],
            isolated_fraction: 0.0,
            homophily: 0.70,
            signal: 0.9,
            label_noise: 0.10,
            feature_mean: 0.0,
            feature_std: 3.0,
            feature_min: -28.19,
            feature_max: 120.96,
            seed: 0x4EDD,
        },
        "grb-aminer" => SynthSpec {
            name: "grb-aminer".into(),
            num_nodes: 3000,
            num_edges: 13095,
            num_features: 100,
            num_classes: 18,
            tercile_means: [1.99, 5.12, 13.25],
            isolated_fraction: 0.30,
            homophily: 0.75,
            signal: 0.9,
            label_noise: 0.10,
            feature_mean: 0.0,
            feature_std: 0.155,
            feature_min: -1.74,
            feature_max: 1.62,
            seed: 0xA41E,
        },
        other => return Err(PrepError::UnknownDataset(other.to_string())),
    };
    Ok(spec)
}

/// Degree multiset matching the trimmed-tercile profile.
///
/// Layout in ascending order: a trimmed bottom (5%, partly isolated), three
/// equal terciles hitting the requested means, and a trimmed hub tail (5%)
/// absorbing whatever degree mass remains.
fn degree_sequence(spec: &SynthSpec) -> Vec<usize> {
    let n = spec.num_nodes;
    let trim = (0.05 * n as f64).floor() as usize;
    let middle = n - 2 * trim;
    let base = middle / 3;
    let extra = middle % 3;
    let sizes = [
        base + usize::from(extra > 0),
        base + usize::from(extra > 1),
        base,
    ];
    let total: usize = 2 * spec.num_edges;

    let mut degs: Vec<usize> = Vec::with_capacity(n);
    // Bottom trim: isolated nodes, then degree-1.
    let isolated = (trim as f64 * spec.isolated_fraction).round() as usize;
    degs.extend(std::iter::repeat_n(0usize, isolated));
    let bottom_min = if spec.tercile_means[0] >= 2.0 {
        // dense graphs have no degree-1 fringe worth modeling
        spec.tercile_means[0].floor() as usize / 2
    } else {
        1
    };
    degs.extend(std::iter::repeat_n(bottom_min.max(1), trim - isolated));

    // Terciles: spread integers around each mean.
    for (t, &mean) in spec.tercile_means.iter().enumerate() {
        let count = sizes[t];
        let target: usize = (mean * count as f64).round() as usize;
        let lo = mean.floor() as usize;
        let mut tier: Vec<usize> = vec![lo.max(if t == 0 { bottom_min } else { 1 }); count];
        let mut sum: usize = tier.iter().sum();
        let mut i = count;
        while sum < target {
            i = if i == 0 { count - 1 } else { i - 1 };
            tier[i] += 1;
            sum += 1;
        }
        degs.extend(tier);
    }

    // Hub tail: whatever is left, spread as a convex ramp.
    let used: usize = degs.iter().sum();
    let tail = n - degs.len();
    let remaining = total.saturating_sub(used).max(tail);
    let floor_deg = (*degs.last().unwrap_or(&1)).max(1) + 1;
    let mut hub: Vec<usize> = vec![floor_deg; tail];
    let mut sum: usize = hub.iter().sum();
    // convex weights push mass toward the top hubs
    let weights: Vec<f64> = (0..tail).map(|i| ((i + 1) as f64).powf(2.0)).collect();
    let wsum: f64 = weights.iter().sum();
    let excess = remaining.saturating_sub(sum);
    for i in 0..tail {
        let add = (excess as f64 * weights[i] / wsum).floor() as usize;
        hub[i] += add;
        sum += add;
    }
    let mut i = tail;
    while sum < remaining {
        i = if i == 0 { tail - 1 } else { i - 1 };
        hub[i] += 1;
        sum += 1;
    }
    degs.extend(hub);
    debug_assert_eq!(degs.len(), n);
    degs
}

/// Realize a degree sequence as a simple homophilous graph with exactly
/// `spec.num_edges` edges.
pub fn generate(spec: &SynthSpec) -> GraphBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_nodes;

    // Class sizes: mildly uneven, largest-remainder rounding.
    let mut labels: Vec<u32> = Vec::with_capacity(n);
    for c in 0..spec.num_classes {
        let share = (2 * (c + 1)) as f64
            / (spec.num_classes * (spec.num_classes + 1)) as f64;
        let count = (share * n as f64).floor() as usize;
        labels.extend(std::iter::repeat_n(c as u32, count));
    }
    while labels.len() < n {
        labels.push(rng.random_range(0..spec.num_classes) as u32);
    }
    labels.shuffle(&mut rng);

    // Assign target degrees to nodes independently of class.
    let mut degree_targets = degree_sequence(spec);
    degree_targets.shuffle(&mut rng);

    // Stub pairing with class preference.
    let mut stubs: Vec<u32> = Vec::with_capacity(2 * spec.num_edges);
    for (v, &d) in degree_targets.iter().enumerate() {
        stubs.extend(std::iter::repeat_n(v as u32, d));
    }
    stubs.shuffle(&mut rng);
    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); spec.num_classes];
    for &s in &stubs {
        by_class[labels[s as usize] as usize].push(s);
    }

    let mut edge_set: std::collections::BTreeSet<(u32, u32)> = std::collections::BTreeSet::new();
    let mut remaining = degree_targets.clone();
    let pop_stub = |pool: &mut Vec<u32>, remaining: &[usize], rng: &mut ChaCha8Rng| -> Option<u32> {
        while !pool.is_empty() {
            let idx = rng.random_range(0..pool.len());
            let v = pool.swap_remove(idx);
            if remaining[v as usize] > 0 {
                return Some(v);
            }
        }
        None
    };
    let mut global = stubs.clone();
    while edge_set.len() < spec.num_edges {
        let Some(u) = pop_stub(&mut global, &remaining, &mut rng) else {
            break;
        };
        if remaining[u as usize] == 0 {
            continue;
        }
        let mut placed = false;
        for _try in 0..12 {
            let same_class = rng.random::<f64>() < spec.homophily;
            let pool_idx = if same_class {
                labels[u as usize] as usize
            } else {
                let mut c = rng.random_range(0..spec.num_classes);
                if c == labels[u as usize] as usize {
                    c = (c + 1) % spec.num_classes;
                }
                c
            };
            let pool = &by_class[pool_idx];
            if pool.is_empty() {
                continue;
            }
            let v = pool[rng.random_range(0..pool.len())];
            if v == u || remaining[v as usize] == 0 {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if edge_set.contains(&key) {
                continue;
            }
            edge_set.insert(key);
            remaining[u as usize] -= 1;
            remaining[v as usize] -= 1;
            placed = true;
            break;
        }
        if !placed {
            // give the stub back; global pool shrinks over time regardless
            continue;
        }
    }
    // Top up to the exact edge count with random same-class pairs among
    // low-degree nodes.
    let mut guard = 0usize;
    while edge_set.len() < spec.num_edges && guard < 100 * spec.num_edges {
        guard += 1;
        let u = rng.random_range(0..n as u32);
        if degree_targets[u as usize] == 0 {
            continue; // keep planted isolated nodes isolated
        }
        let pool = &by_class[labels[u as usize] as usize];
        if pool.is_empty() {
            continue;
        }
        let v = pool[rng.random_range(0..pool.len())];
        if v == u || degree_targets[v as usize] == 0 {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if !edge_set.contains(&key) {
            edge_set.insert(key);
        }
    }
    let edges: Vec<(u32, u32)> = edge_set.into_iter().collect();

    // Features: class means on random directions, unit noise, then an exact
    // affine recentering to the designed global moments, then the planted
    // extremes.
    let d = spec.num_features;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut class_means = Array2::zeros((spec.num_classes, d));
    for c in 0..spec.num_classes {
        for j in 0..d {
            class_means[[c, j]] = spec.signal * normal.sample(&mut rng);
        }
    }
    let mut features = Array2::zeros((n, d));
    for v in 0..n {
        let c = labels[v] as usize;
        for j in 0..d {
            features[[v, j]] = class_means[[c, j]] + normal.sample(&mut rng);
        }
    }
    let count = (n * d) as f64;
    let mean = features.sum() / count;
    let var = features.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / count;
    let std = var.sqrt();
    features.mapv_inplace(|x| (x - mean) / std * spec.feature_std + spec.feature_mean);
    // Plant the extremes on the current argmin/argmax entries.
    let (mut min_idx, mut max_idx) = ((0, 0), (0, 0));
    let (mut min_v, mut max_v) = (f64::INFINITY, f64::NEG_INFINITY);
    for ((i, j), &x) in features.indexed_iter() {
        if x < min_v {
            min_v = x;
            min_idx = (i, j);
        }
        if x > max_v {
            max_v = x;
            max_idx = (i, j);
        }
    }
    features[[min_idx.0, min_idx.1]] = spec.feature_min;
    features[[max_idx.0, max_idx.1]] = spec.feature_max;

    // Label noise: flip a fraction of labels away from the latent class
    // that drove structure and features, bounding achievable accuracy.
    let flips = (spec.label_noise * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &v in order.iter().take(flips) {
        let offset = rng.random_range(1..spec.num_classes) as u32;
        labels[v] = (labels[v] + offset) % spec.num_classes as u32;
    }

    GraphBundle::from_edge_list(
        spec.name.clone(),
        n,
        &edges,
        features,
        labels,
        spec.num_classes,
    )
    .expect("generator emits a valid bundle")
}

/// Two Gaussian-featured clusters with dense intra-links: trivially
/// learnable, used for smoke tests and examples.
pub fn two_cluster(n: usize, num_features: usize, p_in: f64, seed: u64) -> GraphBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let labels: Vec<u32> = (0..n).map(|v| u32::from(v >= half)).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let same = labels[u] == labels[v];
            let p = if same { p_in } else { p_in * 0.08 };
            if rng.random::<f64>() < p {
                edges.push((u as u32, v as u32));
            }
        }
    }
    let normal = Normal::new(0.0, 0.5).unwrap();
    let mut features = Array2::zeros((n, num_features));
    for v in 0..n {
        let sign = if labels[v] == 0 { 1.0 } else { -1.0 };
        for j in 0..num_features {
            let center = if j % 2 == 0 { sign } else { -sign };
            features[[v, j]] = center + normal.sample(&mut rng);
        }
    }
    GraphBundle::from_edge_list("two-cluster", n, &edges, features, labels, 2)
        .expect("valid bundle")
}

/// Small stochastic-block graph with four classes; the default `toy`
/// dataset for the command-line pipeline.
pub fn toy(seed: u64) -> GraphBundle {
    let n = 400;
    let classes = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u32> = (0..n).map(|v| (v % classes) as u32).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { 0.025 } else { 0.0015 };
            if rng.random::<f64>() < p {
                edges.push((u as u32, v as u32));
            }
        }
    }
    let d = 16;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut centers = Array2::zeros((classes, d));
    for c in 0..classes {
        for j in 0..d {
            centers[[c, j]] = 1.2 * normal.sample(&mut rng);
        }
    }
    let mut features = Array2::zeros((n, d));
    for v in 0..n {
        for j in 0..d {
            features[[v, j]] = centers[[labels[v] as usize, j]] + normal.sample(&mut rng);
        }
    }
    GraphBundle::from_edge_list("toy", n, &edges, features, labels, classes)
        .expect("valid bundle")
}

/// Power-law-ish graph for degree-split stress tests: degree of node v
/// decays with rank, realized by preferential attachment.
pub fn power_law(n: usize, edges_per_node: usize, seed: u64) -> GraphBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut endpoints: Vec<u32> = vec![0];
    for v in 1..n {
        let m = edges_per_node.min(v);
        let mut chosen = std::collections::BTreeSet::new();
        while chosen.len() < m {
            // preferential attachment: sample an endpoint of a prior edge
            let u = if rng.random::<f64>() < 0.8 && !endpoints.is_empty() {
                endpoints[rng.random_range(0..endpoints.len())]
            } else {
                rng.random_range(0..v as u32)
            };
            if u as usize != v {
                chosen.insert(u);
            }
        }
        for u in chosen {
            edges.push((u, v as u32));
            endpoints.push(u);
            endpoints.push(v as u32);
        }
    }
    let d = 8;
    let labels: Vec<u32> = (0..n).map(|v| (v % 3) as u32).collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut features = Array2::zeros((n, d));
    for v in 0..n {
        for j in 0..d {
            features[[v, j]] =
                (labels[v] as f64 - 1.0) * 0.8 + normal.sample(&mut rng);
        }
    }
    GraphBundle::from_edge_list("power-law", n, &edges, features, labels, 3)
        .expect("valid bundle")
}
