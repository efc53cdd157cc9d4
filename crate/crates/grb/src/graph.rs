//! Sparse attributed-graph data model and structural edit primitives.
//!
//! A [`GraphBundle`] is an immutable undirected attributed graph: a symmetric
//! unweighted adjacency in compressed-row form, a dense feature matrix, and a
//! label vector. Edits and injections are pure functions returning new
//! bundles, so bundles can be shared freely across threads.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::GraphError;

/// Immutable attributed graph.
///
/// Invariants enforced at construction:
/// - adjacency is symmetric, has no self-loops and no duplicate entries,
/// - `features` has `num_nodes` rows, `labels` has `num_nodes` entries,
/// - every label is `< num_classes`, except the injection sentinel
///   `num_classes` itself, which marks nodes excluded from evaluation.
///
/// Feature values are stored as `f64` but are always exactly representable
/// as `f32`, matching the on-disk format, so save/load round-trips are
/// bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    name: String,
    num_classes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    features: Array2<f64>,
    labels: Vec<u32>,
}

/// A single undirected edge flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EdgeEdit {
    pub kind: EditKind,
    pub u: u32,
    pub v: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Add,
    Remove,
}

impl EdgeEdit {
    pub fn add(u: u32, v: u32) -> Self {
        EdgeEdit {
            kind: EditKind::Add,
            u,
            v,
        }
    }

    pub fn remove(u: u32, v: u32) -> Self {
        EdgeEdit {
            kind: EditKind::Remove,
            u,
            v,
        }
    }
}

/// New nodes to splice into a host graph: features plus wiring.
///
/// `edges_to_host` pairs an injected index in `[0, num_injected)` with a host
/// node id; `edges_internal` connects two injected indices. Every injected
/// node must end up with at least one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionPatch {
    pub num_injected: usize,
    pub features: Array2<f64>,
    pub edges_to_host: Vec<(u32, u32)>,
    pub edges_internal: Vec<(u32, u32)>,
}

impl InjectionPatch {
    /// An empty patch; applying it returns the host graph unchanged.
    pub fn empty(width: usize) -> Self {
        InjectionPatch {
            num_injected: 0,
            features: Array2::zeros((0, width)),
            edges_to_host: Vec::new(),
            edges_internal: Vec::new(),
        }
    }

    /// Degree of each injected node counting both host and internal edges.
    pub fn injected_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_injected];
        for &(i, _) in &self.edges_to_host {
            if (i as usize) < deg.len() {
                deg[i as usize] += 1;
            }
        }
        for &(a, b) in &self.edges_internal {
            if (a as usize) < deg.len() {
                deg[a as usize] += 1;
            }
            if (b as usize) < deg.len() {
                deg[b as usize] += 1;
            }
        }
        deg
    }
}

fn quantize_f32(x: f64) -> f64 {
    x as f32 as f64
}

impl GraphBundle {
    /// Build a bundle from an arbitrary edge list.
    ///
    /// The edge list is symmetrized and deduplicated; self-loops are dropped.
    /// Labels must all be `< num_classes`.
    pub fn from_edge_list(
        name: impl Into<String>,
        num_nodes: usize,
        edges: &[(u32, u32)],
        features: Array2<f64>,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Result<Self, GraphError> {
        if features.nrows() != num_nodes {
            return Err(GraphError::ShapeMismatch(format!(
                "features have {} rows for {} nodes",
                features.nrows(),
                num_nodes
            )));
        }
        if labels.len() != num_nodes {
            return Err(GraphError::ShapeMismatch(format!(
                "labels have {} entries for {} nodes",
                labels.len(),
                num_nodes
            )));
        }
        for (node, &label) in labels.iter().enumerate() {
            if label as usize >= num_classes {
                return Err(GraphError::LabelOutOfRange {
                    node,
                    label,
                    num_classes,
                });
            }
        }
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u as usize >= num_nodes || v as usize >= num_nodes {
                return Err(GraphError::NodeOutOfRange {
                    id: u.max(v) as usize,
                    num_nodes,
                });
            }
            if u == v {
                continue; // self-loops are never stored
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Self::from_canonical_edges(
            name.into(),
            num_nodes,
            &set,
            features,
            labels,
            num_classes,
        ))
    }

    /// Build from a deduplicated set of (min, max) pairs. Internal fast path.
    fn from_canonical_edges(
        name: String,
        num_nodes: usize,
        edges: &BTreeSet<(u32, u32)>,
        features: Array2<f64>,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Self {
        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in edges {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        row_offsets.push(0usize);
        let mut acc = 0usize;
        for &d in &degree {
            acc += d;
            row_offsets.push(acc);
        }
        let mut col_indices = vec![0u32; acc];
        let mut cursor = row_offsets.clone();
        for &(u, v) in edges {
            col_indices[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            col_indices[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        // BTreeSet iteration gives each row its neighbors ordered by the
        // partner's position in the set; sort rows for canonical form.
        for r in 0..num_nodes {
            col_indices[row_offsets[r]..row_offsets[r + 1]].sort_unstable();
        }
        let features = features.mapv(quantize_f32);
        GraphBundle {
            name,
            num_classes,
            row_offsets,
            col_indices,
            features,
            labels,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.row_offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Label value marking injected nodes: one past the last real class.
    pub fn sentinel_label(&self) -> u32 {
        self.num_classes as u32
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Undirected edge list with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in self.neighbors(u) {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }

    /// Number of distinct undirected neighbors per node.
    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .map(|v| self.row_offsets[v + 1] - self.row_offsets[v])
            .collect()
    }

    /// Replace the feature matrix, keeping structure and labels.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self, GraphError> {
        if features.nrows() != self.num_nodes() {
            return Err(GraphError::ShapeMismatch(format!(
                "features have {} rows for {} nodes",
                features.nrows(),
                self.num_nodes()
            )));
        }
        let mut g = self.clone();
        g.features = features.mapv(quantize_f32);
        Ok(g)
    }

    /// Rename the bundle (used when deriving prepared datasets).
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Copy with the given nodes' labels replaced by the sentinel.
    ///
    /// The evaluator withholds test labels from attackers this way: an
    /// attack sees only sentinel labels on its targets and must fall back
    /// to surrogate predictions.
    pub fn with_labels_masked(&self, nodes: &[u32]) -> Self {
        let mut g = self.clone();
        let sentinel = g.sentinel_label();
        for &v in nodes {
            if (v as usize) < g.labels.len() {
                g.labels[v as usize] = sentinel;
            }
        }
        g
    }

    /// Apply edge edits symmetrically, returning a new bundle.
    ///
    /// Adding an existing edge or removing a missing one is an error, as is
    /// any self-loop.
    pub fn apply_edits(&self, edits: &[EdgeEdit]) -> Result<Self, GraphError> {
        let n = self.num_nodes();
        let mut set: BTreeSet<(u32, u32)> = self.edges().into_iter().collect();
        for e in edits {
            let (u, v) = (e.u, e.v);
            if u == v {
                return Err(GraphError::SelfLoopForbidden(u as usize));
            }
            if u as usize >= n || v as usize >= n {
                return Err(GraphError::NodeOutOfRange {
                    id: u.max(v) as usize,
                    num_nodes: n,
                });
            }
            let key = (u.min(v), u.max(v));
            match e.kind {
                EditKind::Add => {
                    if !set.insert(key) {
                        return Err(GraphError::DuplicateAdd(u as usize, v as usize));
                    }
                }
                EditKind::Remove => {
                    if !set.remove(&key) {
                        return Err(GraphError::MissingRemove(u as usize, v as usize));
                    }
                }
            }
        }
        Ok(Self::from_canonical_edges(
            self.name.clone(),
            n,
            &set,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
        ))
    }

    /// Splice injected nodes into the graph, returning a new bundle.
    ///
    /// Original rows and edges are preserved verbatim; injected nodes receive
    /// the sentinel label so evaluation masks can exclude them mechanically.
    pub fn apply_injection(&self, patch: &InjectionPatch) -> Result<Self, GraphError> {
        if patch.num_injected == 0 {
            return Ok(self.clone());
        }
        let n = self.num_nodes();
        if patch.features.nrows() != patch.num_injected {
            return Err(GraphError::ShapeMismatch(format!(
                "patch features have {} rows for {} injected nodes",
                patch.features.nrows(),
                patch.num_injected
            )));
        }
        if patch.features.ncols() != self.num_features() {
            return Err(GraphError::ShapeMismatch(format!(
                "patch features have width {}, host has {}",
                patch.features.ncols(),
                self.num_features()
            )));
        }
        let mut set: BTreeSet<(u32, u32)> = self.edges().into_iter().collect();
        for &(i, host) in &patch.edges_to_host {
            if i as usize >= patch.num_injected {
                return Err(GraphError::InvalidTarget(format!(
                    "injected index {i} out of range"
                )));
            }
            if host as usize >= n {
                return Err(GraphError::InvalidTarget(format!(
                    "host node {host} out of range"
                )));
            }
            let inj = (n + i as usize) as u32;
            set.insert((host.min(inj), host.max(inj)));
        }
        for &(a, b) in &patch.edges_internal {
            if a as usize >= patch.num_injected || b as usize >= patch.num_injected {
                return Err(GraphError::InvalidTarget(format!(
                    "internal pair ({a}, {b}) out of range"
                )));
            }
            if a == b {
                return Err(GraphError::SelfLoopForbidden(n + a as usize));
            }
            let (x, y) = ((n + a as usize) as u32, (n + b as usize) as u32);
            set.insert((x.min(y), x.max(y)));
        }
        for (i, d) in patch.injected_degrees().iter().enumerate() {
            if *d == 0 {
                return Err(GraphError::EmptyNeighborhood(i));
            }
        }
        let total = n + patch.num_injected;
        let mut features = Array2::zeros((total, self.num_features()));
        features
            .slice_mut(ndarray::s![..n, ..])
            .assign(&self.features);
        features
            .slice_mut(ndarray::s![n.., ..])
            .assign(&patch.features);
        let mut labels = self.labels.clone();
        labels.extend(std::iter::repeat_n(
            self.sentinel_label(),
            patch.num_injected,
        ));
        Ok(Self::from_canonical_edges(
            self.name.clone(),
            total,
            &set,
            features,
            labels,
            self.num_classes,
        ))
    }

    /// Induced subgraph on `nodes` (must be sorted, deduplicated, in range).
    ///
    /// Returns the subgraph and the mapping from new index to original id.
    pub fn induced_subgraph(&self, nodes: &[u32]) -> Result<(Self, Vec<u32>), GraphError> {
        let n = self.num_nodes();
        let mut remap = vec![u32::MAX; n];
        for (new_id, &old) in nodes.iter().enumerate() {
            if old as usize >= n {
                return Err(GraphError::NodeOutOfRange {
                    id: old as usize,
                    num_nodes: n,
                });
            }
            remap[old as usize] = new_id as u32;
        }
        let mut set = BTreeSet::new();
        for &old_u in nodes {
            let new_u = remap[old_u as usize];
            for &old_v in self.neighbors(old_u as usize) {
                let new_v = remap[old_v as usize];
                if new_v != u32::MAX && new_u < new_v {
                    set.insert((new_u, new_v));
                }
            }
        }
        let mut features = Array2::zeros((nodes.len(), self.num_features()));
        let mut labels = Vec::with_capacity(nodes.len());
        for (new_id, &old) in nodes.iter().enumerate() {
            features
                .row_mut(new_id)
                .assign(&self.features.row(old as usize));
            labels.push(self.labels[old as usize]);
        }
        let g = Self::from_canonical_edges(
            self.name.clone(),
            nodes.len(),
            &set,
            features,
            labels,
            self.num_classes,
        );
        Ok((g, nodes.to_vec()))
    }

    /// Verify adjacency symmetry by full transpose comparison.
    pub fn is_symmetric(&self) -> bool {
        for u in 0..self.num_nodes() {
            for &v in self.neighbors(u) {
                if !self.has_edge(v as usize, u) {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn path3() -> GraphBundle {
        GraphBundle::from_edge_list(
            "path3",
            3,
            &[(0, 1), (1, 2)],
            Array2::zeros((3, 2)),
            vec![0, 1, 0],
            2,
        )
        .unwrap()
    }

    #[test]
    fn dedups_and_drops_self_loops() {
        let g = GraphBundle::from_edge_list(
            "t",
            3,
            &[(0, 1), (1, 0), (1, 1)],
            Array2::zeros((3, 1)),
            vec![0, 0, 0],
            1,
        )
        .unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degrees(), vec![1, 1, 0]);
    }

    #[test]
    fn empty_graph_has_zero_degrees() {
        let g =
            GraphBundle::from_edge_list("t", 3, &[], Array2::zeros((3, 1)), vec![0, 0, 0], 1)
                .unwrap();
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.degrees(), vec![0, 0, 0]);
    }

    #[test]
    fn path_degrees() {
        assert_eq!(path3().degrees(), vec![1, 2, 1]);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let err = GraphBundle::from_edge_list(
            "t",
            2,
            &[(0, 1)],
            Array2::zeros((2, 1)),
            vec![0, 5],
            2,
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::LabelOutOfRange { .. }));
    }

    #[test]
    fn remove_edge_from_path() {
        let g = path3().apply_edits(&[EdgeEdit::remove(0, 1)]).unwrap();
        assert_eq!(g.degrees(), vec![0, 1, 1]);
    }

    #[test]
    fn add_then_remove_is_identity() {
        let g = path3();
        let h = g
            .apply_edits(&[EdgeEdit::add(0, 2), EdgeEdit::remove(0, 2)])
            .unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn duplicate_add_and_missing_remove_rejected() {
        let g = path3();
        assert!(matches!(
            g.apply_edits(&[EdgeEdit::add(0, 1)]),
            Err(GraphError::DuplicateAdd(..))
        ));
        assert!(matches!(
            g.apply_edits(&[EdgeEdit::remove(0, 2)]),
            Err(GraphError::MissingRemove(..))
        ));
        assert!(matches!(
            g.apply_edits(&[EdgeEdit::add(1, 1)]),
            Err(GraphError::SelfLoopForbidden(..))
        ));
    }

    #[test]
    fn inject_one_node_into_path() {
        let g = path3();
        let patch = InjectionPatch {
            num_injected: 1,
            features: arr2(&[[1.0, 2.0]]),
            edges_to_host: vec![(0, 0)],
            edges_internal: vec![],
        };
        let h = g.apply_injection(&patch).unwrap();
        assert_eq!(h.num_nodes(), 4);
        assert_eq!(h.degrees(), vec![2, 2, 1, 1]);
        assert_eq!(h.labels()[3], g.sentinel_label());
        // original rows untouched
        assert_eq!(
            h.features().slice(ndarray::s![..3, ..]),
            g.features().slice(ndarray::s![.., ..])
        );
    }

    #[test]
    fn inject_zero_nodes_is_identity() {
        let g = path3();
        let h = g.apply_injection(&InjectionPatch::empty(2)).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn injection_requires_edges() {
        let g = path3();
        let patch = InjectionPatch {
            num_injected: 1,
            features: arr2(&[[0.0, 0.0]]),
            edges_to_host: vec![],
            edges_internal: vec![],
        };
        assert!(matches!(
            g.apply_injection(&patch),
            Err(GraphError::EmptyNeighborhood(0))
        ));
    }

    #[test]
    fn induced_subgraph_keeps_inner_edges() {
        let g = GraphBundle::from_edge_list(
            "t",
            4,
            &[(0, 1), (1, 2), (2, 3)],
            arr2(&[[0.0], [1.0], [2.0], [3.0]]),
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap();
        let (s, map) = g.induced_subgraph(&[1, 2, 3]).unwrap();
        assert_eq!(s.num_nodes(), 3);
        assert_eq!(s.num_edges(), 2);
        assert_eq!(map, vec![1, 2, 3]);
        assert_eq!(s.features().row(0)[0], 1.0);
        assert_eq!(s.labels(), &[1, 0, 1]);
    }

    #[test]
    fn symmetry_preserved_by_edits() {
        let g = path3().apply_edits(&[EdgeEdit::add(0, 2)]).unwrap();
        assert!(g.is_symmetric());
    }
}
