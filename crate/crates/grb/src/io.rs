//! Dataset bundle persistence.
//!
//! A bundle directory holds four files:
//! - `meta.json` — counts and the edge storage convention,
//! - `edges.bin` — little-endian `u32` pairs, one per edge (or per directed
//!   arc when `edge_storage` is `"directed"`),
//! - `features.bin` — little-endian `f32`, row-major `N×D`,
//! - `labels.bin` — little-endian `u32`, length `N`.
//!
//! Loading validates counts against `meta.json`, symmetrizes, deduplicates
//! and strips self-loops, so `load(save(g)) == g` bit-exactly.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::GraphBundle;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_features: usize,
    pub num_classes: usize,
    #[serde(default = "default_storage")]
    pub edge_storage: EdgeStorage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeStorage {
    Undirected,
    Directed,
}

fn default_storage() -> EdgeStorage {
    EdgeStorage::Undirected
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>, GraphError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(GraphError::MissingFile(path.display().to_string()));
    }
    Ok(fs::read(path)?)
}

fn bytes_to_u32(bytes: &[u8], what: &str) -> Result<Vec<u32>, GraphError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(GraphError::ShapeMismatch(format!(
            "{what} length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Load and validate a bundle from a directory.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<GraphBundle, GraphError> {
    let dir = dir.as_ref();
    let meta_bytes = read_file(dir, "meta.json")?;
    let meta: BundleMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| GraphError::Meta(format!("meta.json: {e}")))?;

    let edge_words = bytes_to_u32(&read_file(dir, "edges.bin")?, "edges.bin")?;
    if !edge_words.len().is_multiple_of(2) {
        return Err(GraphError::ShapeMismatch(
            "edges.bin holds an odd number of u32 words".into(),
        ));
    }
    let stored_edges = edge_words.len() / 2;
    if stored_edges != meta.num_edges {
        return Err(GraphError::ShapeMismatch(format!(
            "meta.json declares {} edges, edges.bin holds {}",
            meta.num_edges, stored_edges
        )));
    }
    let edges: Vec<(u32, u32)> = edge_words.chunks_exact(2).map(|c| (c[0], c[1])).collect();

    let feat_bytes = read_file(dir, "features.bin")?;
    let expected = meta.num_nodes * meta.num_features * 4;
    if feat_bytes.len() != expected {
        return Err(GraphError::ShapeMismatch(format!(
            "features.bin is {} bytes, expected {} ({}x{} f32)",
            feat_bytes.len(),
            expected,
            meta.num_nodes,
            meta.num_features
        )));
    }
    let feats: Vec<f64> = feat_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let features = Array2::from_shape_vec((meta.num_nodes, meta.num_features), feats)
        .map_err(|e| GraphError::ShapeMismatch(e.to_string()))?;

    let labels = bytes_to_u32(&read_file(dir, "labels.bin")?, "labels.bin")?;
    if labels.len() != meta.num_nodes {
        return Err(GraphError::ShapeMismatch(format!(
            "labels.bin holds {} entries for {} nodes",
            labels.len(),
            meta.num_nodes
        )));
    }

    GraphBundle::from_edge_list(
        meta.name,
        meta.num_nodes,
        &edges,
        features,
        labels,
        meta.num_classes,
    )
}

/// Write a bundle to a directory, creating it if needed.
pub fn save_bundle(g: &GraphBundle, dir: impl AsRef<Path>) -> Result<(), GraphError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = BundleMeta {
        name: g.name().to_string(),
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
        edge_storage: EdgeStorage::Undirected,
    };
    let mut meta_json = serde_json::to_vec_pretty(&meta)
        .map_err(|e| GraphError::Meta(e.to_string()))?;
    meta_json.push(b'\n');
    fs::write(dir.join("meta.json"), meta_json)?;

    let mut edge_bytes = Vec::with_capacity(g.num_edges() * 8);
    for (u, v) in g.edges() {
        edge_bytes.extend_from_slice(&u.to_le_bytes());
        edge_bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join("edges.bin"), edge_bytes)?;

    let mut feat_bytes = Vec::with_capacity(g.num_nodes() * g.num_features() * 4);
    for &x in g.features().iter() {
        feat_bytes.extend_from_slice(&(x as f32).to_le_bytes());
    }
    fs::write(dir.join("features.bin"), feat_bytes)?;

    let mut label_bytes = Vec::with_capacity(g.num_nodes() * 4);
    for &l in g.labels() {
        label_bytes.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(dir.join("labels.bin"), label_bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn tiny() -> GraphBundle {
        GraphBundle::from_edge_list(
            "tiny",
            3,
            &[(0, 1), (1, 2)],
            arr2(&[[0.5, -1.25], [3.0, 0.0], [-0.125, 2.0]]),
            vec![0, 1, 1],
            2,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let g = tiny();
        save_bundle(&g, dir.path()).unwrap();
        let h = load_bundle(dir.path()).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn round_trip_zero_edges() {
        let dir = tempfile::tempdir().unwrap();
        let g = GraphBundle::from_edge_list(
            "e",
            2,
            &[],
            arr2(&[[1.0], [2.0]]),
            vec![0, 0],
            1,
        )
        .unwrap();
        save_bundle(&g, dir.path()).unwrap();
        let h = load_bundle(dir.path()).unwrap();
        assert_eq!(g, h);
        assert_eq!(h.num_edges(), 0);
    }

    #[test]
    fn missing_file_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        assert!(matches!(err, GraphError::MissingFile(_)));
    }

    #[test]
    fn meta_count_mismatch_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&tiny(), dir.path()).unwrap();
        // Corrupt the edge count in meta.json.
        let meta_path = dir.path().join("meta.json");
        let text = std::fs::read_to_string(&meta_path).unwrap();
        std::fs::write(&meta_path, text.replace("\"num_edges\": 2", "\"num_edges\": 7"))
            .unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        assert!(matches!(err, GraphError::ShapeMismatch(_)));
    }

    #[test]
    fn save_to_unwritable_path_fails() {
        let err = save_bundle(&tiny(), "/proc/definitely/not/writable").unwrap_err();
        assert!(matches!(err, GraphError::Io(_)));
    }

    #[test]
    fn directed_storage_symmetrizes() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&tiny(), dir.path()).unwrap();
        // Rewrite edges.bin with both arc directions plus a self-loop.
        let words: Vec<u32> = vec![0, 1, 1, 0, 1, 1, 1, 2];
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        std::fs::write(dir.path().join("edges.bin"), bytes).unwrap();
        let meta_path = dir.path().join("meta.json");
        let text = std::fs::read_to_string(&meta_path).unwrap();
        std::fs::write(
            &meta_path,
            text.replace("\"num_edges\": 2", "\"num_edges\": 4")
                .replace("undirected", "directed"),
        )
        .unwrap();
        let g = load_bundle(dir.path()).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
    }
}
