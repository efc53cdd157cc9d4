//! Low-rank adjacency reconstruction, used as an inference-time
//! preprocessing defense against structural perturbations.
//!
//! The truncated decomposition runs randomized subspace iteration (two power
//! iterations, oversampling 10) on the symmetric adjacency. For a symmetric
//! matrix the top-k singular triplets coincide with the eigenpairs of
//! largest magnitude, so the reconstruction stays symmetric by construction.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::SvdError;
use crate::graph::GraphBundle;

const OVERSAMPLE: usize = 10;
const POWER_ITERS: usize = 2;

/// A graph whose adjacency has been replaced by a dense low-rank
/// reconstruction; features and labels carry over from the source bundle.
#[derive(Debug, Clone)]
pub struct LowRankGraph {
    pub adjacency: Array2<f64>,
    pub features: Array2<f64>,
    pub labels: Vec<u32>,
    pub num_classes: usize,
    pub rank: usize,
}

/// Replace the adjacency with its best rank-k approximation.
pub fn svd_low_rank(g: &GraphBundle, k: usize) -> Result<LowRankGraph, SvdError> {
    let n = g.num_nodes();
    if k == 0 {
        return Err(SvdError::ZeroRank);
    }
    if k > n {
        return Err(SvdError::RankTooLarge { rank: k, n });
    }
    let adj = adjacency_dense(g);
    let adjacency = low_rank_approximation(&adj, k, 0x5eed);
    Ok(LowRankGraph {
        adjacency,
        features: g.features().clone(),
        labels: g.labels().to_vec(),
        num_classes: g.num_classes(),
        rank: k,
    })
}

/// Dense 0/1 adjacency of a bundle.
pub fn adjacency_dense(g: &GraphBundle) -> Array2<f64> {
    let n = g.num_nodes();
    let mut adj = Array2::zeros((n, n));
    for u in 0..n {
        for &v in g.neighbors(u) {
            adj[[u, v as usize]] = 1.0;
        }
    }
    adj
}

/// Rank-k approximation of a symmetric matrix by randomized subspace
/// iteration. The reconstruction sums the k eigenpairs of largest
/// magnitude, which equals the truncated SVD for symmetric input.
pub fn low_rank_approximation(a: &Array2<f64>, k: usize, seed: u64) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let k = k.min(n);
    let sketch = (k + OVERSAMPLE).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let omega = Array2::from_shape_simple_fn((n, sketch), || normal.sample(&mut rng));

    // Range finder with re-orthonormalization between power iterations.
    let mut y = a.dot(&omega);
    orthonormalize(&mut y);
    for _ in 0..POWER_ITERS {
        let z = a.dot(&y);
        y = a.dot(&z);
        orthonormalize(&mut y);
    }
    let q = y;

    // Project, solve the small symmetric problem, lift back.
    let b = q.t().dot(&a.dot(&q));
    let (eigvals, eigvecs) = jacobi_eigh_small(&b);
    let mut order: Vec<usize> = (0..eigvals.len()).collect();
    order.sort_by(|&i, &j| {
        eigvals[j]
            .abs()
            .partial_cmp(&eigvals[i].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut recon = Array2::zeros((n, n));
    for &idx in order.iter().take(k) {
        let lambda = eigvals[idx];
        let v_small = eigvecs.column(idx);
        let v = q.dot(&v_small); // length-n eigenvector estimate
        for i in 0..n {
            let vi = v[i] * lambda;
            if vi == 0.0 {
                continue;
            }
            for j in 0..n {
                recon[[i, j]] += vi * v[j];
            }
        }
    }
    // Kill asymmetry from floating-point accumulation.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (recon[[i, j]] + recon[[j, i]]);
            recon[[i, j]] = m;
            recon[[j, i]] = m;
        }
    }
    recon
}

/// Frobenius norm of the difference between two matrices.
pub fn frobenius_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// In-place modified Gram-Schmidt on the columns.
fn orthonormalize(m: &mut Array2<f64>) {
    let cols = m.ncols();
    for c in 0..cols {
        for prev in 0..c {
            let dot = m.column(c).dot(&m.column(prev));
            let prev_col = m.column(prev).to_owned();
            let mut col = m.column_mut(c);
            col.zip_mut_with(&prev_col, |x, &p| *x -= dot * p);
        }
        let norm = m.column(c).dot(&m.column(c)).sqrt();
        if norm > 1e-12 {
            m.column_mut(c).mapv_inplace(|x| x / norm);
        } else {
            m.column_mut(c).fill(0.0);
        }
    }
}

/// Cyclic Jacobi eigendecomposition for the small projected matrix.
/// Returns (eigenvalues, eigenvectors as columns).
fn jacobi_eigh_small(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = c * mip - s * miq;
                    m[[i, q]] = s * mip + c * miq;
                }
                for i in 0..n {
                    let mpi = m[[p, i]];
                    let mqi = m[[q, i]];
                    m[[p, i]] = c * mpi - s * mqi;
                    m[[q, i]] = s * mpi + c * mqi;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    let eigvals = (0..n).map(|i| m[[i, i]]).collect();
    (eigvals, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn exact_rank_reconstruction() {
        // Outer product uu^T has rank 1; k=1 must reconstruct it exactly.
        let u = [1.0, -2.0, 0.5, 3.0];
        let mut a = Array2::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                a[[i, j]] = u[i] * u[j];
            }
        }
        let r = low_rank_approximation(&a, 1, 7);
        assert!(frobenius_distance(&a, &r) < 1e-10);
    }

    #[test]
    fn identity_rank_two_error_is_one() {
        // sigma = (1,1,1); dropping one component leaves error exactly 1.
        let a: Array2<f64> = Array2::eye(3);
        let r = low_rank_approximation(&a, 2, 3);
        let err = frobenius_distance(&a, &r);
        assert!((err - 1.0).abs() < 1e-8, "error {err}");
    }

    #[test]
    fn error_non_increasing_in_k() {
        let mut a = Array2::zeros((20, 20));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        for i in 0..20 {
            for j in (i + 1)..20 {
                if rng.random::<f64>() < 0.3 {
                    a[[i, j]] = 1.0;
                    a[[j, i]] = 1.0;
                }
            }
        }
        let mut prev = f64::INFINITY;
        for k in [1, 3, 6, 10, 15, 20] {
            let err = frobenius_distance(&a, &low_rank_approximation(&a, k, 1));
            assert!(err <= prev + 1e-9, "rank {k}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn reconstruction_symmetric() {
        let a = arr2(&[
            [0.0, 1.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ]);
        let r = low_rank_approximation(&a, 2, 9);
        for i in 0..4 {
            for j in 0..4 {
                assert!((r[[i, j]] - r[[j, i]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_bounds_checked() {
        let g = GraphBundle::from_edge_list(
            "t",
            3,
            &[(0, 1)],
            Array2::zeros((3, 1)),
            vec![0; 3],
            1,
        )
        .unwrap();
        assert!(matches!(svd_low_rank(&g, 0), Err(SvdError::ZeroRank)));
        assert!(matches!(
            svd_low_rank(&g, 4),
            Err(SvdError::RankTooLarge { .. })
        ));
        assert!(svd_low_rank(&g, 2).is_ok());
    }
}
