//! Evaluation metrics: classification accuracy and representation
//! separability.
//!
//! Separability measures mean cosine distance between differently labeled
//! nodes, either over exact r-hop neighborhoods (BFS shortest-path distance)
//! or globally over all node pairs.

use rand::Rng;

use crate::error::{PclError, Result};
use crate::graph::GraphBundle;
use crate::scalar::Scalar;
use crate::tensor::{row_cosine, Tensor};

/// Fraction of masked nodes whose argmax prediction matches the label;
/// argmax ties break toward the lower class index.
pub fn accuracy<S: Scalar>(p: &Tensor<S>, labels: &[i32], mask: &[bool]) -> Result<f64> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        total += 1;
        if p.argmax_row(i) as i32 == labels[i] {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(PclError::Contract("accuracy over an empty mask".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// Per-hop and global separability of one representation matrix.
#[derive(Debug, Clone)]
pub struct SeparabilityReport {
    /// `per_hop[r-1]` holds (value, neighbor-pair count) for hop r, or `None`
    /// when no node has an exact-r-hop neighbor.
    pub per_hop: Vec<Option<(f64, usize)>>,
    pub global: f64,
}

/// Mean cosine distance between nodes and their exact-r-hop neighbors of a
/// different class:
/// Σ_i Σ_{j in N_i(r)} 1[y_i != y_j] (1 - cos(z_i, z_j)) / Σ_i |N_i(r)|.
/// Returns `None` when no node has an r-hop neighbor.
pub fn separability_n<S: Scalar>(
    z: &Tensor<S>,
    bundle: &GraphBundle<S>,
    r: usize,
) -> Result<Option<f64>> {
    if r == 0 {
        return Err(PclError::parameter("r", "hop must be >= 1"));
    }
    Ok(separability_n_counted(z, bundle, r).map(|(v, _)| v))
}

fn separability_n_counted<S: Scalar>(
    z: &Tensor<S>,
    bundle: &GraphBundle<S>,
    r: usize,
) -> Option<(f64, usize)> {
    let n = bundle.n_nodes();
    let labels = bundle.labels();
    let adj = bundle.adjacency();
    let mut numer = 0.0;
    let mut denom = 0usize;
    let mut dist = vec![usize::MAX; n];
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    for i in 0..n {
        // BFS out to depth r; nodes at exactly distance r form N_i(r)
        dist.fill(usize::MAX);
        dist[i] = 0;
        frontier.clear();
        frontier.push(i);
        for _ in 0..r {
            next.clear();
            for &u in &frontier {
                let (cols, _) = adj.row(u);
                for &v in cols {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        next.push(v);
                    }
                }
            }
            std::mem::swap(&mut frontier, &mut next);
            if frontier.is_empty() {
                break;
            }
        }
        for &j in &frontier {
            denom += 1;
            if labels[i] != labels[j] {
                numer += 1.0 - row_cosine(z.row(i), z.row(j)).to_f64_lossy();
            }
        }
    }
    (denom > 0).then(|| (numer / denom as f64, denom))
}

/// Global separability over every ordered cross-class pair:
/// Σ_{i != j} 1[y_i != y_j] (1 - cos(z_i, z_j)) / (N (N - 1)).
pub fn separability_g<S: Scalar>(z: &Tensor<S>, labels: &[i32]) -> f64 {
    let n = z.rows();
    let mut numer = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] != labels[j] {
                numer += 2.0 * (1.0 - row_cosine(z.row(i), z.row(j)).to_f64_lossy());
            }
        }
    }
    numer / (n * (n - 1)) as f64
}

/// Unbiased sampled estimate of [`separability_g`] over `n_pairs` uniformly
/// drawn ordered pairs; intended for graphs too large for the exact sum.
pub fn separability_g_sampled<S: Scalar, R: Rng>(
    z: &Tensor<S>,
    labels: &[i32],
    n_pairs: usize,
    rng: &mut R,
) -> f64 {
    let n = z.rows();
    let mut total = 0.0;
    for _ in 0..n_pairs {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if labels[i] != labels[j] {
            total += 1.0 - row_cosine(z.row(i), z.row(j)).to_f64_lossy();
        }
    }
    total / n_pairs as f64
}

/// Threshold above which the global separability switches to the sampled
/// estimator.
pub const EXACT_GLOBAL_LIMIT: usize = 5_000;
/// Sample size used by the large-graph estimator.
pub const GLOBAL_SAMPLE_PAIRS: usize = 1_000_000;

/// Separability at hops 1..=max_hop plus the global value. Graphs above
/// [`EXACT_GLOBAL_LIMIT`] nodes use the sampled global estimator with the
/// given RNG.
pub fn separability_report<S: Scalar, R: Rng>(
    z: &Tensor<S>,
    bundle: &GraphBundle<S>,
    max_hop: usize,
    rng: &mut R,
) -> SeparabilityReport {
    let per_hop = (1..=max_hop)
        .map(|r| separability_n_counted(z, bundle, r))
        .collect();
    let global = if bundle.n_nodes() <= EXACT_GLOBAL_LIMIT {
        separability_g(z, bundle.labels())
    } else {
        separability_g_sampled(z, bundle.labels(), GLOBAL_SAMPLE_PAIRS, rng)
    };
    SeparabilityReport { per_hop, global }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle(n: usize, edges: &[(usize, usize)], labels: &[i32]) -> GraphBundle<f64> {
        let feats = Tensor::from_vec(n, 1, vec![0.0; n]).unwrap();
        let c = labels.iter().copied().max().unwrap_or(0) + 1;
        GraphBundle::from_parts(feats, edges, labels.to_vec(), c as usize).unwrap()
    }

    #[test]
    fn perfect_and_wrong_accuracy() {
        let p = Tensor::<f64>::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]);
        assert_eq!(accuracy(&p, &[0, 1], &[true, true]).unwrap(), 1.0);
        assert_eq!(accuracy(&p, &[1, 1], &[true, false]).unwrap(), 0.0);
        assert!(accuracy(&p, &[0, 1], &[false, false]).is_err());
    }

    #[test]
    fn random_two_class_accuracy_is_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 4000;
        let data: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
        let p = Tensor::from_vec(n, 2, data).unwrap();
        let labels: Vec<i32> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let acc = accuracy(&p, &labels, &vec![true; n]).unwrap();
        assert!((acc - 0.5).abs() < 0.05, "acc {acc}");
    }

    #[test]
    fn same_labels_give_zero_separability() {
        let b = bundle(3, &[(0, 1), (1, 2)], &[0, 0, 0]);
        let z = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(separability_n(&z, &b, 1).unwrap(), Some(0.0));
        assert_eq!(separability_g(&z, b.labels()), 0.0);
    }

    #[test]
    fn identical_rows_give_zero_separability() {
        let b = bundle(3, &[(0, 1), (1, 2)], &[0, 1, 0]);
        let z = Tensor::<f64>::from_rows(&vec![vec![1.0, 2.0]; 3]);
        let v = separability_n(&z, &b, 1).unwrap().unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn path_graph_hand_value() {
        // path 0-1-2-3, labels alternate, hand-set representations
        let b = bundle(4, &[(0, 1), (1, 2), (2, 3)], &[0, 1, 0, 1]);
        let z = Tensor::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![-1.0, 0.0],
        ]);
        // hop 1 neighbor pairs (ordered): (0,1),(1,0),(1,2),(2,1),(2,3),(3,2) — all cross-label
        let c01 = 0.0;
        let c12 = 1.0 / 2.0f64.sqrt();
        let c23 = -1.0 / 2.0f64.sqrt();
        let expect = (2.0 * (1.0 - c01) + 2.0 * (1.0 - c12) + 2.0 * (1.0 - c23)) / 6.0;
        let got = separability_n(&z, &b, 1).unwrap().unwrap();
        assert!((got - expect).abs() < 1e-12);

        // hop 3: only (0,3) and (3,0): cos(e0, -e0) = -1 -> distance 2
        let got3 = separability_n(&z, &b, 3).unwrap().unwrap();
        assert!((got3 - 2.0).abs() < 1e-12);

        // hop 4: nobody is 4 hops apart
        assert_eq!(separability_n(&z, &b, 4).unwrap(), None);
    }

    #[test]
    fn no_cross_label_neighbors_is_zero_not_absent() {
        let b = bundle(4, &[(0, 1), (2, 3)], &[0, 0, 1, 1]);
        let z = Tensor::<f64>::from_rows(&vec![vec![1.0, 0.0]; 4]);
        assert_eq!(separability_n(&z, &b, 1).unwrap(), Some(0.0));
    }

    #[test]
    fn two_orthogonal_nodes_have_unit_global_separability() {
        let z = Tensor::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let g = separability_g(&z, &[0, 1]);
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_estimator_tracks_exact_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 60;
        let data: Vec<f64> = (0..n * 4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let z = Tensor::from_vec(n, 4, data).unwrap();
        let labels: Vec<i32> = (0..n).map(|i| (i % 3) as i32).collect();
        let exact = separability_g(&z, &labels);
        let sampled = separability_g_sampled(&z, &labels, 200_000, &mut rng);
        assert!((exact - sampled).abs() < 0.01, "{exact} vs {sampled}");
    }
}
