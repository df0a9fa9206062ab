//! Immutable graph bundles and their derived operators.
//!
//! A [`GraphBundle`] holds the undirected graph, node features, labels, and
//! train/val/test masks. Derived bundles (normalized features, injected label
//! noise, fresh splits) share the feature and adjacency storage.

mod io;

pub use io::{convert_linqs, load_bundle, save_bundle, ConvertStats};

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{PclError, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GraphBundle<S: Scalar> {
    n_classes: usize,
    features: Arc<Tensor<S>>,
    /// Canonical undirected edge list: deduplicated, self-loop free, u < v.
    edges: Arc<Vec<(usize, usize)>>,
    adjacency: Arc<CsrMatrix<S>>,
    labels: Vec<i32>,
    train_mask: Vec<bool>,
    val_mask: Vec<bool>,
    test_mask: Vec<bool>,
    dropped_self_loops: usize,
    dropped_duplicate_edges: usize,
}

/// Node ids selected by a boolean mask, ascending.
pub fn mask_nodes(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

/// GCN propagation operator and RWR transition matrix for one graph.
#[derive(Debug, Clone)]
pub struct NormalizedOperators<S: Scalar> {
    /// Symmetric normalization of A+I.
    pub gcn_adj: Arc<CsrMatrix<S>>,
    /// Column-stochastic transition matrix of A (self-loop on isolated nodes).
    pub rw_adj: Arc<CsrMatrix<S>>,
}

impl<S: Scalar> GraphBundle<S> {
    /// Builds a bundle from raw parts. Self-loops and duplicate edges are
    /// dropped (counted on the bundle); masks start empty.
    pub fn from_parts(
        features: Tensor<S>,
        raw_edges: &[(usize, usize)],
        labels: Vec<i32>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(PclError::dimension(
                "graph_bundle",
                format!("{} labels for {n} nodes", labels.len()),
            ));
        }
        if let Some(&l) = labels.iter().find(|&&l| l < -1 || l >= n_classes as i32) {
            return Err(PclError::Contract(format!(
                "label {l} outside [-1, {n_classes})"
            )));
        }
        let mut dropped_self_loops = 0;
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(raw_edges.len());
        for &(u, v) in raw_edges {
            if u >= n || v >= n {
                return Err(PclError::Contract(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                dropped_self_loops += 1;
                continue;
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        let dropped_duplicate_edges = before - edges.len();

        let mut triplets = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in &edges {
            triplets.push((u, v, S::one()));
            triplets.push((v, u, S::one()));
        }
        let adjacency = CsrMatrix::from_triplets(n, n, triplets)?;

        Ok(GraphBundle {
            n_classes,
            features: Arc::new(features),
            edges: Arc::new(edges),
            adjacency: Arc::new(adjacency),
            labels,
            train_mask: vec![false; n],
            val_mask: vec![false; n],
            test_mask: vec![false; n],
            dropped_self_loops,
            dropped_duplicate_edges,
        })
    }

    /// Returns a bundle with the given masks; validates disjointness and that
    /// every masked node carries a valid label.
    pub fn with_masks(&self, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        let mut out = self.clone();
        out.train_mask = vec![false; n];
        out.val_mask = vec![false; n];
        out.test_mask = vec![false; n];
        for (name, ids, mask) in [
            ("train", train, &mut out.train_mask),
            ("val", val, &mut out.val_mask),
            ("test", test, &mut out.test_mask),
        ] {
            for &i in ids {
                if i >= n {
                    return Err(PclError::Contract(format!(
                        "{name} id {i} out of range for {n} nodes"
                    )));
                }
                if mask[i] {
                    return Err(PclError::Contract(format!("duplicate {name} id {i}")));
                }
                mask[i] = true;
            }
        }
        for i in 0..n {
            let hits = out.train_mask[i] as u8 + out.val_mask[i] as u8 + out.test_mask[i] as u8;
            if hits > 1 {
                return Err(PclError::Contract(format!(
                    "node {i} appears in more than one split"
                )));
            }
            if hits == 1 && (self.labels[i] < 0 || self.labels[i] >= self.n_classes as i32) {
                return Err(PclError::Contract(format!(
                    "masked node {i} has invalid label {}",
                    self.labels[i]
                )));
            }
        }
        Ok(out)
    }

    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Tensor<S> {
        &self.features
    }

    pub fn features_arc(&self) -> Arc<Tensor<S>> {
        Arc::clone(&self.features)
    }

    pub fn adjacency(&self) -> &CsrMatrix<S> {
        &self.adjacency
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn val_mask(&self) -> &[bool] {
        &self.val_mask
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    pub fn has_split(&self) -> bool {
        self.train_mask.iter().any(|&m| m)
    }

    pub fn dropped_self_loops(&self) -> usize {
        self.dropped_self_loops
    }

    pub fn dropped_duplicate_edges(&self) -> usize {
        self.dropped_duplicate_edges
    }

    /// Per-row normalization of the feature matrix: every row with a nonzero
    /// sum is scaled to sum to 1; zero rows stay untouched.
    pub fn row_normalize_features(&self) -> Self {
        let f = &*self.features;
        let mut data = f.data().to_vec();
        let cols = f.cols();
        for row in data.chunks_mut(cols) {
            let sum: S = row.iter().cloned().sum();
            if sum != S::zero() {
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
        let mut out = self.clone();
        out.features = Arc::new(Tensor::from_vec(f.rows(), cols, data).expect("shape"));
        out
    }

    /// Standard citation-network split: `per_class` training nodes sampled
    /// per class, then `n_val`/`n_test` nodes sampled from the remaining
    /// labeled nodes. Deterministic for a given RNG state.
    pub fn planetoid_split<R: Rng>(
        &self,
        per_class: usize,
        n_val: usize,
        n_test: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut train = Vec::with_capacity(per_class * self.n_classes);
        for c in 0..self.n_classes as i32 {
            let mut ids: Vec<usize> = (0..self.n_nodes())
                .filter(|&i| self.labels[i] == c)
                .collect();
            if ids.len() < per_class {
                return Err(PclError::Split(format!(
                    "class {c} has {} nodes, need {per_class}",
                    ids.len()
                )));
            }
            ids.shuffle(rng);
            train.extend_from_slice(&ids[..per_class]);
        }
        let in_train: Vec<bool> = {
            let mut m = vec![false; self.n_nodes()];
            for &i in &train {
                m[i] = true;
            }
            m
        };
        let mut rest: Vec<usize> = (0..self.n_nodes())
            .filter(|&i| !in_train[i] && self.labels[i] >= 0)
            .collect();
        if rest.len() < n_val + n_test {
            return Err(PclError::Split(format!(
                "{} labeled nodes left, need {} for val+test",
                rest.len(),
                n_val + n_test
            )));
        }
        rest.shuffle(rng);
        self.with_masks(&train, &rest[..n_val], &rest[n_val..n_val + n_test])
    }

    /// Swaps the labels of `n_swaps` disjoint pairs of training nodes with
    /// differing labels. Only training labels change, and the multiset of
    /// training labels is preserved.
    pub fn inject_label_noise<R: Rng>(&self, n_swaps: usize, rng: &mut R) -> Result<Self> {
        if n_swaps == 0 {
            return Ok(self.clone());
        }
        let mut pool = mask_nodes(&self.train_mask);
        if n_swaps * 2 > pool.len() {
            return Err(PclError::Noise(format!(
                "{n_swaps} swaps need {} training nodes, have {}",
                n_swaps * 2,
                pool.len()
            )));
        }
        pool.shuffle(rng);
        let mut out = self.clone();
        let mut done = 0;
        while done < n_swaps {
            let Some(a) = pool.pop() else {
                return Err(PclError::Noise(format!(
                    "found only {done} cross-class pairs, need {n_swaps}"
                )));
            };
            let Some(pos) = pool.iter().rposition(|&b| out.labels[b] != out.labels[a]) else {
                return Err(PclError::Noise(format!(
                    "found only {done} cross-class pairs, need {n_swaps}"
                )));
            };
            let b = pool.remove(pos);
            out.labels.swap(a, b);
            done += 1;
        }
        Ok(out)
    }

    /// Builds the GCN operator D^(-1/2)(A+I)D^(-1/2) and the column-stochastic
    /// RWR transition matrix. Isolated nodes get a self-loop in the
    /// transition matrix so its columns always sum to 1.
    pub fn normalize_operators(&self) -> NormalizedOperators<S> {
        let n = self.n_nodes();
        let mut degree = vec![0usize; n];
        for &(u, v) in self.edges.iter() {
            degree[u] += 1;
            degree[v] += 1;
        }

        let mut gcn = Vec::with_capacity(self.edges.len() * 2 + n);
        let inv_sqrt: Vec<S> = degree
            .iter()
            .map(|&d| S::one() / S::of((d + 1) as f64).sqrt())
            .collect();
        for (i, &inv) in inv_sqrt.iter().enumerate() {
            gcn.push((i, i, inv * inv));
        }
        for &(u, v) in self.edges.iter() {
            let w = inv_sqrt[u] * inv_sqrt[v];
            gcn.push((u, v, w));
            gcn.push((v, u, w));
        }

        let mut rw = Vec::with_capacity(self.edges.len() * 2 + n);
        for (i, &d) in degree.iter().enumerate() {
            if d == 0 {
                rw.push((i, i, S::one()));
            }
        }
        for &(u, v) in self.edges.iter() {
            rw.push((u, v, S::one() / S::of(degree[v] as f64)));
            rw.push((v, u, S::one() / S::of(degree[u] as f64)));
        }

        NormalizedOperators {
            gcn_adj: Arc::new(CsrMatrix::from_triplets(n, n, gcn).expect("gcn operator")),
            rw_adj: Arc::new(CsrMatrix::from_triplets(n, n, rw).expect("rw operator")),
        }
    }
}
