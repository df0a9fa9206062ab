//! Random walk with restart: topological relevance scores and the softmax
//! pair weights attached to a contrast plan.
//!
//! The canonical definition is the fixed point of
//! `r <- q * A_rw * r + (1 - q) * e_source`, which is a probability vector.
//! Scores depend only on the graph topology, so they are computed lazily per
//! source node and cached for the lifetime of a run (or precomputed in bulk
//! for small graphs).

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::error::{PclError, Result};
use crate::pairs::ContrastPlan;
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

pub const DEFAULT_RESTART: f64 = 0.85;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200;

/// One converged solve.
#[derive(Debug, Clone)]
pub struct RwrSolve<S: Scalar> {
    pub scores: Vec<S>,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates `r <- q * A_rw * r + (1 - q) * e_source` from `r = e_source`
/// until the L1 change drops below `tol`.
pub fn rwr_vector<S: Scalar>(
    rw_adj: &CsrMatrix<S>,
    source: usize,
    q: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RwrSolve<S>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(PclError::parameter("q_restart", format!("{q} not in (0,1)")));
    }
    let n = rw_adj.rows();
    if source >= n {
        return Err(PclError::Contract(format!(
            "rwr source {source} out of range for {n} nodes"
        )));
    }
    let qs = S::of(q);
    let restart = S::of(1.0 - q);
    let mut r = vec![S::zero(); n];
    r[source] = S::one();
    let mut next = vec![S::zero(); n];
    for it in 1..=max_iter {
        rw_adj.matvec(&r, &mut next);
        for v in next.iter_mut() {
            *v *= qs;
        }
        next[source] += restart;
        let residual: S = r.iter().zip(&next).map(|(&a, &b)| (a - b).abs()).sum();
        std::mem::swap(&mut r, &mut next);
        if residual < S::of(tol) {
            return Ok(RwrSolve {
                scores: r,
                iterations: it,
                residual: residual.to_f64_lossy(),
            });
        }
    }
    let residual: S = r.iter().zip(&next).map(|(&a, &b)| (a - b).abs()).sum();
    Err(PclError::SolverDiverged {
        residual: residual.to_f64_lossy(),
        iterations: max_iter,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub solves: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
}

/// Lazily filled per-source score cache. Insertion is synchronized so
/// parallel runs over the same graph can share one instance; values are pure
/// functions of the topology, so racing inserts are harmless.
pub struct RwrScores<S: Scalar> {
    q: f64,
    tol: f64,
    max_iter: usize,
    vectors: Mutex<HashMap<usize, Arc<Vec<S>>>>,
    stats: Mutex<SolveStats>,
}

impl<S: Scalar> RwrScores<S> {
    pub fn new(q: f64, tol: f64, max_iter: usize) -> Self {
        RwrScores {
            q,
            tol,
            max_iter,
            vectors: Mutex::new(HashMap::new()),
            stats: Mutex::new(SolveStats::default()),
        }
    }

    pub fn with_defaults(q: f64) -> Self {
        Self::new(q, DEFAULT_TOL, DEFAULT_MAX_ITER)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.vectors.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> SolveStats {
        *self.stats.lock().unwrap()
    }

    /// Scores for one source node, solving on first use.
    pub fn get(&self, rw_adj: &CsrMatrix<S>, source: usize) -> Result<Arc<Vec<S>>> {
        if let Some(v) = self.vectors.lock().unwrap().get(&source) {
            return Ok(Arc::clone(v));
        }
        let solve = rwr_vector(rw_adj, source, self.q, self.tol, self.max_iter)?;
        {
            let mut stats = self.stats.lock().unwrap();
            stats.solves += 1;
            stats.max_iterations = stats.max_iterations.max(solve.iterations);
            stats.max_residual = stats.max_residual.max(solve.residual);
        }
        let arc = Arc::new(solve.scores);
        self.vectors
            .lock()
            .unwrap()
            .insert(source, Arc::clone(&arc));
        Ok(arc)
    }

    /// Solves every source up front; intended for graphs of at most a few
    /// thousand nodes.
    pub fn precompute_all(&self, rw_adj: &CsrMatrix<S>) -> Result<()> {
        use rayon::prelude::*;
        (0..rw_adj.rows())
            .into_par_iter()
            .try_for_each(|i| self.get(rw_adj, i).map(|_| ()))
    }

    /// Writes the cache: little-endian header (n, q, graph hash) followed by
    /// one (source id, n f64 scores) record per cached vector.
    pub fn save_cache(&self, path: &Path, n: usize, graph_hash: u64) -> Result<()> {
        let vectors = self.vectors.lock().unwrap();
        let mut file = std::fs::File::create(path)
            .map_err(|e| PclError::io(path.display().to_string(), e))?;
        let io_err = |e| PclError::io(path.display().to_string(), e);
        file.write_all(&(n as u64).to_le_bytes()).map_err(io_err)?;
        file.write_all(&self.q.to_le_bytes()).map_err(io_err)?;
        file.write_all(&graph_hash.to_le_bytes()).map_err(io_err)?;
        let mut sources: Vec<&usize> = vectors.keys().collect();
        sources.sort();
        for &source in sources {
            file.write_all(&(source as u64).to_le_bytes()).map_err(io_err)?;
            let vec = &vectors[&source];
            for &v in vec.iter() {
                file.write_all(&v.to_f64_lossy().to_le_bytes()).map_err(io_err)?;
            }
        }
        Ok(())
    }

    /// Reads a cache written by [`save_cache`](Self::save_cache). Returns
    /// `Ok(None)` when the header does not match the expected graph size,
    /// restart probability, or graph hash (a stale cache, not an error).
    pub fn load_cache(
        path: &Path,
        n: usize,
        q: f64,
        graph_hash: u64,
        tol: f64,
        max_iter: usize,
    ) -> Result<Option<Self>> {
        let mut file = std::fs::File::open(path)
            .map_err(|e| PclError::io(path.display().to_string(), e))?;
        let mut buf8 = [0u8; 8];
        let mut read_u64 = |file: &mut std::fs::File| -> Result<u64> {
            file.read_exact(&mut buf8)
                .map_err(|e| PclError::io(path.display().to_string(), e))?;
            Ok(u64::from_le_bytes(buf8))
        };
        let file_n = read_u64(&mut file)?;
        let file_q = f64::from_le_bytes(read_u64(&mut file)?.to_le_bytes());
        let file_hash = read_u64(&mut file)?;
        if file_n != n as u64 || file_q.to_bits() != q.to_bits() || file_hash != graph_hash {
            return Ok(None);
        }
        let out = Self::new(q, tol, max_iter);
        let mut vectors = HashMap::new();
        loop {
            match read_u64(&mut file) {
                Ok(source) => {
                    let mut vec = Vec::with_capacity(n);
                    for _ in 0..n {
                        let bits = read_u64(&mut file)?;
                        vec.push(S::of(f64::from_le_bytes(bits.to_le_bytes())));
                    }
                    vectors.insert(source as usize, Arc::new(vec));
                }
                Err(PclError::Io { source, .. })
                    if source.kind() == std::io::ErrorKind::UnexpectedEof =>
                {
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        *out.vectors.lock().unwrap() = vectors;
        Ok(Some(out))
    }
}

/// Max-shifted softmax; shifting all inputs by a constant leaves the output
/// bit-identical.
pub fn softmax_weights<S: Scalar>(vals: &[S]) -> Vec<S> {
    let max = vals.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = vals.iter().map(|&v| (v - max).exp()).collect();
    let total: S = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Attaches softmax weights over each anchor's negative set:
/// `w_ij = exp(r_ij) / sum_j' exp(r_ij')`. Scores are treated as constants;
/// no gradient flows through the weights.
pub fn pair_weights<S: Scalar>(
    plan: &mut ContrastPlan<S>,
    scores: &RwrScores<S>,
    rw_adj: &CsrMatrix<S>,
) -> Result<()> {
    for anchor in &mut plan.anchors {
        let r = scores.get(rw_adj, anchor.node)?;
        let vals: Vec<S> = anchor.negatives.iter().map(|&j| r[j]).collect();
        anchor.weights = softmax_weights(&vals);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::Anchor;

    fn path2() -> CsrMatrix<f64> {
        CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    #[test]
    fn two_node_fixed_point() {
        let solve = rwr_vector(&path2(), 0, 0.5, 1e-12, 500).unwrap();
        assert!((solve.scores[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((solve.scores[1] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn vanishing_restart_returns_source_vector() {
        let solve = rwr_vector(&path2(), 1, 1e-18, 1e-6, 200).unwrap();
        assert_eq!(solve.scores[1], 1.0);
        assert!(solve.scores[0] <= 1e-17);
    }

    #[test]
    fn isolated_self_loop_walk_stays_home() {
        let m = CsrMatrix::from_triplets(1, 1, vec![(0, 0, 1.0)]).unwrap();
        let solve = rwr_vector(&m, 0, 0.85, 1e-9, 100).unwrap();
        assert_eq!(solve.scores, vec![1.0]);
    }

    #[test]
    fn invalid_restart_rejected() {
        assert!(rwr_vector(&path2(), 0, 0.0, 1e-6, 100).is_err());
        assert!(rwr_vector(&path2(), 0, 1.0, 1e-6, 100).is_err());
    }

    #[test]
    fn non_convergence_reports_residual() {
        let err = rwr_vector(&path2(), 0, 0.999, 1e-15, 3).unwrap_err();
        match err {
            PclError::SolverDiverged { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn scores_sum_to_one() {
        // 4-cycle plus a chord
        let edges = [(0usize, 1usize), (1, 2), (2, 3), (3, 0), (0, 2)];
        let mut deg = [0usize; 4];
        for &(u, v) in &edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut trip = Vec::new();
        for &(u, v) in &edges {
            trip.push((u, v, 1.0 / deg[v] as f64));
            trip.push((v, u, 1.0 / deg[u] as f64));
        }
        let m = CsrMatrix::from_triplets(4, 4, trip).unwrap();
        for s in 0..4 {
            let solve = rwr_vector(&m, s, 0.85, 1e-10, 500).unwrap();
            let sum: f64 = solve.scores.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "source {s}: sum {sum}");
            assert!(solve.scores.iter().all(|&v| v >= 0.0));
        }
    }

    fn weighted_plan(r: &RwrScores<f64>, adj: &CsrMatrix<f64>, negatives: Vec<usize>) -> ContrastPlan<f64> {
        let mut plan = ContrastPlan {
            anchors: vec![Anchor {
                node: 0,
                class_id: 1,
                negatives,
                weights: Vec::new(),
            }],
            dropped_anchors: 0,
        };
        pair_weights(&mut plan, r, adj).unwrap();
        plan
    }

    #[test]
    fn equal_scores_give_uniform_weights() {
        // star: two leaves are symmetric around the center
        let trip = vec![
            (0usize, 1usize, 1.0),
            (0, 2, 1.0),
            (1, 0, 0.5),
            (2, 0, 0.5),
        ];
        let adj = CsrMatrix::from_triplets(3, 3, trip).unwrap();
        let scores = RwrScores::with_defaults(0.85);
        let plan = weighted_plan(&scores, &adj, vec![1, 2]);
        let w = &plan.anchors[0].weights;
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
        assert!(plan.is_weighted());
    }

    #[test]
    fn hand_softmax_weights() {
        let w = softmax_weights(&[0.6f64, 0.2]);
        assert!((w[0] - 0.5987).abs() < 1e-4);
        assert!((w[1] - 0.4013).abs() < 1e-4);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let vals = [0.31f64, 0.07, 0.62, 0.4];
        let shifted: Vec<f64> = vals.iter().map(|v| v + 123.456).collect();
        for (a, b) in softmax_weights(&vals).iter().zip(softmax_weights(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_weights_match_recomputed_softmax_of_scores() {
        // path graph: anchor 0's relevance scores decay with distance
        let edges: Vec<(usize, usize)> = (1..5).map(|i| (i - 1, i)).collect();
        let mut deg = [0usize; 5];
        for &(u, v) in &edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut trip = Vec::new();
        for &(u, v) in &edges {
            trip.push((u, v, 1.0 / deg[v] as f64));
            trip.push((v, u, 1.0 / deg[u] as f64));
        }
        let adj = CsrMatrix::from_triplets(5, 5, trip).unwrap();
        let scores = RwrScores::with_defaults(0.85);
        let plan = weighted_plan(&scores, &adj, vec![1, 3, 4]);

        let r = scores.get(&adj, 0).unwrap();
        let exps: Vec<f64> = [1, 3, 4].iter().map(|&j| r[j].exp()).collect();
        let total: f64 = exps.iter().sum();
        for (w, e) in plan.anchors[0].weights.iter().zip(&exps) {
            assert!((w - e / total).abs() < 1e-12);
        }
        // nearer negatives carry larger weights
        let w = &plan.anchors[0].weights;
        assert!(w[0] > w[1] && w[1] > w[2]);
    }

    #[test]
    fn cache_roundtrip_and_invalidation() {
        let adj = path2();
        let scores = RwrScores::<f64>::with_defaults(0.85);
        scores.get(&adj, 0).unwrap();
        scores.get(&adj, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rwr.cache");
        let hash = adj.structure_hash();
        scores.save_cache(&path, 2, hash).unwrap();

        let loaded =
            RwrScores::<f64>::load_cache(&path, 2, 0.85, hash, DEFAULT_TOL, DEFAULT_MAX_ITER)
                .unwrap()
                .expect("cache should validate");
        assert_eq!(loaded.len(), 2);
        let a = scores.get(&adj, 0).unwrap();
        let b = loaded.get(&adj, 0).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());

        // different restart probability invalidates
        assert!(RwrScores::<f64>::load_cache(&path, 2, 0.5, hash, DEFAULT_TOL, DEFAULT_MAX_ITER)
            .unwrap()
            .is_none());
        // different graph hash invalidates
        assert!(RwrScores::<f64>::load_cache(&path, 2, 0.85, hash ^ 1, DEFAULT_TOL, DEFAULT_MAX_ITER)
            .unwrap()
            .is_none());
    }
}
