//! Shared helpers for the integration tests: a central-difference gradient
//! checker, a dense linear-solve oracle for RWR, synthetic graph builders,
//! and a random-orthogonal-matrix generator.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use pcl_core::graph::GraphBundle;
use pcl_core::sparse::CsrMatrix;
use pcl_core::tape::{Tape, VarId};
use pcl_core::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_H: f64 = 1e-5;
pub const FD_RTOL: f64 = 1e-4;
pub const FD_ATOL: f64 = 1e-7;

/// Checks analytic gradients of `build`'s scalar output against central
/// finite differences for every entry of every input. `build` must be a
/// deterministic function of the input values.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], build: F)
where
    F: Fn(&mut Tape<f64>, &[VarId]) -> VarId,
{
    let mut tape = Tape::new();
    let ids: Vec<VarId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let loss = tape_loss(&mut tape, &build, &ids);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(inputs)
        .map(|(&id, t)| {
            tape.grad(id)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    for (k, input) in inputs.iter().enumerate() {
        for e in 0..input.numel() {
            let eval = |delta: f64| -> f64 {
                let mut tape = Tape::new();
                let ids: Vec<VarId> = inputs
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let mut t = t.clone();
                        if i == k {
                            t.data_mut()[e] += delta;
                        }
                        tape.leaf(t)
                    })
                    .collect();
                let loss = tape_loss(&mut tape, &build, &ids);
                tape.scalar_value(loss)
            };
            let fd = (eval(FD_H) - eval(-FD_H)) / (2.0 * FD_H);
            let a = analytic[k][e];
            let tol = FD_ATOL + FD_RTOL * fd.abs().max(a.abs());
            assert!(
                (a - fd).abs() <= tol,
                "input {k} entry {e}: analytic {a} vs fd {fd} (tol {tol})"
            );
        }
    }
}

fn tape_loss<F>(tape: &mut Tape<f64>, build: &F, ids: &[VarId]) -> VarId
where
    F: Fn(&mut Tape<f64>, &[VarId]) -> VarId,
{
    build(tape, ids)
}

/// Random matrix with entries in [lo, hi].
pub fn rand_tensor(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Random matrix kept away from ReLU/zero-norm kinks: entries in
/// [-1, -margin] or [margin, 1].
pub fn rand_tensor_off_kink(
    rng: &mut impl Rng,
    rows: usize,
    cols: usize,
    margin: f64,
) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| {
            let mag = margin + (1.0 - margin) * rng.random::<f64>();
            if rng.random::<f64>() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Solves A x = b by Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        x.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-14, "singular system");
        for row in (col + 1)..n {
            let f = m[row][col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= m[col][col];
        for row in 0..col {
            x[row] -= m[row][col] * x[col];
            m[row][col] = 0.0;
        }
    }
    x
}

/// Closed-form RWR scores via the dense solve of
/// (I - q A_rw) r = (1 - q) e_source.
pub fn rwr_dense_oracle(rw_adj: &CsrMatrix<f64>, source: usize, q: f64) -> Vec<f64> {
    let n = rw_adj.rows();
    let dense = rw_adj.densify();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j { 1.0 } else { 0.0 } - q * dense.at(i, j);
        }
    }
    let mut b = vec![0.0; n];
    b[source] = 1.0 - q;
    dense_solve(&a, &b)
}

/// Random connected-ish undirected graph: a spanning chain plus extra edges.
pub fn random_graph(rng: &mut impl Rng, n: usize, extra_edges: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((i - 1, i));
    }
    for _ in 0..extra_edges {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            edges.push((u.min(v), u.max(v)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Column-stochastic transition matrix of an undirected edge list, with
/// self-loops on isolated nodes (mirrors the bundle operator construction).
pub fn transition_matrix(n: usize, edges: &[(usize, usize)]) -> CsrMatrix<f64> {
    let mut deg = vec![0usize; n];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    let mut trip = Vec::new();
    for (i, &d) in deg.iter().enumerate() {
        if d == 0 {
            trip.push((i, i, 1.0));
        }
    }
    for &(u, v) in edges {
        trip.push((u, v, 1.0 / deg[v] as f64));
        trip.push((v, u, 1.0 / deg[u] as f64));
    }
    CsrMatrix::from_triplets(n, n, trip).unwrap()
}

/// Two-block synthetic classification graph with class-correlated features;
/// deterministic per seed. Masks: `t` train + `v` val per block, rest test.
pub fn synthetic_bundle(n: usize, seed: u64) -> GraphBundle<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let f = 6;
    let mut data = Vec::with_capacity(n * f);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i >= half) as i32;
        labels.push(class);
        for j in 0..f {
            let center = if (j % 2 == 0) == (class == 0) { 1.0 } else { 0.0 };
            data.push(center + 0.4 * (rng.random::<f64>() - 0.5));
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let same = (i < half) == (j < half);
            let p = if same { 5.0 / half as f64 } else { 0.4 / half as f64 };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let feats = Tensor::from_vec(n, f, data).unwrap();
    let bundle = GraphBundle::from_parts(feats, &edges, labels, 2).unwrap();
    let t = (half / 5).max(2).min(half / 2);
    let v = (half - t) / 2;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for base in [0, half] {
        train.extend(base..base + t);
        val.extend(base + t..base + t + v);
        test.extend(base + t + v..base + half);
    }
    bundle.with_masks(&train, &val, &test).unwrap()
}

/// Random orthogonal d x d matrix from Gram-Schmidt on a random Gaussian-ish
/// matrix.
pub fn random_orthogonal(rng: &mut impl Rng, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // a nearly dependent draw is discarded and retried
        if norm < 1e-6 {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
    }
    basis
}

/// Z * Q for a dense rotation matrix Q.
pub fn rotate_rows(z: &Tensor<f64>, q: &[Vec<f64>]) -> Tensor<f64> {
    let d = z.cols();
    let mut out = Vec::with_capacity(z.numel());
    for i in 0..z.rows() {
        let row = z.row(i);
        for col in 0..d {
            out.push((0..d).map(|k| row[k] * q[k][col]).sum());
        }
    }
    Tensor::from_vec(z.rows(), d, out).unwrap()
}
