//! Tape-based reverse-mode automatic differentiation.
//!
//! Every primitive records itself on the tape during the forward pass; one
//! [`Tape::backward`] call replays the records in reverse and accumulates
//! gradients into the leaves that were created with `requires_grad`.
//!
//! Interior gradients live in a scratch buffer local to each backward call,
//! so calling `backward` twice without zeroing doubles the leaf gradients —
//! the usual accumulation contract.

use std::sync::Arc;

use rand::Rng;

use crate::error::{PclError, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use crate::tensor::{Tensor, NORM_FLOOR};

/// Floor applied to every `log` argument; keeps losses finite when a
/// probability saturates.
pub const PROB_FLOOR: f64 = 1e-7;

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

enum Value<S: Scalar> {
    Owned(Tensor<S>),
    /// Constant borrowed from elsewhere (e.g. the feature matrix); shared
    /// leaves never receive gradients.
    Shared(Arc<Tensor<S>>),
}

enum Op<S: Scalar> {
    Leaf,
    Matmul { a: VarId, b: VarId },
    Spmm { s: Arc<CsrMatrix<S>>, d: VarId },
    Add { a: VarId, b: VarId },
    AddRowBias { x: VarId, bias: VarId },
    Relu { x: VarId },
    RowSoftmax { x: VarId },
    Log { x: VarId },
    Sigmoid { x: VarId },
    /// `mask` is empty when the input needs no gradient.
    Dropout { x: VarId, mask: Vec<S> },
    CosineRows { a: VarId, b: VarId },
    GatherRows { x: VarId, idx: Vec<usize> },
    Pick { x: VarId, coords: Vec<(usize, usize)> },
    Affine { x: VarId, mul: S },
    Sum { x: VarId },
    WeightedSum { x: VarId, w: Vec<S> },
}

struct Node<S: Scalar> {
    value: Value<S>,
    op: Op<S>,
    needs_grad: bool,
}

impl<S: Scalar> Node<S> {
    fn tensor(&self) -> &Tensor<S> {
        match &self.value {
            Value::Owned(t) => t,
            Value::Shared(t) => t,
        }
    }
}

#[derive(Default)]
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an owned leaf; it participates in backward iff the tensor was
    /// marked with `requires_grad`.
    pub fn leaf(&mut self, t: Tensor<S>) -> VarId {
        let needs = t.requires_grad();
        self.push_node(Value::Owned(t), Op::Leaf, needs)
    }

    /// Records a constant leaf shared with the caller; never differentiated.
    pub fn shared(&mut self, t: Arc<Tensor<S>>) -> VarId {
        self.push_node(Value::Shared(t), Op::Leaf, false)
    }

    /// Records a 1x1 constant.
    pub fn scalar(&mut self, v: S) -> VarId {
        let t = Tensor::from_vec(1, 1, vec![v]).expect("scalar shape");
        self.leaf(t)
    }

    pub fn value(&self, id: VarId) -> &Tensor<S> {
        self.nodes[id.0].tensor()
    }

    pub fn dims(&self, id: VarId) -> (usize, usize) {
        let t = self.value(id);
        (t.rows(), t.cols())
    }

    /// Scalar payload of a 1x1 tensor.
    pub fn scalar_value(&self, id: VarId) -> S {
        debug_assert_eq!(self.dims(id), (1, 1));
        self.value(id).data()[0]
    }

    /// Gradient of an owned leaf, if populated by a backward pass.
    pub fn grad(&self, id: VarId) -> Option<&[S]> {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t.grad(),
            Value::Shared(_) => None,
        }
    }

    pub fn zero_grad(&mut self, id: VarId) {
        if let Value::Owned(t) = &mut self.nodes[id.0].value {
            t.zero_grad();
        }
    }

    fn needs(&self, id: VarId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn values(&self, id: VarId) -> &[S] {
        self.value(id).data()
    }

    fn push_node(&mut self, value: Value<S>, op: Op<S>, needs_grad: bool) -> VarId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        VarId(self.nodes.len() - 1)
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<S>, op: Op<S>, needs: bool) -> VarId {
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value out of a tape op"
        );
        let t = Tensor::from_vec(rows, cols, data).expect("op output shape");
        self.push_node(Value::Owned(t), op, needs)
    }

    // ── forward ops ─────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if ac != br {
            return Err(PclError::dimension(
                "matmul",
                format!("{ar}x{ac} . {br}x{bc}"),
            ));
        }
        let mut out = vec![S::zero(); ar * bc];
        {
            let av = self.values(a);
            let bv = self.values(b);
            for i in 0..ar {
                let arow = &av[i * ac..(i + 1) * ac];
                let orow = &mut out[i * bc..(i + 1) * bc];
                for (k, &aik) in arow.iter().enumerate() {
                    // skipping zeros keeps sparse feature rows cheap
                    if aik.is_zero() {
                        continue;
                    }
                    let brow = &bv[k * bc..(k + 1) * bc];
                    for j in 0..bc {
                        orow[j] += aik * brow[j];
                    }
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(ar, bc, out, Op::Matmul { a, b }, needs))
    }

    /// Sparse-dense product; the sparse side is constant, so gradients flow
    /// only into `d`.
    pub fn spmm(&mut self, s: Arc<CsrMatrix<S>>, d: VarId) -> Result<VarId> {
        let (dr, dc) = self.dims(d);
        if s.cols() != dr {
            return Err(PclError::dimension(
                "spmm",
                format!("{}x{} . {dr}x{dc}", s.rows(), s.cols()),
            ));
        }
        let mut out = vec![S::zero(); s.rows() * dc];
        {
            let dv = self.values(d);
            for i in 0..s.rows() {
                let (cols, vals) = s.row(i);
                let orow = &mut out[i * dc..(i + 1) * dc];
                for (&j, &v) in cols.iter().zip(vals) {
                    let drow = &dv[j * dc..(j + 1) * dc];
                    for k in 0..dc {
                        orow[k] += v * drow[k];
                    }
                }
            }
        }
        let needs = self.needs(d);
        Ok(self.push(s.rows(), dc, out, Op::Spmm { s, d }, needs))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ar, ac) = self.dims(a);
        if self.dims(b) != (ar, ac) {
            return Err(PclError::dimension("add", "shape mismatch"));
        }
        let out: Vec<S> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(ar, ac, out, Op::Add { a, b }, needs))
    }

    /// Adds a 1xC bias row to every row of `x`.
    pub fn add_row_bias(&mut self, x: VarId, bias: VarId) -> Result<VarId> {
        let (r, c) = self.dims(x);
        if self.dims(bias) != (1, c) {
            return Err(PclError::dimension("add_row_bias", "bias must be 1xC"));
        }
        let mut out = Vec::with_capacity(r * c);
        {
            let xv = self.values(x);
            let bv = self.values(bias);
            for i in 0..r {
                for j in 0..c {
                    out.push(xv[i * c + j] + bv[j]);
                }
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(r, c, out, Op::AddRowBias { x, bias }, needs))
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let (r, c) = self.dims(x);
        let out: Vec<S> = self.values(x).iter().map(|&v| v.max(S::zero())).collect();
        let needs = self.needs(x);
        self.push(r, c, out, Op::Relu { x }, needs)
    }

    pub fn row_softmax(&mut self, x: VarId) -> VarId {
        let (r, c) = self.dims(x);
        let mut out = vec![S::zero(); r * c];
        {
            let xv = self.values(x);
            for i in 0..r {
                let row = &xv[i * c..(i + 1) * c];
                let orow = &mut out[i * c..(i + 1) * c];
                let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
                let mut sum = S::zero();
                for (o, &v) in orow.iter_mut().zip(row) {
                    *o = (v - max).exp();
                    sum += *o;
                }
                for o in orow.iter_mut() {
                    *o /= sum;
                }
            }
        }
        let needs = self.needs(x);
        self.push(r, c, out, Op::RowSoftmax { x }, needs)
    }

    /// Elementwise `ln(max(x, PROB_FLOOR))`; the floor keeps saturated
    /// probabilities finite and zeroes their gradient.
    pub fn log(&mut self, x: VarId) -> VarId {
        let (r, c) = self.dims(x);
        let floor = S::of(PROB_FLOOR);
        let out: Vec<S> = self.values(x).iter().map(|&v| v.max(floor).ln()).collect();
        let needs = self.needs(x);
        self.push(r, c, out, Op::Log { x }, needs)
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        let (r, c) = self.dims(x);
        let one = S::one();
        let out: Vec<S> = self
            .values(x)
            .iter()
            .map(|&v| one / (one + (-v).exp()))
            .collect();
        let needs = self.needs(x);
        self.push(r, c, out, Op::Sigmoid { x }, needs)
    }

    /// Inverted dropout: zeroes entries with probability `rate` and scales
    /// survivors by 1/(1-rate). In eval mode this is the identity (the same
    /// handle is returned and nothing is recorded).
    pub fn dropout<R: Rng>(
        &mut self,
        x: VarId,
        rate: f64,
        train_mode: bool,
        rng: &mut R,
    ) -> Result<VarId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(PclError::parameter(
                "dropout_rate",
                format!("{rate} not in [0,1)"),
            ));
        }
        if !train_mode || rate == 0.0 {
            return Ok(x);
        }
        let (r, c) = self.dims(x);
        let keep_scale = S::of(1.0 / (1.0 - rate));
        let n = r * c;
        let mut out = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        {
            let xv = self.values(x);
            for &v in xv {
                let m = if rng.random::<f64>() < rate {
                    S::zero()
                } else {
                    keep_scale
                };
                mask.push(m);
                out.push(v * m);
            }
        }
        let needs = self.needs(x);
        if !needs {
            mask.clear(); // mask only feeds the backward pass
        }
        Ok(self.push(r, c, out, Op::Dropout { x, mask }, needs))
    }

    /// Row-paired cosine similarity: output is Nx1, row k holding the
    /// cosine of row k of `a` and row k of `b`. Zero-norm rows fall back to
    /// the norm floor.
    pub fn cosine_rows(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if ac != bc || ar != br {
            return Err(PclError::dimension(
                "cosine_rows",
                format!("{ar}x{ac} vs {br}x{bc}"),
            ));
        }
        let mut out = Vec::with_capacity(ar);
        {
            let av = self.values(a);
            let bv = self.values(b);
            for k in 0..ar {
                out.push(crate::tensor::row_cosine(
                    &av[k * ac..(k + 1) * ac],
                    &bv[k * ac..(k + 1) * ac],
                ));
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(ar, 1, out, Op::CosineRows { a, b }, needs))
    }

    /// Copies the listed rows of `x` into a new tensor; backward scatters.
    pub fn gather_rows(&mut self, x: VarId, idx: Vec<usize>) -> Result<VarId> {
        let (r, c) = self.dims(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(PclError::Contract(format!(
                "gather_rows index {bad} out of range for {r} rows"
            )));
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        {
            let xv = self.values(x);
            for &i in &idx {
                out.extend_from_slice(&xv[i * c..(i + 1) * c]);
            }
        }
        let needs = self.needs(x);
        Ok(self.push(idx.len(), c, out, Op::GatherRows { x, idx }, needs))
    }

    /// Extracts the listed (row, col) entries of `x` into an Nx1 tensor.
    pub fn pick(&mut self, x: VarId, coords: Vec<(usize, usize)>) -> Result<VarId> {
        let (r, c) = self.dims(x);
        if coords.iter().any(|&(i, j)| i >= r || j >= c) {
            return Err(PclError::Contract("pick coordinate out of range".into()));
        }
        let out: Vec<S> = {
            let xv = self.values(x);
            coords.iter().map(|&(i, j)| xv[i * c + j]).collect()
        };
        let needs = self.needs(x);
        Ok(self.push(coords.len(), 1, out, Op::Pick { x, coords }, needs))
    }

    /// Elementwise `mul * x + add`.
    pub fn affine(&mut self, x: VarId, mul: S, add: S) -> VarId {
        let (r, c) = self.dims(x);
        let out: Vec<S> = self.values(x).iter().map(|&v| mul * v + add).collect();
        let needs = self.needs(x);
        self.push(r, c, out, Op::Affine { x, mul }, needs)
    }

    pub fn sum(&mut self, x: VarId) -> VarId {
        let total: S = self.values(x).iter().cloned().sum();
        let needs = self.needs(x);
        self.push(1, 1, vec![total], Op::Sum { x }, needs)
    }

    /// Weighted sum with constant coefficients: Σ w_i · x_i as a 1x1 tensor.
    pub fn weighted_sum(&mut self, x: VarId, w: Vec<S>) -> Result<VarId> {
        if w.len() != self.values(x).len() {
            return Err(PclError::dimension("weighted_sum", "weight length"));
        }
        let total: S = self.values(x).iter().zip(&w).map(|(&v, &c)| v * c).sum();
        let needs = self.needs(x);
        Ok(self.push(1, 1, vec![total], Op::WeightedSum { x, w }, needs))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Leaf gradients accumulate across
    /// calls; interior gradients are recomputed fresh each call.
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if self.dims(loss) != (1, 1) {
            return Err(PclError::Contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.dims(loss)
            )));
        }
        let n = self.nodes.len();
        let mut scratch: Vec<Option<Vec<S>>> = vec![None; n];
        scratch[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = scratch[i].take() else {
                continue;
            };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                if let Value::Owned(t) = &mut self.nodes[i].value {
                    if t.requires_grad() {
                        t.accumulate_grad(&g);
                    }
                }
                continue;
            }
            self.backprop_op(i, &g, &mut scratch);
        }
        Ok(())
    }

    fn backprop_op(&self, i: usize, g: &[S], scratch: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => unreachable!("handled by caller"),
            Op::Matmul { a, b } => {
                let (ar, ac) = self.dims(*a);
                let (_, bc) = self.dims(*b);
                if self.needs(*a) {
                    let bv = self.values(*b);
                    let ga = grad_buf(scratch, *a, ar * ac);
                    for i2 in 0..ar {
                        let grow = &g[i2 * bc..(i2 + 1) * bc];
                        let garow = &mut ga[i2 * ac..(i2 + 1) * ac];
                        for k in 0..ac {
                            let brow = &bv[k * bc..(k + 1) * bc];
                            let mut acc = S::zero();
                            for j in 0..bc {
                                acc += grow[j] * brow[j];
                            }
                            garow[k] += acc;
                        }
                    }
                }
                if self.needs(*b) {
                    let av = self.values(*a);
                    let (br, _) = self.dims(*b);
                    let gb = grad_buf(scratch, *b, br * bc);
                    for i2 in 0..ar {
                        let arow = &av[i2 * ac..(i2 + 1) * ac];
                        let grow = &g[i2 * bc..(i2 + 1) * bc];
                        for (k, &aik) in arow.iter().enumerate() {
                            if aik.is_zero() {
                                continue;
                            }
                            let gbrow = &mut gb[k * bc..(k + 1) * bc];
                            for j in 0..bc {
                                gbrow[j] += aik * grow[j];
                            }
                        }
                    }
                }
            }
            Op::Spmm { s, d } => {
                if self.needs(*d) {
                    let (dr, dc) = self.dims(*d);
                    let gd = grad_buf(scratch, *d, dr * dc);
                    for i2 in 0..s.rows() {
                        let (cols, vals) = s.row(i2);
                        let grow = &g[i2 * dc..(i2 + 1) * dc];
                        for (&j, &v) in cols.iter().zip(vals) {
                            let gdrow = &mut gd[j * dc..(j + 1) * dc];
                            for k in 0..dc {
                                gdrow[k] += v * grow[k];
                            }
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for side in [a, b] {
                    if self.needs(*side) {
                        let buf = grad_buf(scratch, *side, g.len());
                        for (o, &gv) in buf.iter_mut().zip(g) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::AddRowBias { x, bias } => {
                let (r, c) = self.dims(*x);
                if self.needs(*x) {
                    let buf = grad_buf(scratch, *x, r * c);
                    for (o, &gv) in buf.iter_mut().zip(g) {
                        *o += gv;
                    }
                }
                if self.needs(*bias) {
                    let buf = grad_buf(scratch, *bias, c);
                    for i2 in 0..r {
                        for j in 0..c {
                            buf[j] += g[i2 * c + j];
                        }
                    }
                }
            }
            Op::Relu { x } => {
                if self.needs(*x) {
                    let xv = self.values(*x);
                    let buf = grad_buf(scratch, *x, xv.len());
                    for ((o, &gv), &v) in buf.iter_mut().zip(g).zip(xv) {
                        if v > S::zero() {
                            *o += gv;
                        }
                    }
                }
            }
            Op::RowSoftmax { x } => {
                if self.needs(*x) {
                    let (r, c) = self.dims(*x);
                    let sv = self.nodes[i].tensor().data();
                    let buf = grad_buf(scratch, *x, r * c);
                    for i2 in 0..r {
                        let srow = &sv[i2 * c..(i2 + 1) * c];
                        let grow = &g[i2 * c..(i2 + 1) * c];
                        let mut dot = S::zero();
                        for j in 0..c {
                            dot += grow[j] * srow[j];
                        }
                        let brow = &mut buf[i2 * c..(i2 + 1) * c];
                        for j in 0..c {
                            brow[j] += srow[j] * (grow[j] - dot);
                        }
                    }
                }
            }
            Op::Log { x } => {
                if self.needs(*x) {
                    let floor = S::of(PROB_FLOOR);
                    let xv = self.values(*x);
                    let buf = grad_buf(scratch, *x, xv.len());
                    for ((o, &gv), &v) in buf.iter_mut().zip(g).zip(xv) {
                        if v >= floor {
                            *o += gv / v;
                        }
                    }
                }
            }
            Op::Sigmoid { x } => {
                if self.needs(*x) {
                    let sv = self.nodes[i].tensor().data();
                    let buf = grad_buf(scratch, *x, sv.len());
                    let one = S::one();
                    for ((o, &gv), &s) in buf.iter_mut().zip(g).zip(sv) {
                        *o += gv * s * (one - s);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if self.needs(*x) {
                    let buf = grad_buf(scratch, *x, mask.len());
                    for ((o, &gv), &m) in buf.iter_mut().zip(g).zip(mask) {
                        *o += gv * m;
                    }
                }
            }
            Op::CosineRows { a, b } => {
                let (r, c) = self.dims(*a);
                let cv = self.nodes[i].tensor().data();
                let floor = S::of(NORM_FLOOR);
                let av = self.values(*a);
                let bv = self.values(*b);
                for (side, other, id) in [(av, bv, *a), (bv, av, *b)] {
                    if !self.needs(id) {
                        continue;
                    }
                    let buf = grad_buf(scratch, id, r * c);
                    for k in 0..r {
                        let s_row = &side[k * c..(k + 1) * c];
                        let o_row = &other[k * c..(k + 1) * c];
                        let ns2: S = s_row.iter().map(|&v| v * v).sum();
                        let no2: S = o_row.iter().map(|&v| v * v).sum();
                        let ns_raw = ns2.sqrt();
                        let ns = ns_raw.max(floor);
                        let no = no2.sqrt().max(floor);
                        let cos = cv[k];
                        let gk = g[k];
                        let inv = S::one() / (ns * no);
                        let self_term = if ns_raw > floor { cos / (ns * ns) } else { S::zero() };
                        let brow = &mut buf[k * c..(k + 1) * c];
                        for j in 0..c {
                            brow[j] += gk * (o_row[j] * inv - self_term * s_row[j]);
                        }
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                if self.needs(*x) {
                    let (r, c) = self.dims(*x);
                    let buf = grad_buf(scratch, *x, r * c);
                    for (k, &i2) in idx.iter().enumerate() {
                        let grow = &g[k * c..(k + 1) * c];
                        let brow = &mut buf[i2 * c..(i2 + 1) * c];
                        for j in 0..c {
                            brow[j] += grow[j];
                        }
                    }
                }
            }
            Op::Pick { x, coords } => {
                if self.needs(*x) {
                    let (r, c) = self.dims(*x);
                    let buf = grad_buf(scratch, *x, r * c);
                    for (k, &(i2, j)) in coords.iter().enumerate() {
                        buf[i2 * c + j] += g[k];
                    }
                }
            }
            Op::Affine { x, mul } => {
                if self.needs(*x) {
                    let buf = grad_buf(scratch, *x, g.len());
                    for (o, &gv) in buf.iter_mut().zip(g) {
                        *o += *mul * gv;
                    }
                }
            }
            Op::Sum { x } => {
                if self.needs(*x) {
                    let n = self.values(*x).len();
                    let buf = grad_buf(scratch, *x, n);
                    let g0 = g[0];
                    for o in buf.iter_mut() {
                        *o += g0;
                    }
                }
            }
            Op::WeightedSum { x, w } => {
                if self.needs(*x) {
                    let buf = grad_buf(scratch, *x, w.len());
                    let g0 = g[0];
                    for (o, &wv) in buf.iter_mut().zip(w) {
                        *o += g0 * wv;
                    }
                }
            }
        }
    }
}

fn grad_buf<S: Scalar>(scratch: &mut [Option<Vec<S>>], id: VarId, len: usize) -> &mut Vec<S> {
    scratch[id.0].get_or_insert_with(|| vec![S::zero(); len])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf(tape: &mut Tape<f64>, rows: &[Vec<f64>], grad: bool) -> VarId {
        let t = Tensor::from_rows(rows);
        tape.leaf(if grad { t.with_grad() } else { t })
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[vec![1.0, 2.0], vec![3.0, 4.0]], false);
        let i = leaf(&mut tape, &[vec![1.0, 0.0], vec![0.0, 1.0]], false);
        let out = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_inner_product() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[vec![1.0, 2.0]], false);
        let b = leaf(&mut tape, &[vec![3.0], vec![4.0]], false);
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let mut tape = Tape::<f64>::new();
        let a = leaf(&mut tape, &[vec![1.0, 2.0]], false);
        let b = leaf(&mut tape, &[vec![1.0, 2.0]], false);
        assert!(matches!(
            tape.matmul(a, b),
            Err(PclError::Dimension { .. })
        ));
    }

    #[test]
    fn matmul_grad_of_sum_is_ones_times_b_transpose() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[vec![0.5, -1.0], vec![2.0, 0.25]], true);
        let b = leaf(&mut tape, &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]], false);
        let prod = tape.matmul(a, b).unwrap();
        let loss = tape.sum(prod);
        tape.backward(loss).unwrap();
        // d sum(a.b)/da = ones . b^T; row sums of b
        let expect = [6.0, 15.0, 6.0, 15.0];
        for (g, e) in tape.grad(a).unwrap().iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn spmm_identity_and_swap() {
        let mut tape = Tape::new();
        let d = leaf(&mut tape, &[vec![1.0], vec![2.0]], false);
        let eye = Arc::new(CsrMatrix::<f64>::identity(2));
        let out = tape.spmm(eye, d).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0]);

        let path = Arc::new(
            CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap(),
        );
        let out = tape.spmm(path, d).unwrap();
        assert_eq!(tape.value(out).data(), &[2.0, 1.0]);
    }

    #[test]
    fn row_softmax_symmetry() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[vec![0.0, 0.0]], false);
        let s = tape.row_softmax(x);
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[vec![0.0]], false);
        let s = tape.sigmoid(x);
        assert_eq!(tape.value(s).data(), &[0.5]);
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[vec![1.0, -2.0, 3.5]], false);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = tape.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut tape = Tape::<f64>::new();
        let x = leaf(&mut tape, &[vec![1.0]], false);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[vec![1.0; 1000]], false);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = tape.dropout(x, 0.5, true, &mut rng).unwrap();
        let vals = tape.value(y).data();
        assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = vals.iter().filter(|&&v| v != 0.0).count();
        assert!(kept > 400 && kept < 600, "kept {kept} of 1000 at rate 0.5");
    }

    #[test]
    fn backward_of_sum_gives_ones() {
        let mut tape = Tape::new();
        let w = leaf(&mut tape, &[vec![1.0, 2.0], vec![3.0, 4.0]], true);
        let loss = tape.sum(w);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let w = leaf(&mut tape, &[vec![1.0, 2.0]], true);
        assert!(matches!(tape.backward(w), Err(PclError::Contract(_))));
    }

    #[test]
    fn backward_twice_doubles_leaf_grads() {
        let mut tape = Tape::new();
        let w = leaf(&mut tape, &[vec![1.0, 2.0]], true);
        let wsq = tape.weighted_sum(w, vec![3.0, 5.0]).unwrap();
        tape.backward(wsq).unwrap();
        let first: Vec<f64> = tape.grad(w).unwrap().to_vec();
        tape.backward(wsq).unwrap();
        let second: Vec<f64> = tape.grad(w).unwrap().to_vec();
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(2.0 * a, *b);
        }
        tape.zero_grad(w);
        tape.backward(wsq).unwrap();
        assert_eq!(tape.grad(w).unwrap(), first.as_slice());
    }

    #[test]
    fn log_floors_small_arguments() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[vec![0.0, 1.0]], true);
        let y = tape.log(x);
        let exp_floor = PROB_FLOOR.ln();
        assert_eq!(tape.value(y).data(), &[exp_floor, 0.0]);
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        // floored entry has zero gradient
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn gather_and_pick_roundtrip() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[vec![1.0, 2.0], vec![3.0, 4.0]], true);
        let g = tape.gather_rows(x, vec![1, 0, 1]).unwrap();
        assert_eq!(tape.value(g).data(), &[3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        let p = tape.pick(x, vec![(0, 1), (1, 0)]).unwrap();
        assert_eq!(tape.value(p).data(), &[2.0, 3.0]);
        let loss = tape.sum(p);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn cosine_rows_values() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[vec![1.0, 1.0], vec![1.0, 0.0]], false);
        let b = leaf(&mut tape, &[vec![1.0, 1.0], vec![0.0, 1.0]], false);
        let c = tape.cosine_rows(a, b).unwrap();
        let v = tape.value(c).data();
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!(v[1].abs() < 1e-12);
    }
}
