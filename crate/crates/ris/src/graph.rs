//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! The graph is define-by-run: builder methods execute eagerly, recording one
//! node per op into a tape backed by a flat value arena. `backward` replays
//! the tape in reverse, accumulating adjoints in a parallel gradient arena.
//! Nodes track whether any differentiable leaf can be reached from them, so
//! the reverse sweep never descends into constant subgraphs (target networks,
//! EMA copies, batch data).
//!
//! Kernels work on split slices of the arenas: a node's inputs always sit at
//! lower offsets than its output, so one `split_at_mut` at the output offset
//! yields disjoint views without bounds checks in the inner loops.
//!
//! Shapes are `[rows, cols]`; scalars are `[1, 1]`. Shape violations in the
//! builder methods are programmer errors and panic via `assert!`.

use crate::error::{Result, RisError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

// Variants carry their full op signature even where backward does not read
// every field (AddScalar's constant, Detach's source).
#[allow(dead_code)]
#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    /// out[B,O] = a[B,I] * b[I,O]
    Matmul(NodeId, NodeId),
    /// out[B,O] = x[B,O] + bias[1,O] broadcast over rows
    AddRowBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Elementwise minimum; gradient follows the smaller input (ties: first).
    Min(NodeId, NodeId),
    /// Elementwise maximum; gradient follows the larger input (ties: first).
    Max(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Atanh(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Abs(NodeId),
    Neg(NodeId),
    Square(NodeId),
    /// Clamp to [lo, hi]; gradient is 1 strictly inside, 0 at/outside bounds.
    Clamp(NodeId, f64, f64),
    MulScalar(NodeId, f64),
    AddScalar(NodeId, f64),
    /// [B,D] -> [B,1]
    SumRows(NodeId),
    /// [R,C] -> [1,1]
    SumAll(NodeId),
    /// Column-wise concatenation of two [B,*] inputs.
    Concat(NodeId, NodeId),
    /// Value copy that stops gradient flow.
    Detach(NodeId),
}

#[derive(Debug, Clone, Copy)]
struct Node {
    rows: usize,
    cols: usize,
    off: usize,
    op: Op,
    /// True when a tracked leaf is reachable; backward skips untracked nodes.
    tracked: bool,
}

/// Reverse-mode tape. Reuse one instance across steps: `clear` keeps the
/// arena capacity so steady-state training does not allocate.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    data: Vec<f64>,
    grad: Vec<f64>,
    has_grad: Vec<bool>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.data.clear();
        self.has_grad.clear();
    }

    pub fn rows(&self, id: NodeId) -> usize {
        self.nodes[id.0].rows
    }

    pub fn cols(&self, id: NodeId) -> usize {
        self.nodes[id.0].cols
    }

    fn len(&self, id: NodeId) -> usize {
        let n = &self.nodes[id.0];
        n.rows * n.cols
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let n = &self.nodes[id.0];
        &self.data[n.off..n.off + n.rows * n.cols]
    }

    /// Value of a `[1,1]` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.len(id), 1);
        self.data[self.nodes[id.0].off]
    }

    /// Gradient of `id` from the most recent `backward`, if it was reached.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        if !self.has_grad.get(id.0).copied().unwrap_or(false) {
            return None;
        }
        let n = &self.nodes[id.0];
        Some(&self.grad[n.off..n.off + n.rows * n.cols])
    }

    /// Whether gradients can flow into this node.
    pub fn is_tracked(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    fn push(&mut self, rows: usize, cols: usize, op: Op, tracked: bool) -> NodeId {
        let off = self.data.len();
        self.data.resize(off + rows * cols, 0.0);
        self.nodes.push(Node {
            rows,
            cols,
            off,
            op,
            tracked,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Disjoint (inputs-and-below, output) views of the value arena for the
    /// freshly pushed node `id`.
    fn split_out(&mut self, id: NodeId) -> (&[f64], &mut [f64]) {
        let n = self.nodes[id.0];
        let (lo, hi) = self.data.split_at_mut(n.off);
        (lo, &mut hi[..n.rows * n.cols])
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, data: &[f64], tracked: bool) -> NodeId {
        assert_eq!(data.len(), rows * cols, "leaf data length mismatch");
        let id = self.push(rows, cols, Op::Leaf, tracked);
        let (_, out) = self.split_out(id);
        out.copy_from_slice(data);
        id
    }

    pub fn scalar_leaf(&mut self, value: f64) -> NodeId {
        self.leaf(1, 1, &[value], false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ba, ia) = (self.rows(a), self.cols(a));
        let (ib, ob) = (self.rows(b), self.cols(b));
        assert_eq!(ia, ib, "matmul inner dims {ia} vs {ib}");
        let tracked = self.nodes[a.0].tracked || self.nodes[b.0].tracked;
        let id = self.push(ba, ob, Op::Matmul(a, b), tracked);
        let (a_off, b_off) = (self.nodes[a.0].off, self.nodes[b.0].off);
        let (lo, out) = self.split_out(id);
        let x = &lo[a_off..a_off + ba * ia];
        let w = &lo[b_off..b_off + ia * ob];
        // out[bi,:] += x * w[ii,:]; the inner loop runs contiguous over cols.
        for bi in 0..ba {
            let xr = &x[bi * ia..(bi + 1) * ia];
            let or = &mut out[bi * ob..(bi + 1) * ob];
            for (ii, &xv) in xr.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let wr = &w[ii * ob..(ii + 1) * ob];
                for (o, &wv) in or.iter_mut().zip(wr) {
                    *o += xv * wv;
                }
            }
        }
        id
    }

    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (b, o) = (self.rows(x), self.cols(x));
        assert_eq!(self.rows(bias), 1, "bias must be a row vector");
        assert_eq!(self.cols(bias), o, "bias width mismatch");
        let tracked = self.nodes[x.0].tracked || self.nodes[bias.0].tracked;
        let id = self.push(b, o, Op::AddRowBias(x, bias), tracked);
        let (x_off, bias_off) = (self.nodes[x.0].off, self.nodes[bias.0].off);
        let (lo, out) = self.split_out(id);
        let xs = &lo[x_off..x_off + b * o];
        let bs = &lo[bias_off..bias_off + o];
        for bi in 0..b {
            let xr = &xs[bi * o..(bi + 1) * o];
            let or = &mut out[bi * o..(bi + 1) * o];
            for ((ov, &xv), &bv) in or.iter_mut().zip(xr).zip(bs) {
                *ov = xv + bv;
            }
        }
        id
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        assert_eq!(self.rows(a), self.rows(b), "binary op row mismatch");
        assert_eq!(self.cols(a), self.cols(b), "binary op col mismatch");
        let tracked = self.nodes[a.0].tracked || self.nodes[b.0].tracked;
        let id = self.push(self.rows(a), self.cols(a), op, tracked);
        let (a_off, b_off) = (self.nodes[a.0].off, self.nodes[b.0].off);
        let (lo, out) = self.split_out(id);
        let len = out.len();
        let av = &lo[a_off..a_off + len];
        let bv = &lo[b_off..b_off + len];
        for ((o, &x), &y) in out.iter_mut().zip(av).zip(bv) {
            *o = f(x, y);
        }
        id
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Min(a, b), |x, y| if y < x { y } else { x })
    }

    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Max(a, b), |x, y| if y > x { y } else { x })
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let tracked = self.nodes[a.0].tracked;
        let id = self.push(self.rows(a), self.cols(a), op, tracked);
        let a_off = self.nodes[a.0].off;
        let (lo, out) = self.split_out(id);
        let av = &lo[a_off..a_off + out.len()];
        for (o, &x) in out.iter_mut().zip(av) {
            *o = f(x);
        }
        id
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn atanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Atanh(a), f64::atanh)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Ln(a), f64::ln)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        assert!(lo <= hi, "clamp bounds inverted");
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn mul_scalar(&mut self, a: NodeId, k: f64) -> NodeId {
        self.unary(a, Op::MulScalar(a, k), |x| x * k)
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> NodeId {
        self.unary(a, Op::AddScalar(a, k), |x| x + k)
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let (b, d) = (self.rows(a), self.cols(a));
        let tracked = self.nodes[a.0].tracked;
        let id = self.push(b, 1, Op::SumRows(a), tracked);
        let a_off = self.nodes[a.0].off;
        let (lo, out) = self.split_out(id);
        let av = &lo[a_off..a_off + b * d];
        for bi in 0..b {
            out[bi] = av[bi * d..(bi + 1) * d].iter().sum();
        }
        id
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let tracked = self.nodes[a.0].tracked;
        let len = self.len(a);
        let id = self.push(1, 1, Op::SumAll(a), tracked);
        let a_off = self.nodes[a.0].off;
        let (lo, out) = self.split_out(id);
        out[0] = lo[a_off..a_off + len].iter().sum();
        id
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.len(a) as f64;
        let s = self.sum_all(a);
        self.mul_scalar(s, 1.0 / n)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ra, ca) = (self.rows(a), self.cols(a));
        let (rb, cb) = (self.rows(b), self.cols(b));
        assert_eq!(ra, rb, "concat row mismatch");
        let tracked = self.nodes[a.0].tracked || self.nodes[b.0].tracked;
        let id = self.push(ra, ca + cb, Op::Concat(a, b), tracked);
        let (a_off, b_off) = (self.nodes[a.0].off, self.nodes[b.0].off);
        let (lo, out) = self.split_out(id);
        let av = &lo[a_off..a_off + ra * ca];
        let bv = &lo[b_off..b_off + ra * cb];
        for r in 0..ra {
            let dst = &mut out[r * (ca + cb)..(r + 1) * (ca + cb)];
            dst[..ca].copy_from_slice(&av[r * ca..(r + 1) * ca]);
            dst[ca..].copy_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        id
    }

    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let id = self.push(self.rows(a), self.cols(a), Op::Detach(a), false);
        let a_off = self.nodes[a.0].off;
        let (lo, out) = self.split_out(id);
        out.copy_from_slice(&lo[a_off..a_off + out.len()]);
        id
    }

    /// Reverse sweep from a scalar loss node. Node gradients from any prior
    /// sweep on this graph are discarded.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.len(loss) != 1 {
            return Err(RisError::Usage(format!(
                "backward requires a scalar loss, got shape [{}, {}]",
                self.rows(loss),
                self.cols(loss)
            )));
        }
        self.grad.resize(self.data.len(), 0.0);
        self.has_grad.clear();
        self.has_grad.resize(self.nodes.len(), false);
        self.grad[self.nodes[loss.0].off] = 1.0;
        self.has_grad[loss.0] = true;

        for i in (0..=loss.0).rev() {
            if !self.has_grad[i] || !self.nodes[i].tracked {
                continue;
            }
            propagate(&self.nodes, &self.data, &mut self.grad, &mut self.has_grad, i);
        }
        Ok(())
    }
}

/// Adds `f(j, upstream[j])` into the gradient region of `dst`, which sits
/// strictly below `src_off` in the arena.
fn accumulate_into(
    grad: &mut [f64],
    has_grad: &mut [bool],
    dst: NodeId,
    dst_off: usize,
    src_off: usize,
    len: usize,
    f: impl Fn(usize, f64) -> f64,
) {
    debug_assert!(dst_off + len <= src_off);
    let first = !has_grad[dst.0];
    has_grad[dst.0] = true;
    let (lo, hi) = grad.split_at_mut(src_off);
    let src = &hi[..len];
    let out = &mut lo[dst_off..dst_off + len];
    if first {
        for (j, (o, &d)) in out.iter_mut().zip(src).enumerate() {
            *o = f(j, d);
        }
    } else {
        for (j, (o, &d)) in out.iter_mut().zip(src).enumerate() {
            *o += f(j, d);
        }
    }
}

fn propagate(nodes: &[Node], data: &[f64], grad: &mut [f64], has_grad: &mut [bool], i: usize) {
    let node = nodes[i];
    let o_off = node.off;
    let o_len = node.rows * node.cols;
    let tracked = |id: NodeId| nodes[id.0].tracked;
    let off = |id: NodeId| nodes[id.0].off;
    match node.op {
        Op::Leaf | Op::Detach(_) => {}
        Op::Matmul(a, b) => {
            let (ba, ia) = (nodes[a.0].rows, nodes[a.0].cols);
            let ob = nodes[b.0].cols;
            let (a_off, b_off) = (off(a), off(b));
            if tracked(a) {
                let first = !has_grad[a.0];
                has_grad[a.0] = true;
                let w = &data[b_off..b_off + ia * ob];
                let (lo, hi) = grad.split_at_mut(o_off);
                let dy = &hi[..ba * ob];
                let da = &mut lo[a_off..a_off + ba * ia];
                // dA[bi,ii] = dot(dY[bi,:], W[ii,:]) -- both rows contiguous.
                for bi in 0..ba {
                    let dyr = &dy[bi * ob..(bi + 1) * ob];
                    let dar = &mut da[bi * ia..(bi + 1) * ia];
                    for (ii, dv) in dar.iter_mut().enumerate() {
                        let wr = &w[ii * ob..(ii + 1) * ob];
                        let acc: f64 = dyr.iter().zip(wr).map(|(&x, &y)| x * y).sum();
                        if first {
                            *dv = acc;
                        } else {
                            *dv += acc;
                        }
                    }
                }
            }
            if tracked(b) {
                let first = !has_grad[b.0];
                has_grad[b.0] = true;
                let x = &data[a_off..a_off + ba * ia];
                let (lo, hi) = grad.split_at_mut(o_off);
                let dy = &hi[..ba * ob];
                let dw = &mut lo[b_off..b_off + ia * ob];
                if first {
                    dw.fill(0.0);
                }
                // dW[ii,:] += X[bi,ii] * dY[bi,:] -- contiguous axpy.
                for bi in 0..ba {
                    let xr = &x[bi * ia..(bi + 1) * ia];
                    let dyr = &dy[bi * ob..(bi + 1) * ob];
                    for (ii, &xv) in xr.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let dwr = &mut dw[ii * ob..(ii + 1) * ob];
                        for (w, &d) in dwr.iter_mut().zip(dyr) {
                            *w += xv * d;
                        }
                    }
                }
            }
        }
        Op::AddRowBias(x, bias) => {
            let (b, o) = (nodes[x.0].rows, nodes[x.0].cols);
            if tracked(x) {
                accumulate_into(grad, has_grad, x, off(x), o_off, b * o, |_, d| d);
            }
            if tracked(bias) {
                let first = !has_grad[bias.0];
                has_grad[bias.0] = true;
                let bias_off = off(bias);
                let (lo, hi) = grad.split_at_mut(o_off);
                let dy = &hi[..b * o];
                let db = &mut lo[bias_off..bias_off + o];
                if first {
                    db.fill(0.0);
                }
                for bi in 0..b {
                    for (dbv, &d) in db.iter_mut().zip(&dy[bi * o..(bi + 1) * o]) {
                        *dbv += d;
                    }
                }
            }
        }
        Op::Add(a, b) => {
            if tracked(a) {
                accumulate_into(grad, has_grad, a, off(a), o_off, o_len, |_, d| d);
            }
            if tracked(b) {
                accumulate_into(grad, has_grad, b, off(b), o_off, o_len, |_, d| d);
            }
        }
        Op::Sub(a, b) => {
            if tracked(a) {
                accumulate_into(grad, has_grad, a, off(a), o_off, o_len, |_, d| d);
            }
            if tracked(b) {
                accumulate_into(grad, has_grad, b, off(b), o_off, o_len, |_, d| -d);
            }
        }
        Op::Mul(a, b) => {
            let (a_off, b_off) = (off(a), off(b));
            if tracked(a) {
                let bv = &data[b_off..b_off + o_len];
                accumulate_into(grad, has_grad, a, a_off, o_off, o_len, |j, d| d * bv[j]);
            }
            if tracked(b) {
                let av = &data[a_off..a_off + o_len];
                accumulate_into(grad, has_grad, b, b_off, o_off, o_len, |j, d| d * av[j]);
            }
        }
        Op::Min(a, b) => {
            let (a_off, b_off) = (off(a), off(b));
            let av = &data[a_off..a_off + o_len];
            let bv = &data[b_off..b_off + o_len];
            if tracked(a) {
                accumulate_into(grad, has_grad, a, a_off, o_off, o_len, |j, d| {
                    if av[j] <= bv[j] {
                        d
                    } else {
                        0.0
                    }
                });
            }
            if tracked(b) {
                accumulate_into(grad, has_grad, b, b_off, o_off, o_len, |j, d| {
                    if av[j] <= bv[j] {
                        0.0
                    } else {
                        d
                    }
                });
            }
        }
        Op::Max(a, b) => {
            let (a_off, b_off) = (off(a), off(b));
            let av = &data[a_off..a_off + o_len];
            let bv = &data[b_off..b_off + o_len];
            if tracked(a) {
                accumulate_into(grad, has_grad, a, a_off, o_off, o_len, |j, d| {
                    if av[j] >= bv[j] {
                        d
                    } else {
                        0.0
                    }
                });
            }
            if tracked(b) {
                accumulate_into(grad, has_grad, b, b_off, o_off, o_len, |j, d| {
                    if av[j] >= bv[j] {
                        0.0
                    } else {
                        d
                    }
                });
            }
        }
        Op::Relu(a) => {
            let a_off = off(a);
            let av = &data[a_off..a_off + o_len];
            accumulate_into(grad, has_grad, a, a_off, o_off, o_len, |j, d| {
                if av[j] > 0.0 {
                    d
                } else {
                    0.0
                }
            });
        }
        Op::Tanh(a) => {
            let yv = &data[o_off..o_off + o_len];
            accumulate_into(grad, has_grad, a, off(a), o_off, o_len, |j, d| {
                d * (1.0 - yv[j] * yv[j])
            });
        }
        Op::Atanh(a) => {
            let a_off = off(a);
            let av = &data[a_off..a_off + o_len];
            accumulate_into(grad, has_grad, a, a_off, o_off, o_len, |j, d| {
                d / (1.0 - av[j] * av[j])
            });
        }
        Op::Exp(a) => {
            let yv = &data[o_off..o_off + o_len];
            accumulate_into(grad, has_grad, a, off(a), o_off, o_len, |j, d| d * yv[j]);
        }
        Op::Ln(a) => {
            let a_off = off(a);
            let av = &data[a_off..a_off + o_len];
            accumulate_into(grad, has_grad, a, a_off, o_off, o_len, |j, d| d / av[j]);
        }
        Op::Abs(a) => {
            let a_off = off(a);
            let av = &data[a_off..a_off + o_len];
            accumulate_into(grad, has_grad, a, a_off, o_off, o_len, |j, d| {
                if av[j] > 0.0 {
                    d
                } else if av[j] < 0.0 {
                    -d
                } else {
                    0.0
                }
            });
        }
        Op::Neg(a) => {
            accumulate_into(grad, has_grad, a, off(a), o_off, o_len, |_, d| -d);
        }
        Op::Square(a) => {
            let a_off = off(a);
            let av = &data[a_off..a_off + o_len];
            accumulate_into(grad, has_grad, a, a_off, o_off, o_len, |j, d| {
                2.0 * av[j] * d
            });
        }
        Op::Clamp(a, lo_b, hi_b) => {
            let a_off = off(a);
            let av = &data[a_off..a_off + o_len];
            accumulate_into(grad, has_grad, a, a_off, o_off, o_len, |j, d| {
                if av[j] > lo_b && av[j] < hi_b {
                    d
                } else {
                    0.0
                }
            });
        }
        Op::MulScalar(a, k) => {
            accumulate_into(grad, has_grad, a, off(a), o_off, o_len, |_, d| d * k);
        }
        Op::AddScalar(a, _) => {
            accumulate_into(grad, has_grad, a, off(a), o_off, o_len, |_, d| d);
        }
        Op::SumRows(a) => {
            if !tracked(a) {
                return;
            }
            let (b, dcols) = (nodes[a.0].rows, nodes[a.0].cols);
            let a_off = off(a);
            let first = !has_grad[a.0];
            has_grad[a.0] = true;
            let (lo, hi) = grad.split_at_mut(o_off);
            let dy = &hi[..b];
            let da = &mut lo[a_off..a_off + b * dcols];
            for bi in 0..b {
                let d = dy[bi];
                let dar = &mut da[bi * dcols..(bi + 1) * dcols];
                if first {
                    dar.fill(d);
                } else {
                    for v in dar.iter_mut() {
                        *v += d;
                    }
                }
            }
        }
        Op::SumAll(a) => {
            if !tracked(a) {
                return;
            }
            let len = nodes[a.0].rows * nodes[a.0].cols;
            let a_off = off(a);
            let first = !has_grad[a.0];
            has_grad[a.0] = true;
            let (lo, hi) = grad.split_at_mut(o_off);
            let d = hi[0];
            let da = &mut lo[a_off..a_off + len];
            if first {
                da.fill(d);
            } else {
                for v in da.iter_mut() {
                    *v += d;
                }
            }
        }
        Op::Concat(a, b) => {
            let (ra, ca) = (nodes[a.0].rows, nodes[a.0].cols);
            let cb = nodes[b.0].cols;
            let (a_off, b_off) = (off(a), off(b));
            if tracked(a) {
                let first = !has_grad[a.0];
                has_grad[a.0] = true;
                let (lo, hi) = grad.split_at_mut(o_off);
                let dy = &hi[..ra * (ca + cb)];
                let da = &mut lo[a_off..a_off + ra * ca];
                for r in 0..ra {
                    let src = &dy[r * (ca + cb)..r * (ca + cb) + ca];
                    let dst = &mut da[r * ca..(r + 1) * ca];
                    if first {
                        dst.copy_from_slice(src);
                    } else {
                        for (o, &d) in dst.iter_mut().zip(src) {
                            *o += d;
                        }
                    }
                }
            }
            if tracked(b) {
                let first = !has_grad[b.0];
                has_grad[b.0] = true;
                let (lo, hi) = grad.split_at_mut(o_off);
                let dy = &hi[..ra * (ca + cb)];
                let db = &mut lo[b_off..b_off + ra * cb];
                for r in 0..ra {
                    let src = &dy[r * (ca + cb) + ca..(r + 1) * (ca + cb)];
                    let dst = &mut db[r * cb..(r + 1) * cb];
                    if first {
                        dst.copy_from_slice(src);
                    } else {
                        for (o, &d) in dst.iter_mut().zip(src) {
                            *o += d;
                        }
                    }
                }
            }
        }
    }
}
