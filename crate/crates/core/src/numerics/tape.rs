//! Minimal reverse-mode automatic differentiation on vector-valued nodes.
//!
//! Every node holds a `Vec<f64>`; scalars are length-1 vectors. A tape is
//! built per batch: register parameter and input leaves, compose operations,
//! then call [`Tape::backward`] from a scalar loss node and read adjoints of
//! the parameter leaves. The op set is exactly what the model and losses
//! need — dense layers, tanh, the scaled-dot attention path, clamped
//! sigmoid probabilities, binary cross-entropy, Euclidean distances, and
//! the hinge.

use super::matrix::dot;
use super::softmax_unchecked;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `y = W x`; `w` is a leaf holding a `rows x cols` row-major matrix.
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    /// Elementwise clamp; gradient is zero where the input saturates.
    Clamp { x: NodeId, lo: f64, hi: f64 },
    /// Elementwise `y = mul * x + add`; backward only needs `mul`.
    Affine { x: NodeId, mul: f64 },
    /// Scalar dot product of two equal-length vectors.
    Dot { a: NodeId, b: NodeId },
    /// `y_i = s + v_i` with `s` scalar.
    BroadcastAdd { s: NodeId, v: NodeId },
    Softmax { x: NodeId },
    /// Concatenate scalar nodes into one vector.
    Stack { items: Vec<NodeId> },
    /// `y = sum_j weights[j] * items[j]` over equal-length vectors.
    WeightedSum { weights: NodeId, items: Vec<NodeId> },
    /// Euclidean norm (scalar).
    Norm { x: NodeId },
    Relu { x: NodeId },
    /// `y = scale * sum_k -[t_k ln p_k + (1-t_k) ln(1-p_k)]`; `p` must
    /// already be clamped away from 0 and 1.
    BceFromProbs { p: NodeId, targets: Vec<f64>, scale: f64 },
    /// Scalar linear combination `y = bias + sum_i coeff_i * item_i`.
    LinComb { terms: Vec<(NodeId, f64)> },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Gradients of the backward root with respect to every node.
pub struct Adjoints {
    grads: Vec<Vec<f64>>,
}

impl Adjoints {
    pub fn get(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.grads[id.0].len(), 1);
        self.grads[id.0][0]
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Scalar value of a length-1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "scalar() on a node of length {}", v.len());
        v[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Parameter, input, or constant leaf.
    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, value: f64) -> NodeId {
        self.leaf(vec![value])
    }

    pub fn matvec(&mut self, w: NodeId, rows: usize, cols: usize, x: NodeId) -> NodeId {
        assert_eq!(self.value(w).len(), rows * cols, "matvec: bad matrix leaf");
        assert_eq!(self.value(x).len(), cols, "matvec: bad input length");
        let mut out = vec![0.0; rows];
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(&wv[r * cols..(r + 1) * cols], xv);
        }
        self.push(out, Op::MatVec { w, x, rows, cols })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).len(), self.value(b).len(), "add: length mismatch");
        let v = self
            .value(a)
            .iter()
            .zip(self.value(b).iter())
            .map(|(x, y)| x + y)
            .collect();
        self.push(v, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).len(), self.value(b).len(), "sub: length mismatch");
        let v = self
            .value(a)
            .iter()
            .zip(self.value(b).iter())
            .map(|(x, y)| x - y)
            .collect();
        self.push(v, Op::Sub { a, b })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).iter().map(|t| t.tanh()).collect();
        self.push(v, Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).iter().map(|t| stable_sigmoid(*t)).collect();
        self.push(v, Op::Sigmoid { x })
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(x).iter().map(|t| t.clamp(lo, hi)).collect();
        self.push(v, Op::Clamp { x, lo, hi })
    }

    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> NodeId {
        let v = self.value(x).iter().map(|t| mul * t + add).collect();
        self.push(v, Op::Affine { x, mul })
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).len(), self.value(b).len(), "dot: length mismatch");
        let v = vec![dot(self.value(a), self.value(b))];
        self.push(v, Op::Dot { a, b })
    }

    pub fn broadcast_add(&mut self, s: NodeId, v: NodeId) -> NodeId {
        assert_eq!(self.value(s).len(), 1, "broadcast_add: s must be scalar");
        let sv = self.scalar(s);
        let out = self.value(v).iter().map(|t| t + sv).collect();
        self.push(out, Op::BroadcastAdd { s, v })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        assert!(!self.value(x).is_empty(), "softmax: empty input");
        let v = softmax_unchecked(self.value(x));
        self.push(v, Op::Softmax { x })
    }

    pub fn stack(&mut self, items: &[NodeId]) -> NodeId {
        assert!(!items.is_empty(), "stack: no items");
        let mut v = Vec::with_capacity(items.len());
        for id in items {
            assert_eq!(self.value(*id).len(), 1, "stack: items must be scalar");
            v.push(self.scalar(*id));
        }
        self.push(v, Op::Stack { items: items.to_vec() })
    }

    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> NodeId {
        assert_eq!(self.value(weights).len(), items.len(), "weighted_sum: arity");
        assert!(!items.is_empty(), "weighted_sum: no items");
        let dim = self.value(items[0]).len();
        let mut out = vec![0.0; dim];
        for (j, id) in items.iter().enumerate() {
            let wj = self.value(weights)[j];
            let item = self.value(*id);
            assert_eq!(item.len(), dim, "weighted_sum: item length mismatch");
            for (o, e) in out.iter_mut().zip(item.iter()) {
                *o += wj * e;
            }
        }
        self.push(out, Op::WeightedSum { weights, items: items.to_vec() })
    }

    pub fn norm(&mut self, x: NodeId) -> NodeId {
        let v = vec![dot(self.value(x), self.value(x)).sqrt()];
        self.push(v, Op::Norm { x })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).iter().map(|t| t.max(0.0)).collect();
        self.push(v, Op::Relu { x })
    }

    pub fn bce_from_probs(&mut self, p: NodeId, targets: Vec<f64>, scale: f64) -> NodeId {
        assert_eq!(self.value(p).len(), targets.len(), "bce: target length mismatch");
        let mut s = 0.0;
        for (pk, tk) in self.value(p).iter().zip(targets.iter()) {
            s -= tk * pk.ln() + (1.0 - tk) * (1.0 - pk).ln();
        }
        self.push(vec![scale * s], Op::BceFromProbs { p, targets, scale })
    }

    pub fn lin_comb(&mut self, terms: &[(NodeId, f64)], bias: f64) -> NodeId {
        let mut s = bias;
        for (id, c) in terms {
            s += c * self.scalar(*id);
        }
        self.push(vec![s], Op::LinComb { terms: terms.to_vec() })
    }

    /// Reverse pass from a scalar node; returns adjoints for every node.
    pub fn backward(&self, root: NodeId) -> Adjoints {
        assert_eq!(self.value(root).len(), 1, "backward: root must be scalar");
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[root.0][0] = 1.0;

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            // Leaf adjoints stay readable after the sweep; interior
            // adjoints are consumed as they are propagated.
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            if grads[idx].iter().all(|g| *g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut grads[idx]);
            match &node.op {
                Op::Leaf => {}
                Op::MatVec { w, x, rows, cols } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    for r in 0..*rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        for c in 0..*cols {
                            grads[w.0][r * cols + c] += gr * xv[c];
                            grads[x.0][c] += gr * wv[r * cols + c];
                        }
                    }
                }
                Op::Add { a, b } => {
                    for (i, gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi;
                        grads[b.0][i] += gi;
                    }
                }
                Op::Sub { a, b } => {
                    for (i, gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi;
                        grads[b.0][i] -= gi;
                    }
                }
                Op::Tanh { x } => {
                    for (i, gi) in g.iter().enumerate() {
                        let y = node.value[i];
                        grads[x.0][i] += gi * (1.0 - y * y);
                    }
                }
                Op::Sigmoid { x } => {
                    for (i, gi) in g.iter().enumerate() {
                        let y = node.value[i];
                        grads[x.0][i] += gi * y * (1.0 - y);
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = &self.nodes[x.0].value;
                    for (i, gi) in g.iter().enumerate() {
                        if xv[i] > *lo && xv[i] < *hi {
                            grads[x.0][i] += gi;
                        }
                    }
                }
                Op::Affine { x, mul } => {
                    for (i, gi) in g.iter().enumerate() {
                        grads[x.0][i] += gi * mul;
                    }
                }
                Op::Dot { a, b } => {
                    let g0 = g[0];
                    let av: Vec<f64> = self.nodes[a.0].value.clone();
                    let bv: Vec<f64> = self.nodes[b.0].value.clone();
                    for i in 0..av.len() {
                        grads[a.0][i] += g0 * bv[i];
                        grads[b.0][i] += g0 * av[i];
                    }
                }
                Op::BroadcastAdd { s, v } => {
                    let mut gs = 0.0;
                    for (i, gi) in g.iter().enumerate() {
                        gs += gi;
                        grads[v.0][i] += gi;
                    }
                    grads[s.0][0] += gs;
                }
                Op::Softmax { x } => {
                    let y = &node.value;
                    let inner = dot(&g, y);
                    for i in 0..y.len() {
                        grads[x.0][i] += y[i] * (g[i] - inner);
                    }
                }
                Op::Stack { items } => {
                    for (i, id) in items.iter().enumerate() {
                        grads[id.0][0] += g[i];
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let wv: Vec<f64> = self.nodes[weights.0].value.clone();
                    for (j, id) in items.iter().enumerate() {
                        let item = &self.nodes[id.0].value;
                        let mut gw = 0.0;
                        for (i, gi) in g.iter().enumerate() {
                            gw += gi * item[i];
                        }
                        grads[weights.0][j] += gw;
                        for (i, gi) in g.iter().enumerate() {
                            grads[id.0][i] += wv[j] * gi;
                        }
                    }
                }
                Op::Norm { x } => {
                    let y = node.value[0];
                    if y > 0.0 {
                        let g0 = g[0] / y;
                        let xv: Vec<f64> = self.nodes[x.0].value.clone();
                        for (i, xi) in xv.iter().enumerate() {
                            grads[x.0][i] += g0 * xi;
                        }
                    }
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].value;
                    for (i, gi) in g.iter().enumerate() {
                        if xv[i] > 0.0 {
                            grads[x.0][i] += gi;
                        }
                    }
                }
                Op::BceFromProbs { p, targets, scale } => {
                    let g0 = g[0] * scale;
                    let pv: Vec<f64> = self.nodes[p.0].value.clone();
                    for (k, (pk, tk)) in pv.iter().zip(targets.iter()).enumerate() {
                        grads[p.0][k] += g0 * (-tk / pk + (1.0 - tk) / (1.0 - pk));
                    }
                }
                Op::LinComb { terms } => {
                    let g0 = g[0];
                    for (id, c) in terms {
                        grads[id.0][0] += g0 * c;
                    }
                }
            }
        }
        Adjoints { grads }
    }
}

/// Numerically stable logistic function.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
