//! Reverse-mode differentiation over a tape of vector-valued nodes.
//!
//! Scalars are vectors of length one. Parameters are read straight from the
//! store, so a graph borrows the store for its lifetime; gradients come back
//! as dense per-tensor buffers.

use std::cell::RefCell;

use super::params::{Gradients, ParamId, ParameterStore};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    ParamRow(ParamId, usize),
    /// `W x (+ b)`.
    Affine { w: ParamId, b: Option<ParamId>, x: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    /// Vector times a scalar node.
    MulScalar(usize, usize),
    Concat(Vec<usize>),
    Slice(usize, usize),
    Gather(usize, Vec<usize>),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Dot(usize, usize),
    Sum(usize),
    Stack(Vec<usize>),
    LogSumExp(usize),
    LogSoftmax(usize),
    Mean(Vec<usize>),
    /// `sum_i w[i] * v_i` for a weight vector node and vector nodes.
    WeightedSum(usize, Vec<usize>),
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParameterStore,
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy)]
pub struct Var<'g> {
    g: &'g Graph<'g>,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value())
    }
}

fn lse(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParameterStore) -> Self {
        Self { params, nodes: RefCell::new(Vec::with_capacity(1024)) }
    }

    pub fn params(&self) -> &'p ParameterStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push<'g>(&'g self, value: Vec<f64>, op: Op) -> Var<'g> {
        let g: &'g Graph<'g> = shorten(self);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var { g, id: nodes.len() - 1 }
    }

    pub fn constant(&self, value: Vec<f64>) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, x: f64) -> Var<'_> {
        self.constant(vec![x])
    }

    pub fn param(&self, id: ParamId) -> Var<'_> {
        self.push(self.params.get(id).data.clone(), Op::Param(id))
    }

    pub fn param_row(&self, id: ParamId, row: usize) -> Var<'_> {
        self.push(self.params.get(id).row(row).to_vec(), Op::ParamRow(id, row))
    }

    /// `W x + b` for a matrix parameter `W` (rows x cols) and bias `b`.
    pub fn affine<'g>(&'g self, w: ParamId, b: Option<ParamId>, x: Var<'g>) -> Var<'g> {
        let wt = self.params.get(w);
        let out = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.id].value;
            assert_eq!(xv.len(), wt.cols, "affine {}: input size", wt.name);
            let mut out: Vec<f64> = match b {
                Some(b) => self.params.get(b).data.clone(),
                None => vec![0.0; wt.rows],
            };
            for (r, o) in out.iter_mut().enumerate() {
                *o += wt.row(r).iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
            }
            out
        };
        self.push(out, Op::Affine { w, b, x: x.id })
    }

    fn unary<'g>(&'g self, a: Var<'g>, f: impl Fn(f64) -> f64, op: Op) -> Var<'g> {
        let v = self.nodes.borrow()[a.id].value.iter().map(|x| f(*x)).collect();
        self.push(v, op)
    }

    fn binary<'g>(&'g self, a: Var<'g>, b: Var<'g>, f: impl Fn(f64, f64) -> f64, op: Op) -> Var<'g> {
        let v = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.id].value, &nodes[b.id].value);
            assert_eq!(x.len(), y.len(), "elementwise op on mismatched sizes");
            x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect()
        };
        self.push(v, op)
    }

    pub fn concat<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        let v = {
            let nodes = self.nodes.borrow();
            parts.iter().flat_map(|p| nodes[p.id].value.iter().copied()).collect()
        };
        self.push(v, Op::Concat(parts.iter().map(|p| p.id).collect()))
    }

    /// Vector of scalar nodes.
    pub fn stack<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        let v = {
            let nodes = self.nodes.borrow();
            parts.iter().map(|p| {
                debug_assert_eq!(nodes[p.id].value.len(), 1);
                nodes[p.id].value[0]
            }).collect()
        };
        self.push(v, Op::Stack(parts.iter().map(|p| p.id).collect()))
    }

    pub fn mean<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        assert!(!parts.is_empty(), "mean of nothing");
        let v = {
            let nodes = self.nodes.borrow();
            let mut acc = vec![0.0; nodes[parts[0].id].value.len()];
            for p in parts {
                for (a, x) in acc.iter_mut().zip(&nodes[p.id].value) {
                    *a += x;
                }
            }
            let n = parts.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        };
        self.push(v, Op::Mean(parts.iter().map(|p| p.id).collect()))
    }

    pub fn weighted_sum<'g>(&'g self, weights: Var<'g>, parts: &[Var<'g>]) -> Var<'g> {
        let v = {
            let nodes = self.nodes.borrow();
            let w = &nodes[weights.id].value;
            assert_eq!(w.len(), parts.len());
            let mut acc = vec![0.0; nodes[parts[0].id].value.len()];
            for (wi, p) in w.iter().zip(parts) {
                for (a, x) in acc.iter_mut().zip(&nodes[p.id].value) {
                    *a += wi * x;
                }
            }
            acc
        };
        self.push(v, Op::WeightedSum(weights.id, parts.iter().map(|p| p.id).collect()))
    }

    /// Log-sum-exp of scalar nodes.
    pub fn logsumexp_of<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        if parts.len() == 1 {
            return parts[0];
        }
        self.stack(parts).logsumexp()
    }

    pub fn value(&self, v: Var<'_>) -> Vec<f64> {
        self.nodes.borrow()[v.id].value.clone()
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut grads = Gradients::zeros(self.params);
        assert_eq!(nodes[loss.id].value.len(), 1, "backward from a non-scalar");
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        adj[loss.id] = Some(vec![1.0]);

        fn acc(adj: &mut [Option<Vec<f64>>], i: usize, d: impl IntoIterator<Item = f64>, len: usize) {
            let slot = adj[i].get_or_insert_with(|| vec![0.0; len]);
            for (a, x) in slot.iter_mut().zip(d) {
                *a += x;
            }
        }

        for i in (0..=loss.id).rev() {
            let Some(dy) = adj[i].take() else { continue };
            let node = &nodes[i];
            let y = &node.value;
            let len_of = |j: usize| nodes[j].value.len();
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => {
                    grads.touched[p.0] = true;
                    for (g, d) in grads.grads[p.0].iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::ParamRow(p, r) => {
                    grads.touched[p.0] = true;
                    let cols = self.params.get(*p).cols;
                    for (g, d) in grads.grads[p.0][r * cols..(r + 1) * cols].iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::Affine { w, b, x } => {
                    let wt = self.params.get(*w);
                    let xv = &nodes[*x].value;
                    grads.touched[w.0] = true;
                    let gw = &mut grads.grads[w.0];
                    let mut dx = vec![0.0; wt.cols];
                    for (r, d) in dy.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        let row = wt.row(r);
                        let grow = &mut gw[r * wt.cols..(r + 1) * wt.cols];
                        for c in 0..wt.cols {
                            grow[c] += d * xv[c];
                            dx[c] += d * row[c];
                        }
                    }
                    if let Some(b) = b {
                        grads.touched[b.0] = true;
                        for (g, d) in grads.grads[b.0].iter_mut().zip(&dy) {
                            *g += d;
                        }
                    }
                    acc(&mut adj, *x, dx, wt.cols);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, dy.iter().copied(), dy.len());
                    acc(&mut adj, *b, dy.iter().copied(), dy.len());
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *a, dy.iter().copied(), dy.len());
                    acc(&mut adj, *b, dy.iter().map(|d| -d), dy.len());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    acc(&mut adj, *a, dy.iter().zip(bv).map(|(d, x)| d * x), dy.len());
                    acc(&mut adj, *b, dy.iter().zip(av).map(|(d, x)| d * x), dy.len());
                }
                Op::Scale(a, c) => acc(&mut adj, *a, dy.iter().map(|d| d * c), dy.len()),
                Op::MulScalar(a, s) => {
                    let (av, sv) = (&nodes[*a].value, nodes[*s].value[0]);
                    acc(&mut adj, *a, dy.iter().map(|d| d * sv), dy.len());
                    let ds: f64 = dy.iter().zip(av).map(|(d, x)| d * x).sum();
                    acc(&mut adj, *s, [ds], 1);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = len_of(*p);
                        acc(&mut adj, *p, dy[off..off + n].iter().copied(), n);
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = len_of(*a);
                    let mut d = vec![0.0; n];
                    d[*start..*start + dy.len()].copy_from_slice(&dy);
                    acc(&mut adj, *a, d, n);
                }
                Op::Gather(a, idx) => {
                    let n = len_of(*a);
                    let mut d = vec![0.0; n];
                    for (k, &j) in idx.iter().enumerate() {
                        d[j] += dy[k];
                    }
                    acc(&mut adj, *a, d, n);
                }
                Op::Sigmoid(a) => acc(&mut adj, *a, dy.iter().zip(y).map(|(d, s)| d * s * (1.0 - s)), dy.len()),
                Op::Tanh(a) => acc(&mut adj, *a, dy.iter().zip(y).map(|(d, t)| d * (1.0 - t * t)), dy.len()),
                Op::Relu(a) => acc(&mut adj, *a, dy.iter().zip(y).map(|(d, r)| if *r > 0.0 { *d } else { 0.0 }), dy.len()),
                Op::Exp(a) => acc(&mut adj, *a, dy.iter().zip(y).map(|(d, e)| d * e), dy.len()),
                Op::Log(a) => {
                    let av = &nodes[*a].value;
                    acc(&mut adj, *a, dy.iter().zip(av).map(|(d, x)| d / x), dy.len());
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    let d = dy[0];
                    acc(&mut adj, *a, bv.iter().map(|x| d * x), bv.len());
                    acc(&mut adj, *b, av.iter().map(|x| d * x), av.len());
                }
                Op::Sum(a) => {
                    let n = len_of(*a);
                    acc(&mut adj, *a, std::iter::repeat(dy[0]).take(n), n);
                }
                Op::Stack(parts) => {
                    for (k, p) in parts.iter().enumerate() {
                        acc(&mut adj, *p, [dy[k]], 1);
                    }
                }
                Op::LogSumExp(a) => {
                    let av = &nodes[*a].value;
                    let z = y[0];
                    if z.is_finite() {
                        acc(&mut adj, *a, av.iter().map(|x| dy[0] * (x - z).exp()), av.len());
                    }
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = dy.iter().sum();
                    acc(&mut adj, *a, dy.iter().zip(y).map(|(d, l)| d - l.exp() * total), dy.len());
                }
                Op::Mean(parts) => {
                    let n = parts.len() as f64;
                    for p in parts {
                        acc(&mut adj, *p, dy.iter().map(|d| d / n), dy.len());
                    }
                }
                Op::WeightedSum(w, parts) => {
                    let wv = &nodes[*w].value;
                    let mut dw = vec![0.0; parts.len()];
                    for (k, p) in parts.iter().enumerate() {
                        let pv = &nodes[*p].value;
                        dw[k] = dy.iter().zip(pv).map(|(d, x)| d * x).sum();
                        let wk = wv[k];
                        acc(&mut adj, *p, dy.iter().map(|d| d * wk), dy.len());
                    }
                    acc(&mut adj, *w, dw, parts.len());
                }
            }
        }
        grads
    }
}

/// `Graph` is covariant in its store lifetime.
fn shorten<'g, 'p: 'g>(g: &'g Graph<'p>) -> &'g Graph<'g> {
    g
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph<'g> {
        self.g
    }

    pub fn value(&self) -> Vec<f64> {
        self.g.value(*self)
    }

    pub fn scalar(&self) -> f64 {
        let nodes = self.g.nodes.borrow();
        let v = &nodes[self.id].value;
        debug_assert_eq!(v.len(), 1);
        v[0]
    }

    pub fn len(&self) -> usize {
        self.g.nodes.borrow()[self.id].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add(self, o: Var<'g>) -> Var<'g> {
        self.g.binary(self, o, |a, b| a + b, Op::Add(self.id, o.id))
    }

    pub fn sub(self, o: Var<'g>) -> Var<'g> {
        self.g.binary(self, o, |a, b| a - b, Op::Sub(self.id, o.id))
    }

    pub fn mul(self, o: Var<'g>) -> Var<'g> {
        self.g.binary(self, o, |a, b| a * b, Op::Mul(self.id, o.id))
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        self.g.unary(self, |a| a * c, Op::Scale(self.id, c))
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn mul_scalar(self, s: Var<'g>) -> Var<'g> {
        let sv = s.scalar();
        self.g.unary(self, |a| a * sv, Op::MulScalar(self.id, s.id))
    }

    pub fn slice(self, start: usize, len: usize) -> Var<'g> {
        let v = self.g.nodes.borrow()[self.id].value[start..start + len].to_vec();
        self.g.push(v, Op::Slice(self.id, start))
    }

    pub fn gather(self, idx: &[usize]) -> Var<'g> {
        let v = {
            let nodes = self.g.nodes.borrow();
            idx.iter().map(|&i| nodes[self.id].value[i]).collect()
        };
        self.g.push(v, Op::Gather(self.id, idx.to_vec()))
    }

    pub fn index(self, i: usize) -> Var<'g> {
        self.gather(&[i])
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.g.unary(self, sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'g> {
        self.g.unary(self, f64::tanh, Op::Tanh(self.id))
    }

    pub fn relu(self) -> Var<'g> {
        self.g.unary(self, |a| a.max(0.0), Op::Relu(self.id))
    }

    pub fn exp(self) -> Var<'g> {
        self.g.unary(self, f64::exp, Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'g> {
        self.g.unary(self, f64::ln, Op::Log(self.id))
    }

    pub fn dot(self, o: Var<'g>) -> Var<'g> {
        let v = {
            let nodes = self.g.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[o.id].value);
            assert_eq!(a.len(), b.len(), "dot on mismatched sizes");
            a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
        };
        self.g.push(vec![v], Op::Dot(self.id, o.id))
    }

    pub fn sum(self) -> Var<'g> {
        let v: f64 = self.g.nodes.borrow()[self.id].value.iter().sum();
        self.g.push(vec![v], Op::Sum(self.id))
    }

    pub fn logsumexp(self) -> Var<'g> {
        let v = lse(&self.g.nodes.borrow()[self.id].value);
        self.g.push(vec![v], Op::LogSumExp(self.id))
    }

    pub fn log_softmax(self) -> Var<'g> {
        let v = {
            let nodes = self.g.nodes.borrow();
            let x = &nodes[self.id].value;
            let z = lse(x);
            x.iter().map(|a| a - z).collect()
        };
        self.g.push(v, Op::LogSoftmax(self.id))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(self, m: Vec<f64>) -> Var<'g> {
        let c = self.g.constant(m);
        self.mul(c)
    }
}

pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    lse(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Init;
    use crate::rng::SplitMix64;

    fn store() -> (ParameterStore, ParamId, ParamId, ParamId) {
        let mut rng = SplitMix64::new(11);
        let mut p = ParameterStore::new();
        let w = p.add("w", 3, 4, Init::Uniform(0.5), &mut rng);
        let b = p.add("b", 1, 3, Init::Uniform(0.5), &mut rng);
        let e = p.add("e", 5, 4, Init::Uniform(0.5), &mut rng);
        (p, w, b, e)
    }

    /// A scalar exercising every op.
    fn probe(p: &ParameterStore, w: ParamId, b: ParamId, e: ParamId) -> (f64, Gradients) {
        let g = Graph::new(p);
        let x = g.param_row(e, 2);
        let y = g.affine(w, Some(b), x).tanh();
        let z = g.affine(w, None, g.param_row(e, 4)).sigmoid();
        let c = g.concat(&[y, z]);
        let s = c.slice(1, 4).relu().add(c.slice(0, 4).mul(c.slice(2, 4)));
        let m = g.mean(&[s, s.scale(0.5), s.exp()]);
        let k = m.dot(g.param(b).gather(&[0, 1, 2, 0]));
        let ws = g.weighted_sum(c.slice(0, 2).log_softmax().exp(), &[m, s]);
        let t = g.stack(&[k, ws.sum(), m.index(3).mul_scalar(k)]).logsumexp();
        let u = t.sub(c.sum().exp().ln().neg());
        let v = u.value()[0];
        (v, g.backward(u))
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (p, w, b, e) = store();
        let (_, grads) = probe(&p, w, b, e);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for id in [w, b, e] {
            for i in 0..p.get(id).data.len() {
                let mut plus = p.clone();
                plus.get_mut(id).data[i] += h;
                let mut minus = p.clone();
                minus.get_mut(id).data[i] -= h;
                let num = (probe(&plus, w, b, e).0 - probe(&minus, w, b, e).0) / (2.0 * h);
                let ana = grads.get(id)[i];
                let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    #[test]
    fn linear_probe_gradient_is_coefficient_and_unused_are_zero() {
        let (p, w, _, e) = store();
        let g = Graph::new(&p);
        let coef = vec![1.5, -2.0, 0.25, 4.0];
        let loss = g.param_row(e, 1).dot(g.constant(coef.clone()));
        let grads = g.backward(loss);
        assert_eq!(&grads.get(e)[4..8], &coef[..]);
        assert!(grads.get(e)[..4].iter().all(|x| *x == 0.0));
        assert!(grads.get(w).iter().all(|x| *x == 0.0));
        assert_eq!(grads.detached(&p), vec!["w", "b"]);
    }
}
