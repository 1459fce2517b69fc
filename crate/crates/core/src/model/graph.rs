//! Reverse-mode differentiation over 2-D matrices.
//!
//! A [`Graph`] records operations eagerly (values are computed when a node
//! is added) and replays them backwards in [`Graph::backward`].

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Matrix;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Gather { table: ParamId, idx: Vec<Option<usize>> },
    MatMul(NodeId, NodeId),
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Matrix, rstd: Vec<f64> },
    MaskedSoftmax(NodeId),
    SliceCols { a: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    MeanRows { a: NodeId, start: usize, end: usize },
    NormalizeRows { a: NodeId, norms: Vec<f64> },
    MaskedLogSumExp { a: NodeId, probs: Matrix },
    Pick { a: NodeId, idx: Vec<(usize, usize)> },
    CrossEntropy { logits: NodeId, targets: Vec<Option<usize>>, probs: Matrix, count: usize },
    Mean(NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Backward {
    pub params: Grads,
    inputs: Vec<Option<Matrix>>,
}

impl Backward {
    /// Gradient reaching an input node, if any flowed to it.
    pub fn input_grad(&self, id: NodeId) -> Option<&Matrix> {
        self.inputs.get(id.0).and_then(Option::as_ref)
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        match self.nodes[id.0].op {
            Op::Param(p) => self.params.get(p),
            _ => &self.nodes[id.0].value,
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, m: Matrix) -> NodeId {
        self.push(Op::Input, m)
    }

    pub fn param(&mut self, p: ParamId) -> NodeId {
        self.push(Op::Param(p), Matrix::zeros(0, 0))
    }

    /// Rows of a parameter table; `None` yields a zero row.
    pub fn gather(&mut self, table: ParamId, idx: Vec<Option<usize>>) -> NodeId {
        let t = self.params.get(table);
        let mut out = Matrix::zeros(idx.len(), t.cols());
        for (r, i) in idx.iter().enumerate() {
            if let Some(i) = *i {
                out.row_mut(r).copy_from_slice(t.row(i));
            }
        }
        self.push(Op::Gather { table, idx }, out)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(Op::MatMulT(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "sub shape");
        let v = Matrix::from_vec(x.rows(), x.cols(), x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect());
        self.push(Op::Sub(a, b), v)
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let r = self.value(row);
        assert_eq!((1, v.cols()), r.shape(), "add_row shape");
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(r.data()) {
                *x += b;
            }
        }
        self.push(Op::AddRow(a, row), v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(gelu);
        self.push(Op::Gelu(a), v)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(s);
            for c in 0..cols {
                let h = (row[c] - mean) * s;
                xhat.set(r, c, h);
                out.set(r, c, h * g.data()[c] + b.data()[c]);
            }
        }
        self.push(Op::LayerNorm { x, gamma, beta, xhat, rstd }, out)
    }

    /// Row softmax ignoring columns whose `keep` flag is false; those get
    /// probability exactly zero.
    pub fn masked_softmax(&mut self, a: NodeId, keep: &[bool]) -> NodeId {
        let x = self.value(a);
        assert_eq!(keep.len(), x.cols(), "softmax mask width");
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let row = x.row(r);
            let max = row
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .fold(f64::NEG_INFINITY, |m, (&v, _)| m.max(v));
            if max == f64::NEG_INFINITY {
                continue;
            }
            let o = out.row_mut(r);
            let mut z = 0.0;
            for c in 0..row.len() {
                if keep[c] {
                    o[c] = (row[c] - max).exp();
                    z += o[c];
                }
            }
            for v in o.iter_mut() {
                *v /= z;
            }
        }
        self.push(Op::MaskedSoftmax(a), out)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let x = self.value(a);
        let mut out = Matrix::zeros(x.rows(), len);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols { a, start }, out)
    }

    pub fn concat_cols(&mut self, parts: Vec<NodeId>) -> NodeId {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for &p in &parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols rows");
            for r in 0..rows {
                out.row_mut(r)[off..off + v.cols()].copy_from_slice(v.row(r));
            }
            off += v.cols();
        }
        self.push(Op::ConcatCols(parts), out)
    }

    /// Stacks `1 × c` rows into an `n × c` matrix.
    pub fn stack_rows(&mut self, parts: Vec<NodeId>) -> NodeId {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::with_capacity(parts.len() * cols);
        for &p in &parts {
            let v = self.value(p);
            assert_eq!(v.shape(), (1, cols), "stack_rows shape");
            data.extend_from_slice(v.data());
        }
        let out = Matrix::from_vec(parts.len(), cols, data);
        self.push(Op::StackRows(parts), out)
    }

    /// Mean of rows `start..end` as a `1 × c` row.
    pub fn mean_rows(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let x = self.value(a);
        assert!(start < end && end <= x.rows(), "mean_rows range");
        let mut out = Matrix::zeros(1, x.cols());
        for r in start..end {
            for (o, v) in out.data_mut().iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        out.scale_in_place(1.0 / (end - start) as f64);
        self.push(Op::MeanRows { a, start, end }, out)
    }

    /// Scales each row to unit L2 norm. Zero rows are the caller's problem.
    pub fn normalize_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut out = x.clone();
        let mut norms = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let n = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.push(n);
            for v in out.row_mut(r) {
                *v /= n;
            }
        }
        self.push(Op::NormalizeRows { a, norms }, out)
    }

    /// Per-row `log Σ exp` over entries where `mask` (row-major, same shape
    /// as `a`) is true. Output is `n × 1`.
    pub fn masked_logsumexp(&mut self, a: NodeId, mask: &[bool]) -> NodeId {
        let x = self.value(a);
        assert_eq!(mask.len(), x.data().len(), "logsumexp mask size");
        let mut probs = Matrix::zeros(x.rows(), x.cols());
        let mut out = Matrix::zeros(x.rows(), 1);
        for r in 0..x.rows() {
            let m = &mask[r * x.cols()..(r + 1) * x.cols()];
            let row = x.row(r);
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &k)| k)
                .fold(f64::NEG_INFINITY, |acc, (&v, _)| acc.max(v));
            let p = probs.row_mut(r);
            let mut z = 0.0;
            for c in 0..row.len() {
                if m[c] {
                    p[c] = (row[c] - max).exp();
                    z += p[c];
                }
            }
            for v in p.iter_mut() {
                *v /= z;
            }
            out.set(r, 0, max + z.ln());
        }
        self.push(Op::MaskedLogSumExp { a, probs }, out)
    }

    /// Selected entries as an `n × 1` column.
    pub fn pick(&mut self, a: NodeId, idx: Vec<(usize, usize)>) -> NodeId {
        let x = self.value(a);
        let out = Matrix::from_vec(idx.len(), 1, idx.iter().map(|&(r, c)| x.get(r, c)).collect());
        self.push(Op::Pick { a, idx }, out)
    }

    /// Mean negative log-likelihood over rows with a target; zero when no
    /// row is labeled.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: Vec<Option<usize>>) -> NodeId {
        let x = self.value(logits);
        assert_eq!(targets.len(), x.rows(), "cross_entropy targets");
        let mut probs = Matrix::zeros(x.rows(), x.cols());
        let mut loss = 0.0;
        let mut count = 0;
        for (r, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let row = x.row(r);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let p = probs.row_mut(r);
            let mut z = 0.0;
            for (pc, &v) in p.iter_mut().zip(row) {
                *pc = (v - max).exp();
                z += *pc;
            }
            for pc in p.iter_mut() {
                *pc /= z;
            }
            loss += max + z.ln() - row[t];
            count += 1;
        }
        let v = if count > 0 { loss / count as f64 } else { 0.0 };
        self.push(Op::CrossEntropy { logits, targets, probs, count }, Matrix::scalar(v))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let n = x.data().len().max(1);
        let v = x.data().iter().sum::<f64>() / n as f64;
        self.push(Op::Mean(a), Matrix::scalar(v))
    }

    /// Back-propagates from a scalar node with unit seed.
    pub fn backward(&self, root: NodeId) -> Backward {
        self.backward_from(&[(root, Matrix::scalar(1.0))])
    }

    /// Back-propagates arbitrary seed gradients.
    pub fn backward_from(&self, seeds: &[(NodeId, Matrix)]) -> Backward {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        for (id, g) in seeds {
            acc(&mut grads, *id, g.clone());
        }
        let mut params = Grads::new(self.params.len());
        let mut inputs: Vec<Option<Matrix>> = vec![None; n];
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => inputs[i] = Some(g),
                Op::Param(p) => params.accumulate(*p, &g),
                Op::Gather { table, idx } => {
                    let slot = params.slot(*table, self.params.get(*table).shape());
                    for (r, t) in idx.iter().enumerate() {
                        if let Some(t) = *t {
                            for (s, v) in slot.row_mut(t).iter_mut().zip(g.row(r)) {
                                *s += v;
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.t_matmul(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, col_sums(&g));
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|v| v * s)),
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let d = Matrix::from_vec(
                        x.rows(),
                        x.cols(),
                        x.data().iter().zip(g.data()).map(|(&x, &g)| g * gelu_grad(x)).collect(),
                    );
                    acc(&mut grads, *a, d);
                }
                Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                    let gam = self.value(*gamma);
                    let (rows, cols) = g.shape();
                    let mut dgamma = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let gr = g.row(r);
                        let hr = xhat.row(r);
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for c in 0..cols {
                            let d = gr[c] * gam.data()[c];
                            mean_d += d;
                            mean_dh += d * hr[c];
                            dgamma.data_mut()[c] += gr[c] * hr[c];
                        }
                        mean_d /= cols as f64;
                        mean_dh /= cols as f64;
                        let out = dx.row_mut(r);
                        for c in 0..cols {
                            let d = gr[c] * gam.data()[c];
                            out[c] = rstd[r] * (d - mean_d - hr[c] * mean_dh);
                        }
                    }
                    acc(&mut grads, *beta, col_sums(&g));
                    acc(&mut grads, *gamma, dgamma);
                    acc(&mut grads, *x, dx);
                }
                Op::MaskedSoftmax(a) => {
                    let y = &self.nodes[i].value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (yv, gv)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - dot);
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::SliceCols { a, start } => {
                    let x = self.value(*a);
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut dp = Matrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        acc(&mut grads, p, dp);
                    }
                }
                Op::StackRows(parts) => {
                    for (r, &p) in parts.iter().enumerate() {
                        acc(&mut grads, p, Matrix::from_vec(1, g.cols(), g.row(r).to_vec()));
                    }
                }
                Op::MeanRows { a, start, end } => {
                    let x = self.value(*a);
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    let s = 1.0 / (end - start) as f64;
                    for r in *start..*end {
                        for (o, v) in dx.row_mut(r).iter_mut().zip(g.data()) {
                            *o = v * s;
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::NormalizeRows { a, norms } => {
                    let y = &self.nodes[i].value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (yv, gv)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = (gv - yv * dot) / norms[r];
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::MaskedLogSumExp { a, probs } => {
                    let mut dx = probs.clone();
                    for r in 0..dx.rows() {
                        let s = g.get(r, 0);
                        for v in dx.row_mut(r) {
                            *v *= s;
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::Pick { a, idx } => {
                    let x = self.value(*a);
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    for (k, &(r, c)) in idx.iter().enumerate() {
                        dx.set(r, c, dx.get(r, c) + g.get(k, 0));
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::CrossEntropy { logits, targets, probs, count } => {
                    if *count == 0 {
                        continue;
                    }
                    let s = g.get(0, 0) / *count as f64;
                    let mut dx = Matrix::zeros(probs.rows(), probs.cols());
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        for (o, p) in dx.row_mut(r).iter_mut().zip(probs.row(r)) {
                            *o = p * s;
                        }
                        let cur = dx.get(r, t);
                        dx.set(r, t, cur - s);
                    }
                    acc(&mut grads, *logits, dx);
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let s = g.get(0, 0) / x.data().len().max(1) as f64;
                    acc(&mut grads, *a, Matrix::from_vec(x.rows(), x.cols(), vec![s; x.data().len()]));
                }
            }
        }
        Backward { params, inputs }
    }
}

fn acc(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn col_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Central-difference check of every parameter against `build`, which
    /// must return a scalar node.
    fn check(store: &ParamStore, build: impl Fn(&mut Graph) -> NodeId) {
        let g0 = {
            let mut g = Graph::new(store);
            let root = build(&mut g);
            g.backward(root).params
        };
        let h = 1e-5;
        for (id, name, t) in store.iter() {
            for k in 0..t.data().len() {
                let mut plus = store.clone();
                plus.get_mut(id).data_mut()[k] += h;
                let mut minus = store.clone();
                minus.get_mut(id).data_mut()[k] -= h;
                let eval = |s: &ParamStore| {
                    let mut g = Graph::new(s);
                    let root = build(&mut g);
                    g.value(root).get(0, 0)
                };
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let analytic = g0.get(id).map_or(0.0, |m| m.data()[k]);
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-5,
                    "{name}[{k}]: analytic {analytic} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn each_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::default();
        let x = s.add("x", random(&mut rng, 4, 3));
        let w = s.add("w", random(&mut rng, 3, 3));
        let b = s.add("b", random(&mut rng, 1, 3));
        let gamma = s.add("gamma", random(&mut rng, 1, 3));
        let table = s.add("table", random(&mut rng, 5, 3));
        check(&s, |g| {
            let xn = g.param(x);
            let wn = g.param(w);
            let bn = g.param(b);
            let emb = g.gather(table, vec![Some(1), None, Some(4), Some(1)]);
            let h = g.add(xn, emb);
            let h = g.matmul(h, wn);
            let h = g.add_row(h, bn);
            let gn = g.param(gamma);
            let h = g.layer_norm(h, gn, bn);
            let h = g.gelu(h);
            let att = g.matmul_t(h, xn);
            let att = g.scale(att, 0.7);
            let p = g.masked_softmax(att, &[true, false, true, true]);
            let ctx = g.matmul(p, xn);
            let left = g.slice_cols(ctx, 0, 2);
            let right = g.slice_cols(h, 2, 1);
            let cat = g.concat_cols(vec![left, right]);
            let r0 = g.mean_rows(cat, 0, 2);
            let r1 = g.mean_rows(cat, 1, 4);
            let st = g.stack_rows(vec![r0, r1]);
            let nz = g.normalize_rows(st);
            let sim = g.matmul_t(nz, nz);
            let sim = g.scale(sim, 2.0);
            let lse = g.masked_logsumexp(sim, &[false, true, true, true]);
            let pos = g.pick(sim, vec![(0, 1), (1, 0)]);
            let diff = g.sub(lse, pos);
            let con = g.mean(diff);
            let ce = g.cross_entropy(cat, vec![Some(2), None, Some(0), Some(1)]);
            g.add(con, ce)
        });
    }

    #[test]
    fn masked_columns_get_zero_probability() {
        let s = ParamStore::default();
        let mut g = Graph::new(&s);
        let a = g.input(Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]));
        let p = g.masked_softmax(a, &[true, false, true]);
        let v = g.value(p);
        assert_eq!(v.get(0, 1), 0.0);
        assert!((v.data().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_cross_entropy_is_zero_with_zero_grad() {
        let mut s = ParamStore::default();
        let w = s.add("w", Matrix::from_rows(&[vec![1.0, -1.0]]));
        let mut g = Graph::new(&s);
        let wn = g.param(w);
        let ce = g.cross_entropy(wn, vec![None]);
        assert_eq!(g.value(ce).get(0, 0), 0.0);
        let back = g.backward(ce);
        assert!(back.params.is_zero());
    }

    #[test]
    fn input_gradients_are_reported() {
        let s = ParamStore::default();
        let mut g = Graph::new(&s);
        let a = g.input(Matrix::from_rows(&[vec![1.0, 2.0]]));
        let m = g.mean(a);
        let back = g.backward(m);
        assert_eq!(back.input_grad(a).unwrap().data(), &[0.5, 0.5]);
    }
}
