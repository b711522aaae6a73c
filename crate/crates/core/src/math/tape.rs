//! Reverse-mode differentiation over a recorded sequence of operations.
//!
//! Activations are held in `f64`; parameters are read from the borrowed
//! [`ParamSet`] in `f32`. Each operation owns its analytic adjoint.

use crate::math::{softmax_temp_f64, ParamId, ParamSet};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Affine {
        w: ParamId,
        b: Option<ParamId>,
        x: Var,
    },
    Add(Vec<Var>),
    Relu(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    /// Value layout is `[h; c]`; `gates` caches activated `[i; f; g; o]`.
    Lstm {
        w: ParamId,
        b: ParamId,
        x: Var,
        h: Option<Var>,
        c: Option<Var>,
        gates: Vec<f64>,
    },
    Softmax {
        x: Var,
        tau: f64,
    },
    WeightedSum {
        weights: Var,
        items: Vec<Var>,
    },
    Mean(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn value_f32(&self, v: Var) -> Vec<f32> {
        self.value(v).iter().map(|&x| x as f32).collect()
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn leaf_f32(&mut self, value: &[f32]) -> Var {
        self.leaf(value.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.leaf(vec![0.0; len])
    }

    /// `W x (+ b)`.
    pub fn affine(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Var {
        let wt = self.params.get(w);
        let (rows, cols) = wt.dims2().expect("affine weight must be rank 2");
        let xv = self.value(x);
        assert_eq!(xv.len(), cols, "affine input width for {}", self.params.name(w));
        let mut out: Vec<f64> = wt
            .data()
            .chunks_exact(cols)
            .map(|row| row.iter().zip(xv).map(|(&a, &b)| f64::from(a) * b).sum())
            .collect();
        if let Some(b) = b {
            let bt = self.params.get(b);
            assert_eq!(bt.len(), rows);
            for (o, &bias) in out.iter_mut().zip(bt.data()) {
                *o += f64::from(bias);
            }
        }
        self.push(Op::Affine { w, b, x }, out)
    }

    pub fn add(&mut self, items: &[Var]) -> Var {
        let mut out = self.value(items[0]).to_vec();
        for &v in &items[1..] {
            let val = self.value(v);
            assert_eq!(val.len(), out.len());
            for (o, x) in out.iter_mut().zip(val) {
                *o += x;
            }
        }
        self.push(Op::Add(items.to_vec()), out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
        self.push(Op::Relu(x), out)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| v.tanh()).collect();
        self.push(Op::Tanh(x), out)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let out = parts.iter().flat_map(|&p| self.value(p).iter().copied()).collect();
        self.push(Op::Concat(parts.to_vec()), out)
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x)[start..start + len].to_vec();
        self.push(Op::Slice { x, start }, out)
    }

    /// One LSTM step. `w: [4H, in + H]`, `b: [4H]`, gate rows ordered input, forget,
    /// candidate, output. Missing `h`/`c` mean zero state. The returned node holds `[h; c]`.
    pub fn lstm(&mut self, w: ParamId, b: ParamId, x: Var, h: Option<Var>, c: Option<Var>) -> Var {
        let wt = self.params.get(w);
        let (rows, cols) = wt.dims2().expect("lstm weight must be rank 2");
        let hidden = rows / 4;
        let xv = self.value(x);
        let in_dim = xv.len();
        assert_eq!(in_dim + hidden, cols, "lstm input width for {}", self.params.name(w));
        let zero = vec![0.0; hidden];
        let hv = h.map_or(&zero[..], |h| self.value(h));
        let cv = c.map_or(&zero[..], |c| self.value(c));
        let bias = self.params.get(b).data();

        let mut gates = vec![0.0; rows];
        for (r, row) in wt.data().chunks_exact(cols).enumerate() {
            let (wx, wh) = row.split_at(in_dim);
            let z: f64 = wx.iter().zip(xv).map(|(&a, &b)| f64::from(a) * b).sum::<f64>()
                + wh.iter().zip(hv).map(|(&a, &b)| f64::from(a) * b).sum::<f64>()
                + f64::from(bias[r]);
            gates[r] = if (2 * hidden..3 * hidden).contains(&r) {
                z.tanh()
            } else {
                sigmoid(z)
            };
        }
        let mut out = vec![0.0; 2 * hidden];
        for k in 0..hidden {
            let (i, f, g, o) = (
                gates[k],
                gates[hidden + k],
                gates[2 * hidden + k],
                gates[3 * hidden + k],
            );
            let c_new = f * cv[k] + i * g;
            out[k] = o * c_new.tanh();
            out[hidden + k] = c_new;
        }
        self.push(Op::Lstm { w, b, x, h, c, gates }, out)
    }

    pub fn softmax(&mut self, x: Var, tau: f64) -> Var {
        let out = softmax_temp_f64(self.value(x), tau);
        self.push(Op::Softmax { x, tau }, out)
    }

    /// `sum_i weights[i] * items[i]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let w = self.value(weights);
        assert_eq!(w.len(), items.len());
        let mut out = vec![0.0; self.value(items[0]).len()];
        for (&wi, &item) in w.iter().zip(items) {
            for (o, &x) in out.iter_mut().zip(self.value(item)) {
                *o += wi * x;
            }
        }
        self.push(
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
            out,
        )
    }

    pub fn mean(&mut self, items: &[Var]) -> Var {
        let n = items.len() as f64;
        let mut out = vec![0.0; self.value(items[0]).len()];
        for &item in items {
            for (o, &x) in out.iter_mut().zip(self.value(item)) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= n;
        }
        self.push(Op::Mean(items.to_vec()), out)
    }

    /// Propagates the seeded adjoints back through every recorded node.
    pub fn backward(&self, seeds: &[(Var, Vec<f64>)]) -> Adjoints {
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut pgrad: Vec<Option<Vec<f64>>> = vec![None; self.params.len()];
        for (v, g) in seeds {
            accumulate(&mut adj, *v, self.value(*v).len(), |a| {
                for (x, y) in a.iter_mut().zip(g) {
                    *x += y;
                }
            });
        }

        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = adj[idx].take() else { continue };
            self.propagate(node, &dy, &mut adj, &mut pgrad);
            adj[idx] = Some(dy);
        }
        Adjoints {
            nodes: adj,
            params: pgrad,
        }
    }

    fn propagate(&self, node: &Node, dy: &[f64], adj: &mut [Option<Vec<f64>>], pgrad: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Affine { w, b, x } => {
                let wt = self.params.get(*w);
                let (_, cols) = wt.dims2().unwrap();
                let xv = self.value(*x);
                let gw = param_slot(pgrad, *w, wt.len());
                for (r, &d) in dy.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (g, &xc) in gw[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                        *g += d * xc;
                    }
                }
                if let Some(b) = b {
                    let gb = param_slot(pgrad, *b, dy.len());
                    for (g, &d) in gb.iter_mut().zip(dy) {
                        *g += d;
                    }
                }
                accumulate(adj, *x, cols, |dx| {
                    for (row, &d) in wt.data().chunks_exact(cols).zip(dy) {
                        if d == 0.0 {
                            continue;
                        }
                        for (g, &wv) in dx.iter_mut().zip(row) {
                            *g += f64::from(wv) * d;
                        }
                    }
                });
            }
            Op::Add(items) => {
                for &v in items {
                    accumulate(adj, v, dy.len(), |dx| add_into(dx, dy));
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                accumulate(adj, *x, dy.len(), |dx| {
                    for ((g, &d), &v) in dx.iter_mut().zip(dy).zip(xv) {
                        if v > 0.0 {
                            *g += d;
                        }
                    }
                });
            }
            Op::Tanh(x) => {
                let yv = &node.value;
                accumulate(adj, *x, dy.len(), |dx| {
                    for ((g, &d), &y) in dx.iter_mut().zip(dy).zip(yv) {
                        *g += d * (1.0 - y * y);
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    accumulate(adj, p, len, |dx| add_into(dx, &dy[offset..offset + len]));
                    offset += len;
                }
            }
            Op::Slice { x, start } => {
                let len = self.value(*x).len();
                accumulate(adj, *x, len, |dx| add_into(&mut dx[*start..*start + dy.len()], dy));
            }
            Op::Lstm { w, b, x, h, c, gates } => {
                let hidden = node.value.len() / 2;
                let zero = vec![0.0; hidden];
                let c_prev = c.map_or(&zero[..], |c| self.value(c));
                let h_prev = h.map_or(&zero[..], |h| self.value(h));
                let xv = self.value(*x);
                let c_new = &node.value[hidden..];
                let (dh, dc_out) = dy.split_at(hidden);

                let mut dz = vec![0.0; 4 * hidden];
                let mut dc_prev = vec![0.0; hidden];
                for k in 0..hidden {
                    let (i, f, g, o) = (
                        gates[k],
                        gates[hidden + k],
                        gates[2 * hidden + k],
                        gates[3 * hidden + k],
                    );
                    let tc = c_new[k].tanh();
                    let dc = dc_out[k] + dh[k] * o * (1.0 - tc * tc);
                    let d_o = dh[k] * tc;
                    let d_i = dc * g;
                    let d_g = dc * i;
                    let d_f = dc * c_prev[k];
                    dc_prev[k] = dc * f;
                    dz[k] = d_i * i * (1.0 - i);
                    dz[hidden + k] = d_f * f * (1.0 - f);
                    dz[2 * hidden + k] = d_g * (1.0 - g * g);
                    dz[3 * hidden + k] = d_o * o * (1.0 - o);
                }

                let wt = self.params.get(*w);
                let cols = xv.len() + hidden;
                let gw = param_slot(pgrad, *w, wt.len());
                for (r, &d) in dz.iter().enumerate() {
                    let row = &mut gw[r * cols..(r + 1) * cols];
                    let (gx, gh) = row.split_at_mut(xv.len());
                    for (g, &v) in gx.iter_mut().zip(xv) {
                        *g += d * v;
                    }
                    if h.is_some() {
                        for (g, &v) in gh.iter_mut().zip(h_prev) {
                            *g += d * v;
                        }
                    }
                }
                let gb = param_slot(pgrad, *b, dz.len());
                add_into(gb, &dz);

                let mut dxh = vec![0.0; cols];
                for (row, &d) in wt.data().chunks_exact(cols).zip(&dz) {
                    for (g, &wv) in dxh.iter_mut().zip(row) {
                        *g += f64::from(wv) * d;
                    }
                }
                accumulate(adj, *x, xv.len(), |dx| add_into(dx, &dxh[..xv.len()]));
                if let Some(h) = h {
                    accumulate(adj, *h, hidden, |dx| add_into(dx, &dxh[xv.len()..]));
                }
                if let Some(c) = c {
                    accumulate(adj, *c, hidden, |dx| add_into(dx, &dc_prev));
                }
            }
            Op::Softmax { x, tau } => {
                let y = &node.value;
                let inner: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                accumulate(adj, *x, y.len(), |dx| {
                    for ((g, &yi), &d) in dx.iter_mut().zip(y).zip(dy) {
                        *g += yi * (d - inner) / tau;
                    }
                });
            }
            Op::WeightedSum { weights, items } => {
                let w = self.value(*weights);
                let dw: Vec<f64> = items
                    .iter()
                    .map(|&it| self.value(it).iter().zip(dy).map(|(a, b)| a * b).sum())
                    .collect();
                accumulate(adj, *weights, w.len(), |g| add_into(g, &dw));
                for (&wi, &it) in w.iter().zip(items) {
                    accumulate(adj, it, dy.len(), |g| {
                        for (x, &d) in g.iter_mut().zip(dy) {
                            *x += wi * d;
                        }
                    });
                }
            }
            Op::Mean(items) => {
                let n = items.len() as f64;
                for &it in items {
                    accumulate(adj, it, dy.len(), |g| {
                        for (x, &d) in g.iter_mut().zip(dy) {
                            *x += d / n;
                        }
                    });
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl FnOnce(&mut [f64])) {
    let slot = adj[v.0].get_or_insert_with(|| vec![0.0; len]);
    f(slot);
}

fn param_slot(pgrad: &mut [Option<Vec<f64>>], id: ParamId, len: usize) -> &mut [f64] {
    pgrad[id.index()].get_or_insert_with(|| vec![0.0; len])
}

/// Result of [`Tape::backward`].
pub struct Adjoints {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    /// Gradient with respect to a recorded node, `None` if no path reaches it.
    pub fn node(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].as_deref()
    }

    /// Parameter gradients laid out like `params`.
    pub fn param_grads(&self, params: &ParamSet) -> ParamSet {
        let mut out = params.zeros_like();
        for id in params.ids() {
            if let Some(g) = &self.params[id.index()] {
                for (dst, &src) in out.get_mut(id).data_mut().iter_mut().zip(g) {
                    *dst = src as f32;
                }
            }
        }
        out
    }
}
