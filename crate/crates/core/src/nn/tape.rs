//! Reverse-mode automatic differentiation over dense `f64` vectors and matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! borrowed from a [`ParamStore`] and never copied; embedding rows gathered
//! with [`Tape::row`] produce row-sparse gradients so large lookup tables stay
//! cheap to differentiate.

use std::collections::BTreeMap;

use super::params::{ParamId, ParamStore};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Value {
    Owned(Vec<f64>),
    Param(ParamId),
}

#[derive(Debug)]
enum Op {
    Constant,
    Input,
    Param(ParamId),
    Row { param: ParamId, row: usize },
    MatVec { m: Var, x: Var },
    VecMat { x: Var, m: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRows { m: Var, v: Var },
    Affine { x: Var, a: f64 },
    ScaleBy { x: Var, s: Var },
    Elu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    StackRows(Vec<Var>),
    Dot(Var, Var),
    Sum(Var),
    Pick { x: Var, index: usize },
    ScatterAdd { x: Var, index: Vec<usize> },
    Clamp { x: Var, lo: f64, hi: f64 },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Value,
    op: Op,
}

/// Gradient of one parameter: either a dense buffer or a set of touched rows.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamGrad {
    Dense(Vec<f64>),
    Rows(BTreeMap<usize, Vec<f64>>),
}

/// Gradients for every parameter of a [`ParamStore`], indexed by [`ParamId`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    entries: Vec<Option<ParamGrad>>,
    cols: Vec<usize>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            entries: vec![None; store.len()],
            cols: store.iter().map(|(_, _, t)| t.cols).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&ParamGrad> {
        self.entries.get(id).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(Option::is_none)
    }

    /// Gradient of `id` expanded to a dense buffer of `len` scalars.
    pub fn dense(&self, id: ParamId, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        match self.get(id) {
            None => {}
            Some(ParamGrad::Dense(g)) => out.copy_from_slice(g),
            Some(ParamGrad::Rows(rows)) => {
                let c = self.cols[id];
                for (r, g) in rows {
                    out[r * c..(r + 1) * c].copy_from_slice(g);
                }
            }
        }
        out
    }

    fn add_dense(&mut self, id: ParamId, g: &[f64]) {
        match &mut self.entries[id] {
            slot @ None => *slot = Some(ParamGrad::Dense(g.to_vec())),
            Some(ParamGrad::Dense(d)) => add_into(d, g),
            Some(ParamGrad::Rows(_)) => {
                let mut d = self.dense(id, g.len());
                add_into(&mut d, g);
                self.entries[id] = Some(ParamGrad::Dense(d));
            }
        }
    }

    fn add_row(&mut self, id: ParamId, row: usize, g: &[f64]) {
        let c = self.cols[id];
        match &mut self.entries[id] {
            slot @ None => {
                let mut m = BTreeMap::new();
                m.insert(row, g.to_vec());
                *slot = Some(ParamGrad::Rows(m));
            }
            Some(ParamGrad::Dense(d)) => add_into(&mut d[row * c..(row + 1) * c], g),
            Some(ParamGrad::Rows(m)) => match m.get_mut(&row) {
                Some(existing) => add_into(existing, g),
                None => {
                    m.insert(row, g.to_vec());
                }
            },
        }
    }

    /// Adds `other` into `self`. Both must come from the same store.
    pub fn accumulate(&mut self, other: &Gradients) {
        if self.entries.is_empty() {
            *self = other.clone();
            return;
        }
        assert_eq!(self.entries.len(), other.entries.len());
        for (id, g) in other.entries.iter().enumerate() {
            match g {
                None => {}
                Some(ParamGrad::Dense(d)) => self.add_dense(id, d),
                Some(ParamGrad::Rows(rows)) => {
                    for (r, v) in rows {
                        self.add_row(id, *r, v);
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.entries.iter_mut().flatten() {
            match g {
                ParamGrad::Dense(d) => d.iter_mut().for_each(|v| *v *= k),
                ParamGrad::Rows(rows) => rows
                    .values_mut()
                    .for_each(|r| r.iter_mut().for_each(|v| *v *= k)),
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut s = 0.0;
        for g in self.entries.iter().flatten() {
            match g {
                ParamGrad::Dense(d) => s += d.iter().map(|v| v * v).sum::<f64>(),
                ParamGrad::Rows(rows) => {
                    s += rows
                        .values()
                        .flat_map(|r| r.iter())
                        .map(|v| v * v)
                        .sum::<f64>()
                }
            }
        }
        s.sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().flatten().all(|g| match g {
            ParamGrad::Dense(d) => d.iter().all(|v| v.is_finite()),
            ParamGrad::Rows(rows) => rows.values().flatten().all(|v| v.is_finite()),
        })
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamGrad)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (i, g)))
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Records a forward computation for later differentiation.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(1024),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].value {
            Value::Owned(d) => d,
            Value::Param(p) => &self.params.get(*p).data,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.len(), 1);
        val[0]
    }

    pub fn len(&self, v: Var) -> usize {
        self.nodes[v.0].rows * self.nodes[v.0].cols
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    /// A column vector that receives no gradient.
    pub fn constant(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(n, 1, data, Op::Constant)
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        self.push(rows, cols, data, Op::Constant)
    }

    /// A leaf vector whose gradient can be read back with
    /// [`Tape::backward_with_inputs`].
    pub fn input(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(n, 1, data, Op::Input)
    }

    /// Copies the value of `v` into a new constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let (r, c) = self.shape(v);
        let data = self.value(v).to_vec();
        self.push(r, c, data, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id] {
            return v;
        }
        let t = self.params.get(id);
        self.nodes.push(Node {
            rows: t.rows,
            cols: t.cols,
            value: Value::Param(id),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id] = Some(v);
        v
    }

    /// Gathers one row of a parameter matrix as a column vector.
    pub fn row(&mut self, id: ParamId, row: usize) -> Var {
        let t = self.params.get(id);
        assert!(row < t.rows, "row {row} out of range for {}", t.rows);
        let data = t.row(row).to_vec();
        let c = t.cols;
        self.push(c, 1, data, Op::Row { param: id, row })
    }

    pub fn matvec(&mut self, m: Var, x: Var) -> Var {
        let (r, c) = self.shape(m);
        assert_eq!(c, self.len(x), "matvec: {r}x{c} times {}", self.len(x));
        let mv = self.value(m);
        let xv = self.value(x);
        let out: Vec<f64> = (0..r)
            .map(|i| {
                mv[i * c..(i + 1) * c]
                    .iter()
                    .zip(xv)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        self.push(r, 1, out, Op::MatVec { m, x })
    }

    /// `xᵀ M` for `x` of length `rows(M)`.
    pub fn vecmat(&mut self, x: Var, m: Var) -> Var {
        let (r, c) = self.shape(m);
        assert_eq!(r, self.len(x), "vecmat: {} times {r}x{c}", self.len(x));
        let mv = self.value(m);
        let xv = self.value(x);
        let mut out = vec![0.0; c];
        for i in 0..r {
            let w = xv[i];
            if w == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(&mv[i * c..(i + 1) * c]) {
                *o += w * a;
            }
        }
        self.push(c, 1, out, Op::VecMat { x, m })
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        assert_eq!(self.len(a), self.len(b), "elementwise length mismatch");
        self.value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x + y);
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x - y);
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x * y);
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Mul(a, b))
    }

    /// Adds vector `v` to every row of matrix `m`.
    pub fn add_rows(&mut self, m: Var, v: Var) -> Var {
        let (r, c) = self.shape(m);
        assert_eq!(c, self.len(v), "add_rows width mismatch");
        let mv = self.value(m);
        let vv = self.value(v);
        let out: Vec<f64> = (0..r * c).map(|k| mv[k] + vv[k % c]).collect();
        self.push(r, c, out, Op::AddRows { m, v })
    }

    /// `a·x + b` elementwise with constant `a`, `b`.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|v| a * v + b).collect();
        let (r, c) = self.shape(x);
        self.push(r, c, out, Op::Affine { x, a })
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.affine(x, k, 0.0)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    /// Multiplies `x` by the scalar node `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Var {
        assert_eq!(self.len(s), 1, "scale_by expects a scalar");
        let k = self.scalar(s);
        let out: Vec<f64> = self.value(x).iter().map(|v| v * k).collect();
        let (r, c) = self.shape(x);
        self.push(r, c, out, Op::ScaleBy { x, s })
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|v| f(*v)).collect();
        let (r, c) = self.shape(x);
        self.push(r, c, out, op)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.map(x, elu, Op::Elu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.map(x, f64::ln, Op::Log(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, f64::exp, Op::Exp(x))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let out = softmax(self.value(x));
        let n = out.len();
        self.push(n, 1, out, Op::Softmax(x))
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let lse = log_sum_exp(xv);
        let out: Vec<f64> = xv.iter().map(|v| v - lse).collect();
        let n = out.len();
        self.push(n, 1, out, Op::LogSoftmax(x))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::with_capacity(parts.iter().map(|p| self.len(*p)).sum());
        for p in parts {
            out.extend_from_slice(self.value(*p));
        }
        let n = out.len();
        self.push(n, 1, out, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x)[start..start + len].to_vec();
        self.push(len, 1, out, Op::Slice { x, start })
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "stack_rows of nothing");
        let c = self.len(parts[0]);
        let mut out = Vec::with_capacity(c * parts.len());
        for p in parts {
            assert_eq!(self.len(*p), c, "stack_rows width mismatch");
            out.extend_from_slice(self.value(*p));
        }
        self.push(parts.len(), c, out, Op::StackRows(parts.to_vec()))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.len(a), self.len(b), "dot length mismatch");
        let s = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .sum();
        self.push(1, 1, vec![s], Op::Dot(a, b))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(x))
    }

    /// Sums a list of scalar nodes.
    pub fn sum_scalars(&mut self, xs: &[Var]) -> Var {
        let c = self.concat(xs);
        self.sum(c)
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Var {
        let v = self.value(x)[index];
        self.push(1, 1, vec![v], Op::Pick { x, index })
    }

    /// `out[index[k]] += x[k]` into a zero vector of length `size`.
    pub fn scatter_add(&mut self, x: Var, index: Vec<usize>, size: usize) -> Var {
        assert_eq!(self.len(x), index.len(), "scatter_add index length");
        let mut out = vec![0.0; size];
        for (v, &i) in self.value(x).iter().zip(&index) {
            out[i] += v;
        }
        self.push(size, 1, out, Op::ScatterAdd { x, index })
    }

    /// Backpropagates `d loss / d loss = 1` from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.len(loss), 1, "backward expects a scalar loss");
        self.backward_seeded(&[(loss, vec![1.0])])
    }

    /// Backpropagates from several nodes with caller-provided output gradients.
    pub fn backward_seeded(&self, seeds: &[(Var, Vec<f64>)]) -> Gradients {
        self.backward_with_inputs(seeds, &[]).0
    }

    /// Like [`Tape::backward_seeded`], also returning the gradient reaching
    /// each of `inputs` (zeros when none does).
    pub fn backward_with_inputs(
        &self,
        seeds: &[(Var, Vec<f64>)],
        inputs: &[Var],
    ) -> (Gradients, Vec<Vec<f64>>) {
        let mut captured: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut grads = Gradients::zeros_like(self.params);
        let mut node_grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        node_grads.resize_with(self.nodes.len(), || None);
        let mut last = 0;
        for (v, g) in seeds {
            assert_eq!(self.len(*v), g.len(), "seed gradient shape");
            accumulate(&mut node_grads[v.0], g);
            last = last.max(v.0);
        }
        for idx in (0..=last).rev() {
            let Some(g) = node_grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Input => {
                    captured.insert(idx, g);
                }
                Op::Param(p) => grads.add_dense(*p, &g),
                Op::Row { param, row } => grads.add_row(*param, *row, &g),
                Op::MatVec { m, x } => {
                    let (r, c) = self.shape(*m);
                    let mv = self.value(*m);
                    let xv = self.value(*x);
                    if self.needs_grad(*m) {
                        let mut dm = vec![0.0; r * c];
                        for i in 0..r {
                            if g[i] == 0.0 {
                                continue;
                            }
                            for j in 0..c {
                                dm[i * c + j] = g[i] * xv[j];
                            }
                        }
                        accumulate(&mut node_grads[m.0], &dm);
                    }
                    if self.needs_grad(*x) {
                        let mut dx = vec![0.0; c];
                        for i in 0..r {
                            let gi = g[i];
                            if gi == 0.0 {
                                continue;
                            }
                            for (d, a) in dx.iter_mut().zip(&mv[i * c..(i + 1) * c]) {
                                *d += gi * a;
                            }
                        }
                        accumulate(&mut node_grads[x.0], &dx);
                    }
                }
                Op::VecMat { x, m } => {
                    let (r, c) = self.shape(*m);
                    let mv = self.value(*m);
                    let xv = self.value(*x);
                    if self.needs_grad(*x) {
                        let dx: Vec<f64> = (0..r)
                            .map(|i| {
                                mv[i * c..(i + 1) * c]
                                    .iter()
                                    .zip(&g)
                                    .map(|(a, b)| a * b)
                                    .sum()
                            })
                            .collect();
                        accumulate(&mut node_grads[x.0], &dx);
                    }
                    if self.needs_grad(*m) {
                        let mut dm = vec![0.0; r * c];
                        for i in 0..r {
                            for j in 0..c {
                                dm[i * c + j] = xv[i] * g[j];
                            }
                        }
                        accumulate(&mut node_grads[m.0], &dm);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut node_grads[a.0], &g);
                    accumulate(&mut node_grads[b.0], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut node_grads[a.0], &g);
                    let ng: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(&mut node_grads[b.0], &ng);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let da: Vec<f64> = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                    let db: Vec<f64> = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    accumulate(&mut node_grads[a.0], &da);
                    accumulate(&mut node_grads[b.0], &db);
                }
                Op::AddRows { m, v } => {
                    let c = self.len(*v);
                    let mut dv = vec![0.0; c];
                    for (k, gv) in g.iter().enumerate() {
                        dv[k % c] += gv;
                    }
                    accumulate(&mut node_grads[m.0], &g);
                    accumulate(&mut node_grads[v.0], &dv);
                }
                Op::Affine { x, a } => {
                    let dx: Vec<f64> = g.iter().map(|v| v * a).collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::ScaleBy { x, s } => {
                    let k = self.scalar(*s);
                    let xv = self.value(*x);
                    let dx: Vec<f64> = g.iter().map(|v| v * k).collect();
                    let ds: f64 = g.iter().zip(xv).map(|(a, b)| a * b).sum();
                    accumulate(&mut node_grads[x.0], &dx);
                    accumulate(&mut node_grads[s.0], &[ds]);
                }
                Op::Elu(x) => {
                    let xv = self.value(*x);
                    let y = self.value(Var(idx));
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(xv.iter().zip(y))
                        .map(|(gv, (xi, yi))| if *xi > 0.0 { *gv } else { gv * (yi + 1.0) })
                        .collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Tanh(x) => {
                    let y = self.value(Var(idx));
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(gv, yi)| gv * (1.0 - yi * yi))
                        .collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Sigmoid(x) => {
                    let y = self.value(Var(idx));
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(gv, yi)| gv * yi * (1.0 - yi))
                        .collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Log(x) => {
                    let xv = self.value(*x);
                    let dx: Vec<f64> = g.iter().zip(xv).map(|(gv, xi)| gv / xi).collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Exp(x) => {
                    let y = self.value(Var(idx));
                    let dx: Vec<f64> = g.iter().zip(y).map(|(gv, yi)| gv * yi).collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = self.value(*x);
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(xv)
                        .map(|(gv, xi)| if *xi > *lo && *xi < *hi { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Softmax(x) => {
                    let y = self.value(Var(idx));
                    let gy: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    let dx: Vec<f64> = g.iter().zip(y).map(|(gv, yi)| yi * (gv - gy)).collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::LogSoftmax(x) => {
                    let y = self.value(Var(idx));
                    let gs: f64 = g.iter().sum();
                    let dx: Vec<f64> = g.iter().zip(y).map(|(gv, yi)| gv - yi.exp() * gs).collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.len(*p);
                        accumulate(&mut node_grads[p.0], &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Slice { x, start } => {
                    let n = self.len(*x);
                    let slot = &mut node_grads[x.0];
                    let buf = slot.get_or_insert_with(|| vec![0.0; n]);
                    for (k, gv) in g.iter().enumerate() {
                        buf[start + k] += gv;
                    }
                }
                Op::StackRows(parts) => {
                    let c = node.cols;
                    for (i, p) in parts.iter().enumerate() {
                        accumulate(&mut node_grads[p.0], &g[i * c..(i + 1) * c]);
                    }
                }
                Op::Dot(a, b) => {
                    let gv = g[0];
                    let da: Vec<f64> = self.value(*b).iter().map(|v| v * gv).collect();
                    let db: Vec<f64> = self.value(*a).iter().map(|v| v * gv).collect();
                    accumulate(&mut node_grads[a.0], &da);
                    accumulate(&mut node_grads[b.0], &db);
                }
                Op::Sum(x) => {
                    let n = self.len(*x);
                    accumulate(&mut node_grads[x.0], &vec![g[0]; n]);
                }
                Op::Pick { x, index } => {
                    let n = self.len(*x);
                    let buf = node_grads[x.0].get_or_insert_with(|| vec![0.0; n]);
                    buf[*index] += g[0];
                }
                Op::ScatterAdd { x, index } => {
                    let dx: Vec<f64> = index.iter().map(|&i| g[i]).collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
            }
        }
        let input_grads = inputs
            .iter()
            .map(|v| {
                captured
                    .remove(&v.0)
                    .unwrap_or_else(|| vec![0.0; self.len(*v)])
            })
            .collect();
        (grads, input_grads)
    }

    fn needs_grad(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].op, Op::Constant)
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(buf) => add_into(buf, g),
        None => *slot = Some(g.to_vec()),
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
