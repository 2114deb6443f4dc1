//! Compute graphs over dense matrices: forward evaluation and reverse-mode
//! gradients.
//!
//! A [`Graph`] is a static composition built once per model. Shapes are
//! checked at construction time; the bag dimension (instance count, which
//! varies per slide) stays symbolic via [`Dim::Bag`] and is bound when an
//! input is supplied. Execution is sequential and deterministic: the same
//! graph, parameters, and inputs always produce bit-identical outputs.

use super::mat::{matmul_t, Mat, Real};
use crate::{Error, Result};

/// A matrix dimension, either fixed or `N + k` where `N` is the per-bag
/// instance count bound at forward time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Fixed(usize),
    Bag(usize),
}

impl Dim {
    fn concat(self, other: Dim) -> Result<Dim> {
        match (self, other) {
            (Dim::Fixed(a), Dim::Fixed(b)) => Ok(Dim::Fixed(a + b)),
            (Dim::Fixed(a), Dim::Bag(k)) | (Dim::Bag(k), Dim::Fixed(a)) => Ok(Dim::Bag(k + a)),
            (Dim::Bag(_), Dim::Bag(_)) => Err(Error::Shape(
                "cannot concatenate two bag-sized dimensions".into(),
            )),
        }
    }
}

impl std::fmt::Display for Dim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dim::Fixed(v) => write!(f, "{v}"),
            Dim::Bag(0) => write!(f, "N"),
            Dim::Bag(k) => write!(f, "N+{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymShape {
    pub rows: Dim,
    pub cols: Dim,
}

impl SymShape {
    pub fn new(rows: Dim, cols: Dim) -> Self {
        SymShape { rows, cols }
    }
}

impl std::fmt::Display for SymShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Handle to a graph node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// How a parameter is initialized by [`init_params`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamInit {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))` with `fan_in = rows`,
    /// `fan_out = cols`.
    Xavier,
    /// All zeros (biases, shift terms).
    Zero,
    /// All ones (normalization scales).
    One,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamDecl {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: ParamInit,
}

#[derive(Clone, Copy, Debug)]
enum OpKind {
    Input(usize),
    Param(usize),
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    BiasAdd { x: NodeId, bias: NodeId },
    Add { a: NodeId, b: NodeId },
    Scale { x: NodeId, factor: f64 },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    RowSoftmax { x: NodeId },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId },
    Mul { a: NodeId, b: NodeId },
    MeanRows { x: NodeId },
    ConcatRows { a: NodeId, b: NodeId },
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Input(_) => "input",
            OpKind::Param(_) => "param",
            OpKind::MatMul { .. } => "matmul",
            OpKind::BiasAdd { .. } => "bias-add",
            OpKind::Add { .. } => "add",
            OpKind::Scale { .. } => "scale",
            OpKind::Tanh { .. } => "tanh",
            OpKind::Sigmoid { .. } => "sigmoid",
            OpKind::RowSoftmax { .. } => "row-softmax",
            OpKind::LayerNorm { .. } => "layer-norm",
            OpKind::Mul { .. } => "elementwise-product",
            OpKind::MeanRows { .. } => "mean-over-rows",
            OpKind::ConcatRows { .. } => "concat-rows",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: OpKind,
    shape: SymShape,
}

const LAYER_NORM_EPS: f64 = 1e-5;

/// Static compute graph. Nodes are appended in topological order by
/// construction; shape mismatches surface as [`Error::Shape`] from the
/// builder methods.
#[derive(Clone, Debug)]
pub struct Graph {
    name: String,
    nodes: Vec<Node>,
    input_shapes: Vec<SymShape>,
    params: Vec<ParamDecl>,
}

impl Graph {
    pub fn new(name: impl Into<String>) -> Self {
        Graph {
            name: name.into(),
            nodes: Vec::new(),
            input_shapes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn input_count(&self) -> usize {
        self.input_shapes.len()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn param_decls(&self) -> &[ParamDecl] {
        &self.params
    }

    pub fn shape(&self, id: NodeId) -> SymShape {
        self.nodes[id.0].shape
    }

    fn push(&mut self, op: OpKind, shape: SymShape) -> NodeId {
        self.nodes.push(Node { op, shape });
        NodeId(self.nodes.len() - 1)
    }

    fn get(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::Shape(format!("unknown node id {}", id.0)))
    }

    pub fn input(&mut self, rows: Dim, cols: Dim) -> NodeId {
        let idx = self.input_shapes.len();
        let shape = SymShape::new(rows, cols);
        self.input_shapes.push(shape);
        self.push(OpKind::Input(idx), shape)
    }

    pub fn param(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        init: ParamInit,
    ) -> NodeId {
        let idx = self.params.len();
        self.params.push(ParamDecl {
            name: name.into(),
            rows,
            cols,
            init,
        });
        self.push(
            OpKind::Param(idx),
            SymShape::new(Dim::Fixed(rows), Dim::Fixed(cols)),
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_t(a, b, false, false)
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId> {
        let sa = self.get(a)?.shape;
        let sb = self.get(b)?.shape;
        let (ra, ka) = if ta { (sa.cols, sa.rows) } else { (sa.rows, sa.cols) };
        let (kb, cb) = if tb { (sb.cols, sb.rows) } else { (sb.rows, sb.cols) };
        if ka != kb {
            return Err(Error::Shape(format!(
                "matmul inner dims differ: {sa} (ta={ta}) vs {sb} (tb={tb})"
            )));
        }
        Ok(self.push(OpKind::MatMul { a, b, ta, tb }, SymShape::new(ra, cb)))
    }

    pub fn bias_add(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let sx = self.get(x)?.shape;
        let sb = self.get(bias)?.shape;
        if sb.rows != Dim::Fixed(1) || sb.cols != sx.cols {
            return Err(Error::Shape(format!(
                "bias-add needs a 1x{} bias, got {sb}",
                sx.cols
            )));
        }
        Ok(self.push(OpKind::BiasAdd { x, bias }, sx))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.get(a)?.shape;
        let sb = self.get(b)?.shape;
        if sa != sb {
            return Err(Error::Shape(format!("add shapes differ: {sa} vs {sb}")));
        }
        Ok(self.push(OpKind::Add { a, b }, sa))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        let sx = self.get(x)?.shape;
        Ok(self.push(OpKind::Scale { x, factor }, sx))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.get(x)?.shape;
        Ok(self.push(OpKind::Tanh { x }, sx))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.get(x)?.shape;
        Ok(self.push(OpKind::Sigmoid { x }, sx))
    }

    pub fn row_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.get(x)?.shape;
        Ok(self.push(OpKind::RowSoftmax { x }, sx))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let sx = self.get(x)?.shape;
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            let sp = self.get(p)?.shape;
            if sp.rows != Dim::Fixed(1) || sp.cols != sx.cols {
                return Err(Error::Shape(format!(
                    "layer-norm {name} must be 1x{}, got {sp}",
                    sx.cols
                )));
            }
        }
        Ok(self.push(OpKind::LayerNorm { x, gamma, beta }, sx))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.get(a)?.shape;
        let sb = self.get(b)?.shape;
        if sa != sb {
            return Err(Error::Shape(format!(
                "elementwise-product shapes differ: {sa} vs {sb}"
            )));
        }
        Ok(self.push(OpKind::Mul { a, b }, sa))
    }

    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.get(x)?.shape;
        if sx.rows == Dim::Fixed(0) {
            return Err(Error::Shape("mean-over-rows of an empty matrix".into()));
        }
        Ok(self.push(
            OpKind::MeanRows { x },
            SymShape::new(Dim::Fixed(1), sx.cols),
        ))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.get(a)?.shape;
        let sb = self.get(b)?.shape;
        if sa.cols != sb.cols {
            return Err(Error::Shape(format!(
                "concat-rows column mismatch: {sa} vs {sb}"
            )));
        }
        let rows = sa.rows.concat(sb.rows)?;
        Ok(self.push(OpKind::ConcatRows { a, b }, SymShape::new(rows, sa.cols)))
    }
}

/// Node values recorded by a forward pass.
#[derive(Debug)]
pub struct TapeValues<T> {
    values: Vec<Mat<T>>,
    bag_n: usize,
}

impl<T: Real> TapeValues<T> {
    pub fn value(&self, id: NodeId) -> &Mat<T> {
        &self.values[id.0]
    }

    pub fn bag_n(&self) -> usize {
        self.bag_n
    }
}

fn bind_bag_n<T: Real>(g: &Graph, inputs: &[Mat<T>]) -> Result<usize> {
    let mut bound: Option<usize> = None;
    for (i, (shape, m)) in g.input_shapes.iter().zip(inputs).enumerate() {
        for (dim, actual) in [(shape.rows, m.rows()), (shape.cols, m.cols())] {
            match dim {
                Dim::Fixed(v) => {
                    if actual != v {
                        return Err(Error::Shape(format!(
                            "graph '{}': input {i} expects {shape}, got {}x{}",
                            g.name,
                            m.rows(),
                            m.cols()
                        )));
                    }
                }
                Dim::Bag(k) => {
                    if actual < k + 1 {
                        return Err(Error::Shape(format!(
                            "graph '{}': input {i} has {actual} along a bag dimension N+{k}; N must be >= 1",
                            g.name
                        )));
                    }
                    let n = actual - k;
                    match bound {
                        None => bound = Some(n),
                        Some(prev) if prev != n => {
                            return Err(Error::Shape(format!(
                                "graph '{}': inconsistent bag size across inputs ({prev} vs {n})",
                                g.name
                            )));
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    Ok(bound.unwrap_or(0))
}

/// Evaluate the graph. `params` must match the graph's parameter
/// declarations slot by slot; `inputs` match the declared inputs. Any
/// non-finite value aborts with [`Error::Numeric`] naming the node.
pub fn forward<T: Real>(g: &Graph, params: &[&Mat<T>], inputs: &[Mat<T>]) -> Result<TapeValues<T>> {
    if inputs.len() != g.input_shapes.len() {
        return Err(Error::Shape(format!(
            "graph '{}' expects {} inputs, got {}",
            g.name,
            g.input_shapes.len(),
            inputs.len()
        )));
    }
    if params.len() != g.params.len() {
        return Err(Error::Shape(format!(
            "graph '{}' expects {} params, got {}",
            g.name,
            g.params.len(),
            params.len()
        )));
    }
    for (decl, p) in g.params.iter().zip(params) {
        if p.rows() != decl.rows || p.cols() != decl.cols {
            return Err(Error::Shape(format!(
                "param '{}' must be {}x{}, got {}x{}",
                decl.name,
                decl.rows,
                decl.cols,
                p.rows(),
                p.cols()
            )));
        }
    }
    let bag_n = bind_bag_n(g, inputs)?;

    let mut values: Vec<Mat<T>> = Vec::with_capacity(g.nodes.len());
    for (idx, node) in g.nodes.iter().enumerate() {
        let out = eval_node(g, node, &values, params, inputs)?;
        if !out.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite value in graph '{}' at node {idx} ({})",
                g.name,
                node.op.name()
            )));
        }
        values.push(out);
    }
    Ok(TapeValues { values, bag_n })
}

fn eval_node<T: Real>(
    _g: &Graph,
    node: &Node,
    values: &[Mat<T>],
    params: &[&Mat<T>],
    inputs: &[Mat<T>],
) -> Result<Mat<T>> {
    let v = |id: NodeId| &values[id.0];
    Ok(match node.op {
        OpKind::Input(i) => inputs[i].clone(),
        OpKind::Param(i) => params[i].clone(),
        OpKind::MatMul { a, b, ta, tb } => matmul_t(v(a), v(b), ta, tb),
        OpKind::BiasAdd { x, bias } => {
            let x = v(x);
            let b = v(bias);
            let mut out = x.clone();
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                for (o, &bv) in row.iter_mut().zip(b.row(0)) {
                    *o += bv;
                }
            }
            out
        }
        OpKind::Add { a, b } => {
            let mut out = v(a).clone();
            for (o, &bv) in out.data_mut().iter_mut().zip(v(b).data()) {
                *o += bv;
            }
            out
        }
        OpKind::Scale { x, factor } => {
            let mut out = v(x).clone();
            for o in out.data_mut() {
                *o = T::from_f64(o.to_f64() * factor);
            }
            out
        }
        OpKind::Tanh { x } => {
            let mut out = v(x).clone();
            for o in out.data_mut() {
                *o = T::from_f64(o.to_f64().tanh());
            }
            out
        }
        OpKind::Sigmoid { x } => {
            let mut out = v(x).clone();
            for o in out.data_mut() {
                *o = T::from_f64(1.0 / (1.0 + (-o.to_f64()).exp()));
            }
            out
        }
        OpKind::RowSoftmax { x } => row_softmax(v(x)),
        OpKind::LayerNorm { x, gamma, beta } => layer_norm(v(x), v(gamma), v(beta)),
        OpKind::Mul { a, b } => {
            let mut out = v(a).clone();
            for (o, &bv) in out.data_mut().iter_mut().zip(v(b).data()) {
                *o = *o * bv;
            }
            out
        }
        OpKind::MeanRows { x } => mean_rows(v(x)),
        OpKind::ConcatRows { a, b } => {
            let a = v(a);
            let b = v(b);
            let mut data = Vec::with_capacity((a.rows() + b.rows()) * a.cols());
            data.extend_from_slice(a.data());
            data.extend_from_slice(b.data());
            Mat::from_vec(a.rows() + b.rows(), a.cols(), data)?
        }
    })
}

/// Numerically stable row softmax: max subtraction, `f64` exponentials and
/// row sums. Each output row sums to 1 and lies in `[0, 1]`.
pub fn row_softmax<T: Real>(x: &Mat<T>) -> Mat<T> {
    let mut out = Mat::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mut max = f64::NEG_INFINITY;
        for v in row {
            max = max.max(v.to_f64());
        }
        let mut sum = 0.0f64;
        let orow = out.row_mut(r);
        for (o, v) in orow.iter_mut().zip(row) {
            let e = (v.to_f64() - max).exp();
            sum += e;
            *o = T::from_f64(e);
        }
        for o in orow.iter_mut() {
            *o = T::from_f64(o.to_f64() / sum);
        }
    }
    out
}

fn layer_norm<T: Real>(x: &Mat<T>, gamma: &Mat<T>, beta: &Mat<T>) -> Mat<T> {
    let c = x.cols();
    let mut out = Mat::zeros(x.rows(), c);
    for r in 0..x.rows() {
        let row = x.row(r);
        let mut mean = 0.0f64;
        for v in row {
            mean += v.to_f64();
        }
        mean /= c as f64;
        let mut var = 0.0f64;
        for v in row {
            let d = v.to_f64() - mean;
            var += d * d;
        }
        var /= c as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let orow = out.row_mut(r);
        for j in 0..c {
            let xhat = (row[j].to_f64() - mean) * inv;
            orow[j] = T::from_f64(xhat * gamma.row(0)[j].to_f64() + beta.row(0)[j].to_f64());
        }
    }
    out
}

fn mean_rows<T: Real>(x: &Mat<T>) -> Mat<T> {
    let (r, c) = (x.rows(), x.cols());
    let mut acc = vec![0.0f64; c];
    for i in 0..r {
        for (a, v) in acc.iter_mut().zip(x.row(i)) {
            *a += v.to_f64();
        }
    }
    let inv = 1.0 / r as f64;
    let mut out = Mat::zeros(1, c);
    for (o, a) in out.row_mut(0).iter_mut().zip(&acc) {
        *o = T::from_f64(*a * inv);
    }
    out
}

fn add_into<T: Real>(dst: &mut Option<Mat<T>>, src: Mat<T>) {
    match dst {
        None => *dst = Some(src),
        Some(d) => {
            for (o, &s) in d.data_mut().iter_mut().zip(src.data()) {
                *o += s;
            }
        }
    }
}

/// Reverse pass. Seeds the output-side gradient `seed` at `seed_node` and
/// returns one gradient matrix per graph parameter, in declaration order.
/// Parameter values are read from the tape, so no parameter slice is needed.
pub fn backward<T: Real>(
    g: &Graph,
    tape: &TapeValues<T>,
    seed_node: NodeId,
    seed: Mat<T>,
) -> Result<Vec<Mat<T>>> {
    if seed.rows() != tape.values[seed_node.0].rows()
        || seed.cols() != tape.values[seed_node.0].cols()
    {
        return Err(Error::Shape("backward seed shape mismatch".into()));
    }
    let mut grads: Vec<Option<Mat<T>>> = vec![None; g.nodes.len()];
    grads[seed_node.0] = Some(seed);
    let mut param_grads: Vec<Mat<T>> = g
        .params
        .iter()
        .map(|d| Mat::zeros(d.rows, d.cols))
        .collect();

    for idx in (0..g.nodes.len()).rev() {
        let Some(dout) = grads[idx].take() else {
            continue;
        };
        let v = |id: NodeId| &tape.values[id.0];
        match g.nodes[idx].op {
            OpKind::Input(_) => {}
            OpKind::Param(i) => {
                for (o, &s) in param_grads[i].data_mut().iter_mut().zip(dout.data()) {
                    *o += s;
                }
            }
            OpKind::MatMul { a, b, ta, tb } => {
                // c = op_a(A) . op_b(B); propagate through each transpose case.
                let (da, db) = match (ta, tb) {
                    (false, false) => (
                        matmul_t(&dout, v(b), false, true),
                        matmul_t(v(a), &dout, true, false),
                    ),
                    (true, false) => (
                        matmul_t(v(b), &dout, false, true),
                        matmul_t(v(a), &dout, false, false),
                    ),
                    (false, true) => (
                        matmul_t(&dout, v(b), false, false),
                        matmul_t(&dout, v(a), true, false),
                    ),
                    (true, true) => (
                        matmul_t(v(b), &dout, true, true),
                        matmul_t(&dout, v(a), true, true),
                    ),
                };
                add_into(&mut grads[a.0], da);
                add_into(&mut grads[b.0], db);
            }
            OpKind::BiasAdd { x, bias } => {
                let mut dbias = Mat::zeros(1, dout.cols());
                let mut col_acc = vec![0.0f64; dout.cols()];
                for r in 0..dout.rows() {
                    for (a, g) in col_acc.iter_mut().zip(dout.row(r)) {
                        *a += g.to_f64();
                    }
                }
                for (o, a) in dbias.row_mut(0).iter_mut().zip(&col_acc) {
                    *o = T::from_f64(*a);
                }
                add_into(&mut grads[bias.0], dbias);
                add_into(&mut grads[x.0], dout);
            }
            OpKind::Add { a, b } => {
                add_into(&mut grads[a.0], dout.clone());
                add_into(&mut grads[b.0], dout);
            }
            OpKind::Scale { x, factor } => {
                let mut dx = dout;
                for o in dx.data_mut() {
                    *o = T::from_f64(o.to_f64() * factor);
                }
                add_into(&mut grads[x.0], dx);
            }
            OpKind::Tanh { x } => {
                let y = &tape.values[idx];
                let mut dx = dout;
                for (o, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
                    let yf = yv.to_f64();
                    *o = T::from_f64(o.to_f64() * (1.0 - yf * yf));
                }
                add_into(&mut grads[x.0], dx);
            }
            OpKind::Sigmoid { x } => {
                let y = &tape.values[idx];
                let mut dx = dout;
                for (o, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
                    let yf = yv.to_f64();
                    *o = T::from_f64(o.to_f64() * yf * (1.0 - yf));
                }
                add_into(&mut grads[x.0], dx);
            }
            OpKind::RowSoftmax { x } => {
                let y = &tape.values[idx];
                let mut dx = Mat::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let dr = dout.row(r);
                    let mut dot = 0.0f64;
                    for (yv, dv) in yr.iter().zip(dr) {
                        dot += yv.to_f64() * dv.to_f64();
                    }
                    for (o, (yv, dv)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(dr)) {
                        *o = T::from_f64(yv.to_f64() * (dv.to_f64() - dot));
                    }
                }
                add_into(&mut grads[x.0], dx);
            }
            OpKind::LayerNorm { x, gamma, beta } => {
                let xin = v(x);
                let gam = v(gamma);
                let c = xin.cols();
                let mut dx = Mat::zeros(xin.rows(), c);
                let mut dgamma = vec![0.0f64; c];
                let mut dbeta = vec![0.0f64; c];
                for r in 0..xin.rows() {
                    let row = xin.row(r);
                    let mut mean = 0.0f64;
                    for v in row {
                        mean += v.to_f64();
                    }
                    mean /= c as f64;
                    let mut var = 0.0f64;
                    for v in row {
                        let d = v.to_f64() - mean;
                        var += d * d;
                    }
                    var /= c as f64;
                    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    let dr = dout.row(r);
                    // dxhat plus the two row means needed for the input grad
                    let mut m1 = 0.0f64;
                    let mut m2 = 0.0f64;
                    let mut dxhat = vec![0.0f64; c];
                    for j in 0..c {
                        let xhat = (row[j].to_f64() - mean) * inv;
                        let dyj = dr[j].to_f64();
                        dgamma[j] += dyj * xhat;
                        dbeta[j] += dyj;
                        let dxh = dyj * gam.row(0)[j].to_f64();
                        dxhat[j] = dxh;
                        m1 += dxh;
                        m2 += dxh * xhat;
                    }
                    m1 /= c as f64;
                    m2 /= c as f64;
                    for j in 0..c {
                        let xhat = (row[j].to_f64() - mean) * inv;
                        dx.row_mut(r)[j] = T::from_f64(inv * (dxhat[j] - m1 - xhat * m2));
                    }
                }
                let mut dg = Mat::zeros(1, c);
                let mut db = Mat::zeros(1, c);
                for j in 0..c {
                    dg.row_mut(0)[j] = T::from_f64(dgamma[j]);
                    db.row_mut(0)[j] = T::from_f64(dbeta[j]);
                }
                add_into(&mut grads[gamma.0], dg);
                add_into(&mut grads[beta.0], db);
                add_into(&mut grads[x.0], dx);
            }
            OpKind::Mul { a, b } => {
                let mut da = dout.clone();
                for (o, &bv) in da.data_mut().iter_mut().zip(v(b).data()) {
                    *o = *o * bv;
                }
                let mut db = dout;
                for (o, &av) in db.data_mut().iter_mut().zip(v(a).data()) {
                    *o = *o * av;
                }
                add_into(&mut grads[a.0], da);
                add_into(&mut grads[b.0], db);
            }
            OpKind::MeanRows { x } => {
                let xin = v(x);
                let inv = 1.0 / xin.rows() as f64;
                let mut dx = Mat::zeros(xin.rows(), xin.cols());
                for r in 0..xin.rows() {
                    for (o, dv) in dx.row_mut(r).iter_mut().zip(dout.row(0)) {
                        *o = T::from_f64(dv.to_f64() * inv);
                    }
                }
                add_into(&mut grads[x.0], dx);
            }
            OpKind::ConcatRows { a, b } => {
                let ra = tape.values[a.0].rows();
                let cols = dout.cols();
                let da =
                    Mat::from_vec(ra, cols, dout.data()[..ra * cols].to_vec())?;
                let db = Mat::from_vec(
                    dout.rows() - ra,
                    cols,
                    dout.data()[ra * cols..].to_vec(),
                )?;
                add_into(&mut grads[a.0], da);
                add_into(&mut grads[b.0], db);
            }
        }
    }
    Ok(param_grads)
}
