use std::sync::Arc;

use super::array::{gemm, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Shared integer index array (edge endpoints, row selections).
pub type Index = Arc<[usize]>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Elementwise operation selector for [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Exp,
    LeakyRelu(f64),
    Sigmoid,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Exp(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Slice { src: Var, start: usize },
    Gather { src: Var, index: Index },
    SegmentSoftmax { scores: Var, segments: Index },
    SegmentWeightedSum { values: Var, weights: Var, segments: Index },
    BceWithLogits { logits: Var, targets: Arc<[f64]> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Exp(..) => "exp",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Scale(..) => "scale",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Reshape(..) => "reshape",
            Op::Slice { .. } => "slice",
            Op::Gather { .. } => "gather_rows",
            Op::SegmentSoftmax { .. } => "segment_softmax",
            Op::SegmentWeightedSum { .. } => "segment_weighted_sum",
            Op::BceWithLogits { .. } => "bce_with_logits",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of differentiable operations.
///
/// Nodes are appended in execution order, so the node list is already a
/// topological order. A tape supports exactly one backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric {
                op: op.name().to_string(),
            });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false)
    }

    /// Records a trainable input whose gradient is collected by `backward`.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 {
            return Err(Error::dim(
                "matmul",
                format!("expected matrices, got {:?} and {:?}", av.shape(), bv.shape()),
            ));
        }
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (k2, n) = (bv.shape()[0], bv.shape()[1]);
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("inner dimensions differ: {:?} · {:?}", av.shape(), bv.shape()),
            ));
        }
        let out = Tensor::matrix(m, n, gemm(av.data(), bv.data(), m, k, n))?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// Applies an elementwise operation. Binary ops take two arguments whose
    /// shapes are equal or where one side holds a single value.
    pub fn elementwise(&mut self, op: Elementwise, args: &[Var]) -> Result<Var> {
        match (op, args) {
            (Elementwise::Add, &[a, b]) => self.add(a, b),
            (Elementwise::Sub, &[a, b]) => self.sub(a, b),
            (Elementwise::Mul, &[a, b]) => self.mul(a, b),
            (Elementwise::Exp, &[a]) => self.exp(a),
            (Elementwise::LeakyRelu(s), &[a]) => self.leaky_relu(a, s),
            (Elementwise::Sigmoid, &[a]) => self.sigmoid(a),
            _ => Err(Error::Usage(format!(
                "{:?} called with {} arguments",
                op,
                args.len()
            ))),
        }
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else if bv.is_scalar_like() {
            let y = bv.item();
            let data = av.data().iter().map(|&x| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else if av.is_scalar_like() {
            let x = av.item();
            let data = bv.data().iter().map(|&y| f(x, y)).collect();
            Tensor::new(bv.shape().to_vec(), data)?
        } else {
            return Err(Error::dim(
                name,
                format!("incompatible shapes {:?} and {:?}", av.shape(), bv.shape()),
            ));
        };
        let rg = self.rg(&[a, b]);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary(a, |x| leaky(x, slope), Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// Multiplies by a fixed constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(Error::Usage("mean of an empty tensor".into()));
        }
        let m = av.sum() / av.len() as f64;
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(&[a]);
        self.push(out, Op::Reshape(a), rg)
    }

    /// Contiguous slice `[start, start + len)` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 1 || start + len > av.len() {
            return Err(Error::dim(
                "slice",
                format!("[{}, {}) out of range for {:?}", start, start + len, av.shape()),
            ));
        }
        let out = Tensor::vector(av.data()[start..start + len].to_vec());
        let rg = self.rg(&[a]);
        self.push(out, Op::Slice { src: a, start }, rg)
    }

    /// Selects rows of a matrix (or elements of a vector) by index, with repeats.
    pub fn gather_rows(&mut self, a: Var, index: Index) -> Result<Var> {
        let av = self.value(a);
        let (rows, cols) = av.dims2();
        if av.shape().is_empty() {
            return Err(Error::dim("gather_rows", "cannot gather from a scalar"));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::dim(
                "gather_rows",
                format!("index {} out of range for {} rows", bad, rows),
            ));
        }
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(av.row(i));
        }
        let shape = if av.shape().len() == 1 {
            vec![index.len()]
        } else {
            vec![index.len(), cols]
        };
        let out = Tensor::new(shape, data)?;
        let rg = self.rg(&[a]);
        self.push(out, Op::Gather { src: a, index }, rg)
    }

    /// Softmax of `scores[e]` within each group of entries sharing `segments[e]`.
    pub fn segment_softmax(&mut self, scores: Var, segments: Index) -> Result<Var> {
        let sv = self.value(scores);
        if sv.shape().len() != 1 || sv.len() != segments.len() {
            return Err(Error::dim(
                "segment_softmax",
                format!("{} segment ids for scores of shape {:?}", segments.len(), sv.shape()),
            ));
        }
        let n_seg = segments.iter().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (&s, &x) in segments.iter().zip(sv.data()) {
            if x > max[s] {
                max[s] = x;
            }
        }
        let mut denom = vec![0.0; n_seg];
        let mut out: Vec<f64> = Vec::with_capacity(sv.len());
        for (&s, &x) in segments.iter().zip(sv.data()) {
            if !max[s].is_finite() {
                return Err(Error::Numeric {
                    op: "segment_softmax".into(),
                });
            }
            let e = (x - max[s]).exp();
            denom[s] += e;
            out.push(e);
        }
        for (o, &s) in out.iter_mut().zip(segments.iter()) {
            *o /= denom[s];
        }
        let rg = self.rg(&[scores]);
        self.push(Tensor::vector(out), Op::SegmentSoftmax { scores, segments }, rg)
    }

    /// Row `i` of the `[n_rows × d]` result is `Σ_{e: segments[e] = i} weights[e] · values[e]`.
    pub fn segment_weighted_sum(
        &mut self,
        values: Var,
        weights: Var,
        segments: Index,
        n_rows: usize,
    ) -> Result<Var> {
        let (vv, wv) = (self.value(values), self.value(weights));
        let (e, d) = vv.dims2();
        if vv.shape().len() != 2 || wv.len() != e || segments.len() != e {
            return Err(Error::dim(
                "segment_weighted_sum",
                format!(
                    "values {:?}, weights {:?}, {} segment ids",
                    vv.shape(),
                    wv.shape(),
                    segments.len()
                ),
            ));
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= n_rows) {
            return Err(Error::dim(
                "segment_weighted_sum",
                format!("segment id {} out of range for {} rows", bad, n_rows),
            ));
        }
        let mut out = vec![0.0; n_rows * d];
        for (k, (&s, &w)) in segments.iter().zip(wv.data()).enumerate() {
            let orow = &mut out[s * d..(s + 1) * d];
            for (o, v) in orow.iter_mut().zip(vv.row(k)) {
                *o += w * v;
            }
        }
        let out = Tensor::matrix(n_rows, d, out)?;
        let rg = self.rg(&[values, weights]);
        self.push(
            out,
            Op::SegmentWeightedSum {
                values,
                weights,
                segments,
            },
            rg,
        )
    }

    /// Elementwise binary cross-entropy of logits against fixed 0/1 targets,
    /// in the overflow-safe form `max(x, 0) − x·y + ln(1 + e^{−|x|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<[f64]>) -> Result<Var> {
        let lv = self.value(logits);
        if lv.len() != targets.len() {
            return Err(Error::dim(
                "bce_with_logits",
                format!("{} logits vs {} targets", lv.len(), targets.len()),
            ));
        }
        let data = lv
            .data()
            .iter()
            .zip(targets.iter())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .collect();
        let out = Tensor::new(lv.shape().to_vec(), data)?;
        let rg = self.rg(&[logits]);
        self.push(out, Op::BceWithLogits { logits, targets }, rg)
    }

    /// Reverse pass from a single-value output.
    pub fn backward(&mut self, output: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Usage("backward already ran on this tape".into()));
        }
        if !self.value(output).is_scalar_like() {
            return Err(Error::Usage(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let out_shape = self.value(output).shape().to_vec();
        grads[output.0] = Some(Tensor::filled(&out_shape, 1.0));

        for id in (0..=output.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        // Reduces a broadcast gradient back onto an operand's shape.
        let fit = |v: Var, data: Vec<f64>| -> Tensor {
            let target = self.value(v);
            if target.len() == data.len() {
                Tensor::new(target.shape().to_vec(), data).expect("same length")
            } else {
                Tensor::new(target.shape().to_vec(), vec![data.iter().sum()]).expect("scalar")
            }
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.nodes[a.0].requires_grad {
                    let ga = gemm_nt(gd, bv.data(), m, n, k);
                    acc(*a, Tensor::matrix(m, k, ga)?);
                }
                if self.nodes[b.0].requires_grad {
                    let gb = gemm_tn(av.data(), gd, m, k, n);
                    acc(*b, Tensor::matrix(k, n, gb)?);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                acc(*a, fit(*a, gd.to_vec()));
                acc(*b, fit(*b, gd.iter().map(|x| sign * x).collect()));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let other = |o: &Tensor| -> Vec<f64> {
                    if o.len() == gd.len() {
                        gd.iter().zip(o.data()).map(|(g, x)| g * x).collect()
                    } else {
                        let x = o.item();
                        gd.iter().map(|g| g * x).collect()
                    }
                };
                let ga = other(bv);
                let gb = other(av);
                acc(*a, fit(*a, ga));
                acc(*b, fit(*b, gb));
            }
            Op::Exp(a) => {
                let d = gd.iter().zip(out.data()).map(|(g, y)| g * y).collect();
                acc(*a, fit(*a, d));
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let d = gd
                    .iter()
                    .zip(x.data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { g * slope })
                    .collect();
                acc(*a, fit(*a, d));
            }
            Op::Sigmoid(a) => {
                let d = gd
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                acc(*a, fit(*a, d));
            }
            Op::Scale(a, c) => {
                acc(*a, fit(*a, gd.iter().map(|g| g * c).collect()));
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                acc(*a, Tensor::filled(&shape, g.item()));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let shape = av.shape().to_vec();
                acc(*a, Tensor::filled(&shape, g.item() / av.len() as f64));
            }
            Op::Reshape(a) => {
                acc(*a, fit(*a, gd.to_vec()));
            }
            Op::Slice { src, start } => {
                let sv = self.value(*src);
                let mut d = vec![0.0; sv.len()];
                d[*start..*start + gd.len()].copy_from_slice(gd);
                acc(*src, Tensor::new(sv.shape().to_vec(), d)?);
            }
            Op::Gather { src, index } => {
                let sv = self.value(*src);
                let cols = sv.cols();
                let mut d = vec![0.0; sv.len()];
                for (r, &i) in index.iter().enumerate() {
                    let grow = &gd[r * cols..(r + 1) * cols];
                    for (o, gv) in d[i * cols..(i + 1) * cols].iter_mut().zip(grow) {
                        *o += gv;
                    }
                }
                acc(*src, Tensor::new(sv.shape().to_vec(), d)?);
            }
            Op::SegmentSoftmax { scores, segments } => {
                let y = out.data();
                let n_seg = segments.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg];
                for ((&s, gv), yv) in segments.iter().zip(gd).zip(y) {
                    dot[s] += gv * yv;
                }
                let d = segments
                    .iter()
                    .zip(gd)
                    .zip(y)
                    .map(|((&s, gv), yv)| yv * (gv - dot[s]))
                    .collect();
                acc(*scores, fit(*scores, d));
            }
            Op::SegmentWeightedSum {
                values,
                weights,
                segments,
            } => {
                let (vv, wv) = (self.value(*values), self.value(*weights));
                let d = vv.cols();
                if self.nodes[values.0].requires_grad {
                    let mut gv = vec![0.0; vv.len()];
                    for (k, (&s, &w)) in segments.iter().zip(wv.data()).enumerate() {
                        let grow = &gd[s * d..(s + 1) * d];
                        for (o, x) in gv[k * d..(k + 1) * d].iter_mut().zip(grow) {
                            *o = w * x;
                        }
                    }
                    acc(*values, Tensor::new(vv.shape().to_vec(), gv)?);
                }
                if self.nodes[weights.0].requires_grad {
                    let gw = segments
                        .iter()
                        .enumerate()
                        .map(|(k, &s)| {
                            vv.row(k)
                                .iter()
                                .zip(&gd[s * d..(s + 1) * d])
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect();
                    acc(*weights, Tensor::new(wv.shape().to_vec(), gw)?);
                }
            }
            Op::BceWithLogits { logits, targets } => {
                let x = self.value(*logits);
                let d = gd
                    .iter()
                    .zip(x.data())
                    .zip(targets.iter())
                    .map(|((g, &x), &y)| g * (sigmoid(x) - y))
                    .collect();
                acc(*logits, fit(*logits, d));
            }
        }
        Ok(())
    }
}
