use alloc::vec;
use alloc::vec::Vec;

use super::params::{Loss, MlpSpec, ParamVector};
use crate::error::{invalid, Result};
use crate::numerics::{gemm, DenseMatrix, MatRef};

/// Supervision for a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(DenseMatrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Inputs (one sample per row) and their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: DenseMatrix,
    pub y: Targets,
}

impl Batch {
    pub fn new(x: DenseMatrix, y: Targets) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(invalid!("batch has {} inputs but {} targets", x.rows(), y.len()));
        }
        Ok(Self { x, y })
    }

    pub fn classification(x: DenseMatrix, labels: Vec<usize>) -> Result<Self> {
        Self::new(x, Targets::Classes(labels))
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Rows `idx` of this batch, in order.
    pub fn select(&self, idx: &[usize]) -> Batch {
        let d = self.x.cols();
        let mut xs = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            xs.extend_from_slice(self.x.row(i));
        }
        let x = DenseMatrix::new(idx.len(), d, xs).expect("rows of a finite matrix");
        let y = match &self.y {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => {
                let k = v.cols();
                let mut ys = Vec::with_capacity(idx.len() * k);
                for &i in idx {
                    ys.extend_from_slice(v.row(i));
                }
                Targets::Values(DenseMatrix::new(idx.len(), k, ys).expect("finite"))
            }
        };
        Batch { x, y }
    }

    pub fn slice(&self, start: usize, end: usize) -> Batch {
        let idx: Vec<usize> = (start..end).collect();
        self.select(&idx)
    }
}

/// Everything a forward pass produced for one batch.
///
/// `pre[l]` is layer `l`'s pre-activation `z_l` and `post[l]` its output
/// `h_l = relu(z_l)`; the last layer is linear so `post[L-1]` equals the
/// logits. The input to layer `l` is `input` for `l = 0` and `post[l-1]`
/// otherwise.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: DenseMatrix,
    pub pre: Vec<DenseMatrix>,
    pub post: Vec<DenseMatrix>,
}

impl ForwardTrace {
    pub fn num_layers(&self) -> usize {
        self.pre.len()
    }

    pub fn layer_input(&self, l: usize) -> &DenseMatrix {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }

    pub fn logits(&self) -> &DenseMatrix {
        self.post.last().expect("at least one layer")
    }
}

/// Multiply-add count of the dense products a pass performed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct OpCount(pub u64);

impl OpCount {
    #[inline]
    fn gemm(&mut self, m: usize, k: usize, n: usize) {
        self.0 += (m * k * n) as u64;
    }
}

fn validate(params: &ParamVector, batch: &Batch) -> Result<()> {
    let spec = params.spec();
    if batch.x.cols() != spec.input_dim() {
        return Err(invalid!(
            "batch input width {} does not match network input {}",
            batch.x.cols(),
            spec.input_dim()
        ));
    }
    if batch.is_empty() {
        return Err(invalid!("empty batch"));
    }
    match &batch.y {
        Targets::Classes(c) => {
            if spec.loss != Loss::SoftmaxCrossEntropy {
                return Err(invalid!("class targets need the cross-entropy loss"));
            }
            if let Some(&bad) = c.iter().find(|&&k| k >= spec.output_dim()) {
                return Err(invalid!("class index {} out of range for {} outputs", bad, spec.output_dim()));
            }
        }
        Targets::Values(v) => {
            if spec.loss != Loss::MeanSquaredError {
                return Err(invalid!("real-valued targets need the squared-error loss"));
            }
            if v.cols() != spec.output_dim() {
                return Err(invalid!("target width {} does not match output {}", v.cols(), spec.output_dim()));
            }
        }
    }
    Ok(())
}

// z = a · Wᵀ + b for a layer with weights stored fan_out × fan_in.
fn affine(a: &DenseMatrix, w: &[f64], b: Option<&[f64]>, fan_out: usize, ops: &mut OpCount) -> DenseMatrix {
    let (rows, fan_in) = (a.rows(), a.cols());
    let mut z = DenseMatrix::zeros(rows, fan_out);
    gemm(
        1.0,
        MatRef::row_major(a.as_slice(), rows, fan_in),
        MatRef::row_major(w, fan_out, fan_in).t(),
        0.0,
        z.as_mut_slice(),
    );
    ops.gemm(rows, fan_in, fan_out);
    if let Some(b) = b {
        for r in 0..rows {
            for (zv, bv) in z.row_mut(r).iter_mut().zip(b) {
                *zv += bv;
            }
        }
    }
    z
}

fn relu(z: &DenseMatrix) -> DenseMatrix {
    let mut h = z.clone();
    for v in h.as_mut_slice() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
    h
}

// Zeroes entries of `g` where the pre-activation is not strictly positive.
fn mask_relu(g: &mut DenseMatrix, z: &DenseMatrix) {
    for (gv, &zv) in g.as_mut_slice().iter_mut().zip(z.as_slice()) {
        if zv <= 0.0 {
            *gv = 0.0;
        }
    }
}

fn forward_impl(params: &ParamVector, x: &DenseMatrix, ops: &mut OpCount) -> ForwardTrace {
    let spec = params.spec();
    let n_layers = spec.num_layers();
    let mut pre = Vec::with_capacity(n_layers);
    let mut post: Vec<DenseMatrix> = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let a = if l == 0 { x } else { &post[l - 1] };
        let z = affine(a, params.weights(l), Some(params.bias(l)), spec.layer_shape(l).1, ops);
        let h = if l + 1 < n_layers { relu(&z) } else { z.clone() };
        pre.push(z);
        post.push(h);
    }
    ForwardTrace {
        input: x.clone(),
        pre,
        post,
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + libm::log(row.iter().map(|&v| libm::exp(v - m)).sum::<f64>())
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = libm::exp(v - m);
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// Mean loss and its gradient with respect to the logits.
fn loss_and_logit_grad(spec: &MlpSpec, logits: &DenseMatrix, y: &Targets) -> (f64, DenseMatrix) {
    let n = logits.rows();
    let k = logits.cols();
    let inv_n = 1.0 / n as f64;
    let mut g = DenseMatrix::zeros(n, k);
    let mut total = 0.0;
    match (spec.loss, y) {
        (Loss::SoftmaxCrossEntropy, Targets::Classes(labels)) => {
            for r in 0..n {
                let row = logits.row(r);
                total += log_sum_exp(row) - row[labels[r]];
                let gr = g.row_mut(r);
                softmax_row(row, gr);
                gr[labels[r]] -= 1.0;
                for v in gr.iter_mut() {
                    *v *= inv_n;
                }
            }
        }
        (Loss::MeanSquaredError, Targets::Values(t)) => {
            for r in 0..n {
                for c in 0..k {
                    let d = logits.get(r, c) - t.get(r, c);
                    total += d * d;
                    g.set(r, c, 2.0 * d * inv_n);
                }
            }
        }
        _ => unreachable!("validated target/loss pairing"),
    }
    (total * inv_n, g)
}

// Loss-Hessian (w.r.t. logits) applied to `rz`, row by row.
fn logit_hessian_apply(spec: &MlpSpec, logits: &DenseMatrix, rz: &DenseMatrix) -> DenseMatrix {
    let n = logits.rows();
    let k = logits.cols();
    let inv_n = 1.0 / n as f64;
    let mut out = DenseMatrix::zeros(n, k);
    match spec.loss {
        Loss::SoftmaxCrossEntropy => {
            let mut p = vec![0.0; k];
            for r in 0..n {
                softmax_row(logits.row(r), &mut p);
                let rr = rz.row(r);
                let pr: f64 = p.iter().zip(rr).map(|(a, b)| a * b).sum();
                for (o, (&pi, &ri)) in out.row_mut(r).iter_mut().zip(p.iter().zip(rr)) {
                    *o = (pi * ri - pi * pr) * inv_n;
                }
            }
        }
        Loss::MeanSquaredError => {
            for (o, &v) in out.as_mut_slice().iter_mut().zip(rz.as_slice()) {
                *o = 2.0 * v * inv_n;
            }
        }
    }
    out
}

/// Forward pass: mean loss and the full activation trace.
pub fn forward(params: &ParamVector, batch: &Batch) -> Result<(f64, ForwardTrace)> {
    forward_counted(params, batch).map(|(l, t, _)| (l, t))
}

pub fn forward_counted(params: &ParamVector, batch: &Batch) -> Result<(f64, ForwardTrace, OpCount)> {
    validate(params, batch)?;
    let mut ops = OpCount::default();
    let trace = forward_impl(params, &batch.x, &mut ops);
    let (loss, _) = loss_and_logit_grad(params.spec(), trace.logits(), &batch.y);
    Ok((loss, trace, ops))
}

/// Forward pass without targets; returns the logits.
pub fn predict(params: &ParamVector, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols() != params.spec().input_dim() {
        return Err(invalid!("input width {} does not match network input {}", x.cols(), params.spec().input_dim()));
    }
    let mut ops = OpCount::default();
    let mut t = forward_impl(params, x, &mut ops);
    Ok(t.post.pop().expect("at least one layer"))
}

/// Forward pass without targets; returns the whole trace.
pub fn activations(params: &ParamVector, x: &DenseMatrix) -> Result<ForwardTrace> {
    if x.cols() != params.spec().input_dim() {
        return Err(invalid!("input width {} does not match network input {}", x.cols(), params.spec().input_dim()));
    }
    let mut ops = OpCount::default();
    Ok(forward_impl(params, x, &mut ops))
}

/// Loss only, skipping the trace bookkeeping where possible.
pub fn loss_value(params: &ParamVector, batch: &Batch) -> Result<f64> {
    forward(params, batch).map(|(l, _)| l)
}

/// Per-layer gradients of a scalar with respect to each layer's
/// pre-activations, as produced by [`backward`].
#[derive(Debug, Clone)]
pub struct BackwardTrace {
    pub pre_grads: Vec<DenseMatrix>,
}

/// Backpropagates through `trace`. `output_grad` is the gradient at the
/// logits (if any) and `hidden_grads` lists extra gradients with respect to
/// hidden post-activations `h_l`, which are added on the way down.
pub fn backward(
    params: &ParamVector,
    trace: &ForwardTrace,
    output_grad: Option<&DenseMatrix>,
    hidden_grads: &[(usize, &DenseMatrix)],
) -> (ParamVector, BackwardTrace) {
    let mut ops = OpCount::default();
    backward_impl(params, trace, output_grad, hidden_grads, &mut ops)
}

fn backward_impl(
    params: &ParamVector,
    trace: &ForwardTrace,
    output_grad: Option<&DenseMatrix>,
    hidden_grads: &[(usize, &DenseMatrix)],
    ops: &mut OpCount,
) -> (ParamVector, BackwardTrace) {
    let spec = params.spec().clone();
    let n_layers = spec.num_layers();
    let rows = trace.input.rows();
    let mut grad = params.zeros_like();
    let mut pre_grads: Vec<DenseMatrix> = Vec::with_capacity(n_layers);

    let (_, out_dim) = spec.layer_shape(n_layers - 1);
    let mut delta = match output_grad {
        Some(g) => g.clone(),
        None => DenseMatrix::zeros(rows, out_dim),
    };
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = spec.layer_shape(l);
        let a = trace.layer_input(l);
        {
            let (gw, gb) = grad.layer_mut(l);
            gemm(
                1.0,
                MatRef::row_major(delta.as_slice(), rows, fan_out).t(),
                MatRef::row_major(a.as_slice(), rows, fan_in),
                0.0,
                gw,
            );
            ops.gemm(fan_out, rows, fan_in);
            for r in 0..rows {
                for (b, d) in gb.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
        }
        if l > 0 {
            let mut up = DenseMatrix::zeros(rows, fan_in);
            gemm(
                1.0,
                MatRef::row_major(delta.as_slice(), rows, fan_out),
                MatRef::row_major(params.weights(l), fan_out, fan_in),
                0.0,
                up.as_mut_slice(),
            );
            ops.gemm(rows, fan_out, fan_in);
            for (hl, g) in hidden_grads {
                if *hl == l - 1 {
                    crate::numerics::axpy(1.0, g.as_slice(), up.as_mut_slice());
                }
            }
            mask_relu(&mut up, &trace.pre[l - 1]);
            pre_grads.push(core::mem::replace(&mut delta, up));
        } else {
            pre_grads.push(core::mem::replace(&mut delta, DenseMatrix::zeros(0, 0)));
        }
    }
    pre_grads.reverse();
    (grad, BackwardTrace { pre_grads })
}

/// Mean loss and its gradient with respect to every parameter.
/// The ReLU derivative at exactly zero is taken as zero.
pub fn loss_grad(params: &ParamVector, batch: &Batch) -> Result<(f64, ParamVector)> {
    loss_grad_traced(params, batch).map(|(l, g, _, _)| (l, g))
}

/// As [`loss_grad`], also returning the forward and backward traces.
pub fn loss_grad_traced(
    params: &ParamVector,
    batch: &Batch,
) -> Result<(f64, ParamVector, ForwardTrace, BackwardTrace)> {
    let (loss, g, f, b, _) = loss_grad_counted(params, batch)?;
    Ok((loss, g, f, b))
}

pub fn loss_grad_counted(
    params: &ParamVector,
    batch: &Batch,
) -> Result<(f64, ParamVector, ForwardTrace, BackwardTrace, OpCount)> {
    validate(params, batch)?;
    let mut ops = OpCount::default();
    let trace = forward_impl(params, &batch.x, &mut ops);
    let (loss, g_out) = loss_and_logit_grad(params.spec(), trace.logits(), &batch.y);
    let (grad, bt) = backward_impl(params, &trace, Some(&g_out), &[], &mut ops);
    Ok((loss, grad, trace, bt, ops))
}

/// Exact Hessian-vector product `H·v` of the mean loss by forward-over-reverse
/// differentiation (Pearlmutter's R-operator). ReLU second derivatives are
/// zero, so the result is the Hessian wherever it exists.
pub fn hvp(params: &ParamVector, batch: &Batch, v: &ParamVector) -> Result<ParamVector> {
    hvp_counted(params, batch, v).map(|(h, _)| h)
}

pub fn hvp_counted(params: &ParamVector, batch: &Batch, v: &ParamVector) -> Result<(ParamVector, OpCount)> {
    validate(params, batch)?;
    if v.len() != params.len() {
        return Err(invalid!("direction has {} entries, parameters {}", v.len(), params.len()));
    }
    let spec = params.spec().clone();
    let n_layers = spec.num_layers();
    let rows = batch.len();
    let mut ops = OpCount::default();

    let trace = forward_impl(params, &batch.x, &mut ops);

    // R-forward: directional derivative of every pre-activation along v.
    let mut r_pre: Vec<DenseMatrix> = Vec::with_capacity(n_layers);
    let mut r_post: Vec<DenseMatrix> = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (fan_in, fan_out) = spec.layer_shape(l);
        let a = trace.layer_input(l);
        let mut rz = affine(a, v.weights(l), Some(v.bias(l)), fan_out, &mut ops);
        if l > 0 {
            gemm(
                1.0,
                MatRef::row_major(r_post[l - 1].as_slice(), rows, fan_in),
                MatRef::row_major(params.weights(l), fan_out, fan_in).t(),
                1.0,
                rz.as_mut_slice(),
            );
            ops.gemm(rows, fan_in, fan_out);
        }
        let mut rh = rz.clone();
        if l + 1 < n_layers {
            mask_relu(&mut rh, &trace.pre[l]);
        }
        r_pre.push(rz);
        r_post.push(rh);
    }

    let (_, mut delta) = loss_and_logit_grad(&spec, trace.logits(), &batch.y);
    let mut r_delta = logit_hessian_apply(&spec, trace.logits(), &r_pre[n_layers - 1]);

    let mut out = params.zeros_like();
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = spec.layer_shape(l);
        let a = trace.layer_input(l);
        {
            let (hw, hb) = out.layer_mut(l);
            // R(dW) = R(δ)ᵀ a + δᵀ R(a)
            gemm(
                1.0,
                MatRef::row_major(r_delta.as_slice(), rows, fan_out).t(),
                MatRef::row_major(a.as_slice(), rows, fan_in),
                0.0,
                hw,
            );
            ops.gemm(fan_out, rows, fan_in);
            if l > 0 {
                gemm(
                    1.0,
                    MatRef::row_major(delta.as_slice(), rows, fan_out).t(),
                    MatRef::row_major(r_post[l - 1].as_slice(), rows, fan_in),
                    1.0,
                    hw,
                );
                ops.gemm(fan_out, rows, fan_in);
            }
            for r in 0..rows {
                for (b, d) in hb.iter_mut().zip(r_delta.row(r)) {
                    *b += d;
                }
            }
        }
        if l == 0 {
            break;
        }
        // δ_{l-1} = (δ W) ⊙ relu'(z), R(δ_{l-1}) = (R(δ) W + δ V) ⊙ relu'(z)
        let mut up = DenseMatrix::zeros(rows, fan_in);
        gemm(
            1.0,
            MatRef::row_major(delta.as_slice(), rows, fan_out),
            MatRef::row_major(params.weights(l), fan_out, fan_in),
            0.0,
            up.as_mut_slice(),
        );
        ops.gemm(rows, fan_out, fan_in);
        let mut r_up = DenseMatrix::zeros(rows, fan_in);
        gemm(
            1.0,
            MatRef::row_major(r_delta.as_slice(), rows, fan_out),
            MatRef::row_major(params.weights(l), fan_out, fan_in),
            0.0,
            r_up.as_mut_slice(),
        );
        gemm(
            1.0,
            MatRef::row_major(delta.as_slice(), rows, fan_out),
            MatRef::row_major(v.weights(l), fan_out, fan_in),
            1.0,
            r_up.as_mut_slice(),
        );
        ops.gemm(rows, fan_out, fan_in);
        ops.gemm(rows, fan_out, fan_in);
        mask_relu(&mut up, &trace.pre[l - 1]);
        mask_relu(&mut r_up, &trace.pre[l - 1]);
        delta = up;
        r_delta = r_up;
    }
    Ok((out, ops))
}

/// Post-activation feature matrices of the requested hidden layers.
pub fn capture_features(trace: &ForwardTrace, layers: &[usize]) -> Result<Vec<DenseMatrix>> {
    let hidden = trace.num_layers() - 1;
    layers
        .iter()
        .map(|&l| {
            if l >= hidden {
                Err(invalid!("layer {} is not a hidden layer (network has {} hidden)", l, hidden))
            } else {
                Ok(trace.post[l].clone())
            }
        })
        .collect()
}
