#![allow(dead_code)]

use std::sync::Arc;

use plasticity_core::network::{init_params, loss_grad, loss_value, Batch, Loss, MlpSpec, ParamVector, Targets};
use plasticity_core::numerics::{DenseMatrix, RngStream};

pub fn spec(dims: &[usize], loss: Loss) -> Arc<MlpSpec> {
    Arc::new(MlpSpec::new(dims.to_vec(), loss).unwrap())
}

/// Random parameters with small random biases so no unit sits exactly on a kink.
pub fn random_params(spec: &Arc<MlpSpec>, seed: u64) -> ParamVector {
    let mut rng = RngStream::new(seed);
    let mut p = init_params(spec, &mut rng);
    for l in 0..spec.num_layers() {
        let (_, b) = p.layer_mut(l);
        for v in b.iter_mut() {
            *v = 0.1 * rng.gaussian();
        }
    }
    p
}

pub fn random_batch(spec: &MlpSpec, n: usize, seed: u64) -> Batch {
    let mut rng = RngStream::new(seed);
    let x = DenseMatrix::from_fn(n, spec.input_dim(), |_, _| rng.gaussian());
    let k = spec.output_dim();
    let y = match spec.loss {
        Loss::SoftmaxCrossEntropy => Targets::Classes((0..n).map(|_| rng.below(k)).collect()),
        Loss::MeanSquaredError => Targets::Values(DenseMatrix::from_fn(n, k, |_, _| rng.gaussian())),
    };
    Batch::new(x, y).unwrap()
}

pub fn random_direction(params: &ParamVector, seed: u64) -> ParamVector {
    let mut rng = RngStream::new(seed);
    let mut v = params.zeros_like();
    for x in v.as_mut_slice() {
        *x = rng.gaussian();
    }
    v
}

pub fn fd_gradient(params: &ParamVector, batch: &Batch, h: f64) -> Vec<f64> {
    let mut p = params.clone();
    (0..params.len())
        .map(|i| {
            let orig = p.as_slice()[i];
            p.as_mut_slice()[i] = orig + h;
            let up = loss_value(&p, batch).unwrap();
            p.as_mut_slice()[i] = orig - h;
            let down = loss_value(&p, batch).unwrap();
            p.as_mut_slice()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central difference of the analytic gradient along `v`.
pub fn fd_hessian_vector(params: &ParamVector, batch: &Batch, v: &ParamVector, h: f64) -> Vec<f64> {
    let mut plus = params.clone();
    plus.axpy(h, v);
    let mut minus = params.clone();
    minus.axpy(-h, v);
    let (_, gp) = loss_grad(&plus, batch).unwrap();
    let (_, gm) = loss_grad(&minus, batch).unwrap();
    gp.as_slice().iter().zip(gm.as_slice()).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// max_i |a_i − b_i| / (1 + |b_i|)
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / (1.0 + y.abs())).fold(0.0, f64::max)
}

/// Naive per-sample forward pass written independently of the library.
pub fn naive_loss(spec: &MlpSpec, p: &[f64], batch: &Batch) -> f64 {
    let dims = spec.layer_dims();
    let n = batch.len();
    let mut total = 0.0;
    for s in 0..n {
        let mut act: Vec<f64> = batch.x.row(s).to_vec();
        let mut off = 0;
        for l in 0..dims.len() - 1 {
            let (fi, fo) = (dims[l], dims[l + 1]);
            let w = &p[off..off + fi * fo];
            let b = &p[off + fi * fo..off + fi * fo + fo];
            off += fo * (fi + 1);
            let mut next = vec![0.0; fo];
            for j in 0..fo {
                let mut z = b[j];
                for i in 0..fi {
                    z += w[j * fi + i] * act[i];
                }
                next[j] = if l + 2 < dims.len() { z.max(0.0) } else { z };
            }
            act = next;
        }
        match &batch.y {
            Targets::Classes(c) => {
                let m = act.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + act.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - act[c[s]];
            }
            Targets::Values(t) => {
                total += act.iter().zip(t.row(s)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
    }
    total / n as f64
}
