//! L2 and effective-rank regularisers plus the feature buffer the
//! effective-rank step drains.

mod erank;

use alloc::collections::VecDeque;
use alloc::vec::Vec;

pub use erank::{covariance_erank, effective_rank, effective_rank_from_singular_values, effective_rank_grad, ErankGradient};

use crate::error::{invalid, Error, Result};
use crate::network::{backward, forward, Batch, ParamVector};
use crate::numerics::DenseMatrix;

/// Hyper-parameters of the effective-rank step.
#[derive(Debug, Clone, PartialEq)]
pub struct ErankConfig {
    /// Step size of the effective-rank update.
    pub er_lr: f64,
    /// Steps between effective-rank updates; also the buffer capacity in batches.
    pub update_interval: usize,
    /// Gradient steps taken on the effective-rank loss at each update.
    pub steps_per_update: usize,
    /// Cap on the number of most recent stacked rows used per layer (0 = all).
    pub max_rows: usize,
    /// Hidden layers whose features are regularised (empty = all hidden layers).
    pub layer_select: Vec<usize>,
}

impl Default for ErankConfig {
    fn default() -> Self {
        Self {
            er_lr: 1e-3,
            update_interval: 8,
            steps_per_update: 1,
            max_rows: 0,
            layer_select: Vec::new(),
        }
    }
}

impl ErankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.er_lr >= 0.0) || !self.er_lr.is_finite() {
            return Err(invalid!("er_lr must be finite and non-negative"));
        }
        if self.update_interval == 0 {
            return Err(invalid!("effective-rank update interval must be at least 1"));
        }
        if self.steps_per_update == 0 {
            return Err(invalid!("effective-rank steps per update must be at least 1"));
        }
        Ok(())
    }

    /// Selected hidden layers for a network with `num_hidden` hidden layers.
    pub fn layers(&self, num_hidden: usize) -> Vec<usize> {
        if self.layer_select.is_empty() {
            (0..num_hidden).collect()
        } else {
            self.layer_select.clone()
        }
    }
}

/// Per-layer queues of recent hidden features together with the batches that
/// produced them. Holds at most `capacity` batches; the oldest is dropped.
#[derive(Debug, Clone)]
pub struct FeatureBuffer {
    capacity: usize,
    layers: Vec<usize>,
    features: Vec<VecDeque<DenseMatrix>>,
    batches: VecDeque<Batch>,
}

impl FeatureBuffer {
    pub fn new(capacity: usize, layers: Vec<usize>) -> Self {
        assert!(capacity >= 1, "buffer capacity must be positive");
        let features = layers.iter().map(|_| VecDeque::with_capacity(capacity + 1)).collect();
        Self {
            capacity,
            layers,
            features,
            batches: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    /// Number of buffered batches.
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// `features[i]` must belong to `layers()[i]`.
    pub fn enqueue(&mut self, batch: Batch, features: Vec<DenseMatrix>) {
        assert_eq!(features.len(), self.layers.len(), "one feature matrix per selected layer");
        for (q, f) in self.features.iter_mut().zip(features) {
            q.push_back(f);
            if q.len() > self.capacity {
                q.pop_front();
            }
        }
        self.batches.push_back(batch);
        if self.batches.len() > self.capacity {
            self.batches.pop_front();
        }
    }

    pub fn clear(&mut self) {
        for q in &mut self.features {
            q.clear();
        }
        self.batches.clear();
    }

    pub fn batches(&self) -> impl Iterator<Item = &Batch> {
        self.batches.iter()
    }

    /// Row-stacked features of the `i`-th selected layer.
    pub fn stacked(&self, i: usize) -> Result<DenseMatrix> {
        if self.features[i].is_empty() {
            return Err(Error::Precondition(alloc::format!(
                "feature buffer for layer {} is empty",
                self.layers[i]
            )));
        }
        DenseMatrix::vstack(self.features[i].iter())
    }
}

/// `−mean_ℓ ER(Stack(B_ℓ))` over the buffered layers, with the per-layer values.
pub fn erank_loss(buffer: &FeatureBuffer) -> Result<(f64, Vec<f64>)> {
    if buffer.layers().is_empty() {
        return Err(Error::Precondition("no layers selected".into()));
    }
    let per_layer = (0..buffer.layers().len())
        .map(|i| buffer.stacked(i).and_then(|f| effective_rank(&f)))
        .collect::<Result<Vec<f64>>>()?;
    let loss = -per_layer.iter().sum::<f64>() / per_layer.len() as f64;
    Ok((loss, per_layer))
}

/// Result of differentiating the effective-rank loss through the network.
#[derive(Debug, Clone)]
pub struct ErankStep {
    pub loss: f64,
    pub per_layer: Vec<f64>,
    pub grad: ParamVector,
    pub degenerate: bool,
}

fn keep_last_rows(m: DenseMatrix, cap: usize) -> (DenseMatrix, usize) {
    if cap == 0 || m.rows() <= cap {
        return (m, 0);
    }
    let skip = m.rows() - cap;
    let data = m.as_slice()[skip * m.cols()..].to_vec();
    (DenseMatrix::new(cap, m.cols(), data).expect("finite"), skip)
}

/// Gradient of the effective-rank loss with respect to θ. Features are
/// recomputed on `batches` with the current parameters, stacked per layer,
/// differentiated through the SVD and backpropagated into the network.
pub fn erank_param_grad(params: &ParamVector, batches: &[Batch], config: &ErankConfig) -> Result<ErankStep> {
    config.validate()?;
    if batches.is_empty() {
        return Err(Error::Precondition("effective-rank step needs at least one batch".into()));
    }
    let spec = params.spec().clone();
    let layers = config.layers(spec.num_hidden());
    if layers.is_empty() {
        return Err(Error::Precondition("network has no hidden layers to regularise".into()));
    }
    if let Some(&bad) = layers.iter().find(|&&l| l >= spec.num_hidden()) {
        return Err(invalid!("layer {} is not a hidden layer", bad));
    }

    let traces = batches
        .iter()
        .map(|b| forward(params, b).map(|(_, t)| t))
        .collect::<Result<Vec<_>>>()?;
    let scale = -1.0 / layers.len() as f64;

    let mut per_layer = Vec::with_capacity(layers.len());
    let mut degenerate = false;
    // per layer: gradient wrt the stacked rows, and how many leading rows were skipped
    let mut layer_grads: Vec<(DenseMatrix, usize)> = Vec::with_capacity(layers.len());
    for &l in &layers {
        let stacked = DenseMatrix::vstack(traces.iter().map(|t| &t.post[l]))?;
        let (f, skip) = keep_last_rows(stacked, config.max_rows);
        let g = effective_rank_grad(&f)?;
        per_layer.push(g.value);
        degenerate |= g.degenerate;
        layer_grads.push((g.grad.scaled(scale), skip));
    }
    let loss = scale * per_layer.iter().sum::<f64>();

    let mut grad = params.zeros_like();
    let mut row0 = 0;
    for trace in &traces {
        let rows = trace.input.rows();
        let mut injected: Vec<(usize, DenseMatrix)> = Vec::with_capacity(layers.len());
        for (&l, (g, skip)) in layers.iter().zip(&layer_grads) {
            let width = g.cols();
            let mut part = DenseMatrix::zeros(rows, width);
            for r in 0..rows {
                let global = row0 + r;
                if global >= *skip {
                    part.row_mut(r).copy_from_slice(g.row(global - skip));
                }
            }
            injected.push((l, part));
        }
        row0 += rows;
        if injected.iter().all(|(_, m)| m.as_slice().iter().all(|&v| v == 0.0)) {
            continue;
        }
        let refs: Vec<(usize, &DenseMatrix)> = injected.iter().map(|(l, m)| (*l, m)).collect();
        let (g, _) = backward(params, trace, None, &refs);
        grad.axpy(1.0, &g);
    }
    Ok(ErankStep {
        loss,
        per_layer,
        grad,
        degenerate,
    })
}

/// `λ‖θ‖²` and its gradient `2λθ`.
pub fn l2_penalty(params: &ParamVector, lambda: f64) -> (f64, ParamVector) {
    let mut grad = params.clone();
    grad.scale(2.0 * lambda);
    (lambda * params.dot(params), grad)
}
