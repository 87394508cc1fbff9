use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::{dot, DenseMatrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    KaimingUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean over the batch of the softmax cross-entropy.
    SoftmaxCrossEntropy,
    /// Mean over the batch of the summed squared error over outputs.
    MeanSquaredError,
}

/// Architecture of a fully-connected ReLU network `d_0 → d_1 → … → d_L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layer_dims: Vec<usize>,
    pub activation: Activation,
    pub init: Init,
    pub loss: Loss,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>, loss: Loss) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(invalid!("an MLP needs at least input and output dims"));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(invalid!("layer dims must be positive: {:?}", layer_dims));
        }
        Ok(Self {
            layer_dims,
            activation: Activation::Relu,
            init: Init::KaimingUniform,
            loss,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Number of dense (weight) layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn num_hidden(&self) -> usize {
        self.num_layers() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// `(fan_in, fan_out)` of dense layer `l` (0-based).
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.layer_dims[l], self.layer_dims[l + 1])
    }

    /// Total parameter count including biases.
    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Offset of layer `l`'s weight block in the flat vector; its bias block
    /// follows immediately after the `fan_out × fan_in` weights.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.layer_dims[..=l]
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }
}

/// Flat parameter vector with per-layer `(weights, bias)` views.
///
/// Layer `l` stores its `fan_out × fan_in` weight matrix row-major (row `j`
/// holds unit `j`'s incoming weights) followed by `fan_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    spec: Arc<MlpSpec>,
    flat: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(spec: Arc<MlpSpec>) -> Self {
        let n = spec.param_count();
        Self {
            spec,
            flat: vec![0.0; n],
        }
    }

    pub fn from_flat(spec: Arc<MlpSpec>, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(invalid!(
                "parameter vector has {} entries, spec needs {}",
                flat.len(),
                spec.param_count()
            ));
        }
        Ok(Self { spec, flat })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.spec.clone())
    }

    pub fn spec(&self) -> &Arc<MlpSpec> {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.flat
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        let (i, o) = self.spec.layer_shape(l);
        let off = self.spec.layer_offset(l);
        &self.flat[off..off + i * o]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let (i, o) = self.spec.layer_shape(l);
        let off = self.spec.layer_offset(l) + i * o;
        &self.flat[off..off + o]
    }

    /// Mutable `(weights, bias)` of layer `l`.
    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (i, o) = self.spec.layer_shape(l);
        let off = self.spec.layer_offset(l);
        let block = &mut self.flat[off..off + o * (i + 1)];
        block.split_at_mut(i * o)
    }

    pub fn weight_matrix(&self, l: usize) -> DenseMatrix {
        let (i, o) = self.spec.layer_shape(l);
        DenseMatrix::new(o, i, self.weights(l).to_vec()).expect("finite parameters")
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.flat, &other.flat)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn is_finite(&self) -> bool {
        self.flat.iter().all(|v| v.is_finite())
    }

    /// `self ← self + alpha·x`.
    pub fn axpy(&mut self, alpha: f64, x: &ParamVector) {
        crate::numerics::axpy(alpha, &x.flat, &mut self.flat);
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.flat {
            *v *= c;
        }
    }
}

/// Kaiming-uniform initialisation: weights `U(−√(6/fan_in), √(6/fan_in))`,
/// biases zero.
pub fn init_params(spec: &Arc<MlpSpec>, rng: &mut RngStream) -> ParamVector {
    let mut p = ParamVector::zeros(spec.clone());
    for l in 0..spec.num_layers() {
        let (fan_in, _) = spec.layer_shape(l);
        let bound = kaiming_bound(fan_in);
        let (w, _) = p.layer_mut(l);
        for v in w.iter_mut() {
            *v = rng.uniform(-bound, bound);
        }
    }
    p
}

pub fn kaiming_bound(fan_in: usize) -> f64 {
    libm::sqrt(6.0 / fan_in as f64)
}
