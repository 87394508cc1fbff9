//! ReLU multilayer perceptrons: parameters, forward and backward passes, and
//! exact Hessian-vector products.

mod mlp;
mod params;

pub use mlp::{
    activations, backward, capture_features, forward, forward_counted, hvp, hvp_counted, loss_grad, loss_grad_counted,
    loss_grad_traced, loss_value, predict, BackwardTrace, Batch, ForwardTrace, OpCount, Targets,
};
pub use params::{init_params, kaiming_bound, Activation, Init, Loss, MlpSpec, ParamVector};
