use alloc::sync::Arc;
use alloc::vec::Vec;

use super::stream::Task;
use crate::error::{invalid, Result};
use crate::network::{init_params, kaiming_bound, loss_grad_traced, predict, Batch, ForwardTrace, MlpSpec, ParamVector, Targets};
use crate::numerics::RngStream;
use crate::regularizers::{erank_param_grad, ErankConfig, FeatureBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Bp,
    L2,
    Er,
    L2Er,
    Cbp,
    Snp,
    Reset,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Bp,
        Algorithm::L2,
        Algorithm::Er,
        Algorithm::L2Er,
        Algorithm::Cbp,
        Algorithm::Snp,
        Algorithm::Reset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::L2 => "l2",
            Algorithm::Er => "er",
            Algorithm::L2Er => "l2_er",
            Algorithm::Cbp => "cbp",
            Algorithm::Snp => "snp",
            Algorithm::Reset => "reset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.name() == s)
    }

    pub fn uses_l2(self) -> bool {
        matches!(self, Algorithm::L2 | Algorithm::L2Er)
    }

    pub fn uses_erank(self) -> bool {
        matches!(self, Algorithm::Er | Algorithm::L2Er)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbpConfig {
    /// Expected replacements per mature unit per step.
    pub replacement_rate: f64,
    pub decay_rate: f64,
    /// Age in steps before a unit may be replaced.
    pub maturity_threshold: u64,
}

impl Default for CbpConfig {
    fn default() -> Self {
        Self {
            replacement_rate: 1e-6,
            decay_rate: 0.99,
            maturity_threshold: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnpConfig {
    pub shrink: f64,
    pub perturb_scale: f64,
}

impl Default for SnpConfig {
    fn default() -> Self {
        Self {
            shrink: 0.9,
            perturb_scale: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub max_grad_norm: f64,
    pub batch_size: usize,
    pub erank: ErankConfig,
    pub cbp: CbpConfig,
    pub snp: SnpConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Bp,
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 1e-3,
            max_grad_norm: 0.0,
            batch_size: 16,
            erank: ErankConfig::default(),
            cbp: CbpConfig::default(),
            snp: SnpConfig::default(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid!("lr must be positive"));
        }
        if !finite_nonneg(self.momentum) || self.momentum >= 1.0 {
            return Err(invalid!("momentum must lie in [0, 1)"));
        }
        if !finite_nonneg(self.weight_decay) || !finite_nonneg(self.max_grad_norm) {
            return Err(invalid!("weight_decay and max_grad_norm must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch size must be positive"));
        }
        self.erank.validate()?;
        let c = &self.cbp;
        if self.algorithm == Algorithm::Cbp
            && (!finite_nonneg(c.replacement_rate) || !(0.0..=1.0).contains(&c.decay_rate))
        {
            return Err(invalid!("cbp needs replacement_rate >= 0 and decay_rate in [0, 1]"));
        }
        if self.algorithm == Algorithm::Snp && (!finite_nonneg(self.snp.shrink) || !finite_nonneg(self.snp.perturb_scale)) {
            return Err(invalid!("snp needs non-negative shrink and perturb_scale"));
        }
        Ok(())
    }
}

/// Momentum buffer of the SGD optimiser.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<f64>,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            velocity: alloc::vec![0.0; len],
        }
    }
}

/// Clips `grad` to global norm `max_grad_norm` (0 = off), then applies
/// `v ← μv + g`, `θ ← θ − αv`. With `μ = 0` this is `θ ← θ − αg` and the
/// velocity is left untouched. Returns the norm of the applied gradient.
pub fn sgd_step(
    params: &mut ParamVector,
    grad: &mut ParamVector,
    state: &mut OptimizerState,
    lr: f64,
    momentum: f64,
    max_grad_norm: f64,
) -> f64 {
    let mut norm = grad.norm();
    if max_grad_norm > 0.0 && norm > max_grad_norm {
        grad.scale(max_grad_norm / norm);
        norm = max_grad_norm;
    }
    if momentum == 0.0 {
        params.axpy(-lr, grad);
    } else {
        for (v, &g) in state.velocity.iter_mut().zip(grad.as_slice()) {
            *v = momentum * *v + g;
        }
        for (p, &v) in params.as_mut_slice().iter_mut().zip(&state.velocity) {
            *p -= lr * v;
        }
    }
    norm
}

/// Per-hidden-unit utility and age for continual backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct CbpState {
    pub utility: Vec<Vec<f64>>,
    pub age: Vec<Vec<u64>>,
    /// Fractional expected replacements carried between steps, per layer.
    pub residual: Vec<f64>,
    pub replaced: u64,
}

impl CbpState {
    pub fn new(spec: &MlpSpec) -> Self {
        let widths: Vec<usize> = (0..spec.num_hidden()).map(|l| spec.layer_shape(l).1).collect();
        Self {
            utility: widths.iter().map(|&w| alloc::vec![0.0; w]).collect(),
            age: widths.iter().map(|&w| alloc::vec![0; w]).collect(),
            residual: alloc::vec![0.0; widths.len()],
            replaced: 0,
        }
    }
}

/// Re-draws the incoming weights of hidden unit `unit` in layer `layer` from
/// the initial distribution and zeroes its bias and outgoing weights.
pub fn reinit_unit(params: &mut ParamVector, state: &mut CbpState, layer: usize, unit: usize, rng: &mut RngStream) {
    let spec = params.spec().clone();
    let (fan_in, _) = spec.layer_shape(layer);
    let bound = kaiming_bound(fan_in);
    {
        let (w, b) = params.layer_mut(layer);
        for v in &mut w[unit * fan_in..(unit + 1) * fan_in] {
            *v = rng.uniform(-bound, bound);
        }
        b[unit] = 0.0;
    }
    let (next_in, next_out) = spec.layer_shape(layer + 1);
    let (w, _) = params.layer_mut(layer + 1);
    for k in 0..next_out {
        w[k * next_in + unit] = 0.0;
    }
    state.utility[layer][unit] = 0.0;
    state.age[layer][unit] = 0;
    state.replaced += 1;
}

/// One maintenance step: update utilities from `trace`, age every unit, and
/// replace the lowest-utility mature units as the residual counter allows.
pub fn cbp_maintenance(
    params: &mut ParamVector,
    trace: &ForwardTrace,
    state: &mut CbpState,
    config: &CbpConfig,
    rng: &mut RngStream,
) {
    let spec = params.spec().clone();
    let d = config.decay_rate;
    for l in 0..spec.num_hidden() {
        let h = &trace.post[l];
        let (_, width) = spec.layer_shape(l);
        let (next_in, next_out) = spec.layer_shape(l + 1);
        let w_next = params.weights(l + 1);
        let inv_n = 1.0 / h.rows() as f64;
        for j in 0..width {
            let act: f64 = (0..h.rows()).map(|r| h.get(r, j).abs()).sum::<f64>() * inv_n;
            let out: f64 = (0..next_out).map(|k| w_next[k * next_in + j].abs()).sum();
            state.utility[l][j] = d * state.utility[l][j] + (1.0 - d) * act * out;
            state.age[l][j] += 1;
        }
        let mature = state.age[l].iter().filter(|&&a| a >= config.maturity_threshold).count();
        state.residual[l] += config.replacement_rate * mature as f64;
        while state.residual[l] >= 1.0 {
            let pick = (0..width)
                .filter(|&j| state.age[l][j] >= config.maturity_threshold)
                .min_by(|&a, &b| state.utility[l][a].total_cmp(&state.utility[l][b]));
            let Some(j) = pick else { break };
            reinit_unit(params, state, l, j, rng);
            state.residual[l] -= 1.0;
        }
    }
}

/// Fraction of rows whose arg-max logit (lowest index on ties) equals the label.
pub fn evaluate(params: &ParamVector, batch: &Batch) -> Result<f64> {
    let Targets::Classes(labels) = &batch.y else {
        return Err(invalid!("accuracy needs class labels"));
    };
    if batch.is_empty() {
        return Err(invalid!("accuracy of an empty batch"));
    }
    let logits = predict(params, &batch.x)?;
    Ok(accuracy(&logits, labels))
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn accuracy(logits: &crate::numerics::DenseMatrix, labels: &[usize]) -> f64 {
    let hits = labels.iter().enumerate().filter(|&(r, &y)| argmax(logits.row(r)) == y).count();
    hits as f64 / labels.len() as f64
}

// Stream keys under the learner's root stream.
const KEY_INIT: u64 = 1;
const KEY_BATCHES: u64 = 2;
const KEY_CBP: u64 = 3;
const KEY_SNP: u64 = 4;

/// Summary of training on one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetrics {
    pub steps: usize,
    /// Mean minibatch loss over the task.
    pub mean_loss: f64,
    /// Mean minibatch loss over the last tenth of the steps.
    pub final_loss: f64,
    /// Accuracy on each minibatch before its update, averaged.
    pub online_acc: f64,
    pub er_updates: usize,
    pub last_erank_loss: Option<f64>,
    pub degenerate_er: usize,
}

/// Everything that evolves during a run.
#[derive(Debug, Clone)]
pub struct Learner {
    pub config: LearnerConfig,
    pub params: ParamVector,
    pub opt: OptimizerState,
    pub cbp: CbpState,
    pub steps_taken: u64,
    rng: RngStream,
}

impl Learner {
    /// Fresh learner; parameters come from the init stream of task 0.
    pub fn new(spec: Arc<MlpSpec>, config: LearnerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let rng = RngStream::new(seed);
        let params = init_params(&spec, &mut rng.split(KEY_INIT).split(0));
        Ok(Self {
            opt: OptimizerState::new(params.len()),
            cbp: CbpState::new(&spec),
            params,
            config,
            steps_taken: 0,
            rng,
        })
    }

    /// Rebuilds a learner from saved state.
    pub fn from_parts(
        config: LearnerConfig,
        seed: u64,
        params: ParamVector,
        opt: OptimizerState,
        cbp: CbpState,
        steps_taken: u64,
    ) -> Result<Self> {
        config.validate()?;
        if opt.velocity.len() != params.len() {
            return Err(invalid!("optimiser state does not match the parameters"));
        }
        Ok(Self {
            config,
            params,
            opt,
            cbp,
            steps_taken,
            rng: RngStream::new(seed),
        })
    }

    pub fn seed(&self) -> u64 {
        self.rng.seed()
    }

    /// The parameters a fresh network would have at task `id`.
    pub fn fresh_params(&self, id: usize) -> ParamVector {
        init_params(self.params.spec(), &mut self.rng.split(KEY_INIT).split(id as u64))
    }

    /// Task-boundary operations: reinitialisation for `reset`, shrink and
    /// perturb for `snp` (from the second task on).
    pub fn begin_task(&mut self, id: usize) {
        match self.config.algorithm {
            Algorithm::Reset => {
                self.params = self.fresh_params(id);
                self.opt = OptimizerState::new(self.params.len());
                self.cbp = CbpState::new(self.params.spec());
            }
            Algorithm::Snp if id > 0 => {
                let SnpConfig { shrink, perturb_scale } = self.config.snp;
                let mut r = self.rng.split(KEY_SNP).split(id as u64);
                for v in self.params.as_mut_slice() {
                    *v = shrink * *v + perturb_scale * r.gaussian();
                }
            }
            _ => {}
        }
    }

    /// [`Learner::begin_task`] followed by [`Learner::run_steps`].
    pub fn train_task(&mut self, task: &Task, steps: usize) -> Result<TaskMetrics> {
        self.begin_task(task.id);
        self.run_steps(task, steps)
    }

    /// `steps` minibatch updates on `task`. Minibatches walk through
    /// per-epoch shuffles of the training set drawn from the task's stream.
    pub fn run_steps(&mut self, task: &Task, steps: usize) -> Result<TaskMetrics> {
        let cfg = self.config.clone();
        let n = task.train.len();
        if n == 0 {
            return Err(invalid!("task {} has no training data", task.id));
        }
        let bs = cfg.batch_size.min(n);
        let spec = self.params.spec().clone();
        let use_er = cfg.algorithm.uses_erank() && cfg.erank.er_lr > 0.0;
        let layers = cfg.erank.layers(spec.num_hidden());
        let u = cfg.erank.update_interval;
        let mut buffer = FeatureBuffer::new(u, layers.clone());
        let batch_rng = self.rng.split(KEY_BATCHES).split(task.id as u64);
        let mut cbp_rng = self.rng.split(KEY_CBP).split(self.steps_taken);
        let mut order: Vec<usize> = Vec::new();
        let mut cursor = 0;
        let mut epoch = 0u64;

        let tail_from = steps - (steps / 10).max(1).min(steps);
        let (mut loss_sum, mut tail_sum, mut acc_sum) = (0.0, 0.0, 0.0);
        let mut metrics = TaskMetrics {
            steps,
            mean_loss: 0.0,
            final_loss: 0.0,
            online_acc: 0.0,
            er_updates: 0,
            last_erank_loss: None,
            degenerate_er: 0,
        };
        for i in 0..steps {
            if cursor + bs > order.len() {
                order = batch_rng.split(epoch).permutation(n);
                epoch += 1;
                cursor = 0;
            }
            let batch = task.train.select(&order[cursor..cursor + bs]);
            cursor += bs;

            let (loss, mut grad, trace, _) = loss_grad_traced(&self.params, &batch)?;
            if !loss.is_finite() {
                return Err(crate::Error::Precondition(alloc::format!(
                    "non-finite loss at step {} of task {}",
                    i,
                    task.id
                )));
            }
            loss_sum += loss;
            if i >= tail_from {
                tail_sum += loss;
            }
            if let Targets::Classes(y) = &batch.y {
                acc_sum += accuracy(trace.logits(), y);
            }
            if cfg.algorithm.uses_l2() && cfg.weight_decay > 0.0 {
                grad.axpy(2.0 * cfg.weight_decay, &self.params);
            }
            sgd_step(&mut self.params, &mut grad, &mut self.opt, cfg.lr, cfg.momentum, cfg.max_grad_norm);

            if use_er {
                let feats = layers.iter().map(|&l| trace.post[l].clone()).collect();
                buffer.enqueue(batch, feats);
                if (i + 1) % u == 0 {
                    let batches: Vec<Batch> = buffer.batches().cloned().collect();
                    for _ in 0..cfg.erank.steps_per_update {
                        let step = erank_param_grad(&self.params, &batches, &cfg.erank)?;
                        self.params.axpy(-cfg.erank.er_lr, &step.grad);
                        metrics.last_erank_loss = Some(step.loss);
                        metrics.degenerate_er += step.degenerate as usize;
                    }
                    metrics.er_updates += 1;
                    buffer.clear();
                }
            }
            if cfg.algorithm == Algorithm::Cbp {
                cbp_maintenance(&mut self.params, &trace, &mut self.cbp, &cfg.cbp, &mut cbp_rng);
            }
            self.steps_taken += 1;
        }
        if steps > 0 {
            metrics.mean_loss = loss_sum / steps as f64;
            metrics.final_loss = tail_sum / (steps - tail_from) as f64;
            metrics.online_acc = acc_sum / steps as f64;
        }
        Ok(metrics)
    }
}
