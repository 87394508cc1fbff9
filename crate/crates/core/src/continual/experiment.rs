use alloc::sync::Arc;
use alloc::vec::Vec;

use super::learner::{evaluate, Algorithm, Learner, LearnerConfig, TaskMetrics};
use super::stream::TaskStream;
use crate::diagnostics::dead_census;
use crate::error::{invalid, Result};
use crate::network::{activations, Batch, Loss, MlpSpec};
use crate::numerics::{stats, RngStream};
use crate::regularizers::effective_rank;
use crate::spectral::{density_from_probes, epsilon_rank_slq, ritz_probes, EpsRankReport, HessianOperator, SlqConfig, SpectrumEstimate};

/// Which measurements a run takes, and how often.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureConfig {
    /// ε-rank (and optionally the density) at the start of every
    /// `spectrum_interval`-th task; 0 disables.
    pub spectrum_interval: usize,
    /// Training rows of the new task used for the Hessian.
    pub spectrum_batch: usize,
    pub slq: SlqConfig,
    pub epsilon: f64,
    /// Keep the smoothed density in the record, not just the ε-rank.
    pub keep_density: bool,
    /// Dead-unit census and feature effective rank on the eval set after training.
    pub census: bool,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            spectrum_interval: 2,
            spectrum_batch: 128,
            slq: SlqConfig {
                steps: 30,
                probes: 1,
                ..SlqConfig::default()
            },
            epsilon: 0.1,
            keep_density: false,
            census: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub layer_dims: Vec<usize>,
    pub learner: LearnerConfig,
    pub n_tasks: usize,
    pub steps_per_task: usize,
    pub seed: u64,
    pub measure: MeasureConfig,
}

impl ExperimentConfig {
    pub fn validate(&self, stream: &dyn TaskStream) -> Result<()> {
        self.learner.validate()?;
        if self.layer_dims.len() < 2 {
            return Err(invalid!("network needs at least an input and an output width"));
        }
        if self.layer_dims[0] != stream.input_dim() {
            return Err(invalid!("input width {} does not match data width {}", self.layer_dims[0], stream.input_dim()));
        }
        if *self.layer_dims.last().unwrap() < stream.num_classes() {
            return Err(invalid!("output width below the number of classes"));
        }
        if self.n_tasks > stream.n_tasks() {
            return Err(invalid!("stream has only {} tasks", stream.n_tasks()));
        }
        if self.measure.spectrum_interval > 0 && (self.measure.spectrum_batch == 0 || !(self.measure.epsilon > 0.0)) {
            return Err(invalid!("spectrum measurement needs a batch and a positive epsilon"));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<Arc<MlpSpec>> {
        Ok(Arc::new(MlpSpec::new(self.layer_dims.clone(), Loss::SoftmaxCrossEntropy)?))
    }
}

/// Per-task outcome of a run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub task: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub train: TaskMetrics,
    pub eval_acc: f64,
    pub dead_count: Option<usize>,
    pub erank_per_layer: Vec<f64>,
    /// ε-rank of the Hessian on the new task, before any training on it.
    pub eps_rank: Option<EpsRankReport>,
    pub spectrum: Option<SpectrumEstimate>,
}

impl RunRecord {
    pub fn erank_mean(&self) -> Option<f64> {
        (!self.erank_per_layer.is_empty()).then(|| stats::mean(&self.erank_per_layer))
    }
}

const KEY_SPECTRUM: u64 = 5;

/// SLQ ε-rank (and density) of the loss Hessian on `batch`.
pub fn measure_spectrum(
    learner: &Learner,
    batch: &Batch,
    slq: &SlqConfig,
    epsilon: f64,
    rng: &RngStream,
) -> Result<(EpsRankReport, SpectrumEstimate)> {
    let op = HessianOperator::new(&learner.params, batch)?;
    let p = learner.params.len();
    let probes = ritz_probes(&op, slq.steps, slq.probes, rng)?;
    let report = epsilon_rank_slq(&probes, epsilon, p)?;
    let est = density_from_probes(probes, slq, p)?;
    Ok((report, est))
}

/// Trains `learner` on tasks `start..config.n_tasks`, calling `on_record`
/// after each task. Stops at the first error, so every record passed out
/// belongs to a fully completed task.
pub fn run_experiment(
    config: &ExperimentConfig,
    stream: &dyn TaskStream,
    learner: &mut Learner,
    start: usize,
    mut on_record: impl FnMut(&RunRecord, &Learner) -> Result<()>,
) -> Result<()> {
    config.validate(stream)?;
    let seed = config.seed;
    let spectrum_rng = RngStream::new(seed).split(KEY_SPECTRUM);
    for id in start..config.n_tasks {
        let task = stream.task(id)?;
        learner.begin_task(id);

        let m = &config.measure;
        let (eps_rank, spectrum) = if m.spectrum_interval > 0 && id % m.spectrum_interval == 0 {
            let rows = m.spectrum_batch.min(task.train.len());
            let b = task.train.slice(0, rows);
            let (r, est) = measure_spectrum(learner, &b, &m.slq, m.epsilon, &spectrum_rng.split(id as u64))?;
            (Some(r), m.keep_density.then_some(est))
        } else {
            (None, None)
        };

        let train = learner.run_steps(&task, config.steps_per_task)?;
        let eval_acc = evaluate(&learner.params, &task.eval)?;
        let (dead_count, erank_per_layer) = if m.census {
            let rep = dead_census(&learner.params, &task.eval.x)?;
            let trace = activations(&learner.params, &task.eval.x)?;
            let nh = learner.params.spec().num_hidden();
            let er = (0..nh).map(|l| effective_rank(&trace.post[l])).collect::<Result<Vec<f64>>>()?;
            (Some(rep.dead_count()), er)
        } else {
            (None, Vec::new())
        };
        let record = RunRecord {
            task: id,
            algorithm: learner.config.algorithm,
            seed,
            train,
            eval_acc,
            dead_count,
            erank_per_layer,
            eps_rank,
            spectrum,
        };
        on_record(&record, learner)?;
    }
    Ok(())
}
