//! Task streams, learners and the per-task training loop.

mod experiment;
mod learner;
mod stream;

pub use experiment::{measure_spectrum, run_experiment, ExperimentConfig, MeasureConfig, RunRecord};
pub use learner::{
    cbp_maintenance, evaluate, reinit_unit, sgd_step, Algorithm, CbpConfig, CbpState, Learner, LearnerConfig,
    OptimizerState, SnpConfig, TaskMetrics,
};
pub use stream::{gather_permuted, unpermute, PermutedStream, SyntheticStream, Task, TaskStream, CLUSTER_SEPARATION};
