//! The `spectrum` and `diagnose` subcommands, which work from a checkpoint.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use plasticity_core::continual::{measure_spectrum, Learner, Task};
use plasticity_core::diagnostics::{dead_census, hausdorff, persistence_indicator, DeadReport};
use plasticity_core::network::{MlpSpec, ParamVector};
use plasticity_core::numerics::{sym_eigen, RngStream};
use plasticity_core::spectral::{epsilon_rank_exact, exact_hessian, numeric_rank, smoothed_density, EXACT_HESSIAN_LIMIT};

use crate::config::{slq_with, RunConfig};
use crate::error::{LabError, LabResult};
use crate::formats::{write_dead_csv, write_density_csv, write_ritz_csv};
use crate::run::{build_stream, load_base, Checkpoint};

/// Key of the SLQ probe stream, shared with the training run.
const KEY_SPECTRUM: u64 = 5;

/// A checkpoint with its run config, learner and the task it refers to.
pub struct Loaded {
    pub cfg: RunConfig,
    pub learner: Learner,
    pub task: Task,
    pub next: Option<Task>,
}

/// Loads a checkpoint and the data of `task` (default: the last trained task).
pub fn load_checkpoint(path: &Path, task: Option<usize>) -> LabResult<Loaded> {
    let ck = Checkpoint::load(path)?;
    let cfg = ck.run_config()?;
    let learner = ck.restore(&cfg)?;
    let id = task.unwrap_or(ck.next_task.saturating_sub(1));
    if id >= cfg.experiment.n_tasks {
        return Err(LabError::Invalid(format!("task {id} is outside the run's {} tasks", cfg.experiment.n_tasks)));
    }
    let base = load_base(&cfg)?;
    let stream = build_stream(&cfg, base.as_ref())?;
    let next = if id + 1 < cfg.experiment.n_tasks { Some(stream.task(id + 1)?) } else { None };
    Ok(Loaded {
        task: stream.task(id)?,
        next,
        cfg,
        learner,
    })
}

#[derive(Debug, Clone)]
pub struct SpectrumArgs {
    pub checkpoint: PathBuf,
    pub task: Option<usize>,
    pub batch: usize,
    pub steps: usize,
    pub probes: usize,
    pub sigma2: Option<f64>,
    pub epsilon: f64,
    pub grid_points: usize,
    /// Also diagonalise the dense Hessian (small networks only).
    pub exact: bool,
    pub out: PathBuf,
}

/// SLQ density and ε-rank of the loss Hessian at the checkpoint, on the
/// first `batch` training rows of the task. Returns the summary text.
pub fn cmd_spectrum(a: &SpectrumArgs) -> LabResult<String> {
    let l = load_checkpoint(&a.checkpoint, a.task)?;
    let rows = a.batch.min(l.task.train.len()).max(1);
    let batch = l.task.train.slice(0, rows);
    let slq = slq_with(a.steps, a.probes, a.sigma2, a.grid_points);
    let rng = RngStream::new(l.cfg.experiment.seed).split(KEY_SPECTRUM).split(l.task.id as u64);
    let (report, est) = measure_spectrum(&l.learner, &batch, &slq, a.epsilon, &rng)?;

    fs::create_dir_all(&a.out)?;
    let stem = format!("spectrum_task_{:04}", l.task.id);
    write_density_csv(&a.out.join(format!("{stem}_density.csv")), &est.grid, &est.density)?;
    write_ritz_csv(&a.out.join(format!("{stem}_ritz.csv")), &est.probes)?;
    let p = l.learner.params.len();
    let mut s = String::new();
    let _ = writeln!(s, "task = {}", l.task.id);
    let _ = writeln!(s, "params = {p}");
    let _ = writeln!(s, "rows = {rows}");
    let _ = writeln!(s, "lanczos_steps = {}", est.steps);
    let _ = writeln!(s, "n_probes = {}", est.n_probes());
    let _ = writeln!(s, "sigma2 = {}", est.sigma2);
    let _ = writeln!(s, "epsilon = {}", a.epsilon);
    let _ = writeln!(s, "slq_eps_rank = {}", report.count);
    let _ = writeln!(s, "slq_eps_rank_norm = {}", report.normalized);
    if a.exact {
        if p > EXACT_HESSIAN_LIMIT {
            return Err(LabError::Invalid(format!(
                "exact spectrum needs at most {EXACT_HESSIAN_LIMIT} parameters, the network has {p}"
            )));
        }
        let eigs = sym_eigen(&exact_hessian(&l.learner.params, &batch)?)?;
        let exact = epsilon_rank_exact(&eigs, a.epsilon)?;
        let dens = smoothed_density(&eigs, est.sigma2, &est.grid);
        write_density_csv(&a.out.join(format!("{stem}_exact_density.csv")), &est.grid, &dens)?;
        let _ = writeln!(s, "exact_eps_rank = {}", exact.count);
        let _ = writeln!(s, "exact_eps_rank_norm = {}", exact.normalized);
    }
    fs::write(a.out.join(format!("{stem}.txt")), &s)?;
    Ok(s)
}

/// Parameters with a zero row in the Hessian because they touch a unit that
/// is strictly inactive on every input: its incoming weights, bias and
/// outgoing weights.
pub fn dead_parameter_set(spec: &MlpSpec, report: &DeadReport) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    for u in report.units.iter().filter(|u| u.margin.is_some_and(|m| m > 0.0)) {
        let (fan_in, _) = spec.layer_shape(u.layer);
        let off = spec.layer_offset(u.layer);
        let (_, width) = spec.layer_shape(u.layer);
        set.extend(off + u.index * fan_in..off + (u.index + 1) * fan_in);
        set.insert(off + width * fan_in + u.index);
        let next = u.layer + 1;
        let (next_in, next_out) = spec.layer_shape(next);
        let noff = spec.layer_offset(next);
        set.extend((0..next_out).map(|o| noff + o * next_in + u.index));
    }
    set
}

#[derive(Debug, Clone)]
pub struct DiagnoseArgs {
    pub checkpoint: PathBuf,
    pub task: Option<usize>,
    /// Also compute the numeric rank of the dense Hessian (small networks only).
    pub exact_rank: bool,
    pub out: PathBuf,
}

/// Dead-unit census on the task's eval inputs, the resulting Hessian rank
/// bound, and which first-layer dead units are guaranteed to stay dead on
/// the next task.
pub fn cmd_diagnose(a: &DiagnoseArgs) -> LabResult<String> {
    let l = load_checkpoint(&a.checkpoint, a.task)?;
    let params: &ParamVector = &l.learner.params;
    let spec = params.spec().clone();
    let report = dead_census(params, &l.task.eval.x)?;
    fs::create_dir_all(&a.out)?;
    write_dead_csv(&a.out.join(format!("dead_task_{:04}.csv", l.task.id)), l.task.id, &report)?;

    let zero = dead_parameter_set(&spec, &report);
    let p = params.len();
    let mut s = String::new();
    let _ = writeln!(s, "task = {}", l.task.id);
    let _ = writeln!(s, "params = {p}");
    for layer in 0..spec.num_hidden() {
        let _ = writeln!(s, "dead_layer_{layer} = {}", report.dead_in_layer(layer));
    }
    let margin_dead = report.units.iter().filter(|u| u.margin.is_some_and(|m| m > 0.0)).count();
    let _ = writeln!(s, "margin_dead = {margin_dead}");
    let _ = writeln!(s, "hessian_rank_bound = {}", p - zero.len());
    if a.exact_rank {
        if p > EXACT_HESSIAN_LIMIT {
            return Err(LabError::Invalid(format!(
                "exact rank needs at most {EXACT_HESSIAN_LIMIT} parameters, the network has {p}"
            )));
        }
        let rank = numeric_rank(&exact_hessian(params, &l.task.eval)?)?;
        let _ = writeln!(s, "hessian_rank = {rank}");
    }
    if let Some(next) = &l.next {
        let shift = hausdorff(&l.task.eval.x, &next.eval.x)?;
        let persist = report
            .units
            .iter()
            .filter(|u| u.layer == 0)
            .filter(|u| u.margin.is_some_and(|m| m > 0.0 && persistence_indicator(m, u.w_norm, shift)))
            .count();
        let _ = writeln!(s, "next_task_shift = {shift}");
        let _ = writeln!(s, "guaranteed_dead_next_task = {persist}");
    }
    fs::write(a.out.join(format!("diagnose_task_{:04}.txt", l.task.id)), &s)?;
    Ok(s)
}
