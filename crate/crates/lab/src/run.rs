//! Run directories: config snapshot, metrics.csv, records.jsonl, checkpoints
//! and optional spectra, written incrementally so a run can be resumed.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use plasticity_core::continual::{
    run_experiment, Algorithm, CbpState, Learner, OptimizerState, PermutedStream, RunRecord, SyntheticStream, TaskStream,
};
use plasticity_core::network::{Batch, ParamVector};
use plasticity_core::numerics::RngStream;
use serde::{Deserialize, Serialize};

use crate::config::{Environment, RunConfig};
use crate::error::{LabError, LabResult};
use crate::formats::{write_ritz_csv, write_density_csv};
use crate::idx;

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const CHECKPOINT_FILE: &str = "latest.json";
pub const SPECTRA_DIR: &str = "spectra";
pub const METRICS_HEADER: &str = "task,algorithm,seed,train_loss,eval_acc,dead_count,erank_mean,eps_rank_norm,wall_ms";
pub const RECORD_VERSION: u32 = 1;

/// Key of the data stream under the run seed; learners use keys 1 to 5.
const KEY_STREAM: u64 = 0;

/// Dataset directory: `PLAB_DATA`, then the config's `data_dir`, then `data/mnist`.
pub fn data_root(cfg: &RunConfig) -> PathBuf {
    std::env::var_os("PLAB_DATA")
        .map(PathBuf::from)
        .or_else(|| cfg.data_dir.clone())
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

/// MNIST train and test sets, shared between seeds.
#[derive(Clone)]
pub struct BaseData {
    pub train: Arc<Batch>,
    pub eval: Arc<Batch>,
}

pub fn load_base(cfg: &RunConfig) -> LabResult<Option<BaseData>> {
    if cfg.environment != Environment::PermutedMnist {
        return Ok(None);
    }
    let (train, eval) = idx::load_mnist(&data_root(cfg))?;
    Ok(Some(BaseData {
        train: Arc::new(train),
        eval: Arc::new(eval),
    }))
}

/// The task stream of one seed.
pub fn build_stream(cfg: &RunConfig, base: Option<&BaseData>) -> LabResult<Box<dyn TaskStream + Send + Sync>> {
    let rng = RngStream::new(cfg.experiment.seed).split(KEY_STREAM);
    let n = cfg.experiment.n_tasks;
    match cfg.environment {
        Environment::PermutedMnist => {
            let base = base.ok_or_else(|| LabError::MissingData("MNIST base data not loaded".into()))?;
            Ok(Box::new(PermutedStream::new(
                base.train.clone(),
                base.eval.clone(),
                n,
                cfg.samples_per_task,
                cfg.eval_size,
                rng,
            )?))
        }
        Environment::Synthetic => Ok(Box::new(SyntheticStream::new(
            cfg.synth_dim,
            cfg.synth_classes,
            n,
            cfg.samples_per_task,
            cfg.eval_size,
            rng,
        )?)),
        Environment::Toy => Err(LabError::Invalid("the toy environment has no task stream".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRankLine {
    pub epsilon: f64,
    pub count: usize,
    pub normalized: f64,
}

/// One line of records.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub v: u32,
    pub task: usize,
    pub algorithm: String,
    pub seed: u64,
    pub train_loss: f64,
    pub mean_loss: f64,
    pub online_acc: f64,
    pub eval_acc: f64,
    pub dead_count: Option<usize>,
    pub erank_per_layer: Vec<f64>,
    pub erank_mean: Option<f64>,
    pub eps_rank: Option<EpsRankLine>,
    pub er_updates: usize,
    pub spectrum: Option<String>,
    pub wall_ms: u64,
}

impl RecordLine {
    pub fn from_record(r: &RunRecord, spectrum: Option<String>, wall_ms: u64) -> Self {
        Self {
            v: RECORD_VERSION,
            task: r.task,
            algorithm: r.algorithm.name().to_string(),
            seed: r.seed,
            train_loss: r.train.final_loss,
            mean_loss: r.train.mean_loss,
            online_acc: r.train.online_acc,
            eval_acc: r.eval_acc,
            dead_count: r.dead_count,
            erank_per_layer: r.erank_per_layer.clone(),
            erank_mean: r.erank_mean(),
            eps_rank: r.eps_rank.map(|e| EpsRankLine {
                epsilon: e.epsilon,
                count: e.count,
                normalized: e.normalized,
            }),
            er_updates: r.train.er_updates,
            spectrum,
            wall_ms,
        }
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.task,
            self.algorithm,
            self.seed,
            self.train_loss,
            self.eval_acc,
            opt(self.dead_count.map(|d| d.to_string())),
            opt(self.erank_mean.map(|e| e.to_string())),
            opt(self.eps_rank.as_ref().map(|e| e.normalized.to_string())),
            self.wall_ms
        )
    }
}

/// Everything needed to continue a run after its last completed task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub v: u32,
    /// Config snapshot of the run that wrote this checkpoint.
    pub config: String,
    pub next_task: usize,
    pub steps_taken: u64,
    pub params: Vec<f64>,
    pub velocity: Vec<f64>,
    pub cbp_utility: Vec<Vec<f64>>,
    pub cbp_age: Vec<Vec<u64>>,
    pub cbp_residual: Vec<f64>,
    pub cbp_replaced: u64,
}

impl Checkpoint {
    pub fn capture(cfg: &RunConfig, learner: &Learner, next_task: usize) -> Self {
        Self {
            v: RECORD_VERSION,
            config: cfg.to_text(),
            next_task,
            steps_taken: learner.steps_taken,
            params: learner.params.as_slice().to_vec(),
            velocity: learner.opt.velocity.clone(),
            cbp_utility: learner.cbp.utility.clone(),
            cbp_age: learner.cbp.age.clone(),
            cbp_residual: learner.cbp.residual.clone(),
            cbp_replaced: learner.cbp.replaced,
        }
    }

    pub fn run_config(&self) -> LabResult<RunConfig> {
        RunConfig::parse(&self.config)
    }

    pub fn restore(&self, cfg: &RunConfig) -> LabResult<Learner> {
        let spec = cfg.experiment.spec()?;
        let params = ParamVector::from_flat(spec, self.params.clone())?;
        let opt = OptimizerState {
            velocity: self.velocity.clone(),
        };
        let cbp = CbpState {
            utility: self.cbp_utility.clone(),
            age: self.cbp_age.clone(),
            residual: self.cbp_residual.clone(),
            replaced: self.cbp_replaced,
        };
        Ok(Learner::from_parts(
            cfg.experiment.learner.clone(),
            cfg.experiment.seed,
            params,
            opt,
            cbp,
            self.steps_taken,
        )?)
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::MissingData(format!("{}: {e}", path.display())))?;
        let c: Checkpoint =
            serde_json::from_str(&text).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
        if c.v != RECORD_VERSION {
            return Err(LabError::Format(format!("checkpoint version {} not supported", c.v)));
        }
        Ok(c)
    }

    /// Written to a temporary file and renamed, so a crash never leaves a
    /// half-written checkpoint behind.
    pub fn save(&self, path: &Path) -> LabResult<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(self).map_err(|e| LabError::Format(e.to_string()))?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

pub fn read_records(path: &Path) -> LabResult<Vec<RecordLine>> {
    let f = File::open(path).map_err(|e| LabError::MissingData(format!("{}: {e}", path.display())))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|(i, l)| {
            let l = l?;
            serde_json::from_str(&l).map_err(|e| LabError::Format(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn rewrite_prefix(dir: &Path, keep: &[RecordLine]) -> LabResult<()> {
    let mut rec = File::create(dir.join(RECORDS_FILE))?;
    let mut met = File::create(dir.join(METRICS_FILE))?;
    writeln!(met, "{METRICS_HEADER}")?;
    for r in keep {
        writeln!(rec, "{}", serde_json::to_string(r).map_err(|e| LabError::Format(e.to_string()))?)?;
        writeln!(met, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Options of a single-seed run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub resume: bool,
    /// Stop after completing this task, as if interrupted.
    pub stop_after: Option<usize>,
}

/// Runs (or resumes) one seed of `cfg` into `dir`. Returns the records of
/// all tasks completed so far.
pub fn run_seed(cfg: &RunConfig, dir: &Path, base: Option<&BaseData>, opts: &RunOptions) -> LabResult<Vec<RecordLine>> {
    let ckpt_path = dir.join(CHECKPOINT_DIR).join(CHECKPOINT_FILE);
    let (mut learner, start, mut done) = if opts.resume && ckpt_path.exists() {
        let ck = Checkpoint::load(&ckpt_path)?;
        let saved = ck.run_config()?;
        if saved.experiment != cfg.experiment || saved.environment != cfg.environment {
            return Err(LabError::Invalid(format!("{} was written by a different config", ckpt_path.display())));
        }
        let mut done = read_records(&dir.join(RECORDS_FILE)).unwrap_or_default();
        done.retain(|r| r.task < ck.next_task);
        if done.len() != ck.next_task {
            return Err(LabError::Format(format!(
                "records.jsonl holds {} of the {} tasks in the checkpoint",
                done.len(),
                ck.next_task
            )));
        }
        rewrite_prefix(dir, &done)?;
        (ck.restore(cfg)?, ck.next_task, done)
    } else {
        fs::create_dir_all(dir)?;
        let _ = fs::remove_dir_all(dir.join(CHECKPOINT_DIR));
        let _ = fs::remove_dir_all(dir.join(SPECTRA_DIR));
        fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
        rewrite_prefix(dir, &[])?;
        let learner = Learner::new(cfg.experiment.spec()?, cfg.experiment.learner.clone(), cfg.experiment.seed)?;
        (learner, 0, Vec::new())
    };
    fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;

    let stream = build_stream(cfg, base)?;
    let mut exp = cfg.experiment.clone();
    if let Some(s) = opts.stop_after {
        exp.n_tasks = exp.n_tasks.min(s + 1);
    }
    let open = |name: &str| OpenOptions::new().append(true).open(dir.join(name));
    let mut rec_f = open(RECORDS_FILE)?;
    let mut met_f = open(METRICS_FILE)?;
    let mut failure: Option<LabError> = None;
    let mut clock = Instant::now();

    let outcome = run_experiment(&exp, stream.as_ref(), &mut learner, start, |r, l| {
        let mut step = || -> LabResult<()> {
            let spectrum = match &r.spectrum {
                Some(est) => {
                    let sdir = dir.join(SPECTRA_DIR);
                    fs::create_dir_all(&sdir)?;
                    let stem = format!("task_{:04}", r.task);
                    write_density_csv(&sdir.join(format!("{stem}_density.csv")), &est.grid, &est.density)?;
                    write_ritz_csv(&sdir.join(format!("{stem}_ritz.csv")), &est.probes)?;
                    Some(format!("{SPECTRA_DIR}/{stem}_density.csv"))
                }
                None => None,
            };
            let wall = if cfg.record_wall_clock { clock.elapsed().as_millis() as u64 } else { 0 };
            clock = Instant::now();
            let line = RecordLine::from_record(r, spectrum, wall);
            writeln!(rec_f, "{}", serde_json::to_string(&line).map_err(|e| LabError::Format(e.to_string()))?)?;
            writeln!(met_f, "{}", line.csv_row())?;
            rec_f.flush()?;
            met_f.flush()?;
            Checkpoint::capture(cfg, l, r.task + 1).save(&ckpt_path)?;
            done.push(line);
            Ok(())
        };
        step().map_err(|e| {
            let msg = e.to_string();
            failure = Some(e);
            plasticity_core::Error::Precondition(msg)
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    outcome?;
    Ok(done)
}

/// Directory of seed `i` of a run writing to `cfg.output_dir`.
pub fn seed_dir(cfg: &RunConfig, i: usize) -> PathBuf {
    if cfg.n_seeds == 1 {
        cfg.output_dir.clone()
    } else {
        cfg.output_dir.join(format!("seed_{}", cfg.experiment.seed + i as u64))
    }
}

/// All seeds of `cfg`, at most `parallel` at a time. Returns the records per seed.
pub fn run_all(cfg: &RunConfig, opts: &RunOptions, parallel: usize) -> LabResult<Vec<Vec<RecordLine>>> {
    if cfg.environment == Environment::Toy {
        return Err(LabError::Invalid("use the toy subcommand for the toy environment".into()));
    }
    let base = load_base(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    if cfg.n_seeds > 1 {
        fs::write(cfg.output_dir.join(CONFIG_FILE), cfg.to_text())?;
    }
    let jobs: Vec<(RunConfig, PathBuf)> = (0..cfg.n_seeds).map(|i| (cfg.for_seed(i), seed_dir(cfg, i))).collect();
    let parallel = parallel.max(1);
    let mut out = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(parallel) {
        let results: Vec<LabResult<Vec<RecordLine>>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(c, d)| s.spawn(|| run_seed(c, d, base.as_ref(), opts)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("seed run panicked")).collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

/// Parses an algorithm name, as a config error.
pub fn algorithm(name: &str) -> LabResult<Algorithm> {
    Algorithm::parse(name).ok_or_else(|| LabError::Invalid(format!("unknown agent {name:?}")))
}
