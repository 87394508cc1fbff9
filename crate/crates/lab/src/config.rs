//! Plain `key = value` run configuration. One setting per line, `#` starts a
//! comment, unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::path::PathBuf;

use plasticity_core::continual::{Algorithm, ExperimentConfig, LearnerConfig, MeasureConfig};
use plasticity_core::spectral::{GridSpec, SlqConfig};
use plasticity_core::toyland::ToyConfig;

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    PermutedMnist,
    Synthetic,
    Toy,
}

impl Environment {
    pub fn name(self) -> &'static str {
        match self {
            Environment::PermutedMnist => "permuted_mnist",
            Environment::Synthetic => "synthetic",
            Environment::Toy => "toy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Environment::PermutedMnist, Environment::Synthetic, Environment::Toy]
            .into_iter()
            .find(|e| e.name() == s)
    }
}

/// Settings of the two-task toy landscape run.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySettings {
    pub theta0: [f64; 2],
    pub eta: f64,
    pub steps_per_task: usize,
    pub threshold: f64,
    pub raster_points: usize,
}

impl Default for ToySettings {
    fn default() -> Self {
        let c = ToyConfig::default();
        Self {
            theta0: c.theta0,
            eta: c.eta,
            steps_per_task: c.steps_per_task,
            threshold: c.threshold,
            raster_points: 81,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub environment: Environment,
    pub experiment: ExperimentConfig,
    pub n_seeds: usize,
    pub samples_per_task: usize,
    pub eval_size: usize,
    pub synth_dim: usize,
    pub synth_classes: usize,
    /// Dataset directory; `PLAB_DATA` takes precedence when set.
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Fill the wall_ms column (otherwise 0, which keeps reruns byte-identical).
    pub record_wall_clock: bool,
    pub toy: ToySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            environment: Environment::PermutedMnist,
            experiment: ExperimentConfig {
                layer_dims: vec![784, 100, 100, 10],
                learner: LearnerConfig::default(),
                n_tasks: 50,
                steps_per_task: 312,
                seed: 0,
                measure: MeasureConfig::default(),
            },
            n_seeds: 1,
            samples_per_task: 5000,
            eval_size: 1000,
            synth_dim: 20,
            synth_classes: 5,
            data_dir: None,
            output_dir: PathBuf::from("runs/default"),
            record_wall_clock: false,
            toy: ToySettings::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?} as a number"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_num(s.trim())).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let e = &mut self.experiment;
        let l = &mut e.learner;
        let m = &mut e.measure;
        match key {
            "environment" => self.environment = Environment::parse(v).ok_or_else(|| format!("unknown environment {v:?}"))?,
            "agent" => l.algorithm = Algorithm::parse(v).ok_or_else(|| format!("unknown agent {v:?}"))?,
            "layer_dims" => e.layer_dims = parse_list(v)?,
            "num_tasks" => e.n_tasks = parse_num(v)?,
            "steps_per_task" => e.steps_per_task = parse_num(v)?,
            "seed" => e.seed = parse_num(v)?,
            "n_seeds" => self.n_seeds = parse_num(v)?,
            "samples_per_task" => self.samples_per_task = parse_num(v)?,
            "eval_size" => self.eval_size = parse_num(v)?,
            "synth_dim" => self.synth_dim = parse_num(v)?,
            "synth_classes" => self.synth_classes = parse_num(v)?,
            "data_dir" => self.data_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "record_wall_clock" => self.record_wall_clock = parse_bool(v)?,

            "lr" => l.lr = parse_num(v)?,
            "momentum" => l.momentum = parse_num(v)?,
            "weight_decay" => l.weight_decay = parse_num(v)?,
            "max_grad_norm" => l.max_grad_norm = parse_num(v)?,
            "mini_batch_size" => l.batch_size = parse_num(v)?,
            "er_lr" => l.erank.er_lr = parse_num(v)?,
            "er_batch" => l.erank.update_interval = parse_num(v)?,
            "er_step" => l.erank.steps_per_update = parse_num(v)?,
            "er_max_rows" => l.erank.max_rows = parse_num(v)?,
            "er_layers" => {
                l.erank.layer_select = if v == "all" { Vec::new() } else { parse_list(v)? };
            }
            "replacement_rate" => l.cbp.replacement_rate = parse_num(v)?,
            "decay_rate" => l.cbp.decay_rate = parse_num(v)?,
            "maturity_threshold" => l.cbp.maturity_threshold = parse_num(v)?,
            "shrink" => l.snp.shrink = parse_num(v)?,
            "perturb_scale" => l.snp.perturb_scale = parse_num(v)?,

            "compute_hessian_interval" => m.spectrum_interval = parse_num(v)?,
            "compute_hessian_size" => m.spectrum_batch = parse_num(v)?,
            "lanczos_steps" => m.slq.steps = parse_num(v)?,
            "n_probes" => m.slq.probes = parse_num(v)?,
            "sigma2" => m.slq.sigma2 = if v == "auto" { None } else { Some(parse_num(v)?) },
            "grid_points" => m.slq.grid = GridSpec::Auto { points: parse_num(v)? },
            "epsilon" => m.epsilon = parse_num(v)?,
            "keep_density" => m.keep_density = parse_bool(v)?,
            "census" => m.census = parse_bool(v)?,

            "toy_theta0" => {
                let xs: Vec<f64> = parse_list(v)?;
                self.toy.theta0 = <[f64; 2]>::try_from(xs).map_err(|_| "toy_theta0 needs two numbers".to_string())?;
            }
            "toy_eta" => self.toy.eta = parse_num(v)?,
            "toy_steps_per_task" => self.toy.steps_per_task = parse_num(v)?,
            "toy_threshold" => self.toy.threshold = parse_num(v)?,
            "toy_raster_points" => self.toy.raster_points = parse_num(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Every setting in a fixed order; [`RunConfig::parse`] inverts it.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let e = &self.experiment;
        let l = &e.learner;
        let m = &e.measure;
        let grid_points = match m.slq.grid {
            GridSpec::Auto { points } | GridSpec::Range { points, .. } => points,
        };
        vec![
            ("environment", self.environment.name().into()),
            ("agent", l.algorithm.name().into()),
            ("layer_dims", join(&e.layer_dims)),
            ("num_tasks", e.n_tasks.to_string()),
            ("steps_per_task", e.steps_per_task.to_string()),
            ("seed", e.seed.to_string()),
            ("n_seeds", self.n_seeds.to_string()),
            ("samples_per_task", self.samples_per_task.to_string()),
            ("eval_size", self.eval_size.to_string()),
            ("synth_dim", self.synth_dim.to_string()),
            ("synth_classes", self.synth_classes.to_string()),
            ("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("output_dir", self.output_dir.display().to_string()),
            ("record_wall_clock", self.record_wall_clock.to_string()),
            ("lr", l.lr.to_string()),
            ("momentum", l.momentum.to_string()),
            ("weight_decay", l.weight_decay.to_string()),
            ("max_grad_norm", l.max_grad_norm.to_string()),
            ("mini_batch_size", l.batch_size.to_string()),
            ("er_lr", l.erank.er_lr.to_string()),
            ("er_batch", l.erank.update_interval.to_string()),
            ("er_step", l.erank.steps_per_update.to_string()),
            ("er_max_rows", l.erank.max_rows.to_string()),
            (
                "er_layers",
                if l.erank.layer_select.is_empty() { "all".into() } else { join(&l.erank.layer_select) },
            ),
            ("replacement_rate", l.cbp.replacement_rate.to_string()),
            ("decay_rate", l.cbp.decay_rate.to_string()),
            ("maturity_threshold", l.cbp.maturity_threshold.to_string()),
            ("shrink", l.snp.shrink.to_string()),
            ("perturb_scale", l.snp.perturb_scale.to_string()),
            ("compute_hessian_interval", m.spectrum_interval.to_string()),
            ("compute_hessian_size", m.spectrum_batch.to_string()),
            ("lanczos_steps", m.slq.steps.to_string()),
            ("n_probes", m.slq.probes.to_string()),
            ("sigma2", m.slq.sigma2.map(|s| s.to_string()).unwrap_or_else(|| "auto".into())),
            ("grid_points", grid_points.to_string()),
            ("epsilon", m.epsilon.to_string()),
            ("keep_density", m.keep_density.to_string()),
            ("census", m.census.to_string()),
            ("toy_theta0", join(&self.toy.theta0)),
            ("toy_eta", self.toy.eta.to_string()),
            ("toy_steps_per_task", self.toy.steps_per_task.to_string()),
            ("toy_threshold", self.toy.threshold.to_string()),
            ("toy_raster_points", self.toy.raster_points.to_string()),
        ]
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> LabResult<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| LabError::Config { line, msg: format!("expected key = value, got {body:?}") })?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(LabError::Config { line, msg: format!("key {k:?} given twice") });
            }
            cfg.set(k, v).map_err(|msg| LabError::Config { line, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Snapshot text; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Checks that do not need the dataset.
    pub fn validate(&self) -> LabResult<()> {
        let bad = |m: &str| Err(LabError::Invalid(m.to_string()));
        let e = &self.experiment;
        e.learner.validate().map_err(|err| LabError::Invalid(err.to_string()))?;
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1");
        }
        if self.environment != Environment::Toy {
            if e.layer_dims.len() < 2 {
                return bad("layer_dims needs an input and an output width");
            }
            if e.n_tasks == 0 || e.steps_per_task == 0 {
                return bad("num_tasks and steps_per_task must be positive");
            }
            if self.samples_per_task == 0 || self.eval_size == 0 {
                return bad("samples_per_task and eval_size must be positive");
            }
        }
        if self.environment == Environment::Synthetic && (self.synth_dim < 2 || self.synth_classes < 2) {
            return bad("synthetic tasks need synth_dim >= 2 and synth_classes >= 2");
        }
        if !(self.toy.eta > 0.0) || self.toy.raster_points < 2 {
            return bad("toy_eta must be positive and toy_raster_points at least 2");
        }
        Ok(())
    }

    /// The same run restricted to the `i`-th seed.
    pub fn for_seed(&self, i: usize) -> RunConfig {
        let mut c = self.clone();
        c.experiment.seed = self.experiment.seed + i as u64;
        c.n_seeds = 1;
        c
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.experiment.seed + i).collect()
    }

    pub fn toy_config(&self) -> ToyConfig {
        ToyConfig {
            theta0: self.toy.theta0,
            eta: self.toy.eta,
            steps_per_task: self.toy.steps_per_task,
            threshold: self.toy.threshold,
            ..ToyConfig::default()
        }
    }
}

/// Spectrum settings used when a caller overrides the run's own.
pub fn slq_with(steps: usize, probes: usize, sigma2: Option<f64>, points: usize) -> SlqConfig {
    SlqConfig {
        steps,
        probes,
        sigma2,
        grid: GridSpec::Auto { points },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::default();
        c.set("sigma2", "0.000123").unwrap();
        c.set("er_layers", "0,1").unwrap();
        c.set("lr", "0.1").unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = RunConfig::parse("lr = 0.1\n# note\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, LabError::Config { line: 3, .. }), "{err}");
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(RunConfig::parse("lr = x").unwrap_err(), LabError::Config { line: 1, .. }));
        assert!(matches!(RunConfig::parse("lr=1\nlr=2").unwrap_err(), LabError::Config { line: 2, .. }));
        assert!(matches!(RunConfig::parse("no equals sign").unwrap_err(), LabError::Config { line: 1, .. }));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("\n  agent = l2_er   # trailing\n\nnum_tasks=3\n").unwrap();
        assert_eq!(c.experiment.learner.algorithm, Algorithm::L2Er);
        assert_eq!(c.experiment.n_tasks, 3);
    }
}
