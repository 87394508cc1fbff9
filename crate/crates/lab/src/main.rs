use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plasticity_lab::commands::{cmd_diagnose, cmd_spectrum, DiagnoseArgs, SpectrumArgs};
use plasticity_lab::config::RunConfig;
use plasticity_lab::plot::plot_dirs;
use plasticity_lab::run::{run_all, RunOptions};
use plasticity_lab::toy::ToyOutcome;
use plasticity_lab::{LabError, LabResult};

#[derive(Parser)]
#[command(name = "plab", version, about = "Continual-learning plasticity experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on a task stream and write metrics, records and checkpoints.
    Run {
        /// key=value config file.
        config: PathBuf,
        /// Continue from the last checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Number of seeds trained concurrently.
        #[arg(long, default_value_t = 1)]
        parallel_seeds: usize,
        /// Stop once this task is finished (resumable later).
        #[arg(long)]
        stop_after_task: Option<usize>,
        /// Override a config key, e.g. --set lr=0.05. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Output directory (overrides output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hessian spectral density and ε-rank at a checkpoint.
    Spectrum {
        checkpoint: PathBuf,
        /// Task whose training rows define the loss (default: last trained task).
        #[arg(long)]
        task: Option<usize>,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 80)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        probes: usize,
        /// Gaussian smoothing variance; automatic when omitted.
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 400)]
        grid_points: usize,
        /// Also diagonalise the dense Hessian.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value = "spectrum")]
        out: PathBuf,
    },
    /// Two-task toy landscape: trajectories, loss rasters and a summary.
    Toy {
        /// Optional key=value config (toy_* keys are used).
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, default_value = "toy")]
        out: PathBuf,
    },
    /// SVG figures from run or toy directories.
    Plot {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
    },
    /// Dead-unit census, Hessian rank bound and persistence at a checkpoint.
    Diagnose {
        checkpoint: PathBuf,
        #[arg(long)]
        task: Option<usize>,
        /// Also compute the numeric rank of the dense Hessian.
        #[arg(long)]
        exact_rank: bool,
        #[arg(long, default_value = "diagnose")]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, sets: &[String]) -> LabResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| LabError::MissingData(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| LabError::Invalid(format!("--set expects KEY=VALUE, got {s:?}")))?;
        cfg.set(k.trim(), v.trim()).map_err(|m| LabError::Invalid(format!("{}: {m}", k.trim())))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cmd: Cmd) -> LabResult<()> {
    match cmd {
        Cmd::Run { config, resume, parallel_seeds, stop_after_task, sets, out } => {
            let mut cfg = load_config(Some(&config), &sets)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let opts = RunOptions { resume, stop_after: stop_after_task };
            let runs = run_all(&cfg, &opts, parallel_seeds)?;
            let tasks: usize = runs.iter().map(Vec::len).sum();
            println!("{}: {} seed(s), {tasks} task records", cfg.output_dir.display(), runs.len());
        }
        Cmd::Spectrum { checkpoint, task, batch, steps, probes, sigma2, epsilon, grid_points, exact, out } => {
            let args = SpectrumArgs { checkpoint, task, batch, steps, probes, sigma2, epsilon, grid_points, exact, out };
            print!("{}", cmd_spectrum(&args)?);
        }
        Cmd::Toy { config, sets, out } => {
            let cfg = load_config(config.as_deref(), &sets)?;
            let outcome = ToyOutcome::run(&cfg.toy)?;
            outcome.write(&out, cfg.toy.raster_points)?;
            print!("{}", outcome.summary());
        }
        Cmd::Plot { dirs, out } => {
            for f in plot_dirs(&dirs, &out)? {
                println!("{}", out.join(f).display());
            }
        }
        Cmd::Diagnose { checkpoint, task, exact_rank, out } => {
            print!("{}", cmd_diagnose(&DiagnoseArgs { checkpoint, task, exact_rank, out })?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("plab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
