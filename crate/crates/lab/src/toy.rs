//! Two-task toy landscape runs: trajectories, loss rasters and a summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plasticity_core::toyland::{default_schedule, steps_to_threshold, toy_run, loss_raster, ToyConfig, ToyMethod, ToyTask, TrajPoint};

use crate::config::ToySettings;
use crate::error::LabResult;
use crate::formats::{write_raster_csv, write_trajectory_csv};

pub const TOY_SUMMARY: &str = "toy_summary.txt";

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub gd: Vec<TrajPoint>,
    pub curvreg: Vec<TrajPoint>,
    pub cfg: ToyConfig,
}

fn end_of(traj: &[TrajPoint], task: ToyTask) -> [f64; 2] {
    traj.iter().rev().find(|p| p.task == task).map(|p| p.theta).unwrap_or([f64::NAN; 2])
}

impl ToyOutcome {
    pub fn run(settings: &ToySettings) -> LabResult<Self> {
        let cfg = ToyConfig {
            theta0: settings.theta0,
            eta: settings.eta,
            steps_per_task: settings.steps_per_task,
            threshold: settings.threshold,
            ..ToyConfig::default()
        };
        let schedule = default_schedule(&cfg);
        let gd = toy_run(ToyMethod::Gd, cfg.theta0, &schedule, cfg.eta, &cfg)?;
        let curvreg = toy_run(ToyMethod::CurvReg, cfg.theta0, &schedule, cfg.eta, &cfg)?;
        Ok(Self { gd, curvreg, cfg })
    }

    pub fn task1_end(&self, method: ToyMethod) -> [f64; 2] {
        end_of(self.traj(method), ToyTask::One)
    }

    pub fn traj(&self, method: ToyMethod) -> &[TrajPoint] {
        match method {
            ToyMethod::Gd => &self.gd,
            ToyMethod::CurvReg => &self.curvreg,
        }
    }

    /// Steps on task 2 until the loss drops below the threshold.
    pub fn task2_steps(&self, method: ToyMethod) -> Option<usize> {
        steps_to_threshold(self.traj(method), ToyTask::Two, self.cfg.threshold)
    }

    /// Box covering both trajectories and both bowl centres, padded by 0.5.
    pub fn window(&self) -> ((f64, f64), (f64, f64)) {
        let pts = self
            .gd
            .iter()
            .chain(&self.curvreg)
            .map(|p| p.theta)
            .chain([self.cfg.bowl1, self.cfg.bowl2]);
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for [x, y] in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        ((x0 - 0.5, x1 + 0.5), (y0 - 0.5, y1 + 0.5))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let fmt_pt = |p: [f64; 2]| format!("{},{}", p[0], p[1]);
        let steps = |m| self.task2_steps(m).map(|v: usize| v.to_string()).unwrap_or_else(|| "none".into());
        let gd_end = self.task1_end(ToyMethod::Gd);
        let cr_end = self.task1_end(ToyMethod::CurvReg);
        let b = self.cfg.bowl1;
        let _ = writeln!(s, "gd_task1_end = {}", fmt_pt(gd_end));
        let _ = writeln!(s, "gd_task1_canyon = {}", self.cfg.canyon(ToyTask::One, gd_end));
        let _ = writeln!(s, "curvreg_task1_end = {}", fmt_pt(cr_end));
        let _ = writeln!(s, "curvreg_task1_bowl_distance = {}", (cr_end[0] - b[0]).hypot(cr_end[1] - b[1]));
        let _ = writeln!(s, "threshold = {}", self.cfg.threshold);
        let _ = writeln!(s, "gd_task2_steps = {}", steps(ToyMethod::Gd));
        let _ = writeln!(s, "curvreg_task2_steps = {}", steps(ToyMethod::CurvReg));
        s
    }

    /// Writes trajectories, rasters of both tasks and the summary into `dir`.
    pub fn write(&self, dir: &Path, raster_points: usize) -> LabResult<()> {
        fs::create_dir_all(dir)?;
        write_trajectory_csv(&dir.join("toy_gd.csv"), &self.gd)?;
        write_trajectory_csv(&dir.join("toy_curvreg.csv"), &self.curvreg)?;
        let (xr, yr) = self.window();
        for (task, name) in [(ToyTask::One, "raster_task1.csv"), (ToyTask::Two, "raster_task2.csv")] {
            write_raster_csv(&dir.join(name), &loss_raster(&self.cfg, task, xr, yr, raster_points))?;
        }
        fs::write(dir.join(TOY_SUMMARY), self.summary())?;
        Ok(())
    }
}
