//! Two-task softmin landscape in the plane, with plain and
//! curvature-regularised gradient descent.

use alloc::vec::Vec;

use crate::error::{invalid, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToyTask {
    One,
    Two,
}

impl ToyTask {
    pub fn number(self) -> u8 {
        match self {
            ToyTask::One => 1,
            ToyTask::Two => 2,
        }
    }
}

/// Landscape constants and the run defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub tau1: f64,
    pub a1: f64,
    pub b1: f64,
    pub c_l1: f64,
    pub c_r1: f64,
    pub bowl1: Point,
    pub tau2: f64,
    pub phi_deg: f64,
    pub mu: Point,
    pub c_u: f64,
    pub a2: f64,
    pub eps_v: f64,
    pub bowl2: Point,
    pub b_x: f64,
    pub b_y: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    /// Stabiliser inside the curvature log-barrier.
    pub eps: f64,
    /// Finite-difference step for gradients and Hessians.
    pub fd_h: f64,
    pub eta: f64,
    pub steps_per_task: usize,
    pub theta0: Point,
    pub threshold: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            tau1: 0.13,
            a1: 0.02,
            b1: 6.0,
            c_l1: 6.0,
            c_r1: 2.0,
            bowl1: [0.8, 0.25],
            tau2: 0.18,
            phi_deg: 35.0,
            mu: [-4.1, 2.0],
            c_u: 10.0,
            a2: 1e-4,
            eps_v: 1e-6,
            bowl2: [1.8, -0.6],
            b_x: 5.0,
            b_y: 9.0,
            alpha1: 0.12,
            alpha2: 0.10,
            beta: 0.006,
            eps: 1e-6,
            fd_h: 1e-4,
            eta: 0.01,
            steps_per_task: 4000,
            theta0: [-0.3, -0.15],
            threshold: 0.05,
        }
    }
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

#[inline]
fn pow6(x: f64) -> f64 {
    let c = x * x * x;
    c * c
}

/// `−τ ln(e^{−c/τ} + e^{−b/τ})`, shifted by `min(c, b)` before exponentiating.
pub fn softmin(c: f64, b: f64, tau: f64) -> f64 {
    let m = c.min(b);
    m - tau * libm::log(libm::exp(-(c - m) / tau) + libm::exp(-(b - m) / tau))
}

impl ToyConfig {
    pub fn tau(&self, task: ToyTask) -> f64 {
        match task {
            ToyTask::One => self.tau1,
            ToyTask::Two => self.tau2,
        }
    }

    pub fn alpha(&self, task: ToyTask) -> f64 {
        match task {
            ToyTask::One => self.alpha1,
            ToyTask::Two => self.alpha2,
        }
    }

    /// Task-2 canyon coordinates `R_φ(θ − μ)`.
    pub fn canyon_coords(&self, t: Point) -> Point {
        let phi = self.phi_deg.to_radians();
        let (s, c) = (libm::sin(phi), libm::cos(phi));
        let (dx, dy) = (t[0] - self.mu[0], t[1] - self.mu[1]);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn canyon(&self, task: ToyTask, t: Point) -> f64 {
        match task {
            ToyTask::One => self.c_l1 * sq(t[0] + 1.0) + self.a1 * pow6(t[1]),
            ToyTask::Two => {
                let [u, v] = self.canyon_coords(t);
                self.c_u * u * u + self.a2 * pow6(v) + self.eps_v * v * v
            }
        }
    }

    pub fn bowl(&self, task: ToyTask, t: Point) -> f64 {
        match task {
            ToyTask::One => self.c_r1 * sq(t[0] - self.bowl1[0]) + self.b1 * sq(t[1] - self.bowl1[1]),
            ToyTask::Two => self.b_x * sq(t[0] - self.bowl2[0]) + self.b_y * sq(t[1] - self.bowl2[1]),
        }
    }
}

pub fn toy_loss(cfg: &ToyConfig, task: ToyTask, t: Point) -> f64 {
    softmin(cfg.canyon(task, t), cfg.bowl(task, t), cfg.tau(task))
}

/// Central-difference gradient of `f`.
pub fn fd_grad(f: impl Fn(Point) -> f64, t: Point, h: f64) -> Point {
    [
        (f([t[0] + h, t[1]]) - f([t[0] - h, t[1]])) / (2.0 * h),
        (f([t[0], t[1] + h]) - f([t[0], t[1] - h])) / (2.0 * h),
    ]
}

/// Symmetric finite-difference Hessian `[h11, h12, h22]`.
pub fn fd_hessian(f: impl Fn(Point) -> f64, t: Point, h: f64) -> [f64; 3] {
    let f0 = f(t);
    let h11 = (f([t[0] + h, t[1]]) - 2.0 * f0 + f([t[0] - h, t[1]])) / (h * h);
    let h22 = (f([t[0], t[1] + h]) - 2.0 * f0 + f([t[0], t[1] - h])) / (h * h);
    let h12 = (f([t[0] + h, t[1] + h]) - f([t[0] + h, t[1] - h]) - f([t[0] - h, t[1] + h]) + f([t[0] - h, t[1] - h]))
        / (4.0 * h * h);
    [h11, h12, h22]
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym2_eigs([a, b, d]: [f64; 3]) -> [f64; 2] {
    let mean = 0.5 * (a + d);
    let rad = libm::hypot(0.5 * (a - d), b);
    [mean - rad, mean + rad]
}

pub fn toy_grad(cfg: &ToyConfig, task: ToyTask, t: Point) -> Point {
    fd_grad(|p| toy_loss(cfg, task, p), t, cfg.fd_h)
}

pub fn toy_hessian_eigs(cfg: &ToyConfig, task: ToyTask, t: Point) -> [f64; 2] {
    sym2_eigs(fd_hessian(|p| toy_loss(cfg, task, p), t, cfg.fd_h))
}

/// `−Σ ln(λ_i² + ε)` over two eigenvalues.
pub fn log_barrier(eigs: [f64; 2], eps: f64) -> f64 {
    -eigs.iter().map(|l| libm::log(l * l + eps)).sum::<f64>()
}

pub fn curvature_penalty(cfg: &ToyConfig, task: ToyTask, t: Point) -> f64 {
    log_barrier(toy_hessian_eigs(cfg, task, t), cfg.eps)
}

/// `L + α R + (β/2)‖θ‖²`, the objective curvature-regularised descent follows.
pub fn curvreg_objective(cfg: &ToyConfig, task: ToyTask, t: Point) -> f64 {
    toy_loss(cfg, task, t)
        + cfg.alpha(task) * curvature_penalty(cfg, task, t)
        + 0.5 * cfg.beta * (t[0] * t[0] + t[1] * t[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyMethod {
    Gd,
    CurvReg,
}

impl ToyMethod {
    pub fn name(self) -> &'static str {
        match self {
            ToyMethod::Gd => "gd",
            ToyMethod::CurvReg => "curvreg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajPoint {
    pub step: usize,
    pub theta: Point,
    pub loss: f64,
    pub task: ToyTask,
}

/// One step of the chosen update on `task`.
pub fn toy_step(method: ToyMethod, cfg: &ToyConfig, task: ToyTask, t: Point, eta: f64) -> Point {
    let g = toy_grad(cfg, task, t);
    let d = match method {
        ToyMethod::Gd => g,
        ToyMethod::CurvReg => {
            let a = cfg.alpha(task);
            let gr = fd_grad(|p| curvature_penalty(cfg, task, p), t, cfg.fd_h);
            [g[0] + a * gr[0] + cfg.beta * t[0], g[1] + a * gr[1] + cfg.beta * t[1]]
        }
    };
    [t[0] - eta * d[0], t[1] - eta * d[1]]
}

/// Runs `schedule` (task, steps) in order from `theta0`. The first point is
/// the start; each later point follows one update. Points are labelled with
/// the task whose loss they report.
pub fn toy_run(
    method: ToyMethod,
    theta0: Point,
    schedule: &[(ToyTask, usize)],
    eta: f64,
    cfg: &ToyConfig,
) -> Result<Vec<TrajPoint>> {
    if !(eta > 0.0) {
        return Err(invalid!("step size must be positive"));
    }
    let mut out = Vec::with_capacity(1 + schedule.iter().map(|s| s.1).sum::<usize>());
    let mut t = theta0;
    let mut step = 0;
    let first = schedule.first().map(|s| s.0).unwrap_or(ToyTask::One);
    out.push(TrajPoint {
        step,
        theta: t,
        loss: toy_loss(cfg, first, t),
        task: first,
    });
    for &(task, n) in schedule {
        for _ in 0..n {
            t = toy_step(method, cfg, task, t, eta);
            step += 1;
            out.push(TrajPoint {
                step,
                theta: t,
                loss: toy_loss(cfg, task, t),
                task,
            });
        }
    }
    Ok(out)
}

/// Default two-task schedule.
pub fn default_schedule(cfg: &ToyConfig) -> [(ToyTask, usize); 2] {
    [(ToyTask::One, cfg.steps_per_task), (ToyTask::Two, cfg.steps_per_task)]
}

/// Steps after entering `task` until its loss first falls below `threshold`.
pub fn steps_to_threshold(traj: &[TrajPoint], task: ToyTask, threshold: f64) -> Option<usize> {
    let start = traj.iter().position(|p| p.task == task)?;
    let base = traj[start].step.saturating_sub(1);
    traj[start..]
        .iter()
        .take_while(|p| p.task == task)
        .find(|p| p.loss < threshold)
        .map(|p| p.step - base)
}

/// Loss raster over `[x0, x1] × [y0, y1]`; row `i` is `y_i`, column `j` is `x_j`.
pub fn loss_raster(cfg: &ToyConfig, task: ToyTask, x: (f64, f64), y: (f64, f64), n: usize) -> Vec<(f64, f64, f64)> {
    let n = n.max(2);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let yy = y.0 + (y.1 - y.0) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let xx = x.0 + (x.1 - x.0) * j as f64 / (n - 1) as f64;
            out.push((xx, yy, toy_loss(cfg, task, [xx, yy])));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmin_examples() {
        assert!((softmin(1.0, 1.0, 0.13) - (1.0 - 0.13 * core::f64::consts::LN_2)).abs() < 1e-12);
        assert!(softmin(0.0, 1e6, 0.13).abs() < 1e-12);
        let cfg = ToyConfig::default();
        assert_eq!(cfg.canyon(ToyTask::One, [-1.0, 0.0]), 0.0);
        assert!((cfg.bowl(ToyTask::One, [-1.0, 0.0]) - 6.855).abs() < 1e-12);
        assert!(toy_loss(&cfg, ToyTask::One, [-1.0, 0.0]).abs() < 1e-6);
    }

    #[test]
    fn barrier_examples() {
        assert!((log_barrier([1.0, 1.0], 1e-6) + 2e-6).abs() < 1e-11);
        assert!((log_barrier([0.0, 0.0], 1e-6) - 27.631021115928547).abs() < 1e-9);
        assert!(log_barrier([2.0, 2.0], 1e-6) < log_barrier([1.0, 1.0], 1e-6));
    }

    #[test]
    fn bowl_hessian_is_exact() {
        let cfg = ToyConfig::default();
        let e = sym2_eigs(fd_hessian(|p| cfg.bowl(ToyTask::One, p), [0.3, -1.2], cfg.fd_h));
        assert!((e[0] - 4.0).abs() < 1e-5 && (e[1] - 12.0).abs() < 1e-5);
    }
}
