//! Figures from run directories and toy outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plasticity_core::numerics::stats::{least_squares, spearman};

use crate::error::{LabError, LabResult};
use crate::formats::Table;
use crate::run::{METRICS_FILE, SPECTRA_DIR};
use crate::svg::{contour_segments, padded, Plot, PALETTE};

/// Metrics rows gathered from one or more run directories.
#[derive(Debug, Clone, Default)]
pub struct MetricsSet {
    pub rows: Vec<MetricsRow>,
    pub density_files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub algorithm: String,
    pub seed: u64,
    pub task: usize,
    pub eval_acc: f64,
    pub eps_rank_norm: Option<f64>,
    pub erank_mean: Option<f64>,
    pub dead_count: Option<f64>,
}

/// Directories holding a metrics.csv: `dir` itself, or its `seed_*` children.
pub fn metric_dirs(dir: &Path) -> LabResult<Vec<PathBuf>> {
    if dir.join(METRICS_FILE).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| LabError::MissingData(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(METRICS_FILE).exists())
        .collect();
    out.sort();
    Ok(out)
}

pub fn load_metrics(dirs: &[PathBuf]) -> LabResult<MetricsSet> {
    let mut set = MetricsSet::default();
    for d in dirs {
        let t = Table::read(&d.join(METRICS_FILE))?;
        let algs = t.text_column("algorithm")?;
        let seeds = t.column("seed")?;
        let tasks = t.column("task")?;
        let acc = t.column("eval_acc")?;
        let eps = t.column("eps_rank_norm")?;
        let er = t.column("erank_mean")?;
        let dead = t.column("dead_count")?;
        for i in 0..t.rows.len() {
            set.rows.push(MetricsRow {
                algorithm: algs[i].clone(),
                seed: seeds[i].unwrap_or(0.0) as u64,
                task: tasks[i].unwrap_or(0.0) as usize,
                eval_acc: acc[i].ok_or_else(|| LabError::Format("empty eval_acc".into()))?,
                eps_rank_norm: eps[i],
                erank_mean: er[i],
                dead_count: dead[i],
            });
        }
        let sdir = d.join(SPECTRA_DIR);
        if sdir.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&sdir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with("_density.csv"))
                .collect();
            files.sort();
            set.density_files.extend(files);
        }
    }
    Ok(set)
}

/// Per-algorithm mean over seeds of a per-task quantity.
fn per_task_mean(rows: &[MetricsRow], f: impl Fn(&MetricsRow) -> Option<f64>) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut acc: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = f(r) {
            let e = acc.entry(r.algorithm.clone()).or_default().entry(r.task).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(a, m)| (a, m.into_iter().map(|(t, (s, n))| (t as f64 + 1.0, s / n as f64)).collect()))
        .collect()
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn line_plot(title: &str, ylabel: &str, series: &BTreeMap<String, Vec<(f64, f64)>>) -> String {
    let (x0, x1) = range(series.values().flatten().map(|p| p.0));
    let (y0, y1) = range(series.values().flatten().map(|p| p.1));
    let mut p = Plot::new(title, "task", ylabel, padded(x0, x1), padded(y0, y1));
    for (i, (name, pts)) in series.iter().enumerate() {
        p.polyline(pts, PALETTE[i % PALETTE.len()], false, Some(name));
    }
    p.render()
}

pub fn accuracy_svg(set: &MetricsSet) -> String {
    line_plot("Accuracy per task", "eval accuracy", &per_task_mean(&set.rows, |r| Some(r.eval_acc)))
}

/// Scatter of normalised ε-rank at task start against accuracy on that task,
/// with the least-squares line over all points.
pub fn eps_scatter_svg(set: &MetricsSet) -> Option<String> {
    let pts: Vec<(&str, f64, f64)> = set
        .rows
        .iter()
        .filter_map(|r| r.eps_rank_norm.map(|e| (r.algorithm.as_str(), e, r.eval_acc)))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let (x0, x1) = padded_pair(range(pts.iter().map(|p| p.1)));
    let (y0, y1) = padded_pair(range(pts.iter().map(|p| p.2)));
    let mut plot = Plot::new("Hessian rank and accuracy", "normalised eps-rank at task start", "eval accuracy", (x0, x1), (y0, y1));
    let mut algs: Vec<&str> = pts.iter().map(|p| p.0).collect();
    algs.sort();
    algs.dedup();
    for (i, a) in algs.iter().enumerate() {
        let xy: Vec<(f64, f64)> = pts.iter().filter(|p| p.0 == *a).map(|p| (p.1, p.2)).collect();
        plot.points(&xy, PALETTE[i % PALETTE.len()], Some(a));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.2).collect();
    if xs.len() >= 2 {
        let (b0, b1) = least_squares(&xs, &ys);
        plot.polyline(&[(x0, b0 + b1 * x0), (x1, b0 + b1 * x1)], "black", true, Some("linear fit"));
        let rho = spearman(&xs, &ys);
        if rho.is_finite() {
            plot.note(&format!("spearman {rho:.3}"));
        }
    }
    Some(plot.render())
}

fn padded_pair(r: (f64, f64)) -> (f64, f64) {
    padded(r.0, r.1)
}

/// Smoothed spectral densities on a log scale, one curve per file.
pub fn density_svg(files: &[PathBuf]) -> LabResult<Option<String>> {
    if files.is_empty() {
        return Ok(None);
    }
    let floor = 1e-12;
    let mut curves = Vec::new();
    for f in files {
        let t = Table::read(f)?;
        let xs = t.column("t")?;
        let ds = t.column("density")?;
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .zip(&ds)
            .filter_map(|(x, d)| Some(((*x)?, (*d)?.max(floor).log10())))
            .collect();
        let name = f.file_name().map(|n| n.to_string_lossy().trim_end_matches("_density.csv").to_string()).unwrap_or_default();
        curves.push((name, pts));
    }
    let (x0, x1) = range(curves.iter().flat_map(|c| c.1.iter().map(|p| p.0)));
    let (y0, y1) = range(curves.iter().flat_map(|c| c.1.iter().map(|p| p.1)));
    let mut p = Plot::new("Spectral density", "eigenvalue", "log10 density", padded(x0, x1), padded(y0, y1));
    for (i, (name, pts)) in curves.iter().enumerate() {
        p.polyline(pts, PALETTE[i % PALETTE.len()], false, Some(name));
    }
    Ok(Some(p.render()))
}

/// Contours of a toy loss raster (x, y, loss) with trajectories on top.
/// Levels are spread evenly between the raster's minimum and maximum.
pub fn toy_svg(title: &str, raster: &Table, trajectories: &[(String, Vec<(f64, f64)>)], levels: usize) -> LabResult<String> {
    let xs = raster.column("x")?;
    let ys = raster.column("y")?;
    let ls = raster.column("loss")?;
    let cells: Vec<(f64, f64, f64)> = (0..xs.len())
        .filter_map(|i| Some((xs[i]?, ys[i]?, ls[i]?)))
        .collect();
    let mut ux: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let mut uy: Vec<f64> = cells.iter().map(|c| c.1).collect();
    for u in [&mut ux, &mut uy] {
        u.sort_by(f64::total_cmp);
        u.dedup();
    }
    if ux.len() < 2 || uy.len() < 2 || ux.len() * uy.len() != cells.len() {
        return Err(LabError::Format("raster is not a full rectilinear grid".into()));
    }
    let mut grid = vec![vec![0.0; ux.len()]; uy.len()];
    for c in &cells {
        let i = ux.binary_search_by(|v| v.total_cmp(&c.0)).expect("present");
        let j = uy.binary_search_by(|v| v.total_cmp(&c.1)).expect("present");
        grid[j][i] = c.2;
    }
    let (lo, hi) = range(cells.iter().map(|c| c.2));
    let mut p = Plot::new(title, "theta 1", "theta 2", (ux[0], ux[ux.len() - 1]), (uy[0], uy[uy.len() - 1]));
    for k in 1..=levels {
        let level = lo + (hi - lo) * k as f64 / (levels + 1) as f64;
        let shade = 200 - (150 * k / levels.max(1)) as u32;
        p.segments(&contour_segments(&ux, &uy, &grid, level), &format!("rgb({shade},{shade},{shade})"), 0.8);
    }
    for (i, (name, pts)) in trajectories.iter().enumerate() {
        p.polyline(pts, PALETTE[i % PALETTE.len()], false, Some(name));
    }
    p.note(&format!("loss min {lo:.4}"));
    p.note(&format!("loss max {hi:.4}"));
    p.note(&format!("{levels} contour levels"));
    Ok(p.render())
}

/// Writes every figure the inputs allow into `out`; returns the file names.
/// Writes every figure the inputs allow into `out`; returns the file names.
pub fn plot_dirs(dirs: &[PathBuf], out: &Path) -> LabResult<Vec<String>> {
    let mut written = Vec::new();
    fs::create_dir_all(out)?;
    let mut write = |name: &str, body: String| -> LabResult<()> {
        fs::write(out.join(name), body)?;
        written.push(name.to_string());
        Ok(())
    };

    let mut metric = Vec::new();
    let mut toy = Vec::new();
    for d in dirs {
        if !d.exists() {
            return Err(LabError::MissingData(format!("{} does not exist", d.display())));
        }
        if d.join(crate::toy::TOY_SUMMARY).exists() {
            toy.push(d.clone());
        } else {
            metric.extend(metric_dirs(d)?);
        }
    }
    if metric.is_empty() && toy.is_empty() {
        return Err(LabError::MissingData("no metrics.csv or toy output found".into()));
    }
    if !metric.is_empty() {
        let set = load_metrics(&metric)?;
        write("accuracy.svg", accuracy_svg(&set))?;
        if let Some(s) = eps_scatter_svg(&set) {
            write("eps_rank_vs_accuracy.svg", s)?;
        }
        let er = per_task_mean(&set.rows, |r| r.erank_mean);
        if !er.is_empty() {
            write("erank.svg", line_plot("Feature effective rank", "mean effective rank", &er))?;
        }
        let dead = per_task_mean(&set.rows, |r| r.dead_count);
        if !dead.is_empty() {
            write("dead_units.svg", line_plot("Dead units after training", "dead units", &dead))?;
        }
        if let Some(s) = density_svg(&set.density_files)? {
            write("density.svg", s)?;
        }
    }
    for d in toy {
        for task in [1u8, 2] {
            let raster = Table::read(&d.join(format!("raster_task{task}.csv")))?;
            let mut trajs = Vec::new();
            for method in ["gd", "curvreg"] {
                let t = Table::read(&d.join(format!("toy_{method}.csv")))?;
                let xs = t.column("x")?;
                let ys = t.column("y")?;
                let tk = t.column("task")?;
                let pts = (0..xs.len())
                    .filter(|&i| tk[i] == Some(task as f64))
                    .filter_map(|i| Some((xs[i]?, ys[i]?)))
                    .collect();
                trajs.push((method.to_string(), pts));
            }
            write(&format!("toy_task{task}.svg"), toy_svg(&format!("Toy landscape, task {task}"), &raster, &trajs, 12)?)?;
        }
    }
    Ok(written)
}
