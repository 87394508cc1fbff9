//! CSV files written and read by the harness.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use plasticity_core::diagnostics::DeadReport;
use plasticity_core::spectral::RitzProbe;
use plasticity_core::toyland::TrajPoint;

use crate::error::{LabError, LabResult};

fn create(path: &Path) -> LabResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_density_csv(path: &Path, grid: &[f64], density: &[f64]) -> LabResult<()> {
    let mut w = create(path)?;
    writeln!(w, "t,density")?;
    for (t, d) in grid.iter().zip(density) {
        writeln!(w, "{t},{d}")?;
    }
    Ok(w.flush()?)
}

pub fn write_ritz_csv(path: &Path, probes: &[RitzProbe]) -> LabResult<()> {
    let mut w = create(path)?;
    writeln!(w, "probe,node,weight")?;
    for (i, p) in probes.iter().enumerate() {
        for (n, wt) in p.nodes.iter().zip(&p.weights) {
            writeln!(w, "{i},{n},{wt}")?;
        }
    }
    Ok(w.flush()?)
}

pub fn write_dead_csv(path: &Path, task: usize, report: &DeadReport) -> LabResult<()> {
    let mut w = create(path)?;
    writeln!(w, "task,layer,unit,max_preact,is_dead,margin,w_norm")?;
    for u in &report.units {
        let margin = u.margin.map(|m| m.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{task},{},{},{},{},{margin},{}",
            u.layer, u.index, u.max_preact, u.is_dead, u.w_norm
        )?;
    }
    Ok(w.flush()?)
}

pub fn write_trajectory_csv(path: &Path, traj: &[TrajPoint]) -> LabResult<()> {
    let mut w = create(path)?;
    writeln!(w, "step,x,y,loss,task")?;
    for p in traj {
        writeln!(w, "{},{},{},{},{}", p.step, p.theta[0], p.theta[1], p.loss, p.task.number())?;
    }
    Ok(w.flush()?)
}

pub fn write_raster_csv(path: &Path, raster: &[(f64, f64, f64)]) -> LabResult<()> {
    let mut w = create(path)?;
    writeln!(w, "x,y,loss")?;
    for (x, y, l) in raster {
        writeln!(w, "{x},{y},{l}")?;
    }
    Ok(w.flush()?)
}

/// A CSV file with a header row, all cells kept as text.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> LabResult<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => LabError::MissingData(format!("{}: {e}", path.display())),
            _ => LabError::Format(format!("{}: {e}", path.display())),
        })?;
        let headers = r
            .headers()
            .map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?
            .iter()
            .map(String::from)
            .collect();
        let rows = r
            .records()
            .map(|rec| {
                rec.map(|rec| rec.iter().map(String::from).collect())
                    .map_err(|e| LabError::Format(format!("{}: {e}", path.display())))
            })
            .collect::<LabResult<Vec<Vec<String>>>>()?;
        Ok(Self { headers, rows })
    }

    pub fn index(&self, name: &str) -> LabResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabError::Format(format!("missing column {name:?}")))
    }

    /// Numeric column; empty cells become `None`.
    pub fn column(&self, name: &str) -> LabResult<Vec<Option<f64>>> {
        let i = self.index(name)?;
        self.rows
            .iter()
            .map(|r| {
                let cell = r.get(i).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse()
                        .map(Some)
                        .map_err(|_| LabError::Format(format!("column {name:?}: bad number {cell:?}")))
                }
            })
            .collect()
    }

    pub fn text_column(&self, name: &str) -> LabResult<Vec<String>> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r.get(i).cloned().unwrap_or_default()).collect())
    }
}
