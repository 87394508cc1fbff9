use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::network::{Batch, Targets};
use crate::numerics::{norm2, DenseMatrix, RngStream};

/// One task of a continual stream.
#[derive(Debug, Clone)]
pub struct Task {
    pub id: usize,
    pub train: Batch,
    pub eval: Batch,
    /// Input permutation applied to every image, for permuted streams.
    pub permutation: Option<Vec<usize>>,
}

/// Random access to the tasks of a stream; task `τ` depends only on the
/// stream seed and `τ`.
pub trait TaskStream {
    fn n_tasks(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn task(&self, id: usize) -> Result<Task>;
}

fn labels(b: &Batch) -> Result<&[usize]> {
    match &b.y {
        Targets::Classes(c) => Ok(c),
        Targets::Values(_) => Err(invalid!("classification stream needs class labels")),
    }
}

/// `out[i][j] = x[rows[i]][perm[j]]`.
pub fn gather_permuted(x: &DenseMatrix, rows: &[usize], perm: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(rows.len(), perm.len(), |i, j| x.get(rows[i], perm[j]))
}

/// Inverse of a column permutation applied with [`gather_permuted`].
pub fn unpermute(x: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for (j, &p) in perm.iter().enumerate() {
            out.set(r, p, x.get(r, j));
        }
    }
    out
}

/// Tasks built from a fixed image set by a per-task pixel permutation.
/// Training rows come from `base_train`, evaluation rows from `base_eval`.
#[derive(Debug, Clone)]
pub struct PermutedStream {
    base_train: Arc<Batch>,
    base_eval: Arc<Batch>,
    n_tasks: usize,
    samples_per_task: usize,
    eval_per_task: usize,
    classes: usize,
    rng: RngStream,
}

impl PermutedStream {
    /// The base sets are shared, not copied, when passed as `Arc`s.
    pub fn new(
        base_train: impl Into<Arc<Batch>>,
        base_eval: impl Into<Arc<Batch>>,
        n_tasks: usize,
        samples_per_task: usize,
        eval_per_task: usize,
        rng: RngStream,
    ) -> Result<Self> {
        let (base_train, base_eval) = (base_train.into(), base_eval.into());
        if base_train.x.cols() != base_eval.x.cols() {
            return Err(invalid!("train and eval images differ in size"));
        }
        if samples_per_task == 0 || samples_per_task > base_train.len() {
            return Err(invalid!("samples per task must be in 1..={}", base_train.len()));
        }
        if eval_per_task == 0 || eval_per_task > base_eval.len() {
            return Err(invalid!("eval samples per task must be in 1..={}", base_eval.len()));
        }
        let classes = labels(&base_train)?
            .iter()
            .chain(labels(&base_eval)?)
            .max()
            .map(|m| m + 1)
            .unwrap_or(0);
        Ok(Self {
            base_train,
            base_eval,
            n_tasks,
            samples_per_task,
            eval_per_task,
            classes,
            rng,
        })
    }

    pub fn permutation(&self, id: usize) -> Vec<usize> {
        self.rng.split(id as u64).split(0).permutation(self.base_train.x.cols())
    }
}

impl TaskStream for PermutedStream {
    fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    fn input_dim(&self) -> usize {
        self.base_train.x.cols()
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn task(&self, id: usize) -> Result<Task> {
        if id >= self.n_tasks {
            return Err(invalid!("task {} out of range ({} tasks)", id, self.n_tasks));
        }
        let r = self.rng.split(id as u64);
        let perm = r.split(0).permutation(self.input_dim());
        let mut tr: Vec<usize> = r.split(1).permutation(self.base_train.len());
        tr.truncate(self.samples_per_task);
        let mut ev: Vec<usize> = r.split(2).permutation(self.base_eval.len());
        ev.truncate(self.eval_per_task);
        let make = |base: &Batch, rows: &[usize]| -> Result<Batch> {
            let y = labels(base)?;
            Batch::classification(gather_permuted(&base.x, rows, &perm), rows.iter().map(|&i| y[i]).collect())
        };
        Ok(Task {
            id,
            train: make(&self.base_train, &tr)?,
            eval: make(&self.base_eval, &ev)?,
            permutation: Some(perm),
        })
    }
}

/// Gaussian clusters with unit noise, class means at pairwise distance at
/// least 6, and a random rotation of the input space per task.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    dim: usize,
    classes: usize,
    n_tasks: usize,
    samples: usize,
    eval_samples: usize,
    rng: RngStream,
}

/// Minimum distance between class means, in noise standard deviations.
pub const CLUSTER_SEPARATION: f64 = 6.0;

impl SyntheticStream {
    pub fn new(dim: usize, classes: usize, n_tasks: usize, samples: usize, eval_samples: usize, rng: RngStream) -> Result<Self> {
        if dim < 2 || classes < 2 {
            return Err(invalid!("synthetic stream needs d >= 2 and K >= 2"));
        }
        if samples == 0 || eval_samples == 0 {
            return Err(invalid!("synthetic stream needs samples"));
        }
        Ok(Self {
            dim,
            classes,
            n_tasks,
            samples,
            eval_samples,
            rng,
        })
    }

    /// Class means of task `id`, one per row.
    pub fn means(&self, id: usize) -> DenseMatrix {
        let mut r = self.rng.split(id as u64).split(0);
        // radius grows with K so rejection sampling terminates quickly
        let scale = CLUSTER_SEPARATION * (1.0 + libm::pow(self.classes as f64, 1.0 / self.dim as f64));
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(self.classes);
        while means.len() < self.classes {
            let c: Vec<f64> = (0..self.dim).map(|_| r.uniform(-scale, scale)).collect();
            let ok = means.iter().all(|m| {
                let d: Vec<f64> = m.iter().zip(&c).map(|(a, b)| a - b).collect();
                norm2(&d) >= CLUSTER_SEPARATION
            });
            if ok {
                means.push(c);
            }
        }
        DenseMatrix::from_fn(self.classes, self.dim, |i, j| means[i][j])
    }

    /// Random orthogonal matrix of task `id` (Gram–Schmidt on a Gaussian matrix).
    pub fn rotation(&self, id: usize) -> DenseMatrix {
        let mut r = self.rng.split(id as u64).split(1);
        let d = self.dim;
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
        while q.len() < d {
            let mut v = r.gaussian_vec(d);
            for _ in 0..2 {
                for b in &q {
                    let c: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                    crate::numerics::axpy(-c, b, &mut v);
                }
            }
            let n = norm2(&v);
            if n > 1e-6 {
                q.push(v.iter().map(|x| x / n).collect());
            }
        }
        DenseMatrix::from_fn(d, d, |i, j| q[i][j])
    }

    fn sample(&self, means: &DenseMatrix, rot: &DenseMatrix, n: usize, rng: &mut RngStream) -> Result<Batch> {
        let mut y: Vec<usize> = (0..n).map(|i| i % self.classes).collect();
        let perm = rng.permutation(n);
        y = perm.iter().map(|&i| y[i]).collect();
        let mut x = DenseMatrix::zeros(n, self.dim);
        let mut z = alloc::vec![0.0; self.dim];
        for (i, &c) in y.iter().enumerate() {
            for (k, v) in z.iter_mut().enumerate() {
                *v = means.get(c, k) + rng.gaussian();
            }
            let row = x.row_mut(i);
            for (k, out) in row.iter_mut().enumerate() {
                *out = rot.row(k).iter().zip(&z).map(|(a, b)| a * b).sum();
            }
        }
        Batch::classification(x, y)
    }
}

impl TaskStream for SyntheticStream {
    fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn task(&self, id: usize) -> Result<Task> {
        if id >= self.n_tasks {
            return Err(invalid!("task {} out of range ({} tasks)", id, self.n_tasks));
        }
        let means = self.means(id);
        let rot = self.rotation(id);
        let r = self.rng.split(id as u64);
        Ok(Task {
            id,
            train: self.sample(&means, &rot, self.samples, &mut r.split(2))?,
            eval: self.sample(&means, &rot, self.eval_samples, &mut r.split(3))?,
            permutation: None,
        })
    }
}
