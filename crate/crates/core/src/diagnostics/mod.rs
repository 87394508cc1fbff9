//! Dead-unit census, task-shift geometry and the rank and trainability
//! bounds as executable checks.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::network::{activations, ParamVector};
use crate::numerics::{norm2, DenseMatrix, RngStream};

/// Status of one hidden unit over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitStatus {
    pub layer: usize,
    pub index: usize,
    pub max_preact: f64,
    pub is_dead: bool,
    /// `−max_preact` for dead units.
    pub margin: Option<f64>,
    /// Norm of the incoming weight row (bias excluded).
    pub w_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeadReport {
    pub units: Vec<UnitStatus>,
}

impl DeadReport {
    pub fn dead_count(&self) -> usize {
        self.units.iter().filter(|u| u.is_dead).count()
    }

    pub fn dead_in_layer(&self, layer: usize) -> usize {
        self.units.iter().filter(|u| u.layer == layer && u.is_dead).count()
    }

    pub fn unit(&self, layer: usize, index: usize) -> Option<&UnitStatus> {
        self.units.iter().find(|u| u.layer == layer && u.index == index)
    }
}

/// Exact per-unit maximum pre-activation over every row of `x`.
pub fn dead_census(params: &ParamVector, x: &DenseMatrix) -> Result<DeadReport> {
    if x.rows() == 0 {
        return Err(invalid!("dead census over an empty dataset"));
    }
    let trace = activations(params, x)?;
    let spec = params.spec();
    let mut units = Vec::new();
    for l in 0..spec.num_hidden() {
        let pre = &trace.pre[l];
        let (fan_in, fan_out) = spec.layer_shape(l);
        let w = params.weights(l);
        for j in 0..fan_out {
            let max_preact = (0..pre.rows()).map(|r| pre.get(r, j)).fold(f64::NEG_INFINITY, f64::max);
            let is_dead = max_preact <= 0.0;
            units.push(UnitStatus {
                layer: l,
                index: j,
                max_preact,
                is_dead,
                margin: is_dead.then_some(-max_preact),
                w_norm: norm2(&w[j * fan_in..(j + 1) * fan_in]),
            });
        }
    }
    Ok(DeadReport { units })
}

/// Makes unit `index` of the first hidden layer margin-dead (margin ≥ 1) on
/// any data inside the ball of radius `input_radius`.
pub fn force_dead(params: &mut ParamVector, index: usize, input_radius: f64) {
    let (fan_in, _) = params.spec().layer_shape(0);
    let (w, b) = params.layer_mut(0);
    let wn = norm2(&w[index * fan_in..(index + 1) * fan_in]);
    b[index] = -(wn * input_radius + 1.0);
}

/// Symmetric Hausdorff distance between two finite point sets (rows).
pub fn hausdorff(x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(invalid!("Hausdorff distance needs two non-empty sets"));
    }
    if x.cols() != y.cols() {
        return Err(invalid!("point sets have dimensions {} and {}", x.cols(), y.cols()));
    }
    Ok(libm::sqrt(directed_sq(x, y).max(directed_sq(y, x))))
}

fn directed_sq(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    (0..a.rows())
        .map(|i| {
            let p = a.row(i);
            (0..b.rows())
                .map(|j| p.iter().zip(b.row(j)).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Margin condition under which a dead unit stays dead after a shift of `Δ`.
pub fn persistence_indicator(margin: f64, w_norm: f64, shift: f64) -> bool {
    margin >= shift * w_norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankBound {
    pub params: usize,
    pub rank_bound: usize,
}

/// Parameter count of an `I → H → O` network and the Hessian rank bound with
/// `k_dead` dead hidden units.
pub fn thm1_bound(inputs: usize, hidden: usize, outputs: usize, k_dead: usize) -> Result<RankBound> {
    if k_dead > hidden {
        return Err(invalid!("{} dead units exceed hidden width {}", k_dead, hidden));
    }
    let params = hidden * (inputs + 1) + outputs * (hidden + 1);
    Ok(RankBound {
        params,
        rank_bound: params - k_dead * (inputs + outputs + 1),
    })
}

/// One-sided Chebyshev bound on `Pr(Σ ξ_j ≤ n − m)` for independent
/// indicators with `Pr(ξ_j = 1) = p_j`. May exceed 1.
pub fn cantelli_trainability_bound(p: &[f64], n: usize, m: usize) -> Result<f64> {
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(invalid!("probabilities must lie in [0, 1]"));
    }
    let mean: f64 = p.iter().sum();
    let threshold = n as f64 - m as f64;
    let gap = mean - threshold;
    if gap < 0.0 {
        return Err(Error::Inapplicable(alloc::format!(
            "expected count {} is below n - m = {}",
            mean,
            threshold
        )));
    }
    if gap == 0.0 {
        return Err(Error::Inapplicable("expected count equals n - m".into()));
    }
    let var: f64 = p.iter().map(|v| v * (1.0 - v)).sum();
    Ok(var / (gap * gap))
}

/// `1 − 2·exp(ln N − N·(μ/(‖w‖·r))^d)`, unclamped.
pub fn pj_lower_bound(margin: f64, w_norm: f64, radius: f64, dim: usize, samples: usize) -> f64 {
    let n = samples as f64;
    let ratio = margin / (w_norm * radius);
    1.0 - 2.0 * libm::exp(libm::log(n) - n * libm::pow(ratio, dim as f64))
}

/// `n` points uniform in the ball of radius `r` in `R^d`.
pub fn uniform_ball(n: usize, radius: f64, dim: usize, rng: &mut RngStream) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, dim);
    for i in 0..n {
        let row = m.row_mut(i);
        loop {
            for v in row.iter_mut() {
                *v = rng.gaussian();
            }
            if norm2(row) > 0.0 {
                break;
            }
        }
        let scale = radius * libm::pow(rng.uniform01(), 1.0 / dim as f64) / norm2(row);
        row.iter_mut().for_each(|v| *v *= scale);
    }
    m
}

/// Two independent uniform samples from the ball, drawn from splits 0 and 1.
pub fn uniform_ball_tasks(n: usize, radius: f64, dim: usize, rng: &RngStream) -> Result<(DenseMatrix, DenseMatrix)> {
    if n == 0 || dim == 0 || !(radius > 0.0) {
        return Err(invalid!("need N >= 1, d >= 1 and r > 0"));
    }
    Ok((
        uniform_ball(n, radius, dim, &mut rng.split(0)),
        uniform_ball(n, radius, dim, &mut rng.split(1)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn bound_arithmetic() {
        assert_eq!(thm1_bound(3, 4, 2, 0).unwrap(), RankBound { params: 26, rank_bound: 26 });
        assert_eq!(thm1_bound(3, 4, 2, 1).unwrap().rank_bound, 20);
        assert!(thm1_bound(3, 4, 2, 5).is_err());
    }

    #[test]
    fn cantelli_examples() {
        assert_eq!(cantelli_trainability_bound(&[1.0; 6], 6, 2).unwrap(), 0.0);
        let b = cantelli_trainability_bound(&[0.9; 10], 10, 3).unwrap();
        assert!((b - 0.225).abs() < 1e-12);
        assert!(matches!(cantelli_trainability_bound(&[0.1; 3], 3, 0), Err(Error::Inapplicable(_))));
        assert!(matches!(cantelli_trainability_bound(&[0.5; 4], 4, 2), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn pj_examples() {
        let b = pj_lower_bound(0.5, 1.0, 1.0, 2, 100);
        let want = 1.0 - 2.0 * libm::exp(libm::log(100.0) - 25.0);
        assert!((b - want).abs() < 1e-15);
        assert!((1.0 - b - 2.8e-9).abs() < 1e-10);
        let vac = pj_lower_bound(0.1, 1.0, 1.0, 10, 100);
        assert!((vac + 199.0).abs() < 1e-3);
    }

    #[test]
    fn persistence_examples() {
        assert!(persistence_indicator(1.0, 2.0, 0.4));
        assert!(!persistence_indicator(0.0, 1.0, 0.1));
    }

    #[test]
    fn hausdorff_examples() {
        let a = DenseMatrix::new(1, 1, vec![0.0]).unwrap();
        let b = DenseMatrix::new(1, 1, vec![1.0]).unwrap();
        assert_eq!(hausdorff(&a, &b).unwrap(), 1.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert!(hausdorff(&a, &DenseMatrix::zeros(0, 1)).is_err());
    }
}
