mod common;

use common::*;
use plasticity_core::diagnostics::*;
use plasticity_core::network::{Loss, ParamVector};
use plasticity_core::numerics::{DenseMatrix, RngStream};
use plasticity_core::spectral::{exact_hessian, numeric_rank};
use proptest::prelude::*;

fn points(n: usize, d: usize, seed: u64) -> DenseMatrix {
    let mut rng = RngStream::new(seed);
    DenseMatrix::from_fn(n, d, |_, _| rng.gaussian())
}

/// Per-sample, per-unit recomputation of the first hidden layer.
fn brute_max_preact(p: &ParamVector, x: &DenseMatrix, unit: usize) -> f64 {
    let (fan_in, _) = p.spec().layer_shape(0);
    let w = &p.weights(0)[unit * fan_in..(unit + 1) * fan_in];
    let b = p.bias(0)[unit];
    (0..x.rows())
        .map(|r| {
            let mut z = b;
            for k in 0..fan_in {
                z += w[k] * x.get(r, k);
            }
            z
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn negative_bias_zero_weights_is_dead_with_margin() {
    let s = spec(&[3, 2, 2], Loss::SoftmaxCrossEntropy);
    let mut p = random_params(&s, 1);
    {
        let (w, b) = p.layer_mut(0);
        w.iter_mut().for_each(|v| *v = 0.0);
        b[0] = -5.0;
        b[1] = 1.0;
    }
    let rep = dead_census(&p, &points(10, 3, 2)).unwrap();
    let u = rep.unit(0, 0).unwrap();
    assert!(u.is_dead);
    assert_eq!(u.margin, Some(5.0));
    let alive = rep.unit(0, 1).unwrap();
    assert!(!alive.is_dead && alive.margin.is_none());
    assert!(dead_census(&p, &DenseMatrix::zeros(0, 3)).is_err());
}

#[test]
fn census_matches_brute_force() {
    let s = spec(&[4, 12, 3], Loss::SoftmaxCrossEntropy);
    let mut p = random_params(&s, 3);
    p.layer_mut(0).1.iter_mut().for_each(|b| *b -= 1.5);
    let x = points(6, 4, 4);
    let rep = dead_census(&p, &x).unwrap();
    let mut brute_dead = 0;
    for j in 0..12 {
        let m = brute_max_preact(&p, &x, j);
        let u = rep.unit(0, j).unwrap();
        assert!((u.max_preact - m).abs() < 1e-12);
        if m <= 0.0 {
            brute_dead += 1;
        }
    }
    assert_eq!(rep.dead_in_layer(0), brute_dead);
    assert!(brute_dead > 0 && brute_dead < 12);
}

#[test]
fn census_is_monotone_in_data() {
    let s = spec(&[3, 20, 8, 2], Loss::SoftmaxCrossEntropy);
    let mut p = random_params(&s, 5);
    p.layer_mut(0).1.iter_mut().for_each(|b| *b -= 0.5);
    let x = points(30, 3, 6);
    let small = dead_census(&p, &DenseMatrix::new(10, 3, x.as_slice()[..30].to_vec()).unwrap()).unwrap();
    let large = dead_census(&p, &x).unwrap();
    for (a, b) in small.units.iter().zip(&large.units) {
        assert!(!(b.is_dead && !a.is_dead), "alive unit turned dead when data was added");
    }
}

#[test]
fn hausdorff_matches_double_loop_oracle() {
    let a = points(50, 3, 7);
    let b = points(50, 3, 8);
    let mut ab: f64 = 0.0;
    for i in 0..50 {
        let mut best = f64::INFINITY;
        for j in 0..50 {
            let d = ((a.get(i, 0) - b.get(j, 0)).powi(2) + (a.get(i, 1) - b.get(j, 1)).powi(2) + (a.get(i, 2) - b.get(j, 2)).powi(2)).sqrt();
            best = best.min(d);
        }
        ab = ab.max(best);
    }
    let mut ba: f64 = 0.0;
    for j in 0..50 {
        let mut best = f64::INFINITY;
        for i in 0..50 {
            let d = ((a.get(i, 0) - b.get(j, 0)).powi(2) + (a.get(i, 1) - b.get(j, 1)).powi(2) + (a.get(i, 2) - b.get(j, 2)).powi(2)).sqrt();
            best = best.min(d);
        }
        ba = ba.max(best);
    }
    assert!((hausdorff(&a, &b).unwrap() - ab.max(ba)).abs() <= 1e-15);
}

#[test]
fn forced_dead_unit_lowers_hessian_rank_to_bound() {
    let s = spec(&[3, 4, 2], Loss::SoftmaxCrossEntropy);
    let mut p = random_params(&s, 9);
    let (x, _) = uniform_ball_tasks(30, 1.0, 3, &RngStream::new(10)).unwrap();
    force_dead(&mut p, 2, 1.0);
    let rep = dead_census(&p, &x).unwrap();
    let u = rep.unit(0, 2).unwrap();
    assert!(u.is_dead && u.margin.unwrap() >= 1.0);
    let mut b = random_batch(&s, 30, 11);
    b.x = x;
    let h = exact_hessian(&p, &b).unwrap();
    let bound = thm1_bound(3, 4, 2, 1).unwrap();
    assert_eq!(bound.params, p.len());
    assert!(numeric_rank(&h).unwrap() <= bound.rank_bound);
}

#[test]
fn uniform_ball_radius_moment_and_determinism() {
    for d in [1, 2, 5] {
        let mut rng = RngStream::new(12 + d as u64);
        let x = uniform_ball(100_000, 2.0, d, &mut rng);
        let mut mean = 0.0;
        for i in 0..x.rows() {
            let n = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= 2.0 + 1e-12);
            mean += n / 2.0;
        }
        mean /= x.rows() as f64;
        assert!((mean - d as f64 / (d as f64 + 1.0)).abs() < 0.01, "d={d}: {mean}");
    }
    let a = uniform_ball_tasks(20, 1.0, 2, &RngStream::new(5)).unwrap();
    let b = uniform_ball_tasks(20, 1.0, 2, &RngStream::new(5)).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_ne!(a.0, a.1);
}

#[test]
fn cantelli_holds_against_small_simulation() {
    let p = [0.9, 0.8, 0.95, 0.7, 0.85, 0.9];
    let bound = cantelli_trainability_bound(&p, 6, 2).unwrap();
    let mut rng = RngStream::new(14);
    let trials = 20_000;
    let hits = (0..trials)
        .filter(|_| p.iter().filter(|&&q| rng.uniform01() < q).count() <= 4)
        .count();
    assert!((hits as f64 / trials as f64) <= bound);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hausdorff_is_a_metric_on_finite_sets(seed in 0u64..10_000, n1 in 1usize..12, n2 in 1usize..12, n3 in 1usize..12) {
        let a = points(n1, 2, seed);
        let b = points(n2, 2, seed + 1);
        let c = points(n3, 2, seed + 2);
        let ab = hausdorff(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff(&b, &a).unwrap());
        prop_assert!(ab <= hausdorff(&a, &c).unwrap() + hausdorff(&c, &b).unwrap() + 1e-12);
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn persistence_implies_dead_on_shifted_set(seed in 0u64..100_000) {
        let rng = RngStream::new(seed);
        let (x, y) = uniform_ball_tasks(40, 1.0, 2, &rng).unwrap();
        let mut r = rng.split(2);
        let w = [r.gaussian(), r.gaussian()];
        let wn = (w[0] * w[0] + w[1] * w[1]).sqrt();
        let b = -r.uniform(0.0, 2.0) * wn;
        let max_on = |m: &DenseMatrix| (0..m.rows()).map(|i| w[0] * m.get(i, 0) + w[1] * m.get(i, 1) + b).fold(f64::NEG_INFINITY, f64::max);
        let mx = max_on(&x);
        prop_assume!(mx <= 0.0);
        if persistence_indicator(-mx, wn, hausdorff(&x, &y).unwrap()) {
            prop_assert!(max_on(&y) <= 0.0);
        }
    }
}
