mod common;

use std::sync::Arc;

use common::*;
use plasticity_core::continual::*;
use plasticity_core::network::{Batch, Loss, MlpSpec, ParamVector, Targets};
use plasticity_core::numerics::{DenseMatrix, RngStream};
use plasticity_core::regularizers::ErankConfig;

fn synthetic(tasks: usize, samples: usize, seed: u64) -> SyntheticStream {
    SyntheticStream::new(6, 3, tasks, samples, 300, RngStream::new(seed)).unwrap()
}

fn net(dims: &[usize]) -> Arc<MlpSpec> {
    Arc::new(MlpSpec::new(dims.to_vec(), Loss::SoftmaxCrossEntropy).unwrap())
}

fn cfg(alg: Algorithm) -> LearnerConfig {
    LearnerConfig {
        algorithm: alg,
        lr: 0.05,
        erank: ErankConfig {
            update_interval: 4,
            ..ErankConfig::default()
        },
        ..LearnerConfig::default()
    }
}

fn fake_images(n: usize, d: usize, seed: u64) -> Batch {
    let mut rng = RngStream::new(seed);
    let x = DenseMatrix::from_fn(n, d, |_, _| rng.below(256) as f64 / 255.0);
    Batch::classification(x, (0..n).map(|i| i % 10).collect()).unwrap()
}

#[test]
fn permuted_stream_shares_and_inverts_permutations() {
    let train = fake_images(50, 16, 1);
    let eval = fake_images(20, 16, 2);
    let s = PermutedStream::new(train.clone(), eval, 4, 30, 10, RngStream::new(3)).unwrap();
    let t = s.task(1).unwrap();
    let perm = t.permutation.clone().unwrap();
    assert_eq!(perm, s.permutation(1));
    let back = unpermute(&t.train.x, &perm);
    // every recovered row is bit-identical to some base row with the same label
    let Targets::Classes(ty) = &t.train.y else { panic!() };
    let Targets::Classes(by) = &train.y else { panic!() };
    for r in 0..back.rows() {
        let hit = (0..train.len()).any(|i| train.x.row(i) == back.row(r) && by[i] == ty[r]);
        assert!(hit);
    }
    assert_eq!(t.train.len(), 30);
    assert_eq!(t.eval.len(), 10);
    assert!(s.task(4).is_err());
}

#[test]
fn permutations_differ_between_tasks() {
    let s = PermutedStream::new(fake_images(5, 784, 4), fake_images(5, 784, 5), 200, 5, 5, RngStream::new(6)).unwrap();
    for a in 0..100 {
        assert_ne!(s.permutation(a), s.permutation(a + 100));
    }
}

#[test]
fn synthetic_stream_is_balanced_separated_and_deterministic() {
    let s = synthetic(3, 600, 7);
    let t = s.task(2).unwrap();
    let Targets::Classes(y) = &t.train.y else { panic!() };
    for k in 0..3 {
        let c = y.iter().filter(|&&v| v == k).count() as f64 / y.len() as f64;
        assert!((c - 1.0 / 3.0).abs() <= 0.05);
    }
    let m = s.means(2);
    for i in 0..3 {
        for j in 0..i {
            let d: f64 = (0..6).map(|k| (m.get(i, k) - m.get(j, k)).powi(2)).sum::<f64>().sqrt();
            assert!(d >= CLUSTER_SEPARATION);
        }
    }
    let again = synthetic(3, 600, 7).task(2).unwrap();
    assert_eq!(again.train.x, t.train.x);
    assert_ne!(s.task(1).unwrap().train.x, t.train.x);
}

#[test]
fn sgd_step_examples() {
    let spec = net(&[2, 2]);
    let mut p = ParamVector::from_flat(spec.clone(), vec![1.0; 6]).unwrap();
    let mut g = ParamVector::from_flat(spec.clone(), vec![0.5, -0.5, 0.0, 0.0, 0.1, 0.2]).unwrap();
    let mut st = OptimizerState::new(6);
    sgd_step(&mut p, &mut g, &mut st, 1.0, 0.0, 0.0);
    assert_eq!(p.as_slice(), &[0.5, 1.5, 1.0, 1.0, 0.9, 0.8]);

    let mut big = ParamVector::from_flat(spec.clone(), vec![6.0, 8.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let mut q = ParamVector::zeros(spec.clone());
    let n = sgd_step(&mut q, &mut big, &mut st, 1.0, 0.0, 0.5);
    assert_eq!(n, 0.5);
    assert!((q.norm() - 0.5).abs() < 1e-15);

    // momentum accumulates
    let mut st = OptimizerState::new(6);
    let mut q = ParamVector::zeros(spec.clone());
    for _ in 0..2 {
        let mut g = ParamVector::from_flat(spec.clone(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        sgd_step(&mut q, &mut g, &mut st, 0.1, 0.9, 0.0);
    }
    assert!((q.as_slice()[0] + 0.1 * (1.0 + 1.9)).abs() < 1e-15);
}

#[test]
fn weight_decay_alone_shrinks_the_norm() {
    let spec = net(&[3, 4, 2]);
    let mut p = random_params(&spec, 8);
    let mut st = OptimizerState::new(p.len());
    for _ in 0..20 {
        let before = p.norm();
        let mut g = p.zeros_like();
        g.axpy(2.0 * 1e-3, &p);
        sgd_step(&mut p, &mut g, &mut st, 0.1, 0.0, 0.0);
        assert!(p.norm() < before);
    }
}

#[test]
fn bp_learns_a_separable_task_in_one_epoch() {
    let s = SyntheticStream::new(4, 2, 1, 1000, 400, RngStream::new(9)).unwrap();
    let t = s.task(0).unwrap();
    let mut l = Learner::new(net(&[4, 16, 2]), cfg(Algorithm::Bp), 10).unwrap();
    l.train_task(&t, 1000 / 16).unwrap();
    assert!(evaluate(&l.params, &t.train).unwrap() >= 0.95);
}

#[test]
fn fresh_net_reaches_high_accuracy_on_synthetic_clusters() {
    let s = synthetic(1, 2000, 11);
    let t = s.task(0).unwrap();
    let mut l = Learner::new(net(&[6, 32, 3]), cfg(Algorithm::Bp), 12).unwrap();
    l.train_task(&t, 2000 / 16).unwrap();
    assert!(evaluate(&l.params, &t.eval).unwrap() > 0.8);
}

#[test]
fn degenerate_l2_er_matches_bp_bit_exactly() {
    let s = synthetic(2, 200, 13);
    let spec = net(&[6, 8, 8, 3]);
    let mut bp = Learner::new(spec.clone(), cfg(Algorithm::Bp), 14).unwrap();
    let mut c = cfg(Algorithm::L2Er);
    c.weight_decay = 0.0;
    c.erank.er_lr = 0.0;
    let mut l2er = Learner::new(spec, c, 14).unwrap();
    for id in 0..2 {
        let t = s.task(id).unwrap();
        bp.train_task(&t, 30).unwrap();
        l2er.train_task(&t, 30).unwrap();
    }
    assert_eq!(bp.params.as_slice(), l2er.params.as_slice());
}

#[test]
fn erank_updates_follow_the_window() {
    let s = synthetic(1, 200, 15);
    let t = s.task(0).unwrap();
    let mut l = Learner::new(net(&[6, 8, 8, 3]), cfg(Algorithm::L2Er), 16).unwrap();
    let m = l.train_task(&t, 14).unwrap();
    assert_eq!(m.er_updates, 3);
    assert!(m.last_erank_loss.unwrap() < 0.0);
    // ER steps move the parameters away from the degenerate run
    let mut c = cfg(Algorithm::L2Er);
    c.erank.er_lr = 0.0;
    let mut flat = Learner::new(net(&[6, 8, 8, 3]), c, 16).unwrap();
    flat.train_task(&t, 14).unwrap();
    assert_ne!(flat.params.as_slice(), l.params.as_slice());
}

#[test]
fn carryover_reset_and_snp_boundaries() {
    let s = synthetic(3, 100, 17);
    let spec = net(&[6, 8, 3]);
    for alg in [Algorithm::Bp, Algorithm::L2, Algorithm::Cbp, Algorithm::L2Er] {
        let mut l = Learner::new(spec.clone(), cfg(alg), 18).unwrap();
        l.train_task(&s.task(0).unwrap(), 10).unwrap();
        let end = l.params.clone();
        l.begin_task(1);
        assert_eq!(l.params.as_slice(), end.as_slice(), "{}", alg.name());
    }
    let mut r = Learner::new(spec.clone(), cfg(Algorithm::Reset), 18).unwrap();
    r.train_task(&s.task(0).unwrap(), 10).unwrap();
    r.begin_task(2);
    assert_eq!(r.params.as_slice(), r.fresh_params(2).as_slice());
    let mut snp = Learner::new(spec, cfg(Algorithm::Snp), 18).unwrap();
    snp.train_task(&s.task(0).unwrap(), 10).unwrap();
    let end = snp.params.clone();
    snp.begin_task(1);
    for (a, b) in snp.params.as_slice().iter().zip(end.as_slice()) {
        assert!((a - 0.9 * b).abs() < 1e-4);
    }
}

#[test]
fn cbp_rate_zero_leaves_params_and_forced_replacement_zeroes_outgoing() {
    let spec = net(&[4, 5, 3]);
    let p0 = random_params(&spec, 19);
    let b = random_batch(&spec, 8, 20);
    let (_, trace) = plasticity_core::network::forward(&p0, &b).unwrap();
    let mut p = p0.clone();
    let mut st = CbpState::new(&spec);
    let c = CbpConfig {
        replacement_rate: 0.0,
        maturity_threshold: 0,
        ..CbpConfig::default()
    };
    let mut rng = RngStream::new(21);
    for _ in 0..50 {
        cbp_maintenance(&mut p, &trace, &mut st, &c, &mut rng);
    }
    assert_eq!(p.as_slice(), p0.as_slice());
    reinit_unit(&mut p, &mut st, 0, 2, &mut rng);
    let w = p.weights(1);
    for k in 0..3 {
        assert_eq!(w[k * 5 + 2], 0.0);
    }
    assert_eq!(p.bias(0)[2], 0.0);
    assert_eq!(st.age[0][2], 0);
}

#[test]
fn cbp_replacement_count_matches_expectation_and_respects_maturity() {
    let spec = net(&[4, 100, 3]);
    let mut p = random_params(&spec, 22);
    let b = random_batch(&spec, 4, 23);
    let (_, trace) = plasticity_core::network::forward(&p, &b).unwrap();
    let mut st = CbpState::new(&spec);
    let c = CbpConfig {
        replacement_rate: 1e-2,
        decay_rate: 0.99,
        maturity_threshold: 0,
    };
    let mut rng = RngStream::new(24);
    for _ in 0..10_000 {
        cbp_maintenance(&mut p, &trace, &mut st, &c, &mut rng);
    }
    let expect = 1e4 * 1e-2 * 100.0;
    let sd = (1e4 * 100.0 * 1e-2 * (1.0 - 1e-2) as f64).sqrt();
    assert!((st.replaced as f64 - expect).abs() <= 3.0 * sd, "{}", st.replaced);

    let mut st = CbpState::new(&spec);
    let c = CbpConfig {
        replacement_rate: 0.5,
        decay_rate: 0.99,
        maturity_threshold: 50,
    };
    for _ in 0..49 {
        cbp_maintenance(&mut p, &trace, &mut st, &c, &mut rng);
    }
    assert_eq!(st.replaced, 0);
    cbp_maintenance(&mut p, &trace, &mut st, &c, &mut rng);
    assert!(st.replaced > 0);
    assert!(st.age[0].iter().zip(&st.utility[0]).all(|(&a, _)| a == 0 || a >= 50));
}

#[test]
fn evaluate_examples() {
    // single linear layer: identity weights so logits equal inputs
    let spec = net(&[3, 3]);
    let mut flat = vec![0.0; 12];
    for i in 0..3 {
        flat[i * 3 + i] = 1.0;
    }
    let p = ParamVector::from_flat(spec.clone(), flat).unwrap();
    let x = DenseMatrix::from_fn(6, 3, |r, c| if c == r % 3 { 1.0 } else { 0.0 });
    let perfect = Batch::classification(x.clone(), (0..6).map(|r| r % 3).collect()).unwrap();
    assert_eq!(evaluate(&p, &perfect).unwrap(), 1.0);
    let zero = ParamVector::zeros(spec.clone());
    assert!((evaluate(&zero, &perfect).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    // hand-counted: ties resolve to class 0
    let rows = [
        [1.0, 0.0, 0.0],
        [0.0, 2.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.0, 3.0],
        [1.0, 1.0, 1.0],
        [0.2, 0.1, 0.3],
        [0.0, 1.0, 0.0],
        [2.0, 0.0, 2.0],
        [0.0, 0.0, 0.0],
        [0.1, 0.2, 0.0],
    ];
    let labels = vec![0, 1, 1, 2, 2, 2, 1, 2, 0, 0];
    // predictions: 0,1,0,2,0,2,1,0,0,1 -> correct at 0,1,3,5,6,8
    let x = DenseMatrix::from_fn(10, 3, |r, c| rows[r][c]);
    let b = Batch::classification(x, labels).unwrap();
    assert!((evaluate(&p, &b).unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn experiment_emits_one_record_per_task_and_is_deterministic() {
    let s = synthetic(3, 120, 25);
    let exp = ExperimentConfig {
        layer_dims: vec![6, 10, 10, 3],
        learner: cfg(Algorithm::L2Er),
        n_tasks: 3,
        steps_per_task: 12,
        seed: 26,
        measure: MeasureConfig {
            spectrum_interval: 1,
            spectrum_batch: 40,
            ..MeasureConfig::default()
        },
    };
    let run = || {
        let mut l = Learner::new(exp.spec().unwrap(), exp.learner.clone(), exp.seed).unwrap();
        let mut out = Vec::new();
        run_experiment(&exp, &s, &mut l, 0, |r, _| {
            out.push(r.clone());
            Ok(())
        })
        .unwrap();
        (out, l.params)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a.iter().map(|r| r.task).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(pa.as_slice(), pb.as_slice());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.eval_acc, y.eval_acc);
        assert_eq!(x.eps_rank, y.eps_rank);
        assert!(x.eps_rank.is_some() && x.dead_count.is_some() && x.erank_mean().is_some());
    }
}

#[test]
fn resuming_mid_run_matches_an_uninterrupted_run() {
    let s = synthetic(4, 100, 27);
    let exp = ExperimentConfig {
        layer_dims: vec![6, 8, 3],
        learner: cfg(Algorithm::Cbp),
        n_tasks: 4,
        steps_per_task: 10,
        seed: 28,
        measure: MeasureConfig::default(),
    };
    let mut full = Learner::new(exp.spec().unwrap(), exp.learner.clone(), exp.seed).unwrap();
    let mut accs = Vec::new();
    run_experiment(&exp, &s, &mut full, 0, |r, _| {
        accs.push(r.eval_acc);
        Ok(())
    })
    .unwrap();

    let first = ExperimentConfig { n_tasks: 2, ..exp.clone() };
    let mut part = Learner::new(exp.spec().unwrap(), exp.learner.clone(), exp.seed).unwrap();
    run_experiment(&first, &s, &mut part, 0, |_, _| Ok(())).unwrap();
    let mut resumed = Learner::from_parts(
        exp.learner.clone(),
        exp.seed,
        part.params.clone(),
        part.opt.clone(),
        part.cbp.clone(),
        part.steps_taken,
    )
    .unwrap();
    let mut tail = Vec::new();
    run_experiment(&exp, &s, &mut resumed, 2, |r, _| {
        tail.push(r.eval_acc);
        Ok(())
    })
    .unwrap();
    assert_eq!(&accs[2..], &tail[..]);
    assert_eq!(full.params.as_slice(), resumed.params.as_slice());
}
