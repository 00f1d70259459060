mod common;

use distillrec::distill::kl_divergence;
use distillrec::envsim::{make_fixture_mdp, validate_chain, FeedbackVector, TabularEnv, TabularMdp};
use distillrec::evalkit::{average_precision, bellman_backup, ndcg_at_k, precision_at_k, sup_norm_diff, value_iteration};
use distillrec::nnkit::{entropy, softmax_tau, Params};
use distillrec::teacher::{ReplayBuffer, TeacherConfig, TeacherDims, TeacherNet, TeacherTrainer};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..60)
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..30).prop_filter_map("non-zero mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-3).then(|| w.iter().map(|v| v / s).collect())
    })
}

/// Random MDP from a seed: Dirichlet-like rows and rewards in [0, 1].
fn random_mdp(seed: u64, n_s: usize, n_a: usize, gamma: f64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![vec![vec![0.0; n_s]; n_a]; n_s];
    let mut r = vec![vec![0.0; n_a]; n_s];
    for s in 0..n_s {
        for a in 0..n_a {
            let w: Vec<f64> = (0..n_s).map(|_| rng.random::<f64>()).collect();
            let total: f64 = w.iter().sum();
            p[s][a] = w.iter().map(|v| v / total).collect();
            r[s][a] = rng.random();
        }
    }
    TabularMdp::new(vec![p], vec![r], gamma).unwrap()
}

proptest! {
    #[test]
    fn softmax_lies_on_the_simplex(q in scores(), tau in 0.005f64..10.0) {
        let p = softmax_tau(&q, tau).unwrap();
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn softmax_ignores_shifts(q in scores(), tau in 0.01f64..10.0, c in -100.0f64..100.0) {
        let a = softmax_tau(&q, tau).unwrap();
        let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
        let b = softmax_tau(&shifted, tau).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_scales_with_temperature(q in scores(), tau in 0.01f64..10.0, c in 0.1f64..10.0) {
        let a = softmax_tau(&q, tau).unwrap();
        let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
        let b = softmax_tau(&scaled, tau * c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn entropy_grows_with_temperature(q in scores(), t1 in 0.01f64..5.0, dt in 0.0f64..5.0) {
        let cold = entropy(&softmax_tau(&q, t1).unwrap());
        let warm = entropy(&softmax_tau(&q, t1 + dt).unwrap());
        prop_assert!(cold <= warm + 1e-12);
        prop_assert!(warm <= (q.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn kl_is_non_negative(pq in (2usize..30).prop_flat_map(|n| (
        prop::collection::vec(0.001f64..1.0, n),
        prop::collection::vec(0.001f64..1.0, n),
    ))) {
        let norm = |w: &[f64]| { let s: f64 = w.iter().sum(); w.iter().map(|v| v / s).collect::<Vec<_>>() };
        let (p, q) = (norm(&pq.0), norm(&pq.1));
        let d = kl_divergence(&p, &q).unwrap();
        prop_assert!(d >= -1e-12);
        let gap = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        // Pinsker: KL >= ||p - q||_1^2 / 2
        prop_assert!(d + 1e-12 >= gap * gap / 2.0);
    }

    #[test]
    fn kl_vanishes_on_identical_inputs(p in distribution()) {
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn replay_keeps_the_newest_items_in_order(cap in 1usize..50, n in 0usize..200) {
        let mut buf = ReplayBuffer::new(cap).unwrap();
        for i in 0..n {
            buf.push(i);
        }
        let kept: Vec<usize> = buf.iter().copied().collect();
        let expected: Vec<usize> = (n.saturating_sub(cap)..n).collect();
        prop_assert_eq!(kept, expected);
        prop_assert_eq!(buf.inserted(), n as u64);
        prop_assert!(buf.len() <= cap);
    }

    #[test]
    fn chain_validation_matches_definition(values in prop::collection::vec(0u8..3, 0..6)) {
        let valid = values.iter().all(|&v| v <= 1) && values.windows(2).all(|w| w[1] <= w[0]);
        prop_assert_eq!(validate_chain(&values).is_ok(), valid);
        prop_assert_eq!(FeedbackVector::new(values.clone()).is_ok(), valid);
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed in any::<u64>(), n in 5usize..40, k in 1usize..5, n_rel in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.shuffle(&mut rng);
        let relevant: Vec<usize> = (0..n_rel.min(n)).map(|_| rng.random_range(0..n)).collect();
        for v in [
            precision_at_k(&ranked, &relevant, k).unwrap(),
            ndcg_at_k(&ranked, &relevant, k).unwrap(),
            average_precision(&ranked, &relevant),
        ] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{}", v);
        }
    }

    #[test]
    fn cutoff_metrics_ignore_order_below_k(seed in any::<u64>(), n in 6usize..40, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.shuffle(&mut rng);
        let relevant: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
        let mut tail_shuffled = ranked.clone();
        tail_shuffled[k..].shuffle(&mut rng);
        prop_assert_eq!(
            precision_at_k(&ranked, &relevant, k).unwrap(),
            precision_at_k(&tail_shuffled, &relevant, k).unwrap()
        );
        prop_assert_eq!(ndcg_at_k(&ranked, &relevant, k).unwrap(), ndcg_at_k(&tail_shuffled, &relevant, k).unwrap());
    }

    #[test]
    fn bellman_backup_contracts(seed in any::<u64>(), gamma in 0.0f64..0.95, n_s in 1usize..6, n_a in 1usize..5) {
        let mdp = random_mdp(seed, n_s, n_a, gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut q = || (0..n_s).map(|_| (0..n_a).map(|_| rng.random_range(-3.0..3.0)).collect()).collect::<Vec<Vec<f64>>>();
        let (q1, q2) = (q(), q());
        let before = sup_norm_diff(&q1, &q2);
        let after = sup_norm_diff(&bellman_backup(&mdp, 0, &q1), &bellman_backup(&mdp, 0, &q2));
        prop_assert!(after <= gamma * before + 1e-12);
    }

    #[test]
    fn value_iteration_reaches_a_fixed_point(seed in any::<u64>(), gamma in 0.0f64..0.9, n_s in 1usize..6, n_a in 1usize..5) {
        let mdp = random_mdp(seed, n_s, n_a, gamma);
        let q = value_iteration(&mdp, 0, 1e-10).unwrap();
        let residual = sup_norm_diff(&bellman_backup(&mdp, 0, &q), &q);
        prop_assert!(residual <= 1e-10);
        let bound = 1.0 / (1.0 - gamma) + 1e-9;
        prop_assert!(q.iter().flatten().all(|v| (-1e-12..=bound).contains(v)));
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(16).unwrap();
    for i in 0..40 {
        buf.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 160_000;
    let mut counts = [0usize; 16];
    for i in buf.sample_indices(draws, &mut rng).unwrap() {
        counts[i] += 1;
    }
    let expected = draws as f64 / 16.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 15 degrees of freedom; the 0.999 quantile is 37.7
    assert!(chi2 < 37.7, "chi2 {chi2} counts {counts:?}");
    assert!(ReplayBuffer::<u8>::new(0).is_err());
    assert!(ReplayBuffer::<u8>::new(4).unwrap().sample_indices(1, &mut rng).is_err());
}

#[test]
fn target_network_lags_by_the_sync_interval() {
    let mdp = make_fixture_mdp("chain-4", 0.6).unwrap();
    let dims = TeacherDims {
        feature_dim: 4,
        action_dim: 2,
        hidden: vec![8],
        encoder: None,
        encoder_frozen: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = TeacherNet::init(&dims, 0.01, &mut rng).unwrap();
    let env = TabularEnv::new(mdp, 0, 10, 4).unwrap();
    let cfg = TeacherConfig {
        target_sync: 7,
        batch_size: 4,
        ..TeacherConfig::default()
    };
    let mut trainer = TeacherTrainer::new(0, net, env, cfg, rng).unwrap();
    let mut synced = trainer.target().flatten();
    for step in 1..=50 {
        trainer.step(0).unwrap();
        let target = trainer.target().flatten();
        if step % 7 == 0 {
            assert_eq!(target, trainer.net().flatten(), "step {step}");
            synced = target;
        } else {
            assert_eq!(target, synced, "target moved off-schedule at step {step}");
            assert_ne!(target, trainer.net().flatten());
        }
    }
}

#[test]
fn simulated_feedback_always_forms_a_chain() {
    let mut w = common::world(20, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for user in 0..20 {
        w.env.begin_session(user).unwrap();
        for _ in 0..w.cfg.env.session_len {
            let (fb, _, _) = w.env.step_feedback(rng.random_range(0..w.actions.rows())).unwrap();
            validate_chain(fb.as_slice()).unwrap();
        }
    }
}
