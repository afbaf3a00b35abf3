use sipp::envs::EnvId;
use sipp::harness::{train, train_match, train_ppo, train_replay, Algorithm, TrainConfig, Trainer};

fn small(algorithm: Algorithm, env: EnvId) -> TrainConfig {
    TrainConfig {
        n_steps: 150,
        batch_size: 64,
        n_epochs: 2,
        hidden: vec![16, 16],
        total_steps: 450,
        eval_interval: 2,
        eval_episodes: 3,
        ..TrainConfig::defaults(algorithm, env)
    }
}

#[test]
fn gradient_steps_follow_from_the_config() {
    for alg in [Algorithm::Ppo, Algorithm::SippMatch] {
        let cfg = TrainConfig { xi: if alg == Algorithm::Ppo { 0.0 } else { 0.5 }, ..small(alg, EnvId::DensePoint) };
        let t = train(cfg.clone()).unwrap();
        let iterations = t.metrics().records.len();
        assert_eq!(iterations, 3);
        let steps: usize = t.metrics().records.iter().map(|r| r.grad_steps).sum();
        assert_eq!(steps, cfg.n_steps.div_ceil(cfg.batch_size) * cfg.n_epochs * iterations, "{alg}");
        assert_eq!(t.learner().optimizer.step_count() as usize, steps);
    }
}

#[test]
fn match_bookkeeping_follows_the_hand_stepped_trace() {
    // Horizon 200 with 120-step rollouts: no episode ends in iteration 1, the first one
    // ends in iteration 2 (step 200), none in iteration 3 (steps 240..360).
    for xi in [0.0, 1.0] {
        let cfg = TrainConfig {
            xi,
            n_steps: 120,
            total_steps: 360,
            ..small(Algorithm::SippMatch, EnvId::DensePoint)
        };
        let t = train_match(cfg.clone()).unwrap();
        let r = &t.metrics().records;
        let per_iter = cfg.n_steps.div_ceil(cfg.batch_size) * cfg.n_epochs;

        assert_eq!(r[0].episodes, 0);
        assert_eq!(r[0].buffer_len, 0);
        assert_eq!((r[0].uniform_batches, r[0].prioritized_batches), (per_iter, 0), "empty buffer samples uniformly");
        assert_eq!(r[0].sinkhorn_converged, None);

        assert_eq!(r[1].episodes, 1);
        assert_eq!(r[1].buffer_len, 1);
        assert_eq!(r[1].buffer_best, r[1].mean_return, "the only finished episode is stored");
        let want = if xi == 1.0 { (0, per_iter) } else { (per_iter, 0) };
        assert_eq!((r[1].uniform_batches, r[1].prioritized_batches), want, "xi {xi}");
        assert_eq!(r[1].sinkhorn_converged.is_some(), xi > 0.0);

        assert_eq!(r[2].episodes, 0);
        assert_eq!(r[2].buffer_best, r[1].buffer_best);
        assert_eq!((r[2].uniform_batches, r[2].prioritized_batches), want);
        assert_eq!(t.buffer().best_return(), r[1].mean_return);
    }
}

#[test]
fn replay_cold_start_explores_then_pure_imitation_stops_env_steps() {
    let cfg = TrainConfig {
        xi: 1.0,
        total_steps: 3000,
        n_steps: 256,
        ..small(Algorithm::SippReplay, EnvId::SparseMaze)
    };
    let t = train_replay(cfg.clone()).unwrap();
    let r = &t.metrics().records;
    assert_eq!(r[0].imitation_trajectories, 0, "the first iteration has nothing to imitate");
    assert!(r[0].exploration_trajectories > 0);
    let first_full = r.iter().position(|x| x.buffer_len > 0).expect("a random walk reaches a goal");
    for rec in &r[first_full + 1..] {
        assert_eq!(rec.exploration_trajectories, 0);
        assert_eq!(rec.env_steps, r[first_full].env_steps, "replayed steps are free");
    }
    // The run still ends, through the trained-transition cap.
    assert!(t.is_done());
    assert!(t.env_steps() < cfg.total_steps);
}

#[test]
fn replay_source_counts_are_bernoulli() {
    let xi = 0.3;
    let cfg = TrainConfig {
        xi,
        total_steps: 40_000,
        n_steps: 512,
        eval_interval: 1000,
        ..small(Algorithm::SippReplay, EnvId::SparseMaze)
    };
    let t = train_replay(cfg).unwrap();
    let r = &t.metrics().records;
    let (mut imitation, mut total) = (0u64, 0u64);
    for w in r.windows(2) {
        if w[0].buffer_len > 0 {
            imitation += w[1].imitation_trajectories;
            total += w[1].imitation_trajectories + w[1].exploration_trajectories;
        }
    }
    assert!(total > 200, "too few draws: {total}");
    let p = imitation as f64 / total as f64;
    let sigma = (xi * (1.0 - xi) / total as f64).sqrt();
    assert!((p - xi).abs() <= 2.0 * sigma, "imitation fraction {p} over {total} draws");
}

#[test]
fn counters_and_buffer_best_are_monotone() {
    for (alg, env) in [
        (Algorithm::Ppo, EnvId::SparseMaze),
        (Algorithm::SippMatch, EnvId::DensePoint),
        (Algorithm::SippReplay, EnvId::SparseMaze),
        (Algorithm::SippReplayRnd, EnvId::MaskedMaze),
    ] {
        let t = train(TrainConfig { total_steps: 1500, ..small(alg, env) }).unwrap();
        let r = &t.metrics().records;
        for w in r.windows(2) {
            assert_eq!(w[1].iteration, w[0].iteration + 1);
            assert!(w[1].timesteps > w[0].timesteps);
            assert!(w[1].env_steps >= w[0].env_steps);
            if let (Some(a), Some(b)) = (w[0].buffer_best, w[1].buffer_best) {
                assert!(b >= a, "{alg}: buffer best fell from {a} to {b}");
            }
        }
        let last = r.last().unwrap();
        assert!(last.eval_return.is_some(), "the final iteration is always evaluated");
        assert_eq!(last.eval_success.is_some(), env.is_sparse());
    }
}

#[test]
fn entry_points_reject_the_wrong_algorithm() {
    assert!(train_match(small(Algorithm::SippReplay, EnvId::SparseMaze)).is_err());
    assert!(train_replay(small(Algorithm::SippMatch, EnvId::DensePoint)).is_err());
    // train_ppo runs any config as plain PPO.
    let t = train_ppo(small(Algorithm::SippMatch, EnvId::DensePoint)).unwrap();
    assert_eq!(t.config().algorithm, Algorithm::Ppo);
    assert_eq!(t.metrics().records.iter().map(|r| r.prioritized_batches).sum::<usize>(), 0);
}

#[test]
fn checkpoint_round_trip_continues_identically() {
    let cfg = TrainConfig { total_steps: 1500, ..small(Algorithm::SippReplayRnd, EnvId::MaskedMaze) };
    let mut a = Trainer::new(cfg.clone()).unwrap();
    for _ in 0..3 {
        a.step().unwrap();
    }
    let mut b = Trainer::from_checkpoint_json(&a.to_checkpoint_json().unwrap()).unwrap();
    a.run().unwrap();
    b.run().unwrap();
    assert!(a.metrics().same_trace(b.metrics()));
    assert_eq!(a.params(), b.params());
}

#[test]
fn invalid_configs_are_rejected_before_training() {
    let bad = TrainConfig { xi: 1.5, ..small(Algorithm::SippReplay, EnvId::SparseMaze) };
    let err = Trainer::new(bad).unwrap_err();
    assert_eq!(err.category(), "config");
    assert!(err.to_string().contains("xi"), "{err}");
}
