mod common;

use common::{exact_transport_cost, gae_oracle, BufferOracle};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sipp::nn::Matrix;
use sipp::ot::{cosine_cost, scores_to_sampling_weights, sinkhorn, CostMatrix, SimilarityScores, SinkhornParams};
use sipp::rl::{gae, normalize_advantages, uniform_partition, Action, Trajectory};
use sipp::sipp::ImitationBuffer;

fn tagged(ret: f64, tag: usize) -> Trajectory {
    let mut t = Trajectory::new(1);
    t.observations.push(vec![0.0]);
    t.actions.push(Action::Discrete(0));
    t.rewards.push(ret);
    t.log_probs.push(0.0);
    t.values.push(0.0);
    t.episode_return = ret;
    t.terminated = true;
    t.final_observation = vec![tag as f64];
    t
}

fn tags(b: &ImitationBuffer) -> Vec<usize> {
    let mut t: Vec<usize> = b.entries().iter().map(|e| e.trajectory.final_observation[0] as usize).collect();
    t.sort_unstable();
    t
}

fn gae_instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>, f64, f64, f64)> {
    (1usize..=20).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(any::<bool>(), n),
            -5.0..5.0f64,
            0.01..=1.0f64,
            0.01..=1.0f64,
        )
    })
}

fn cost_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=5, 1usize..=5).prop_flat_map(|(n, m)| prop::collection::vec(prop::collection::vec(0.0..2.0f64, m), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gae_equals_nested_sum((r, v, d, last, g, l) in gae_instance()) {
        let got = gae(&r, &v, last, &d, g, l).unwrap();
        let want = gae_oracle(&r, &v, last, &d, g, l);
        for (a, b) in got.advantages.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn match_buffer_keeps_first_maximum(rets in prop::collection::vec(0u8..6, 1..200)) {
        let mut b = ImitationBuffer::matching();
        let mut o = BufferOracle::default();
        for (tag, r) in rets.iter().enumerate() {
            b.offer(&tagged(*r as f64, tag));
            o.offer_match(*r as f64, tag);
            prop_assert_eq!(tags(&b), o.tags());
        }
    }

    #[test]
    fn replay_buffer_is_top_l_with_fifo_ties(
        rets in prop::collection::vec(-1i8..5, 1..300),
        cap in prop::sample::select(vec![1usize, 3, 10]),
    ) {
        let mut b = ImitationBuffer::replay(cap, 0.0).unwrap();
        let mut o = BufferOracle::default();
        for (tag, r) in rets.iter().enumerate() {
            b.offer(&tagged(*r as f64, tag));
            o.offer_replay(*r as f64, tag, cap, 0.0);
            prop_assert_eq!(tags(&b), o.tags());
            prop_assert!(b.len() <= cap);
        }
    }

    #[test]
    fn buffer_best_never_decreases(rets in prop::collection::vec(-3.0..3.0f64, 1..100)) {
        let mut m = ImitationBuffer::matching();
        let mut r = ImitationBuffer::replay(3, 0.0).unwrap();
        let (mut best_m, mut best_r) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (tag, x) in rets.iter().enumerate() {
            m.offer(&tagged(*x, tag));
            r.offer(&tagged(*x, tag));
            let bm = m.best_return().unwrap();
            prop_assert!(bm >= best_m);
            best_m = bm;
            if let Some(br) = r.best_return() {
                prop_assert!(br >= best_r);
                best_r = br;
            }
        }
    }

    #[test]
    fn sinkhorn_plans_are_feasible_and_near_exact(rows in cost_rows()) {
        let (n, m) = (rows.len(), rows[0].len());
        let cost = CostMatrix::from_matrix(Matrix::from_fn(n, m, |i, j| rows[i][j])).unwrap();
        let plan = sinkhorn(&cost, SinkhornParams { reg: 0.05, max_iters: 1_000_000, tol: 1e-6 }).unwrap();
        prop_assert!(plan.converged, "iterations {}", plan.iterations);
        for s in plan.row_sums() {
            prop_assert!((s - 1.0 / n as f64).abs() <= 1e-6);
        }
        for s in plan.col_sums() {
            prop_assert!((s - 1.0 / m as f64).abs() <= 1e-6);
        }
        prop_assert!(plan.coupling.as_slice().iter().all(|v| *v >= 0.0));
        // Entropic plans are feasible (up to the marginal tolerance), so they never beat the
        // exact optimum, and the gap is bounded by reg * ln(n m).
        let exact = exact_transport_cost(&rows);
        prop_assert!(plan.transport_cost >= exact - 1e-5, "{} < exact {exact}", plan.transport_cost);
        prop_assert!(plan.transport_cost - exact <= 0.05 * ((n * m) as f64).ln() + 1e-5, "{} vs exact {exact}", plan.transport_cost);
    }

    #[test]
    fn cosine_cost_is_bounded_and_symmetric(
        a in prop::collection::vec(-3.0..3.0f64, 3),
        b in prop::collection::vec(-3.0..3.0f64, 3),
    ) {
        let c = cosine_cost(&a, &b);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&c));
        prop_assert!((c - cosine_cost(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn sampling_weights_are_a_monotone_distribution(
        scores in prop::collection::vec(-3.0..0.0f64, 1..40),
        temp in 0.05..2.0f64,
    ) {
        let w = scores_to_sampling_weights(&SimilarityScores(scores.clone()), temp).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    prop_assert!(w[i] > w[j]);
                }
            }
        }
    }

    #[test]
    fn normalized_advantages_have_zero_mean_unit_std(mut adv in prop::collection::vec(-10.0..10.0f64, 2..64)) {
        let spread = adv.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - adv.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        normalize_advantages(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn partitions_cover_every_index_once(n in 1usize..300, bs in 1usize..80, seed in any::<u64>()) {
        let parts = uniform_partition(n, bs, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(parts.len(), n.div_ceil(bs));
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
