use advmm::nn::Transition;
use advmm::rl::dqn::{DqnAgent, DqnConfig, EpsilonSchedule};
use advmm::rl::sac::{SacAgent, SacConfig};
use advmm::selftest::gradient_errors;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sac_batch(rng: &mut ChaCha8Rng, d: usize) -> Vec<Transition<Vec<f64>>> {
    (0..16)
        .map(|_| Transition {
            obs: (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: (0..d).map(|_| rng.gen_range(-0.9..0.9)).collect(),
            reward: rng.gen_range(-1.0..1.0),
            next_obs: (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            done: rng.gen_bool(0.1),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn loss_gradients_match_finite_differences(seed in any::<u64>()) {
        let errs = gradient_errors(2, seed).unwrap();
        for e in errs {
            prop_assert!(e <= 1e-4, "{errs:?}");
        }
    }

    #[test]
    fn epsilon_schedule_is_monotone_and_bounded(total in 1u64..100_000, a in 0u64..200_000, b in 0u64..200_000) {
        let s = EpsilonSchedule::new(total);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(s.value(hi) <= s.value(lo));
        prop_assert!((0.05..=1.0).contains(&s.value(lo)));
    }
}

#[test]
fn epsilon_anneals_over_first_fifth() {
    let s = EpsilonSchedule::new(1000);
    assert_eq!(s.value(0), 1.0);
    assert!((s.value(100) - 0.525).abs() < 1e-12);
    assert_eq!(s.value(200), 0.05);
    assert_eq!(s.value(999), 0.05);
}

#[test]
fn sac_targets_are_polyak_averaged() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = SacConfig { hidden: vec![8, 8], ..SacConfig::new(5, vec![0.0, 0.0], vec![3.0, 3.0]) };
    let mut agent = SacAgent::new(&cfg, &mut rng).unwrap();
    let old_target = agent.q1_target.clone();
    let batch = sac_batch(&mut rng, 2);
    let refs: Vec<_> = batch.iter().collect();
    agent.train_step(&refs, &mut rng).unwrap();
    for (t, (o, q)) in agent
        .q1_target
        .tensors()
        .iter()
        .zip(old_target.tensors().iter().zip(agent.q1.tensors()))
    {
        for i in 0..t.len() {
            let want = 0.995 * o[i] + 0.005 * q[i];
            assert!((t[i] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn sac_train_step_is_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = SacConfig { hidden: vec![8, 8], ..SacConfig::new(5, vec![-1.0], vec![1.0]) };
        let mut agent = SacAgent::new(&cfg, &mut rng).unwrap();
        let batch = sac_batch(&mut rng, 1);
        let refs: Vec<_> = batch.iter().collect();
        let losses: Vec<_> = (0..5).map(|_| agent.train_step(&refs, &mut rng).unwrap()).collect();
        (losses, agent.policy.actor.clone(), agent.log_alpha)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn temperature_falls_when_entropy_exceeds_target() {
    // A fresh actor is near-uniform on (−1, 1), far above the −1 target.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = SacConfig { hidden: vec![8, 8], ..SacConfig::new(5, vec![-1.0], vec![1.0]) };
    let mut agent = SacAgent::new(&cfg, &mut rng).unwrap();
    let batch = sac_batch(&mut rng, 1);
    let refs: Vec<_> = batch.iter().collect();
    for _ in 0..20 {
        agent.train_step(&refs, &mut rng).unwrap();
    }
    assert!(agent.alpha() < 1.0);
}

#[test]
fn dqn_target_is_copied_every_period() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = DqnConfig { hidden: vec![8], target_update_period: 3, lr: 1e-2, ..DqnConfig::new(2, 2) };
    let mut agent = DqnAgent::new(&cfg, &mut rng).unwrap();
    let batch: Vec<_> = (0..8)
        .map(|i| Transition { obs: vec![i as f64, 1.0], action: i % 2, reward: 1.0, next_obs: vec![0.0, 0.0], done: true })
        .collect();
    let refs: Vec<_> = batch.iter().collect();
    let initial = agent.target.clone();
    agent.train_step(&refs).unwrap();
    agent.train_step(&refs).unwrap();
    assert_eq!(agent.target, initial);
    assert_ne!(agent.q, initial);
    agent.train_step(&refs).unwrap();
    assert_eq!(agent.target, agent.q);
}

#[test]
fn dqn_fits_terminal_rewards() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = DqnConfig { hidden: vec![16], lr: 1e-2, ..DqnConfig::new(1, 2) };
    let mut agent = DqnAgent::new(&cfg, &mut rng).unwrap();
    let batch: Vec<_> = (0..32)
        .map(|i| Transition { obs: vec![1.0], action: i % 2, reward: if i % 2 == 0 { 0.2 } else { 0.6 }, next_obs: vec![1.0], done: true })
        .collect();
    let refs: Vec<_> = batch.iter().collect();
    for _ in 0..500 {
        agent.train_step(&refs).unwrap();
    }
    let q = agent.q_values(&[1.0]).unwrap();
    assert!((q[0] - 0.2).abs() < 0.02 && (q[1] - 0.6).abs() < 0.02, "{q:?}");
    assert_eq!(agent.greedy(&[1.0]).unwrap(), 1);
}

#[test]
fn sac_toy_converges_and_entropy_approaches_target() {
    let trace = advmm::selftest::sac_toy(20_000, 3, None).unwrap();
    assert_eq!(trace.actions.len(), 20);
    assert!((trace.actions[19] - 0.7).abs() < 0.1, "{:?}", trace.actions);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let means: Vec<f64> = trace.entropy.chunks(5).map(mean).collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
    assert!((means[3] + 1.0).abs() < 0.25, "{means:?}");
}

#[test]
fn dqn_finds_the_better_arm() {
    for seed in 0..3 {
        let (greedy, best) = advmm::selftest::dqn_bandit(5000, seed).unwrap();
        assert_eq!(greedy, best);
    }
}

#[test]
fn dqn_loss_non_increasing_on_fixed_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut agent = DqnAgent::new(&DqnConfig::new(5, 4), &mut rng).unwrap();
    let batch: Vec<_> = (0..64)
        .map(|_| Transition {
            obs: (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: rng.gen_range(0..4),
            reward: rng.gen_range(-1.0..1.0),
            next_obs: (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            done: rng.gen_bool(0.2),
        })
        .collect();
    let refs: Vec<_> = batch.iter().collect();
    let losses: Vec<f64> = (0..100).map(|_| agent.train_step(&refs).unwrap()).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
}

#[test]
fn emitted_actions_stay_in_their_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let boxes = [(vec![0.0, 0.0], vec![3.0, 3.0]), (vec![-5.0, 7.5, 1.125], vec![5.0, 12.5, 1.875])];
    let mut n = 0;
    for (low, high) in boxes {
        let agent = SacAgent::new(&SacConfig { hidden: vec![16, 16], ..SacConfig::new(5, low.clone(), high.clone()) }, &mut rng).unwrap();
        for _ in 0..250_000 {
            let obs: Vec<f64> = (0..5).map(|_| rng.gen_range(-20.0..20.0)).collect();
            for det in [false, true] {
                let a = agent.act(&obs, det, &mut rng).unwrap();
                assert!(a.iter().zip(low.iter().zip(&high)).all(|(x, (l, h))| (l..=h).contains(&x)));
                n += 1;
            }
        }
    }
    let q = DqnAgent::new(&DqnConfig { hidden: vec![16, 16], ..DqnConfig::new(5, 4) }, &mut rng).unwrap();
    for _ in 0..250_000 {
        let obs: Vec<f64> = (0..5).map(|_| rng.gen_range(-20.0..20.0)).collect();
        assert!(q.act(&obs, 0.3, &mut rng).unwrap() < 4);
        n += 1;
    }
    assert_eq!(n, 1_250_000);
}
