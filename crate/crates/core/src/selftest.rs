//! Fast numerical checks of the simulator and the learners, shared by the
//! `selftest` command and the test suites.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::env::{AdversaryParams, MarketEnv, QuoteAction, QuoteMode, RiskParams, MAX_OFFSET, OBS_DIM};
use crate::error::Result;
use crate::hawkes::{arrival_intensity, fill_probability, sample_fill, update_intensity, HawkesParams};
use crate::market::MarketParams;
use crate::nn::{Gradients, Mlp, NetSpec, Transition};
use crate::rl::dqn::{td_loss, DqnAgent, DqnConfig, DqnLearner, EpsilonSchedule};
use crate::rl::sac::{actor_loss, alpha_loss, critic_loss, SacAgent, SacConfig, SacLearner};
use crate::rl::TrainSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Uniformly random quoting decision with offsets in `[0, 3]`.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> QuoteAction {
    let mode = QuoteMode::ALL[rng.gen_range(0..4)];
    QuoteAction {
        mode,
        delta_bid: rng.gen_range(0.0..=MAX_OFFSET),
        delta_ask: rng.gen_range(0.0..=MAX_OFFSET),
    }
}

/// Uniform draw from the adversary box.
pub fn random_adversary<R: Rng + ?Sized>(rng: &mut R) -> AdversaryParams {
    crate::adversary::draw_random(rng)
}

/// Largest `|ΔΠ − (δ⁺ΔN⁺ + δ⁻ΔN⁻ + H'·ΔZ)|` over `steps` random steps.
pub fn accounting_residual(steps: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = MarketEnv::new(MarketParams::default(), HawkesParams::default())?;
    env.reset(rng.gen());
    let mut worst = 0.0f64;
    for _ in 0..steps {
        if env.is_done() {
            env.reset(rng.gen());
        }
        let action = random_action(&mut rng);
        let adv = random_adversary(&mut rng);
        let z0 = env.state().z;
        let out = env.step(&action, &adv, &RiskParams::RISK_NEUTRAL)?;
        let st = env.state();
        let nb = out.fills.bid_filled as u8 as f64;
        let na = out.fills.ask_filled as u8 as f64;
        let expected = action.delta_bid * nb + action.delta_ask * na + st.account.inventory as f64 * (st.z - z0);
        worst = worst.max((out.delta_wealth - expected).abs());
    }
    Ok(worst)
}

pub fn accounting_identity(steps: usize, seed: u64) -> Result<Check> {
    let worst = accounting_residual(steps, seed)?;
    Ok(Check {
        name: "accounting identity",
        passed: worst < 1e-9,
        detail: format!("max residual {worst:.3e} over {steps} steps (tol 1e-9)"),
    })
}

/// Largest `|λ_n − 10 − 40·0.7ⁿ|` for `n ≤ max_n` starting at 50.
pub fn hawkes_decay_error(max_n: i32) -> f64 {
    let p = HawkesParams::default();
    let mut lambda = 50.0;
    let mut worst = 0.0f64;
    for n in 0..=max_n {
        worst = worst.max((lambda - 10.0 - 40.0 * 0.7f64.powi(n)).abs());
        lambda = update_intensity(lambda, &p, false);
    }
    worst
}

pub fn hawkes_decay(max_n: i32) -> Check {
    let worst = hawkes_decay_error(max_n);
    Check {
        name: "hawkes decay",
        passed: worst <= 1e-12,
        detail: format!("max |λ_n − 10 − 40·0.7^n| = {worst:.3e} for n ≤ {max_n} (tol 1e-12)"),
    }
}

/// Empirical fill frequency at λ = 10, k = 1.5, δ = 0, dt = 0.005 and the
/// `(p, 3σ)` it should match.
pub fn fill_frequency_stats(trials: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = fill_probability(arrival_intensity(10.0, 1.5, 0.0), 0.005);
    let hits = (0..trials).filter(|_| sample_fill(p, rng.gen())).count();
    let tol = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    (hits as f64 / trials as f64, p, tol)
}

pub fn fill_frequency(trials: usize, seed: u64) -> Check {
    let (freq, p, tol) = fill_frequency_stats(trials, seed);
    Check {
        name: "fill frequency",
        passed: (freq - p).abs() <= tol,
        detail: format!("{freq:.5} vs p = {p:.5} over {trials} trials (3σ = {tol:.5})"),
    }
}

/// Number of steps, out of `steps` random ones with random risk
/// coefficients, where `reward_mm + reward_adv ≠ 0`.
pub fn zero_sum_violations(steps: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = MarketEnv::new(MarketParams::default(), HawkesParams::default())?;
    env.reset(rng.gen());
    let mut risk = RiskParams::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.01));
    let mut bad = 0;
    for _ in 0..steps {
        if env.is_done() {
            env.reset(rng.gen());
            risk = RiskParams::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.01));
        }
        let out = env.step(&random_action(&mut rng), &random_adversary(&mut rng), &risk)?;
        if out.reward_mm + out.reward_adv != 0.0 {
            bad += 1;
        }
    }
    Ok(bad)
}

pub fn zero_sum(steps: usize, seed: u64) -> Result<Check> {
    let bad = zero_sum_violations(steps, seed)?;
    Ok(Check {
        name: "zero-sum",
        passed: bad == 0,
        detail: format!("{bad} of {steps} steps with reward_mm + reward_adv != 0"),
    })
}

/// `‖a − n‖ / (‖a‖ + ‖n‖)` between an analytic gradient and central
/// differences of `loss` over every parameter of `net`.
pub fn fd_relative_error(net: &Mlp, analytic: &Gradients, loss: impl Fn(&Mlp) -> Result<f64>, h: f64) -> Result<f64> {
    let sizes: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
    let analytic: Vec<f64> = analytic.tensors().into_iter().flatten().copied().collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for (t, &len) in sizes.iter().enumerate() {
        for j in 0..len {
            let mut plus = net.clone();
            plus.tensors_mut()[t][j] += h;
            let mut minus = net.clone();
            minus.tensors_mut()[t][j] -= h;
            numeric.push((loss(&plus)? - loss(&minus)?) / (2.0 * h));
        }
    }
    Ok(relative_error(&analytic, &numeric))
}

pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(n).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()) + norm(&mut n.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn normal(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Worst relative error of each loss gradient over `nets` random small
/// networks: `[critic, actor, temperature, td]`.
pub fn gradient_errors(nets: usize, seed: u64) -> Result<[f64; 4]> {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..nets {
        let d = rng.gen_range(1..=3);
        let hidden = [rng.gen_range(3..=8), rng.gen_range(3..=8)];
        let batch = 8;
        let obs = Array2::from_shape_simple_fn((batch, OBS_DIM), || rng.gen_range(-1.0..1.0));

        let critic = Mlp::new(NetSpec::mlp(OBS_DIM + d, &hidden, 1)?, &mut rng)?;
        let critic2 = Mlp::new(NetSpec::mlp(OBS_DIM + d, &hidden, 1)?, &mut rng)?;
        let actions = Array2::from_shape_simple_fn((batch, d), || rng.gen_range(-0.9..0.9));
        let inputs = ndarray::concatenate![ndarray::Axis(1), obs, actions];
        let targets = Array1::from_shape_simple_fn(batch, || 2.0 * rng.sample::<f64, _>(StandardNormal));
        let (_, g) = critic_loss(&critic, inputs.view(), targets.view())?;
        let e = fd_relative_error(&critic, &g, |q| Ok(critic_loss(q, inputs.view(), targets.view())?.0), H)?;
        worst[0] = worst[0].max(e);

        let actor = Mlp::new(NetSpec::mlp(OBS_DIM, &hidden, 2 * d)?, &mut rng)?;
        let noise = normal(&mut rng, (batch, d), 1.0);
        let alpha = rng.gen_range(0.05..1.0);
        let out = actor_loss(&actor, &critic, &critic2, obs.view(), noise.view(), alpha)?;
        let e = fd_relative_error(
            &actor,
            &out.grads,
            |a| Ok(actor_loss(a, &critic, &critic2, obs.view(), noise.view(), alpha)?.loss),
            H,
        )?;
        worst[1] = worst[1].max(e);

        let log_alpha: f64 = rng.gen_range(-2.0..1.0);
        let target = -(d as f64);
        let (_, ga) = alpha_loss(log_alpha, out.log_probs.view(), target);
        let fd = (alpha_loss(log_alpha + H, out.log_probs.view(), target).0
            - alpha_loss(log_alpha - H, out.log_probs.view(), target).0)
            / (2.0 * H);
        worst[2] = worst[2].max(relative_error(&[ga], &[fd]));

        let n_actions = rng.gen_range(2..=4);
        let q = Mlp::new(NetSpec::mlp(OBS_DIM, &hidden, n_actions)?, &mut rng)?;
        let acts: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..n_actions)).collect();
        let td_targets = Array1::from_shape_simple_fn(batch, || 1.5 * rng.sample::<f64, _>(StandardNormal));
        let (_, g) = td_loss(&q, obs.view(), &acts, td_targets.view(), 1.0)?;
        let e = fd_relative_error(&q, &g, |q| Ok(td_loss(q, obs.view(), &acts, td_targets.view(), 1.0)?.0), H)?;
        worst[3] = worst[3].max(e);
    }
    Ok(worst)
}

pub fn gradient_checks(nets: usize, seed: u64) -> Result<Check> {
    let w = gradient_errors(nets, seed)?;
    Ok(Check {
        name: "gradient checks",
        passed: w.iter().all(|&e| e <= 1e-4),
        detail: format!(
            "worst relative error over {nets} nets: critic {:.1e}, actor {:.1e}, temperature {:.1e}, td {:.1e} (tol 1e-4)",
            w[0], w[1], w[2], w[3]
        ),
    })
}

/// The quick battery run by `advmm selftest`.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        accounting_identity(20_000, seed)?,
        hawkes_decay(50),
        fill_frequency(100_000, seed),
        zero_sum(20_000, seed)?,
        gradient_checks(3, seed)?,
    ])
}

/// Trace of SAC on the one-step task with reward `−(a − 0.7)²`, `a ∈ [−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrace {
    /// Deterministic action after each update burst.
    pub actions: Vec<f64>,
    /// Batch entropy at the end of each burst.
    pub entropy: Vec<f64>,
}

pub const TOY_OPTIMUM: f64 = 0.7;

/// Default SAC hyperparameters and burst schedule, `steps` environment steps.
/// With `stop_within`, stops after the first burst that leaves the
/// deterministic action that close to the optimum.
pub fn sac_toy(steps: usize, seed: u64, stop_within: Option<f64>) -> Result<ToyTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent = SacAgent::new(&SacConfig::new(1, vec![-1.0], vec![1.0]), &mut rng)?;
    let mut learner = SacLearner::new(agent, TrainSchedule::sac_default(), rng.gen())?;
    let obs = vec![1.0];
    let mut trace = ToyTrace { actions: Vec::new(), entropy: Vec::new() };
    for _ in 0..steps {
        let (u, a) = learner.act(&obs)?;
        let reward = -(a[0] - TOY_OPTIMUM).powi(2);
        let t = Transition { obs: obs.clone(), action: u, reward, next_obs: obs.clone(), done: true };
        if let Some(l) = learner.observe(t)? {
            trace.actions.push(learner.agent.policy.deterministic_action(&obs)?[0]);
            trace.entropy.push(l.entropy);
            if stop_within.is_some_and(|tol| (trace.actions[trace.actions.len() - 1] - TOY_OPTIMUM).abs() < tol) {
                break;
            }
        }
    }
    Ok(trace)
}

/// Greedy arm after `steps` pulls of a two-armed bandit paying 0 or 1,
/// with the better arm chosen by `seed`. Returns `(greedy, best)`.
pub fn dqn_bandit(steps: usize, seed: u64) -> Result<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let best = rng.gen_range(0..2);
    let cfg = DqnConfig::new(1, 2);
    let agent = DqnAgent::new(&cfg, &mut rng)?;
    let mut learner = DqnLearner::new(agent, TrainSchedule::dqn_default(), EpsilonSchedule::new(steps as u64), rng.gen())?;
    let obs = vec![1.0];
    for _ in 0..steps {
        let a = learner.act(&obs)?;
        let reward = if a == best { 1.0 } else { 0.0 };
        learner.observe(Transition { obs: obs.clone(), action: a, reward, next_obs: obs.clone(), done: true })?;
    }
    Ok((learner.agent.greedy(&obs)?, best))
}
