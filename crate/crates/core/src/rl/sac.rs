//! Soft actor-critic with twin critics, Polyak-averaged targets and an
//! automatically tuned entropy temperature.
//!
//! The actor outputs a mean and log-std per action dimension; actions are
//! `u = tanh(μ + σ·ξ)` in `(−1, 1)` and mapped affinely onto the action box.
//! Critics see the squashed `u`, not the box-scaled action. All gradients are
//! written out by hand so each loss can be checked against finite
//! differences (see [`critic_loss`], [`actor_loss`], [`alpha_loss`]).

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::env::{Observation, OffsetQuoter};
use crate::error::{Error, Result};
use crate::nn::{Adam, Gradients, Mlp, NetSpec, ReplayBuffer, Transition};
use crate::rl::TrainSchedule;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub obs_dim: usize,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub initial_alpha: f64,
    /// Defaults to `−dim(action)`.
    pub target_entropy: Option<f64>,
}

impl SacConfig {
    pub fn new(obs_dim: usize, low: Vec<f64>, high: Vec<f64>) -> Self {
        Self {
            obs_dim,
            low,
            high,
            hidden: vec![64, 64],
            lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            initial_alpha: 1.0,
            target_entropy: None,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }
}

/// The deterministic-or-sampled squashed Gaussian policy on its own: what a
/// frozen checkpoint needs to act.
#[derive(Debug, Clone, PartialEq)]
pub struct SacPolicy {
    pub actor: Mlp,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl SacPolicy {
    pub fn new(actor: Mlp, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::Config(format!("action box {low:?}..{high:?} is malformed")));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::Config(format!("action box {low:?}..{high:?} is empty")));
        }
        if actor.output_dim() != 2 * low.len() {
            return Err(Error::Shape(format!(
                "actor outputs {} values, a {}-d box needs {}",
                actor.output_dim(),
                low.len(),
                2 * low.len()
            )));
        }
        Ok(Self { actor, low, high })
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    /// Maps `u ∈ [−1, 1]` onto the box.
    pub fn scale(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(&u, (&lo, &hi))| (lo + 0.5 * (u + 1.0) * (hi - lo)).clamp(lo, hi))
            .collect()
    }

    /// Squashed action in `[−1, 1]`: `tanh(μ)` when deterministic, otherwise
    /// `tanh(μ + σ·ξ)`.
    pub fn act_normalized<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        let out = self.actor.forward(obs)?;
        let d = self.action_dim();
        Ok((0..d)
            .map(|j| {
                let mu = out[j];
                if deterministic {
                    mu.tanh()
                } else {
                    let log_std = out[d + j].clamp(LOG_STD_MIN, LOG_STD_MAX);
                    let xi: f64 = rng.sample(StandardNormal);
                    (mu + log_std.exp() * xi).tanh()
                }
            })
            .collect())
    }

    /// Action inside the box.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.scale(&self.act_normalized(obs, deterministic, rng)?))
    }

    pub fn deterministic_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let out = self.actor.forward(obs)?;
        let u: Vec<f64> = out[..self.action_dim()].iter().map(|m| m.tanh()).collect();
        Ok(self.scale(&u))
    }
}

impl OffsetQuoter for SacPolicy {
    fn offsets(&self, obs: &Observation) -> (f64, f64) {
        let a = self
            .deterministic_action(obs.as_slice())
            .expect("quoter actor matches the observation width");
        (a[0], a[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacLosses {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub alpha: f64,
    /// `−E[log π]` over the actor batch.
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub policy: SacPolicy,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    actor_opt: Adam,
    q1_opt: Adam,
    q2_opt: Adam,
    alpha_opt: Adam,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(cfg: &SacConfig, rng: &mut R) -> Result<Self> {
        let d = cfg.action_dim();
        let actor = Mlp::new(NetSpec::mlp(cfg.obs_dim, &cfg.hidden, 2 * d)?, rng)?;
        let critic_spec = NetSpec::mlp(cfg.obs_dim + d, &cfg.hidden, 1)?;
        let q1 = Mlp::new(critic_spec.clone(), rng)?;
        let q2 = Mlp::new(critic_spec, rng)?;
        if !(cfg.initial_alpha > 0.0) {
            return Err(Error::Config("initial alpha must be > 0".into()));
        }
        Ok(Self {
            policy: SacPolicy::new(actor, cfg.low.clone(), cfg.high.clone())?,
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            log_alpha: cfg.initial_alpha.ln(),
            gamma: cfg.gamma,
            tau: cfg.tau,
            target_entropy: cfg.target_entropy.unwrap_or(-(d as f64)),
            actor_opt: Adam::new(cfg.lr),
            q1_opt: Adam::new(cfg.lr),
            q2_opt: Adam::new(cfg.lr),
            alpha_opt: Adam::new(cfg.lr),
        })
    }

    /// Rebuilds an agent from stored networks with fresh optimizer state.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        policy: SacPolicy,
        q: [Mlp; 2],
        q_target: [Mlp; 2],
        log_alpha: f64,
        gamma: f64,
        tau: f64,
        target_entropy: f64,
        lr: f64,
    ) -> Result<Self> {
        let [q1, q2] = q;
        let [q1_target, q2_target] = q_target;
        let want = policy.obs_dim() + policy.action_dim();
        for (name, net) in [("q1", &q1), ("q2", &q2), ("q1_target", &q1_target), ("q2_target", &q2_target)] {
            if net.input_dim() != want || net.output_dim() != 1 {
                return Err(Error::Shape(format!(
                    "critic {name} maps {} -> {}, expected {want} -> 1",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
        }
        Ok(Self {
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            gamma,
            tau,
            target_entropy,
            actor_opt: Adam::new(lr),
            q1_opt: Adam::new(lr),
            q2_opt: Adam::new(lr),
            alpha_opt: Adam::new(lr),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.action_dim()
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        self.policy.act(obs, deterministic, rng)
    }

    /// Bootstrapped targets `r + γ·(1 − done)·(min Q̄(s′, a′) − α·log π(a′|s′))`
    /// with `a′` drawn using `noise`.
    pub fn critic_targets(
        &self,
        rewards: ArrayView1<'_, f64>,
        dones: ArrayView1<'_, f64>,
        next_obs: ArrayView2<'_, f64>,
        noise: ArrayView2<'_, f64>,
    ) -> Result<Array1<f64>> {
        let head = self.policy.actor.forward_batch(next_obs)?;
        let sq = squash(head.output(), noise, self.action_dim())?;
        let inputs = concatenate![Axis(1), next_obs, sq.u];
        let q1 = self.q1_target.forward_batch(inputs.view())?;
        let q2 = self.q2_target.forward_batch(inputs.view())?;
        let alpha = self.alpha();
        let mut y = rewards.to_owned();
        for b in 0..y.len() {
            let soft_v = q1.output()[[b, 0]].min(q2.output()[[b, 0]]) - alpha * sq.log_prob[b];
            y[b] += self.gamma * (1.0 - dones[b]) * soft_v;
        }
        Ok(y)
    }

    /// One update of both critics, the actor and the temperature, then a
    /// soft update of the target critics.
    pub fn train_step<R: Rng + ?Sized>(&mut self, batch: &[&Transition<Vec<f64>>], rng: &mut R) -> Result<SacLosses> {
        if batch.is_empty() {
            return Err(Error::State("empty SAC batch".into()));
        }
        let d = self.action_dim();
        let b = batch.len();
        let obs = stack(batch.iter().map(|t| t.obs.as_slice()), self.policy.obs_dim())?;
        let next_obs = stack(batch.iter().map(|t| t.next_obs.as_slice()), self.policy.obs_dim())?;
        let actions = stack(batch.iter().map(|t| t.action.as_slice()), d)?;
        let rewards = Array1::from_iter(batch.iter().map(|t| t.reward));
        let dones = Array1::from_iter(batch.iter().map(|t| if t.done { 1.0 } else { 0.0 }));

        let noise = gaussian(b, d, rng);
        let targets = self.critic_targets(rewards.view(), dones.view(), next_obs.view(), noise.view())?;
        let critic_in = concatenate![Axis(1), obs, actions];
        let (critic1, g1) = critic_loss(&self.q1, critic_in.view(), targets.view())?;
        let (critic2, g2) = critic_loss(&self.q2, critic_in.view(), targets.view())?;
        self.q1_opt.step_net(&mut self.q1, &g1)?;
        self.q2_opt.step_net(&mut self.q2, &g2)?;

        let alpha = self.alpha();
        let noise = gaussian(b, d, rng);
        let actor_out = actor_loss(&self.policy.actor, &self.q1, &self.q2, obs.view(), noise.view(), alpha)?;
        self.actor_opt.step_net(&mut self.policy.actor, &actor_out.grads)?;

        let (alpha_l, alpha_g) = alpha_loss(self.log_alpha, actor_out.log_probs.view(), self.target_entropy);
        let mut la = [self.log_alpha];
        self.alpha_opt.step(&mut [&mut la], &[&[alpha_g]])?;
        self.log_alpha = la[0];

        self.q1_target.soft_update_from(&self.q1, self.tau)?;
        self.q2_target.soft_update_from(&self.q2, self.tau)?;
        Ok(SacLosses {
            critic1,
            critic2,
            actor: actor_out.loss,
            alpha: alpha_l,
            entropy: -actor_out.log_probs.mean().unwrap_or(0.0),
        })
    }
}

/// Squashed-Gaussian sample with everything the actor gradient needs.
#[derive(Debug, Clone)]
pub struct Squashed {
    /// `tanh(μ + σ·ξ)`, `(batch, d)`.
    pub u: Array2<f64>,
    pub log_prob: Array1<f64>,
    std: Array2<f64>,
    /// 1 where the log-std was inside its clamp range.
    unclamped: Array2<f64>,
    noise: Array2<f64>,
}

/// `log(1 − tanh²x)` computed stably as `2·(ln 2 − x − softplus(−2x))`.
fn log1m_tanh_sq(x: f64) -> f64 {
    let y = -2.0 * x;
    let softplus = y.max(0.0) + (-y.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - x - softplus)
}

pub fn squash(head: &Array2<f64>, noise: ArrayView2<'_, f64>, d: usize) -> Result<Squashed> {
    if head.ncols() != 2 * d || noise.dim() != (head.nrows(), d) {
        return Err(Error::Shape(format!("actor head {:?} / noise {:?} for {d}-d actions", head.dim(), noise.dim())));
    }
    let n = head.nrows();
    let mut u = Array2::zeros((n, d));
    let mut std = Array2::zeros((n, d));
    let mut unclamped = Array2::zeros((n, d));
    let mut log_prob = Array1::zeros(n);
    for b in 0..n {
        let mut lp = 0.0;
        for j in 0..d {
            let mu = head[[b, j]];
            let raw = head[[b, d + j]];
            let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let sigma = ls.exp();
            let xi = noise[[b, j]];
            let pre = mu + sigma * xi;
            u[[b, j]] = pre.tanh();
            std[[b, j]] = sigma;
            unclamped[[b, j]] = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) { 1.0 } else { 0.0 };
            lp += -0.5 * xi * xi - ls - HALF_LN_2PI - log1m_tanh_sq(pre);
        }
        log_prob[b] = lp;
    }
    Ok(Squashed {
        u,
        log_prob,
        std,
        unclamped,
        noise: noise.to_owned(),
    })
}

/// `½·mean((Q(x) − y)²)` and its parameter gradient.
pub fn critic_loss(q: &Mlp, inputs: ArrayView2<'_, f64>, targets: ArrayView1<'_, f64>) -> Result<(f64, Gradients)> {
    let cache = q.forward_batch(inputs)?;
    let out = cache.output();
    if out.ncols() != 1 || out.nrows() != targets.len() {
        return Err(Error::Shape(format!("critic output {:?} vs {} targets", out.dim(), targets.len())));
    }
    let n = targets.len() as f64;
    let diff = &out.column(0) - &targets;
    let loss = 0.5 * diff.mapv(|d| d * d).sum() / n;
    let upstream = (diff / n).insert_axis(Axis(1));
    let (grads, _) = q.backward_batch(&cache, upstream.view())?;
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Gradients,
    pub log_probs: Array1<f64>,
}

/// `mean(α·log π(ũ|s) − min(Q₁, Q₂)(s, ũ))` with the reparameterised
/// `ũ = tanh(μ + σ·ξ)` for the supplied noise `ξ`.
pub fn actor_loss(
    actor: &Mlp,
    q1: &Mlp,
    q2: &Mlp,
    obs: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    alpha: f64,
) -> Result<ActorLoss> {
    let d = noise.ncols();
    let n = obs.nrows();
    let nf = n as f64;
    let head_cache = actor.forward_batch(obs)?;
    let sq = squash(head_cache.output(), noise, d)?;
    let inputs = concatenate![Axis(1), obs, sq.u];
    let c1 = q1.forward_batch(inputs.view())?;
    let c2 = q2.forward_batch(inputs.view())?;

    let mut up1 = Array2::zeros((n, 1));
    let mut up2 = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for b in 0..n {
        let (v1, v2) = (c1.output()[[b, 0]], c2.output()[[b, 0]]);
        if v1 <= v2 {
            up1[[b, 0]] = -1.0 / nf;
        } else {
            up2[[b, 0]] = -1.0 / nf;
        }
        loss += alpha * sq.log_prob[b] - v1.min(v2);
    }
    loss /= nf;
    let dx1 = q1.input_gradient_batch(&c1, up1.view())?;
    let dx2 = q2.input_gradient_batch(&c2, up2.view())?;
    let obs_dim = obs.ncols();
    let dq_du = &dx1.slice(s![.., obs_dim..]) + &dx2.slice(s![.., obs_dim..]);

    // d log π / d pre = 2·tanh(pre); d log π / d log σ = −1 (direct term).
    let mut head_grad = Array2::zeros((n, 2 * d));
    for b in 0..n {
        for j in 0..d {
            let u = sq.u[[b, j]];
            let g = dq_du[[b, j]];
            let dpre = alpha * 2.0 * u / nf + g * (1.0 - u * u);
            let sigma_xi = sq.std[[b, j]] * sq.noise[[b, j]];
            head_grad[[b, j]] = dpre;
            head_grad[[b, d + j]] = sq.unclamped[[b, j]] * (dpre * sigma_xi - alpha / nf);
        }
    }
    let (grads, _) = actor.backward_batch(&head_cache, head_grad.view())?;
    Ok(ActorLoss {
        loss,
        grads,
        log_probs: sq.log_prob,
    })
}

/// Temperature loss `−log α · mean(log π + H̄)` and its derivative in `log α`.
pub fn alpha_loss(log_alpha: f64, log_probs: ArrayView1<'_, f64>, target_entropy: f64) -> (f64, f64) {
    let m = log_probs.mean().unwrap_or(0.0) + target_entropy;
    (-log_alpha * m, -m)
}

pub(crate) fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        if r.len() != width {
            return Err(Error::Shape(format!("row of width {} in a batch of width {width}", r.len())));
        }
        data.extend_from_slice(r);
        n += 1;
    }
    Array2::from_shape_vec((n, width), data).map_err(|e| Error::Shape(e.to_string()))
}

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// SAC agent plus replay buffer and update schedule.
#[derive(Debug, Clone)]
pub struct SacLearner {
    pub agent: SacAgent,
    buffer: ReplayBuffer<Transition<Vec<f64>>>,
    schedule: TrainSchedule,
    rng: ChaCha8Rng,
    env_steps: u64,
    updates: u64,
    pub last_losses: Option<SacLosses>,
}

impl SacLearner {
    pub fn new(agent: SacAgent, schedule: TrainSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            agent,
            buffer: ReplayBuffer::new(schedule.replay_capacity),
            schedule,
            rng: ChaCha8Rng::seed_from_u64(seed),
            env_steps: 0,
            updates: 0,
            last_losses: None,
        })
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Exploratory action: `(u, box-scaled action)`. Store `u` in the
    /// transition.
    pub fn act(&mut self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.agent.policy.act_normalized(obs, false, &mut self.rng)?;
        let a = self.agent.policy.scale(&u);
        Ok((u, a))
    }

    pub fn observe(&mut self, t: Transition<Vec<f64>>) -> Result<Option<SacLosses>> {
        self.buffer.push(t);
        self.env_steps += 1;
        if self.env_steps % self.schedule.update_period as u64 != 0 || self.buffer.len() < self.schedule.batch {
            return Ok(None);
        }
        for _ in 0..self.schedule.updates_per_period {
            let batch = self.buffer.sample(self.schedule.batch, &mut self.rng)?;
            let losses = self.agent.train_step(&batch, &mut self.rng)?;
            self.last_losses = Some(losses);
            self.updates += 1;
        }
        Ok(self.last_losses)
    }
}
