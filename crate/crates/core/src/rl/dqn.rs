//! Deep Q-learning with a hard-copied target network, Huber loss and a
//! linearly annealed ε-greedy behaviour policy.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Adam, Gradients, Mlp, NetSpec, ReplayBuffer, Transition};
use crate::rl::sac::stack;
use crate::rl::TrainSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    /// Gradient updates between hard target copies.
    pub target_update_period: u64,
    pub huber_delta: f64,
}

impl DqnConfig {
    pub fn new(obs_dim: usize, n_actions: usize) -> Self {
        Self {
            obs_dim,
            n_actions,
            hidden: vec![64, 64],
            lr: 1e-4,
            gamma: 0.99,
            target_update_period: 500,
            huber_delta: 10.0,
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub q: Mlp,
    pub target: Mlp,
    pub gamma: f64,
    pub target_update_period: u64,
    pub huber_delta: f64,
    opt: Adam,
    updates: u64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(cfg: &DqnConfig, rng: &mut R) -> Result<Self> {
        if cfg.n_actions < 2 {
            return Err(Error::Config(format!("DQN needs at least 2 actions, got {}", cfg.n_actions)));
        }
        let q = Mlp::new(NetSpec::mlp(cfg.obs_dim, &cfg.hidden, cfg.n_actions)?, rng)?;
        Ok(Self {
            target: q.clone(),
            q,
            gamma: cfg.gamma,
            target_update_period: cfg.target_update_period.max(1),
            huber_delta: cfg.huber_delta,
            opt: Adam::new(cfg.lr),
            updates: 0,
        })
    }

    pub fn from_parts(q: Mlp, target: Mlp, cfg: &DqnConfig) -> Result<Self> {
        if !q.same_shape(&target) {
            return Err(Error::Shape("online and target Q-networks differ in shape".into()));
        }
        Ok(Self {
            q,
            target,
            gamma: cfg.gamma,
            target_update_period: cfg.target_update_period.max(1),
            huber_delta: cfg.huber_delta,
            opt: Adam::new(cfg.lr),
            updates: 0,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.q.output_dim()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.q.forward(obs)
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(obs)?))
    }

    /// ε-greedy: uniform action with probability ε, else greedy.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        if rng.gen::<f64>() < epsilon {
            return Ok(rng.gen_range(0..self.n_actions()));
        }
        self.greedy(obs)
    }

    /// `r + γ·(1 − done)·max_a Q̄(s′, a)`.
    pub fn td_targets(
        &self,
        rewards: ArrayView1<'_, f64>,
        dones: ArrayView1<'_, f64>,
        next_obs: ArrayView2<'_, f64>,
    ) -> Result<Array1<f64>> {
        let cache = self.target.forward_batch(next_obs)?;
        let q_next = cache.output();
        Ok(Array1::from_iter((0..rewards.len()).map(|b| {
            let row = q_next.row(b);
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            rewards[b] + self.gamma * (1.0 - dones[b]) * best
        })))
    }

    pub fn train_step(&mut self, batch: &[&Transition<usize>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::State("empty DQN batch".into()));
        }
        let width = self.q.input_dim();
        let obs = stack(batch.iter().map(|t| t.obs.as_slice()), width)?;
        let next_obs = stack(batch.iter().map(|t| t.next_obs.as_slice()), width)?;
        let rewards = Array1::from_iter(batch.iter().map(|t| t.reward));
        let dones = Array1::from_iter(batch.iter().map(|t| if t.done { 1.0 } else { 0.0 }));
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let targets = self.td_targets(rewards.view(), dones.view(), next_obs.view())?;
        let (loss, grads) = td_loss(&self.q, obs.view(), &actions, targets.view(), self.huber_delta)?;
        self.opt.step_net(&mut self.q, &grads)?;
        self.updates += 1;
        if self.updates % self.target_update_period == 0 {
            self.target = self.q.clone();
        }
        Ok(loss)
    }
}

/// Mean Huber loss between `Q(s, a)` and the targets, with its gradient.
pub fn td_loss(
    q: &Mlp,
    obs: ArrayView2<'_, f64>,
    actions: &[usize],
    targets: ArrayView1<'_, f64>,
    delta: f64,
) -> Result<(f64, Gradients)> {
    let n = obs.nrows();
    if actions.len() != n || targets.len() != n {
        return Err(Error::Shape(format!("{n} observations, {} actions, {} targets", actions.len(), targets.len())));
    }
    let cache = q.forward_batch(obs)?;
    let out = cache.output();
    let nf = n as f64;
    let mut upstream = Array2::zeros(out.dim());
    let mut loss = 0.0;
    for (b, &a) in actions.iter().enumerate() {
        if a >= out.ncols() {
            return Err(Error::Shape(format!("action {a} out of range for {} Q-values", out.ncols())));
        }
        let err = out[[b, a]] - targets[b];
        if err.abs() <= delta {
            loss += 0.5 * err * err;
            upstream[[b, a]] = err / nf;
        } else {
            loss += delta * (err.abs() - 0.5 * delta);
            upstream[[b, a]] = delta * err.signum() / nf;
        }
    }
    let (grads, _) = q.backward_batch(&cache, upstream.view())?;
    Ok((loss / nf, grads))
}

/// Linear anneal from `start` to `end` over the first `fraction` of
/// `total_steps`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
    pub total_steps: u64,
}

impl EpsilonSchedule {
    pub fn new(total_steps: u64) -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            fraction: 0.2,
            total_steps,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        let horizon = (self.fraction * self.total_steps as f64).max(1.0);
        let t = (step as f64 / horizon).min(1.0);
        self.start * (1.0 - t) + self.end * t
    }
}

#[derive(Debug, Clone)]
pub struct DqnLearner {
    pub agent: DqnAgent,
    buffer: ReplayBuffer<Transition<usize>>,
    schedule: TrainSchedule,
    epsilon: EpsilonSchedule,
    rng: ChaCha8Rng,
    env_steps: u64,
    pub last_loss: Option<f64>,
}

impl DqnLearner {
    pub fn new(agent: DqnAgent, schedule: TrainSchedule, epsilon: EpsilonSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            agent,
            buffer: ReplayBuffer::new(schedule.replay_capacity),
            schedule,
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            env_steps: 0,
            last_loss: None,
        })
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn current_epsilon(&self) -> f64 {
        self.epsilon.value(self.env_steps)
    }

    pub fn act(&mut self, obs: &[f64]) -> Result<usize> {
        let eps = self.current_epsilon();
        self.agent.act(obs, eps, &mut self.rng)
    }

    pub fn observe(&mut self, t: Transition<usize>) -> Result<Option<f64>> {
        self.buffer.push(t);
        self.env_steps += 1;
        if self.env_steps % self.schedule.update_period as u64 != 0 || self.buffer.len() < self.schedule.batch {
            return Ok(None);
        }
        for _ in 0..self.schedule.updates_per_period {
            let batch = self.buffer.sample(self.schedule.batch, &mut self.rng)?;
            self.last_loss = Some(self.agent.train_step(&batch)?);
        }
        Ok(self.last_loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::array;

    fn fixed_q(values: [f64; 2]) -> DqnAgent {
        let layer = Dense { w: Array2::zeros((2, 1)), b: Array1::from(values.to_vec()) };
        let q = Mlp::from_layers(vec![layer]).unwrap();
        DqnAgent::from_parts(q.clone(), q, &DqnConfig::new(1, 2)).unwrap()
    }

    #[test]
    fn greedy_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(fixed_q([0.1, 0.9]).act(&[0.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(fixed_q([0.5, 0.5]).act(&[0.0], 0.0, &mut rng).unwrap(), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
    }

    #[test]
    fn uniform_when_fully_exploring() {
        let agent = fixed_q([0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let ones = (0..n).filter(|_| agent.act(&[0.0], 1.0, &mut rng).unwrap() == 1).count();
        let sd = (n as f64 * 0.25).sqrt();
        assert!((ones as f64 - n as f64 / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn terminal_targets_are_rewards() {
        let agent = fixed_q([5.0, 7.0]);
        let y = agent
            .td_targets(array![1.5, -2.0].view(), array![1.0, 0.0].view(), array![[0.0], [0.0]].view())
            .unwrap();
        assert_eq!(y[0], 1.5);
        assert!((y[1] - (-2.0 + 0.99 * 7.0)).abs() < 1e-12);
    }

    #[test]
    fn epsilon_schedule() {
        let s = EpsilonSchedule::new(1000);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(100) - 0.525).abs() < 1e-12);
        assert!((s.value(200) - 0.05).abs() < 1e-12);
        assert!((s.value(999) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn huber_branches() {
        let agent = fixed_q([0.0, 0.0]);
        let obs = array![[0.0], [0.0]];
        let (loss, g) = td_loss(&agent.q, obs.view(), &[0, 1], array![0.5, -3.0].view(), 1.0).unwrap();
        // ½·0.25 and 1·(3 − ½), averaged.
        assert!((loss - (0.125 + 2.5) / 2.0).abs() < 1e-12);
        assert!((g.layers[0].b[0] - (-0.5 / 2.0)).abs() < 1e-12);
        assert!((g.layers[0].b[1] - (1.0 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn bad_action_index() {
        let agent = fixed_q([0.0, 0.0]);
        assert!(td_loss(&agent.q, array![[0.0]].view(), &[2], array![0.0].view(), 1.0).is_err());
    }
}
