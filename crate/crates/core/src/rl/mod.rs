//! Off-policy learners: SAC for the continuous agents (adversary and
//! always-quoting market maker), DQN for the discrete quoting agents.

pub mod dqn;
pub mod sac;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::Mlp;

pub use dqn::{DqnAgent, DqnConfig, DqnLearner};
pub use sac::{SacAgent, SacConfig, SacLearner, SacLosses};

/// How long to train and how often to update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub episodes: usize,
    /// Environment steps between update bursts.
    pub update_period: usize,
    /// Gradient updates performed per burst.
    pub updates_per_period: usize,
    pub lr: f64,
    pub batch: usize,
    pub gamma: f64,
    pub replay_capacity: usize,
}

impl TrainSchedule {
    /// 50,000 episodes, a burst of 1000 updates every 1000 steps, lr 3e-4.
    pub fn sac_default() -> Self {
        Self {
            episodes: 50_000,
            update_period: 1000,
            updates_per_period: 1000,
            lr: 3e-4,
            batch: 64,
            gamma: 0.99,
            replay_capacity: 100_000,
        }
    }

    /// 50,000 episodes, one update per step, lr 1e-4.
    pub fn dqn_default() -> Self {
        Self {
            episodes: 50_000,
            update_period: 1,
            updates_per_period: 1,
            lr: 1e-4,
            batch: 64,
            gamma: 0.99,
            replay_capacity: 100_000,
        }
    }

    /// Multiplies the episode count, keeping at least one episode.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            episodes: ((self.episodes as f64 * factor).round() as usize).max(1),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.update_period == 0 || self.batch == 0 || self.replay_capacity < self.batch {
            return Err(Error::Config(format!("inconsistent training schedule {self:?}")));
        }
        if !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("bad lr/gamma in schedule {self:?}")));
        }
        Ok(())
    }
}

/// `target ← (1 − τ)·target + τ·online`, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    target.soft_update_from(online, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetSpec;
    use rand::SeedableRng;

    #[test]
    fn soft_update_limits() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let spec = NetSpec::new([3, 4, 2]).unwrap();
        let online = Mlp::new(spec.clone(), &mut rng).unwrap();
        let target0 = Mlp::new(spec, &mut rng).unwrap();
        let mut t = target0.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, target0);
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);
        let other = Mlp::zeros(NetSpec::new([3, 2]).unwrap()).unwrap();
        assert!(soft_update(&mut t, &other, 0.5).is_err());
    }

    #[test]
    fn scaling_episodes() {
        assert_eq!(TrainSchedule::sac_default().scaled(0.1).episodes, 5000);
        assert_eq!(TrainSchedule::dqn_default().scaled(0.0).episodes, 1);
    }
}
