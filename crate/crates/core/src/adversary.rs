//! Adversary kinds and how each one turns into per-step market parameters.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{AdversaryParams, Observation};
use crate::error::{Error, Result};
use crate::rl::sac::SacPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub enum AdversaryKind {
    /// Always `(0, 10, 1.5)`.
    #[default]
    #[serde(rename = "fixed")]
    Fixed,
    /// Uniform draw from the three ranges at every reset.
    #[serde(rename = "random")]
    Random,
    /// Controls the Hawkes baseline only.
    #[serde(rename = "a")]
    StrategicA,
    /// Controls the drift only.
    #[serde(rename = "b")]
    StrategicB,
    /// Controls the book-depth decay only.
    #[serde(rename = "k")]
    StrategicK,
    /// Controls all three.
    #[serde(rename = "all")]
    StrategicAll,
}

impl AdversaryKind {
    /// In table row order.
    pub const ALL: [AdversaryKind; 6] = [
        AdversaryKind::Fixed,
        AdversaryKind::Random,
        AdversaryKind::StrategicA,
        AdversaryKind::StrategicB,
        AdversaryKind::StrategicK,
        AdversaryKind::StrategicAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AdversaryKind::Fixed => "fixed",
            AdversaryKind::Random => "random",
            AdversaryKind::StrategicA => "a",
            AdversaryKind::StrategicB => "b",
            AdversaryKind::StrategicK => "k",
            AdversaryKind::StrategicAll => "all",
        }
    }

    /// Row label used in the result tables.
    pub fn label(self) -> &'static str {
        match self {
            AdversaryKind::Fixed => "Fix",
            AdversaryKind::Random => "Random",
            AdversaryKind::StrategicA => "A",
            AdversaryKind::StrategicB => "B",
            AdversaryKind::StrategicK => "K",
            AdversaryKind::StrategicAll => "All",
        }
    }

    pub fn is_strategic(self) -> bool {
        !self.controlled().is_empty()
    }

    /// Indices into `(b, a, k)` that the policy sets.
    pub fn controlled(self) -> &'static [usize] {
        match self {
            AdversaryKind::Fixed | AdversaryKind::Random => &[],
            AdversaryKind::StrategicB => &[0],
            AdversaryKind::StrategicA => &[1],
            AdversaryKind::StrategicK => &[2],
            AdversaryKind::StrategicAll => &[0, 1, 2],
        }
    }

    /// Action box of the policy, `None` for non-strategic kinds.
    pub fn action_box(self) -> Option<(Vec<f64>, Vec<f64>)> {
        if !self.is_strategic() {
            return None;
        }
        let (lo, hi) = (AdversaryParams::low(), AdversaryParams::high());
        let idx = self.controlled();
        Some((idx.iter().map(|&i| lo[i]).collect(), idx.iter().map(|&i| hi[i]).collect()))
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdversaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdversaryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown adversary kind {s:?}")))
    }
}

/// Fills the controlled coordinates from a policy action, leaving the
/// others at the fixed-adversary values.
pub fn params_from_action(kind: AdversaryKind, action: &[f64]) -> Result<AdversaryParams> {
    let idx = kind.controlled();
    if action.len() != idx.len() {
        return Err(Error::Shape(format!(
            "{kind} adversary expects {} action values, got {}",
            idx.len(),
            action.len()
        )));
    }
    let mut v = AdversaryParams::FIXED.as_array();
    for (&i, &x) in idx.iter().zip(action) {
        v[i] = x;
    }
    let p = AdversaryParams::from_array(v);
    p.validate()?;
    Ok(p)
}

/// Uniform draw from the three ranges.
pub fn draw_random<R: Rng + ?Sized>(rng: &mut R) -> AdversaryParams {
    let (lo, hi) = (AdversaryParams::low(), AdversaryParams::high());
    let mut v = [0.0; 3];
    for i in 0..3 {
        v[i] = rng.gen_range(lo[i]..hi[i]);
    }
    AdversaryParams::from_array(v)
}

/// One adversary decision. For `Random` this is a fresh draw, so callers
/// holding parameters fixed over an episode should use [`AdversarySpec`].
pub fn sample_adversary<R: Rng + ?Sized>(
    kind: AdversaryKind,
    rng: &mut R,
    policy: Option<&SacPolicy>,
    obs: &Observation,
) -> Result<AdversaryParams> {
    match kind {
        AdversaryKind::Fixed => Ok(AdversaryParams::FIXED),
        AdversaryKind::Random => Ok(draw_random(rng)),
        _ => {
            let policy = policy.ok_or_else(|| Error::Config(format!("{kind} adversary needs a policy")))?;
            params_from_action(kind, &policy.deterministic_action(obs.as_slice())?)
        }
    }
}

/// A frozen adversary: its kind plus, for strategic kinds, the policy.
#[derive(Debug, Clone)]
pub struct AdversarySpec {
    kind: AdversaryKind,
    policy: Option<SacPolicy>,
}

impl AdversarySpec {
    pub fn new(kind: AdversaryKind, policy: Option<SacPolicy>) -> Result<Self> {
        match (&policy, kind.is_strategic()) {
            (None, true) => return Err(Error::Config(format!("{kind} adversary needs a policy"))),
            (Some(p), true) if p.action_dim() != kind.controlled().len() => {
                return Err(Error::Shape(format!(
                    "{kind} adversary controls {} values, policy outputs {}",
                    kind.controlled().len(),
                    p.action_dim()
                )))
            }
            (Some(_), false) => return Err(Error::Config(format!("{kind} adversary takes no policy"))),
            _ => {}
        }
        Ok(Self { kind, policy })
    }

    pub fn fixed() -> Self {
        Self { kind: AdversaryKind::Fixed, policy: None }
    }

    pub fn kind(&self) -> AdversaryKind {
        self.kind
    }

    pub fn policy(&self) -> Option<&SacPolicy> {
        self.policy.as_ref()
    }

    /// Parameters held for the episode: a draw for `Random`, the fixed
    /// values otherwise.
    pub fn begin_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> AdversaryParams {
        match self.kind {
            AdversaryKind::Random => draw_random(rng),
            _ => AdversaryParams::FIXED,
        }
    }

    /// Parameters for the next step given the episode's `base`.
    pub fn act(&self, base: &AdversaryParams, obs: &Observation) -> Result<AdversaryParams> {
        match &self.policy {
            Some(p) => params_from_action(self.kind, &p.deterministic_action(obs.as_slice())?),
            None => Ok(*base),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mlp, NetSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_policy(kind: AdversaryKind) -> SacPolicy {
        let (lo, hi) = kind.action_box().unwrap();
        let actor = Mlp::zeros(NetSpec::mlp(5, &[8], 2 * lo.len()).unwrap()).unwrap();
        SacPolicy::new(actor, lo, hi).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in AdversaryKind::ALL {
            assert_eq!(k.as_str().parse::<AdversaryKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
        assert!("z".parse::<AdversaryKind>().is_err());
    }

    #[test]
    fn fixed_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = Observation([0.0; 5]);
        let p = sample_adversary(AdversaryKind::Fixed, &mut rng, None, &obs).unwrap();
        assert_eq!(p, AdversaryParams { b: 0.0, a: 10.0, k: 1.5 });
    }

    #[test]
    fn zero_policy_b_gives_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pol = zero_policy(AdversaryKind::StrategicB);
        let obs = Observation([0.5, 0.1, -0.3, 1.0, 1.2]);
        let p = sample_adversary(AdversaryKind::StrategicB, &mut rng, Some(&pol), &obs).unwrap();
        assert_eq!(p, AdversaryParams { b: 0.0, a: 10.0, k: 1.5 });
    }

    #[test]
    fn strategic_without_policy_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = Observation([0.0; 5]);
        for k in [AdversaryKind::StrategicA, AdversaryKind::StrategicAll] {
            assert!(matches!(sample_adversary(k, &mut rng, None, &obs), Err(Error::Config(_))));
            assert!(matches!(AdversarySpec::new(k, None), Err(Error::Config(_))));
        }
        let wrong = zero_policy(AdversaryKind::StrategicAll);
        assert!(matches!(AdversarySpec::new(AdversaryKind::StrategicK, Some(wrong)), Err(Error::Shape(_))));
    }

    #[test]
    fn boxes_follow_controlled_coordinates() {
        assert_eq!(AdversaryKind::StrategicA.action_box().unwrap(), (vec![7.5], vec![12.5]));
        assert_eq!(AdversaryKind::StrategicB.action_box().unwrap(), (vec![-5.0], vec![5.0]));
        assert_eq!(AdversaryKind::StrategicK.action_box().unwrap(), (vec![1.125], vec![1.875]));
        assert_eq!(
            AdversaryKind::StrategicAll.action_box().unwrap(),
            (vec![-5.0, 7.5, 1.125], vec![5.0, 12.5, 1.875])
        );
        assert!(AdversaryKind::Random.action_box().is_none());
    }

    #[test]
    fn params_from_action_sets_only_its_coordinate() {
        let p = params_from_action(AdversaryKind::StrategicK, &[1.2]).unwrap();
        assert_eq!(p, AdversaryParams { b: 0.0, a: 10.0, k: 1.2 });
        assert!(params_from_action(AdversaryKind::StrategicK, &[1.2, 3.0]).is_err());
        assert!(params_from_action(AdversaryKind::StrategicA, &[20.0]).is_err());
    }

    #[test]
    fn random_is_held_per_episode() {
        let spec = AdversarySpec::new(AdversaryKind::Random, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = spec.begin_episode(&mut rng);
        let obs = Observation([0.2; 5]);
        assert_eq!(spec.act(&base, &obs).unwrap(), base);
        assert_ne!(spec.begin_episode(&mut rng), base);
    }
}
