//! Agent checkpoints: one JSON file per network plus a manifest, and a
//! separate provenance file for wall-clock data so that the manifest and
//! networks stay bit-identical across reruns.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryKind, AdversarySpec};
use crate::env::AgentKind;
use crate::error::{Error, Result};
use crate::eval::MmPolicy;
use crate::nn::{Mlp, NetMeta};
use crate::rl::dqn::{DqnAgent, DqnConfig};
use crate::rl::sac::{SacAgent, SacPolicy};
use crate::rl::TrainSchedule;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Adversary,
    MarketMaker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SacMeta {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub log_alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnMeta {
    pub n_actions: usize,
    pub gamma: f64,
    pub target_update_period: u64,
    pub huber_delta: f64,
    /// Box of the frozen always-quote actor that prices the quotes.
    pub quoter_low: Vec<f64>,
    pub quoter_high: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub role: Role,
    /// Adversary kind (`fixed`, ..., `all`) or agent kind (`always`, ...).
    pub kind: String,
    /// Network name to file name, relative to the checkpoint directory.
    pub networks: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sac: Option<SacMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dqn: Option<DqnMeta>,
    pub schedule: TrainSchedule,
    pub config_hash: String,
    pub seed: u64,
    pub episodes: usize,
    pub train_vol: f64,
}

/// Wall-clock facts about a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub created_by: String,
    pub wall_time_secs: f64,
    pub config_hash: String,
    pub episodes: usize,
}

#[derive(Debug, Clone)]
pub enum AgentBody {
    Sac(SacAgent),
    Dqn { agent: DqnAgent, quoter: SacPolicy },
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub body: AgentBody,
}

fn ckpt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), reason: reason.into() }
}

impl Checkpoint {
    pub fn adversary_kind(&self) -> Result<AdversaryKind> {
        if self.manifest.role != Role::Adversary {
            return Err(Error::Config(format!("checkpoint holds a {} market maker, not an adversary", self.manifest.kind)));
        }
        self.manifest.kind.parse()
    }

    pub fn agent_kind(&self) -> Result<AgentKind> {
        if self.manifest.role != Role::MarketMaker {
            return Err(Error::Config(format!("checkpoint holds a {} adversary, not a market maker", self.manifest.kind)));
        }
        self.manifest.kind.parse()
    }

    pub fn sac(&self) -> Result<&SacAgent> {
        match &self.body {
            AgentBody::Sac(a) => Ok(a),
            AgentBody::Dqn { .. } => Err(Error::Config("checkpoint holds a DQN agent".into())),
        }
    }

    pub fn adversary_spec(&self) -> Result<AdversarySpec> {
        AdversarySpec::new(self.adversary_kind()?, Some(self.sac()?.policy.clone()))
    }

    /// The frozen market-maker policy.
    pub fn mm_policy(&self) -> Result<MmPolicy> {
        let kind = self.agent_kind()?;
        match (&self.body, kind) {
            (AgentBody::Sac(a), AgentKind::Always) => Ok(MmPolicy::Always(a.policy.clone())),
            (AgentBody::Dqn { agent, quoter }, AgentKind::TwoAction | AgentKind::FourAction) => {
                Ok(MmPolicy::MultiAction { kind, q: agent.clone(), quoter: quoter.clone() })
            }
            _ => Err(Error::Config(format!("checkpoint body does not match agent kind {kind}"))),
        }
    }

    fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        match &self.body {
            AgentBody::Sac(a) => vec![
                ("actor", &a.policy.actor),
                ("q1", &a.q1),
                ("q2", &a.q2),
                ("q1_target", &a.q1_target),
                ("q2_target", &a.q2_target),
            ],
            AgentBody::Dqn { agent, quoter } => {
                vec![("q", &agent.q), ("target", &agent.target), ("quoter_actor", &quoter.actor)]
            }
        }
    }

    /// Writes the manifest and one file per network into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = NetMeta::new(self.manifest.seed, self.manifest.kind.clone());
        let mut manifest = self.manifest.clone();
        manifest.networks.clear();
        for (name, net) in self.networks() {
            let file = format!("{name}.json");
            net.save(&dir.join(&file), &meta)?;
            manifest.networks.insert(name.to_string(), file);
        }
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    pub fn write_provenance(&self, dir: &Path, wall_time_secs: f64) -> Result<()> {
        let p = Provenance {
            created_by: concat!("advmm ", env!("CARGO_PKG_VERSION")).to_string(),
            wall_time_secs,
            config_hash: self.manifest.config_hash.clone(),
            episodes: self.manifest.episodes,
        };
        fs::write(dir.join(PROVENANCE_FILE), serde_json::to_string_pretty(&p)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| ckpt_err(&manifest_path, e.to_string()))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ckpt_err(&manifest_path, e.to_string()))?;
        match manifest.role {
            Role::Adversary => {
                manifest.kind.parse::<AdversaryKind>().map_err(|e| ckpt_err(&manifest_path, e.to_string()))?;
            }
            Role::MarketMaker => {
                manifest.kind.parse::<AgentKind>().map_err(|e| ckpt_err(&manifest_path, e.to_string()))?;
            }
        }
        let net = |name: &str| -> Result<Mlp> {
            let file = manifest
                .networks
                .get(name)
                .ok_or_else(|| ckpt_err(&manifest_path, format!("manifest lists no {name} network")))?;
            Ok(Mlp::load(&dir.join(file))?.0)
        };
        let wrap = |e: Error| ckpt_err(dir, e.to_string());
        let body = match (&manifest.sac, &manifest.dqn) {
            (Some(s), None) => {
                let policy = SacPolicy::new(net("actor")?, s.low.clone(), s.high.clone()).map_err(wrap)?;
                let agent = SacAgent::from_parts(
                    policy,
                    [net("q1")?, net("q2")?],
                    [net("q1_target")?, net("q2_target")?],
                    s.log_alpha,
                    s.gamma,
                    s.tau,
                    s.target_entropy,
                    manifest.schedule.lr,
                )
                .map_err(wrap)?;
                AgentBody::Sac(agent)
            }
            (None, Some(d)) => {
                let mut cfg = DqnConfig::new(0, d.n_actions);
                cfg.lr = manifest.schedule.lr;
                cfg.gamma = d.gamma;
                cfg.target_update_period = d.target_update_period;
                cfg.huber_delta = d.huber_delta;
                let agent = DqnAgent::from_parts(net("q")?, net("target")?, &cfg).map_err(wrap)?;
                if agent.n_actions() != d.n_actions {
                    return Err(ckpt_err(dir, format!("Q-network has {} outputs, manifest says {}", agent.n_actions(), d.n_actions)));
                }
                let quoter =
                    SacPolicy::new(net("quoter_actor")?, d.quoter_low.clone(), d.quoter_high.clone()).map_err(wrap)?;
                AgentBody::Dqn { agent, quoter }
            }
            _ => return Err(ckpt_err(&manifest_path, "manifest must describe exactly one of sac/dqn")),
        };
        Ok(Self { manifest, body })
    }

    /// Loads and warns (without failing) when the checkpoint was trained
    /// under a different configuration.
    pub fn load_checked(dir: &Path, expected_hash: &str) -> Result<Self> {
        let ck = Self::load(dir)?;
        if ck.manifest.config_hash != expected_hash {
            log::warn!(
                "checkpoint {} was trained with config {} but the current config hashes to {}",
                dir.display(),
                ck.manifest.config_hash,
                expected_hash
            );
        }
        Ok(ck)
    }
}
