//! Configuration and the training pipeline: adversary, then the
//! always-quote market maker, then the discrete market makers that borrow
//! its prices.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{params_from_action, AdversaryKind, AdversarySpec};
use crate::checkpoint::{AgentBody, Checkpoint, DqnMeta, Manifest, Role, SacMeta};
use crate::env::{decode_mm_action, AgentKind, MarketEnv, QuoteAction, RawAction, RiskParams, MAX_OFFSET, OBS_DIM};
use crate::error::{Error, Result};
use crate::eval::{emit_csv, evaluate, write_episode_dump, EvalEnv, Evaluation, MmPolicy, ResultRow};
use crate::hawkes::HawkesParams;
use crate::market::MarketParams;
use crate::nn::Transition;
use crate::rl::dqn::{DqnAgent, DqnConfig, DqnLearner, EpsilonSchedule};
use crate::rl::sac::{SacAgent, SacConfig, SacLearner, SacPolicy};
use crate::rl::TrainSchedule;

/// Table ids in their canonical order.
pub const TABLE_IDS: [&str; 7] = ["rn", "eta0.01", "eta0.1", "eta0.5", "eta1", "zeta0.01", "zeta0.001"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub tau: f64,
    pub initial_alpha: f64,
    pub target_update_period: u64,
    /// Rewards are unclipped, so the quadratic zone is wide; a narrow one
    /// biases Q towards low-variance actions.
    pub huber_delta: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all training steps over which ε anneals.
    pub epsilon_fraction: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            tau: 0.005,
            initial_alpha: 1.0,
            target_update_period: 500,
            huber_delta: 10.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub runs: usize,
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { runs: 100, episodes: 1000 }
    }
}

/// One agent column of a results table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentColumn {
    pub kind: AgentKind,
    pub vol_train: f64,
    pub vol_test: f64,
}

/// One results table: a risk setting and the adversaries forming its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub id: String,
    pub risk: RiskParams,
    pub adversaries: Vec<AdversaryKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub market: MarketParams,
    pub hawkes: HawkesParams,
    pub risk: RiskParams,
    pub adversary: AdversaryKind,
    pub train_vol: f64,
    pub test_vol: f64,
    pub adversary_schedule: TrainSchedule,
    pub always_schedule: TrainSchedule,
    pub multi_action_schedule: TrainSchedule,
    pub network: NetworkConfig,
    /// Symmetric offset of the always-quoting opponent the adversary trains
    /// against.
    pub opponent_offset: f64,
    pub evaluation: EvalConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub columns: Vec<AgentColumn>,
    pub tables: Vec<TableSpec>,
}

fn default_columns() -> Vec<AgentColumn> {
    let col = |kind, vol_train, vol_test| AgentColumn { kind, vol_train, vol_test };
    vec![
        col(AgentKind::Always, 2.0, 2.0),
        col(AgentKind::TwoAction, 2.0, 2.0),
        col(AgentKind::FourAction, 2.0, 2.0),
        col(AgentKind::FourAction, 2.0, 200.0),
        col(AgentKind::FourAction, 200.0, 200.0),
    ]
}

fn default_tables() -> Vec<TableSpec> {
    use AdversaryKind::*;
    let short = vec![Fixed, Random, StrategicAll];
    let table = |id: &str, eta, zeta, adversaries: &Vec<AdversaryKind>| TableSpec {
        id: id.to_string(),
        risk: RiskParams::new(eta, zeta),
        adversaries: adversaries.clone(),
    };
    vec![
        table("rn", 0.0, 0.0, &AdversaryKind::ALL.to_vec()),
        table("eta0.01", 0.01, 0.0, &short),
        table("eta0.1", 0.1, 0.0, &short),
        table("eta0.5", 0.5, 0.0, &short),
        table("eta1", 1.0, 0.0, &short),
        table("zeta0.01", 0.0, 0.01, &short),
        table("zeta0.001", 0.0, 0.001, &short),
    ]
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            market: MarketParams::default(),
            hawkes: HawkesParams::default(),
            risk: RiskParams::RISK_NEUTRAL,
            adversary: AdversaryKind::Fixed,
            train_vol: 2.0,
            test_vol: 2.0,
            adversary_schedule: TrainSchedule::sac_default(),
            always_schedule: TrainSchedule::sac_default(),
            multi_action_schedule: TrainSchedule::dqn_default(),
            network: NetworkConfig::default(),
            opponent_offset: 1.0,
            evaluation: EvalConfig::default(),
            seed: 0,
            out_dir: PathBuf::from("runs"),
            columns: default_columns(),
            tables: default_tables(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.hawkes.validate()?;
        self.risk.validate()?;
        if self.market.dt != self.hawkes.dt {
            return Err(Error::Config("market and Hawkes dt differ".into()));
        }
        for v in [self.train_vol, self.test_vol] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("volatility must be finite and >= 0, got {v}")));
            }
        }
        for s in [&self.adversary_schedule, &self.always_schedule, &self.multi_action_schedule] {
            s.validate()?;
        }
        if !(0.0..=MAX_OFFSET).contains(&self.opponent_offset) {
            return Err(Error::Config(format!("opponent offset {} outside [0, {MAX_OFFSET}]", self.opponent_offset)));
        }
        if self.evaluation.runs == 0 || self.evaluation.episodes == 0 {
            return Err(Error::Config("evaluation runs and episodes must be >= 1".into()));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(Error::Config(format!("bad hidden layer sizes {:?}", self.network.hidden)));
        }
        for t in &self.tables {
            t.risk.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Multiplies every training episode count by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Config(format!("scale must be > 0, got {factor}")));
        }
        Ok(Self {
            adversary_schedule: self.adversary_schedule.scaled(factor),
            always_schedule: self.always_schedule.scaled(factor),
            multi_action_schedule: self.multi_action_schedule.scaled(factor),
            ..self.clone()
        })
    }

    pub fn table(&self, id: &str) -> Result<&TableSpec> {
        self.tables
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::Config(format!("no table {id:?} in the experiment matrix")))
    }

    fn train_market(&self) -> MarketParams {
        self.market.with_sigma(self.train_vol)
    }

    fn sac_config(&self, low: Vec<f64>, high: Vec<f64>, schedule: &TrainSchedule) -> SacConfig {
        SacConfig {
            hidden: self.network.hidden.clone(),
            lr: schedule.lr,
            gamma: schedule.gamma,
            tau: self.network.tau,
            initial_alpha: self.network.initial_alpha,
            ..SacConfig::new(OBS_DIM, low, high)
        }
    }

    fn dqn_config(&self, n_actions: usize) -> DqnConfig {
        DqnConfig {
            hidden: self.network.hidden.clone(),
            lr: self.multi_action_schedule.lr,
            gamma: self.multi_action_schedule.gamma,
            target_update_period: self.network.target_update_period,
            huber_delta: self.network.huber_delta,
            ..DqnConfig::new(OBS_DIM, n_actions)
        }
    }
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    /// Undiscounted return of each training episode, from the trained
    /// agent's point of view.
    pub episode_returns: Vec<f64>,
    pub wall_time_secs: f64,
}

impl Trained {
    /// Saves the checkpoint and its provenance file.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.checkpoint.save(dir)?;
        self.checkpoint.write_provenance(dir, self.wall_time_secs)
    }
}

/// Independent random stream per pipeline stage.
fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

const STAGE_ADVERSARY: u64 = 1;
const STAGE_ALWAYS: u64 = 2;
const STAGE_TWO: u64 = 3;
const STAGE_FOUR: u64 = 4;

fn log_progress(stage: &str, ep: usize, total: usize, returns: &[f64]) {
    let every = (total / 20).max(1);
    if (ep + 1) % every == 0 || ep + 1 == total {
        let tail = &returns[returns.len().saturating_sub(every)..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        log::info!("{stage}: episode {}/{total}, mean return {mean:.4}", ep + 1);
    }
}

fn sac_manifest(cfg: &PipelineConfig, role: Role, kind: &str, agent: &SacAgent, schedule: &TrainSchedule) -> Manifest {
    Manifest {
        role,
        kind: kind.to_string(),
        networks: Default::default(),
        sac: Some(SacMeta {
            low: agent.policy.low.clone(),
            high: agent.policy.high.clone(),
            log_alpha: agent.log_alpha,
            gamma: agent.gamma,
            tau: agent.tau,
            target_entropy: agent.target_entropy,
        }),
        dqn: None,
        schedule: schedule.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        episodes: schedule.episodes,
        train_vol: cfg.train_vol,
    }
}

/// SAC adversary for `cfg.adversary`, trained at `cfg.train_vol` against an
/// always-quoting market maker with symmetric offsets `cfg.opponent_offset`,
/// maximising the negated market-maker reward.
pub fn train_adversary(cfg: &PipelineConfig) -> Result<Trained> {
    cfg.validate()?;
    let kind = cfg.adversary;
    let (low, high) = kind
        .action_box()
        .ok_or_else(|| Error::Config(format!("{kind} adversary is not trainable")))?;
    let schedule = &cfg.adversary_schedule;
    let started = Instant::now();
    let mut rng = stage_rng(cfg.seed, STAGE_ADVERSARY);
    let agent = SacAgent::new(&cfg.sac_config(low, high, schedule), &mut rng)?;
    let mut learner = SacLearner::new(agent, schedule.clone(), rng.next_u64())?;
    let mut env = MarketEnv::new(cfg.train_market(), cfg.hawkes)?;
    let opponent = QuoteAction::both(cfg.opponent_offset, cfg.opponent_offset);
    let mut returns = Vec::with_capacity(schedule.episodes);
    for ep in 0..schedule.episodes {
        let mut obs = env.reset(rng.next_u64());
        let mut total = 0.0;
        loop {
            let (u, a) = learner.act(obs.as_slice())?;
            let adv = params_from_action(kind, &a)?;
            let out = env.step(&opponent, &adv, &cfg.risk)?;
            total += out.reward_adv;
            learner.observe(Transition {
                obs: obs.0.to_vec(),
                action: u,
                reward: out.reward_adv,
                next_obs: out.obs.0.to_vec(),
                done: out.done,
            })?;
            obs = out.obs;
            if out.done {
                break;
            }
        }
        returns.push(total);
        log_progress(&format!("adversary {kind}"), ep, schedule.episodes, &returns);
    }
    let agent = learner.agent;
    let manifest = sac_manifest(cfg, Role::Adversary, kind.as_str(), &agent, schedule);
    Ok(Trained {
        checkpoint: Checkpoint { manifest, body: AgentBody::Sac(agent) },
        episode_returns: returns,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// The frozen adversary for `cfg.adversary`: strategic kinds need a
/// checkpoint of the same kind.
pub fn adversary_spec(cfg: &PipelineConfig, checkpoint: Option<&Checkpoint>) -> Result<AdversarySpec> {
    match checkpoint {
        Some(ck) if cfg.adversary.is_strategic() => {
            let spec = ck.adversary_spec()?;
            if spec.kind() != cfg.adversary {
                return Err(Error::Config(format!(
                    "adversary checkpoint is {} but the config asks for {}",
                    spec.kind(),
                    cfg.adversary
                )));
            }
            Ok(spec)
        }
        _ => AdversarySpec::new(cfg.adversary, None),
    }
}

/// SAC market maker over the offset box `[0, 3]²`, trained at
/// `cfg.train_vol` against the frozen adversary.
pub fn train_always_mm(cfg: &PipelineConfig, adversary: &AdversarySpec) -> Result<Trained> {
    cfg.validate()?;
    let schedule = &cfg.always_schedule;
    let started = Instant::now();
    let mut rng = stage_rng(cfg.seed, STAGE_ALWAYS);
    let sac_cfg = cfg.sac_config(vec![0.0; 2], vec![MAX_OFFSET; 2], schedule);
    let agent = SacAgent::new(&sac_cfg, &mut rng)?;
    let mut learner = SacLearner::new(agent, schedule.clone(), rng.next_u64())?;
    let mut env = MarketEnv::new(cfg.train_market(), cfg.hawkes)?;
    let mut returns = Vec::with_capacity(schedule.episodes);
    for ep in 0..schedule.episodes {
        let mut obs = env.reset(rng.next_u64());
        let base = adversary.begin_episode(&mut rng);
        let mut total = 0.0;
        loop {
            let adv = adversary.act(&base, &obs)?;
            let (u, a) = learner.act(obs.as_slice())?;
            let out = env.step(&QuoteAction::both(a[0], a[1]), &adv, &cfg.risk)?;
            total += out.reward_mm;
            learner.observe(Transition {
                obs: obs.0.to_vec(),
                action: u,
                reward: out.reward_mm,
                next_obs: out.obs.0.to_vec(),
                done: out.done,
            })?;
            obs = out.obs;
            if out.done {
                break;
            }
        }
        returns.push(total);
        log_progress("always-quote MM", ep, schedule.episodes, &returns);
    }
    let agent = learner.agent;
    let manifest = sac_manifest(cfg, Role::MarketMaker, AgentKind::Always.as_str(), &agent, schedule);
    Ok(Trained {
        checkpoint: Checkpoint { manifest, body: AgentBody::Sac(agent) },
        episode_returns: returns,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// DQN market maker choosing which sides to quote, with prices from the
/// frozen always-quote policy `quoter`.
pub fn train_multiaction_mm(
    cfg: &PipelineConfig,
    adversary: &AdversarySpec,
    quoter: Option<&SacPolicy>,
    kind: AgentKind,
) -> Result<Trained> {
    cfg.validate()?;
    let n_actions = kind
        .n_actions()
        .ok_or_else(|| Error::Config("the always-quote agent is trained with SAC".into()))?;
    let quoter = quoter.ok_or_else(|| Error::Config(format!("{kind} market maker needs an always-quote checkpoint")))?;
    if quoter.action_dim() != 2 {
        return Err(Error::Config("quoter must output two offsets".into()));
    }
    let schedule = &cfg.multi_action_schedule;
    let started = Instant::now();
    let stage = if kind == AgentKind::TwoAction { STAGE_TWO } else { STAGE_FOUR };
    let mut rng = stage_rng(cfg.seed, stage);
    let dqn_cfg = cfg.dqn_config(n_actions);
    let agent = DqnAgent::new(&dqn_cfg, &mut rng)?;
    let total_steps = (schedule.episodes * cfg.market.n_steps) as u64;
    let eps = EpsilonSchedule {
        start: cfg.network.epsilon_start,
        end: cfg.network.epsilon_end,
        fraction: cfg.network.epsilon_fraction,
        total_steps,
    };
    let mut learner = DqnLearner::new(agent, schedule.clone(), eps, rng.next_u64())?;
    let mut env = MarketEnv::new(cfg.train_market(), cfg.hawkes)?;
    let mut returns = Vec::with_capacity(schedule.episodes);
    for ep in 0..schedule.episodes {
        let mut obs = env.reset(rng.next_u64());
        let base = adversary.begin_episode(&mut rng);
        let mut total = 0.0;
        loop {
            let adv = adversary.act(&base, &obs)?;
            let idx = learner.act(obs.as_slice())?;
            let action = decode_mm_action(kind, RawAction::Index(idx), Some(quoter), &obs)?;
            let out = env.step(&action, &adv, &cfg.risk)?;
            total += out.reward_mm;
            learner.observe(Transition {
                obs: obs.0.to_vec(),
                action: idx,
                reward: out.reward_mm,
                next_obs: out.obs.0.to_vec(),
                done: out.done,
            })?;
            obs = out.obs;
            if out.done {
                break;
            }
        }
        returns.push(total);
        log_progress(&format!("{kind} MM"), ep, schedule.episodes, &returns);
    }
    let agent = learner.agent;
    let manifest = Manifest {
        role: Role::MarketMaker,
        kind: kind.as_str().to_string(),
        networks: Default::default(),
        sac: None,
        dqn: Some(DqnMeta {
            n_actions,
            gamma: agent.gamma,
            target_update_period: agent.target_update_period,
            huber_delta: agent.huber_delta,
            quoter_low: quoter.low.clone(),
            quoter_high: quoter.high.clone(),
        }),
        schedule: schedule.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        episodes: schedule.episodes,
        train_vol: cfg.train_vol,
    };
    Ok(Trained {
        checkpoint: Checkpoint { manifest, body: AgentBody::Dqn { agent, quoter: quoter.clone() } },
        episode_returns: returns,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Evaluates a frozen market maker at `vol_test` against `adversary` with
/// `cfg.evaluation` runs and episodes and base seed `cfg.seed`.
pub fn evaluate_policy(
    cfg: &PipelineConfig,
    policy: &MmPolicy,
    adversary: &AdversarySpec,
    vol_test: f64,
) -> Result<Evaluation> {
    use crate::eval::MarketMakerPolicy;
    let env = EvalEnv { market: cfg.market.with_sigma(vol_test), hawkes: cfg.hawkes, kind: policy.kind() };
    evaluate(&env, policy, adversary, cfg.evaluation.runs, cfg.evaluation.episodes, cfg.seed)
}

/// Where a row's checkpoints and dumps go, and whether to write dumps.
#[derive(Debug, Clone)]
pub struct RowOutput {
    pub dir: PathBuf,
    pub dump_episodes: bool,
}

fn vol_tag(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

/// Trains everything one table row needs (adversary when strategic, then
/// each column's market maker) and evaluates every column against the
/// fixed adversary. Trained market makers are shared between columns with
/// the same kind and training volatility; the discrete agents always take
/// their prices from the always-quote agent trained at `cfg.train_vol`.
pub fn run_row(
    cfg: &PipelineConfig,
    table_id: &str,
    adversary: AdversaryKind,
    columns: &[AgentColumn],
    out: &RowOutput,
) -> Result<Vec<ResultRow>> {
    let cfg = PipelineConfig { adversary, ..cfg.clone() };
    let dir = out.dir.join(adversary.as_str());
    let spec = if adversary.is_strategic() {
        let trained = train_adversary(&cfg)?;
        trained.save(&dir.join("adversary"))?;
        adversary_spec(&cfg, Some(&trained.checkpoint))?
    } else {
        AdversarySpec::new(adversary, None)?
    };

    let mut trained: Vec<(AgentKind, f64, MmPolicy)> = Vec::new();
    let get = |kind: AgentKind, vol: f64, trained: &mut Vec<(AgentKind, f64, MmPolicy)>| -> Result<MmPolicy> {
        if let Some((_, _, p)) = trained.iter().find(|(k, v, _)| *k == kind && *v == vol) {
            return Ok(p.clone());
        }
        let stage_cfg = PipelineConfig { train_vol: vol, ..cfg.clone() };
        let t = match kind {
            AgentKind::Always => train_always_mm(&stage_cfg, &spec)?,
            _ => {
                let quoter = match trained.iter().find(|(k, v, _)| *k == AgentKind::Always && *v == cfg.train_vol) {
                    Some((_, _, MmPolicy::Always(p))) => p.clone(),
                    _ => {
                        let base = train_always_mm(&cfg, &spec)?;
                        base.save(&dir.join(format!("always-train{}", vol_tag(cfg.train_vol))))?;
                        let p = base.checkpoint.mm_policy()?;
                        trained.push((AgentKind::Always, cfg.train_vol, p.clone()));
                        match p {
                            MmPolicy::Always(p) => p,
                            _ => unreachable!("always-quote checkpoint yields an always policy"),
                        }
                    }
                };
                train_multiaction_mm(&stage_cfg, &spec, Some(&quoter), kind)?
            }
        };
        t.save(&dir.join(format!("{kind}-train{}", vol_tag(vol))))?;
        let p = t.checkpoint.mm_policy()?;
        trained.push((kind, vol, p.clone()));
        Ok(p)
    };

    let fixed = AdversarySpec::fixed();
    let mut rows = Vec::with_capacity(columns.len());
    for col in columns {
        let policy = get(col.kind, col.vol_train, &mut trained)?;
        let ev = evaluate_policy(&cfg, &policy, &fixed, col.vol_test)?;
        if out.dump_episodes {
            let name = format!("{}-{}-train{}-test{}.csv", adversary, col.kind, vol_tag(col.vol_train), vol_tag(col.vol_test));
            fs::create_dir_all(&dir)?;
            write_episode_dump(&dir.join(name), &ev.episodes)?;
        }
        log::info!(
            "{table_id}/{adversary}/{} train {} test {}: wealth {:.4} ± {:.4}, quoting {}",
            col.kind,
            col.vol_train,
            col.vol_test,
            ev.report.wealth_mean,
            ev.report.wealth_std,
            ev.report.quoting
        );
        rows.push(ResultRow {
            table: table_id.to_string(),
            adversary,
            agent: col.kind,
            vol_train: col.vol_train,
            vol_test: col.vol_test,
            report: ev.report,
            seed: cfg.seed,
        });
    }
    Ok(rows)
}

/// Runs every row of table `id` and writes `<out_dir>/<id>/results.csv`.
pub fn reproduce_table(cfg: &PipelineConfig, id: &str, dump_episodes: bool) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let table = cfg.table(id)?.clone();
    let cfg = PipelineConfig { risk: table.risk, ..cfg.clone() };
    let dir = cfg.out_dir.join(&table.id);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    let out = RowOutput { dir: dir.clone(), dump_episodes };
    let mut rows = Vec::new();
    for &adv in &table.adversaries {
        rows.extend(run_row(&cfg, &table.id, adv, &cfg.columns, &out)?);
    }
    emit_csv(&dir.join("results.csv"), &rows)?;
    Ok(rows)
}
