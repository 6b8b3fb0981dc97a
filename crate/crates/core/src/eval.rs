//! Batch evaluation of frozen market makers and the result/dump CSVs.

use std::fs::File;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryKind, AdversarySpec};
use crate::rl::dqn::DqnAgent;
use crate::env::{decode_mm_action, AgentKind, MarketEnv, Observation, OffsetQuoter, RawAction, RiskParams};
use crate::error::{Error, Result};
use crate::hawkes::HawkesParams;
use crate::market::{wealth, MarketParams};
use crate::rl::sac::SacPolicy;

/// A deterministic market-maker policy as seen by the evaluator.
pub trait MarketMakerPolicy: Sync {
    fn kind(&self) -> AgentKind;
    fn raw_action(&self, obs: &Observation) -> Result<RawAction>;
    /// Prices the quotes of discrete agents.
    fn quoter(&self) -> Option<&dyn OffsetQuoter> {
        None
    }
}

/// Frozen trained market makers.
#[derive(Debug, Clone)]
pub enum MmPolicy {
    Always(SacPolicy),
    MultiAction { kind: AgentKind, q: DqnAgent, quoter: SacPolicy },
}

impl MarketMakerPolicy for MmPolicy {
    fn kind(&self) -> AgentKind {
        match self {
            MmPolicy::Always(_) => AgentKind::Always,
            MmPolicy::MultiAction { kind, .. } => *kind,
        }
    }

    fn raw_action(&self, obs: &Observation) -> Result<RawAction> {
        match self {
            MmPolicy::Always(p) => {
                let a = p.deterministic_action(obs.as_slice())?;
                Ok(RawAction::Offsets([a[0], a[1]]))
            }
            MmPolicy::MultiAction { q, .. } => Ok(RawAction::Index(q.greedy(obs.as_slice())?)),
        }
    }

    fn quoter(&self) -> Option<&dyn OffsetQuoter> {
        match self {
            MmPolicy::Always(_) => None,
            MmPolicy::MultiAction { quoter, .. } => Some(quoter),
        }
    }
}

/// Test environment: market and Hawkes parameters plus the action space
/// the environment decodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalEnv {
    pub market: MarketParams,
    pub hawkes: HawkesParams,
    pub kind: AgentKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub terminal_wealth: f64,
    pub terminal_inventory: i64,
    /// Steps spent in each mode, indexed none/both/ask/bid.
    pub action_counts: [u64; 4],
}

/// Random stream for the adversary's per-episode draw; separate from the
/// market's so the market path does not depend on the adversary kind.
fn adversary_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn run_episode(
    env: &EvalEnv,
    policy: &dyn MarketMakerPolicy,
    adversary: &AdversarySpec,
    seed: u64,
) -> Result<EpisodeResult> {
    if policy.kind() != env.kind {
        return Err(Error::Contract(format!(
            "policy kind {} does not match environment kind {}",
            policy.kind(),
            env.kind
        )));
    }
    let mut sim = MarketEnv::new(env.market, env.hawkes)?;
    let mut obs = sim.reset(seed);
    let base = adversary.begin_episode(&mut adversary_rng(seed));
    let mut counts = [0u64; 4];
    loop {
        let adv = adversary.act(&base, &obs)?;
        let raw = policy.raw_action(&obs)?;
        let action = decode_mm_action(env.kind, raw, policy.quoter(), &obs)?;
        counts[action.mode.index()] += 1;
        let out = sim.step(&action, &adv, &RiskParams::RISK_NEUTRAL)?;
        obs = out.obs;
        if out.done {
            break;
        }
    }
    let state = sim.state();
    Ok(EpisodeResult {
        seed,
        terminal_wealth: wealth(&state.account, state.z),
        terminal_inventory: state.account.inventory,
        action_counts: counts,
    })
}

/// Seed of the flattened episode index `run·episodes + episode`.
pub fn episode_seed(base_seed: u64, run: usize, episodes: usize, episode: usize) -> u64 {
    base_seed ^ (run * episodes + episode) as u64
}

/// `mean / std`, undefined when `std = 0`.
pub fn sharpe(mean: f64, std: f64) -> Option<f64> {
    (std > 0.0).then(|| mean / std)
}

/// Per-step quoting decisions aggregated over an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuotingRatio {
    pub counts: [u64; 4],
}

impl QuotingRatio {
    pub fn new(counts: [u64; 4]) -> Result<Self> {
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::Contract("quoting ratio of zero steps".into()));
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Unrounded `100·count/total`.
    pub fn percentages(&self) -> [f64; 4] {
        let t = self.total() as f64;
        self.counts.map(|c| 100.0 * c as f64 / t)
    }

    /// Percentages in hundredths of a percent, rounded by largest remainder
    /// so they always add to exactly 100.00.
    pub fn hundredths(&self) -> [u64; 4] {
        let t = self.total() as u128;
        let scaled = self.counts.map(|c| c as u128 * 10_000);
        let mut out = scaled.map(|s| (s / t) as u64);
        let mut left = 10_000 - out.iter().sum::<u64>();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&i, &j| (scaled[j] % t).cmp(&(scaled[i] % t)).then(i.cmp(&j)));
        for i in order {
            if left == 0 {
                break;
            }
            if scaled[i] % t != 0 {
                out[i] += 1;
                left -= 1;
            }
        }
        out
    }

    /// Two-decimal strings in none/both/ask/bid order.
    pub fn formatted(&self) -> [String; 4] {
        self.hundredths().map(|h| format!("{}.{:02}", h / 100, h % 100))
    }

    pub fn bilateral_fraction(&self) -> f64 {
        self.counts[1] as f64 / self.total() as f64
    }
}

impl std::fmt::Display for QuotingRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.formatted().join("+"))
    }
}

pub fn quoting_ratio(counts: [u64; 4]) -> Result<QuotingRatio> {
    QuotingRatio::new(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub wealth_mean: f64,
    /// Population standard deviation.
    pub wealth_std: f64,
    pub sharpe: Option<f64>,
    pub inventory_mean: f64,
    pub inventory_std: f64,
    pub quoting: QuotingRatio,
    pub runs: usize,
    pub episodes_per_run: usize,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    /// Pooled statistics over `episodes` in the given order.
    pub fn from_episodes(episodes: &[EpisodeResult], runs: usize, episodes_per_run: usize) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Contract("no episodes to aggregate".into()));
        }
        let (wealth_mean, wealth_std) = mean_std(episodes.iter().map(|e| e.terminal_wealth));
        let (inventory_mean, inventory_std) = mean_std(episodes.iter().map(|e| e.terminal_inventory as f64));
        let mut counts = [0u64; 4];
        for e in episodes {
            for (c, x) in counts.iter_mut().zip(e.action_counts) {
                *c += x;
            }
        }
        Ok(Self {
            wealth_mean,
            wealth_std,
            sharpe: sharpe(wealth_mean, wealth_std),
            inventory_mean,
            inventory_std,
            quoting: QuotingRatio::new(counts)?,
            runs,
            episodes_per_run,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    /// In flattened seed-index order.
    pub episodes: Vec<EpisodeResult>,
}

/// `runs × episodes` episodes in parallel; results are collected in seed
/// index order, so the thread count never changes the output.
pub fn evaluate(
    env: &EvalEnv,
    policy: &dyn MarketMakerPolicy,
    adversary: &AdversarySpec,
    runs: usize,
    episodes: usize,
    base_seed: u64,
) -> Result<Evaluation> {
    if runs == 0 || episodes == 0 {
        return Err(Error::Contract(format!("runs ({runs}) and episodes ({episodes}) must be >= 1")));
    }
    let results = (0..runs * episodes)
        .into_par_iter()
        .map(|i| run_episode(env, policy, adversary, episode_seed(base_seed, i / episodes, episodes, i % episodes)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation { report: EvalReport::from_episodes(&results, runs, episodes)?, episodes: results })
}

/// One cell of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub table: String,
    pub adversary: AdversaryKind,
    pub agent: AgentKind,
    pub vol_train: f64,
    pub vol_test: f64,
    pub report: EvalReport,
    pub seed: u64,
}

pub const RESULTS_HEADER: [&str; 17] = [
    "table",
    "adversary",
    "agent",
    "vol_train",
    "vol_test",
    "wealth_mean",
    "wealth_std",
    "sharpe",
    "inv_mean",
    "inv_std",
    "q_none",
    "q_both",
    "q_ask",
    "q_bid",
    "runs",
    "episodes",
    "seed",
];

/// A parsed row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub table: String,
    pub adversary: String,
    pub agent: String,
    pub vol_train: f64,
    pub vol_test: f64,
    pub wealth_mean: f64,
    pub wealth_std: f64,
    pub sharpe: Option<f64>,
    pub inv_mean: f64,
    pub inv_std: f64,
    pub q_none: f64,
    pub q_both: f64,
    pub q_ask: f64,
    pub q_bid: f64,
    pub runs: usize,
    pub episodes: usize,
    pub seed: u64,
}

/// Rank of a table id in the standard list; unknown ids sort last.
fn table_rank(id: &str) -> usize {
    crate::pipeline::TABLE_IDS.iter().position(|t| *t == id).unwrap_or(usize::MAX)
}

fn agent_rank(kind: AgentKind) -> usize {
    kind.n_actions().unwrap_or(0)
}

/// Writes rows sorted by (table, adversary, agent, vol_train, vol_test).
pub fn emit_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Contract("no result rows to write".into()));
    }
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|x, y| {
        (table_rank(&x.table), &x.table, x.adversary, agent_rank(x.agent))
            .cmp(&(table_rank(&y.table), &y.table, y.adversary, agent_rank(y.agent)))
            .then(x.vol_train.total_cmp(&y.vol_train))
            .then(x.vol_test.total_cmp(&y.vol_test))
    });
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(RESULTS_HEADER)?;
    for r in sorted {
        let rep = &r.report;
        let q = rep.quoting.formatted();
        let mut rec = vec![
            r.table.clone(),
            r.adversary.as_str().to_string(),
            r.agent.as_str().to_string(),
            r.vol_train.to_string(),
            r.vol_test.to_string(),
            rep.wealth_mean.to_string(),
            rep.wealth_std.to_string(),
            rep.sharpe.map(|s| s.to_string()).unwrap_or_default(),
            rep.inventory_mean.to_string(),
            rep.inventory_std.to_string(),
        ];
        rec.extend(q);
        rec.extend([rep.runs.to_string(), rep.episodes_per_run.to_string(), r.seed.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::Contract(format!("unexpected results header {header:?}")));
    }
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

/// Per-episode audit row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub terminal_wealth: f64,
    pub terminal_inventory: i64,
    pub n_none: u64,
    pub n_both: u64,
    pub n_ask: u64,
    pub n_bid: u64,
}

impl From<&EpisodeResult> for EpisodeRecord {
    fn from(e: &EpisodeResult) -> Self {
        let [n_none, n_both, n_ask, n_bid] = e.action_counts;
        Self {
            seed: e.seed,
            terminal_wealth: e.terminal_wealth,
            terminal_inventory: e.terminal_inventory,
            n_none,
            n_both,
            n_ask,
            n_bid,
        }
    }
}

pub fn write_episode_dump(path: &Path, episodes: &[EpisodeResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for e in episodes {
        w.serialize(EpisodeRecord::from(e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode_dump(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}
