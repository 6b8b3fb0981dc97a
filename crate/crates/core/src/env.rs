//! Episode state machine: composes price moves, Hawkes execution and
//! accounting into one `step`, builds observations and computes the
//! zero-sum, inventory-penalised rewards.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::{self, HawkesParams, HawkesState};
use crate::market::{self, Account, Fills, MarketParams};

/// Upper end of the market maker's offset range; the lower end is 0.
pub const MAX_OFFSET: f64 = 3.0;

/// Number of observation features.
pub const OBS_DIM: usize = 5;

/// The adversary's control: drift `b`, Hawkes baseline `a` and book-depth
/// decay `k`, shared by both sides of the book.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryParams {
    pub b: f64,
    pub a: f64,
    pub k: f64,
}

impl AdversaryParams {
    pub const FIXED: Self = Self { b: 0.0, a: 10.0, k: 1.5 };
    pub const DRIFT_RANGE: (f64, f64) = (-5.0, 5.0);
    pub const BASELINE_RANGE: (f64, f64) = (7.5, 12.5);
    pub const DECAY_RANGE: (f64, f64) = (1.125, 1.875);

    pub fn low() -> [f64; 3] {
        [Self::DRIFT_RANGE.0, Self::BASELINE_RANGE.0, Self::DECAY_RANGE.0]
    }

    pub fn high() -> [f64; 3] {
        [Self::DRIFT_RANGE.1, Self::BASELINE_RANGE.1, Self::DECAY_RANGE.1]
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.b, self.a, self.k]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self { b: v[0], a: v[1], k: v[2] }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (Self::low(), Self::high());
        for (i, (name, v)) in [("b", self.b), ("a", self.a), ("k", self.k)].into_iter().enumerate() {
            if !(lo[i]..=hi[i]).contains(&v) {
                return Err(Error::Contract(format!(
                    "adversary {name} = {v} outside [{}, {}]",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(())
    }
}

impl Default for AdversaryParams {
    fn default() -> Self {
        Self::FIXED
    }
}

/// Inventory penalty coefficients: `eta` is charged once at the terminal
/// step, `zeta` at every step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskParams {
    pub eta: f64,
    pub zeta: f64,
}

impl RiskParams {
    pub const RISK_NEUTRAL: Self = Self { eta: 0.0, zeta: 0.0 };

    pub fn new(eta: f64, zeta: f64) -> Self {
        Self { eta, zeta }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.zeta >= 0.0) {
            return Err(Error::Config(format!(
                "risk coefficients must be >= 0, got eta {} zeta {}",
                self.eta, self.zeta
            )));
        }
        Ok(())
    }
}

/// Which sides the market maker quotes. Discriminants follow the
/// four-action encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuoteMode {
    None = 0,
    Both = 1,
    AskOnly = 2,
    BidOnly = 3,
}

impl QuoteMode {
    pub const ALL: [QuoteMode; 4] = [QuoteMode::None, QuoteMode::Both, QuoteMode::AskOnly, QuoteMode::BidOnly];

    pub fn quotes_bid(self) -> bool {
        matches!(self, QuoteMode::Both | QuoteMode::BidOnly)
    }

    pub fn quotes_ask(self) -> bool {
        matches!(self, QuoteMode::Both | QuoteMode::AskOnly)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteAction {
    pub mode: QuoteMode,
    pub delta_bid: f64,
    pub delta_ask: f64,
}

impl QuoteAction {
    pub const NONE: Self = Self { mode: QuoteMode::None, delta_bid: 0.0, delta_ask: 0.0 };

    pub fn both(delta_bid: f64, delta_ask: f64) -> Self {
        Self { mode: QuoteMode::Both, delta_bid, delta_ask }
    }

    fn validate(&self) -> Result<()> {
        let ok = |d: f64| (0.0..=MAX_OFFSET).contains(&d);
        if !ok(self.delta_bid) || !ok(self.delta_ask) {
            return Err(Error::Contract(format!(
                "offsets ({}, {}) outside [0, {MAX_OFFSET}]",
                self.delta_bid, self.delta_ask
            )));
        }
        Ok(())
    }
}

/// The three market-maker action spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    /// Two continuous offsets, always quoting both sides.
    #[serde(rename = "always")]
    Always,
    /// {0: no quotes, 1: both sides}.
    #[serde(rename = "2action")]
    TwoAction,
    /// {0: none, 1: both, 2: ask only, 3: bid only}.
    #[serde(rename = "4action")]
    FourAction,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Always => "always",
            AgentKind::TwoAction => "2action",
            AgentKind::FourAction => "4action",
        }
    }

    /// Size of the discrete action set, `None` for the continuous agent.
    pub fn n_actions(self) -> Option<usize> {
        match self {
            AgentKind::Always => None,
            AgentKind::TwoAction => Some(2),
            AgentKind::FourAction => Some(4),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "always" => Ok(AgentKind::Always),
            "2action" => Ok(AgentKind::TwoAction),
            "4action" => Ok(AgentKind::FourAction),
            other => Err(Error::Config(format!("unknown agent kind {other:?}"))),
        }
    }
}

/// Normalised features seen by every agent:
/// `[n/N, H/h_max, Δz/(σ√dt), λ_bid/A₀, λ_ask/A₀]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn time_fraction(&self) -> f64 {
        self.0[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub step_index: usize,
    pub z: f64,
    pub z_prev: f64,
    pub account: Account,
    pub hawkes: HawkesState,
}

/// Random inputs consumed by one step, in draw order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDraws {
    pub u_bid: f64,
    pub u_ask: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward_mm: f64,
    pub reward_adv: f64,
    pub done: bool,
    pub fills: Fills,
    /// Sides actually quoted after inventory-bound blocking.
    pub quoted_bid: bool,
    pub quoted_ask: bool,
    pub p_bid: f64,
    pub p_ask: f64,
    pub delta_wealth: f64,
}

/// Supplies bid/ask offsets for the discrete agents, which only choose
/// which sides to quote.
pub trait OffsetQuoter {
    /// Deterministic `(delta_bid, delta_ask)` for an observation.
    fn offsets(&self, obs: &Observation) -> (f64, f64);
}

/// Constant symmetric or asymmetric offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedOffsets {
    pub delta_bid: f64,
    pub delta_ask: f64,
}

impl OffsetQuoter for FixedOffsets {
    fn offsets(&self, _obs: &Observation) -> (f64, f64) {
        (self.delta_bid, self.delta_ask)
    }
}

/// Raw policy output before decoding into a [`QuoteAction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawAction {
    /// `(delta_bid, delta_ask)`.
    Offsets([f64; 2]),
    Index(usize),
}

pub fn decode_mm_action(
    kind: AgentKind,
    raw: RawAction,
    frozen_quoter: Option<&dyn OffsetQuoter>,
    obs: &Observation,
) -> Result<QuoteAction> {
    let mode = match (kind, raw) {
        (AgentKind::Always, RawAction::Offsets([bid, ask])) => {
            let action = QuoteAction::both(bid, ask);
            action.validate().map_err(|e| Error::Decode(e.to_string()))?;
            return Ok(action);
        }
        (AgentKind::TwoAction, RawAction::Index(i)) => match i {
            0 => QuoteMode::None,
            1 => QuoteMode::Both,
            _ => return Err(Error::Decode(format!("2-action index {i} out of range"))),
        },
        (AgentKind::FourAction, RawAction::Index(i)) => *QuoteMode::ALL
            .get(i)
            .ok_or_else(|| Error::Decode(format!("4-action index {i} out of range")))?,
        (kind, raw) => return Err(Error::Decode(format!("{raw:?} does not match agent kind {kind}"))),
    };
    if mode == QuoteMode::None {
        return Ok(QuoteAction::NONE);
    }
    let quoter = frozen_quoter
        .ok_or_else(|| Error::Decode(format!("{kind} agent needs a frozen quoter to price its quotes")))?;
    let (delta_bid, delta_ask) = quoter.offsets(obs);
    let action = QuoteAction { mode, delta_bid, delta_ask };
    action.validate().map_err(|e| Error::Decode(e.to_string()))?;
    Ok(action)
}

/// `ΔΠ − ζH² − [terminal]·ηH²`.
#[inline]
pub fn reward(delta_wealth: f64, inventory: i64, risk: &RiskParams, terminal: bool) -> f64 {
    let h2 = (inventory * inventory) as f64;
    let terminal_penalty = if terminal { risk.eta * h2 } else { 0.0 };
    delta_wealth - risk.zeta * h2 - terminal_penalty
}

/// One simulated market with its own random stream.
#[derive(Debug, Clone)]
pub struct MarketEnv {
    market: MarketParams,
    hawkes: HawkesParams,
    state: MarketState,
    rng: ChaCha8Rng,
}

impl MarketEnv {
    pub fn new(market: MarketParams, hawkes: HawkesParams) -> Result<Self> {
        market.validate()?;
        hawkes.validate()?;
        if (market.dt - hawkes.dt).abs() > 1e-15 {
            return Err(Error::Config(format!(
                "market dt {} and hawkes dt {} differ",
                market.dt, hawkes.dt
            )));
        }
        let mut env = Self {
            market,
            hawkes,
            state: initial_state(&market, &hawkes),
            rng: ChaCha8Rng::seed_from_u64(0),
        };
        env.reset(0);
        Ok(env)
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn hawkes(&self) -> &HawkesParams {
        &self.hawkes
    }

    pub fn state(&self) -> &MarketState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.step_index >= self.market.n_steps
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        self.state = initial_state(&self.market, &self.hawkes);
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.observe()
    }

    pub fn observe(&self) -> Observation {
        let s = &self.state;
        let m = &self.market;
        let scale = m.sigma * m.dt.sqrt();
        let dz = if scale > 0.0 { (s.z - s.z_prev) / scale } else { 0.0 };
        let base = self.hawkes.baseline_rate;
        Observation([
            s.step_index as f64 / m.n_steps as f64,
            s.account.inventory as f64 / m.h_max as f64,
            dz,
            s.hawkes.intensity_bid / base,
            s.hawkes.intensity_ask / base,
        ])
    }

    /// Draws the next step's random inputs from the episode stream.
    pub fn draw(&mut self) -> StepDraws {
        StepDraws {
            u_bid: self.rng.gen(),
            u_ask: self.rng.gen(),
            w: self.rng.sample(StandardNormal),
        }
    }

    pub fn step(&mut self, mm: &QuoteAction, adv: &AdversaryParams, risk: &RiskParams) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::State("step called on a finished episode".into()));
        }
        let draws = self.draw();
        self.step_with(mm, adv, risk, draws)
    }

    /// Steps with caller-supplied random inputs.
    pub fn step_with(
        &mut self,
        mm: &QuoteAction,
        adv: &AdversaryParams,
        risk: &RiskParams,
        draws: StepDraws,
    ) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::State("step called on a finished episode".into()));
        }
        mm.validate()?;
        adv.validate()?;
        let m = self.market;
        let before = self.state;
        let h = before.account.inventory;

        // A side that would breach the inventory bound is withdrawn this step.
        let quoted_bid = mm.mode.quotes_bid() && h < m.h_max;
        let quoted_ask = mm.mode.quotes_ask() && h > m.h_min;
        let side_prob = |quoted: bool, lambda: f64, delta: f64| {
            if quoted {
                hawkes::fill_probability(hawkes::arrival_intensity(lambda, adv.k, delta), m.dt)
            } else {
                0.0
            }
        };
        let p_bid = side_prob(quoted_bid, before.hawkes.intensity_bid, mm.delta_bid);
        let p_ask = side_prob(quoted_ask, before.hawkes.intensity_ask, mm.delta_ask);
        let fills = Fills {
            bid_filled: hawkes::sample_fill(p_bid, draws.u_bid),
            ask_filled: hawkes::sample_fill(p_ask, draws.u_ask),
        };

        let account = market::apply_fills(before.account, fills, before.z, mm.delta_bid, mm.delta_ask, &m)?;
        let z = market::step_price(before.z, adv.b, m.sigma, m.dt, draws.w);
        let mut hawkes_state = before.hawkes;
        hawkes_state.advance(&self.hawkes.with_baseline(adv.a), fills.bid_filled, fills.ask_filled);

        let delta_wealth = market::wealth(&account, z) - market::wealth(&before.account, before.z);
        let step_index = before.step_index + 1;
        let done = step_index == m.n_steps;
        let reward_mm = reward(delta_wealth, account.inventory, risk, done);

        self.state = MarketState {
            step_index,
            z,
            z_prev: before.z,
            account,
            hawkes: hawkes_state,
        };
        Ok(StepOutcome {
            obs: self.observe(),
            reward_mm,
            reward_adv: -reward_mm,
            done,
            fills,
            quoted_bid,
            quoted_ask,
            p_bid,
            p_ask,
            delta_wealth,
        })
    }
}

fn initial_state(market: &MarketParams, hawkes: &HawkesParams) -> MarketState {
    MarketState {
        step_index: 0,
        z: market.z0,
        z_prev: market.z0,
        account: Account::default(),
        hawkes: HawkesState::at_baseline(hawkes),
    }
}

/// Builds an environment and resets it with `seed`.
pub fn reset(market: MarketParams, hawkes: HawkesParams, seed: u64) -> Result<(MarketEnv, Observation)> {
    let mut env = MarketEnv::new(market, hawkes)?;
    let obs = env.reset(seed);
    Ok((env, obs))
}
