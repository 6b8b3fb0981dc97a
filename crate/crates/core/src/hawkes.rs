//! Self-exciting trade arrivals.
//!
//! Each side keeps its own intensity, updated once per step by the explicit
//! mean-reverting rule
//!
//! ```text
//! λ' = λ + mean_reversion_speed · (baseline − λ) · dt + jump_size · [matched]
//! ```
//!
//! The effective arrival rate at offset `δ` is `λ · exp(−k·δ)`, and the
//! probability of at least one arrival within a step is `1 − exp(−λ_eff·dt)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HawkesParams {
    pub mean_reversion_speed: f64,
    pub baseline_rate: f64,
    pub jump_size: f64,
    pub dt: f64,
}

impl Default for HawkesParams {
    fn default() -> Self {
        Self {
            mean_reversion_speed: 60.0,
            baseline_rate: 10.0,
            jump_size: 40.0,
            dt: 0.005,
        }
    }
}

impl HawkesParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mean_reversion_speed", self.mean_reversion_speed),
            ("baseline_rate", self.baseline_rate),
            ("jump_size", self.jump_size),
            ("dt", self.dt),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("hawkes {name} must be > 0, got {v}")));
            }
        }
        if self.mean_reversion_speed * self.dt >= 1.0 {
            return Err(Error::Config(format!(
                "mean_reversion_speed·dt = {} must be < 1",
                self.mean_reversion_speed * self.dt
            )));
        }
        Ok(())
    }

    /// Same dynamics reverting to a different baseline (the adversary's `A`).
    pub fn with_baseline(self, baseline_rate: f64) -> Self {
        Self { baseline_rate, ..self }
    }
}

/// Per-side intensities plus the fill flags that will excite them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HawkesState {
    pub intensity_bid: f64,
    pub intensity_ask: f64,
    pub last_fill_bid: bool,
    pub last_fill_ask: bool,
}

impl HawkesState {
    /// Both sides start at the baseline, the no-trade fixed point.
    pub fn at_baseline(params: &HawkesParams) -> Self {
        Self {
            intensity_bid: params.baseline_rate,
            intensity_ask: params.baseline_rate,
            last_fill_bid: false,
            last_fill_ask: false,
        }
    }

    /// Records this step's fills and advances both intensities.
    pub fn advance(&mut self, params: &HawkesParams, bid_filled: bool, ask_filled: bool) {
        self.intensity_bid = update_intensity(self.intensity_bid, params, bid_filled);
        self.intensity_ask = update_intensity(self.intensity_ask, params, ask_filled);
        self.last_fill_bid = bid_filled;
        self.last_fill_ask = ask_filled;
    }
}

#[inline]
pub fn update_intensity(lambda: f64, params: &HawkesParams, matched: bool) -> f64 {
    let jump = if matched { params.jump_size } else { 0.0 };
    lambda + params.mean_reversion_speed * (params.baseline_rate - lambda) * params.dt + jump
}

#[inline]
pub fn arrival_intensity(lambda: f64, k: f64, delta: f64) -> f64 {
    lambda * (-k * delta).exp()
}

#[inline]
pub fn fill_probability(effective_lambda: f64, dt: f64) -> f64 {
    // -expm1(-x) keeps precision for small λ·dt.
    -(-effective_lambda * dt).exp_m1()
}

#[inline]
pub fn sample_fill(p: f64, u: f64) -> bool {
    u < p
}
