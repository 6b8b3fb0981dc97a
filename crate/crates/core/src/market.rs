//! Mid-price evolution, quote construction and cash/inventory accounting.
//!
//! The mid-price is an arithmetic Brownian motion with drift,
//! `z' = z + b·dt + σ·√dt·w` with `w ~ N(0, 1)`. Quotes sit at
//! `bid = z − δ⁺` and `ask = z + δ⁻`; each side trades at most one unit per
//! step, and wealth is marked to the mid: `Π = X + H·Z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Initial mid-price.
    pub z0: f64,
    /// Volatility coefficient.
    pub sigma: f64,
    /// Step length.
    pub dt: f64,
    /// Steps per episode.
    pub n_steps: usize,
    pub h_min: i64,
    pub h_max: i64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            z0: 100.0,
            sigma: 2.0,
            dt: 0.005,
            n_steps: 200,
            h_min: -10,
            h_max: 10,
        }
    }
}

impl MarketParams {
    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_steps < 1 {
            return Err(Error::Config("n_steps must be >= 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !self.z0.is_finite() {
            return Err(Error::Config("z0 must be finite".into()));
        }
        if !(self.h_min < 0 && 0 < self.h_max) {
            return Err(Error::Config(format!(
                "inventory bounds must satisfy h_min < 0 < h_max, got [{}, {}]",
                self.h_min, self.h_max
            )));
        }
        Ok(())
    }
}

/// Cash and signed inventory of the market maker.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Account {
    pub cash: f64,
    pub inventory: i64,
}

/// Unit fills on each side during one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Fills {
    pub bid_filled: bool,
    pub ask_filled: bool,
}

/// Advances the mid-price by one step. `w` is a standard-normal draw; the
/// result is never clamped, so the price may go negative at high volatility.
#[inline]
pub fn step_price(z: f64, b: f64, sigma: f64, dt: f64, w: f64) -> f64 {
    z + b * dt + sigma * dt.sqrt() * w
}

/// Returns `(bid, ask)` prices for the given offsets.
pub fn quote_prices(z: f64, delta_bid: f64, delta_ask: f64) -> Result<(f64, f64)> {
    if !(delta_bid >= 0.0) || !(delta_ask >= 0.0) {
        return Err(Error::Contract(format!(
            "quote offsets must be non-negative, got bid {delta_bid}, ask {delta_ask}"
        )));
    }
    Ok((z - delta_bid, z + delta_ask))
}

/// Settles this step's fills at the quoted prices.
pub fn apply_fills(
    account: Account,
    fills: Fills,
    z: f64,
    delta_bid: f64,
    delta_ask: f64,
    params: &MarketParams,
) -> Result<Account> {
    let (bid, ask) = quote_prices(z, delta_bid, delta_ask)?;
    let mut next = account;
    if fills.ask_filled {
        next.cash += ask;
        next.inventory -= 1;
    }
    if fills.bid_filled {
        next.cash -= bid;
        next.inventory += 1;
    }
    if next.inventory < params.h_min || next.inventory > params.h_max {
        return Err(Error::Invariant(format!(
            "inventory {} outside [{}, {}] after fills {:?}",
            next.inventory, params.h_min, params.h_max, fills
        )));
    }
    Ok(next)
}

/// Mark-to-mid wealth `X + H·z`.
#[inline]
pub fn wealth(account: &Account, z: f64) -> f64 {
    account.cash + account.inventory as f64 * z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acct(cash: f64, inventory: i64) -> Account {
        Account { cash, inventory }
    }

    #[test]
    fn price_step_examples() {
        assert_eq!(step_price(100.0, 0.0, 2.0, 0.005, 0.0), 100.0);
        assert!((step_price(100.0, 5.0, 2.0, 0.005, 0.0) - 100.025).abs() < 1e-12);
        // 2·√0.005 = 0.14142135623730950488…
        let z = step_price(100.0, 0.0, 2.0, 0.005, 1.0);
        assert!((z - 100.141_421_356_237_31).abs() < 1e-12);
    }

    #[test]
    fn quotes() {
        assert_eq!(quote_prices(100.0, 1.0, 1.0).unwrap(), (99.0, 101.0));
        assert_eq!(quote_prices(100.0, 0.0, 0.0).unwrap(), (100.0, 100.0));
        assert_eq!(quote_prices(100.0, 3.0, 0.5).unwrap(), (97.0, 100.5));
        assert!(matches!(quote_prices(100.0, -0.1, 1.0), Err(Error::Contract(_))));
        assert!(matches!(quote_prices(100.0, 1.0, f64::NAN), Err(Error::Contract(_))));
    }

    #[test]
    fn fills_settle_at_quoted_prices() {
        let p = MarketParams::default();
        let ask = Fills { bid_filled: false, ask_filled: true };
        let bid = Fills { bid_filled: true, ask_filled: false };
        let both = Fills { bid_filled: true, ask_filled: true };
        assert_eq!(apply_fills(acct(0.0, 0), ask, 100.0, 1.0, 1.0, &p).unwrap(), acct(101.0, -1));
        assert_eq!(apply_fills(acct(0.0, 0), bid, 100.0, 1.0, 1.0, &p).unwrap(), acct(-99.0, 1));
        assert_eq!(apply_fills(acct(0.0, 0), both, 100.0, 1.0, 1.0, &p).unwrap(), acct(2.0, 0));
    }

    #[test]
    fn fill_past_bound_is_an_invariant_error() {
        let p = MarketParams::default();
        let bid = Fills { bid_filled: true, ask_filled: false };
        let err = apply_fills(acct(0.0, p.h_max), bid, 100.0, 1.0, 1.0, &p).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn wealth_examples() {
        assert_eq!(wealth(&acct(101.0, -1), 100.0), 1.0);
        assert_eq!(wealth(&acct(0.0, 0), 12345.0), 0.0);
        assert_eq!(wealth(&acct(-99.0, 1), 102.0), 3.0);
    }

    #[test]
    fn validation() {
        assert!(MarketParams::default().validate().is_ok());
        let bad = MarketParams { dt: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = MarketParams { h_min: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = MarketParams { n_steps: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
