//! Asset–liability projection of a stylized participating savings book.
//!
//! The balance sheet is notional: invested assets equal reserves and are
//! rebalanced to fixed allocation weights at every period start, so each
//! period's blended asset return is the weight-fixed mix of four class
//! returns read off the driving [`EconomicPath`]:
//!
//! * stock / real estate — index ratios straddling the period (these pick up
//!   any instantaneous shock jump at a node date),
//! * bonds — a rolling equal-weight zero-coupon ladder: each year the book
//!   holds maturities 1..=L, earns the price change as every bond ages one
//!   year, and reinvests to restore the ladder,
//! * cash — the effective money-market return exp(mm) − 1.
//!
//! Per model point, the credited rate is max(guaranteed, sharing × asset
//! return); lapses respond to the shortfall of credited against the
//! money-market target rate; the shareholder margin is a fee on reserves plus
//! the spread retained above crediting. Reserves roll forward with crediting
//! and lapses. Profits are measured per period and valued by the path's own
//! discount factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esg::EconomicPath;

// ─────────────────────────────────────────────────────────────────────────────
// Configuration
// ─────────────────────────────────────────────────────────────────────────────

/// Market-value asset allocation weights. Non-negative, summing to 1; the
/// book is rebalanced to these weights every period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetAllocation {
    pub stock: f64,
    pub real_estate: f64,
    pub bonds: f64,
    pub cash: f64,
}

impl Default for AssetAllocation {
    fn default() -> Self {
        // Dominantly fixed-income with a thin equity sleeve, the typical
        // profile of a participating savings book.
        AssetAllocation { stock: 0.14, real_estate: 0.03, bonds: 0.78, cash: 0.05 }
    }
}

impl AssetAllocation {
    fn sum(&self) -> f64 {
        self.stock + self.real_estate + self.bonds + self.cash
    }
}

/// One homogeneous group of contracts: a reserve amount carrying one
/// guaranteed minimum crediting rate. `weight` is the group's share of the
/// book and must stay consistent with the reserve amounts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPoint {
    /// Initial mathematical reserve, currency.
    pub reserve: f64,
    /// Guaranteed minimum crediting rate, effective per year. Non-negative.
    pub guaranteed_rate: f64,
    /// Share of the total book, for reporting; must equal reserve / total.
    pub weight: f64,
}

/// Liability-side configuration of the projected book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortfolioConfig {
    pub asset_allocation: AssetAllocation,
    pub model_points: Vec<ModelPoint>,
    /// Fraction of the blended asset return offered to policyholders before
    /// the guarantee floor applies.
    pub profit_sharing_rate: f64,
    /// Management fee on start-of-period reserves, per year.
    pub margin_fee: f64,
    /// Structural lapse rate, per year.
    pub base_lapse: f64,
    /// Extra lapses per unit of max(0, target − credited). Dimensionless.
    pub dynamic_lapse_slope: f64,
    /// Liability extinction horizon H, years: every valuation projects
    /// exactly H years past its node date.
    pub liability_horizon_h: usize,
    /// Length L of the rolling zero-coupon ladder backing the bond sleeve,
    /// years. The driving paths must carry at least L curve maturities.
    pub bond_ladder_years: usize,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        PortfolioConfig {
            asset_allocation: AssetAllocation::default(),
            // 0.7·0.085% + 0.3·2.5% = 0.81% average guarantee: a mostly-cheap
            // book with a meaningful high-guarantee minority.
            model_points: vec![
                ModelPoint { reserve: 70.0, guaranteed_rate: 0.00085, weight: 0.7 },
                ModelPoint { reserve: 30.0, guaranteed_rate: 0.025, weight: 0.3 },
            ],
            profit_sharing_rate: 0.90,
            margin_fee: 0.009,
            base_lapse: 0.03,
            dynamic_lapse_slope: 2.0,
            liability_horizon_h: 20,
            bond_ladder_years: 10,
        }
    }
}

impl PortfolioConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let w = &self.asset_allocation;
        for (name, v) in [
            ("stock", w.stock),
            ("real_estate", w.real_estate),
            ("bonds", w.bonds),
            ("cash", w.cash),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                errors.push(format!("portfolio.asset_allocation.{name} must be >= 0 (got {v})"));
            }
        }
        if (w.sum() - 1.0).abs() > 1e-9 {
            errors.push(format!(
                "portfolio.asset_allocation weights must sum to 1 (got {})",
                w.sum()
            ));
        }
        if self.model_points.is_empty() {
            errors.push("portfolio.model_points must not be empty".to_string());
        }
        let total: f64 = self.model_points.iter().map(|m| m.reserve).sum();
        for (i, m) in self.model_points.iter().enumerate() {
            if !(m.reserve > 0.0) || !m.reserve.is_finite() {
                errors.push(format!("portfolio.model_points[{i}].reserve must be > 0 (got {})", m.reserve));
            }
            if !(m.guaranteed_rate >= 0.0) || !m.guaranteed_rate.is_finite() {
                errors.push(format!(
                    "portfolio.model_points[{i}].guaranteed_rate must be >= 0 (got {})",
                    m.guaranteed_rate
                ));
            }
            if total > 0.0 && (m.weight - m.reserve / total).abs() > 1e-6 {
                errors.push(format!(
                    "portfolio.model_points[{i}].weight {} is inconsistent with its reserve share {}",
                    m.weight,
                    m.reserve / total
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.profit_sharing_rate) {
            errors.push(format!(
                "portfolio.profit_sharing_rate must lie in [0, 1] (got {})",
                self.profit_sharing_rate
            ));
        }
        if !(self.margin_fee >= 0.0) || !self.margin_fee.is_finite() {
            errors.push(format!("portfolio.margin_fee must be >= 0 (got {})", self.margin_fee));
        }
        if !(0.0..=1.0).contains(&self.base_lapse) {
            errors.push(format!("portfolio.base_lapse must lie in [0, 1] (got {})", self.base_lapse));
        }
        if !(self.dynamic_lapse_slope >= 0.0) || !self.dynamic_lapse_slope.is_finite() {
            errors.push(format!(
                "portfolio.dynamic_lapse_slope must be >= 0 (got {})",
                self.dynamic_lapse_slope
            ));
        }
        if self.liability_horizon_h < 1 {
            errors.push("portfolio.liability_horizon_h must be >= 1".to_string());
        }
        if self.bond_ladder_years < 1 {
            errors.push("portfolio.bond_ladder_years must be >= 1".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Total initial reserves of the book, currency.
    pub fn total_reserve(&self) -> f64 {
        self.model_points.iter().map(|m| m.reserve).sum()
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Projection output
// ─────────────────────────────────────────────────────────────────────────────

/// Result of projecting the book along one economic path up to start + H.
/// All sequences are date-indexed 0..=start+H; period quantities live at the
/// period's end date (profits[u] is R_u, earned over (u−1, u]; index 0 is 0).
#[derive(Debug, Clone, PartialEq)]
pub struct AlmOutput {
    /// Shareholder profit R_u per period, currency.
    pub profits: Vec<f64>,
    /// δ_u copied verbatim from the driving path (never recomputed).
    pub discount_factors: Vec<f64>,
    /// Total reserves V_u at each date, currency.
    pub reserves: Vec<f64>,
    /// Blended asset return per period (asset_returns[u] covers (u−1, u]).
    pub asset_returns: Vec<f64>,
    /// First date at which reserves reached zero (full lapse-out), if any;
    /// all subsequent flows are zero.
    pub exhausted_at: Option<usize>,
}

impl AlmOutput {
    /// Last projected date, start + H.
    pub fn end(&self) -> usize {
        self.profits.len() - 1
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Crediting and lapse rules
// ─────────────────────────────────────────────────────────────────────────────

/// Credited rate for one model point: the shared asset return floored at the
/// guarantee.
fn credited_rate(guaranteed: f64, sharing: f64, asset_return: f64) -> f64 {
    guaranteed.max(sharing * asset_return)
}

/// Lapse rate for one period: base plus the dynamic response to crediting
/// below target, clamped to [0, 1]; `mass` adds a one-off fraction (node
/// shock), still capped at full surrender.
fn lapse_rate(base: f64, slope: f64, target: f64, credited: f64, mass: Option<f64>) -> f64 {
    let dynamic = (base + slope * (target - credited).max(0.0)).clamp(0.0, 1.0);
    match mass {
        Some(m) => (dynamic + m).min(1.0),
        None => dynamic,
    }
}

/// Blended asset return over (u−1, u] under per-period rebalancing to the
/// configured weights. Class returns whose weight is zero are skipped, so
/// e.g. a cash-only book never reads the curve.
fn blended_return(config: &PortfolioConfig, path: &EconomicPath, u: usize) -> f64 {
    let w = &config.asset_allocation;
    let mut r = 0.0;
    if w.stock != 0.0 {
        r += w.stock * (path.stock[u] / path.stock[u - 1] - 1.0);
    }
    if w.real_estate != 0.0 {
        r += w.real_estate * (path.real_estate[u] / path.real_estate[u - 1] - 1.0);
    }
    if w.bonds != 0.0 {
        // Rolling ladder: the maturity-τ bond bought at u−1 has aged to τ−1.
        let l = config.bond_ladder_years;
        let mut acc = 0.0;
        for tau in 1..=l {
            acc += path.zc_price(u, tau - 1) / path.zc_price(u - 1, tau);
        }
        r += w.bonds * (acc / l as f64 - 1.0);
    }
    if w.cash != 0.0 {
        r += w.cash * path.mm_rate[u - 1].exp_m1();
    }
    r
}

// ─────────────────────────────────────────────────────────────────────────────
// Projection
// ─────────────────────────────────────────────────────────────────────────────

/// Projects the book along `path` through date start + H, where `start` is
/// the valuation node date. The whole path is projected from date 0 so that
/// realized periods (u ≤ start) and projected periods (u > start) come from
/// one recursion; `mass_lapse` — the node's one-off surrender fraction, if a
/// mass-lapse shock applies — hits the first period after the node.
///
/// Per period u: assets are rebalanced to the configured weights and earn the
/// blended return; each model point is credited max(guarantee, sharing ×
/// return); the target rate policyholders compare against is the effective
/// money-market return; lapses follow the dynamic rule; the shareholder books
/// R_u = V_{u−1}·(fee + return − credited) summed over model points; reserves
/// roll forward V_u = V_{u−1}·(1 + credited)·(1 − lapse).
pub fn project(
    config: &PortfolioConfig,
    path: &EconomicPath,
    start: usize,
    mass_lapse: Option<f64>,
) -> Result<AlmOutput> {
    let horizon = start + config.liability_horizon_h;
    if path.end() < horizon {
        return Err(Error::PathTooShort { needed: horizon, available: path.end() });
    }
    if config.asset_allocation.bonds != 0.0 && path.curve_len() < config.bond_ladder_years {
        return Err(Error::config(format!(
            "bond ladder needs {} curve maturities but the path carries {}",
            config.bond_ladder_years,
            path.curve_len()
        )));
    }
    let mut point_reserves: Vec<f64> = config.model_points.iter().map(|m| m.reserve).collect();
    let mut out = AlmOutput {
        profits: vec![0.0; horizon + 1],
        discount_factors: path.discount[..=horizon].to_vec(),
        reserves: Vec::with_capacity(horizon + 1),
        asset_returns: vec![0.0; horizon + 1],
        exhausted_at: None,
    };
    out.reserves.push(point_reserves.iter().sum());
    for u in 1..=horizon {
        let asset_return = blended_return(config, path, u);
        out.asset_returns[u] = asset_return;
        let target = path.mm_rate[u - 1].exp_m1();
        let mass = if u == start + 1 { mass_lapse } else { None };
        let mut profit = 0.0;
        let mut total = 0.0;
        for (point, reserve) in config.model_points.iter().zip(point_reserves.iter_mut()) {
            let credited =
                credited_rate(point.guaranteed_rate, config.profit_sharing_rate, asset_return);
            let lapse =
                lapse_rate(config.base_lapse, config.dynamic_lapse_slope, target, credited, mass);
            profit += *reserve * (config.margin_fee + asset_return - credited);
            *reserve *= (1.0 + credited) * (1.0 - lapse);
            total += *reserve;
        }
        out.profits[u] = profit;
        out.reserves.push(total);
        if total <= 0.0 && out.exhausted_at.is_none() {
            out.exhausted_at = Some(u);
        }
    }
    Ok(out)
}

/// Net present value of margins at date t: every booked profit valued in
/// date-t money, NPV_t = Σ_{u=1}^{end} (δ_u/δ_t)·R_u. Realized periods
/// (u ≤ t) enter capitalized, future periods discounted.
pub fn compute_npv(output: &AlmOutput, t: usize) -> Result<f64> {
    let end = output.end();
    if t > end {
        return Err(Error::Shape(format!(
            "npv date {t} beyond projected horizon {end}"
        )));
    }
    let dt = output.discount_factors[t];
    let mut acc = 0.0;
    for u in 1..=end {
        acc += output.discount_factors[u] / dt * output.profits[u];
    }
    Ok(acc)
}

// ─────────────────────────────────────────────────────────────────────────────
// Tests
// ─────────────────────────────────────────────────────────────────────────────
