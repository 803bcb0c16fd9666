//! Economic scenario generation.
//!
//! A two-risk market model drives everything: one equity innovation shared by
//! the stock and real-estate indices, and one rate innovation driving a
//! one-factor Gaussian mean-reverting short rate. The model is discrete with
//! a one-year step, and discounting is the rolling one-period bank account:
//! the one-period discount between u and u+1 is exp(−r_u).
//!
//! Zero-coupon prices are affine in the short rate, P(u, u+m) =
//! exp(a_m − b_m·r_u), with coefficients built by the exact discrete
//! recursion (see [`zc_coefficients`]). Because the curve is defined as the
//! discrete risk-neutral expectation of the rolling bank account, discounted
//! stock *and* bond prices are exact martingales under the pricing measure —
//! the martingale checks in the test suite are identities up to Monte-Carlo
//! error, not model approximations.
//!
//! Real-world dynamics differ from pricing dynamics in two places only: the
//! equity/property indices grow at configured drifts instead of the bank
//! rate, and the short rate carries a constant risk premium (an additive
//! drift, equivalently a shifted long-run mean). Curves and discount factors
//! always use the risk-neutral parameters.
//!
//! Shocks are instantaneous at a node date t⁺ and never touch the history up
//! to t: equity shocks scale both index levels before secondary diffusion;
//! rate shocks add a constant yield spread carried for the remainder of the
//! shocked projection (floored at evaluation if a floor is configured); mass
//! lapse only flags the liability model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamKey, StreamPurpose};

// ─────────────────────────────────────────────────────────────────────────────
// Risks and shocks
// ─────────────────────────────────────────────────────────────────────────────

/// The two elementary risks carried by the factor panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Risk {
    Stock,
    Rates,
}

impl Risk {
    pub const ALL: [Risk; 2] = [Risk::Stock, Risk::Rates];

    pub fn index(self) -> usize {
        match self {
            Risk::Stock => 0,
            Risk::Rates => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Risk::Stock => "stock",
            Risk::Rates => "rates",
        }
    }
}

/// Identity of an instantaneous node shock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockId {
    EquityDown,
    RatesUp,
    RatesDown,
    MassLapse,
}

impl ShockId {
    pub fn as_str(self) -> &'static str {
        match self {
            ShockId::EquityDown => "equity_down",
            ShockId::RatesUp => "rates_up",
            ShockId::RatesDown => "rates_down",
            ShockId::MassLapse => "mass_lapse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "equity_down" => Ok(ShockId::EquityDown),
            "rates_up" => Ok(ShockId::RatesUp),
            "rates_down" => Ok(ShockId::RatesDown),
            "mass_lapse" => Ok(ShockId::MassLapse),
            other => Err(Error::MissingShock(other.to_string())),
        }
    }
}

impl std::fmt::Display for ShockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An instantaneous shock applied at a node date t⁺. The magnitude is
/// multiplicative for equity (e.g. −0.39), an additive yield shift for rates
/// (e.g. ±0.01), and an extra lapse fraction for mass lapse (e.g. 0.30).
/// The shock modifies the node state only, never the history up to t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub id: ShockId,
    pub magnitude: f64,
}

impl ShockSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        match self.id {
            ShockId::EquityDown => {
                if self.magnitude <= -1.0 {
                    errors.push(format!(
                        "equity_down magnitude must be > -1 (got {})",
                        self.magnitude
                    ));
                }
            }
            ShockId::MassLapse => {
                if !(0.0..=1.0).contains(&self.magnitude) {
                    errors.push(format!(
                        "mass_lapse magnitude must lie in [0, 1] (got {})",
                        self.magnitude
                    ));
                }
            }
            ShockId::RatesUp | ShockId::RatesDown => {}
        }
        if !self.magnitude.is_finite() {
            errors.push(format!("shock magnitude must be finite (got {})", self.magnitude));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Configuration
// ─────────────────────────────────────────────────────────────────────────────

/// Market-model parameters. The time step is fixed at one year. None of these
/// values are market-calibrated; the defaults are a plausible synthetic
/// parameter set for desk-scale experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsgConfig {
    /// Real-world log-drift of the stock index, per year.
    pub stock_drift_rw: f64,
    /// Stock log-volatility, per sqrt(year).
    pub stock_vol: f64,
    /// Real-world log-drift of the real-estate index, per year.
    pub real_estate_drift_rw: f64,
    /// Real-estate log-volatility, per sqrt(year). The index loads on the
    /// equity innovation; there is no third elementary risk factor.
    pub real_estate_vol: f64,
    /// Short rate at date 0, per year.
    pub short_rate_initial: f64,
    /// Mean-reversion speed of the short rate, per year. Must be > 0.
    pub rate_mean_reversion: f64,
    /// Risk-neutral long-run mean of the short rate, per year.
    pub rate_long_term_mean: f64,
    /// Short-rate volatility, per sqrt(year).
    pub rate_vol: f64,
    /// Constant additive real-world drift adjustment of the short rate, per
    /// year. Pricing (curves, discounting) never sees it.
    pub rate_risk_premium: f64,
    /// Correlation between the equity and rate innovations, in [-1, 1].
    pub stock_rate_correlation: f64,
    /// Floor applied to shocked yields and shocked money-market rates, as a
    /// rate per year. `None` disables flooring. Central (unshocked) curves are
    /// never floored; the floor is part of the shock transformation, so a
    /// zero-magnitude rate shock applies no transformation at all.
    pub shock_rate_floor: Option<f64>,
}

impl Default for EsgConfig {
    fn default() -> Self {
        EsgConfig {
            stock_drift_rw: 0.06,        // equity risk premium over ~2.5% rates
            stock_vol: 0.16,             // broad-index order of magnitude
            real_estate_drift_rw: 0.045, // between rates and equity
            real_estate_vol: 0.10,       // smoother than equity
            short_rate_initial: 0.025,
            rate_mean_reversion: 0.25,   // ~4-year half-life of deviations
            rate_long_term_mean: 0.035,
            rate_vol: 0.008,             // ~80bp/yr innovations
            rate_risk_premium: 0.003,    // mild upward real-world drift
            stock_rate_correlation: 0.25,
            shock_rate_floor: Some(0.0),
        }
    }
}

impl EsgConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        for (name, v) in [
            ("stock_vol", self.stock_vol),
            ("real_estate_vol", self.real_estate_vol),
            ("rate_vol", self.rate_vol),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                errors.push(format!("esg.{name} must be a finite value >= 0 (got {v})"));
            }
        }
        if !(self.rate_mean_reversion > 0.0) || !self.rate_mean_reversion.is_finite() {
            errors.push(format!(
                "esg.rate_mean_reversion must be > 0 (got {})",
                self.rate_mean_reversion
            ));
        }
        if !(self.stock_rate_correlation.abs() <= 1.0) {
            errors.push(format!(
                "esg.stock_rate_correlation must lie in [-1, 1] (got {})",
                self.stock_rate_correlation
            ));
        }
        for (name, v) in [
            ("stock_drift_rw", self.stock_drift_rw),
            ("real_estate_drift_rw", self.real_estate_drift_rw),
            ("short_rate_initial", self.short_rate_initial),
            ("rate_long_term_mean", self.rate_long_term_mean),
            ("rate_risk_premium", self.rate_risk_premium),
        ] {
            if !v.is_finite() {
                errors.push(format!("esg.{name} must be finite (got {v})"));
            }
        }
        if let Some(floor) = self.shock_rate_floor {
            if !floor.is_finite() {
                errors.push(format!("esg.shock_rate_floor must be finite (got {floor})"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// One-step conditional variance of the exact mean-reverting transition.
    fn rate_step_variance(&self) -> f64 {
        let k = self.rate_mean_reversion;
        self.rate_vol * self.rate_vol * (1.0 - (-2.0 * k).exp()) / (2.0 * k)
    }

    /// Exact one-year transition of the short rate. `premium` is the additive
    /// real-world drift (0 under the pricing measure), folded into the
    /// long-run mean as θ + λ/κ.
    fn rate_step(&self, r: f64, eps: f64, premium: f64) -> f64 {
        let k = self.rate_mean_reversion;
        let e = (-k).exp();
        let target = self.rate_long_term_mean + premium / k;
        target + (r - target) * e + self.rate_step_variance().sqrt() * eps
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Zero-coupon curve
// ─────────────────────────────────────────────────────────────────────────────

/// Affine coefficients of the discrete-model zero-coupon curve:
/// P(maturity m | short rate r) = exp(a[m-1] − b[m-1]·r).
#[derive(Debug, Clone, PartialEq)]
pub struct ZcCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Builds the curve coefficients for maturities 1..=max_maturity by the exact
/// discrete recursion. With the one-period discount defined as exp(−r) and
/// the risk-neutral transition r' | r ~ N(r·e^{−κ} + θ(1−e^{−κ}), v), the
/// tower property P(m+1 | r) = exp(−r)·E[P(m | r')] gives
///   b_{m+1} = 1 + e^{−κ}·b_m,          b_1 = 1,
///   a_{m+1} = a_m − b_m·θ(1−e^{−κ}) + b_m²·v/2,   a_1 = 0.
/// Prices built this way make discounted bonds exact discrete martingales.
pub fn zc_coefficients(config: &EsgConfig, max_maturity: usize) -> ZcCoefficients {
    let k = config.rate_mean_reversion;
    let e = (-k).exp();
    let v = config.rate_step_variance();
    let theta = config.rate_long_term_mean;
    let mut a = Vec::with_capacity(max_maturity);
    let mut b = Vec::with_capacity(max_maturity);
    let (mut am, mut bm) = (0.0, 1.0);
    a.push(am);
    b.push(bm);
    for _ in 1..max_maturity {
        am = am - bm * theta * (1.0 - e) + bm * bm * v / 2.0;
        bm = 1.0 + e * bm;
        a.push(am);
        b.push(bm);
    }
    ZcCoefficients { a, b }
}

impl ZcCoefficients {
    /// Continuously-compounded yield for maturity m at short-rate state r,
    /// before any shock spread.
    pub fn yield_at(&self, m: usize, r: f64) -> f64 {
        (self.b[m - 1] * r - self.a[m - 1]) / m as f64
    }

    /// Fills `out[m-1]` with the zero-coupon price of maturity m for the
    /// world (r, spread). `spread == 0` is the central world: prices come
    /// straight from the affine form, unfloored. A non-zero spread shifts
    /// every yield additively and applies the configured floor.
    fn fill_prices(&self, r: f64, spread: f64, floor: Option<f64>, out: &mut [f64]) {
        if spread == 0.0 {
            for (m0, price) in out.iter_mut().enumerate() {
                *price = (self.a[m0] - self.b[m0] * r).exp();
            }
        } else {
            for (m0, price) in out.iter_mut().enumerate() {
                let m = (m0 + 1) as f64;
                let mut y = (self.b[m0] * r - self.a[m0]) / m + spread;
                if let Some(f) = floor {
                    y = y.max(f);
                }
                *price = (-m * y).exp();
            }
        }
    }
}

/// Observable money-market / short rate in the world (r, spread): the spread
/// shifts the rate and the floor applies, but only when a spread is present.
fn observe_rate(r: f64, spread: f64, floor: Option<f64>) -> f64 {
    if spread == 0.0 {
        r
    } else {
        match floor {
            Some(f) => (r + spread).max(f),
            None => r + spread,
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Panel and paths
// ─────────────────────────────────────────────────────────────────────────────

/// Elementary risk factors: the raw standard-normal innovations used to build
/// each primary scenario, indexed by (scenario n, period u ∈ 1..=T, risk).
/// These are exactly the regressors the proxy module consumes — the paths are
/// deterministic functions of them, so regression on the panel loses no
/// primary-scenario information.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskFactorPanel {
    scenarios: usize,
    periods: usize,
    data: Vec<f64>,
}

impl RiskFactorPanel {
    pub fn new(scenarios: usize, periods: usize) -> Self {
        RiskFactorPanel {
            scenarios,
            periods,
            data: vec![0.0; scenarios * periods * 2],
        }
    }

    /// Builds a panel from raw factor values, scenario-major with the
    /// per-scenario layout of [`RiskFactorPanel::row`]. Exists so synthetic
    /// factor designs (convergence experiments, regression tests) can flow
    /// through the same regression machinery as simulated ones.
    pub fn from_factors(scenarios: usize, periods: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != scenarios * periods * 2 {
            return Err(Error::Shape(format!(
                "panel data length {} does not match {scenarios} scenarios × {periods} periods × 2 risks",
                data.len()
            )));
        }
        Ok(RiskFactorPanel { scenarios, periods, data })
    }

    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Factor for scenario n (0-based), period u (1-based), risk.
    pub fn factor(&self, n: usize, u: usize, risk: Risk) -> f64 {
        debug_assert!(u >= 1 && u <= self.periods);
        self.data[(n * self.periods + (u - 1)) * 2 + risk.index()]
    }

    fn set(&mut self, n: usize, u: usize, risk: Risk, value: f64) {
        self.data[(n * self.periods + (u - 1)) * 2 + risk.index()] = value;
    }

    /// All 2·periods factors of scenario n, laid out (u=1 stock, u=1 rates,
    /// u=2 stock, ...).
    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.periods * 2..(n + 1) * self.periods * 2]
    }
}

/// One economic path. Indices are dates u = 0..=end; `mm_rate[u]` is the
/// continuously-compounded money-market rate for the period (u, u+1], and
/// `discount[u] = exp(−Σ_{v<u} mm_rate[v])` with `discount[0] = 1`.
///
/// Secondary paths produced at a node (n, t) span 0..=t+H: entries up to t
/// replicate the primary history (pre-shock), entries from t+1 on are the
/// (possibly shocked) risk-neutral continuation, and `mm_rate[t]` is the
/// post-shock money-market rate of the first projected period. The shock
/// jump therefore shows up in period-(t+1) asset returns, never in history.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomicPath {
    curve_len: usize,
    pub stock: Vec<f64>,
    pub real_estate: Vec<f64>,
    /// Observable short rate at each date (shock spread applied and floored
    /// in shocked worlds).
    pub short_rate: Vec<f64>,
    /// Zero-coupon prices, row-major: `zc[u*curve_len + (m-1)]` is P(u, u+m).
    zc: Vec<f64>,
    pub mm_rate: Vec<f64>,
    pub discount: Vec<f64>,
}

impl EconomicPath {
    fn with_capacity(end: usize, curve_len: usize) -> Self {
        EconomicPath {
            curve_len,
            stock: Vec::with_capacity(end + 1),
            real_estate: Vec::with_capacity(end + 1),
            short_rate: Vec::with_capacity(end + 1),
            zc: Vec::with_capacity((end + 1) * curve_len),
            mm_rate: Vec::with_capacity(end),
            discount: Vec::with_capacity(end + 1),
        }
    }

    /// Last date index carried by the path.
    pub fn end(&self) -> usize {
        self.stock.len() - 1
    }

    /// Number of curve maturities carried per date.
    pub fn curve_len(&self) -> usize {
        self.curve_len
    }

    /// Zero-coupon price P(u, u+maturity); maturity 0 is the matured bond.
    pub fn zc_price(&self, u: usize, maturity: usize) -> f64 {
        if maturity == 0 {
            return 1.0;
        }
        debug_assert!(maturity <= self.curve_len);
        self.zc[u * self.curve_len + (maturity - 1)]
    }

    /// The full curve at date u (maturities 1..=curve_len).
    pub fn zc_curve(&self, u: usize) -> &[f64] {
        &self.zc[u * self.curve_len..(u + 1) * self.curve_len]
    }

    fn push_date(&mut self, stock: f64, re: f64, rate: f64) {
        self.stock.push(stock);
        self.real_estate.push(re);
        self.short_rate.push(rate);
    }

    /// Copies history 0..=t (dates) and 0..t (periods) from `src`.
    fn splice_from(&mut self, src: &EconomicPath, t: usize) {
        self.stock.extend_from_slice(&src.stock[..=t]);
        self.real_estate.extend_from_slice(&src.real_estate[..=t]);
        self.short_rate.extend_from_slice(&src.short_rate[..=t]);
        self.zc.extend_from_slice(&src.zc[..(t + 1) * src.curve_len]);
        self.mm_rate.extend_from_slice(&src.mm_rate[..t]);
        self.discount.extend_from_slice(&src.discount[..=t]);
    }

    fn debug_check_invariants(&self) {
        debug_assert!(self.stock.iter().all(|&s| s > 0.0), "stock index must stay positive");
        debug_assert!(self.real_estate.iter().all(|&s| s > 0.0));
        debug_assert!(self.zc.iter().all(|&p| p > 0.0), "zc prices must stay positive");
        debug_assert!(self.discount.iter().all(|&d| d > 0.0));
        debug_assert_eq!(self.discount[0], 1.0);
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Node state and shocks
// ─────────────────────────────────────────────────────────────────────────────

/// Fully-specified (post-shock) state of a node at date t⁺, ready to seed
/// risk-neutral secondary diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub date: usize,
    /// Post-shock index levels.
    pub stock: f64,
    pub real_estate: f64,
    /// Diffusion state of the short-rate process (shock spread excluded).
    pub rate_state: f64,
    /// Additive yield spread of the shocked world (0 for central nodes);
    /// carried for the remainder of the projection.
    pub yield_spread: f64,
    /// Extra one-off lapse fraction if a mass-lapse shock applies.
    pub mass_lapse: Option<f64>,
    /// δ_t along the primary path.
    pub discount: f64,
}

impl NodeState {
    /// Observable short rate at the node (spread applied, floored).
    pub fn short_rate(&self, config: &EsgConfig) -> f64 {
        observe_rate(self.rate_state, self.yield_spread, config.shock_rate_floor)
    }

    /// The node's zero-coupon curve for maturities 1..=len (spread applied,
    /// floored).
    pub fn curve(&self, config: &EsgConfig, coefs: &ZcCoefficients, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        coefs.fill_prices(self.rate_state, self.yield_spread, config.shock_rate_floor, &mut out);
        out
    }
}

/// Applies an instantaneous shock at date t⁺ of a primary path, returning the
/// post-shock node state. `None` yields the central (unshocked) node state.
/// The input path is never modified; nothing indexed by u ≤ t changes.
pub fn apply_shock(
    primary: &EconomicPath,
    t: usize,
    shock: Option<&ShockSpec>,
) -> Result<NodeState> {
    if t > primary.end() {
        return Err(Error::PathTooShort { needed: t, available: primary.end() });
    }
    let mut node = NodeState {
        date: t,
        stock: primary.stock[t],
        real_estate: primary.real_estate[t],
        rate_state: primary.short_rate[t],
        yield_spread: 0.0,
        mass_lapse: None,
        discount: primary.discount[t],
    };
    if let Some(spec) = shock {
        spec.validate()?;
        match spec.id {
            ShockId::EquityDown => {
                node.stock *= 1.0 + spec.magnitude;
                node.real_estate *= 1.0 + spec.magnitude;
            }
            ShockId::RatesUp | ShockId::RatesDown => {
                node.yield_spread = spec.magnitude;
            }
            ShockId::MassLapse => {
                node.mass_lapse = Some(spec.magnitude);
            }
        }
    }
    Ok(node)
}

// ─────────────────────────────────────────────────────────────────────────────
// Primary generation
// ─────────────────────────────────────────────────────────────────────────────

/// Generates N real-world primary paths over [0, T] together with the factor
/// panel that built them. `curve_years` is the number of zero-coupon
/// maturities carried at each date (the liability projection needs at least
/// its bond-ladder length). Deterministic: same (config, seed) ⇒ bit-identical
/// output; scenario n draws only from its own sub-stream.
pub fn generate_primary(
    config: &EsgConfig,
    n_scenarios: usize,
    horizon_t: usize,
    curve_years: usize,
    seed: u64,
) -> Result<(RiskFactorPanel, Vec<EconomicPath>)> {
    config.validate()?;
    if n_scenarios < 1 || horizon_t < 1 {
        return Err(Error::config(format!(
            "generate_primary needs n_scenarios >= 1 and horizon_t >= 1 (got {n_scenarios}, {horizon_t})"
        )));
    }
    if curve_years < 1 {
        return Err(Error::config("curve_years must be >= 1"));
    }
    let coefs = zc_coefficients(config, curve_years);
    let mut panel = RiskFactorPanel::new(n_scenarios, horizon_t);
    let mut paths = Vec::with_capacity(n_scenarios);
    for n in 0..n_scenarios {
        let mut rng = stream(seed, StreamKey::primary(n));
        let mut path = EconomicPath::with_capacity(horizon_t, curve_years);
        let mut stock = 1.0;
        let mut re = 1.0;
        let mut rate = config.short_rate_initial;
        push_curve(&mut path, &coefs, rate, 0.0, None);
        path.push_date(stock, re, rate);
        path.discount.push(1.0);
        for u in 1..=horizon_t {
            let (eps_s, eps_r) = correlated_pair(&mut rng, config.stock_rate_correlation);
            panel.set(n, u, Risk::Stock, eps_s);
            panel.set(n, u, Risk::Rates, eps_r);
            // Bank account accrues at the period-start short rate.
            let mm = rate;
            path.mm_rate.push(mm);
            path.discount.push(path.discount[u - 1] * (-mm).exp());
            stock *= (config.stock_drift_rw - 0.5 * config.stock_vol * config.stock_vol
                + config.stock_vol * eps_s)
                .exp();
            re *= (config.real_estate_drift_rw
                - 0.5 * config.real_estate_vol * config.real_estate_vol
                + config.real_estate_vol * eps_s)
                .exp();
            rate = config.rate_step(rate, eps_r, config.rate_risk_premium);
            push_curve(&mut path, &coefs, rate, 0.0, None);
            path.push_date(stock, re, rate);
        }
        path.debug_check_invariants();
        paths.push(path);
    }
    Ok((panel, paths))
}

/// Draws the correlated innovation pair: the equity factor is z1, the rate
/// factor is ρ·z1 + sqrt(1−ρ²)·z2. Both marginals are standard normal; these
/// are exactly the panel entries.
fn correlated_pair(rng: &mut ChaCha8Rng, rho: f64) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
}

fn push_curve(
    path: &mut EconomicPath,
    coefs: &ZcCoefficients,
    rate: f64,
    spread: f64,
    floor: Option<f64>,
) {
    let len = path.curve_len;
    let start = path.zc.len();
    path.zc.resize(start + len, 0.0);
    coefs.fill_prices(rate, spread, floor, &mut path.zc[start..]);
}

// ─────────────────────────────────────────────────────────────────────────────
// Secondary generation
// ─────────────────────────────────────────────────────────────────────────────

/// Stream addressing for a node's secondary table. `shock_slot` is the
/// 1-based index of the shock in the run's shock set, or [`crate::rng::CENTRAL_STREAM`]
/// for central valuations — and also for shocked valuations under common
/// random numbers, which reuse the central innovations by construction.
#[derive(Debug, Clone, Copy)]
pub struct SecondaryKey {
    pub purpose: StreamPurpose,
    pub scenario: usize,
    pub shock_slot: u8,
}

/// Generates P risk-neutral secondary paths conditional on the (possibly
/// shocked) node at date t of `primary`, over the horizon [t, t+H].
///
/// Returned paths span 0..=t+H: entries up to t replicate the primary history
/// so the liability projection sees realized and projected periods in one
/// object; δ stays absolute (δ_0 = 1). The paths are i.i.d. conditional on the
/// node: secondary p draws only from stream (purpose, n, t, shock_slot, p).
pub fn generate_secondary(
    config: &EsgConfig,
    primary: &EconomicPath,
    t: usize,
    shock: Option<&ShockSpec>,
    n_secondaries: usize,
    horizon_h: usize,
    seed: u64,
    key: SecondaryKey,
) -> Result<Vec<EconomicPath>> {
    if horizon_h == 0 {
        return Err(Error::config("secondary horizon H must be >= 1"));
    }
    if n_secondaries == 0 {
        return Err(Error::config("secondary count P must be >= 1"));
    }
    let node = apply_shock(primary, t, shock)?;
    let coefs = zc_coefficients(config, primary.curve_len());
    let floor = config.shock_rate_floor;
    let end = t + horizon_h;
    let mut out = Vec::with_capacity(n_secondaries);
    for p in 0..n_secondaries {
        let mut rng = stream(
            seed,
            StreamKey {
                purpose: key.purpose,
                scenario: key.scenario as u32,
                date: t as u16,
                shock: key.shock_slot,
                secondary: p as u32,
            },
        );
        let mut path = EconomicPath::with_capacity(end, primary.curve_len());
        path.splice_from(primary, t);
        let mut stock = node.stock;
        let mut re = node.real_estate;
        let mut rate = node.rate_state;
        let spread = node.yield_spread;
        for u in t + 1..=end {
            // Money-market rate for (u−1, u] observed at the period start —
            // post-shock at the node date itself.
            let mm = observe_rate(rate, spread, floor);
            path.mm_rate.push(mm);
            path.discount.push(path.discount[u - 1] * (-mm).exp());
            let (eps_s, eps_r) = correlated_pair(&mut rng, config.stock_rate_correlation);
            // Risk-neutral drifts: every asset grows at the bank rate.
            stock *= (mm - 0.5 * config.stock_vol * config.stock_vol + config.stock_vol * eps_s)
                .exp();
            re *= (mm - 0.5 * config.real_estate_vol * config.real_estate_vol
                + config.real_estate_vol * eps_s)
                .exp();
            rate = config.rate_step(rate, eps_r, 0.0);
            push_curve(&mut path, &coefs, rate, spread, floor);
            path.push_date(stock, re, observe_rate(rate, spread, floor));
        }
        path.debug_check_invariants();
        out.push(path);
    }
    Ok(out)
}

// ─────────────────────────────────────────────────────────────────────────────
// Tests
// ─────────────────────────────────────────────────────────────────────────────
