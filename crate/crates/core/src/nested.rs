//! Multi-year nested simulations.
//!
//! For every primary scenario n and date t, the engine conditions a table of
//! P risk-neutral secondary paths on the node (shocked or central), projects
//! the liability book along each, and averages the date-t net present values:
//!
//!   NAV-hat_t^n = (1/P) Σ_p NPV_t^{n,p}
//!               = Σ_{u≤t} (δ_u/δ_t) R_u  +  (1/P) Σ_p Σ_{u>t} (δ_u/δ_t) R_u^p,
//!
//! the capitalized realized margins plus the secondary-average of discounted
//! future margins — the two forms are identical because realized periods are
//! common to all P secondaries of a node.
//!
//! The output is the joint sample-path array of central and shocked NAV
//! estimates that downstream capital aggregation turns into SCR and solvency
//! ratios, together with per-node NPV variances (the raw material of the
//! estimator-variance decompositions) and the primary panel the proxy
//! methods regress on.
//!
//! Reproducibility: every secondary table draws from its own counter-derived
//! stream keyed by (purpose, scenario, date, shock slot, secondary index), so
//! results are bit-identical for a given seed regardless of worker count or
//! evaluation order. In common-random-numbers mode (default) shocked tables
//! reuse the central innovations — stand-alone capitals are differences of
//! close quantities, and sharing the noise removes most of their Monte-Carlo
//! variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alm::{compute_npv, project, PortfolioConfig};
use crate::error::{Error, Result};
use crate::esg::{
    apply_shock, generate_primary, generate_secondary, EconomicPath, EsgConfig, RiskFactorPanel,
    SecondaryKey, ShockId, ShockSpec,
};
use crate::rng::{StreamPurpose, CENTRAL_STREAM};
use crate::stats;

// ─────────────────────────────────────────────────────────────────────────────
// Configuration
// ─────────────────────────────────────────────────────────────────────────────

/// Shape of the nested-simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NestedConfig {
    /// Number of real-world primary scenarios N.
    pub n_primary: usize,
    /// Number of risk-neutral secondary scenarios P per node.
    pub n_secondary: usize,
    /// Last node date T; nodes are valued at t = 1..=T.
    pub horizon_t: usize,
    /// Liability extinction horizon H. Must equal the portfolio's own
    /// `liability_horizon_h`; the duplication is deliberate so that run
    /// shapes are auditable from this struct alone.
    pub liability_horizon_h: usize,
    /// Instantaneous shocks valued at every node, in a fixed order that
    /// downstream aggregation and exports rely on.
    pub shock_set: Vec<ShockSpec>,
    /// Root seed; all streams in the run derive from it.
    pub seed: u64,
    /// Shocked secondary tables reuse the central innovations (variance
    /// reduction for NAV − NAV_shocked). Off means fresh independent tables.
    pub common_random_numbers: bool,
    /// Keep every central node's P single-secondary NPVs in the run output.
    /// The within/between variance decomposition needs them; plain proxy and
    /// solvency work does not, so the default stays lean.
    pub retain_npvs: bool,
}

impl Default for NestedConfig {
    fn default() -> Self {
        NestedConfig {
            n_primary: 500,
            n_secondary: 100,
            horizon_t: 3,
            liability_horizon_h: 20,
            shock_set: vec![
                ShockSpec { id: ShockId::EquityDown, magnitude: -0.39 },
                ShockSpec { id: ShockId::RatesUp, magnitude: 0.01 },
                ShockSpec { id: ShockId::RatesDown, magnitude: -0.01 },
                ShockSpec { id: ShockId::MassLapse, magnitude: 0.30 },
            ],
            seed: 20_240_001,
            common_random_numbers: true,
            retain_npvs: false,
        }
    }
}

impl NestedConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.n_primary < 1 {
            errors.push("nested.n_primary must be >= 1".to_string());
        }
        if self.n_secondary < 1 {
            errors.push("nested.n_secondary must be >= 1".to_string());
        }
        if self.horizon_t < 1 {
            errors.push("nested.horizon_t must be >= 1".to_string());
        }
        if self.liability_horizon_h < 1 {
            errors.push("nested.liability_horizon_h must be >= 1".to_string());
        }
        let mut seen = Vec::new();
        for spec in &self.shock_set {
            if let Err(Error::Config(mut v)) = spec.validate() {
                errors.append(&mut v);
            }
            if seen.contains(&spec.id) {
                errors.push(format!("nested.shock_set lists {} more than once", spec.id));
            }
            seen.push(spec.id);
        }
        if self.shock_set.len() > u8::MAX as usize - 1 {
            errors.push("nested.shock_set holds more shocks than the stream keying supports".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Output containers
// ─────────────────────────────────────────────────────────────────────────────

/// Joint sample paths of NAV estimates and (once capital aggregation has run)
/// SCR and solvency ratios, indexed by scenario n ∈ 0..N and date t ∈ 1..=T.
/// Shocked estimates carry a third axis in `shock_ids` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavScrPaths {
    n_primary: usize,
    horizon_t: usize,
    shock_ids: Vec<ShockId>,
    nav_hat: Vec<f64>,
    nav_hat_shocked: Vec<f64>,
    scr: Vec<f64>,
    solvency_ratio: Vec<f64>,
    scr_filled: bool,
}

impl NavScrPaths {
    pub fn new(n_primary: usize, horizon_t: usize, shock_ids: Vec<ShockId>) -> Self {
        let nodes = n_primary * horizon_t;
        NavScrPaths {
            n_primary,
            horizon_t,
            nav_hat: vec![f64::NAN; nodes],
            nav_hat_shocked: vec![f64::NAN; nodes * shock_ids.len()],
            scr: vec![f64::NAN; nodes],
            solvency_ratio: vec![f64::NAN; nodes],
            shock_ids,
            scr_filled: false,
        }
    }

    pub fn n_primary(&self) -> usize {
        self.n_primary
    }

    pub fn horizon_t(&self) -> usize {
        self.horizon_t
    }

    pub fn shock_ids(&self) -> &[ShockId] {
        &self.shock_ids
    }

    /// Position of a shock in the third axis.
    pub fn shock_index(&self, id: ShockId) -> Result<usize> {
        self.shock_ids
            .iter()
            .position(|&s| s == id)
            .ok_or_else(|| Error::MissingShock(id.as_str().to_string()))
    }

    fn node(&self, n: usize, t: usize) -> usize {
        debug_assert!(n < self.n_primary && t >= 1 && t <= self.horizon_t);
        n * self.horizon_t + (t - 1)
    }

    /// Central NAV estimate at node (n, t); t is 1-based.
    pub fn nav(&self, n: usize, t: usize) -> f64 {
        self.nav_hat[self.node(n, t)]
    }

    /// Shocked NAV estimate at node (n, t) for the shock at `shock_idx`.
    pub fn nav_shocked(&self, n: usize, t: usize, shock_idx: usize) -> f64 {
        self.nav_hat_shocked[self.node(n, t) * self.shock_ids.len() + shock_idx]
    }

    pub fn set_nav(&mut self, n: usize, t: usize, value: f64) {
        let i = self.node(n, t);
        self.nav_hat[i] = value;
    }

    pub fn set_nav_shocked(&mut self, n: usize, t: usize, shock_idx: usize, value: f64) {
        let i = self.node(n, t) * self.shock_ids.len() + shock_idx;
        self.nav_hat_shocked[i] = value;
    }

    /// True once capital aggregation has filled scr and solvency_ratio.
    pub fn scr_filled(&self) -> bool {
        self.scr_filled
    }

    pub fn scr(&self, n: usize, t: usize) -> f64 {
        debug_assert!(self.scr_filled, "scr read before aggregation");
        self.scr[self.node(n, t)]
    }

    /// nav/scr; +∞ where scr is zero (flagged trivially solvent).
    pub fn solvency_ratio(&self, n: usize, t: usize) -> f64 {
        debug_assert!(self.scr_filled, "solvency ratio read before aggregation");
        self.solvency_ratio[self.node(n, t)]
    }

    pub fn set_scr(&mut self, n: usize, t: usize, scr: f64, ratio: f64) {
        let i = self.node(n, t);
        self.scr[i] = scr;
        self.solvency_ratio[i] = ratio;
    }

    pub fn mark_scr_filled(&mut self) {
        self.scr_filled = true;
    }
}

/// One node valuation: the NAV estimate plus the secondary-level detail the
/// variance decompositions and single-secondary calibrations need.
#[derive(Debug, Clone)]
pub struct NavEstimate {
    /// (1/P) Σ_p NPV_t^{n,p}, currency in date-t money.
    pub nav: f64,
    /// Sample variance (denominator P−1) of the P single-secondary NPVs;
    /// 0 when P = 1.
    pub npv_variance: f64,
    /// The P single-secondary NPVs themselves.
    pub npvs: Vec<f64>,
}

/// Everything a nested run produces: the joint NAV paths (SCR slots empty),
/// per-node NPV variances, the root-node valuation, and the primary-world
/// objects downstream regressions need.
#[derive(Debug, Clone)]
pub struct NestedRun {
    pub paths: NavScrPaths,
    /// Within-node NPV sample variance at each central node, laid out like
    /// the nav array ((n, t), t 1-based).
    pub npv_within_var: Vec<f64>,
    /// Central NAV estimate at the root node (t = 0), same P.
    pub nav0: f64,
    /// Sample variance of the root node's single-secondary NPVs.
    pub nav0_npv_variance: f64,
    /// The elementary risk factors that built the primaries (the proxy
    /// regressors).
    pub panel: RiskFactorPanel,
    /// The primary paths, retained for conditioning calibration secondaries.
    pub primaries: Vec<EconomicPath>,
    /// Central-node single-secondary NPVs, present only when the run was
    /// configured with `retain_npvs`; laid out like the nav array.
    pub retained_npvs: Option<Vec<Vec<f64>>>,
}

impl NestedRun {
    /// Within-node NPV variance at node (n, t); t is 1-based.
    pub fn npv_variance(&self, n: usize, t: usize) -> f64 {
        self.npv_within_var[n * self.paths.horizon_t() + (t - 1)]
    }

    /// The retained single-secondary NPVs at central node (n, t), if the run
    /// kept them.
    pub fn retained_node_npvs(&self, n: usize, t: usize) -> Option<&[f64]> {
        self.retained_npvs
            .as_ref()
            .map(|all| all[n * self.paths.horizon_t() + (t - 1)].as_slice())
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Node valuation
// ─────────────────────────────────────────────────────────────────────────────

/// Values one node (scenario `scenario`, date t, optional shock) by P
/// conditional secondaries. `shock_slot` keys the innovation stream: pass
/// [`CENTRAL_STREAM`] for central valuations and for shocked valuations that
/// should reuse the central innovations (common random numbers); pass the
/// shock's 1-based position for independent tables.
#[allow(clippy::too_many_arguments)]
pub fn estimate_nav(
    esg: &EsgConfig,
    portfolio: &PortfolioConfig,
    primary: &EconomicPath,
    scenario: usize,
    t: usize,
    shock: Option<&ShockSpec>,
    shock_slot: u8,
    p: usize,
    seed: u64,
    purpose: StreamPurpose,
) -> Result<NavEstimate> {
    if p < 1 {
        return Err(Error::config("estimate_nav needs at least one secondary (P >= 1)"));
    }
    let node = apply_shock(primary, t, shock)?;
    let secondaries = generate_secondary(
        esg,
        primary,
        t,
        shock,
        p,
        portfolio.liability_horizon_h,
        seed,
        SecondaryKey { purpose, scenario, shock_slot },
    )?;
    let mut npvs = Vec::with_capacity(p);
    for path in &secondaries {
        let output = project(portfolio, path, t, node.mass_lapse)?;
        npvs.push(compute_npv(&output, t)?);
    }
    let nav = stats::mean(&npvs);
    let npv_variance = if p > 1 { stats::sample_variance(&npvs) } else { 0.0 };
    Ok(NavEstimate { nav, npv_variance, npvs })
}

// ─────────────────────────────────────────────────────────────────────────────
// Full run
// ─────────────────────────────────────────────────────────────────────────────

/// Per-scenario valuation results, collected in scenario order so the final
/// arrays are identical regardless of the rayon worker count.
struct ScenarioRow {
    nav: Vec<f64>,
    npv_var: Vec<f64>,
    shocked: Vec<f64>,
    retained: Vec<Vec<f64>>,
}

/// Runs the full nested grid: every node (n ∈ 0..N, t ∈ 1..=T) valued
/// centrally and under every shock in the set, plus the root node (t = 0).
/// Returns NAV-filled paths with SCR slots empty — capital aggregation is a
/// separate pass.
pub fn run_nested(
    config: &NestedConfig,
    esg: &EsgConfig,
    portfolio: &PortfolioConfig,
) -> Result<NestedRun> {
    config.validate()?;
    esg.validate()?;
    portfolio.validate()?;
    if config.liability_horizon_h != portfolio.liability_horizon_h {
        return Err(Error::config(format!(
            "nested.liability_horizon_h ({}) and portfolio.liability_horizon_h ({}) must agree",
            config.liability_horizon_h, portfolio.liability_horizon_h
        )));
    }
    let curve_years = portfolio.bond_ladder_years;
    let (panel, primaries) =
        generate_primary(esg, config.n_primary, config.horizon_t, curve_years, config.seed)?;

    let shock_count = config.shock_set.len();
    let rows: Vec<ScenarioRow> = (0..config.n_primary)
        .into_par_iter()
        .map(|n| -> Result<ScenarioRow> {
            let primary = &primaries[n];
            let mut row = ScenarioRow {
                nav: Vec::with_capacity(config.horizon_t),
                npv_var: Vec::with_capacity(config.horizon_t),
                shocked: Vec::with_capacity(config.horizon_t * shock_count),
                retained: Vec::new(),
            };
            for t in 1..=config.horizon_t {
                let central = estimate_nav(
                    esg,
                    portfolio,
                    primary,
                    n,
                    t,
                    None,
                    CENTRAL_STREAM,
                    config.n_secondary,
                    config.seed,
                    StreamPurpose::NestedSecondary,
                )
                .map_err(|e| e.with_context(format!("node (n={n}, t={t}), central")))?;
                row.nav.push(central.nav);
                row.npv_var.push(central.npv_variance);
                if config.retain_npvs {
                    row.retained.push(central.npvs);
                }
                for (s, shock) in config.shock_set.iter().enumerate() {
                    let slot = if config.common_random_numbers {
                        CENTRAL_STREAM
                    } else {
                        (s + 1) as u8
                    };
                    let shocked = estimate_nav(
                        esg,
                        portfolio,
                        primary,
                        n,
                        t,
                        Some(shock),
                        slot,
                        config.n_secondary,
                        config.seed,
                        StreamPurpose::NestedSecondary,
                    )
                    .map_err(|e| {
                        e.with_context(format!("node (n={n}, t={t}), shock {}", shock.id))
                    })?;
                    row.shocked.push(shocked.nav);
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let shock_ids: Vec<ShockId> = config.shock_set.iter().map(|s| s.id).collect();
    let mut paths = NavScrPaths::new(config.n_primary, config.horizon_t, shock_ids);
    let mut npv_within_var = Vec::with_capacity(config.n_primary * config.horizon_t);
    let mut retained_npvs =
        config.retain_npvs.then(|| Vec::with_capacity(config.n_primary * config.horizon_t));
    for (n, row) in rows.into_iter().enumerate() {
        for t in 1..=config.horizon_t {
            paths.set_nav(n, t, row.nav[t - 1]);
            for s in 0..shock_count {
                paths.set_nav_shocked(n, t, s, row.shocked[(t - 1) * shock_count + s]);
            }
        }
        npv_within_var.extend_from_slice(&row.npv_var);
        if let Some(store) = retained_npvs.as_mut() {
            store.extend(row.retained);
        }
    }

    // Root node: every primary shares the date-0 state, so scenario 0 stands
    // in for all of them.
    let root = estimate_nav(
        esg,
        portfolio,
        &primaries[0],
        0,
        0,
        None,
        CENTRAL_STREAM,
        config.n_secondary,
        config.seed,
        StreamPurpose::NestedSecondary,
    )
    .map_err(|e| e.with_context("root node (t=0)".to_string()))?;

    Ok(NestedRun {
        paths,
        npv_within_var,
        nav0: root.nav,
        nav0_npv_variance: root.npv_variance,
        panel,
        primaries,
        retained_npvs,
    })
}

// ─────────────────────────────────────────────────────────────────────────────
// Tests
// ─────────────────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alm::ModelPoint;

    fn small_portfolio(h: usize) -> PortfolioConfig {
        PortfolioConfig { liability_horizon_h: h, ..PortfolioConfig::default() }
    }

    #[test]
    fn degenerate_secondaries_make_p_irrelevant() {
        let esg = EsgConfig {
            stock_vol: 0.0,
            real_estate_vol: 0.0,
            rate_vol: 0.0,
            ..EsgConfig::default()
        };
        let portfolio = small_portfolio(5);
        let (_, primaries) = generate_primary(&esg, 1, 2, 10, 3).unwrap();
        let one = estimate_nav(
            &esg, &portfolio, &primaries[0], 0, 1, None, CENTRAL_STREAM, 1, 3,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        let hundred = estimate_nav(
            &esg, &portfolio, &primaries[0], 0, 1, None, CENTRAL_STREAM, 100, 3,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        assert!(
            (one.nav - hundred.nav).abs() <= 1e-12 * one.nav.abs(),
            "P=1 {} vs P=100 {}",
            one.nav,
            hundred.nav
        );
        assert!(hundred.npv_variance.abs() < 1e-20);
    }

    #[test]
    fn estimate_is_the_mean_of_single_secondary_npvs() {
        // Decomposition identity, and stream stability: the P=1 estimate is
        // exactly the first of the P=4 secondaries because secondary p draws
        // from its own stream no matter how many siblings it has.
        let esg = EsgConfig::default();
        let portfolio = small_portfolio(4);
        let (_, primaries) = generate_primary(&esg, 1, 2, 10, 17).unwrap();
        let est = estimate_nav(
            &esg, &portfolio, &primaries[0], 0, 2, None, CENTRAL_STREAM, 4, 17,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        assert_eq!(est.npvs.len(), 4);
        let mean = est.npvs.iter().sum::<f64>() / 4.0;
        assert!((est.nav - mean).abs() < 1e-14 * mean.abs().max(1.0));
        let single = estimate_nav(
            &esg, &portfolio, &primaries[0], 0, 2, None, CENTRAL_STREAM, 1, 17,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        assert_eq!(single.nav, est.npvs[0], "secondary 0 must be stream-stable in P");
    }

    #[test]
    fn root_estimate_is_the_plain_risk_neutral_valuation() {
        // At t = 0 there are no realized margins to capitalize: the estimate
        // is the average over secondaries of Σ_{u≥1} δ_u R_u with δ_0 = 1.
        let esg = EsgConfig::default();
        let portfolio = small_portfolio(3);
        let (_, primaries) = generate_primary(&esg, 1, 1, 10, 8).unwrap();
        let est = estimate_nav(
            &esg, &portfolio, &primaries[0], 0, 0, None, CENTRAL_STREAM, 5, 8,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        let secondaries = generate_secondary(
            &esg,
            &primaries[0],
            0,
            None,
            5,
            3,
            8,
            SecondaryKey {
                purpose: StreamPurpose::NestedSecondary,
                scenario: 0,
                shock_slot: CENTRAL_STREAM,
            },
        )
        .unwrap();
        let manual: f64 = secondaries
            .iter()
            .map(|path| {
                let out = project(&portfolio, path, 0, None).unwrap();
                (1..=out.end()).map(|u| out.discount_factors[u] * out.profits[u]).sum::<f64>()
            })
            .sum::<f64>()
            / 5.0;
        assert!((est.nav - manual).abs() < 1e-12 * manual.abs().max(1.0));
    }

    #[test]
    fn estimator_variance_scales_inversely_with_p() {
        // Across independent seeds at a fixed node, var(NAV-hat) = npv_var/P,
        // so the P=10 to P=160 variance ratio should sit near 16.
        let esg = EsgConfig::default();
        let portfolio = PortfolioConfig {
            liability_horizon_h: 5,
            ..PortfolioConfig::default()
        };
        let (_, primaries) = generate_primary(&esg, 1, 1, 10, 99).unwrap();
        let replications = 200;
        let mut small = Vec::with_capacity(replications);
        let mut large = Vec::with_capacity(replications);
        for rep in 0..replications {
            let seed = 1_000 + rep as u64;
            for (p, bucket) in [(10usize, &mut small), (160usize, &mut large)] {
                let est = estimate_nav(
                    &esg, &portfolio, &primaries[0], 0, 1, None, CENTRAL_STREAM, p, seed,
                    StreamPurpose::NestedSecondary,
                )
                .unwrap();
                bucket.push(est.nav);
            }
        }
        let ratio = stats::sample_variance(&small) / stats::sample_variance(&large);
        println!("variance ratio P=10 vs P=160: {ratio:.2} (theory: 16)");
        assert!(
            (8.0..=32.0).contains(&ratio),
            "variance ratio {ratio} outside [8, 32]"
        );
    }

    #[test]
    fn single_node_run_equals_its_one_path_npv() {
        let esg = EsgConfig::default();
        let portfolio = small_portfolio(3);
        let config = NestedConfig {
            n_primary: 1,
            n_secondary: 1,
            horizon_t: 1,
            liability_horizon_h: 3,
            shock_set: vec![],
            seed: 21,
            common_random_numbers: true,
            retain_npvs: false,
        };
        let run = run_nested(&config, &esg, &portfolio).unwrap();
        let est = estimate_nav(
            &esg, &portfolio, &run.primaries[0], 0, 1, None, CENTRAL_STREAM, 1, 21,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        assert_eq!(run.paths.nav(0, 1), est.nav);
        assert_eq!(run.npv_variance(0, 1), 0.0);
    }

    #[test]
    fn empty_shock_set_fills_central_only() {
        let esg = EsgConfig::default();
        let portfolio = small_portfolio(2);
        let config = NestedConfig {
            n_primary: 3,
            n_secondary: 2,
            horizon_t: 2,
            liability_horizon_h: 2,
            shock_set: vec![],
            seed: 5,
            common_random_numbers: true,
            retain_npvs: false,
        };
        let run = run_nested(&config, &esg, &portfolio).unwrap();
        assert!(run.paths.shock_ids().is_empty());
        for n in 0..3 {
            for t in 1..=2 {
                assert!(run.paths.nav(n, t).is_finite());
            }
        }
        assert!(run.nav0.is_finite());
    }

    #[test]
    fn zero_magnitude_shock_reproduces_central_bit_exactly_under_crn() {
        let esg = EsgConfig::default();
        let portfolio = small_portfolio(3);
        let config = NestedConfig {
            n_primary: 3,
            n_secondary: 5,
            horizon_t: 2,
            liability_horizon_h: 3,
            shock_set: vec![ShockSpec { id: ShockId::RatesUp, magnitude: 0.0 }],
            seed: 77,
            common_random_numbers: true,
            retain_npvs: false,
        };
        let run = run_nested(&config, &esg, &portfolio).unwrap();
        for n in 0..3 {
            for t in 1..=2 {
                assert_eq!(
                    run.paths.nav(n, t),
                    run.paths.nav_shocked(n, t, 0),
                    "zero shock must be a perfect no-op at (n={n}, t={t})"
                );
            }
        }
    }

    #[test]
    fn zero_magnitude_shock_matches_central_within_mc_error_without_crn() {
        // With independent tables the two estimates share the same target, so
        // the difference is pure Monte-Carlo noise with known scale.
        let esg = EsgConfig::default();
        let portfolio = small_portfolio(5);
        let (_, primaries) = generate_primary(&esg, 1, 1, 10, 31).unwrap();
        let p = 4_000;
        let central = estimate_nav(
            &esg, &portfolio, &primaries[0], 0, 1, None, CENTRAL_STREAM, p, 31,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        let spec = ShockSpec { id: ShockId::RatesUp, magnitude: 0.0 };
        let shocked = estimate_nav(
            &esg, &portfolio, &primaries[0], 0, 1, Some(&spec), 1, p, 31,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        let se = ((central.npv_variance + shocked.npv_variance) / p as f64).sqrt();
        assert!(
            (central.nav - shocked.nav).abs() < 3.0 * se,
            "central {} vs zero-shock {} exceeds 3·SE = {}",
            central.nav,
            shocked.nav,
            3.0 * se
        );
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let esg = EsgConfig::default();
        let portfolio = small_portfolio(2);
        let config = NestedConfig {
            n_primary: 6,
            n_secondary: 3,
            horizon_t: 2,
            liability_horizon_h: 2,
            shock_set: vec![ShockSpec { id: ShockId::EquityDown, magnitude: -0.2 }],
            seed: 61,
            common_random_numbers: true,
            retain_npvs: false,
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_nested(&config, &esg, &portfolio))
            .unwrap();
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_nested(&config, &esg, &portfolio))
            .unwrap();
        // Compare the filled estimates; the SCR slots are still the NaN
        // sentinel at this stage, and NaN ≠ NaN would mask real agreement.
        assert_eq!(single.paths.nav_hat, multi.paths.nav_hat);
        assert_eq!(single.paths.nav_hat_shocked, multi.paths.nav_hat_shocked);
        assert_eq!(single.nav0, multi.nav0);
    }

    #[test]
    fn tower_property_holds_on_a_desk_scale_run() {
        // With zero risk premia the real-world and pricing measures coincide,
        // so δ_t·NAV_t is a martingale along the primaries: its mean must be
        // flat in t up to Monte-Carlo error. Rate vol is turned off so the
        // constant equity drift can equal the bank rate exactly; equity risk
        // (the dominant NAV driver) stays on.
        //
        // One caveat: every valuation projects exactly H years past its node,
        // so the year-t window covers margin years 1..t+H — one year more per
        // date. The means are only comparable once the book has effectively
        // run off inside the shortest window, hence the fast-lapsing
        // portfolio below; with the default 3% lapses the year-12 margin
        // alone is ≈ 0.5, ten standard errors wide of flat.
        let esg = EsgConfig {
            rate_vol: 0.0,
            rate_risk_premium: 0.0,
            short_rate_initial: 0.025,
            rate_long_term_mean: 0.025,
            stock_drift_rw: 0.025,
            real_estate_drift_rw: 0.025,
            ..EsgConfig::default()
        };
        let portfolio = PortfolioConfig {
            liability_horizon_h: 10,
            // 45% yearly lapses leave ≈ 0.2% of reserves after 11 years, so
            // margins beyond any window are negligible against the SE below.
            base_lapse: 0.45,
            ..PortfolioConfig::default()
        };
        let config = NestedConfig {
            n_primary: 500,
            n_secondary: 100,
            horizon_t: 3,
            liability_horizon_h: 10,
            shock_set: vec![],
            seed: 404,
            common_random_numbers: true,
            retain_npvs: false,
        };
        let run = run_nested(&config, &esg, &portfolio).unwrap();
        let n = config.n_primary;
        let discounted = |t: usize| -> Vec<f64> {
            (0..n).map(|i| run.primaries[i].discount[t] * run.paths.nav(i, t)).collect()
        };
        let base = discounted(1);
        for t in 2..=3 {
            let other = discounted(t);
            let diffs: Vec<f64> = (0..n).map(|i| other[i] - base[i]).collect();
            let mean = stats::mean(&diffs);
            let se = stats::standard_error_of_mean(&diffs);
            println!(
                "tower check t={t}: mean(δ_t·NAV_t) − mean(δ_1·NAV_1) = {mean:.5} (se {se:.5})"
            );
            assert!(
                mean.abs() < 3.0 * se,
                "tower property violated at t={t}: paired diff {mean}, se {se}"
            );
        }
        // The root valuation must sit on the same level.
        let m1 = stats::mean(&base);
        let se = (stats::sample_variance(&base) / n as f64
            + run.nav0_npv_variance / config.n_secondary as f64)
            .sqrt();
        println!("tower check t=1 vs root: {m1:.5} vs {:.5} (se {se:.5})", run.nav0);
        assert!((m1 - run.nav0).abs() < 3.0 * se);
    }

    #[test]
    fn mismatched_liability_horizons_are_rejected() {
        let esg = EsgConfig::default();
        let portfolio = small_portfolio(20);
        let config = NestedConfig {
            n_primary: 1,
            n_secondary: 1,
            horizon_t: 1,
            liability_horizon_h: 10,
            shock_set: vec![],
            seed: 0,
            common_random_numbers: true,
            retain_npvs: false,
        };
        assert!(matches!(run_nested(&config, &esg, &portfolio), Err(Error::Config(_))));
    }

    #[test]
    fn nav_scales_with_the_book() {
        // Doubling every model-point reserve doubles NAV: the projection is
        // homogeneous of degree one in the book size.
        let esg = EsgConfig::default();
        let mut portfolio = small_portfolio(4);
        let (_, primaries) = generate_primary(&esg, 1, 1, 10, 55).unwrap();
        let base = estimate_nav(
            &esg, &portfolio, &primaries[0], 0, 1, None, CENTRAL_STREAM, 3, 55,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        portfolio.model_points = vec![
            ModelPoint { reserve: 140.0, guaranteed_rate: 0.00085, weight: 0.7 },
            ModelPoint { reserve: 60.0, guaranteed_rate: 0.025, weight: 0.3 },
        ];
        let doubled = estimate_nav(
            &esg, &portfolio, &primaries[0], 0, 1, None, CENTRAL_STREAM, 3, 55,
            StreamPurpose::NestedSecondary,
        )
        .unwrap();
        assert!((doubled.nav - 2.0 * base.nav).abs() < 1e-10 * base.nav.abs().max(1.0));
    }
}
