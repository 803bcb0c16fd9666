//! Whole-horizon proxy suites: one central model per date plus one shocked
//! model per (date, shock), calibrated in date order so lag regressors chain
//! correctly, with shocks refit in parallel within each date.
//!
//! Two sources feed the same assembly:
//!
//! * Curve Fitting calibrates on a nested run — targets are the run's own
//!   NAV estimates at a small selected scenario subset;
//! * LSMC calibrates on a dedicated large panel of fresh primaries, each
//!   valued by a single independent secondary (its NPV is the target).
//!
//! Shocked models always reuse the matching central model's term set and
//! take their lag regressor from the *central* chain at t − 1: a shock at t
//! is instantaneous, so the path up to t − 1 is the unshocked one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alm::PortfolioConfig;
use crate::error::{Error, Result};
use crate::esg::{generate_primary, EsgConfig, RiskFactorPanel, ShockId};
use crate::nested::{estimate_nav, NavScrPaths, NestedConfig, NestedRun};
use crate::proxy::{
    calibrate, evaluate, select_calibration, CalibrationSet, ProxyConfig, ProxyMethod, ProxyModel,
    SelectionMethod,
};
use crate::rng::{StreamPurpose, CENTRAL_STREAM};

/// Fixed tag XOR-ed into the run seed to key the dedicated LSMC panel, so its
/// primaries and secondaries are independent of the nested run's streams
/// while remaining a pure function of the configured seed.
const LSMC_PANEL_SEED_TAG: u64 = 0x4c53_4d43_5041_4e45;

/// A full set of calibrated proxies for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySuite {
    pub method: ProxyMethod,
    /// Central models, index t − 1 for t = 1..=T.
    pub central: Vec<ProxyModel>,
    /// Shocked models, `shocked[t - 1][s]` aligned with `shock_ids`.
    pub shocked: Vec<Vec<ProxyModel>>,
    pub shock_ids: Vec<ShockId>,
}

impl ProxySuite {
    pub fn horizon_t(&self) -> usize {
        self.central.len()
    }
}

/// A suite evaluated over a scenario panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteValues {
    /// `central[t - 1][n]`.
    pub central: Vec<Vec<f64>>,
    /// `shocked[t - 1][s][n]`.
    pub shocked: Vec<Vec<Vec<f64>>>,
}

/// Target provider for one suite assembly: where calibration scenarios come
/// from and what value each (scenario, date, shock) regresses on.
struct SuiteSource<'a> {
    panel: &'a RiskFactorPanel,
    shock_ids: &'a [ShockId],
    horizon_t: usize,
    select: Box<dyn Fn(usize) -> Result<CalibrationSet> + Sync + 'a>,
    central_target: Box<dyn Fn(usize, usize) -> f64 + Sync + 'a>,
    shocked_target: Box<dyn Fn(usize, usize, usize) -> f64 + Sync + 'a>,
}

/// Calibrates central then shocked models date by date, chaining the central
/// fitted values as lag input for everything at the next date.
fn assemble_suite(
    config: &ProxyConfig,
    method: ProxyMethod,
    source: &SuiteSource<'_>,
) -> Result<ProxySuite> {
    let mut central = Vec::with_capacity(source.horizon_t);
    let mut shocked = Vec::with_capacity(source.horizon_t);
    // Central fitted values on the full panel, one entry per completed date.
    let mut chain: Vec<Vec<f64>> = Vec::with_capacity(source.horizon_t);
    for t in 1..=source.horizon_t {
        let prior = if t >= 2 { Some(chain[t - 2].as_slice()) } else { None };
        let calset = (source.select)(t)
            .map_err(|e| e.with_context(format!("calibration selection at t={t}")))?;
        let central_targets: Vec<f64> =
            calset.indices.iter().map(|&n| (source.central_target)(t, n)).collect();
        let central_set = calset.clone().with_targets(central_targets)?;
        let model = calibrate(config, method, t, None, source.panel, &central_set, prior, None)
            .map_err(|e| e.with_context(format!("central proxy at t={t}")))?;
        let fitted = evaluate(&model, source.panel, prior)?;

        let shocked_at_t: Vec<ProxyModel> = source
            .shock_ids
            .par_iter()
            .enumerate()
            .map(|(s, &id)| {
                let targets: Vec<f64> =
                    calset.indices.iter().map(|&n| (source.shocked_target)(t, n, s)).collect();
                let set = calset.clone().with_targets(targets)?;
                calibrate(
                    config,
                    method,
                    t,
                    Some(id),
                    source.panel,
                    &set,
                    prior,
                    Some(&model.terms),
                )
                .map_err(|e| e.with_context(format!("shocked proxy ({id}) at t={t}")))
            })
            .collect::<Result<Vec<_>>>()?;

        central.push(model);
        shocked.push(shocked_at_t);
        chain.push(fitted);
    }
    Ok(ProxySuite { method, central, shocked, shock_ids: source.shock_ids.to_vec() })
}

/// Calibrates the Curve Fitting suite on a nested run: calibration scenarios
/// are selected per date by the configured placement rule, and targets are
/// the run's central and shocked NAV estimates at those scenarios.
pub fn calibrate_cf_suite(config: &ProxyConfig, run: &NestedRun) -> Result<ProxySuite> {
    calibrate_cf_suite_from_parts(config, &run.panel, &run.paths)
}

/// Curve-fitting calibration from the two pieces it actually reads — the
/// factor panel and the estimated paths — so a persisted run can be
/// re-calibrated without reconstructing the full in-memory run.
pub fn calibrate_cf_suite_from_parts(
    config: &ProxyConfig,
    panel: &RiskFactorPanel,
    paths: &NavScrPaths,
) -> Result<ProxySuite> {
    config.validate()?;
    if panel.scenarios() != paths.n_primary() {
        return Err(Error::Shape(format!(
            "panel holds {} scenarios but the paths hold {}",
            panel.scenarios(),
            paths.n_primary()
        )));
    }
    let source = SuiteSource {
        panel,
        shock_ids: paths.shock_ids(),
        horizon_t: paths.horizon_t(),
        select: Box::new(|t| {
            select_calibration(panel, config.cf_calibration_size, config.cf_selection, t)
        }),
        central_target: Box::new(|t, n| paths.nav(n, t)),
        shocked_target: Box::new(|t, n, s| paths.nav_shocked(n, t, s)),
    };
    assemble_suite(config, ProxyMethod::CurveFitting, &source)
}

/// The dedicated LSMC panel: fresh primaries with one independent secondary
/// valuation per (scenario, date, shock-or-central) node. Primaries are
/// dropped once valued; the regression only needs factors and targets.
#[derive(Debug, Clone)]
pub struct LsmcSource {
    pub panel: RiskFactorPanel,
    /// `central_targets[t - 1][n]`: single-secondary NPV at node (n, t).
    pub central_targets: Vec<Vec<f64>>,
    /// `shocked_targets[t - 1][s][n]`.
    pub shocked_targets: Vec<Vec<Vec<f64>>>,
    pub shock_ids: Vec<ShockId>,
}

/// Generates and values the dedicated LSMC panel. The panel's streams derive
/// from the nested seed XOR a fixed tag, keeping them independent of the
/// nested run while staying reproducible.
pub fn build_lsmc_source(
    esg: &EsgConfig,
    portfolio: &PortfolioConfig,
    nested: &NestedConfig,
    lsmc_n: usize,
) -> Result<LsmcSource> {
    esg.validate()?;
    portfolio.validate()?;
    nested.validate()?;
    if nested.liability_horizon_h != portfolio.liability_horizon_h {
        return Err(Error::config(format!(
            "nested.liability_horizon_h ({}) and portfolio.liability_horizon_h ({}) must agree",
            nested.liability_horizon_h, portfolio.liability_horizon_h
        )));
    }
    if lsmc_n < 2 {
        return Err(Error::config(format!("the LSMC panel needs at least 2 scenarios (got {lsmc_n})")));
    }
    let seed = nested.seed ^ LSMC_PANEL_SEED_TAG;
    let (panel, primaries) =
        generate_primary(esg, lsmc_n, nested.horizon_t, portfolio.bond_ladder_years, seed)?;

    let horizon_t = nested.horizon_t;
    let shock_count = nested.shock_set.len();
    // Row-major per scenario first (parallel), transposed afterwards.
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..lsmc_n)
        .into_par_iter()
        .map(|n| -> Result<(Vec<f64>, Vec<f64>)> {
            let primary = &primaries[n];
            let mut central = Vec::with_capacity(horizon_t);
            let mut shocked = Vec::with_capacity(horizon_t * shock_count);
            for t in 1..=horizon_t {
                let est = estimate_nav(
                    esg,
                    portfolio,
                    primary,
                    n,
                    t,
                    None,
                    CENTRAL_STREAM,
                    1,
                    seed,
                    StreamPurpose::ProxySecondary,
                )
                .map_err(|e| e.with_context(format!("LSMC node (n={n}, t={t}), central")))?;
                central.push(est.nav);
                for (s, shock) in nested.shock_set.iter().enumerate() {
                    let slot = if nested.common_random_numbers {
                        CENTRAL_STREAM
                    } else {
                        (s + 1) as u8
                    };
                    let est = estimate_nav(
                        esg,
                        portfolio,
                        primary,
                        n,
                        t,
                        Some(shock),
                        slot,
                        1,
                        seed,
                        StreamPurpose::ProxySecondary,
                    )
                    .map_err(|e| {
                        e.with_context(format!("LSMC node (n={n}, t={t}), shock {}", shock.id))
                    })?;
                    shocked.push(est.nav);
                }
            }
            Ok((central, shocked))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut central_targets = vec![vec![0.0; lsmc_n]; horizon_t];
    let mut shocked_targets = vec![vec![vec![0.0; lsmc_n]; shock_count]; horizon_t];
    for (n, (central, shocked)) in rows.into_iter().enumerate() {
        for t in 1..=horizon_t {
            central_targets[t - 1][n] = central[t - 1];
            for s in 0..shock_count {
                shocked_targets[t - 1][s][n] = shocked[(t - 1) * shock_count + s];
            }
        }
    }
    Ok(LsmcSource {
        panel,
        central_targets,
        shocked_targets,
        shock_ids: nested.shock_set.iter().map(|s| s.id).collect(),
    })
}

/// Calibrates the LSMC suite on its dedicated panel: every scenario is a
/// calibration scenario, targets are the single-secondary NPVs.
pub fn calibrate_lsmc_suite(config: &ProxyConfig, source: &LsmcSource) -> Result<ProxySuite> {
    config.validate()?;
    let n = source.panel.scenarios();
    let suite_source = SuiteSource {
        panel: &source.panel,
        shock_ids: &source.shock_ids,
        horizon_t: source.central_targets.len(),
        select: Box::new(move |t| {
            select_calibration(&source.panel, n, SelectionMethod::All, t)
        }),
        central_target: Box::new(|t, n| source.central_targets[t - 1][n]),
        shocked_target: Box::new(|t, n, s| source.shocked_targets[t - 1][s][n]),
    };
    assemble_suite(config, ProxyMethod::Lsmc, &suite_source)
}

/// Evaluates every model of a suite over a panel, chaining the central
/// fitted values as the lag input for the next date (central and shocked).
pub fn evaluate_suite(suite: &ProxySuite, panel: &RiskFactorPanel) -> Result<SuiteValues> {
    let mut central: Vec<Vec<f64>> = Vec::with_capacity(suite.central.len());
    let mut shocked = Vec::with_capacity(suite.central.len());
    for t in 1..=suite.central.len() {
        let prior = if t >= 2 { Some(central[t - 2].as_slice()) } else { None };
        let values = evaluate(&suite.central[t - 1], panel, prior)?;
        let shocked_at_t: Vec<Vec<f64>> = suite.shocked[t - 1]
            .iter()
            .map(|model| evaluate(model, panel, prior))
            .collect::<Result<Vec<_>>>()?;
        central.push(values);
        shocked.push(shocked_at_t);
    }
    Ok(SuiteValues { central, shocked })
}

/// Packs evaluated suite values into the joint path container so capital
/// aggregation and solvency constraints can treat proxy and nested paths
/// uniformly. SCR slots are left empty.
pub fn nav_scr_paths_from_values(
    values: &SuiteValues,
    shock_ids: &[ShockId],
) -> Result<NavScrPaths> {
    let horizon_t = values.central.len();
    if horizon_t == 0 {
        return Err(Error::Shape("suite values cover no dates".into()));
    }
    let n = values.central[0].len();
    for (t_idx, at_t) in values.shocked.iter().enumerate() {
        if at_t.len() != shock_ids.len() {
            return Err(Error::Shape(format!(
                "date {} carries {} shocked vectors for {} shocks",
                t_idx + 1,
                at_t.len(),
                shock_ids.len()
            )));
        }
        if values.central[t_idx].len() != n
            || at_t.iter().any(|v| v.len() != n)
        {
            return Err(Error::Shape("ragged suite values".into()));
        }
    }
    let mut paths = NavScrPaths::new(n, horizon_t, shock_ids.to_vec());
    for t in 1..=horizon_t {
        for i in 0..n {
            paths.set_nav(i, t, values.central[t - 1][i]);
            for s in 0..shock_ids.len() {
                paths.set_nav_shocked(i, t, s, values.shocked[t - 1][s][i]);
            }
        }
    }
    Ok(paths)
}
