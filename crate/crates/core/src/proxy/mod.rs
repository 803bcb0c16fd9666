//! Polynomial proxies for the NAV distribution.
//!
//! Both proxy families regress a valuation target on polynomial functions of
//! the elementary risk factors and then evaluate the fitted polynomial across
//! the whole scenario panel at negligible cost:
//!
//! * Curve Fitting regresses precise NAV estimates (many secondaries each)
//!   obtained on a few, deliberately placed calibration scenarios;
//! * LSMC regresses noisy single-secondary NPVs obtained on a large dedicated
//!   panel, letting the regression average the valuation noise away.
//!
//! Shocked proxies reuse the term set of the matching central proxy and only
//! refit coefficients. Models may carry a lag regressor — the fitted proxy
//! value at the previous date — which chains evaluations through time and
//! stays self-contained on fresh scenarios (fitted values are used on both
//! calibration and evaluation panels, never reference valuations).

pub mod ols;
pub mod select;
pub mod sobol;
pub mod stepwise;
pub mod suite;
pub mod terms;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esg::{RiskFactorPanel, ShockId};
use crate::stats::sorted_quantile;

pub use ols::{fit_ols, OlsFit};
pub use select::{scenario_norm, select_calibration, CalibrationSet, SelectionMethod};
pub use stepwise::stepwise_select;
pub use suite::{
    build_lsmc_source, calibrate_cf_suite, calibrate_lsmc_suite, evaluate_suite,
    nav_scr_paths_from_values, LsmcSource, ProxySuite, SuiteValues,
};
pub use terms::{candidate_pool, MonomialFactor, RegressorTerm};

/// Which regression family produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyMethod {
    /// Few precise targets (NAV estimates with many secondaries each).
    CurveFitting,
    /// Many noisy targets (single-secondary NPVs).
    Lsmc,
}

impl ProxyMethod {
    pub fn label(self) -> &'static str {
        match self {
            ProxyMethod::CurveFitting => "curve_fitting",
            ProxyMethod::Lsmc => "lsmc",
        }
    }
}

/// Goodness-of-fit summary carried by every calibrated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    /// One entry per term, intercept first, aligned with `coefficients`.
    pub t_statistics: Vec<f64>,
    pub residual_variance: f64,
}

/// A calibrated polynomial proxy for one (date, shock) node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyModel {
    /// Valuation date the model approximates (1-based).
    pub date_t: usize,
    /// `None` for the central proxy, otherwise the instantaneous shock it
    /// prices.
    pub shock_id: Option<ShockId>,
    pub method: ProxyMethod,
    /// `terms[0]` is always the intercept; coefficients align 1:1.
    pub terms: Vec<RegressorTerm>,
    pub coefficients: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl ProxyModel {
    /// True when any term multiplies the previous-date proxy value.
    pub fn has_lag(&self) -> bool {
        self.terms.iter().any(|t| t.has_lag())
    }
}

/// Calibration settings shared by a whole proxy suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxyConfig {
    /// Cap on total polynomial degree of candidate terms. Three keeps the
    /// candidate count small enough that the design stays well-conditioned.
    pub max_degree: u32,
    /// Entry threshold for the stepwise t-test p-value.
    pub significance: f64,
    /// Whether the previous-date proxy value joins the candidate pool from
    /// t = 2 on. It usually carries most of the cross-period information.
    pub use_lag: bool,
    /// Placement rule for Curve Fitting calibration scenarios.
    pub cf_selection: SelectionMethod,
    /// Number of Curve Fitting calibration scenarios (N′).
    pub cf_calibration_size: usize,
    /// Size of the dedicated single-secondary panel that LSMC regresses on.
    pub lsmc_n_primary: usize,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            max_degree: 3,
            significance: 0.05,
            use_lag: true,
            // Tail-anchored calibration: solvency metrics live in the tails,
            // so the regression should be most trustworthy there.
            cf_selection: SelectionMethod::ExtremeNorm,
            cf_calibration_size: 100,
            lsmc_n_primary: 50_000,
        }
    }
}

impl ProxyConfig {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.max_degree == 0 {
            violations.push("max_degree must be at least 1".to_string());
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            violations.push(format!(
                "significance must lie strictly in (0, 1) (got {})",
                self.significance
            ));
        }
        if self.cf_calibration_size < 2 {
            violations.push(format!(
                "cf_calibration_size must be at least 2 (got {})",
                self.cf_calibration_size
            ));
        }
        if self.lsmc_n_primary < 2 {
            violations.push(format!(
                "lsmc_n_primary must be at least 2 (got {})",
                self.lsmc_n_primary
            ));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violations))
        }
    }
}

/// Fits a proxy at date `t` on the calibration set's targets.
///
/// `lag_values` holds the previous-date proxy evaluated on the *full* panel
/// (scenario-indexed); it is required whenever a lag term can enter — either
/// through the candidate pool (`use_lag` and t ≥ 2) or through `reuse_terms`.
/// With `reuse_terms` (shocked proxies) stepwise selection is skipped and the
/// given terms are refit as-is.
#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    config: &ProxyConfig,
    method: ProxyMethod,
    t: usize,
    shock_id: Option<ShockId>,
    panel: &RiskFactorPanel,
    calset: &CalibrationSet,
    lag_values: Option<&[f64]>,
    reuse_terms: Option<&[RegressorTerm]>,
) -> Result<ProxyModel> {
    config.validate()?;
    if t < 1 || t > panel.periods() {
        return Err(Error::config(format!(
            "calibration date must lie in 1..={} (got {t})",
            panel.periods()
        )));
    }
    if calset.targets.len() != calset.indices.len() || calset.indices.is_empty() {
        return Err(Error::Shape(format!(
            "calibration set carries {} targets for {} scenarios",
            calset.targets.len(),
            calset.indices.len()
        )));
    }
    if let Some(&bad) = calset.indices.iter().find(|&&i| i >= panel.scenarios()) {
        return Err(Error::Shape(format!(
            "calibration scenario {bad} outside panel of {}",
            panel.scenarios()
        )));
    }
    if let Some(lv) = lag_values {
        if lv.len() != panel.scenarios() {
            return Err(Error::Shape(format!(
                "{} lag values for a panel of {} scenarios",
                lv.len(),
                panel.scenarios()
            )));
        }
    }

    let terms = match reuse_terms {
        Some(reused) => {
            if reused.is_empty() || !reused[0].is_intercept() {
                return Err(Error::Invariant(
                    "reused term lists must start with the intercept".into(),
                ));
            }
            if reused.iter().any(|term| term.max_period().is_some_and(|m| m > t)) {
                return Err(Error::Invariant(format!(
                    "reused terms reference periods beyond t = {t}"
                )));
            }
            if reused.iter().any(|term| term.has_lag()) && lag_values.is_none() {
                return Err(Error::Invariant(
                    "reused terms include a lag regressor but no previous-date proxy values \
                     were supplied"
                        .into(),
                ));
            }
            reused.to_vec()
        }
        None => {
            let with_lag = config.use_lag && t >= 2;
            if with_lag && lag_values.is_none() {
                return Err(Error::Invariant(format!(
                    "lag terms are candidates at t = {t} but no previous-date proxy values \
                     were supplied"
                )));
            }
            let pool = candidate_pool(t, config.max_degree, with_lag);
            let candidates: Vec<RegressorTerm> =
                pool.into_iter().filter(|term| !term.is_intercept()).collect();
            let columns = DMatrix::from_fn(calset.indices.len(), candidates.len(), |i, j| {
                let n = calset.indices[i];
                candidates[j].value(panel, n, lag_values.map(|lv| lv[n]))
            });
            let chosen =
                stepwise_select(&columns, &candidates, &calset.targets, config.significance)?;
            let mut terms = vec![RegressorTerm::intercept()];
            terms.extend(chosen.into_iter().map(|j| candidates[j].clone()));
            terms
        }
    };

    let design = DMatrix::from_fn(calset.indices.len(), terms.len(), |i, j| {
        let n = calset.indices[i];
        terms[j].value(panel, n, lag_values.map(|lv| lv[n]))
    });
    let names: Vec<String> = terms.iter().skip(1).map(|term| term.label()).collect();
    let fit = fit_ols(&design, &calset.targets, &names)?;
    Ok(ProxyModel {
        date_t: t,
        shock_id,
        method,
        coefficients: fit.coefficients,
        diagnostics: Diagnostics {
            r_squared: fit.r_squared,
            adjusted_r_squared: fit.adjusted_r_squared,
            t_statistics: fit.t_statistics,
            residual_variance: fit.residual_variance,
        },
        terms,
    })
}

/// Evaluates a model on every scenario of a panel.
///
/// `prior` must hold the previous-date proxy values (scenario-indexed) iff
/// the model contains lag terms; it is ignored otherwise.
pub fn evaluate(
    model: &ProxyModel,
    panel: &RiskFactorPanel,
    prior: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if model.terms.len() != model.coefficients.len() {
        return Err(Error::Invariant(format!(
            "model carries {} terms but {} coefficients",
            model.terms.len(),
            model.coefficients.len()
        )));
    }
    if model.terms.iter().any(|term| term.max_period().is_some_and(|m| m > panel.periods())) {
        return Err(Error::Shape(format!(
            "model references periods beyond the panel's {}",
            panel.periods()
        )));
    }
    let lag = if model.has_lag() {
        let prior = prior.ok_or_else(|| {
            Error::Invariant("model has lag terms but no previous-date values were supplied".into())
        })?;
        if prior.len() != panel.scenarios() {
            return Err(Error::Shape(format!(
                "{} previous-date values for a panel of {} scenarios",
                prior.len(),
                panel.scenarios()
            )));
        }
        Some(prior)
    } else {
        None
    };
    Ok((0..panel.scenarios())
        .into_par_iter()
        .map(|n| {
            let lag_n = lag.map(|p| p[n]);
            model
                .terms
                .iter()
                .zip(&model.coefficients)
                .map(|(term, coef)| coef * term.value(panel, n, lag_n))
                .sum()
        })
        .collect())
}

/// Quantile levels every validation report examines.
pub const VALIDATION_QUANTILES: [f64; 3] = [0.25, 0.50, 0.75];

/// Side-by-side comparison of a proxy distribution against a reference one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub quantile_levels: Vec<f64>,
    pub proxy_quantiles: Vec<f64>,
    pub reference_quantiles: Vec<f64>,
    /// (proxy − reference) / |reference| at matched quantiles. Infinite when
    /// the reference quantile is exactly zero.
    pub relative_differences: Vec<f64>,
    /// Sorted-vs-sorted pairs (reference, proxy) for QQ plotting.
    pub qq: Vec<(f64, f64)>,
}

impl ValidationReport {
    /// Largest absolute relative difference across the examined quantiles.
    pub fn worst_relative_difference(&self) -> f64 {
        self.relative_differences.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()))
    }
}

/// Compares proxy values against reference values drawn on the same
/// scenarios: per-quantile relative differences plus the full QQ point set.
pub fn validate(proxy_values: &[f64], reference_values: &[f64]) -> Result<ValidationReport> {
    if proxy_values.len() != reference_values.len() || proxy_values.is_empty() {
        return Err(Error::Shape(format!(
            "validation needs equal non-empty samples (got {} proxy vs {} reference)",
            proxy_values.len(),
            reference_values.len()
        )));
    }
    let mut proxy_sorted = proxy_values.to_vec();
    proxy_sorted.sort_by(f64::total_cmp);
    let mut reference_sorted = reference_values.to_vec();
    reference_sorted.sort_by(f64::total_cmp);

    let mut proxy_quantiles = Vec::with_capacity(VALIDATION_QUANTILES.len());
    let mut reference_quantiles = Vec::with_capacity(VALIDATION_QUANTILES.len());
    let mut relative_differences = Vec::with_capacity(VALIDATION_QUANTILES.len());
    for &q in &VALIDATION_QUANTILES {
        let pq = sorted_quantile(&proxy_sorted, q);
        let rq = sorted_quantile(&reference_sorted, q);
        proxy_quantiles.push(pq);
        reference_quantiles.push(rq);
        // An exact match is zero regardless of the reference level; dividing
        // first would turn agreement at a zero reference quantile into 0/0.
        let diff = pq - rq;
        relative_differences.push(if diff == 0.0 { 0.0 } else { diff / rq.abs() });
    }
    let qq = reference_sorted.into_iter().zip(proxy_sorted).collect();
    Ok(ValidationReport {
        quantile_levels: VALIDATION_QUANTILES.to_vec(),
        proxy_quantiles,
        reference_quantiles,
        relative_differences,
        qq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esg::Risk;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Fraction of the estimate's own spread that statistical assertions
    /// allow: three standard errors.
    const THREE_SE: f64 = 3.0;
    /// Unbiasedness bound on a 200-replication mean.
    const TWO_SE: f64 = 2.0;
    /// Tolerance on the residual-variance identity relating single-secondary
    /// and averaged-secondary regressions; sampling error at the test's
    /// sample sizes stays well inside it.
    const VARIANCE_IDENTITY_RTOL: f64 = 0.05;

    fn gaussian_panel(seed: u64, n: usize, periods: usize) -> RiskFactorPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * periods * 2).map(|_| rng.sample(StandardNormal)).collect();
        RiskFactorPanel::from_factors(n, periods, data).unwrap()
    }

    fn full_calset(n: usize, targets: Vec<f64>) -> CalibrationSet {
        CalibrationSet {
            method: SelectionMethod::All,
            indices: (0..n).collect(),
            targets,
        }
    }

    /// Six-term polynomial truth used by the estimation-equivalence tests.
    fn six_term_truth() -> (Vec<RegressorTerm>, Vec<f64>) {
        let terms = vec![
            RegressorTerm::intercept(),
            RegressorTerm::monomial(&[(1, Risk::Stock, 1)]),
            RegressorTerm::monomial(&[(1, Risk::Rates, 1)]),
            RegressorTerm::monomial(&[(1, Risk::Stock, 2)]),
            RegressorTerm::monomial(&[(1, Risk::Stock, 1), (1, Risk::Rates, 1)]),
            RegressorTerm::monomial(&[(1, Risk::Rates, 2)]),
        ];
        let coefficients = vec![12.0, -3.0, 1.5, -0.8, 0.6, -0.4];
        (terms, coefficients)
    }

    fn truth_value(terms: &[RegressorTerm], coefs: &[f64], panel: &RiskFactorPanel, n: usize) -> f64 {
        terms.iter().zip(coefs).map(|(t, c)| c * t.value(panel, n, None)).sum()
    }

    #[test]
    fn intercept_only_model_evaluates_to_a_constant() {
        let panel = gaussian_panel(1, 10, 1);
        let model = ProxyModel {
            date_t: 1,
            shock_id: None,
            method: ProxyMethod::CurveFitting,
            terms: vec![RegressorTerm::intercept()],
            coefficients: vec![4.25],
            diagnostics: Diagnostics {
                r_squared: 0.0,
                adjusted_r_squared: 0.0,
                t_statistics: vec![f64::INFINITY],
                residual_variance: 0.0,
            },
        };
        let values = evaluate(&model, &panel, None).unwrap();
        assert!(values.iter().all(|&v| v == 4.25));
    }

    #[test]
    fn exact_polynomial_targets_are_reproduced_on_calibration_scenarios() {
        let panel = gaussian_panel(2, 80, 1);
        let config = ProxyConfig::default();
        let truth = RegressorTerm::monomial(&[(1, Risk::Stock, 2)]);
        let targets: Vec<f64> =
            (0..80).map(|n| 5.0 - 2.0 * truth.value(&panel, n, None)).collect();
        let calset = full_calset(80, targets.clone());
        let model = calibrate(
            &config,
            ProxyMethod::CurveFitting,
            1,
            None,
            &panel,
            &calset,
            None,
            None,
        )
        .unwrap();
        let values = evaluate(&model, &panel, None).unwrap();
        for (v, t) in values.iter().zip(&targets) {
            assert!((v - t).abs() < 1e-10, "exact fit must reproduce targets: {v} vs {t}");
        }
        assert_eq!(model.diagnostics.r_squared, 1.0);
    }

    #[test]
    fn identical_targets_give_identical_models_across_methods() {
        let panel = gaussian_panel(3, 60, 1);
        let config = ProxyConfig::default();
        let targets: Vec<f64> = (0..60)
            .map(|n| 1.0 + panel.factor(n, 1, Risk::Stock) * 2.0)
            .collect();
        let calset = full_calset(60, targets);
        let cf = calibrate(&config, ProxyMethod::CurveFitting, 1, None, &panel, &calset, None, None)
            .unwrap();
        let lsmc =
            calibrate(&config, ProxyMethod::Lsmc, 1, None, &panel, &calset, None, None).unwrap();
        assert_eq!(cf.terms, lsmc.terms);
        assert_eq!(cf.coefficients, lsmc.coefficients);
        assert_eq!(cf.method, ProxyMethod::CurveFitting);
        assert_eq!(lsmc.method, ProxyMethod::Lsmc);
    }

    #[test]
    fn reused_terms_are_kept_verbatim() {
        let panel = gaussian_panel(4, 50, 1);
        let config = ProxyConfig::default();
        let reused = vec![
            RegressorTerm::intercept(),
            RegressorTerm::monomial(&[(1, Risk::Rates, 1)]),
            RegressorTerm::monomial(&[(1, Risk::Stock, 3)]),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let targets: Vec<f64> = (0..50).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let calset = full_calset(50, targets);
        let model = calibrate(
            &config,
            ProxyMethod::CurveFitting,
            1,
            Some(ShockId::EquityDown),
            &panel,
            &calset,
            None,
            Some(&reused),
        )
        .unwrap();
        assert_eq!(model.terms, reused);
        assert_eq!(model.shock_id, Some(ShockId::EquityDown));
    }

    #[test]
    fn lag_chaining_is_deterministic_and_requires_prior_values() {
        let panel = gaussian_panel(5, 120, 3);
        let config = ProxyConfig { significance: 0.2, ..ProxyConfig::default() };
        // Date-1 targets depend on date-1 factors; later targets persist the
        // earlier value plus a current-factor effect, so lag terms matter.
        let t1_targets: Vec<f64> = (0..120)
            .map(|n| 10.0 + 2.0 * panel.factor(n, 1, Risk::Stock))
            .collect();
        let calset1 = full_calset(120, t1_targets);
        let m1 = calibrate(&config, ProxyMethod::Lsmc, 1, None, &panel, &calset1, None, None)
            .unwrap();
        let chain1 = evaluate(&m1, &panel, None).unwrap();

        let t2_targets: Vec<f64> = (0..120)
            .map(|n| 0.8 * chain1[n] + 1.5 * panel.factor(n, 2, Risk::Rates))
            .collect();
        let calset2 = full_calset(120, t2_targets);
        // Without prior values the lag candidates make calibration fail.
        let missing =
            calibrate(&config, ProxyMethod::Lsmc, 2, None, &panel, &calset2, None, None);
        assert!(missing.is_err(), "lag candidates without prior values must fail");

        let m2 = calibrate(
            &config,
            ProxyMethod::Lsmc,
            2,
            None,
            &panel,
            &calset2,
            Some(&chain1),
            None,
        )
        .unwrap();
        assert!(m2.has_lag(), "persistence structure should admit the lag term");
        let once = evaluate(&m2, &panel, Some(&chain1)).unwrap();
        let twice = evaluate(&m2, &panel, Some(&chain1)).unwrap();
        assert_eq!(once, twice, "chained evaluation must be deterministic");
        assert!(evaluate(&m2, &panel, None).is_err(), "lag model needs prior values");
    }

    #[test]
    fn estimation_equivalence_on_a_known_polynomial() {
        // The same truth is estimated two ways: few scenarios with averaged
        // noise (many secondaries) and many scenarios with full noise (one
        // secondary each). Both must recover the coefficients within three
        // estimated standard errors.
        let (terms, beta) = six_term_truth();
        let npv_sd = 8.0;
        let p_secondaries = 100usize;
        let cf_n = 500usize;
        let lsmc_n = 50_000usize;

        let cf_panel = gaussian_panel(100, cf_n, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let cf_targets: Vec<f64> = (0..cf_n)
            .map(|n| {
                let noise: f64 =
                    (0..p_secondaries).map(|_| rng.sample::<f64, _>(StandardNormal)).sum::<f64>()
                        / p_secondaries as f64;
                truth_value(&terms, &beta, &cf_panel, n) + npv_sd * noise
            })
            .collect();
        let lsmc_panel = gaussian_panel(102, lsmc_n, 1);
        let lsmc_targets: Vec<f64> = (0..lsmc_n)
            .map(|n| {
                truth_value(&terms, &beta, &lsmc_panel, n)
                    + npv_sd * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();

        let config = ProxyConfig::default();
        let cf_model = calibrate(
            &config,
            ProxyMethod::CurveFitting,
            1,
            None,
            &cf_panel,
            &full_calset(cf_n, cf_targets),
            None,
            Some(&terms),
        )
        .unwrap();
        let lsmc_model = calibrate(
            &config,
            ProxyMethod::Lsmc,
            1,
            None,
            &lsmc_panel,
            &full_calset(lsmc_n, lsmc_targets),
            None,
            Some(&terms),
        )
        .unwrap();

        for (label, model) in [("averaged-noise", &cf_model), ("single-noise", &lsmc_model)] {
            for j in 0..beta.len() {
                let est = model.coefficients[j];
                let se = (est / model.diagnostics.t_statistics[j]).abs();
                assert!(
                    (est - beta[j]).abs() <= THREE_SE * se,
                    "{label} coefficient {j}: {est} vs truth {} (se {se})",
                    beta[j]
                );
            }
        }
        println!(
            "estimation equivalence: cf R^2 = {:.4}, lsmc R^2 = {:.4}",
            cf_model.diagnostics.r_squared, lsmc_model.diagnostics.r_squared
        );
    }

    #[test]
    fn both_estimators_are_unbiased_over_replications() {
        // 200 independent replications of both regressions; the mean of each
        // coefficient estimate must sit within two standard errors of the
        // replication mean's own spread around the truth.
        let terms = vec![
            RegressorTerm::intercept(),
            RegressorTerm::monomial(&[(1, Risk::Stock, 1)]),
            RegressorTerm::monomial(&[(1, Risk::Rates, 2)]),
        ];
        let beta = vec![5.0, -2.0, 0.7];
        let npv_sd = 4.0;
        let reps = 200usize;
        let (cf_n, p_secondaries, lsmc_n) = (200usize, 20usize, 2_000usize);
        let config = ProxyConfig::default();

        let mut cf_draws = vec![Vec::with_capacity(reps); beta.len()];
        let mut lsmc_draws = vec![Vec::with_capacity(reps); beta.len()];
        for rep in 0..reps {
            let cf_panel = gaussian_panel(500 + rep as u64, cf_n, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(9_000 + rep as u64);
            let cf_targets: Vec<f64> = (0..cf_n)
                .map(|n| {
                    let noise: f64 = (0..p_secondaries)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .sum::<f64>()
                        / p_secondaries as f64;
                    truth_value(&terms, &beta, &cf_panel, n) + npv_sd * noise
                })
                .collect();
            let lsmc_panel = gaussian_panel(7_000 + rep as u64, lsmc_n, 1);
            let lsmc_targets: Vec<f64> = (0..lsmc_n)
                .map(|n| {
                    truth_value(&terms, &beta, &lsmc_panel, n)
                        + npv_sd * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            let cf = calibrate(
                &config,
                ProxyMethod::CurveFitting,
                1,
                None,
                &cf_panel,
                &full_calset(cf_n, cf_targets),
                None,
                Some(&terms),
            )
            .unwrap();
            let lsmc = calibrate(
                &config,
                ProxyMethod::Lsmc,
                1,
                None,
                &lsmc_panel,
                &full_calset(lsmc_n, lsmc_targets),
                None,
                Some(&terms),
            )
            .unwrap();
            for j in 0..beta.len() {
                cf_draws[j].push(cf.coefficients[j]);
                lsmc_draws[j].push(lsmc.coefficients[j]);
            }
        }
        for (label, draws) in [("averaged-noise", &cf_draws), ("single-noise", &lsmc_draws)] {
            for j in 0..beta.len() {
                let mean = crate::stats::mean(&draws[j]);
                let se = crate::stats::standard_error_of_mean(&draws[j]);
                assert!(
                    (mean - beta[j]).abs() <= TWO_SE * se,
                    "{label} coefficient {j}: replication mean {mean} vs truth {} (se {se})",
                    beta[j]
                );
            }
        }
    }

    #[test]
    fn residual_variance_identity_links_the_two_regressions() {
        // With targets = truth + w + (valuation noise), the single-secondary
        // regression's residual variance equals the averaged-secondary one
        // plus (P−1)/P times the valuation-noise variance.
        let (terms, beta) = six_term_truth();
        let w_sd = 2.0;
        let npv_sd = 6.0;
        let p_secondaries = 10usize;
        let n = 20_000usize;
        let panel = gaussian_panel(210, n, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(211);

        let mut cf_targets = Vec::with_capacity(n);
        let mut lsmc_targets = Vec::with_capacity(n);
        let mut within_vars = Vec::with_capacity(n);
        for i in 0..n {
            let truth = truth_value(&terms, &beta, &panel, i) + w_sd * rng.sample::<f64, _>(StandardNormal);
            let noises: Vec<f64> = (0..p_secondaries)
                .map(|_| npv_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            cf_targets.push(truth + crate::stats::mean(&noises));
            lsmc_targets.push(truth + npv_sd * rng.sample::<f64, _>(StandardNormal));
            within_vars.push(crate::stats::sample_variance(&noises));
        }
        let npv_var = crate::stats::mean(&within_vars);

        let config = ProxyConfig::default();
        let cf = calibrate(
            &config,
            ProxyMethod::CurveFitting,
            1,
            None,
            &panel,
            &full_calset(n, cf_targets),
            None,
            Some(&terms),
        )
        .unwrap();
        let lsmc = calibrate(
            &config,
            ProxyMethod::Lsmc,
            1,
            None,
            &panel,
            &full_calset(n, lsmc_targets),
            None,
            Some(&terms),
        )
        .unwrap();

        let u_var = cf.diagnostics.residual_variance;
        let v_var = lsmc.diagnostics.residual_variance;
        let predicted =
            u_var + (p_secondaries as f64 - 1.0) / p_secondaries as f64 * npv_var;
        let rel = (v_var - predicted).abs() / predicted;
        println!("variance identity: v {v_var:.4} vs predicted {predicted:.4} (rel {rel:.4})");
        assert!(
            rel < VARIANCE_IDENTITY_RTOL,
            "residual-variance identity violated: {v_var} vs {predicted}"
        );
    }

    #[test]
    fn evaluation_is_linear_in_coefficients() {
        let panel = gaussian_panel(6, 40, 1);
        let terms = vec![
            RegressorTerm::intercept(),
            RegressorTerm::monomial(&[(1, Risk::Stock, 1)]),
            RegressorTerm::monomial(&[(1, Risk::Rates, 3)]),
        ];
        let diag = Diagnostics {
            r_squared: 0.0,
            adjusted_r_squared: 0.0,
            t_statistics: vec![0.0; 3],
            residual_variance: 0.0,
        };
        let model_with = |coefs: Vec<f64>| ProxyModel {
            date_t: 1,
            shock_id: None,
            method: ProxyMethod::CurveFitting,
            terms: terms.clone(),
            coefficients: coefs,
            diagnostics: diag.clone(),
        };
        let a = evaluate(&model_with(vec![1.0, 2.0, -0.5]), &panel, None).unwrap();
        let b = evaluate(&model_with(vec![-3.0, 0.25, 4.0]), &panel, None).unwrap();
        let sum = evaluate(&model_with(vec![-2.0, 2.25, 3.5]), &panel, None).unwrap();
        for i in 0..a.len() {
            assert!(
                (a[i] + b[i] - sum[i]).abs() < 1e-12,
                "evaluation must be linear in coefficients"
            );
        }
    }

    #[test]
    fn validation_of_identical_samples_reports_zero_differences() {
        let values: Vec<f64> = (0..101).map(|i| i as f64 - 50.0).collect();
        let report = validate(&values, &values).unwrap();
        assert!(report.relative_differences.iter().all(|&d| d == 0.0));
        assert!(report.qq.iter().all(|&(r, p)| r == p));
    }

    #[test]
    fn validation_of_scaled_samples_reports_the_scaling() {
        let reference: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        let proxy: Vec<f64> = reference.iter().map(|v| 1.1 * v).collect();
        let report = validate(&proxy, &reference).unwrap();
        for &d in &report.relative_differences {
            assert!((d - 0.1).abs() < 1e-12, "scaling by 1.1 must show as 10%: {d}");
        }
        assert_eq!(report.quantile_levels, vec![0.25, 0.50, 0.75]);
    }

    #[test]
    fn validation_rejects_mismatched_samples() {
        assert!(validate(&[1.0], &[1.0, 2.0]).is_err());
        assert!(validate(&[], &[]).is_err());
    }
}
