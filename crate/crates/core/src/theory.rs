//! Variance decompositions and proxy-efficiency theory.
//!
//! A proxy calibrated on nested output sees targets polluted by two noise
//! layers: the inaccessible residual W of the best polynomial approximation
//! to the true NAV, and the Monte-Carlo error of averaging P secondary NPVs.
//! This module estimates the pieces of that decomposition from simulation
//! output, evaluates the budget-equivalence formula that maps a
//! curve-fitting design (N nodes × P secondaries) to the single-secondary
//! regression size with the same estimator accuracy, and runs the
//! replication experiment that verifies the equivalence empirically on
//! synthetic models where the truth is known.
//!
//! Notation used throughout, for a fixed projection date t:
//! * `nav_var`   — variance of the true NAV across primary scenarios;
//! * `npv_var`   — mean conditional variance of a single-secondary NPV;
//! * `u_var`     — residual variance when regressing P-averaged NAV
//!   estimates on the polynomial terms;
//! * `v_var`     — residual variance when regressing single NPVs on the
//!   same terms;
//! * `w_var`     — residual variance of the infeasible regression of the
//!   true NAV on the terms (what the polynomial cannot explain);
//! * `explained_var` — variance of the fitted polynomial part.
//!
//! Population identities tie them together: u² = w² + npv²/P,
//! v² = w² + npv², nav² = explained + w².

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esg::RiskFactorPanel;
use crate::nested::NestedRun;
use crate::proxy::{fit_ols, RegressorTerm};
use crate::rng::{stream, StreamKey, StreamPurpose};
use crate::stats::{mean, sample_variance};

// ─────────────────────────────────────────────────────────────────────────────
// Variance decomposition
// ─────────────────────────────────────────────────────────────────────────────

/// Estimated variance components of the proxy-target decomposition at one
/// projection date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    /// Variance of the true NAV across primaries, identified as the
    /// between-node variance of the P-averaged estimates minus their
    /// Monte-Carlo share `npv_var / p` (clamped at zero — the correction can
    /// overshoot on small samples).
    pub nav_var: f64,
    /// Mean within-node sample variance of single-secondary NPVs.
    pub npv_var: f64,
    /// Residual variance of the regression on P-averaged targets.
    pub u_var: f64,
    /// Residual variance of the regression on single-NPV targets.
    pub v_var: f64,
    /// What the polynomial cannot explain of the true NAV:
    /// `nav_var − explained_var`, clamped at zero.
    pub w_var: f64,
    /// Variance of the fitted polynomial values on the P-averaged fit.
    pub explained_var: f64,
    /// Secondary count P behind each averaged target.
    pub p: usize,
}

/// Estimates the decomposition from raw samples: one P-averaged NAV estimate
/// and the P retained single-secondary NPVs per primary scenario, regressed
/// on `terms` over `panel`.
///
/// Identification needs the within/between split, hence P ≥ 2 retained NPVs
/// per node. Terms must start with the intercept and be lag-free (the
/// decomposition regressions are plain cross-sectional fits; a lag term
/// would drag in a whole fitted chain).
pub fn estimate_decomposition_from_samples(
    panel: &RiskFactorPanel,
    terms: &[RegressorTerm],
    navhat: &[f64],
    npvs: &[Vec<f64>],
) -> Result<VarianceDecomposition> {
    let n = panel.scenarios();
    if navhat.len() != n || npvs.len() != n {
        return Err(Error::Shape(format!(
            "panel has {n} scenarios against {} averaged targets and {} NPV rows",
            navhat.len(),
            npvs.len()
        )));
    }
    if terms.is_empty() || !terms[0].is_intercept() {
        return Err(Error::Invariant(
            "decomposition terms must start with the intercept".into(),
        ));
    }
    if let Some(bad) = terms.iter().find(|term| term.has_lag()) {
        return Err(Error::config(format!(
            "decomposition regressions are lag-free cross-sections; term {} needs a fitted chain",
            bad.label()
        )));
    }
    if let Some(bad) = terms.iter().filter_map(RegressorTerm::max_period).max() {
        if bad > panel.periods() {
            return Err(Error::Shape(format!(
                "terms reference period {bad} but the panel stops at {}",
                panel.periods()
            )));
        }
    }
    let p = npvs.first().map(Vec::len).unwrap_or(0);
    if p < 2 {
        return Err(Error::config(format!(
            "the within/between split needs P >= 2 retained NPVs per node (got {p})"
        )));
    }
    if let Some((i, row)) = npvs.iter().enumerate().find(|(_, row)| row.len() != p) {
        return Err(Error::Shape(format!(
            "ragged NPV sample: node 0 retained {p}, node {i} retained {}",
            row.len()
        )));
    }
    if n <= terms.len() + 1 {
        return Err(Error::Shape(format!(
            "{n} scenarios cannot support {} regression terms plus variance estimation",
            terms.len()
        )));
    }

    let npv_var = mean(&npvs.iter().map(|row| sample_variance(row)).collect::<Vec<f64>>());
    let nav_var = (sample_variance(navhat) - npv_var / p as f64).max(0.0);

    let design = DMatrix::from_fn(n, terms.len(), |i, j| terms[j].value(panel, i, None));
    // fit_ols labels only the non-intercept columns.
    let labels: Vec<String> = terms.iter().skip(1).map(RegressorTerm::label).collect();

    let averaged_fit = fit_ols(&design, navhat, &labels)?;
    let u_var = averaged_fit.residual_variance;
    let fitted: Vec<f64> = navhat
        .iter()
        .zip(&averaged_fit.residuals)
        .map(|(y, r)| y - r)
        .collect();
    let explained_var = sample_variance(&fitted);

    let singles: Vec<f64> = npvs.iter().map(|row| row[0]).collect();
    let single_fit = fit_ols(&design, &singles, &labels)?;
    let v_var = single_fit.residual_variance;

    let w_var = (nav_var - explained_var).max(0.0);
    Ok(VarianceDecomposition { nav_var, npv_var, u_var, v_var, w_var, explained_var, p })
}

/// Estimates the decomposition at date t of a nested run that retained its
/// per-node NPV samples.
pub fn estimate_decomposition(
    run: &NestedRun,
    t: usize,
    terms: &[RegressorTerm],
) -> Result<VarianceDecomposition> {
    if t < 1 || t > run.paths.horizon_t() {
        return Err(Error::config(format!(
            "date t = {t} outside the run horizon 1..={}",
            run.paths.horizon_t()
        )));
    }
    if run.retained_npvs.is_none() {
        return Err(Error::Invariant(
            "variance decomposition needs per-node NPV samples; rerun with retain_npvs".into(),
        ));
    }
    let n = run.paths.n_primary();
    let navhat: Vec<f64> = (0..n).map(|i| run.paths.nav(i, t)).collect();
    let npvs: Vec<Vec<f64>> = (0..n)
        .map(|i| run.retained_node_npvs(i, t).expect("presence checked above").to_vec())
        .collect();
    estimate_decomposition_from_samples(&run.panel, terms, &navhat, &npvs)
}

// ─────────────────────────────────────────────────────────────────────────────
// Budget equivalence
// ─────────────────────────────────────────────────────────────────────────────

fn validate_efficiency_inputs(cf_n: usize, p: usize, w_var: f64, npv_var: f64) -> Result<()> {
    let mut violations = Vec::new();
    if cf_n == 0 {
        violations.push("curve-fitting scenario count must be >= 1".to_string());
    }
    if p == 0 {
        violations.push("secondary count P must be >= 1".to_string());
    }
    for (name, v) in [("w_var", w_var), ("npv_var", npv_var)] {
        if !(v >= 0.0 && v.is_finite()) {
            violations.push(format!("{name} must be finite and >= 0 (got {v})"));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(violations))
    }
}

/// The squared efficiency factor (1 + r)/(1 + P·r) with r = w_var/npv_var,
/// evaluated through its limits: r = 0 (including the 0/0 corner, where both
/// noise layers vanish and averaging is free) gives 1; npv_var = 0 with
/// w_var > 0 is the limit r → ∞, giving 1/P.
fn efficiency_squared(p: usize, w_var: f64, npv_var: f64) -> f64 {
    if w_var == 0.0 {
        1.0
    } else if npv_var == 0.0 {
        1.0 / p as f64
    } else {
        let r = w_var / npv_var;
        (1.0 + r) / (1.0 + p as f64 * r)
    }
}

/// The single-secondary regression size with the same asymptotic coefficient
/// accuracy as a curve-fitting design of `cf_n` nodes × `p` secondaries:
/// ceil(cf_n · P · (1 + r)/(1 + P·r)) with r = w_var/npv_var.
///
/// Endpoints: P = 1 gives cf_n (the designs coincide); w_var = 0 gives
/// cf_n · P (averaging loses nothing); npv_var = 0 with w_var > 0 gives cf_n
/// (averaging buys nothing).
pub fn equivalent_lsmc_n(cf_n: usize, p: usize, w_var: f64, npv_var: f64) -> Result<usize> {
    validate_efficiency_inputs(cf_n, p, w_var, npv_var)?;
    if p == 1 {
        return Ok(cf_n);
    }
    if w_var == 0.0 {
        return Ok(cf_n * p);
    }
    if npv_var == 0.0 {
        return Ok(cf_n);
    }
    let exact = cf_n as f64 * p as f64 * efficiency_squared(p, w_var, npv_var);
    Ok(exact.ceil() as usize)
}

/// Comparative efficiency coefficient η = sqrt((1 + r)/(1 + P·r)), the
/// factor by which curve fitting shrinks coefficient standard errors per
/// unit of NPV budget. Always in (0, 1]; equal to 1 at P = 1 or w_var = 0.
pub fn eta(p: usize, w_var: f64, npv_var: f64) -> Result<f64> {
    validate_efficiency_inputs(1, p, w_var, npv_var)?;
    if p == 1 {
        return Ok(1.0);
    }
    Ok(efficiency_squared(p, w_var, npv_var).sqrt())
}

/// Budget-equivalence summary for one (cf_n, P) design against estimated
/// variance components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub cf_n: usize,
    pub p: usize,
    /// Echo of w_var/npv_var; +∞ when only the polynomial residual remains
    /// (npv_var = 0 with w_var > 0), 0 when w_var = 0.
    pub variance_ratio: f64,
    pub eta: f64,
    pub equivalent_lsmc_n: usize,
}

pub fn efficiency_report(cf_n: usize, p: usize, w_var: f64, npv_var: f64) -> Result<EfficiencyReport> {
    validate_efficiency_inputs(cf_n, p, w_var, npv_var)?;
    let variance_ratio = if w_var == 0.0 {
        0.0
    } else if npv_var == 0.0 {
        f64::INFINITY
    } else {
        w_var / npv_var
    };
    Ok(EfficiencyReport {
        cf_n,
        p,
        variance_ratio,
        eta: eta(p, w_var, npv_var)?,
        equivalent_lsmc_n: equivalent_lsmc_n(cf_n, p, w_var, npv_var)?,
    })
}

// ─────────────────────────────────────────────────────────────────────────────
// Speed-of-convergence experiment
// ─────────────────────────────────────────────────────────────────────────────

/// A synthetic valuation model with known structure: the true NAV on a
/// scenario is the polynomial in the risk factors plus a Gaussian residual
/// with standard deviation `w_std`, and each single-secondary NPV adds an
/// independent Gaussian error with standard deviation `npv_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    /// Regression terms; `terms[0]` must be the intercept, lag terms are not
    /// allowed (there is no fitted chain in a cross-section).
    pub terms: Vec<RegressorTerm>,
    /// True coefficients, aligned with `terms`.
    pub coefficients: Vec<f64>,
    /// Standard deviation of the part of NAV the polynomial cannot explain.
    pub w_std: f64,
    /// Standard deviation of a single-secondary NPV around the true NAV.
    pub npv_std: f64,
}

impl SyntheticModel {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.terms.is_empty() || !self.terms[0].is_intercept() {
            violations.push("synthetic terms must start with the intercept".to_string());
        }
        if self.terms.iter().any(RegressorTerm::has_lag) {
            violations.push("synthetic models are lag-free cross-sections".to_string());
        }
        if self.coefficients.len() != self.terms.len() {
            violations.push(format!(
                "{} coefficients against {} terms",
                self.coefficients.len(),
                self.terms.len()
            ));
        }
        for (name, v) in [("w_std", self.w_std), ("npv_std", self.npv_std)] {
            if !(v >= 0.0 && v.is_finite()) {
                violations.push(format!("{name} must be finite and >= 0 (got {v})"));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violations))
        }
    }

    /// Latest factor period any term references; 1 for intercept-only models
    /// so a panel can still be built.
    fn periods(&self) -> usize {
        self.terms.iter().filter_map(RegressorTerm::max_period).max().unwrap_or(1).max(1)
    }

    fn truth(&self, panel: &RiskFactorPanel, n: usize) -> f64 {
        self.terms
            .iter()
            .zip(&self.coefficients)
            .map(|(term, coef)| coef * term.value(panel, n, None))
            .sum()
    }

    fn draw_panel(&self, n: usize, rng: &mut ChaCha8Rng) -> RiskFactorPanel {
        let periods = self.periods();
        let data: Vec<f64> = (0..n * periods * 2).map(|_| rng.sample(StandardNormal)).collect();
        RiskFactorPanel::from_factors(n, periods, data).expect("length matches by construction")
    }

    /// One curve-fitting calibration: n nodes, each target the average of
    /// `p_secondary` noisy NPVs around the true NAV. Returns the fitted
    /// coefficients.
    fn fit_averaged(&self, n: usize, p_secondary: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let panel = self.draw_panel(n, rng);
        let targets: Vec<f64> = (0..n)
            .map(|i| {
                let w: f64 = rng.sample::<f64, _>(StandardNormal) * self.w_std;
                let noise: f64 = (0..p_secondary)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * self.npv_std)
                    .sum::<f64>()
                    / p_secondary as f64;
                self.truth(&panel, i) + w + noise
            })
            .collect();
        self.fit(&panel, &targets)
    }

    /// One single-secondary calibration of size n.
    fn fit_single(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let panel = self.draw_panel(n, rng);
        let targets: Vec<f64> = (0..n)
            .map(|i| {
                let w: f64 = rng.sample::<f64, _>(StandardNormal) * self.w_std;
                let eps: f64 = rng.sample::<f64, _>(StandardNormal) * self.npv_std;
                self.truth(&panel, i) + w + eps
            })
            .collect();
        self.fit(&panel, &targets)
    }

    fn fit(&self, panel: &RiskFactorPanel, targets: &[f64]) -> Result<Vec<f64>> {
        let design = DMatrix::from_fn(panel.scenarios(), self.terms.len(), |i, j| {
            self.terms[j].value(panel, i, None)
        });
        let labels: Vec<String> =
            self.terms.iter().skip(1).map(RegressorTerm::label).collect();
        Ok(fit_ols(&design, targets, &labels)?.coefficients)
    }
}

/// Parameters of the replication experiment comparing estimator accuracy at
/// budget-equivalent sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub model: SyntheticModel,
    /// Curve-fitting node count per replication.
    pub cf_n: usize,
    /// Secondaries averaged per node.
    pub p_secondary: usize,
    /// Replications R; each yields one coefficient vector per method.
    pub replications: usize,
    pub seed: u64,
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let mut violations = Vec::new();
        if self.cf_n <= self.model.terms.len() + 1 {
            violations.push(format!(
                "cf_n = {} cannot support {} regression terms",
                self.cf_n,
                self.model.terms.len()
            ));
        }
        if self.p_secondary == 0 {
            violations.push("p_secondary must be >= 1".to_string());
        }
        if self.replications < 2 {
            violations.push("need at least 2 replications to estimate variances".to_string());
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violations))
        }
    }
}

/// Componentwise sampling variances of the two estimators and their ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub term_labels: Vec<String>,
    /// Across-replication variance of each curve-fitting coefficient.
    pub cf_variances: Vec<f64>,
    /// Across-replication variance of each single-secondary coefficient at
    /// the equivalent size.
    pub lsmc_variances: Vec<f64>,
    /// cf_variances / lsmc_variances; near 1 when the budget equivalence
    /// holds.
    pub variance_ratios: Vec<f64>,
    pub equivalent_lsmc_n: usize,
    pub replications: usize,
}

/// Repeats both calibrations `replications` times at budget-equivalent sizes
/// and reports the componentwise coefficient sampling variances. The
/// equivalence claim is that the ratios sit near 1.
pub fn verify_speed_of_convergence(config: &ConvergenceConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let w_var = config.model.w_std * config.model.w_std;
    let npv_var = config.model.npv_std * config.model.npv_std;
    let lsmc_n = equivalent_lsmc_n(config.cf_n, config.p_secondary, w_var, npv_var)?;

    let fits: Vec<(Vec<f64>, Vec<f64>)> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let key = |secondary: u32| StreamKey {
                purpose: StreamPurpose::Experiment,
                scenario: rep as u32,
                date: 0,
                shock: 0,
                secondary,
            };
            let mut cf_rng = stream(config.seed, key(0));
            let mut lsmc_rng = stream(config.seed, key(1));
            let cf = config.model.fit_averaged(config.cf_n, config.p_secondary, &mut cf_rng)?;
            let lsmc = config.model.fit_single(lsmc_n, &mut lsmc_rng)?;
            Ok((cf, lsmc))
        })
        .collect::<Result<Vec<_>>>()?;

    let k = config.model.terms.len();
    let component = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>, j: usize| -> Vec<f64> {
        fits.iter().map(|pair| pick(pair)[j]).collect()
    };
    let cf_variances: Vec<f64> =
        (0..k).map(|j| sample_variance(&component(|pair| &pair.0, j))).collect();
    let lsmc_variances: Vec<f64> =
        (0..k).map(|j| sample_variance(&component(|pair| &pair.1, j))).collect();
    let variance_ratios: Vec<f64> =
        cf_variances.iter().zip(&lsmc_variances).map(|(a, b)| a / b).collect();

    Ok(ConvergenceReport {
        term_labels: config.model.terms.iter().map(RegressorTerm::label).collect(),
        cf_variances,
        lsmc_variances,
        variance_ratios,
        equivalent_lsmc_n: lsmc_n,
        replications: config.replications,
    })
}

// ─────────────────────────────────────────────────────────────────────────────
// Tests
// ─────────────────────────────────────────────────────────────────────────────
