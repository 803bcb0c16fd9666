//! Multi-year solvency constraints and the capital K required to satisfy
//! them.
//!
//! Every constraint asks: what is the smallest capital amount X, invested
//! risk-free at date 0, that makes the NAV (or solvency-ratio) paths
//! acceptable? Injected capital grows risk-free, so at date t it is worth
//! X/δ_t and the date-t condition "NAV_t + X/δ_t ≥ bound" rearranges to a
//! pathwise deficiency D = δ_t·(bound − NAV_t) that X must cover. On an
//! empirical sample the constraint probability is a right-continuous step
//! function of X, so the minimal satisfying X is attained exactly at an
//! order statistic of deficiencies — computed here in closed form rather
//! than by root-finding (grid searches cross-check this in tests).
//!
//! Six constraint kinds are supported:
//! * SC0 — the one-year regulatory check P(NAV_1 ≥ 0) ≥ 99.5%;
//! * SC1 — each date's NAV distribution non-negative at confidence p;
//! * SC2 — whole NAV paths non-negative jointly at confidence p;
//! * SC3 — each date's solvency ratio NAV/SCR at least α at confidence p;
//! * SC4 — whole solvency-ratio paths at least α jointly at confidence p;
//! * SC5 — solvency ratio at least α across a given deterministic set of
//!   stressed paths.
//!
//! Capital K may be negative (surplus): the formulas are deliberately
//! unfloored, matching the convention that a negative requirement means the
//! book tolerates a withdrawal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esg::EconomicPath;
use crate::nested::NavScrPaths;
use crate::stats::{quantile_index, sorted_quantile};

// ─────────────────────────────────────────────────────────────────────────────
// Discount factors
// ─────────────────────────────────────────────────────────────────────────────

/// Path-dependent discount factors δ_t^n for n ∈ 0..N, t ∈ 1..=T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaPanel {
    n_paths: usize,
    horizon_t: usize,
    /// Row-major: `data[n · T + (t − 1)]`.
    data: Vec<f64>,
}

impl DeltaPanel {
    pub fn new(n_paths: usize, horizon_t: usize, data: Vec<f64>) -> Result<Self> {
        if n_paths == 0 || horizon_t == 0 {
            return Err(Error::Shape("a delta panel needs at least one path and date".into()));
        }
        if data.len() != n_paths * horizon_t {
            return Err(Error::Shape(format!(
                "{} discount factors for {} paths × {} dates",
                data.len(),
                n_paths,
                horizon_t
            )));
        }
        if data.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::Shape(
                "discount factors must be finite and strictly positive".into(),
            ));
        }
        Ok(DeltaPanel { n_paths, horizon_t, data })
    }

    /// Extracts δ_t^n from simulated primary paths.
    pub fn from_primaries(primaries: &[EconomicPath], horizon_t: usize) -> Result<Self> {
        if primaries.is_empty() {
            return Err(Error::Shape("no primary paths supplied".into()));
        }
        let mut data = Vec::with_capacity(primaries.len() * horizon_t);
        for (n, path) in primaries.iter().enumerate() {
            if path.end() < horizon_t {
                return Err(Error::PathTooShort { needed: horizon_t, available: path.end() });
            }
            for t in 1..=horizon_t {
                data.push(path.discount[t]);
            }
            debug_assert_eq!(data.len(), (n + 1) * horizon_t);
        }
        DeltaPanel::new(primaries.len(), horizon_t, data)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn horizon_t(&self) -> usize {
        self.horizon_t
    }

    /// δ_t^n; t is 1-based.
    pub fn delta(&self, n: usize, t: usize) -> f64 {
        debug_assert!(t >= 1 && t <= self.horizon_t);
        self.data[n * self.horizon_t + (t - 1)]
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Constraint specification
// ─────────────────────────────────────────────────────────────────────────────

/// Which constraint family is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Sc0,
    Sc1,
    Sc2,
    Sc3,
    Sc4,
    Sc5,
}

impl ConstraintKind {
    pub fn label(self) -> &'static str {
        match self {
            ConstraintKind::Sc0 => "sc0",
            ConstraintKind::Sc1 => "sc1",
            ConstraintKind::Sc2 => "sc2",
            ConstraintKind::Sc3 => "sc3",
            ConstraintKind::Sc4 => "sc4",
            ConstraintKind::Sc5 => "sc5",
        }
    }

    /// Whether the kind constrains solvency ratios (and therefore needs SCR
    /// paths and an α threshold).
    pub fn uses_ratio(self) -> bool {
        matches!(self, ConstraintKind::Sc3 | ConstraintKind::Sc4 | ConstraintKind::Sc5)
    }
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One stressed path of a deterministic SC5 set: NAV, SCR, and discount
/// factor per date t = 1..=T (index 0 is t = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressedPath {
    pub nav: Vec<f64>,
    pub scr: Vec<f64>,
    pub delta: Vec<f64>,
}

impl StressedPath {
    fn validate(&self, j: usize) -> Result<()> {
        if self.nav.is_empty()
            || self.nav.len() != self.scr.len()
            || self.nav.len() != self.delta.len()
        {
            return Err(Error::Shape(format!(
                "stressed path {j}: nav/scr/delta lengths {} / {} / {} must match and be non-empty",
                self.nav.len(),
                self.scr.len(),
                self.delta.len()
            )));
        }
        if self.delta.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::Shape(format!(
                "stressed path {j}: discount factors must be finite and strictly positive"
            )));
        }
        Ok(())
    }
}

/// The one-year regulatory confidence level.
pub const SC0_CONFIDENCE: f64 = 0.995;

/// A fully parameterized constraint, as it appears in run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    /// Confidence threshold p.
    pub p: f64,
    /// Ratio threshold α; read only by the ratio kinds (SC3/SC4/SC5).
    #[serde(default)]
    pub alpha: f64,
    /// The J stressed paths an SC5 constraint evaluates; unused otherwise.
    #[serde(default)]
    pub deterministic_set: Option<Vec<StressedPath>>,
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if !(self.p > 0.0 && self.p < 1.0) {
            violations.push(format!(
                "{}: confidence p must lie strictly in (0, 1) (got {})",
                self.kind, self.p
            ));
        }
        if self.kind == ConstraintKind::Sc0 && self.p != SC0_CONFIDENCE {
            violations.push(format!(
                "sc0 is the regulatory one-year check and fixes p = {SC0_CONFIDENCE} (got {})",
                self.p
            ));
        }
        if self.kind.uses_ratio() && !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            violations.push(format!(
                "{}: ratio threshold alpha must be finite and >= 0 (got {})",
                self.kind, self.alpha
            ));
        }
        match (&self.kind, &self.deterministic_set) {
            (ConstraintKind::Sc5, None) => {
                violations.push("sc5 needs a deterministic stressed-path set".to_string());
            }
            (ConstraintKind::Sc5, Some(set)) if set.is_empty() => {
                violations.push("sc5 needs at least one stressed path".to_string());
            }
            (ConstraintKind::Sc5, Some(set)) => {
                for (j, path) in set.iter().enumerate() {
                    if let Err(Error::Shape(msg)) = path.validate(j) {
                        violations.push(msg);
                    }
                }
            }
            (_, Some(_)) => {
                violations.push(format!(
                    "{}: deterministic sets are only meaningful for sc5",
                    self.kind
                ));
            }
            _ => {}
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violations))
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Results
// ─────────────────────────────────────────────────────────────────────────────

/// What part of the sample drives the requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingDetail {
    /// Per-date requirements; the maximum over dates is K. `binding_date` is
    /// 1-based.
    PerDate { date_requirements: Vec<f64>, binding_date: usize },
    /// Pathwise requirements; K is their empirical p-quantile, realized by
    /// the path with this (0-based) index.
    PerPath { binding_path: usize },
    /// A deterministic-set cell (0-based path j, 1-based date t) realizes K.
    PerCell { binding_path: usize, binding_date: usize },
}

/// The capital needed to satisfy one constraint, with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequiredCapitalResult {
    /// Overall Solvency Needs K in date-0 money. Negative means surplus.
    pub capital_k: f64,
    pub binding_detail: BindingDetail,
    /// Empirical probability of the constraint holding at injection K. For
    /// SC5 (deterministic set) this reports the fraction of (path, date)
    /// cells passing *without* injection, as a coverage diagnostic.
    pub achieved_probability: f64,
}

// ─────────────────────────────────────────────────────────────────────────────
// Deficiency machinery
// ─────────────────────────────────────────────────────────────────────────────

/// Capital the cell needs at date t, discounted to 0: D = δ·(α·SCR − NAV).
///
/// A zero-SCR cell under a positive ratio threshold is solvent by convention
/// (its ratio is reported as +∞), so it demands no capital at any X: −∞.
/// Under α = 0 the constraint is a plain NAV floor and SCR is not consulted,
/// which keeps the exact algebraic reduction to the NAV-only kinds.
fn cell_deficiency(delta: f64, alpha: f64, scr: f64, nav: f64) -> f64 {
    if alpha == 0.0 {
        -(delta * nav)
    } else if scr == 0.0 {
        f64::NEG_INFINITY
    } else {
        delta * (alpha * scr - nav)
    }
}

/// The minimal X such that the lower empirical (1−p)-quantile of the sample
/// shifted by X is ≥ 0: equivalently −q_{1−p}(−D) on the deficiency sample.
/// This realizes the per-date Argmin exactly under the project-wide quantile
/// convention.
fn per_date_requirement(deficiencies: &mut [f64], p: f64) -> f64 {
    for d in deficiencies.iter_mut() {
        *d = -*d;
    }
    deficiencies.sort_unstable_by(f64::total_cmp);
    -sorted_quantile(deficiencies, 1.0 - p)
}

/// Shared validation for the simulatory kinds.
fn check_inputs(paths: &NavScrPaths, deltas: &DeltaPanel, p: f64, needs_scr: bool) -> Result<()> {
    if deltas.n_paths() != paths.n_primary() || deltas.horizon_t() != paths.horizon_t() {
        return Err(Error::Shape(format!(
            "delta panel is {}×{} but the NAV paths are {}×{}",
            deltas.n_paths(),
            deltas.horizon_t(),
            paths.n_primary(),
            paths.horizon_t()
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config(format!(
            "confidence p must lie strictly in (0, 1) (got {p})"
        )));
    }
    if needs_scr && !paths.scr_filled() {
        return Err(Error::Invariant(
            "ratio constraints need SCR paths; run capital aggregation first".into(),
        ));
    }
    Ok(())
}

/// Deficiency of node (n, t) under a ratio threshold, reading SCR only when
/// α > 0 so NAV-only paths stay usable at α = 0.
fn node_deficiency(paths: &NavScrPaths, deltas: &DeltaPanel, alpha: f64, n: usize, t: usize) -> f64 {
    let delta = deltas.delta(n, t);
    let nav = paths.nav(n, t);
    if alpha == 0.0 {
        -(delta * nav)
    } else {
        cell_deficiency(delta, alpha, paths.scr(n, t), nav)
    }
}

/// Fraction of paths whose date-t deficiency is covered by an injection x.
fn coverage_at(deficiencies: &[f64], x: f64) -> f64 {
    deficiencies.iter().filter(|d| **d <= x).count() as f64 / deficiencies.len() as f64
}

// ─────────────────────────────────────────────────────────────────────────────
// SC0 — one-year regulatory check
// ─────────────────────────────────────────────────────────────────────────────

/// The one-year check: SCR_0 = NAV_0 + K with K = −q_{0.5%}(δ_1·NAV_1);
/// the book holds iff NAV_0 ≥ SCR_0.
pub fn check_sc0(nav1: &[f64], delta1: &[f64], nav0: f64) -> Result<(bool, f64)> {
    if nav1.is_empty() || nav1.len() != delta1.len() {
        return Err(Error::Shape(format!(
            "sc0 needs equal non-empty samples (got {} NAVs, {} deltas)",
            nav1.len(),
            delta1.len()
        )));
    }
    let mut discounted: Vec<f64> = nav1.iter().zip(delta1).map(|(nav, d)| d * nav).collect();
    discounted.sort_unstable_by(f64::total_cmp);
    let k = -sorted_quantile(&discounted, 1.0 - SC0_CONFIDENCE);
    let scr0 = nav0 + k;
    Ok((nav0 >= scr0, scr0))
}

// ─────────────────────────────────────────────────────────────────────────────
// SC1–SC4 — simulatory constraints
// ─────────────────────────────────────────────────────────────────────────────

/// SC1: each date's NAV distribution must be non-negative at confidence p.
/// K = −min_t q_{1−p}(δ_t·NAV_t).
pub fn required_capital_sc1(
    paths: &NavScrPaths,
    deltas: &DeltaPanel,
    p: f64,
) -> Result<RequiredCapitalResult> {
    check_inputs(paths, deltas, p, false)?;
    per_date_result(paths, deltas, p, 0.0)
}

/// SC3: each date's solvency ratio must reach α at confidence p, with the
/// capital-injection invariance of SCR turning the fixed point into a closed
/// computation. α = 0 degenerates exactly to SC1.
pub fn required_capital_sc3(
    paths: &NavScrPaths,
    deltas: &DeltaPanel,
    p: f64,
    alpha: f64,
) -> Result<RequiredCapitalResult> {
    check_inputs(paths, deltas, p, alpha > 0.0)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha must be finite and >= 0 (got {alpha})")));
    }
    per_date_result(paths, deltas, p, alpha)
}

fn per_date_result(
    paths: &NavScrPaths,
    deltas: &DeltaPanel,
    p: f64,
    alpha: f64,
) -> Result<RequiredCapitalResult> {
    let n = paths.n_primary();
    let horizon = paths.horizon_t();
    let per_date: Vec<(f64, Vec<f64>)> = (1..=horizon)
        .into_par_iter()
        .map(|t| {
            let deficiencies: Vec<f64> =
                (0..n).map(|i| node_deficiency(paths, deltas, alpha, i, t)).collect();
            let mut work = deficiencies.clone();
            (per_date_requirement(&mut work, p), deficiencies)
        })
        .collect();
    let date_requirements: Vec<f64> = per_date.iter().map(|(k, _)| *k).collect();
    let (binding_idx, capital_k) = date_requirements
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("horizon >= 1");
    let achieved = per_date
        .iter()
        .map(|(_, d)| coverage_at(d, capital_k))
        .fold(f64::INFINITY, f64::min);
    Ok(RequiredCapitalResult {
        capital_k,
        binding_detail: BindingDetail::PerDate {
            date_requirements,
            binding_date: binding_idx + 1,
        },
        achieved_probability: achieved,
    })
}

/// SC2: whole NAV paths must stay non-negative jointly at confidence p.
/// Pathwise minimal injection X_n = (max_t δ_t·(−NAV_t))⁺, K = q_p({X_n}).
pub fn required_capital_sc2(
    paths: &NavScrPaths,
    deltas: &DeltaPanel,
    p: f64,
) -> Result<RequiredCapitalResult> {
    check_inputs(paths, deltas, p, false)?;
    pathwise_result(paths, deltas, p, 0.0, true)
}

/// SC4: whole solvency-ratio paths must reach α jointly at confidence p.
/// X_n = max_t δ_t·(α·SCR_t − NAV_t), kept unfloored so a path that is
/// everywhere over-solvent reports the withdrawal it would tolerate;
/// K = q_p({X_n}).
pub fn required_capital_sc4(
    paths: &NavScrPaths,
    deltas: &DeltaPanel,
    p: f64,
    alpha: f64,
) -> Result<RequiredCapitalResult> {
    check_inputs(paths, deltas, p, alpha > 0.0)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha must be finite and >= 0 (got {alpha})")));
    }
    pathwise_result(paths, deltas, p, alpha, false)
}

fn pathwise_result(
    paths: &NavScrPaths,
    deltas: &DeltaPanel,
    p: f64,
    alpha: f64,
    floor_at_zero: bool,
) -> Result<RequiredCapitalResult> {
    let n = paths.n_primary();
    let horizon = paths.horizon_t();
    let requirements: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let worst = (1..=horizon)
                .map(|t| node_deficiency(paths, deltas, alpha, i, t))
                .fold(f64::NEG_INFINITY, f64::max);
            if floor_at_zero {
                worst.max(0.0)
            } else {
                worst
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| requirements[a].total_cmp(&requirements[b]).then(a.cmp(&b)));
    let idx = quantile_index(p, n) - 1;
    let binding_path = order[idx];
    let capital_k = requirements[binding_path];
    Ok(RequiredCapitalResult {
        capital_k,
        binding_detail: BindingDetail::PerPath { binding_path },
        achieved_probability: coverage_at(&requirements, capital_k),
    })
}

// ─────────────────────────────────────────────────────────────────────────────
// SC5 — deterministic stressed set
// ─────────────────────────────────────────────────────────────────────────────

/// SC5 evaluation output: the capital requirement plus the per-(path, date)
/// pass table at zero injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sc5Outcome {
    pub result: RequiredCapitalResult,
    /// `pass_table[j][t − 1]`: does stressed path j satisfy the ratio
    /// threshold at date t without any injection?
    pub pass_table: Vec<Vec<bool>>,
}

/// SC5: the solvency ratio must reach α on every cell of a given stressed
/// set; K = max over cells of δ·(α·SCR − NAV) by direct evaluation.
pub fn evaluate_sc5(set: &[StressedPath], alpha: f64) -> Result<Sc5Outcome> {
    if set.is_empty() {
        return Err(Error::Shape("sc5 needs at least one stressed path".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha must be finite and >= 0 (got {alpha})")));
    }
    for (j, path) in set.iter().enumerate() {
        path.validate(j)?;
    }
    let mut capital_k = f64::NEG_INFINITY;
    let mut binding = (0usize, 1usize);
    let mut pass_table = Vec::with_capacity(set.len());
    let mut cells = 0usize;
    let mut passing = 0usize;
    for (j, path) in set.iter().enumerate() {
        let mut row = Vec::with_capacity(path.nav.len());
        for t in 1..=path.nav.len() {
            let d = cell_deficiency(path.delta[t - 1], alpha, path.scr[t - 1], path.nav[t - 1]);
            if d > capital_k {
                capital_k = d;
                binding = (j, t);
            }
            row.push(d <= 0.0);
            cells += 1;
            if d <= 0.0 {
                passing += 1;
            }
        }
        pass_table.push(row);
    }
    Ok(Sc5Outcome {
        result: RequiredCapitalResult {
            capital_k,
            binding_detail: BindingDetail::PerCell {
                binding_path: binding.0,
                binding_date: binding.1,
            },
            achieved_probability: passing as f64 / cells as f64,
        },
        pass_table,
    })
}

// ─────────────────────────────────────────────────────────────────────────────
// Dispatch
// ─────────────────────────────────────────────────────────────────────────────

/// Evaluates a simulatory constraint (SC1–SC4) or a deterministic one (SC5)
/// from one spec. SC0 has a different output shape; call [`check_sc0`].
pub fn required_capital(
    spec: &ConstraintSpec,
    paths: &NavScrPaths,
    deltas: &DeltaPanel,
) -> Result<RequiredCapitalResult> {
    spec.validate()?;
    match spec.kind {
        ConstraintKind::Sc0 => Err(Error::config(
            "sc0 is the one-year check; evaluate it with check_sc0".to_string(),
        )),
        ConstraintKind::Sc1 => required_capital_sc1(paths, deltas, spec.p),
        ConstraintKind::Sc2 => required_capital_sc2(paths, deltas, spec.p),
        ConstraintKind::Sc3 => required_capital_sc3(paths, deltas, spec.p, spec.alpha),
        ConstraintKind::Sc4 => required_capital_sc4(paths, deltas, spec.p, spec.alpha),
        ConstraintKind::Sc5 => {
            let set = spec
                .deterministic_set
                .as_ref()
                .expect("validated sc5 spec carries a set");
            Ok(evaluate_sc5(set, spec.alpha)?.result)
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Tests
// ─────────────────────────────────────────────────────────────────────────────
