//! Calibration-scenario selection.
//!
//! Curve Fitting regresses on a small set of primary scenarios, so where
//! those scenarios sit in factor space matters. Two placements are offered:
//! well-dispersed — scenarios nearest to a low-discrepancy grid mapped into
//! factor space through the normal inverse CDF — and extreme — the scenarios
//! with the largest factor norm, which anchor the polynomial where solvency
//! is actually decided, in the tails. LSMC regresses on every scenario of its
//! (large) panel instead.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::esg::RiskFactorPanel;
use crate::proxy::sobol::LowDiscrepancySequence;

/// How calibration scenarios are picked from a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    /// The first N′ scenarios — i.i.d. panels make any fixed subset unbiased.
    /// This is the LSMC mode (N′ = all of a dedicated panel).
    All,
    /// Scenarios nearest to an N′-point low-discrepancy grid pushed into
    /// factor space by the normal inverse CDF; well-dispersed coverage.
    SobolGrid,
    /// The N′ scenarios with the largest factor norm at t: tail-anchored
    /// calibration.
    ExtremeNorm,
}

/// A chosen calibration set: scenario indices plus (once the caller has
/// valued them) the regression targets, aligned index-for-index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub method: SelectionMethod,
    pub indices: Vec<usize>,
    pub targets: Vec<f64>,
}

impl CalibrationSet {
    /// Attaches targets (one per selected scenario, same order).
    pub fn with_targets(mut self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.indices.len() {
            return Err(Error::Shape(format!(
                "{} targets for {} calibration scenarios",
                targets.len(),
                self.indices.len()
            )));
        }
        self.targets = targets;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Euclidean norm of scenario n's factor vector through period t:
/// sqrt(Σ_{u≤t} (ˢε_u² + ᶻᶜε_u²)). Large values mark jointly extreme
/// scenarios.
pub fn scenario_norm(panel: &RiskFactorPanel, n: usize, t: usize) -> f64 {
    assert!(t >= 1 && t <= panel.periods(), "norm needs 1 <= t <= panel periods");
    panel.row(n)[..2 * t].iter().map(|f| f * f).sum::<f64>().sqrt()
}

/// Picks N′ distinct calibration scenarios at date t. Targets are left empty
/// — valuation is the caller's job.
pub fn select_calibration(
    panel: &RiskFactorPanel,
    n_prime: usize,
    method: SelectionMethod,
    t: usize,
) -> Result<CalibrationSet> {
    let n = panel.scenarios();
    if n_prime < 1 || n_prime > n {
        return Err(Error::config(format!(
            "calibration size must lie in 1..={n} (got {n_prime})"
        )));
    }
    if t < 1 || t > panel.periods() {
        return Err(Error::config(format!(
            "calibration date must lie in 1..={} (got {t})",
            panel.periods()
        )));
    }
    let indices = match method {
        SelectionMethod::All => (0..n_prime).collect(),
        SelectionMethod::ExtremeNorm => {
            let mut order: Vec<usize> = (0..n).collect();
            // Largest norm first; ties resolved by scenario index so the
            // selection is reproducible.
            order.sort_by(|&a, &b| {
                scenario_norm(panel, b, t)
                    .total_cmp(&scenario_norm(panel, a, t))
                    .then(a.cmp(&b))
            });
            order.truncate(n_prime);
            order
        }
        SelectionMethod::SobolGrid => nearest_to_grid(panel, n_prime, t)?,
    };
    debug_assert_eq!(
        {
            let mut d = indices.clone();
            d.sort_unstable();
            d.dedup();
            d.len()
        },
        indices.len(),
        "calibration indices must be distinct"
    );
    Ok(CalibrationSet { method, indices, targets: Vec::new() })
}

/// For each grid point (mapped to factor space), the nearest scenario not
/// already taken; distinctness by construction.
fn nearest_to_grid(panel: &RiskFactorPanel, n_prime: usize, t: usize) -> Result<Vec<usize>> {
    let dims = 2 * t;
    let mut seq = LowDiscrepancySequence::new(dims)
        .map_err(|_| Error::config(format!(
            "well-dispersed selection supports dates up to t={} (asked for t={t})",
            crate::proxy::sobol::MAX_DIMS / 2
        )))?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = panel.scenarios();
    let mut taken = vec![false; n];
    let mut indices = Vec::with_capacity(n_prime);
    for _ in 0..n_prime {
        let point: Vec<f64> = seq.next_point().iter().map(|&u| normal.inverse_cdf(u)).collect();
        let mut best: Option<(f64, usize)> = None;
        for s in 0..n {
            if taken[s] {
                continue;
            }
            let row = &panel.row(s)[..dims];
            let d2: f64 = row.iter().zip(&point).map(|(a, b)| (a - b) * (a - b)).sum();
            // Strict inequality keeps the lowest index on exact ties.
            if best.map_or(true, |(bd, _)| d2 < bd) {
                best = Some((d2, s));
            }
        }
        let (_, chosen) = best.expect("n_prime <= n guarantees an untaken scenario");
        taken[chosen] = true;
        indices.push(chosen);
    }
    Ok(indices)
}
