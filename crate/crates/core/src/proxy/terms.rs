//! Polynomial regressor terms over the elementary risk factors.
//!
//! A term is a monomial in the factors (ˢε_u, ᶻᶜε_u) for periods u ≤ t,
//! optionally multiplied by the lag-proxy value — the fitted proxy at t−1 —
//! which captures everything earlier periods did to the balance sheet without
//! spending polynomial degree on it. The intercept is the empty monomial.
//!
//! Terms carry a canonical form (factors sorted by period then risk, positive
//! exponents only) and a total order — total degree first, then
//! lexicographic — used both for deterministic tie-breaking in stepwise
//! selection and for stable candidate-pool layout.

use serde::{Deserialize, Serialize};

use crate::esg::{Risk, RiskFactorPanel};

/// One factor of a monomial: a risk factor at a period raised to a power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialFactor {
    pub period: usize,
    pub risk: Risk,
    pub exponent: u32,
}

/// A regression term: a canonical monomial, optionally times the lag proxy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorTerm {
    /// Sorted by (period, risk); exponents ≥ 1; empty means the constant 1.
    pub monomial: Vec<MonomialFactor>,
    /// Multiply by the fitted (t−1) proxy value.
    pub lag_proxy: bool,
}

impl RegressorTerm {
    /// The intercept: empty monomial, no lag.
    pub fn intercept() -> Self {
        RegressorTerm { monomial: Vec::new(), lag_proxy: false }
    }

    /// A term from (period, risk, exponent) factors; canonicalized (sorted,
    /// same-factor exponents merged, zero exponents dropped).
    pub fn monomial(factors: &[(usize, Risk, u32)]) -> Self {
        let mut canon: Vec<MonomialFactor> = Vec::new();
        for &(period, risk, exponent) in factors {
            if exponent == 0 {
                continue;
            }
            if let Some(existing) =
                canon.iter_mut().find(|f| f.period == period && f.risk == risk)
            {
                existing.exponent += exponent;
            } else {
                canon.push(MonomialFactor { period, risk, exponent });
            }
        }
        canon.sort_by_key(|f| (f.period, f.risk.index()));
        RegressorTerm { monomial: canon, lag_proxy: false }
    }

    /// Same, multiplied by the lag proxy.
    pub fn lagged(factors: &[(usize, Risk, u32)]) -> Self {
        RegressorTerm { lag_proxy: true, ..Self::monomial(factors) }
    }

    pub fn is_intercept(&self) -> bool {
        self.monomial.is_empty() && !self.lag_proxy
    }

    pub fn has_lag(&self) -> bool {
        self.lag_proxy
    }

    /// Total degree; the lag proxy counts as one degree (it stands for a
    /// value-like quantity, not a raw factor).
    pub fn total_degree(&self) -> u32 {
        self.monomial.iter().map(|f| f.exponent).sum::<u32>() + u32::from(self.lag_proxy)
    }

    /// Latest period referenced by the monomial part.
    pub fn max_period(&self) -> Option<usize> {
        self.monomial.iter().map(|f| f.period).max()
    }

    /// The term's value on scenario n. `lag` is the fitted (t−1) proxy value
    /// for that scenario; callers must supply it iff the term has a lag part.
    pub fn value(&self, panel: &RiskFactorPanel, n: usize, lag: Option<f64>) -> f64 {
        let mut v = 1.0;
        for f in &self.monomial {
            v *= panel.factor(n, f.period, f.risk).powi(f.exponent as i32);
        }
        if self.lag_proxy {
            v *= lag.expect("lag value required for a lag term");
        }
        v
    }

    /// Human-readable label, e.g. "1", "s2^2*r1", "lag*s3".
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.lag_proxy {
            parts.push("lag".to_string());
        }
        for f in &self.monomial {
            let base = match f.risk {
                Risk::Stock => format!("s{}", f.period),
                Risk::Rates => format!("r{}", f.period),
            };
            parts.push(if f.exponent == 1 { base } else { format!("{base}^{}", f.exponent) });
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }
}

impl PartialOrd for RegressorTerm {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RegressorTerm {
    /// Total degree first (lower is simpler), then lexicographic on the
    /// canonical factor list, with the lag flag last. Deterministic, so
    /// stepwise tie-breaks and pool layouts never depend on construction
    /// order.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.monomial.cmp(&other.monomial))
            .then_with(|| self.lag_proxy.cmp(&other.lag_proxy))
    }
}

impl std::fmt::Display for RegressorTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// The candidate pool for a date-t regression:
/// * every monomial in the current-period factors (ˢε_t, ᶻᶜε_t) of total
///   degree 1..=max_degree;
/// * degree-2 cross-period products: one current-period factor times one
///   factor from an earlier period (same or different risk);
/// * when lag terms are enabled and t ≥ 2: the lag proxy alone and its
///   products with each first-order current factor.
///
/// The intercept is not in the pool — every design carries it implicitly.
/// The pool keeps k small so the normal equations stay well-conditioned.
pub fn candidate_pool(t: usize, max_degree: u32, include_lag: bool) -> Vec<RegressorTerm> {
    assert!(t >= 1, "regressions are defined from the first period on");
    let mut pool = Vec::new();
    for a in 0..=max_degree {
        for b in 0..=max_degree {
            if a + b >= 1 && a + b <= max_degree {
                pool.push(RegressorTerm::monomial(&[
                    (t, Risk::Stock, a),
                    (t, Risk::Rates, b),
                ]));
            }
        }
    }
    for u in 1..t {
        for earlier in Risk::ALL {
            for current in Risk::ALL {
                pool.push(RegressorTerm::monomial(&[(t, current, 1), (u, earlier, 1)]));
            }
        }
    }
    if include_lag && t >= 2 {
        pool.push(RegressorTerm::lagged(&[]));
        pool.push(RegressorTerm::lagged(&[(t, Risk::Stock, 1)]));
        pool.push(RegressorTerm::lagged(&[(t, Risk::Rates, 1)]));
    }
    pool.sort();
    pool.dedup();
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel_from(rows: &[&[f64]]) -> RiskFactorPanel {
        let periods = rows[0].len() / 2;
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        RiskFactorPanel::from_factors(rows.len(), periods, data).unwrap()
    }

    #[test]
    fn pool_sizes_match_the_construction() {
        // Current-period monomials of degree ≤ 3: (a, b) with 1 ≤ a+b ≤ 3,
        // nine of them; plus 4 cross products per earlier period; plus three
        // lag terms from t = 2 on.
        assert_eq!(candidate_pool(1, 3, true).len(), 9);
        assert_eq!(candidate_pool(2, 3, false).len(), 9 + 4);
        assert_eq!(candidate_pool(2, 3, true).len(), 9 + 4 + 3);
        assert_eq!(candidate_pool(3, 3, true).len(), 9 + 8 + 3);
        // Degree cap applies to the current-period block.
        assert_eq!(candidate_pool(1, 2, false).len(), 5);
    }

    #[test]
    fn pool_is_sorted_deduped_and_within_period_bounds() {
        let pool = candidate_pool(4, 3, true);
        for w in pool.windows(2) {
            assert!(w[0] < w[1], "pool must be strictly increasing: {} vs {}", w[0], w[1]);
        }
        for term in &pool {
            assert!(term.max_period().unwrap_or(0) <= 4);
            assert!(term.total_degree() <= 3);
            assert!(!term.is_intercept());
        }
    }

    #[test]
    fn term_values_multiply_out() {
        // One scenario, two periods, factors (s1, r1, s2, r2) = (2, 3, 5, 7).
        let panel = panel_from(&[&[2.0, 3.0, 5.0, 7.0]]);
        assert_eq!(RegressorTerm::intercept().value(&panel, 0, None), 1.0);
        let t = RegressorTerm::monomial(&[(1, Risk::Stock, 2), (2, Risk::Rates, 1)]);
        assert_eq!(t.value(&panel, 0, None), 4.0 * 7.0);
        let lag = RegressorTerm::lagged(&[(2, Risk::Stock, 1)]);
        assert_eq!(lag.value(&panel, 0, Some(10.0)), 50.0);
    }

    #[test]
    fn labels_read_naturally() {
        assert_eq!(RegressorTerm::intercept().label(), "1");
        assert_eq!(
            RegressorTerm::monomial(&[(2, Risk::Stock, 2), (1, Risk::Rates, 1)]).label(),
            "r1*s2^2"
        );
        assert_eq!(RegressorTerm::lagged(&[]).label(), "lag");
        assert_eq!(RegressorTerm::lagged(&[(3, Risk::Rates, 1)]).label(), "lag*r3");
    }

    #[test]
    fn canonicalization_merges_and_sorts_factors() {
        let a = RegressorTerm::monomial(&[(2, Risk::Stock, 1), (1, Risk::Rates, 1), (2, Risk::Stock, 1)]);
        let b = RegressorTerm::monomial(&[(1, Risk::Rates, 1), (2, Risk::Stock, 2)]);
        assert_eq!(a, b);
        let zero = RegressorTerm::monomial(&[(1, Risk::Stock, 0)]);
        assert!(zero.is_intercept());
    }

    #[test]
    fn ordering_puts_simpler_terms_first() {
        let s1 = RegressorTerm::monomial(&[(1, Risk::Stock, 1)]);
        let r1 = RegressorTerm::monomial(&[(1, Risk::Rates, 1)]);
        let s1sq = RegressorTerm::monomial(&[(1, Risk::Stock, 2)]);
        let lag = RegressorTerm::lagged(&[]);
        assert!(s1 < r1, "stock sorts before rates at equal degree and period");
        assert!(r1 < s1sq, "degree dominates");
        assert!(lag < s1, "the bare lag (empty monomial) precedes factor terms of equal degree");
        assert!(RegressorTerm::intercept() < lag);
    }
}
