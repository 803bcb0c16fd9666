//! Standard-Formula capital aggregation.
//!
//! Stand-alone capitals are floored NAV losses under instantaneous shocks,
//! C_i = max(NAV − NAV_shocked_i, 0). Aggregation is the two-level
//! square-root-of-quadratic-form rule: risks combine within a module through
//! the module's correlation matrix, SCR_m = sqrt(Σ_{i,j} ρ^{i,j} C_i C_j),
//! and module requirements combine through the inter-modular matrix to give
//! the node's SCR. The solvency ratio is NAV/SCR, flagged +∞ (trivially
//! solvent) where the requirement is zero.
//!
//! The interest-rate risk enters as up and down variants; per QIS practice
//! the stand-alone capitals are floored first, then the direction with the
//! larger capital represents the rate risk in the module matrix.
//!
//! Correlation values here are configuration defaults, not a normative
//! regulatory matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esg::ShockId;
use crate::nested::NavScrPaths;

// ─────────────────────────────────────────────────────────────────────────────
// Correlation matrices
// ─────────────────────────────────────────────────────────────────────────────

/// A labelled symmetric correlation matrix. Validated on load: unit
/// diagonal, symmetry, entries in [-1, 1], positive semi-definiteness —
/// the last guarantees every aggregate is a real number (the quadratic form
/// can never go negative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    /// Identity matrix over the given labels (uncorrelated risks).
    pub fn identity(labels: Vec<String>) -> Self {
        let k = labels.len();
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        CorrelationMatrix { labels, rows }
    }

    /// 2×2 matrix with one off-diagonal correlation.
    pub fn pair(label_a: &str, label_b: &str, rho: f64) -> Self {
        CorrelationMatrix {
            labels: vec![label_a.to_string(), label_b.to_string()],
            rows: vec![vec![1.0, rho], vec![rho, 1.0]],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn validate(&self, context: &str) -> Result<()> {
        let mut errors = Vec::new();
        let k = self.labels.len();
        if k == 0 {
            errors.push(format!("{context}: correlation matrix must not be empty"));
        }
        if self.rows.len() != k || self.rows.iter().any(|r| r.len() != k) {
            errors.push(format!(
                "{context}: matrix must be {k}×{k} to match its {k} labels"
            ));
            return Err(Error::Config(errors));
        }
        for i in 0..k {
            if (self.rows[i][i] - 1.0).abs() > 1e-12 {
                errors.push(format!(
                    "{context}: diagonal entry [{i}][{i}] must be 1 (got {})",
                    self.rows[i][i]
                ));
            }
            for j in 0..k {
                let v = self.rows[i][j];
                if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                    errors.push(format!(
                        "{context}: entry [{i}][{j}] must lie in [-1, 1] (got {v})"
                    ));
                }
                if (v - self.rows[j][i]).abs() > 1e-12 {
                    errors.push(format!("{context}: matrix not symmetric at [{i}][{j}]"));
                }
            }
        }
        if errors.is_empty() {
            // Positive semi-definiteness via symmetric eigenvalues.
            let m = nalgebra::DMatrix::from_fn(k, k, |i, j| self.rows[i][j]);
            let eigen = m.symmetric_eigen();
            let min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -1e-9 {
                errors.push(format!(
                    "{context}: matrix is not positive semi-definite (minimum eigenvalue {min})"
                ));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// sqrt(cᵀ ρ c), clipped at zero against eigenvalue-tolerance dust.
    fn aggregate(&self, capitals: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &ci) in capitals.iter().enumerate() {
            for (j, &cj) in capitals.iter().enumerate() {
                acc += self.rows[i][j] * ci * cj;
            }
        }
        acc.max(0.0).sqrt()
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Module structure
// ─────────────────────────────────────────────────────────────────────────────

/// How a module's member shocks map onto its correlation-matrix rows: the
/// two rate directions share one row (larger capital wins), every other
/// shock keeps its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducedRisk {
    Single(ShockId),
    RatesCombined,
}

impl ReducedRisk {
    pub fn label(self) -> &'static str {
        match self {
            ReducedRisk::Single(id) => id.as_str(),
            ReducedRisk::RatesCombined => "rates",
        }
    }
}

/// Reduces a member-shock list to matrix rows, preserving first-appearance
/// order; the two rate directions collapse onto one "rates" row.
pub fn reduce_risks(risks: &[ShockId]) -> Vec<ReducedRisk> {
    let mut out = Vec::new();
    for &id in risks {
        let reduced = match id {
            ShockId::RatesUp | ShockId::RatesDown => ReducedRisk::RatesCombined,
            other => ReducedRisk::Single(other),
        };
        if !out.contains(&reduced) {
            out.push(reduced);
        }
    }
    out
}

/// One risk module: a named set of member shocks and the correlation matrix
/// over their reduced rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskModule {
    pub name: String,
    pub risks: Vec<ShockId>,
    pub intra: CorrelationMatrix,
}

/// The full two-level aggregation structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModuleStructure {
    pub modules: Vec<RiskModule>,
    pub inter: CorrelationMatrix,
}

impl Default for ModuleStructure {
    fn default() -> Self {
        ModuleStructure {
            modules: vec![
                RiskModule {
                    name: "market".to_string(),
                    risks: vec![ShockId::EquityDown, ShockId::RatesUp, ShockId::RatesDown],
                    intra: CorrelationMatrix::pair("equity_down", "rates", 0.5),
                },
                RiskModule {
                    name: "life".to_string(),
                    risks: vec![ShockId::MassLapse],
                    intra: CorrelationMatrix::identity(vec!["mass_lapse".to_string()]),
                },
            ],
            inter: CorrelationMatrix::pair("market", "life", 0.25),
        }
    }
}

impl ModuleStructure {
    /// Validates matrices, label alignment, and — against the run's shock
    /// set — that every configured shock belongs to exactly one module.
    pub fn validate(&self, shock_set: &[ShockId]) -> Result<()> {
        let mut errors = Vec::new();
        if self.modules.is_empty() {
            errors.push("stdformula.modules must not be empty".to_string());
        }
        for module in &self.modules {
            if let Err(Error::Config(mut v)) =
                module.intra.validate(&format!("stdformula.{}.intra", module.name))
            {
                errors.append(&mut v);
            }
            let expected: Vec<&str> = reduce_risks(&module.risks).iter().map(|r| r.label()).collect();
            let got: Vec<&str> = module.intra.labels.iter().map(|s| s.as_str()).collect();
            if expected != got {
                errors.push(format!(
                    "stdformula.{}.intra labels {got:?} do not match the module's reduced risks {expected:?}",
                    module.name
                ));
            }
        }
        if let Err(Error::Config(mut v)) = self.inter.validate("stdformula.inter") {
            errors.append(&mut v);
        }
        let module_names: Vec<&str> = self.modules.iter().map(|m| m.name.as_str()).collect();
        let inter_labels: Vec<&str> = self.inter.labels.iter().map(|s| s.as_str()).collect();
        if module_names != inter_labels {
            errors.push(format!(
                "stdformula.inter labels {inter_labels:?} do not match module names {module_names:?}"
            ));
        }
        for &id in shock_set {
            let owners = self.modules.iter().filter(|m| m.risks.contains(&id)).count();
            if owners != 1 {
                errors.push(format!(
                    "shock {id} must belong to exactly one module (found in {owners})"
                ));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Operations
// ─────────────────────────────────────────────────────────────────────────────

/// Stand-alone risk capital: the floored NAV loss under one shock.
pub fn stand_alone_capital(nav: f64, nav_shocked: f64) -> f64 {
    (nav - nav_shocked).max(0.0)
}

/// Intra-modular aggregation: SCR_m = sqrt(Σ ρ^{i,j} C_i C_j).
pub fn aggregate_intra(capitals: &[f64], matrix: &CorrelationMatrix) -> Result<f64> {
    if capitals.len() != matrix.len() {
        return Err(Error::Shape(format!(
            "{} capitals against a {}-label correlation matrix",
            capitals.len(),
            matrix.len()
        )));
    }
    Ok(matrix.aggregate(capitals))
}

/// Inter-modular aggregation: same functional form as [`aggregate_intra`],
/// applied to module requirements.
pub fn aggregate_inter(module_scrs: &[f64], matrix: &CorrelationMatrix) -> Result<f64> {
    aggregate_intra(module_scrs, matrix)
}

/// Computes one node's SCR from its central NAV and shocked NAVs. The lookup
/// slice pairs each shock with its shocked NAV; a module member missing from
/// it is an error naming the risk. This is the single aggregation path used
/// for simulation NAVs and proxy NAVs alike.
pub fn scr_from_navs(
    nav: f64,
    shocked: &[(ShockId, f64)],
    structure: &ModuleStructure,
) -> Result<f64> {
    let lookup = |id: ShockId| -> Result<f64> {
        shocked
            .iter()
            .find(|(s, _)| *s == id)
            .map(|&(_, v)| v)
            .ok_or_else(|| Error::MissingShock(id.as_str().to_string()))
    };
    let mut module_scrs = Vec::with_capacity(structure.modules.len());
    for module in &structure.modules {
        let reduced = reduce_risks(&module.risks);
        let mut capitals = Vec::with_capacity(reduced.len());
        for risk in reduced {
            let capital = match risk {
                ReducedRisk::Single(id) => stand_alone_capital(nav, lookup(id)?),
                // Floor each direction first, then keep the harsher one.
                ReducedRisk::RatesCombined => {
                    let mut worst = 0.0f64;
                    for id in [ShockId::RatesUp, ShockId::RatesDown] {
                        if module.risks.contains(&id) {
                            worst = worst.max(stand_alone_capital(nav, lookup(id)?));
                        }
                    }
                    worst
                }
            };
            capitals.push(capital);
        }
        module_scrs.push(aggregate_intra(&capitals, &module.intra)?);
    }
    aggregate_inter(&module_scrs, &structure.inter)
}

/// Fills the scr and solvency_ratio slots of a NAV-populated path array.
/// Where the requirement is exactly zero the ratio is flagged +∞: a node
/// with no capital requirement is trivially solvent. Pure per-node work.
pub fn build_scr_paths(paths: &mut NavScrPaths, structure: &ModuleStructure) -> Result<()> {
    structure.validate(paths.shock_ids())?;
    for module in &structure.modules {
        for &id in &module.risks {
            paths.shock_index(id)?;
        }
    }
    let shock_ids = paths.shock_ids().to_vec();
    for n in 0..paths.n_primary() {
        for t in 1..=paths.horizon_t() {
            let nav = paths.nav(n, t);
            let shocked: Vec<(ShockId, f64)> = shock_ids
                .iter()
                .enumerate()
                .map(|(s, &id)| (id, paths.nav_shocked(n, t, s)))
                .collect();
            let scr = scr_from_navs(nav, &shocked, structure)
                .map_err(|e| e.with_context(format!("node (n={n}, t={t})")))?;
            let ratio = if scr > 0.0 { nav / scr } else { f64::INFINITY };
            paths.set_scr(n, t, scr, ratio);
        }
    }
    paths.mark_scr_filled();
    Ok(())
}

// ─────────────────────────────────────────────────────────────────────────────
// Tests
// ─────────────────────────────────────────────────────────────────────────────
