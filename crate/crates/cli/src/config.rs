//! Run configuration: one TOML file drives the whole pipeline. Sections map
//! 1:1 onto the core config types; this module adds the file-level concerns —
//! loading, path resolution for referenced CSVs, worker-count parsing, and a
//! single validation pass that reports every violation at once so a config
//! can be fixed in one edit instead of one error at a time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use solvlab_core::alm::PortfolioConfig;
use solvlab_core::error::{Error, Result};
use solvlab_core::esg::EsgConfig;
use solvlab_core::nested::NestedConfig;
use solvlab_core::proxy::ProxyConfig;
use solvlab_core::solvency::{ConstraintKind, ConstraintSpec};
use solvlab_core::stdformula::ModuleStructure;
use solvlab_core::theory::ConvergenceConfig;

use crate::artifacts;

/// Worker-pool size: a fixed thread count or `auto` (one per logical CPU).
/// `workers = 1` is the bit-exactness baseline; any other count must produce
/// numerically identical results, which the engine guarantees by keeping
/// every parallel region a pure, order-preserving map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WorkersRepr", into = "WorkersRepr")]
pub enum Workers {
    Auto,
    Count(usize),
}

impl Workers {
    /// Thread count to hand to the pool builder; `None` lets the pool pick.
    pub fn thread_count(self) -> Option<usize> {
        match self {
            Workers::Auto => None,
            Workers::Count(n) => Some(n),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Workers::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Workers::Count(n)),
            _ => Err(Error::config(format!(
                "workers must be a positive integer or \"auto\" (got {s:?})"
            ))),
        }
    }
}

/// TOML-facing shape: either the literal string "auto" or an integer.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WorkersRepr {
    Count(i64),
    Name(String),
}

impl TryFrom<WorkersRepr> for Workers {
    type Error = String;

    fn try_from(repr: WorkersRepr) -> std::result::Result<Self, String> {
        match repr {
            WorkersRepr::Count(n) if n >= 1 => Ok(Workers::Count(n as usize)),
            WorkersRepr::Count(n) => Err(format!("workers must be >= 1 (got {n})")),
            WorkersRepr::Name(s) if s == "auto" => Ok(Workers::Auto),
            WorkersRepr::Name(s) => {
                Err(format!("workers must be a positive integer or \"auto\" (got {s:?})"))
            }
        }
    }
}

impl From<Workers> for WorkersRepr {
    fn from(w: Workers) -> Self {
        match w {
            Workers::Auto => WorkersRepr::Name("auto".to_string()),
            Workers::Count(n) => WorkersRepr::Count(n as i64),
        }
    }
}

/// One configured constraint. The core spec is inlined; on top of it a
/// stressed-path set may be supplied as a CSV file (columns j, t, nav, scr,
/// delta) instead of inline TOML — handier for sets produced elsewhere. The
/// path resolves relative to the config file and is spliced into the spec at
/// load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    #[serde(flatten)]
    pub spec: ConstraintSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deterministic_set_csv: Option<PathBuf>,
}

/// Everything a run needs, in one file. Every section has a default so a
/// minimal config can say only what differs from the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub esg: EsgConfig,
    pub portfolio: PortfolioConfig,
    pub nested: NestedConfig,
    pub proxy: ProxyConfig,
    pub constraints: Vec<ConstraintEntry>,
    pub structure: ModuleStructure,
    /// Synthetic convergence experiment; only the `theory` subcommand reads
    /// it.
    pub theory: Option<ConvergenceConfig>,
    pub output_dir: PathBuf,
    pub workers: Workers,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            esg: EsgConfig::default(),
            portfolio: PortfolioConfig::default(),
            nested: NestedConfig::default(),
            proxy: ProxyConfig::default(),
            constraints: Vec::new(),
            structure: ModuleStructure::default(),
            theory: None,
            output_dir: PathBuf::from("out"),
            workers: Workers::Auto,
        }
    }
}

impl RunConfig {
    /// Parses a config file, resolves referenced CSV paths relative to it,
    /// splices external stressed-path sets into their constraints, and
    /// validates the result.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("cannot parse config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for entry in &mut config.constraints {
            if let Some(csv) = entry.deterministic_set_csv.take() {
                let resolved = if csv.is_absolute() { csv } else { base.join(csv) };
                let set = artifacts::read_sc5_set_csv(&resolved)?;
                if entry.spec.deterministic_set.is_some() {
                    return Err(Error::config(format!(
                        "{}: both an inline deterministic set and a CSV were given",
                        entry.spec.kind
                    )));
                }
                entry.spec.deterministic_set = Some(set);
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Full validation, reporting every violation across every section in
    /// one aggregated error.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        collect("esg", self.esg.validate(), &mut violations);
        collect("portfolio", self.portfolio.validate(), &mut violations);
        collect("nested", self.nested.validate(), &mut violations);
        collect("proxy", self.proxy.validate(), &mut violations);
        let shock_ids: Vec<_> = self.nested.shock_set.iter().map(|s| s.id).collect();
        collect("structure", self.structure.validate(&shock_ids), &mut violations);
        for (i, entry) in self.constraints.iter().enumerate() {
            collect(&format!("constraints[{i}]"), entry.spec.validate(), &mut violations);
        }
        if let Some(theory) = &self.theory {
            collect("theory", theory.validate(), &mut violations);
        }
        // Cross-section agreement: the liability horizon appears in two
        // sections because both the projector and the nested engine size
        // buffers from it; they must describe the same product.
        if self.nested.liability_horizon_h != self.portfolio.liability_horizon_h {
            violations.push(format!(
                "nested.liability_horizon_h ({}) and portfolio.liability_horizon_h ({}) must \
                 agree",
                self.nested.liability_horizon_h, self.portfolio.liability_horizon_h
            ));
        }
        // SC0 reads the year-one cross-section, which every horizon
        // provides, but ratio constraints need SCRs, which need shocks.
        if self.constraints.iter().any(|c| c.spec.kind.uses_ratio())
            && self.nested.shock_set.is_empty()
        {
            violations.push(
                "ratio constraints (sc3/sc4/sc5) need SCR paths, so the nested shock set \
                 cannot be empty"
                    .to_string(),
            );
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violations))
        }
    }

    /// Constraint specs with any external sets already spliced in.
    pub fn constraint_specs(&self) -> Vec<ConstraintSpec> {
        self.constraints.iter().map(|e| e.spec.clone()).collect()
    }

    /// True when any configured constraint is of the given kind.
    pub fn has_constraint(&self, kind: ConstraintKind) -> bool {
        self.constraints.iter().any(|c| c.spec.kind == kind)
    }
}

/// Folds a section's validation result into the aggregate list, prefixing
/// each message with the section name so the offending key is obvious.
fn collect(section: &str, result: Result<()>, violations: &mut Vec<String>) {
    match result {
        Ok(()) => {}
        Err(Error::Config(msgs)) => {
            violations.extend(msgs.into_iter().map(|m| format!("{section}: {m}")));
        }
        Err(other) => violations.push(format!("{section}: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn workers_parse_accepts_counts_and_auto() {
        assert_eq!(Workers::parse("auto").unwrap(), Workers::Auto);
        assert_eq!(Workers::parse("3").unwrap(), Workers::Count(3));
        assert!(Workers::parse("0").is_err());
        assert!(Workers::parse("fast").is_err());
    }

    #[test]
    fn violations_are_aggregated_across_sections() {
        let mut config = RunConfig::default();
        config.portfolio.margin_fee = -1.0;
        config.nested.n_primary = 0;
        config.nested.liability_horizon_h = 7;
        let err = config.validate().unwrap_err();
        let Error::Config(msgs) = err else { panic!("expected a config error") };
        assert!(msgs.iter().any(|m| m.starts_with("portfolio:")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.starts_with("nested:")), "{msgs:?}");
        assert!(
            msgs.iter().any(|m| m.contains("liability_horizon_h")),
            "cross-section check missing: {msgs:?}"
        );
    }

    #[test]
    fn toml_roundtrip_preserves_the_config() {
        let config = RunConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn workers_deserializes_from_both_toml_shapes() {
        let auto: RunConfig = toml::from_str("workers = \"auto\"").unwrap();
        assert_eq!(auto.workers, Workers::Auto);
        let fixed: RunConfig = toml::from_str("workers = 2").unwrap();
        assert_eq!(fixed.workers, Workers::Count(2));
        assert!(toml::from_str::<RunConfig>("workers = 0").is_err());
    }
}
