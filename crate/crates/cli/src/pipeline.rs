//! Stage orchestration. The pipeline is four composable stages —
//! `simulate` → `calibrate` → `solve` → `compare` — each reading only
//! persisted artifacts (plus the config) and writing only new ones, so
//! running the stages separately is byte-for-byte the same as `run`, which
//! simply calls them in order. No stage mutates an artifact an earlier stage
//! wrote.
//!
//! Parallelism: every parallel region in the core is an order-preserving
//! map, so results are numerically identical at any worker count; the
//! `--workers 1` pool is the bit-exactness baseline the tests compare
//! against.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use solvlab_core::error::{Error, Result};
use solvlab_core::esg::RiskFactorPanel;
use solvlab_core::nested::{run_nested, NavScrPaths};
use solvlab_core::proxy::suite::{
    build_lsmc_source, calibrate_cf_suite_from_parts, calibrate_lsmc_suite, evaluate_suite,
    nav_scr_paths_from_values, ProxySuite,
};
use solvlab_core::proxy::{validate, ProxyMethod, ValidationReport};
use solvlab_core::solvency::{
    check_sc0, evaluate_sc5, required_capital, BindingDetail, ConstraintKind, DeltaPanel,
};
use solvlab_core::stdformula::build_scr_paths;
use solvlab_core::theory::{
    efficiency_report, estimate_decomposition_from_samples, verify_speed_of_convergence,
    ConvergenceReport, EfficiencyReport, VarianceDecomposition,
};

use crate::artifacts::{self, RunMeta};
use crate::config::{RunConfig, Workers};

// ── Worker pool ──────────────────────────────────────────────────────────────

/// Runs a closure inside a dedicated pool of the configured size; `auto`
/// uses the process-default pool (one thread per logical CPU).
pub fn with_pool<T: Send>(workers: Workers, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers.thread_count() {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("cannot build a {n}-thread pool: {e}")))?
            .install(f),
    }
}

// ── Capital artifact ─────────────────────────────────────────────────────────

/// Required capital for one (constraint, source) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapitalRow {
    pub kind: ConstraintKind,
    pub p: f64,
    pub alpha: f64,
    /// What produced the NAV/SCR paths: `nested`, a proxy method label, or
    /// `deterministic_set` for SC5.
    pub source: String,
    pub capital_k: f64,
    pub achieved_probability: f64,
    pub binding_detail: BindingDetail,
}

/// The regulatory one-year check at the root node, per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sc0Row {
    pub source: String,
    pub holds: bool,
    pub scr0: f64,
}

/// Everything `solve` persists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CapitalArtifact {
    pub rows: Vec<CapitalRow>,
    pub sc0: Vec<Sc0Row>,
}

// ── Report ───────────────────────────────────────────────────────────────────

/// Distribution agreement between one proxy and the nested reference at one
/// date, on the standard quantile levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub method: String,
    pub t: usize,
    pub quantile_levels: Vec<f64>,
    pub reference_quantiles: Vec<f64>,
    pub proxy_quantiles: Vec<f64>,
    pub relative_differences: Vec<f64>,
}

/// Shape summary of one calibrated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub method: String,
    pub t: usize,
    /// `None` for the central model.
    pub shock: Option<String>,
    pub terms: Vec<String>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
}

/// One constraint's capital across sources, with each proxy's relative
/// difference against the nested reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintComparison {
    pub kind: ConstraintKind,
    pub p: f64,
    pub alpha: f64,
    pub reference_k: f64,
    /// (source, K, relative difference vs reference).
    pub proxy_ks: Vec<(String, f64, f64)>,
}

/// Year-one variance decomposition and the proxy-efficiency summary built
/// from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySection {
    pub decomposition: VarianceDecomposition,
    pub report: EfficiencyReport,
}

/// The assembled comparison report. Timing deliberately lives in its own
/// artifact so this file is byte-stable across reruns of the same config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub nav0: f64,
    pub constraint_comparisons: Vec<ConstraintComparison>,
    pub sc0: Vec<Sc0Row>,
    pub nav_tables: Vec<QuantileTable>,
    pub ratio_tables: Vec<QuantileTable>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub efficiency: Option<EfficiencySection>,
}

// ── Stages ───────────────────────────────────────────────────────────────────

/// Nested simulation: primaries, per-node NAV estimates under every shock,
/// SCR aggregation, and the artifacts every later stage consumes.
pub fn simulate_stage(config: &RunConfig, out: &Path) -> Result<()> {
    let start = Instant::now();
    let seed = config.nested.seed;
    let run = run_nested(&config.nested, &config.esg, &config.portfolio)?;
    let mut paths = run.paths;
    if !config.nested.shock_set.is_empty() {
        build_scr_paths(&mut paths, &config.structure)?;
    }
    let deltas = DeltaPanel::from_primaries(&run.primaries, config.nested.horizon_t)?;

    artifacts::write_panel_csv(&out.join(artifacts::PANEL_CSV), seed, &run.panel)?;
    artifacts::write_paths_csv(&out.join(artifacts::PATHS_CSV), seed, &paths)?;
    artifacts::write_deltas_csv(&out.join(artifacts::DELTAS_CSV), seed, &deltas)?;
    if let Some(retained) = &run.retained_npvs {
        // Year-one cross-section only: it is what the variance decomposition
        // reads, and the full panel would dwarf every other artifact.
        let horizon = paths.horizon_t();
        let npvs_t1: Vec<Vec<f64>> =
            (0..paths.n_primary()).map(|n| retained[n * horizon].clone()).collect();
        artifacts::write_npvs_csv(&out.join(artifacts::NPVS_T1_CSV), seed, &npvs_t1)?;
    }
    artifacts::write_meta(
        out,
        &RunMeta {
            seed,
            nav0: run.nav0,
            nav0_npv_variance: run.nav0_npv_variance,
            n_primary: config.nested.n_primary,
            n_secondary: config.nested.n_secondary,
            horizon_t: config.nested.horizon_t,
        },
    )?;
    artifacts::append_timing(out, "simulate", start.elapsed().as_secs_f64())
}

/// Proxy calibration: curve fitting on the persisted nested run, LSMC on a
/// dedicated fresh panel regenerated deterministically from the seed.
pub fn calibrate_stage(config: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let start = Instant::now();
    let seed = config.nested.seed;
    let (_, panel) = artifacts::read_panel_csv(&input.join(artifacts::PANEL_CSV))?;
    let (_, paths) = artifacts::read_paths_csv(&input.join(artifacts::PATHS_CSV))?;

    let cf = calibrate_cf_suite_from_parts(&config.proxy, &panel, &paths)?;
    artifacts::write_json(&out.join(artifacts::PROXY_CF_JSON), seed, &cf)?;

    let source =
        build_lsmc_source(&config.esg, &config.portfolio, &config.nested, config.proxy.lsmc_n_primary)?;
    let lsmc = calibrate_lsmc_suite(&config.proxy, &source)?;
    artifacts::write_json(&out.join(artifacts::PROXY_LSMC_JSON), seed, &lsmc)?;

    artifacts::append_timing(out, "calibrate", start.elapsed().as_secs_f64())
}

/// Loads a persisted proxy suite if its artifact exists.
fn load_suite(dir: &Path, name: &str) -> Result<Option<ProxySuite>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let (_, suite) = artifacts::read_json::<ProxySuite>(&path)?;
    Ok(Some(suite))
}

/// Evaluates a proxy suite into joint NAV/SCR paths on the reference panel.
fn suite_paths(
    config: &RunConfig,
    suite: &ProxySuite,
    panel: &RiskFactorPanel,
) -> Result<NavScrPaths> {
    let values = evaluate_suite(suite, panel)?;
    let mut paths = nav_scr_paths_from_values(&values, &suite.shock_ids)?;
    if !suite.shock_ids.is_empty() {
        build_scr_paths(&mut paths, &config.structure)?;
    }
    Ok(paths)
}

/// Required capital for every configured constraint on the nested reference
/// paths and on each calibrated proxy's paths.
pub fn solve_stage(config: &RunConfig, input: &Path, out: &Path) -> Result<CapitalArtifact> {
    let start = Instant::now();
    let seed = config.nested.seed;
    let (_, reference) = artifacts::read_paths_csv(&input.join(artifacts::PATHS_CSV))?;
    let (_, deltas) = artifacts::read_deltas_csv(&input.join(artifacts::DELTAS_CSV))?;
    let meta = artifacts::read_meta(input)?;

    let mut sources: Vec<(String, NavScrPaths)> = vec![("nested".to_string(), reference)];
    let suites = [
        load_suite(input, artifacts::PROXY_CF_JSON)?,
        load_suite(input, artifacts::PROXY_LSMC_JSON)?,
    ];
    if suites.iter().any(Option::is_some) {
        let (_, panel) = artifacts::read_panel_csv(&input.join(artifacts::PANEL_CSV))?;
        for suite in suites.into_iter().flatten() {
            let label = suite.method.label().to_string();
            sources.push((label, suite_paths(config, &suite, &panel)?));
        }
    }

    let mut artifact = CapitalArtifact::default();
    for spec in config.constraint_specs() {
        match spec.kind {
            ConstraintKind::Sc0 => {
                for (label, paths) in &sources {
                    let nav1: Vec<f64> =
                        (0..paths.n_primary()).map(|n| paths.nav(n, 1)).collect();
                    let delta1: Vec<f64> =
                        (0..paths.n_primary()).map(|n| deltas.delta(n, 1)).collect();
                    let (holds, scr0) = check_sc0(&nav1, &delta1, meta.nav0)?;
                    artifact.sc0.push(Sc0Row { source: label.clone(), holds, scr0 });
                }
            }
            ConstraintKind::Sc5 => {
                // Deterministic sets carry their own NAV/SCR paths, so the
                // outcome is source-independent: evaluate once.
                let set = spec.deterministic_set.as_deref().ok_or_else(|| {
                    Error::config("sc5 needs a deterministic stressed-path set".to_string())
                })?;
                let outcome = evaluate_sc5(set, spec.alpha)?;
                artifact.rows.push(CapitalRow {
                    kind: spec.kind,
                    p: spec.p,
                    alpha: spec.alpha,
                    source: "deterministic_set".to_string(),
                    capital_k: outcome.result.capital_k,
                    achieved_probability: outcome.result.achieved_probability,
                    binding_detail: outcome.result.binding_detail,
                });
            }
            _ => {
                for (label, paths) in &sources {
                    let result = required_capital(&spec, paths, &deltas)
                        .map_err(|e| e.with_context(format!("{} on {label}", spec.kind)))?;
                    artifact.rows.push(CapitalRow {
                        kind: spec.kind,
                        p: spec.p,
                        alpha: spec.alpha,
                        source: label.clone(),
                        capital_k: result.capital_k,
                        achieved_probability: result.achieved_probability,
                        binding_detail: result.binding_detail,
                    });
                }
            }
        }
    }
    artifacts::write_json(&out.join(artifacts::CAPITAL_JSON), seed, &artifact)?;
    artifacts::append_timing(out, "solve", start.elapsed().as_secs_f64())?;
    Ok(artifact)
}

/// Relative difference with the same zero-guard the validation reports use.
fn relative_difference(value: f64, reference: f64) -> f64 {
    let diff = value - reference;
    if diff == 0.0 {
        0.0
    } else {
        diff / reference.abs()
    }
}

/// Turns a validation report into the report table row for (method, t).
fn quantile_table(method: &str, t: usize, report: &ValidationReport) -> QuantileTable {
    QuantileTable {
        method: method.to_string(),
        t,
        quantile_levels: report.quantile_levels.clone(),
        reference_quantiles: report.reference_quantiles.clone(),
        proxy_quantiles: report.proxy_quantiles.clone(),
        relative_differences: report.relative_differences.clone(),
    }
}

fn diagnostics_rows(suite: &ProxySuite) -> Vec<DiagnosticsRow> {
    let mut rows = Vec::new();
    for t in 1..=suite.horizon_t() {
        let central = &suite.central[t - 1];
        rows.push(DiagnosticsRow {
            method: suite.method.label().to_string(),
            t,
            shock: None,
            terms: central.terms.iter().map(|term| term.label()).collect(),
            r_squared: central.diagnostics.r_squared,
            adjusted_r_squared: central.diagnostics.adjusted_r_squared,
        });
        for (s, model) in suite.shocked[t - 1].iter().enumerate() {
            rows.push(DiagnosticsRow {
                method: suite.method.label().to_string(),
                t,
                shock: Some(suite.shock_ids[s].as_str().to_string()),
                terms: model.terms.iter().map(|term| term.label()).collect(),
                r_squared: model.diagnostics.r_squared,
                adjusted_r_squared: model.diagnostics.adjusted_r_squared,
            });
        }
    }
    rows
}

/// Report assembly: distribution tables per (method, date), QQ scatters,
/// per-constraint capital comparisons, proxy diagnostics, and the year-one
/// efficiency decomposition when the run retained its NPVs.
pub fn compare_stage(config: &RunConfig, input: &Path, out: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let seed = config.nested.seed;
    let (_, panel) = artifacts::read_panel_csv(&input.join(artifacts::PANEL_CSV))?;
    let (_, reference) = artifacts::read_paths_csv(&input.join(artifacts::PATHS_CSV))?;
    let meta = artifacts::read_meta(input)?;
    let capital_path = input.join(artifacts::CAPITAL_JSON);
    let capital = if capital_path.exists() {
        artifacts::read_json::<CapitalArtifact>(&capital_path)?.1
    } else {
        CapitalArtifact::default()
    };

    let mut nav_tables = Vec::new();
    let mut ratio_tables = Vec::new();
    let mut diagnostics = Vec::new();
    let mut cf_terms_t1 = None;
    for name in [artifacts::PROXY_CF_JSON, artifacts::PROXY_LSMC_JSON] {
        let Some(suite) = load_suite(input, name)? else { continue };
        let label = suite.method.label().to_string();
        if suite.method == ProxyMethod::CurveFitting {
            cf_terms_t1 = Some(suite.central[0].terms.clone());
        }
        diagnostics.extend(diagnostics_rows(&suite));
        let proxy_paths = suite_paths(config, &suite, &panel)?;
        for t in 1..=reference.horizon_t().min(proxy_paths.horizon_t()) {
            let n = reference.n_primary();
            let proxy_nav: Vec<f64> = (0..n).map(|i| proxy_paths.nav(i, t)).collect();
            let reference_nav: Vec<f64> = (0..n).map(|i| reference.nav(i, t)).collect();
            let report = validate(&proxy_nav, &reference_nav)?;
            artifacts::write_qq_csv(
                &out.join(artifacts::qq_csv_name(&label, t)),
                seed,
                &report.qq,
            )?;
            nav_tables.push(quantile_table(&label, t, &report));
            if reference.scr_filled() && proxy_paths.scr_filled() {
                let proxy_ratio: Vec<f64> =
                    (0..n).map(|i| proxy_paths.solvency_ratio(i, t)).collect();
                let reference_ratio: Vec<f64> =
                    (0..n).map(|i| reference.solvency_ratio(i, t)).collect();
                let report = validate(&proxy_ratio, &reference_ratio)?;
                ratio_tables.push(quantile_table(&label, t, &report));
            }
        }
    }

    // Group capital rows by constraint; the nested row is the reference.
    let mut constraint_comparisons: Vec<ConstraintComparison> = Vec::new();
    for spec in config.constraint_specs() {
        if matches!(spec.kind, ConstraintKind::Sc0) {
            continue;
        }
        let matching: Vec<&CapitalRow> = capital
            .rows
            .iter()
            .filter(|r| r.kind == spec.kind && r.p == spec.p && r.alpha == spec.alpha)
            .collect();
        let Some(reference_row) = matching
            .iter()
            .find(|r| r.source == "nested" || r.source == "deterministic_set")
        else {
            continue;
        };
        let reference_k = reference_row.capital_k;
        let proxy_ks = matching
            .iter()
            .filter(|r| r.source != reference_row.source)
            .map(|r| (r.source.clone(), r.capital_k, relative_difference(r.capital_k, reference_k)))
            .collect();
        constraint_comparisons.push(ConstraintComparison {
            kind: spec.kind,
            p: spec.p,
            alpha: spec.alpha,
            reference_k,
            proxy_ks,
        });
    }

    // Year-one efficiency: needs the retained NPVs and the curve-fitting
    // term set; absent either, the section is simply omitted.
    let npvs_path = input.join(artifacts::NPVS_T1_CSV);
    let efficiency = match (&cf_terms_t1, npvs_path.exists()) {
        (Some(terms), true) => {
            let (_, npvs) = artifacts::read_npvs_csv(&npvs_path)?;
            let n = reference.n_primary();
            let navhat: Vec<f64> = (0..n).map(|i| reference.nav(i, 1)).collect();
            let decomposition =
                estimate_decomposition_from_samples(&panel, terms, &navhat, &npvs)?;
            let report = efficiency_report(
                config.proxy.cf_calibration_size,
                meta.n_secondary,
                decomposition.w_var,
                decomposition.npv_var,
            )?;
            Some(EfficiencySection { decomposition, report })
        }
        _ => None,
    };

    let report = RunReport {
        seed,
        nav0: meta.nav0,
        constraint_comparisons,
        sc0: capital.sc0.clone(),
        nav_tables,
        ratio_tables,
        diagnostics,
        efficiency,
    };
    artifacts::write_json(&out.join(artifacts::REPORT_JSON), seed, &report)?;
    artifacts::append_timing(out, "compare", start.elapsed().as_secs_f64())?;
    Ok(report)
}

/// The whole pipeline: the four stages in order, each consuming what the
/// previous one persisted. Composability is by construction — `run` and the
/// stage subcommands share these exact functions.
pub fn run_pipeline(config: &RunConfig, out: &Path) -> Result<RunReport> {
    simulate_stage(config, out)?;
    calibrate_stage(config, out, out)?;
    solve_stage(config, out, out)?;
    compare_stage(config, out, out)
}

/// The synthetic convergence experiment; independent of the simulation
/// stages.
pub fn theory_stage(config: &RunConfig, out: &Path) -> Result<ConvergenceReport> {
    let start = Instant::now();
    let Some(theory) = &config.theory else {
        return Err(Error::config(
            "the config has no [theory] section; the theory subcommand needs one".to_string(),
        ));
    };
    let report = verify_speed_of_convergence(theory)?;
    artifacts::write_json(&out.join(artifacts::CONVERGENCE_JSON), theory.seed, &report)?;
    artifacts::append_timing(out, "theory", start.elapsed().as_secs_f64())?;
    Ok(report)
}

// ── Plain-text rendering ─────────────────────────────────────────────────────

/// Human-readable digest of a run report for terminal output. The JSON
/// artifact is the canonical record; this is a courtesy view.
pub fn render_report(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("seed {}  nav0 {:.6}\n", report.seed, report.nav0));
    for row in &report.sc0 {
        out.push_str(&format!(
            "sc0 [{}]: holds = {}, scr0 = {:.6}\n",
            row.source, row.holds, row.scr0
        ));
    }
    if !report.constraint_comparisons.is_empty() {
        out.push_str("\nrequired capital (K, relative difference vs reference)\n");
        for c in &report.constraint_comparisons {
            out.push_str(&format!(
                "  {} p={} alpha={}: reference K = {:.6}\n",
                c.kind, c.p, c.alpha, c.reference_k
            ));
            for (source, k, rel) in &c.proxy_ks {
                out.push_str(&format!("    {source}: K = {k:.6}  rel = {rel:+.4}\n"));
            }
        }
    }
    if !report.nav_tables.is_empty() {
        out.push_str("\nNAV quantile agreement (proxy vs nested)\n");
        for table in &report.nav_tables {
            out.push_str(&format!("  {} t={}:", table.method, table.t));
            for (q, rel) in table.quantile_levels.iter().zip(&table.relative_differences) {
                out.push_str(&format!("  q{:.0}% {:+.4}", q * 100.0, rel));
            }
            out.push('\n');
        }
    }
    if !report.ratio_tables.is_empty() {
        out.push_str("\nsolvency-ratio quantile agreement (proxy vs nested)\n");
        for table in &report.ratio_tables {
            out.push_str(&format!("  {} t={}:", table.method, table.t));
            for (q, rel) in table.quantile_levels.iter().zip(&table.relative_differences) {
                out.push_str(&format!("  q{:.0}% {:+.4}", q * 100.0, rel));
            }
            out.push('\n');
        }
    }
    if let Some(eff) = &report.efficiency {
        out.push_str(&format!(
            "\nefficiency at t=1: w^2 = {:.6}, npv^2 = {:.6}, eta = {:.4}, \
             equivalent LSMC size for N' = {} at P = {}: {}\n",
            eff.decomposition.w_var,
            eff.decomposition.npv_var,
            eff.report.eta,
            eff.report.cf_n,
            eff.report.p,
            eff.report.equivalent_lsmc_n
        ));
    }
    out
}

/// Terminal digest of the convergence experiment.
pub fn render_convergence(report: &ConvergenceReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "replications {}  equivalent LSMC size {}\n",
        report.replications, report.equivalent_lsmc_n
    ));
    out.push_str("term: cf variance / lsmc variance = ratio\n");
    for i in 0..report.term_labels.len() {
        out.push_str(&format!(
            "  {}: {:.3e} / {:.3e} = {:.3}\n",
            report.term_labels[i],
            report.cf_variances[i],
            report.lsmc_variances[i],
            report.variance_ratios[i]
        ));
    }
    out
}
