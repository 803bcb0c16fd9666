//! Artifact persistence. Every number the pipeline produces lands in a file
//! under the run's output directory: CSV for path/panel arrays (one row per
//! index tuple, shortest round-trip decimal so re-reading reproduces the
//! exact f64 bit pattern), JSON for models, capital results, and reports.
//!
//! Conventions shared by every artifact:
//! * the first line is a provenance comment `# seed=<seed>`, so any file can
//!   be traced back to the stream family that produced it;
//! * scenario and date indices are 1-based externally (n, t, u, j);
//! * timing lives in its own file, `timing.json`, keeping every other
//!   artifact byte-identical across reruns of the same config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use solvlab_core::error::{Error, Result};
use solvlab_core::esg::{Risk, RiskFactorPanel, ShockId};
use solvlab_core::nested::NavScrPaths;
use solvlab_core::solvency::{DeltaPanel, StressedPath};

// ── Canonical file names ─────────────────────────────────────────────────────

pub const PANEL_CSV: &str = "panel.csv";
pub const PATHS_CSV: &str = "paths_nested.csv";
pub const DELTAS_CSV: &str = "deltas.csv";
pub const NPVS_T1_CSV: &str = "npvs_t1.csv";
pub const META_JSON: &str = "run_meta.json";
pub const PROXY_CF_JSON: &str = "proxy_cf.json";
pub const PROXY_LSMC_JSON: &str = "proxy_lsmc.json";
pub const CAPITAL_JSON: &str = "capital_requirements.json";
pub const REPORT_JSON: &str = "run_report.json";
pub const TIMING_JSON: &str = "timing.json";
pub const CONVERGENCE_JSON: &str = "convergence_report.json";

/// QQ scatter for one proxy method at one date.
pub fn qq_csv_name(method_label: &str, t: usize) -> String {
    format!("qq_{method_label}_t{t}.csv")
}

// ── Scalars ──────────────────────────────────────────────────────────────────

/// Shortest decimal that parses back to the same f64 (std's Display
/// guarantee), so CSV round-trips are bit-exact. NaN and infinities map to
/// the std spellings, which `str::parse::<f64>` accepts back.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(s: &str, file: &Path, line_no: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        Error::Shape(format!("{}:{line_no}: not a number: {s:?}", file.display()))
    })
}

fn parse_usize(s: &str, file: &Path, line_no: usize) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| {
        Error::Shape(format!("{}:{line_no}: not an index: {s:?}", file.display()))
    })
}

// ── Generic helpers ──────────────────────────────────────────────────────────

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::config(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))
}

/// Splits a CSV artifact into (seed-if-present, header, data lines).
/// Comment lines (`#`) beyond the provenance one are tolerated and skipped.
fn split_csv(text: &str, path: &Path) -> Result<(Option<u64>, Vec<String>, Vec<(usize, String)>)> {
    let mut seed = None;
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("seed=") {
                seed = value.trim().parse::<u64>().ok();
            }
            continue;
        }
        match &header {
            None => {
                header = Some(line.split(',').map(|c| c.trim().to_string()).collect());
            }
            Some(_) => rows.push((i + 1, line.to_string())),
        }
    }
    let header = header
        .ok_or_else(|| Error::Shape(format!("{}: no header row", path.display())))?;
    Ok((seed, header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, seed: u64, value: &T) -> Result<()> {
    // JSON has no comment syntax, so provenance rides in a wrapper object;
    // pretty-printing keeps the artifact diff-able.
    let wrapper = JsonArtifact { seed, value };
    let text = serde_json::to_string_pretty(&wrapper)
        .map_err(|e| Error::Invariant(format!("cannot serialize {}: {e}", path.display())))?;
    write_file(path, &format!("{text}\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(u64, T)> {
    let text = read_file(path)?;
    let wrapper: JsonArtifact<T> = serde_json::from_str(&text)
        .map_err(|e| Error::Shape(format!("cannot parse {}: {e}", path.display())))?;
    Ok((wrapper.seed, wrapper.value))
}

#[derive(Serialize, Deserialize)]
struct JsonArtifact<T> {
    seed: u64,
    value: T,
}

// ── Factor panel ─────────────────────────────────────────────────────────────

/// One row per (scenario, period): the two elementary factors that drive a
/// primary path, exactly as the proxy regressions consume them.
pub fn write_panel_csv(path: &Path, seed: u64, panel: &RiskFactorPanel) -> Result<()> {
    let mut out = String::with_capacity(panel.scenarios() * panel.periods() * 32);
    out.push_str(&format!("# seed={seed}\n"));
    out.push_str("n,u,stock,rates\n");
    for n in 0..panel.scenarios() {
        for u in 1..=panel.periods() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                n + 1,
                u,
                fmt(panel.factor(n, u, Risk::Stock)),
                fmt(panel.factor(n, u, Risk::Rates))
            ));
        }
    }
    write_file(path, &out)
}

pub fn read_panel_csv(path: &Path) -> Result<(u64, RiskFactorPanel)> {
    let text = read_file(path)?;
    let (seed, header, rows) = split_csv(&text, path)?;
    if header != ["n", "u", "stock", "rates"] {
        return Err(Error::Shape(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut scenarios = 0usize;
    let mut periods = 0usize;
    let mut cells = Vec::with_capacity(rows.len());
    for (line_no, row) in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Shape(format!(
                "{}:{line_no}: expected 4 columns, found {}",
                path.display(),
                cols.len()
            )));
        }
        let n = parse_usize(cols[0], path, *line_no)?;
        let u = parse_usize(cols[1], path, *line_no)?;
        if n == 0 || u == 0 {
            return Err(Error::Shape(format!(
                "{}:{line_no}: scenario and period indices are 1-based",
                path.display()
            )));
        }
        scenarios = scenarios.max(n);
        periods = periods.max(u);
        let stock = parse_f64(cols[2], path, *line_no)?;
        let rates = parse_f64(cols[3], path, *line_no)?;
        cells.push((n - 1, u - 1, stock, rates));
    }
    if cells.len() != scenarios * periods {
        return Err(Error::Shape(format!(
            "{}: {} rows for {} scenarios × {} periods",
            path.display(),
            cells.len(),
            scenarios,
            periods
        )));
    }
    // Scenario-major, factors interleaved per period: (stock, rates).
    let mut data = vec![f64::NAN; scenarios * periods * 2];
    for (n, u, stock, rates) in cells {
        data[(n * periods + u) * 2] = stock;
        data[(n * periods + u) * 2 + 1] = rates;
    }
    let panel = RiskFactorPanel::from_factors(scenarios, periods, data)?;
    Ok((seed.unwrap_or_default(), panel))
}

// ── Joint NAV/SCR paths ──────────────────────────────────────────────────────

/// One row per (scenario, date) with the central estimate, capital columns,
/// and one shocked-estimate column per configured shock. Unfilled SCR slots
/// persist as NaN and read back as unfilled.
pub fn write_paths_csv(path: &Path, seed: u64, paths: &NavScrPaths) -> Result<()> {
    let shocks = paths.shock_ids();
    let mut out = String::with_capacity(paths.n_primary() * paths.horizon_t() * 64);
    out.push_str(&format!("# seed={seed}\n"));
    out.push_str("n,t,nav,scr,solvency_ratio");
    for id in shocks {
        out.push_str(&format!(",nav_{}", id.as_str()));
    }
    out.push('\n');
    for n in 0..paths.n_primary() {
        for t in 1..=paths.horizon_t() {
            let (scr, ratio) = if paths.scr_filled() {
                (paths.scr(n, t), paths.solvency_ratio(n, t))
            } else {
                (f64::NAN, f64::NAN)
            };
            out.push_str(&format!(
                "{},{},{},{},{}",
                n + 1,
                t,
                fmt(paths.nav(n, t)),
                fmt(scr),
                fmt(ratio)
            ));
            for s in 0..shocks.len() {
                out.push_str(&format!(",{}", fmt(paths.nav_shocked(n, t, s))));
            }
            out.push('\n');
        }
    }
    write_file(path, &out)
}

pub fn read_paths_csv(path: &Path) -> Result<(u64, NavScrPaths)> {
    let text = read_file(path)?;
    let (seed, header, rows) = split_csv(&text, path)?;
    if header.len() < 5 || header[..5] != ["n", "t", "nav", "scr", "solvency_ratio"] {
        return Err(Error::Shape(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut shock_ids = Vec::new();
    for col in &header[5..] {
        let id = col.strip_prefix("nav_").ok_or_else(|| {
            Error::Shape(format!("{}: unexpected shock column {col:?}", path.display()))
        })?;
        shock_ids.push(ShockId::parse(id)?);
    }
    let mut n_max = 0usize;
    let mut t_max = 0usize;
    let mut cells = Vec::with_capacity(rows.len());
    for (line_no, row) in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 5 + shock_ids.len() {
            return Err(Error::Shape(format!(
                "{}:{line_no}: expected {} columns, found {}",
                path.display(),
                5 + shock_ids.len(),
                cols.len()
            )));
        }
        let n = parse_usize(cols[0], path, *line_no)?;
        let t = parse_usize(cols[1], path, *line_no)?;
        if n == 0 || t == 0 {
            return Err(Error::Shape(format!(
                "{}:{line_no}: scenario and date indices are 1-based",
                path.display()
            )));
        }
        n_max = n_max.max(n);
        t_max = t_max.max(t);
        let mut values = Vec::with_capacity(3 + shock_ids.len());
        for col in &cols[2..] {
            values.push(parse_f64(col, path, *line_no)?);
        }
        cells.push((n - 1, t, values));
    }
    if cells.len() != n_max * t_max {
        return Err(Error::Shape(format!(
            "{}: {} rows for {} scenarios × {} dates",
            path.display(),
            cells.len(),
            n_max,
            t_max
        )));
    }
    let mut paths = NavScrPaths::new(n_max, t_max, shock_ids.clone());
    let any_scr = cells.iter().any(|(_, _, v)| !v[1].is_nan());
    for (n, t, values) in &cells {
        paths.set_nav(*n, *t, values[0]);
        for s in 0..shock_ids.len() {
            paths.set_nav_shocked(*n, *t, s, values[3 + s]);
        }
    }
    if any_scr {
        for (n, t, values) in &cells {
            paths.set_scr(*n, *t, values[1], values[2]);
        }
        paths.mark_scr_filled();
    }
    Ok((seed.unwrap_or_default(), paths))
}

// ── Discount factors ─────────────────────────────────────────────────────────

pub fn write_deltas_csv(path: &Path, seed: u64, deltas: &DeltaPanel) -> Result<()> {
    let mut out = String::with_capacity(deltas.n_paths() * deltas.horizon_t() * 32);
    out.push_str(&format!("# seed={seed}\n"));
    out.push_str("n,t,delta\n");
    for n in 0..deltas.n_paths() {
        for t in 1..=deltas.horizon_t() {
            out.push_str(&format!("{},{},{}\n", n + 1, t, fmt(deltas.delta(n, t))));
        }
    }
    write_file(path, &out)
}

pub fn read_deltas_csv(path: &Path) -> Result<(u64, DeltaPanel)> {
    let text = read_file(path)?;
    let (seed, header, rows) = split_csv(&text, path)?;
    if header != ["n", "t", "delta"] {
        return Err(Error::Shape(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut n_max = 0usize;
    let mut t_max = 0usize;
    let mut cells = Vec::with_capacity(rows.len());
    for (line_no, row) in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Shape(format!(
                "{}:{line_no}: expected 3 columns, found {}",
                path.display(),
                cols.len()
            )));
        }
        let n = parse_usize(cols[0], path, *line_no)?;
        let t = parse_usize(cols[1], path, *line_no)?;
        if n == 0 || t == 0 {
            return Err(Error::Shape(format!(
                "{}:{line_no}: path and date indices are 1-based",
                path.display()
            )));
        }
        n_max = n_max.max(n);
        t_max = t_max.max(t);
        cells.push((n - 1, t - 1, parse_f64(cols[2], path, *line_no)?));
    }
    if cells.len() != n_max * t_max {
        return Err(Error::Shape(format!(
            "{}: {} rows for {} paths × {} dates",
            path.display(),
            cells.len(),
            n_max,
            t_max
        )));
    }
    let mut data = vec![f64::NAN; n_max * t_max];
    for (n, t, d) in cells {
        data[n * t_max + t] = d;
    }
    let deltas = DeltaPanel::new(n_max, t_max, data)?;
    Ok((seed.unwrap_or_default(), deltas))
}

// ── Retained year-one NPVs ───────────────────────────────────────────────────

/// One row per (scenario, secondary): the single-secondary NPVs behind the
/// year-one NAV estimates, needed by the variance decomposition.
pub fn write_npvs_csv(path: &Path, seed: u64, npvs: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# seed={seed}\n"));
    out.push_str("n,j,npv\n");
    for (n, row) in npvs.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", n + 1, j + 1, fmt(*v)));
        }
    }
    write_file(path, &out)
}

pub fn read_npvs_csv(path: &Path) -> Result<(u64, Vec<Vec<f64>>)> {
    let text = read_file(path)?;
    let (seed, header, rows) = split_csv(&text, path)?;
    if header != ["n", "j", "npv"] {
        return Err(Error::Shape(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut n_max = 0usize;
    let mut j_max = 0usize;
    let mut cells = Vec::with_capacity(rows.len());
    for (line_no, row) in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Shape(format!(
                "{}:{line_no}: expected 3 columns, found {}",
                path.display(),
                cols.len()
            )));
        }
        let n = parse_usize(cols[0], path, *line_no)?;
        let j = parse_usize(cols[1], path, *line_no)?;
        if n == 0 || j == 0 {
            return Err(Error::Shape(format!(
                "{}:{line_no}: scenario and secondary indices are 1-based",
                path.display()
            )));
        }
        n_max = n_max.max(n);
        j_max = j_max.max(j);
        cells.push((n - 1, j - 1, parse_f64(cols[2], path, *line_no)?));
    }
    if cells.len() != n_max * j_max {
        return Err(Error::Shape(format!(
            "{}: {} rows for {} scenarios × {} secondaries",
            path.display(),
            cells.len(),
            n_max,
            j_max
        )));
    }
    let mut npvs = vec![vec![f64::NAN; j_max]; n_max];
    for (n, j, v) in cells {
        npvs[n][j] = v;
    }
    Ok((seed.unwrap_or_default(), npvs))
}

// ── SC5 stressed sets ────────────────────────────────────────────────────────

/// Reads a deterministic stressed-path set: one row per (path j, date t),
/// j and t 1-based and contiguous, every path covering the same dates.
pub fn read_sc5_set_csv(path: &Path) -> Result<Vec<StressedPath>> {
    let text = read_file(path)?;
    let (_, header, rows) = split_csv(&text, path)?;
    if header != ["j", "t", "nav", "scr", "delta"] {
        return Err(Error::Shape(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut j_max = 0usize;
    let mut t_max = 0usize;
    let mut cells = Vec::with_capacity(rows.len());
    for (line_no, row) in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Shape(format!(
                "{}:{line_no}: expected 5 columns, found {}",
                path.display(),
                cols.len()
            )));
        }
        let j = parse_usize(cols[0], path, *line_no)?;
        let t = parse_usize(cols[1], path, *line_no)?;
        if j == 0 || t == 0 {
            return Err(Error::Shape(format!(
                "{}:{line_no}: path and date indices are 1-based",
                path.display()
            )));
        }
        j_max = j_max.max(j);
        t_max = t_max.max(t);
        cells.push((
            j - 1,
            t - 1,
            parse_f64(cols[2], path, *line_no)?,
            parse_f64(cols[3], path, *line_no)?,
            parse_f64(cols[4], path, *line_no)?,
        ));
    }
    if cells.len() != j_max * t_max {
        return Err(Error::Shape(format!(
            "{}: {} rows for {} paths × {} dates",
            path.display(),
            cells.len(),
            j_max,
            t_max
        )));
    }
    let mut set = vec![
        StressedPath {
            nav: vec![f64::NAN; t_max],
            scr: vec![f64::NAN; t_max],
            delta: vec![f64::NAN; t_max],
        };
        j_max
    ];
    for (j, t, nav, scr, delta) in cells {
        set[j].nav[t] = nav;
        set[j].scr[t] = scr;
        set[j].delta[t] = delta;
    }
    Ok(set)
}

// ── QQ scatter ───────────────────────────────────────────────────────────────

/// Sorted (reference, proxy) pairs, one per scenario, for external plotting.
pub fn write_qq_csv(path: &Path, seed: u64, qq: &[(f64, f64)]) -> Result<()> {
    let mut out = String::with_capacity(qq.len() * 32);
    out.push_str(&format!("# seed={seed}\n"));
    out.push_str("reference_quantile,proxy_quantile\n");
    for (r, p) in qq {
        out.push_str(&format!("{},{}\n", fmt(*r), fmt(*p)));
    }
    write_file(path, &out)
}

// ── Run metadata ─────────────────────────────────────────────────────────────

/// Root-node facts every later stage needs without re-simulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub nav0: f64,
    pub nav0_npv_variance: f64,
    pub n_primary: usize,
    pub n_secondary: usize,
    pub horizon_t: usize,
}

pub fn write_meta(dir: &Path, meta: &RunMeta) -> Result<()> {
    write_json(&dir.join(META_JSON), meta.seed, meta)
}

pub fn read_meta(dir: &Path) -> Result<RunMeta> {
    let (_, meta) = read_json::<RunMeta>(&dir.join(META_JSON))?;
    Ok(meta)
}

/// Wall-clock accounting, deliberately quarantined in its own artifact so
/// everything else is byte-stable across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    /// (stage label, seconds) in execution order.
    pub stages: Vec<(String, f64)>,
}

pub fn append_timing(dir: &Path, stage: &str, seconds: f64) -> Result<()> {
    let path = dir.join(TIMING_JSON);
    let mut timing = if path.exists() {
        read_json::<Timing>(&path).map(|(_, t)| t).unwrap_or_default()
    } else {
        Timing::default()
    };
    timing.stages.push((stage.to_string(), seconds));
    write_json(&path, 0, &timing)
}

/// Joins an output directory with a canonical artifact name.
pub fn artifact_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use solvlab_core::esg::ShockId;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().expect("temp dir")
    }

    #[test]
    fn panel_csv_roundtrip_is_bit_exact() {
        let dir = tmp();
        let path = dir.path().join(PANEL_CSV);
        // Awkward values: subnormal-ish, negative, many digits.
        let data = vec![
            0.1,
            -2.000000000000004,
            1e-300,
            3.141592653589793,
            -0.3333333333333333,
            7.0,
            0.49999999999999994,
            -1e16,
        ];
        let panel = RiskFactorPanel::from_factors(2, 2, data).unwrap();
        write_panel_csv(&path, 99, &panel).unwrap();
        let (seed, back) = read_panel_csv(&path).unwrap();
        assert_eq!(seed, 99);
        for n in 0..2 {
            for u in 1..=2 {
                for risk in [Risk::Stock, Risk::Rates] {
                    assert!(
                        panel.factor(n, u, risk).to_bits() == back.factor(n, u, risk).to_bits(),
                        "factor ({n}, {u}, {risk:?}) changed across the roundtrip"
                    );
                }
            }
        }
    }

    #[test]
    fn paths_csv_roundtrip_preserves_values_and_fill_state() {
        let dir = tmp();
        let path = dir.path().join(PATHS_CSV);
        let shocks = vec![ShockId::EquityDown, ShockId::RatesUp];
        let mut paths = NavScrPaths::new(3, 2, shocks.clone());
        for n in 0..3 {
            for t in 1..=2 {
                paths.set_nav(n, t, (n * 10 + t) as f64 + 0.123456789012345);
                paths.set_nav_shocked(n, t, 0, -1.5 * (n + t) as f64);
                paths.set_nav_shocked(n, t, 1, 0.25 * (n as f64) - t as f64);
            }
        }
        // Unfilled SCR must survive as unfilled.
        write_paths_csv(&path, 7, &paths).unwrap();
        let (_, unfilled) = read_paths_csv(&path).unwrap();
        assert!(!unfilled.scr_filled());
        assert_eq!(unfilled.nav(2, 1), paths.nav(2, 1));
        assert_eq!(unfilled.nav_shocked(1, 2, 1), paths.nav_shocked(1, 2, 1));

        // Filled SCR must survive as filled.
        for n in 0..3 {
            for t in 1..=2 {
                let scr = 1.0 + (n + t) as f64;
                paths.set_scr(n, t, scr, paths.nav(n, t) / scr);
            }
        }
        paths.mark_scr_filled();
        write_paths_csv(&path, 7, &paths).unwrap();
        let (_, filled) = read_paths_csv(&path).unwrap();
        assert!(filled.scr_filled());
        assert_eq!(filled.scr(1, 2), paths.scr(1, 2));
        assert_eq!(filled.solvency_ratio(0, 1), paths.solvency_ratio(0, 1));
        assert_eq!(filled.shock_ids(), paths.shock_ids());
    }

    #[test]
    fn deltas_csv_roundtrip_is_exact() {
        let dir = tmp();
        let path = dir.path().join(DELTAS_CSV);
        let deltas =
            DeltaPanel::new(2, 3, vec![0.99, 0.97, 0.94, 0.995, 0.985, 0.955]).unwrap();
        write_deltas_csv(&path, 5, &deltas).unwrap();
        let (seed, back) = read_deltas_csv(&path).unwrap();
        assert_eq!(seed, 5);
        for n in 0..2 {
            for t in 1..=3 {
                assert_eq!(back.delta(n, t), deltas.delta(n, t));
            }
        }
    }

    #[test]
    fn sc5_csv_reader_assembles_paths_by_index() {
        let dir = tmp();
        let path = dir.path().join("set.csv");
        // Rows deliberately out of order: assembly must go by index.
        let text = "j,t,nav,scr,delta\n\
                    2,1,5.0,2.0,0.99\n\
                    1,2,10.0,4.0,0.97\n\
                    1,1,11.0,4.5,0.99\n\
                    2,2,4.0,2.5,0.96\n";
        std::fs::write(&path, text).unwrap();
        let set = read_sc5_set_csv(&path).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set[0].nav, vec![11.0, 10.0]);
        assert_eq!(set[1].scr, vec![2.0, 2.5]);
        assert_eq!(set[1].delta, vec![0.99, 0.96]);
    }

    #[test]
    fn sc5_csv_reader_rejects_gaps() {
        let dir = tmp();
        let path = dir.path().join("set.csv");
        let text = "j,t,nav,scr,delta\n1,1,1.0,1.0,0.99\n2,1,1.0,1.0,0.99\n2,2,1.0,1.0,0.98\n";
        std::fs::write(&path, text).unwrap();
        assert!(read_sc5_set_csv(&path).is_err(), "ragged sets must be rejected");
    }

    #[test]
    fn json_artifacts_carry_seed_provenance() {
        let dir = tmp();
        let path = dir.path().join("meta.json");
        let meta = RunMeta {
            seed: 42,
            nav0: 10.5,
            nav0_npv_variance: 2.25,
            n_primary: 100,
            n_secondary: 10,
            horizon_t: 3,
        };
        write_json(&path, meta.seed, &meta).unwrap();
        let (seed, back) = read_json::<RunMeta>(&path).unwrap();
        assert_eq!(seed, 42);
        assert_eq!(back, meta);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"seed\": 42"));
    }

    #[test]
    fn npvs_csv_roundtrip_is_exact() {
        let dir = tmp();
        let path = dir.path().join(NPVS_T1_CSV);
        let npvs = vec![vec![1.25, -0.5, 3.0], vec![0.1, 0.2, 0.30000000000000004]];
        write_npvs_csv(&path, 11, &npvs).unwrap();
        let (_, back) = read_npvs_csv(&path).unwrap();
        assert_eq!(back, npvs);
    }
}
