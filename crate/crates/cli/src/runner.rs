//! Experiment execution: deterministic (scheme, seed) cells, CSV emission
//! with a config-hash stamp, sweeps with per-cell failure capture, the
//! self-check battery and far-field pattern export.

use crate::config::{config_hash, SystemConfig};
use anyhow::{Context, Result};
use holobeam_core::baselines::{run_scheme, SchemeRun, SchemeTag};
use holobeam_core::checks::{run_all, CheckHooks};
use holobeam_core::em_coupling::far_field_pattern;
use holobeam_core::rhs_operator::coupled_operator;
use holobeam_core::scenario::build_scenario;
use holobeam_core::{cr, CMat, CVec};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

/// Harness failure classes, mapped to process exit codes in `main`.
#[derive(Debug)]
pub enum HarnessError {
    Io(String),
    Numeric(String),
    Validation(String),
}

impl std::fmt::Display for HarnessError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HarnessError::Io(m) => write!(f, "io error: {m}"),
            HarnessError::Numeric(m) => write!(f, "numeric failure: {m}"),
            HarnessError::Validation(m) => write!(f, "validation failure: {m}"),
        }
    }
}

impl std::error::Error for HarnessError {}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.9e}")
    }
}

/// Axis values print the way they were given: integers without a decimal
/// point, fractions as plain decimals.
fn fmt_axis(v: f64) -> String {
    format!("{v}")
}

struct CellOutcome {
    scheme: SchemeTag,
    seed: u64,
    run: std::result::Result<SchemeRun, String>,
    wall_ms: u64,
}

#[derive(Serialize)]
struct CellMeta {
    scheme: String,
    seed: u64,
    status: String,
    wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct RunMeta {
    config_hash: String,
    wall_ms_total: u64,
    cells: Vec<CellMeta>,
}

fn execute_cell(cfg: &SystemConfig, scheme: SchemeTag, seed: u64) -> CellOutcome {
    let start = Instant::now();
    let run = build_scenario(&cfg.scenario_params(seed))
        .and_then(|scn| run_scheme(scheme, &scn, &cfg.solver_options()))
        .map_err(|e| e.to_string());
    CellOutcome {
        scheme,
        seed,
        run,
        wall_ms: start.elapsed().as_millis() as u64,
    }
}

fn execute_cells<T: Send, S: Sync>(
    specs: &[S],
    serial: bool,
    f: impl Fn(&S) -> T + Sync + Send,
) -> Vec<T> {
    if serial {
        specs.iter().map(f).collect()
    } else {
        specs.par_iter().map(f).collect()
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_meta(dir: &Path, name: &str, hash: &str, outcomes: &[CellOutcome]) -> Result<()> {
    let meta = RunMeta {
        config_hash: hash.to_string(),
        wall_ms_total: outcomes.iter().map(|c| c.wall_ms).sum(),
        cells: outcomes
            .iter()
            .map(|c| CellMeta {
                scheme: c.scheme.name().to_string(),
                seed: c.seed,
                status: if c.run.is_ok() { "ok" } else { "failed" }.to_string(),
                wall_ms: c.wall_ms,
                error: c.run.as_ref().err().cloned(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write_file(dir, name, &json)
}

/// `run` subcommand: per-iteration traces of every (scheme, seed) cell.
///
/// The CSV is byte-deterministic: the wall_ms column is fixed at 0 and real
/// timings go to the run_meta.json sidecar instead.
pub fn run_convergence(
    cfg: &SystemConfig,
    out_dir: &Path,
    serial: bool,
) -> std::result::Result<(), HarnessError> {
    let hash = config_hash(cfg);
    let specs: Vec<(SchemeTag, u64)> = cfg
        .scheme_tags()
        .into_iter()
        .flat_map(|t| cfg.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let outcomes = execute_cells(&specs, serial, |&(tag, seed)| execute_cell(cfg, tag, seed));

    let mut csv = String::new();
    let _ = writeln!(csv, "# config_hash={hash}");
    let _ = writeln!(
        csv,
        "iter,scheme,seed,sum_rate_bps,sum_se_bpshz,J,rhs_power_w,lambda,backtracks,wall_ms"
    );
    for cell in &outcomes {
        match &cell.run {
            Ok(run) => {
                for row in &run.trace.rows {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{},{},{},{},0",
                        row.iter,
                        cell.scheme.name(),
                        cell.seed,
                        fmt_float(row.sum_rate_bps),
                        fmt_float(row.sum_se_bpshz),
                        fmt_float(row.j),
                        fmt_float(row.rhs_power),
                        fmt_float(row.lambda),
                        row.backtracks,
                    );
                }
            }
            Err(_) => {
                let _ = writeln!(
                    csv,
                    "0,{},{},nan,nan,nan,nan,nan,0,0",
                    cell.scheme.name(),
                    cell.seed
                );
            }
        }
    }
    write_file(out_dir, "run.csv", &csv).map_err(|e| HarnessError::Io(e.to_string()))?;
    write_meta(out_dir, "run_meta.json", &hash, &outcomes)
        .map_err(|e| HarnessError::Io(e.to_string()))?;

    if outcomes.iter().all(|c| c.run.is_err()) {
        let first = outcomes
            .first()
            .and_then(|c| c.run.as_ref().err().cloned())
            .unwrap_or_else(|| "no cells executed".into());
        return Err(HarnessError::Numeric(format!(
            "every scheme failed; first error: {first}"
        )));
    }
    Ok(())
}

/// Supported sweep axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Pbs,
    XiFs,
    RhsSize,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<SweepAxis> {
        match s {
            "pbs" => Some(SweepAxis::Pbs),
            "xi_fs" => Some(SweepAxis::XiFs),
            "rhs_size" => Some(SweepAxis::RhsSize),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Pbs => "pbs",
            SweepAxis::XiFs => "xi_fs",
            SweepAxis::RhsSize => "rhs_size",
        }
    }

    fn default_values(self, cfg: &SystemConfig) -> Vec<f64> {
        match self {
            SweepAxis::Pbs => cfg.sweep_pbs_w.clone(),
            SweepAxis::XiFs => cfg.sweep_xi_fs.clone(),
            SweepAxis::RhsSize => cfg.sweep_n_elements.iter().map(|&n| n as f64).collect(),
        }
    }

    fn apply(self, cfg: &SystemConfig, value: f64) -> std::result::Result<SystemConfig, String> {
        let mut c = cfg.clone();
        match self {
            SweepAxis::Pbs => {
                if !(value > 0.0) {
                    return Err(format!("pbs value {value} must be positive"));
                }
                c.p_bs_w = value;
            }
            SweepAxis::XiFs => {
                if value < 0.0 {
                    return Err(format!("xi_fs value {value} must be nonnegative"));
                }
                c.xi_fs_target = value;
            }
            SweepAxis::RhsSize => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(format!("rhs_size value {value} must be a positive integer"));
                }
                c.n_elements = value as usize;
            }
        }
        Ok(c)
    }
}

/// `sweep` subcommand: final metrics per (axis value, scheme, seed) plus a
/// per-(value, scheme) mean row. Cell failures are recorded as rows with nan
/// metrics and status `failed`; the sweep continues.
pub fn run_sweep(
    cfg: &SystemConfig,
    axis: SweepAxis,
    values: Option<Vec<f64>>,
    out_dir: &Path,
    serial: bool,
) -> std::result::Result<(), HarnessError> {
    let hash = config_hash(cfg);
    let values = values.unwrap_or_else(|| axis.default_values(cfg));
    if values.is_empty() {
        return Err(HarnessError::Validation("sweep axis has no values".into()));
    }
    let mut configs = Vec::with_capacity(values.len());
    for &v in &values {
        let c = axis.apply(cfg, v).map_err(HarnessError::Validation)?;
        c.validate()
            .map_err(|e| HarnessError::Validation(format!("axis value {v}: {e}")))?;
        configs.push(c);
    }

    let tags = cfg.scheme_tags();
    let specs: Vec<(usize, SchemeTag, u64)> = (0..values.len())
        .flat_map(|vi| {
            tags.iter()
                .flat_map(move |&t| cfg.seeds.iter().map(move |&s| (vi, t, s)))
        })
        .collect();
    let outcomes = execute_cells(&specs, serial, |&(vi, tag, seed)| {
        (vi, execute_cell(&configs[vi], tag, seed))
    });

    let mut csv = String::new();
    let _ = writeln!(csv, "# config_hash={hash}");
    let _ = writeln!(
        csv,
        "axis,value,scheme,seed,sum_rate_bps,sum_se_bpshz,J_final,rhs_power_w,status"
    );
    let seeds_per_cell = cfg.seeds.len();
    for chunk_start in (0..outcomes.len()).step_by(seeds_per_cell) {
        let group = &outcomes[chunk_start..chunk_start + seeds_per_cell];
        let value = values[group[0].0];
        let scheme = group[0].1.scheme;
        let mut sums = [0.0f64; 4];
        let mut ok_count = 0usize;
        for (_, cell) in group {
            match &cell.run {
                Ok(run) => {
                    let m = &run.metrics;
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{},{},{},ok",
                        axis.name(),
                        fmt_axis(value),
                        scheme.name(),
                        cell.seed,
                        fmt_float(m.sum_rate_bps),
                        fmt_float(m.sum_se_bpshz),
                        fmt_float(m.j),
                        fmt_float(m.rhs_power_w),
                    );
                    sums[0] += m.sum_rate_bps;
                    sums[1] += m.sum_se_bpshz;
                    sums[2] += m.j;
                    sums[3] += m.rhs_power_w;
                    ok_count += 1;
                }
                Err(_) => {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},nan,nan,nan,nan,failed",
                        axis.name(),
                        fmt_axis(value),
                        scheme.name(),
                        cell.seed,
                    );
                }
            }
        }
        let (mean, status): ([f64; 4], &str) = if ok_count == 0 {
            ([f64::NAN; 4], "failed")
        } else {
            (
                [
                    sums[0] / ok_count as f64,
                    sums[1] / ok_count as f64,
                    sums[2] / ok_count as f64,
                    sums[3] / ok_count as f64,
                ],
                if ok_count == seeds_per_cell {
                    "ok"
                } else {
                    "partial"
                },
            )
        };
        let _ = writeln!(
            csv,
            "{},{},{},mean,{},{},{},{},{}",
            axis.name(),
            fmt_axis(value),
            scheme.name(),
            fmt_float(mean[0]),
            fmt_float(mean[1]),
            fmt_float(mean[2]),
            fmt_float(mean[3]),
            status,
        );
    }
    let file = format!("sweep_{}.csv", axis.name());
    write_file(out_dir, &file, &csv).map_err(|e| HarnessError::Io(e.to_string()))?;

    // Sidecar with real timings (and axis values folded into the scheme tag
    // line) — the CSV itself stays byte-deterministic.
    let meta_cells: Vec<CellMeta> = outcomes
        .iter()
        .map(|(vi, c)| CellMeta {
            scheme: format!(
                "{}={} {}",
                axis.name(),
                fmt_axis(values[*vi]),
                c.scheme.name()
            ),
            seed: c.seed,
            status: if c.run.is_ok() { "ok" } else { "failed" }.to_string(),
            wall_ms: c.wall_ms,
            error: c.run.as_ref().err().cloned(),
        })
        .collect();
    let meta = RunMeta {
        config_hash: hash.clone(),
        wall_ms_total: outcomes.iter().map(|(_, c)| c.wall_ms).sum(),
        cells: meta_cells,
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write_file(out_dir, &format!("sweep_{}_meta.json", axis.name()), &json)
        .map_err(|e| HarnessError::Io(e.to_string()))?;

    if outcomes.iter().all(|(_, c)| c.run.is_err()) {
        return Err(HarnessError::Numeric("every sweep cell failed".into()));
    }
    Ok(())
}

/// `validate` subcommand: the cross-module self-check battery. Prints one
/// line per check and fails (exit 4) when any bound is violated.
pub fn run_validate(seed: u64) -> std::result::Result<(), HarnessError> {
    let reports = run_all(seed, &CheckHooks::default());
    let mut failures = 0;
    for r in &reports {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} {}/{} observed={:.3e} bound={:.3e} — {}",
            r.module, r.name, r.observed, r.bound, r.detail
        );
        if !r.passed {
            failures += 1;
        }
    }
    println!("{} checks, {} failed", reports.len(), failures);
    if failures > 0 {
        return Err(HarnessError::Validation(format!(
            "{failures} self-check(s) failed"
        )));
    }
    Ok(())
}

/// `pattern` subcommand: far-field cuts of the HDMA hologram driven by a
/// uniform feeder vector, under three coupling models (none / free-space
/// only / free-space + surface wave), each normalized to its own 0 dB peak.
pub fn run_pattern(cfg: &SystemConfig, out_dir: &Path) -> std::result::Result<(), HarnessError> {
    let hash = config_hash(cfg);
    let seed = cfg.seeds[0];
    let scn = build_scenario(&cfg.scenario_params(seed))
        .map_err(|e| HarnessError::Numeric(e.to_string()))?;
    let u = cfg.pattern_subband.unwrap_or(cfg.subbands / 2);
    let f = scn.plan.centers[u];
    let n = scn.geometry.n();
    let l = scn.geometry.l();
    let drive = CVec::from_element(l, cr(1.0 / (l as f64).sqrt()));
    let grid: Vec<(f64, f64)> = (0..=180)
        .map(|deg| ((deg as f64).to_radians(), 90f64.to_radians()))
        .collect();

    let zero = CMat::zeros(n, n);
    let models: [(&str, &CMat); 3] = [
        ("none", &zero),
        ("fs", &scn.coupling[u].fs),
        ("fs_sw", &scn.coupling[u].total),
    ];
    let mut csv = String::new();
    let _ = writeln!(csv, "# config_hash={hash}");
    let _ = writeln!(csv, "angle_deg,model,gain_db");
    for (name, xi) in models {
        let op = coupled_operator(&scn.hdma.m, xi, &scn.feeds[u], scn.spectral_margin)
            .map_err(|e| HarnessError::Numeric(e.to_string()))?;
        let p = &op.m_op * &drive;
        let gains = far_field_pattern(&p, &scn.geometry, f, &scn.medium, &grid)
            .map_err(|e| HarnessError::Numeric(e.to_string()))?;
        for (deg, gain) in gains.iter().enumerate() {
            let _ = writeln!(csv, "{deg},{name},{}", fmt_float(*gain));
        }
    }
    write_file(out_dir, "pattern.csv", &csv).map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}
