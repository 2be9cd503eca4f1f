//! Subcommand implementations. Each writes its files into an output directory
//! and returns a summary the binary turns into an exit status.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cmfe_core::analysis::{
    apriori_estimates, check_simulation_against_bounds, estimate_gel_time, gel_crossing, theoretical_bounds,
    AprioriReport, BoundVerdict, BoundsReport, GelTime, GelTimeEstimate, InitialStats,
};
use cmfe_core::grid_state::init_density;
use cmfe_core::integrator::{run, RunOptions, SimulationResult};
use cmfe_core::kernels::AdmissibilityReport;
use serde::Serialize;

use crate::acceptance::{self, Outcome};
use crate::config::RunConfig;
use crate::output::{self, config_hash, Manifest};
use crate::CliError;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn rel(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).display().to_string()
}

/// Writes the resolved config and returns its text.
fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<(String, PathBuf), CliError> {
    let text = cfg.to_toml();
    let path = dir.join("config.resolved.toml");
    fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
    Ok((text, path))
}

pub struct SimulateOutcome {
    pub result: SimulationResult,
    pub files: Vec<PathBuf>,
}

pub fn simulate_result(cfg: &RunConfig) -> Result<SimulationResult, CliError> {
    let grid = cfg.grid.build()?;
    let opts = RunOptions { force: cfg.controls.force, threads: cfg.threads() };
    Ok(run(&grid, &cfg.model, &cfg.initial, &cfg.step_controls(), opts)?)
}

pub fn cmd_simulate(cfg: &RunConfig, dir: &Path) -> Result<SimulateOutcome, CliError> {
    let start = Instant::now();
    ensure_dir(dir)?;
    let (text, echo) = echo_config(cfg, dir)?;
    let result = simulate_result(cfg)?;
    let grid = &result.metadata.grid;

    let mut files = vec![echo];
    let moments = dir.join("moments.csv");
    output::write_moments(&moments, &result)?;
    files.push(moments);
    let ledger = dir.join("ledger.csv");
    output::write_ledger(&ledger, &result)?;
    files.push(ledger);
    files.extend(output::write_snapshots(&dir.join("snapshots"), &result, grid)?);

    let manifest = Manifest {
        program: "cmfe",
        version: env!("CARGO_PKG_VERSION"),
        command: "simulate",
        config_sha256: config_hash(&text),
        resolved_config: &text,
        admissibility: Some(&result.metadata.admissibility),
        admissible: Some(result.metadata.admissibility.verdict()),
        forced: result.metadata.forced,
        threads: result.metadata.threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        partial: result.metadata.truncated,
        outputs: files.iter().map(|p| rel(dir, p)).collect(),
        verdicts: serde_json::json!({
            "steps": result.metadata.steps,
            "rejected_steps": result.metadata.rejected_steps,
            "stiff_steps": result.metadata.stiff_steps,
            "truncated": result.metadata.truncated,
            "ledger_defect": result.ledger_defect(),
        }),
    };
    files.push(manifest.write(dir)?);
    Ok(SimulateOutcome { result, files })
}

fn initial_stats(cfg: &RunConfig) -> Result<InitialStats, CliError> {
    let grid = cfg.grid.build()?;
    let state = init_density(&grid, &cfg.initial)?;
    Ok(InitialStats::from_state(&state, &grid, cfg.model.sigma, cfg.analysis.p)?)
}

/// Record times of the configured run, `k · record_every` up to `t_end`.
fn record_times(cfg: &RunConfig) -> Vec<f64> {
    let (every, end) = (cfg.controls.record_every, cfg.controls.t_end);
    let mut ts: Vec<f64> = (0..).map(|k| k as f64 * every).take_while(|&t| t < end).collect();
    ts.push(end);
    ts
}

pub fn bounds_report(cfg: &RunConfig) -> Result<BoundsReport, CliError> {
    let stats = initial_stats(cfg)?;
    Ok(theoretical_bounds(&cfg.model, &stats, cfg.analysis.p, cfg.analysis.delta, &record_times(cfg))?)
}

#[derive(Debug, Serialize)]
struct Constants<'a> {
    t_dagger: Option<f64>,
    cmfe_limit: f64,
    params: &'a cmfe_core::analysis::BoundParams,
    apriori: Option<AprioriReport>,
}

pub fn cmd_bounds(cfg: &RunConfig, dir: &Path) -> Result<BoundsReport, CliError> {
    let start = Instant::now();
    ensure_dir(dir)?;
    let (text, echo) = echo_config(cfg, dir)?;
    let report = bounds_report(cfg)?;
    let path = dir.join("bounds.csv");
    output::write_bounds(&path, &report)?;
    let apriori = (cfg.controls.t_end > 0.0)
        .then(|| apriori_estimates(&cfg.model, report.params.q, report.params.n1_in, cfg.controls.t_end, cfg.analysis.lambda_cut))
        .and_then(|r| r.ok());
    let constants = dir.join("constants.json");
    output::write_json(
        &constants,
        &Constants { t_dagger: report.t_dagger, cmfe_limit: report.cmfe_limit, params: &report.params, apriori },
    )?;
    let adm = cfg.admissibility()?;
    Manifest {
        program: "cmfe",
        version: env!("CARGO_PKG_VERSION"),
        command: "bounds",
        config_sha256: config_hash(&text),
        resolved_config: &text,
        admissibility: Some(&adm),
        admissible: Some(adm.verdict()),
        forced: cfg.controls.force,
        threads: None,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        partial: false,
        outputs: [echo, path, constants].iter().map(|p| rel(dir, p)).collect(),
        verdicts: serde_json::Value::Null,
    }
    .write(dir)?;
    Ok(report)
}

pub struct CheckOutcome {
    pub report: AdmissibilityReport,
    /// Bound verdicts when a simulation was requested.
    pub bounds: Option<Vec<BoundVerdict>>,
}

impl CheckOutcome {
    pub fn holds(&self) -> bool {
        self.report.verdict()
            && self.bounds.as_ref().is_none_or(|v| v.iter().filter(|b| b.hypotheses_met).all(|b| b.holds))
    }
}

/// Admissibility report; with `simulate`, also runs the model and checks every
/// applicable bound over the analysis window.
pub fn cmd_check(cfg: &RunConfig, simulate: bool) -> Result<CheckOutcome, CliError> {
    let report = cfg.admissibility()?;
    let bounds = if simulate {
        let result = simulate_result(cfg)?;
        let bounds = bounds_report(cfg)?;
        let window = cfg.analysis.window.unwrap_or((cfg.controls.record_every.min(cfg.controls.t_end), cfg.controls.t_end));
        Some(check_simulation_against_bounds(&result, &bounds, window, cfg.analysis.bound_tolerance)?)
    } else {
        None
    };
    Ok(CheckOutcome { report, bounds })
}

pub fn format_check(out: &CheckOutcome) -> String {
    let mut s = format!("target hypothesis: {:?}\n", out.report.target);
    for c in &out.report.conditions {
        let status = match (c.required, c.holds) {
            (false, _) => "n/a ",
            (true, true) => "ok  ",
            (true, false) => "FAIL",
        };
        s.push_str(&format!("  {status} {:<24} value = {}\n", c.id.name(), c.value));
    }
    if let Some((lo, hi)) = out.report.p_interval {
        s.push_str(&format!("  p interval: ({lo}, {hi})\n"));
    }
    for b in out.bounds.iter().flatten() {
        let status = if !b.hypotheses_met {
            "n/a "
        } else if b.holds {
            "ok  "
        } else {
            "FAIL"
        };
        s.push_str(&format!("  {status} bound {:<12} max N1/bound = {:.6} over {} points\n", b.kind.name(), b.max_ratio, b.points));
    }
    s.push_str(if out.holds() { "verdict: holds\n" } else { "verdict: violated\n" });
    s
}

pub struct ConvergeOutcome {
    pub levels: Vec<SimulationResult>,
    pub gel_time: Option<GelTimeEstimate>,
}

/// Runs the configuration with the top edge multiplied by 10 per level and
/// extrapolates the gel-ledger crossing time.
pub fn cmd_converge(cfg: &RunConfig, levels: usize, dir: &Path) -> Result<ConvergeOutcome, CliError> {
    if levels < 2 {
        return Err(CliError::Config("converge needs at least 2 levels".into()));
    }
    let start = Instant::now();
    ensure_dir(dir)?;
    let (text, echo) = echo_config(cfg, dir)?;
    let mut files = vec![echo];
    let mut results = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut c = cfg.clone();
        c.grid.m_max = cfg.grid.m_max * 10f64.powi(level as i32);
        let r = simulate_result(&c)?;
        let path = dir.join(format!("level_{level}_moments.csv"));
        output::write_moments(&path, &r)?;
        files.push(path);
        results.push(r);
    }
    let tol = cfg.analysis.gel_tolerance;
    let gel_time = (levels >= 3).then(|| estimate_gel_time(&results, tol)).transpose()?;

    let table = dir.join("converge.csv");
    let mut csv = String::from("level,top_edge,cells,crossing_time,N1_end,gel_mass_end,steps\r\n");
    for (k, r) in results.iter().enumerate() {
        let g = &r.metadata.grid;
        csv.push_str(&format!(
            "{k},{},{},{},{},{},{}\r\n",
            output::fmt_f64(g.top_edge()),
            g.n_cells(),
            gel_crossing(r, tol).map(output::fmt_f64).unwrap_or_default(),
            output::fmt_f64(*r.moments.n1.last().unwrap()),
            output::fmt_f64(*r.ledger.gel_mass.last().unwrap()),
            r.metadata.steps
        ));
    }
    fs::write(&table, csv).map_err(|e| CliError::io(&table, e))?;
    files.push(table);
    let gel_path = dir.join("gel_time.json");
    output::write_json(&gel_path, &gel_time)?;
    files.push(gel_path);

    let adm = &results[0].metadata.admissibility;
    Manifest {
        program: "cmfe",
        version: env!("CARGO_PKG_VERSION"),
        command: "converge",
        config_sha256: config_hash(&text),
        resolved_config: &text,
        admissibility: Some(adm),
        admissible: Some(adm.verdict()),
        forced: cfg.controls.force,
        threads: cfg.threads(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        partial: results.iter().any(|r| r.metadata.truncated),
        outputs: files.iter().map(|p| rel(dir, p)).collect(),
        verdicts: serde_json::to_value(&gel_time).unwrap_or_default(),
    }
    .write(dir)?;
    Ok(ConvergeOutcome { levels: results, gel_time })
}

pub fn format_gel_time(est: &GelTimeEstimate) -> String {
    match est.gel_time {
        GelTime::Detected { estimate, bracket } => {
            format!("gel time ≈ {estimate:.6} (last two crossings {:.6} .. {:.6})", bracket.0, bracket.1)
        }
        GelTime::NotDetected => "no gelation detected".to_string(),
    }
}

/// Runs the acceptance suite (all criteria, or the listed ids).
pub fn cmd_verify(only: &[u8], dir: Option<&Path>) -> Result<Vec<Outcome>, CliError> {
    let start = Instant::now();
    let outcomes: Vec<Outcome> = acceptance::CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
        .map(|c| {
            let o = c.evaluate();
            println!("{}", o.line());
            o
        })
        .collect();
    if let Some(dir) = dir {
        ensure_dir(dir)?;
        let report = dir.join("verify.json");
        output::write_json(&report, &outcomes)?;
        Manifest {
            program: "cmfe",
            version: env!("CARGO_PKG_VERSION"),
            command: "verify",
            config_sha256: config_hash(""),
            resolved_config: "",
            admissibility: None,
            admissible: None,
            forced: false,
            threads: None,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            partial: false,
            outputs: vec![rel(dir, &report)],
            verdicts: serde_json::to_value(&outcomes).unwrap_or_default(),
        }
        .write(dir)?;
    }
    Ok(outcomes)
}
