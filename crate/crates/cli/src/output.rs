//! CSV and manifest serialization.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cmfe_core::analysis::{BoundKind, BoundsReport};
use cmfe_core::grid_state::Grid;
use cmfe_core::integrator::SimulationResult;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows(path: &Path, header: &str, rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut out = String::with_capacity(4096);
    out.push_str(header);
    out.push_str("\r\n");
    for row in rows {
        out.push_str(&row.join(","));
        out.push_str("\r\n");
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn write_moments(path: &Path, r: &SimulationResult) -> Result<(), CliError> {
    let (m, l) = (&r.moments, &r.ledger);
    write_rows(
        path,
        "t,N0,N1,Nm_sigma,Nm_2sigma,gel_mass,dust_mass,dust_number",
        (0..r.times.len()).map(|k| {
            [r.times[k], m.n0[k], m.n1[k], m.n_minus_sigma[k], m.n_minus_2sigma[k], l.gel_mass[k], l.dust_mass[k], l.dust_number[k]]
                .into_iter()
                .map(fmt_f64)
                .collect()
        }),
    )
}

pub fn write_ledger(path: &Path, r: &SimulationResult) -> Result<(), CliError> {
    let n1_0 = r.n1_initial();
    let (m, l) = (&r.moments, &r.ledger);
    write_rows(
        path,
        "t,N1,gel_mass,dust_mass,dust_number,clamp_mass,relative_defect",
        (0..r.times.len()).map(|k| {
            let total = m.n1[k] + l.gel_mass[k] + l.dust_mass[k] + l.clamp_mass[k];
            let defect = (total - n1_0) / n1_0.abs().max(f64::MIN_POSITIVE);
            [r.times[k], m.n1[k], l.gel_mass[k], l.dust_mass[k], l.dust_number[k], l.clamp_mass[k], defect]
                .into_iter()
                .map(fmt_f64)
                .collect()
        }),
    )
}

pub fn snapshot_file_name(t: f64) -> String {
    format!("snapshot_t{t:.6e}.csv")
}

/// One `(pivot_mass, density)` file per snapshot; returns the paths written.
pub fn write_snapshots(dir: &Path, r: &SimulationResult, grid: &Grid) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    r.snapshots
        .iter()
        .map(|s| {
            let path = dir.join(snapshot_file_name(s.t));
            write_rows(
                &path,
                "pivot_mass,density",
                grid.pivots().iter().zip(&s.g).map(|(&m, &g)| vec![fmt_f64(m), fmt_f64(g)]),
            )?;
            Ok(path)
        })
        .collect()
}

/// One row per time of the union of all curves; undefined entries are empty.
pub fn write_bounds(path: &Path, report: &BoundsReport) -> Result<(), CliError> {
    let mut times: Vec<f64> = report.curves.iter().flat_map(|c| c.times.iter().copied()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let kinds: Vec<BoundKind> = report.curves.iter().map(|c| c.kind).collect();
    let mut header = String::from("t");
    for k in &kinds {
        let _ = write!(header, ",{}", k.name());
    }
    write_rows(
        path,
        &header,
        times.iter().map(|&t| {
            let mut row = vec![fmt_f64(t)];
            for c in &report.curves {
                row.push(c.times.iter().position(|&x| x == t).map(|i| fmt_f64(c.values[i])).unwrap_or_default());
            }
            row
        }),
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize to JSON");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn config_hash(resolved: &str) -> String {
    hex::encode(Sha256::digest(resolved.as_bytes()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub program: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_sha256: String,
    pub resolved_config: &'a str,
    pub admissibility: Option<&'a cmfe_core::kernels::AdmissibilityReport>,
    pub admissible: Option<bool>,
    pub forced: bool,
    pub threads: Option<usize>,
    pub wall_clock_seconds: f64,
    /// The run stopped before `t_end` or an output could not be completed.
    pub partial: bool,
    pub outputs: Vec<String>,
    pub verdicts: serde_json::Value,
}

impl Manifest<'_> {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}
