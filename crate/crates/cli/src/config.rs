//! TOML run configuration.

use std::path::{Path, PathBuf};

use cmfe_core::grid_state::{build_grid, Grid, InitialDataSpec};
use cmfe_core::integrator::{SnapshotPolicy, StepControls};
use cmfe_core::kernels::{validate_model, AdmissibilityReport, KernelModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub m_min: f64,
    pub m_max: f64,
    pub cells_per_decade: usize,
    /// Defaults to `m_min` (no coagulation truncation inside the grid).
    pub coag_min: Option<f64>,
}

impl GridSection {
    pub fn build(&self) -> cmfe_core::Result<Grid> {
        build_grid(self.m_min, self.m_max, self.cells_per_decade, self.coag_min.unwrap_or(self.m_min))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsSection {
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(default = "d_dt_min")]
    pub dt_min: f64,
    #[serde(default = "d_dt_max")]
    pub dt_max: f64,
    #[serde(default = "d_t_end")]
    pub t_end: f64,
    #[serde(default = "d_record_every")]
    pub record_every: f64,
    #[serde(default = "d_clamp_tol")]
    pub clamp_tol: f64,
    #[serde(default = "d_max_steps")]
    pub max_steps: usize,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
    /// Run even if the admissibility verdict fails (recorded in the manifest).
    #[serde(default)]
    pub force: bool,
}

fn d_theta() -> f64 {
    0.1
}
fn d_dt_min() -> f64 {
    1e-12
}
fn d_dt_max() -> f64 {
    0.1
}
fn d_t_end() -> f64 {
    1.0
}
fn d_record_every() -> f64 {
    0.1
}
fn d_clamp_tol() -> f64 {
    1e-13
}
fn d_max_steps() -> usize {
    10_000_000
}

impl Default for ControlsSection {
    fn default() -> Self {
        Self {
            theta: d_theta(),
            dt_min: d_dt_min(),
            dt_max: d_dt_max(),
            t_end: d_t_end(),
            record_every: d_record_every(),
            clamp_tol: d_clamp_tol(),
            max_steps: d_max_steps(),
            threads: 0,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Exponent of the `I_p` bound; omitted disables that branch.
    pub p: Option<f64>,
    /// Support gap of the initial data; omitted disables that branch.
    pub delta: Option<f64>,
    #[serde(default = "d_lambda_cut")]
    pub lambda_cut: f64,
    #[serde(default = "d_bound_tol")]
    pub bound_tolerance: f64,
    #[serde(default = "d_gel_tol")]
    pub gel_tolerance: f64,
    /// Times of the check window; defaults to `(record_every, t_end)`.
    pub window: Option<(f64, f64)>,
}

fn d_lambda_cut() -> f64 {
    2.0
}
fn d_bound_tol() -> f64 {
    cmfe_core::analysis::DEFAULT_BOUND_TOLERANCE
}
fn d_gel_tol() -> f64 {
    cmfe_core::analysis::DEFAULT_GEL_TOLERANCE
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            p: None,
            delta: None,
            lambda_cut: d_lambda_cut(),
            bound_tolerance: d_bound_tol(),
            gel_tolerance: d_gel_tol(),
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "d_directory")]
    pub directory: PathBuf,
    /// Extra density snapshot times; the final state is always written.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Write a snapshot at every recorded time.
    #[serde(default)]
    pub snapshot_every_record: bool,
}

fn d_directory() -> PathBuf {
    PathBuf::from("cmfe-out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: d_directory(), snapshot_times: Vec::new(), snapshot_every_record: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: KernelModel,
    pub grid: GridSection,
    pub initial: InitialDataSpec,
    #[serde(default)]
    pub controls: ControlsSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn step_controls(&self) -> StepControls {
        let c = &self.controls;
        let snapshots = if self.output.snapshot_every_record {
            SnapshotPolicy::EveryRecord
        } else if self.output.snapshot_times.is_empty() {
            SnapshotPolicy::Final
        } else {
            SnapshotPolicy::Times(self.output.snapshot_times.clone())
        };
        StepControls {
            theta: c.theta,
            dt_min: c.dt_min,
            dt_max: c.dt_max,
            t_end: c.t_end,
            record_every: c.record_every,
            clamp_tol: c.clamp_tol,
            max_steps: c.max_steps,
            snapshots,
        }
    }

    pub fn threads(&self) -> Option<usize> {
        (self.controls.threads > 0).then_some(self.controls.threads)
    }

    /// Resolved configuration with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration is always representable as TOML")
    }

    pub fn admissibility(&self) -> Result<AdmissibilityReport, CliError> {
        validate_model(&self.model).map_err(|e| CliError::Config(format!("[model]: {e}")))
    }

    /// Relative paths inside the config are taken relative to its directory.
    fn rebase_paths(&mut self, base: &Path) {
        fn rebase(spec: &mut InitialDataSpec, base: &Path) {
            match spec {
                InitialDataSpec::TableFile { path } if path.is_relative() => *path = base.join(&*path),
                InitialDataSpec::Shifted { inner, .. } => rebase(inner, base),
                _ => {}
            }
        }
        rebase(&mut self.initial, base);
    }
}

/// Parses without admissibility checks; `check` reports those itself.
pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config_str(&text, &path.display().to_string())?;
    if let Some(dir) = path.parent() {
        cfg.rebase_paths(dir);
    }
    Ok(cfg)
}

/// Parses, checks the grid and, unless `controls.force`, the admissibility verdict.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let cfg = read_config(path)?;
    validate_config(&cfg, &path.display().to_string())?;
    Ok(cfg)
}

pub fn validate_config(cfg: &RunConfig, origin: &str) -> Result<(), CliError> {
    cfg.grid.build().map_err(|e| CliError::Config(format!("{origin}: [grid]: {e}")))?;
    cfg.step_controls().validate().map_err(|e| CliError::Config(format!("{origin}: [controls]: {e}")))?;
    let report = cfg.admissibility()?;
    if !report.verdict() && !cfg.controls.force {
        return Err(CliError::Config(format!(
            "{origin}: [model] is not admissible ({}); set controls.force = true to run anyway",
            report.failures().join(", ")
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
sigma = 0.25
gamma = 0.0
k1 = 1.0
gamma_poly = [0.0, 1.0]
kernel_form = "piecewise"

[grid]
m_min = 1e-3
m_max = 1e3
cells_per_decade = 4

[initial]
kind = "exponential"
amplitude = 1.0
scale = 1.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str(MINIMAL, "minimal").unwrap();
        assert_eq!(cfg.controls.theta, 0.1);
        assert_eq!(cfg.analysis.bound_tolerance, 0.05);
        assert_eq!(cfg.analysis.gel_tolerance, 1e-3);
        assert_eq!(cfg.output.directory, PathBuf::from("cmfe-out"));
        validate_config(&cfg, "minimal").unwrap();
        let echoed = parse_config_str(&cfg.to_toml(), "echo").unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("sigma = 0.25", "sigma = 0.25\nsigma2 = 1.0");
        let err = parse_config_str(&text, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("sigma2"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn type_mismatch_is_reported() {
        let text = MINIMAL.replace("cells_per_decade = 4", "cells_per_decade = \"four\"");
        let err = parse_config_str(&text, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("cells_per_decade"), "{err}");
    }

    #[test]
    fn inadmissible_sigma_surfaces_condition() {
        let text = MINIMAL.replace("sigma = 0.25", "sigma = 0.6");
        let cfg = parse_config_str(&text, "bad.toml").unwrap();
        let err = validate_config(&cfg, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("[model]") && err.contains("sigma"), "{err}");
        let forced = RunConfig { controls: ControlsSection { force: true, ..cfg.controls.clone() }, ..cfg };
        validate_config(&forced, "bad.toml").unwrap();
    }
}
