//! Adaptive explicit Heun stepping and run orchestration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_state::{init_density, moment, DensityState, Grid, InitialDataSpec};
use crate::kernels::{validate_model, AdmissibilityReport, KernelModel};
use crate::scheme::{RhsBundle, Scheme};

/// Cells with density at or below this are ignored by the step-size rule.
const EMPTY_CELL: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotPolicy {
    /// Final state only.
    Final,
    /// Every recorded time.
    EveryRecord,
    /// The listed times plus the final state.
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControls {
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub record_every: f64,
    #[serde(default = "default_clamp_tol")]
    pub clamp_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_snapshots")]
    pub snapshots: SnapshotPolicy,
}

fn default_theta() -> f64 {
    0.1
}
fn default_clamp_tol() -> f64 {
    1e-13
}
fn default_max_steps() -> usize {
    10_000_000
}
fn default_snapshots() -> SnapshotPolicy {
    SnapshotPolicy::Final
}

impl StepControls {
    pub fn new(t_end: f64, record_every: f64) -> Self {
        Self {
            theta: default_theta(),
            dt_min: 1e-12,
            dt_max: record_every.clamp(1e-12, 1.0),
            t_end,
            record_every,
            clamp_tol: default_clamp_tol(),
            max_steps: default_max_steps(),
            snapshots: default_snapshots(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta", self.theta),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("t_end", self.t_end),
            ("record_every", self.record_every),
            ("clamp_tol", self.clamp_tol),
        ] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("controls.{name} is not finite ({v})")));
            }
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Domain(format!("controls.theta = {} must lie in (0, 1)", self.theta)));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(Error::Domain("controls need 0 < dt_min <= dt_max".into()));
        }
        if self.t_end < 0.0 || self.record_every <= 0.0 || self.clamp_tol < 0.0 {
            return Err(Error::Domain("controls need t_end >= 0, record_every > 0, clamp_tol >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtChoice {
    pub dt: f64,
    /// The stability estimate asked for less than `dt_min`.
    pub stiff: bool,
}

/// `θ / max_i (loss rate of cell i relative to g_i)`, clamped to `[dt_min, dt_max]`.
pub fn select_dt(state: &DensityState, bundle: &RhsBundle, controls: &StepControls) -> DtChoice {
    let rate = state
        .g
        .iter()
        .zip(&bundle.dgdt)
        .filter(|(g, _)| **g > EMPTY_CELL)
        .map(|(g, d)| (-d).max(0.0) / g)
        .fold(0.0, f64::max);
    if rate == 0.0 {
        return DtChoice { dt: controls.dt_max, stiff: false };
    }
    let raw = controls.theta / rate;
    DtChoice { dt: raw.clamp(controls.dt_min, controls.dt_max), stiff: raw < controls.dt_min }
}

/// Outcome of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub dt: f64,
    pub rejected: usize,
    pub stiff: bool,
}

fn check_bundle(b: &RhsBundle, t: f64) -> Result<()> {
    if let Some(i) = b.dgdt.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numerical { t, reason: format!("non-finite derivative in cell {i}") });
    }
    if !b.is_finite() {
        return Err(Error::Numerical { t, reason: "non-finite ledger rate".into() });
    }
    Ok(())
}

/// One Heun step of at most `dt_cap` from `state`, whose derivative is `k1`.
///
/// Small negatives are clamped to zero and booked to `clamp_mass`; larger
/// ones halve the step until `dt_min`, after which they are clamped too.
pub fn step_with(
    state: &DensityState,
    k1: &RhsBundle,
    grid: &Grid,
    scheme: &Scheme,
    controls: &StepControls,
    dt_cap: f64,
) -> Result<(DensityState, StepStats)> {
    let choice = select_dt(state, k1, controls);
    let mut dt = choice.dt.min(dt_cap);
    let mut stats = StepStats { stiff: choice.stiff, ..Default::default() };
    let n = state.g.len();
    loop {
        let mut pred = state.clone();
        for i in 0..n {
            pred.g[i] = (state.g[i] + dt * k1.dgdt[i]).max(0.0);
        }
        pred.t = state.t + dt;
        let k2 = scheme.rhs(&pred, grid);
        check_bundle(&k2, pred.t)?;

        let mut next = state.clone();
        let mut clamp = 0.0;
        let mut reject = false;
        for i in 0..n {
            let v = state.g[i] + 0.5 * dt * (k1.dgdt[i] + k2.dgdt[i]);
            if !v.is_finite() {
                return Err(Error::Numerical { t: pred.t, reason: format!("non-finite density in cell {i}") });
            }
            if v < 0.0 {
                let scale = state.g[i].max(pred.g[i]);
                if v < -controls.clamp_tol * scale && dt > controls.dt_min {
                    reject = true;
                    break;
                }
                clamp += v * grid.cell_power_integral(i, 1.0);
                next.g[i] = 0.0;
            } else {
                next.g[i] = v;
            }
        }
        if reject {
            stats.rejected += 1;
            dt = (0.5 * dt).max(controls.dt_min);
            continue;
        }
        let w = 0.5 * dt;
        next.gel_mass += w * (k1.gel_mass_rate + k2.gel_mass_rate);
        next.dust_mass += w * (k1.dust_mass_rate + k2.dust_mass_rate);
        next.dust_number += w * (k1.dust_number_rate + k2.dust_number_rate);
        next.clamp_mass += clamp;
        next.t = state.t + dt;
        stats.dt = dt;
        return Ok((next, stats));
    }
}

/// One adaptive step from `state`.
pub fn step(state: &DensityState, grid: &Grid, scheme: &Scheme, controls: &StepControls) -> Result<DensityState> {
    let k1 = scheme.rhs(state, grid);
    check_bundle(&k1, state.t)?;
    Ok(step_with(state, &k1, grid, scheme, controls, f64::INFINITY)?.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub n0: Vec<f64>,
    pub n1: Vec<f64>,
    pub n_minus_sigma: Vec<f64>,
    pub n_minus_2sigma: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerSeries {
    pub gel_mass: Vec<f64>,
    pub dust_mass: Vec<f64>,
    pub dust_number: Vec<f64>,
    pub clamp_mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub grid: Grid,
    pub model: KernelModel,
    pub controls: StepControls,
    pub admissibility: AdmissibilityReport,
    pub forced: bool,
    /// `max_steps` was exhausted before `t_end`.
    pub truncated: bool,
    pub steps: usize,
    pub rejected_steps: usize,
    pub stiff_steps: usize,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub moments: MomentSeries,
    pub ledger: LedgerSeries,
    pub initial: DensityState,
    pub snapshots: Vec<Snapshot>,
    pub metadata: RunMetadata,
}

impl SimulationResult {
    pub fn n1_initial(&self) -> f64 {
        self.moments.n1[0]
    }

    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("final snapshot is always recorded")
    }

    /// Largest `|N1 + gel + dust + clamp - N1(0)| / N1(0)` over the records.
    pub fn ledger_defect(&self) -> f64 {
        let n1_0 = self.n1_initial();
        (0..self.times.len())
            .map(|k| {
                let total = self.moments.n1[k]
                    + self.ledger.gel_mass[k]
                    + self.ledger.dust_mass[k]
                    + self.ledger.clamp_mass[k];
                (total - n1_0).abs() / n1_0.abs().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Run even when the admissibility verdict fails.
    pub force: bool,
    /// Worker threads for the right-hand side; `None` uses the global pool.
    pub threads: Option<usize>,
}

pub fn run(
    grid: &Grid,
    model: &KernelModel,
    initial: &InitialDataSpec,
    controls: &StepControls,
    opts: RunOptions,
) -> Result<SimulationResult> {
    let state = init_density(grid, initial)?;
    run_from_state(grid, model, state, controls, opts)
}

pub fn run_from_state(
    grid: &Grid,
    model: &KernelModel,
    state: DensityState,
    controls: &StepControls,
    opts: RunOptions,
) -> Result<SimulationResult> {
    controls.validate()?;
    if state.g.len() != grid.n_cells() {
        return Err(Error::Grid(format!(
            "state has {} cells, grid has {}",
            state.g.len(),
            grid.n_cells()
        )));
    }
    let report = validate_model(model)?;
    if !report.verdict() && !opts.force {
        return Err(Error::Inadmissible(report.failures().join(", ")));
    }
    let work = || integrate(grid, model, state, controls, report, opts);
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("cannot start {n} worker threads: {e}")))?
            .install(work),
        None => work(),
    }
}

struct Recorder<'a> {
    grid: &'a Grid,
    sigma: f64,
    times: Vec<f64>,
    moments: MomentSeries,
    ledger: LedgerSeries,
    snapshots: Vec<Snapshot>,
}

impl Recorder<'_> {
    fn record(&mut self, s: &DensityState) -> Result<()> {
        self.times.push(s.t);
        self.moments.n0.push(moment(s, self.grid, 0.0)?);
        self.moments.n1.push(moment(s, self.grid, 1.0)?);
        self.moments.n_minus_sigma.push(moment(s, self.grid, -self.sigma)?);
        self.moments.n_minus_2sigma.push(moment(s, self.grid, -2.0 * self.sigma)?);
        self.ledger.gel_mass.push(s.gel_mass);
        self.ledger.dust_mass.push(s.dust_mass);
        self.ledger.dust_number.push(s.dust_number);
        self.ledger.clamp_mass.push(s.clamp_mass);
        Ok(())
    }

    fn snapshot(&mut self, s: &DensityState) {
        if self.snapshots.last().is_none_or(|l| l.t < s.t) {
            self.snapshots.push(Snapshot { t: s.t, g: s.g.clone() });
        }
    }
}

fn integrate(
    grid: &Grid,
    model: &KernelModel,
    mut state: DensityState,
    controls: &StepControls,
    report: AdmissibilityReport,
    opts: RunOptions,
) -> Result<SimulationResult> {
    let scheme = Scheme::new(grid, model);
    let initial = state.clone();
    let mut rec = Recorder {
        grid,
        sigma: model.sigma,
        times: Vec::new(),
        moments: MomentSeries::default(),
        ledger: LedgerSeries::default(),
        snapshots: Vec::new(),
    };
    let mut snap_times: Vec<f64> = match &controls.snapshots {
        SnapshotPolicy::Times(ts) => ts.iter().copied().filter(|&t| t > state.t && t < controls.t_end).collect(),
        _ => Vec::new(),
    };
    snap_times.sort_by(f64::total_cmp);
    snap_times.dedup();
    let every = controls.snapshots == SnapshotPolicy::EveryRecord;

    rec.record(&state)?;
    if every || matches!(controls.snapshots, SnapshotPolicy::Times(ref ts) if ts.contains(&state.t)) {
        rec.snapshot(&state);
    }

    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut stiff = 0usize;
    let mut truncated = false;
    let mut next_record_k = 1usize;
    let mut snap_idx = 0usize;
    let mut k1 = scheme.rhs(&state, grid);
    check_bundle(&k1, state.t)?;

    while state.t < controls.t_end {
        if steps >= controls.max_steps {
            truncated = true;
            break;
        }
        let t_record = (next_record_k as f64 * controls.record_every).min(controls.t_end);
        let t_snap = snap_times.get(snap_idx).copied().unwrap_or(f64::INFINITY);
        let target = t_record.min(t_snap);
        let (mut next, st) = step_with(&state, &k1, grid, &scheme, controls, target - state.t)?;
        steps += 1;
        rejected += st.rejected;
        stiff += st.stiff as usize;
        // Absorb the round-off between `t + dt` and the target.
        if (target - next.t).abs() <= 1e-12 * target.abs().max(1.0) || next.t > target {
            next.t = target;
        }
        state = next;
        k1 = scheme.rhs(&state, grid);
        check_bundle(&k1, state.t)?;

        if state.t == t_snap {
            rec.snapshot(&state);
            snap_idx += 1;
        }
        if state.t == t_record {
            rec.record(&state)?;
            if every {
                rec.snapshot(&state);
            }
            next_record_k += 1;
        }
    }
    if rec.times.last() != Some(&state.t) {
        rec.record(&state)?;
    }
    rec.snapshot(&state);

    Ok(SimulationResult {
        times: rec.times,
        moments: rec.moments,
        ledger: rec.ledger,
        initial,
        snapshots: rec.snapshots,
        metadata: RunMetadata {
            grid: grid.clone(),
            model: model.clone(),
            controls: controls.clone(),
            admissibility: report,
            forced: opts.force,
            truncated,
            steps,
            rejected_steps: rejected,
            stiff_steps: stiff,
            threads: opts.threads,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_state::build_grid;
    use crate::kernels::{DecayFn, Polynomial, SelectionForm};
    use approx::assert_relative_eq;

    // The multiplicative kernel sits at λ = 1, outside the growth hypothesis.
    const FORCE: RunOptions = RunOptions { force: true, threads: None };

    fn controls(t_end: f64, every: f64) -> StepControls {
        StepControls { dt_max: 0.05, ..StepControls::new(t_end, every) }
    }

    #[test]
    fn dt_from_relative_loss() {
        let grid = Grid::from_parts(vec![1.0, 2.0, 3.0], vec![1.5, 2.5], 1.0).unwrap();
        let state = DensityState::from_density(vec![1.0, 0.0]);
        let mut b = RhsBundle::zeros(2);
        b.dgdt = vec![-2.0, 5.0];
        let c = StepControls { dt_min: 1e-6, dt_max: 1.0, ..StepControls::new(1.0, 1.0) };
        let d = select_dt(&state, &b, &c);
        assert_relative_eq!(d.dt, 0.05);
        assert!(!d.stiff);
        assert_eq!(select_dt(&state, &RhsBundle::zeros(2), &c).dt, 1.0);
        b.dgdt[0] = -1e9;
        let d = select_dt(&state, &b, &c);
        assert_eq!(d.dt, 1e-6);
        assert!(d.stiff);
        let _ = grid;
    }

    #[test]
    fn zero_rate_system_only_advances_time() {
        let grid = build_grid(1e-2, 1e2, 4, 1e-2).unwrap();
        let model = KernelModel::product(0.0, 0.0, Polynomial::linear(1.0), 1.0);
        let s = init_density(&grid, &InitialDataSpec::Exponential { amplitude: 1.0, scale: 1.0 }).unwrap();
        let c = StepControls { dt_min: 0.1, dt_max: 0.1, ..StepControls::new(1.0, 1.0) };
        let next = step(&s, &grid, &Scheme::new(&grid, &model), &c).unwrap();
        assert_eq!(next.g, s.g);
        assert_relative_eq!(next.t, 0.1);
    }

    #[test]
    fn pure_death_matches_closed_form() {
        // One cell whose self-collisions overflow: dN/dt = -N².
        let grid = Grid::from_parts(vec![1.0, 1.5], vec![1.2], 1.0).unwrap();
        let model = KernelModel::product(0.0, 1.0, Polynomial::constant(1.0), 1.0);
        let state = DensityState::from_density(vec![1.0 / 0.5]);
        let c = StepControls { dt_min: 0.01, dt_max: 0.01, theta: 0.5, ..StepControls::new(1.0, 0.5) };
        let r = run_from_state(&grid, &model, state, &c, RunOptions { force: true, threads: None }).unwrap();
        let n = r.moments.n0.last().copied().unwrap();
        assert_eq!(*r.times.last().unwrap(), 1.0);
        assert!((n - 0.5).abs() < 2e-3, "N(1) = {n}");
        assert!(r.ledger_defect() < 1e-12);
    }

    #[test]
    fn pure_fragmentation_number_growth() {
        let grid = build_grid(1e-9, 1e1, 10, 1e-9).unwrap();
        let model = KernelModel::product(0.0, 0.0, Polynomial::linear(1.0), 1.0)
            .with_selection(SelectionForm::PowerBound, 1.0, DecayFn::Power { phi0: 1.0, a: 0.0 })
            .with_gamma(0.0);
        // S(m) = m; with data near m=1, dN0/dt ≈ (η-1) Σ S N.
        let init = InitialDataSpec::Monodisperse { mass: 5.0, number: 1.0 };
        let c = StepControls { snapshots: SnapshotPolicy::EveryRecord, ..controls(0.01, 0.01) };
        let r = run(&grid, &model, &init, &c, RunOptions { force: true, threads: None }).unwrap();
        let s = &r.snapshots[0];
        let rate0: f64 = (0..grid.n_cells())
            .map(|i| grid.pivots()[i] * s.g[i] * grid.widths()[i])
            .sum();
        let growth = (r.moments.n0[1] - r.moments.n0[0]) / 0.01;
        assert_relative_eq!(growth, (model.eta() - 1.0) * rate0, max_relative = 2e-2);
        assert!(r.ledger_defect() < 1e-12);
    }

    #[test]
    fn zero_horizon_records_initial_state() {
        let grid = build_grid(1e-2, 1e2, 4, 1e-2).unwrap();
        let model = KernelModel::product(0.0, 1.0, Polynomial::linear(1.0), 1.0);
        let init = InitialDataSpec::Exponential { amplitude: 1.0, scale: 1.0 };
        let r = run(&grid, &model, &init, &controls(0.0, 0.1), FORCE).unwrap();
        assert_eq!(r.times, vec![0.0]);
        assert_eq!(r.moments.n1[0], moment(&r.initial, &grid, 1.0).unwrap());
        assert_eq!(r.snapshots.len(), 1);
    }

    #[test]
    fn post_gel_mass_decay() {
        let grid = build_grid(0.5, 1e4, 10, 0.5).unwrap();
        let model = KernelModel::product(0.0, 1.0, Polynomial::linear(1.0), 1.0);
        let init = InitialDataSpec::Monodisperse { mass: 1.0, number: 1.0 };
        let r = run(&grid, &model, &init, &controls(3.0, 0.5), FORCE).unwrap();
        let n1 = &r.moments.n1;
        assert!(n1.last().unwrap() < &(0.5 * n1[0]));
        assert!(n1.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
        assert!(r.ledger_defect() < 1e-8);
        assert!(r.ledger.gel_mass.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn inadmissible_model_needs_force() {
        let grid = build_grid(1e-2, 1e2, 4, 1e-2).unwrap();
        let model = KernelModel::product(0.0, -1.0, Polynomial::linear(1.0), 1.0);
        let init = InitialDataSpec::Exponential { amplitude: 1.0, scale: 1.0 };
        let c = controls(0.1, 0.1);
        assert!(matches!(run(&grid, &model, &init, &c, RunOptions::default()), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn snapshot_times_are_hit_exactly() {
        let grid = build_grid(1e-2, 1e2, 4, 1e-2).unwrap();
        let model = KernelModel::product(0.0, 1.0, Polynomial::linear(1.0), 1.0);
        let init = InitialDataSpec::Exponential { amplitude: 1.0, scale: 1.0 };
        let c = StepControls { snapshots: SnapshotPolicy::Times(vec![0.0, 0.123]), ..controls(0.3, 0.1) };
        let r = run(&grid, &model, &init, &c, FORCE).unwrap();
        let ts: Vec<f64> = r.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 0.123, 0.3]);
        assert_eq!(r.times.len(), 4);
        assert!(r.times.windows(2).all(|w| w[1] > w[0]));
    }
}
