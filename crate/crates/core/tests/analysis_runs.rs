use cmfe_core::analysis::{
    activity_above, apriori_estimates, estimate_gel_time, max_residual, moment_balance_residual, GelTime, ThetaSpec,
    DEFAULT_GEL_TOLERANCE,
};
use cmfe_core::grid_state::{build_grid, moment, Grid, InitialDataSpec};
use cmfe_core::integrator::{run, RunOptions, SimulationResult, SnapshotPolicy, StepControls};
use cmfe_core::kernels::{DecayFn, KernelForm, KernelModel, Polynomial, SelectionForm};

const FORCE: RunOptions = RunOptions { force: true, threads: None };

fn exponential() -> InitialDataSpec {
    InitialDataSpec::Exponential { amplitude: 1.0, scale: 1.0 }
}

fn piecewise(sigma: f64, gamma: f64, k1: f64, k3: f64) -> KernelModel {
    KernelModel {
        sigma,
        gamma,
        k1,
        k3,
        gamma_poly: Polynomial::linear(1.0),
        lambda_growth: 1.0,
        phi: DecayFn::Power { phi0: 1.0, a: 1.0 },
        kernel_form: KernelForm::Piecewise,
        selection_form: SelectionForm::PowerBound,
    }
}

fn recorded(grid: &Grid, model: &KernelModel, t_end: f64, every: f64, opts: RunOptions) -> SimulationResult {
    let c = StepControls { dt_max: every, snapshots: SnapshotPolicy::EveryRecord, ..StepControls::new(t_end, every) };
    run(grid, model, &exponential(), &c, opts).unwrap()
}

#[test]
fn activity_above_cut_stays_below_a_dagger() {
    let grid = build_grid(1e-6, 1e4, 10, 1e-6).unwrap();
    for (sigma, gamma, k3) in [(0.1, 0.0, 0.1), (0.25, -0.2, 0.5)] {
        let model = piecewise(sigma, gamma, 1.0, k3);
        let r = recorded(&grid, &model, 5.0, 0.05, RunOptions::default());
        let n1 = r.n1_initial();
        let q = n1 + moment(&r.initial, &grid, -2.0 * sigma).unwrap();
        for cut in [1.5, 2.0, 10.0] {
            let bound = apriori_estimates(&model, q, n1, 5.0, cut).unwrap().a_dagger;
            let activity = activity_above(&r, &grid, &model, cut).unwrap();
            assert!(activity >= 0.0);
            assert!(activity <= bound * 1.05, "σ={sigma} cut={cut}: {activity} > {bound}");
        }
    }
}

#[test]
fn static_system_has_zero_residual() {
    let grid = build_grid(1e-3, 1e3, 8, 1e-3).unwrap();
    let model = piecewise(0.25, 0.0, 0.0, 0.0);
    let r = recorded(&grid, &model, 1.0, 0.1, FORCE);
    for theta in [ThetaSpec::ConstantOne, ThetaSpec::MassCapped { cap: 1.0 }] {
        assert_eq!(max_residual(&moment_balance_residual(&r, theta, &model, &grid).unwrap()), 0.0);
    }
}

#[test]
fn pure_fragmentation_number_residual() {
    let grid = build_grid(1e-6, 1e4, 10, 1e-6).unwrap();
    let model = piecewise(0.1, -0.2, 0.0, 0.5);
    let r = recorded(&grid, &model, 2.0, 0.02, FORCE);
    let res = max_residual(&moment_balance_residual(&r, ThetaSpec::ConstantOne, &model, &grid).unwrap());
    assert!(res <= 1e-3, "{res}");
}

#[test]
fn capped_mass_above_grid_reduces_to_ledger() {
    let grid = build_grid(1e-3, 1e3, 10, 1e-3).unwrap();
    let model = KernelModel::product(0.0, 1.0, Polynomial::linear(1.0), 1.0);
    let r = recorded(&grid, &model, 2.0, 0.05, FORCE);
    assert!(*r.ledger.gel_mass.last().unwrap() > 1e-3, "run must reach the gel regime");
    let res = max_residual(&moment_balance_residual(&r, ThetaSpec::MassCapped { cap: 1e4 }, &model, &grid).unwrap());
    assert!(res <= 1e-8, "{res}");
}

#[test]
fn coagulation_residual_shrinks_under_refinement() {
    let model = KernelModel::product(0.0, 1.0, Polynomial::constant(1.0), 1.0);
    let residual = |cpd: usize, every: f64| {
        let grid = build_grid(1e-4, 1e4, cpd, 1e-4).unwrap();
        let r = recorded(&grid, &model, 1.0, every, FORCE);
        max_residual(&moment_balance_residual(&r, ThetaSpec::ConstantOne, &model, &grid).unwrap())
    };
    let (coarse, fine) = (residual(10, 0.02), residual(20, 0.01));
    assert!(coarse <= 1e-3, "{coarse}");
    assert!(coarse >= 1.5 * fine, "{coarse} vs {fine}");
}

fn gel_sweep(model: &KernelModel) -> GelTime {
    let results: Vec<_> = [1e2, 1e3, 1e4]
        .into_iter()
        .map(|top| {
            let grid = build_grid(1e-3, top, 10, 1e-3).unwrap();
            let c = StepControls { dt_max: 0.05, ..StepControls::new(3.0, 0.05) };
            run(&grid, model, &exponential(), &c, FORCE).unwrap()
        })
        .collect();
    estimate_gel_time(&results, DEFAULT_GEL_TOLERANCE).unwrap().gel_time
}

#[test]
fn constant_kernel_does_not_gel() {
    let model = KernelModel::product(0.0, 1.0, Polynomial::constant(1.0), 1.0);
    assert_eq!(gel_sweep(&model), GelTime::NotDetected);
}

#[test]
fn zero_kernel_does_not_gel() {
    let model = KernelModel::product(0.0, 0.0, Polynomial::constant(1.0), 1.0);
    assert_eq!(gel_sweep(&model), GelTime::NotDetected);
}
