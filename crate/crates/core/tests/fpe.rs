use std::f64::consts::PI;

use mhsde::fpe::{
    entropy_decay_series, entropy_diagnostics, field_expectation, solve_fpe, DensityField, FpeOperator, Grid1D,
    InitialCondition,
};
use mhsde::model::piecewise;
use mhsde::DiffusionModel;

fn unit_diffusion() -> DiffusionModel {
    DiffusionModel::new("unit", 1, |_| 1.0, |_| 0.0)
}

const EPS: f64 = 0.25;

/// Exact solution of `ρ_t = ρ_xx` on `[−1, 1]` with zero-flux ends for the
/// slowest cosine mode.
fn cosine_mode(x: f64, t: f64) -> f64 {
    0.5 + EPS * (-(PI / 2.0).powi(2) * t).exp() * (PI * (x + 1.0) / 2.0).cos()
}

fn cosine_error(n_cells: usize, dt: f64, horizon: f64) -> f64 {
    let grid = Grid1D::new(-1.0, 1.0, n_cells).unwrap();
    let ic = DensityField::from_fn(grid, |x| cosine_mode(x, 0.0));
    let rho = solve_fpe(&unit_diffusion(), grid, InitialCondition::Field(ic), horizon, dt).unwrap();
    (0..n_cells).map(|i| (rho.values[i] - cosine_mode(grid.center(i), horizon)).abs()).fold(0.0, f64::max)
}

#[test]
fn second_order_under_joint_refinement() {
    let horizon = 0.5;
    let errors: Vec<f64> = [16usize, 32, 64, 128]
        .iter()
        .map(|&n| cosine_error(n, 0.4 / n as f64, horizon))
        .collect();
    for w in errors.windows(2) {
        let factor = w[0] / w[1];
        assert!((3.5..=4.5).contains(&factor), "refinement factor {factor} from {errors:?}");
    }
}

#[test]
fn example_four_relaxes_to_uniform() {
    let grid = Grid1D::new(-1.0, 1.0, 200).unwrap();
    let rho = solve_fpe(&piecewise(), grid, InitialCondition::DeltaAt(0.0), 20.0, 1e-3).unwrap();
    let dist = rho.values.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    assert!(dist < 1e-8, "max distance {dist:e}");
    assert!((rho.mass() - 1.0).abs() < 1e-11);
}

#[test]
fn entropy_decays_and_bounds_l1() {
    let grid = Grid1D::new(-1.0, 1.0, 512).unwrap();
    let dt = 1e-4;
    let times: Vec<f64> = (0..=3000).map(|k| k as f64 * dt).collect();
    let series = entropy_decay_series(&piecewise(), grid, InitialCondition::DeltaAt(0.0), dt, &times).unwrap();
    assert_eq!(series.len(), times.len());
    for w in series.windows(2) {
        assert!(w[1].relative_entropy <= w[0].relative_entropy + 1e-10, "H rose at t = {}", w[1].t);
    }
    for s in &series {
        assert!(s.relative_entropy >= 0.5 * s.l1_distance * s.l1_distance - 1e-12, "CK fails at t = {}", s.t);
        assert!(s.dissipation >= 0.0);
    }
    assert!(series.last().unwrap().relative_entropy < 1e-2 * series[1].relative_entropy);
}

#[test]
fn equilibrium_has_no_entropy() {
    let grid = Grid1D::new(-1.0, 1.0, 40).unwrap();
    let op = FpeOperator::new(&piecewise(), grid).unwrap();
    let rho = DensityField::uniform(grid, 0.5);
    let s = entropy_diagnostics(&rho, op.rho_eq()).unwrap();
    assert_eq!((s.relative_entropy, s.dissipation, s.l1_distance), (0.0, 0.0, 0.0));
}

#[test]
fn symmetric_field_has_zero_mean() {
    let grid = Grid1D::new(-1.0, 1.0, 101).unwrap();
    let rho = solve_fpe(&unit_diffusion(), grid, InitialCondition::DeltaAt(0.0), 0.05, 1e-3).unwrap();
    assert!(field_expectation(&rho, |x| x).abs() < 1e-12);
    assert!((field_expectation(&rho, |_| 1.0) - 1.0).abs() < 1e-12);
}

#[test]
fn example_four_mean_drifts_to_high_diffusion_side() {
    let grid = Grid1D::new(-1.0, 1.0, 1024).unwrap();
    let rho = solve_fpe(&piecewise(), grid, InitialCondition::DeltaAt(0.0), 1.0, 4e-5).unwrap();
    let mean = field_expectation(&rho, |x| x);
    assert!(mean > 0.0 && mean < 0.02, "{mean}");
    assert!(rho.min_value() > 0.0);
}
