//! Finite-volume Crank-Nicolson solver for the one-dimensional
//! Fokker-Planck equation in divergence form
//!
//! ```text
//!     ∂ρ/∂t = ∂/∂x [ D ρ_eq ∂/∂x (ρ/ρ_eq) ]
//! ```
//!
//! on a bounded interval with zero-flux (homogeneous Neumann) boundaries.
//! Interface fluxes are `K_{i+½} (g_{i+1} − g_i)/dx` with `g = ρ/ρ_eq` and
//! `K` the harmonic mean of `D ρ_eq` at the two adjacent cell centers. For a
//! flat `ρ_eq` this is `D_{i+½} (ρ_{i+1} − ρ_i)/dx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DiffusionModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidParameter(format!("empty interval [{x_min}, {x_max}]")));
        }
        if n_cells < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 cells, got {n_cells}")));
        }
        Ok(Self { x_min, x_max, n_cells })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Index of the cell `[x_i, x_{i+1})` containing `x`; the right end of
    /// the domain belongs to the last cell.
    pub fn cell_of(&self, x: f64) -> Result<usize> {
        if !(self.x_min..=self.x_max).contains(&x) {
            return Err(Error::InvalidParameter(format!(
                "{x} outside [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        let i = ((x - self.x_min) / self.dx()).floor() as usize;
        Ok(i.min(self.n_cells - 1))
    }
}

/// Cell-average density on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells {
            return Err(Error::DimensionMismatch { expected: grid.n_cells, got: values.len() });
        }
        Ok(Self { grid, values, time: 0.0 })
    }

    pub fn uniform(grid: Grid1D, value: f64) -> Self {
        Self { grid, values: vec![value; grid.n_cells], time: 0.0 }
    }

    /// Unit mass concentrated in the cell containing `x0`.
    pub fn delta_at(grid: Grid1D, x0: f64) -> Result<Self> {
        let mut values = vec![0.0; grid.n_cells];
        values[grid.cell_of(x0)?] = 1.0 / grid.dx();
        Ok(Self { grid, values, time: 0.0 })
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self { grid, values: grid.centers().into_iter().map(f).collect(), time: 0.0 }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub enum InitialCondition {
    DeltaAt(f64),
    Field(DensityField),
}

/// Solves `A x = rhs` for tridiagonal `A` (Thomas algorithm). `lower[0]`
/// and `upper[n−1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::SingularSolve { row: 0 });
    }
    c[0] = upper[0] / pivot;
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSolve { row: i });
        }
        c[i] = upper[i] / pivot;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Discrete Fokker-Planck operator on a fixed grid.
#[derive(Debug, Clone)]
pub struct FpeOperator {
    grid: Grid1D,
    /// `K_{i+½}` for the interior interfaces `i = 0..n−1`.
    conductance: Vec<f64>,
    rho_eq: Vec<f64>,
}

impl FpeOperator {
    pub fn new(model: &DiffusionModel, grid: Grid1D) -> Result<Self> {
        if model.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: model.dim() });
        }
        let mut weight = Vec::with_capacity(grid.n_cells);
        let mut rho_eq = Vec::with_capacity(grid.n_cells);
        for (i, c) in grid.centers().into_iter().enumerate() {
            let r = model.rho_eq(&[c])?;
            if !(r > 0.0) {
                return Err(Error::NonpositiveEquilibrium { cell: i });
            }
            weight.push(model.diffusion(&[c])? * r);
            rho_eq.push(r);
        }
        let conductance = weight.windows(2).map(|w| 2.0 * w[0] * w[1] / (w[0] + w[1])).collect();
        Ok(Self { grid, conductance, rho_eq })
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    /// Equilibrium density at the cell centers, as returned by the model.
    pub fn rho_eq(&self) -> &[f64] {
        &self.rho_eq
    }

    /// `L ρ`, evaluated through the interface fluxes.
    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        let dx = self.grid.dx();
        let n = rho.len();
        let mut flux = vec![0.0; n + 1];
        for i in 0..n - 1 {
            let g_left = rho[i] / self.rho_eq[i];
            let g_right = rho[i + 1] / self.rho_eq[i + 1];
            flux[i + 1] = self.conductance[i] * (g_right - g_left) / dx;
        }
        (0..n).map(|i| (flux[i + 1] - flux[i]) / dx).collect()
    }

    /// Tridiagonal coefficients of `L` acting on `ρ`.
    fn bands(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.grid.n_cells;
        let dx2 = self.grid.dx() * self.grid.dx();
        let (mut lower, mut diag, mut upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n - 1 {
            let k = self.conductance[i] / dx2;
            // flux through i+½ moves mass between cells i and i+1
            upper[i] += k / self.rho_eq[i + 1];
            diag[i] -= k / self.rho_eq[i];
            lower[i + 1] += k / self.rho_eq[i];
            diag[i + 1] -= k / self.rho_eq[i + 1];
        }
        (lower, diag, upper)
    }

    /// Solves `(I − θ dt L) ρ⁺ = ρ + (1 − θ) dt L ρ` in increment form,
    /// `(I − θ dt L) δ = dt L ρ`, so a discrete equilibrium is kept exactly.
    fn theta_step(&self, rho: &DensityField, dt: f64, theta: f64) -> Result<DensityField> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::NonpositiveDt(dt));
        }
        if rho.grid != self.grid {
            return Err(Error::InvalidParameter("density grid differs from operator grid".into()));
        }
        let rhs: Vec<f64> = self.apply(&rho.values).into_iter().map(|l| dt * l).collect();
        let (lower, diag, upper) = self.bands();
        let scale = theta * dt;
        let a_lower: Vec<f64> = lower.iter().map(|v| -scale * v).collect();
        let a_diag: Vec<f64> = diag.iter().map(|v| 1.0 - scale * v).collect();
        let a_upper: Vec<f64> = upper.iter().map(|v| -scale * v).collect();
        let delta = solve_tridiagonal(&a_lower, &a_diag, &a_upper, &rhs)?;
        let values = rho.values.iter().zip(&delta).map(|(r, d)| r + d).collect();
        Ok(DensityField { grid: self.grid, values, time: rho.time + dt })
    }

    pub fn cn_step(&self, rho: &DensityField, dt: f64) -> Result<DensityField> {
        self.theta_step(rho, dt, 0.5)
    }

    pub fn implicit_euler_step(&self, rho: &DensityField, dt: f64) -> Result<DensityField> {
        self.theta_step(rho, dt, 1.0)
    }
}

/// One Crank-Nicolson step of length `dt`.
pub fn cn_step(model: &DiffusionModel, rho: &DensityField, dt: f64) -> Result<DensityField> {
    FpeOperator::new(model, rho.grid)?.cn_step(rho, dt)
}

/// Implicit-Euler half steps replacing the first Crank-Nicolson steps of a
/// solve from a delta initial condition. Crank-Nicolson alone barely damps
/// the grid-scale modes of a one-cell spike.
pub const DELTA_STARTUP_HALF_STEPS: usize = 8;

fn step_total(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonpositiveDt(dt));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be nonnegative, got {horizon}")));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::NonIntegerStepCount { horizon, step: dt });
    }
    Ok(n as usize)
}

/// Time-stepper shared by the solve and the entropy monitor: calls
/// `observe(step, field)` after the initial condition and after every step.
fn integrate<F>(
    op: &FpeOperator,
    ic: InitialCondition,
    horizon: f64,
    dt: f64,
    startup_half_steps: usize,
    mut observe: F,
) -> Result<DensityField>
where
    F: FnMut(usize, &DensityField) -> Result<()>,
{
    let n_steps = step_total(horizon, dt)?;
    let mut rho = match ic {
        InitialCondition::DeltaAt(x0) => DensityField::delta_at(op.grid, x0)?,
        InitialCondition::Field(f) => {
            if f.grid != op.grid {
                return Err(Error::InvalidParameter("initial field grid differs from solve grid".into()));
            }
            DensityField { time: 0.0, ..f }
        }
    };
    observe(0, &rho)?;
    let startup = (startup_half_steps / 2).min(n_steps);
    for step in 1..=n_steps {
        rho = if step <= startup {
            let half = op.implicit_euler_step(&rho, dt / 2.0)?;
            op.implicit_euler_step(&half, dt / 2.0)?
        } else {
            op.cn_step(&rho, dt)?
        };
        rho.time = step as f64 * dt;
        observe(step, &rho)?;
    }
    Ok(rho)
}

/// Solves to `horizon` with steps of `dt`. A delta initial condition puts
/// all mass in one cell and starts with [`DELTA_STARTUP_HALF_STEPS`]
/// implicit-Euler half steps; a field initial condition is stepped with
/// Crank-Nicolson throughout.
pub fn solve_fpe(
    model: &DiffusionModel,
    grid: Grid1D,
    ic: InitialCondition,
    horizon: f64,
    dt: f64,
) -> Result<DensityField> {
    let startup = match ic {
        InitialCondition::DeltaAt(_) => DELTA_STARTUP_HALF_STEPS,
        InitialCondition::Field(_) => 0,
    };
    solve_fpe_with_startup(model, grid, ic, horizon, dt, startup)
}

pub fn solve_fpe_with_startup(
    model: &DiffusionModel,
    grid: Grid1D,
    ic: InitialCondition,
    horizon: f64,
    dt: f64,
    startup_half_steps: usize,
) -> Result<DensityField> {
    let op = FpeOperator::new(model, grid)?;
    integrate(&op, ic, horizon, dt, startup_half_steps, |_, _| Ok(()))
}

/// Midpoint rule `Σ f(x_i) ρ_i dx`.
pub fn field_expectation(rho: &DensityField, f: impl Fn(f64) -> f64) -> f64 {
    let dx = rho.grid.dx();
    (0..rho.grid.n_cells).map(|i| f(rho.grid.center(i)) * rho.values[i]).sum::<f64>() * dx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropySample {
    pub t: f64,
    /// `H(ρ|ρ_eq)`.
    pub relative_entropy: f64,
    /// `I(ρ|ρ_eq)`.
    pub dissipation: f64,
    /// `‖ρ − ρ_eq‖_{L¹}`.
    pub l1_distance: f64,
}

/// `ρ_eq` at the cell centers, scaled to the mass of `rho`.
fn matched_equilibrium(rho_eq: &[f64], rho: &DensityField) -> Vec<f64> {
    let eq_mass: f64 = rho_eq.iter().sum::<f64>() * rho.grid.dx();
    let scale = rho.mass() / eq_mass;
    rho_eq.iter().map(|r| r * scale).collect()
}

/// `H`, `I` and the L¹ distance of `rho` from the mass-matched equilibrium.
/// Cells with `ρ ≤ 0` contribute nothing to `H` and `I`.
pub fn entropy_diagnostics(rho: &DensityField, rho_eq: &[f64]) -> Result<EntropySample> {
    if let Some(cell) = rho_eq.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::NonpositiveEquilibrium { cell });
    }
    let dx = rho.grid.dx();
    let eq = matched_equilibrium(rho_eq, rho);
    let mut h = 0.0;
    let mut l1 = 0.0;
    for (&p, &q) in rho.values.iter().zip(&eq) {
        if p > 0.0 {
            h += p * (p / q).ln();
        }
        l1 += (p - q).abs();
    }
    let mut dissipation = 0.0;
    for i in 0..rho.values.len() - 1 {
        let (p0, p1) = (rho.values[i], rho.values[i + 1]);
        if p0 > 0.0 && p1 > 0.0 {
            let slope = ((p1 / eq[i + 1]).ln() - (p0 / eq[i]).ln()) / dx;
            dissipation += 0.5 * (p0 + p1) * slope * slope;
        }
    }
    Ok(EntropySample {
        t: rho.time,
        relative_entropy: h * dx,
        dissipation: dissipation * dx,
        l1_distance: l1 * dx,
    })
}

/// Relative entropy and dissipation of the solution with respect to the
/// equilibrium at the requested times (each a multiple of `dt`).
pub fn entropy_decay_series(
    model: &DiffusionModel,
    grid: Grid1D,
    ic: InitialCondition,
    dt: f64,
    sample_times: &[f64],
) -> Result<Vec<EntropySample>> {
    let op = FpeOperator::new(model, grid)?;
    let mut wanted = sample_times.iter().map(|&t| step_total(t, dt)).collect::<Result<Vec<_>>>()?;
    wanted.sort_unstable();
    let last = wanted.last().copied().unwrap_or(0);
    let startup = match ic {
        InitialCondition::DeltaAt(_) => DELTA_STARTUP_HALF_STEPS,
        InitialCondition::Field(_) => 0,
    };
    let mut out = Vec::with_capacity(wanted.len());
    let mut next = 0;
    integrate(&op, ic, last as f64 * dt, dt, startup, |step, rho| {
        while next < wanted.len() && wanted[next] == step {
            out.push(entropy_diagnostics(rho, op.rho_eq())?);
            next += 1;
        }
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::piecewise;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn unit_diffusion() -> DiffusionModel {
        DiffusionModel::new("unit", 1, |_| 1.0, |_| 0.0)
    }

    #[test]
    fn thomas_matches_dense_solve() {
        let lower = [0.0, 1.0, -2.0, 0.5];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let upper = [1.0, 2.0, 1.5, 0.0];
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                diag[i] * x_true[i]
                    + if i > 0 { lower[i] * x_true[i - 1] } else { 0.0 }
                    + if i < 3 { upper[i] * x_true[i + 1] } else { 0.0 }
            })
            .collect();
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for (a, b) in x.iter().zip(x_true) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-13);
        }
        assert!(matches!(
            solve_tridiagonal(&[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::SingularSolve { row: 0 })
        ));
    }

    #[test]
    fn uniform_density_is_stationary() {
        let grid = Grid1D::new(-1.0, 1.0, 64).unwrap();
        let rho = DensityField::uniform(grid, 0.5);
        let next = cn_step(&piecewise(), &rho, 1e-3).unwrap();
        for v in &next.values {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-14);
        }
        assert!(op_apply_is_zero(&piecewise(), grid));
    }

    fn op_apply_is_zero(model: &DiffusionModel, grid: Grid1D) -> bool {
        let op = FpeOperator::new(model, grid).unwrap();
        op.apply(&vec![0.5; grid.n_cells]).iter().all(|&v| v == 0.0)
    }

    #[test]
    fn harmonic_interface_at_jump() {
        let grid = Grid1D::new(-1.0, 1.0, 4).unwrap();
        let op = FpeOperator::new(&piecewise(), grid).unwrap();
        // K = harmonic(1·0.5, 2·0.5) = 2/3 across x = 0
        assert_abs_diff_eq!(op.conductance[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(op.conductance[0], 0.5);
        assert_eq!(op.conductance[2], 1.0);
    }

    #[test]
    fn nonpositive_dt_rejected() {
        let grid = Grid1D::new(-1.0, 1.0, 8).unwrap();
        let rho = DensityField::uniform(grid, 0.5);
        assert!(matches!(cn_step(&unit_diffusion(), &rho, 0.0), Err(Error::NonpositiveDt(_))));
        assert!(matches!(cn_step(&unit_diffusion(), &rho, -1.0), Err(Error::NonpositiveDt(_))));
    }

    #[test]
    fn zero_horizon_returns_discrete_delta() {
        let grid = Grid1D::new(-1.0, 1.0, 16).unwrap();
        let rho = solve_fpe(&piecewise(), grid, InitialCondition::DeltaAt(0.0), 0.0, 1e-3).unwrap();
        assert_eq!(rho, DensityField::delta_at(grid, 0.0).unwrap());
        assert_eq!(rho.values[8], 8.0);
        assert_abs_diff_eq!(rho.mass(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cosine_mode_decays_at_heat_rate() {
        let eps = 0.1;
        let t = 0.2;
        let grid = Grid1D::new(-1.0, 1.0, 400).unwrap();
        let dx = grid.dx();
        // exact cell averages of 1/2 + ε cos(π(x+1)/2)
        let k = PI / 2.0;
        let avg = |i: usize| {
            let a = grid.x_min + i as f64 * dx;
            0.5 + eps * ((k * (a + dx + 1.0)).sin() - (k * (a + 1.0)).sin()) / (k * dx)
        };
        let ic = DensityField::new(grid, (0..grid.n_cells).map(avg).collect()).unwrap();
        let rho = solve_fpe(&unit_diffusion(), grid, InitialCondition::Field(ic.clone()), t, 1e-3).unwrap();
        let decay = (-k * k * t).exp();
        for i in 0..grid.n_cells {
            let expected = 0.5 + (ic.values[i] - 0.5) * decay;
            assert_abs_diff_eq!(rho.values[i], expected, epsilon = 1e-5);
        }
    }

    #[test]
    fn symmetric_problem_stays_symmetric() {
        let grid = Grid1D::new(-1.0, 1.0, 101).unwrap();
        let rho = solve_fpe(&unit_diffusion(), grid, InitialCondition::DeltaAt(0.0), 0.05, 1e-4).unwrap();
        let n = grid.n_cells;
        for i in 0..n / 2 {
            assert_abs_diff_eq!(rho.values[i], rho.values[n - 1 - i], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(field_expectation(&rho, |x| x), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_of_one_is_mass() {
        let grid = Grid1D::new(-1.0, 1.0, 50).unwrap();
        let rho = DensityField::uniform(grid, 0.5);
        assert_abs_diff_eq!(field_expectation(&rho, |_| 1.0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn equilibrium_has_zero_entropy() {
        let grid = Grid1D::new(-1.0, 1.0, 32).unwrap();
        let rho = DensityField::uniform(grid, 0.5);
        let s = entropy_diagnostics(&rho, &vec![0.5; 32]).unwrap();
        assert_eq!((s.relative_entropy, s.dissipation, s.l1_distance), (0.0, 0.0, 0.0));
        assert!(matches!(
            entropy_diagnostics(&rho, &vec![0.0; 32]),
            Err(Error::NonpositiveEquilibrium { cell: 0 })
        ));
    }

    #[test]
    fn nonuniform_equilibrium_is_stationary() {
        // ρ_eq ∝ exp(−x²), D = 1 + x²/2
        let model = DiffusionModel::new("ou", 1, |x| 1.0 + 0.5 * x[0] * x[0], |x| -x[0] * x[0]);
        let grid = Grid1D::new(-2.0, 2.0, 80).unwrap();
        let eq = DensityField::from_fn(grid, |x| (-x * x).exp());
        let next = cn_step(&model, &eq, 0.01).unwrap();
        for (a, b) in next.values.iter().zip(&eq.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }
}
