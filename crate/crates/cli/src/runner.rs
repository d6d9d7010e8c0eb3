//! Executes the sections of an [`ExperimentConfig`].
//!
//! Every ensemble and trajectory draws from streams seeded by
//! `derive_seed(base_seed, [section, scheme, h])`, so each `(scheme, h)`
//! has its own independent randomness and reruns reproduce every number.

use std::collections::BTreeMap;

use mhsde::fpe::{field_expectation, solve_fpe, DensityField, InitialCondition};
use mhsde::integrator::{simulate_ensemble_multi, simulate_trajectory, step_count, TestFn};
use mhsde::rng::{derive_seed, RngStream};
use mhsde::stats::{
    effective_diffusion, fit_order_with_threshold, occupancy_with_stderr, weak_error_exact, weak_error_self,
    ConvergenceRow, Histogram, WeakError,
};
use mhsde::{DiffusionModel, EnsembleStats, Scheme};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FpeGrid, InitialSpec, Reference};
use crate::error::{CliError, Result};
use crate::expr::Expr;

const TAG_CONVERGENCE: u64 = 1;
const TAG_EQUILIBRIUM: u64 = 2;

fn scheme_tag(s: Scheme) -> u64 {
    match s {
        Scheme::Mh => 0,
        Scheme::Em => 1,
    }
}

/// Seed of the ensemble for `(scheme, h)` in the convergence study.
pub fn ensemble_seed(base_seed: u64, scheme: Scheme, h: f64) -> u64 {
    derive_seed(base_seed, &[TAG_CONVERGENCE, scheme_tag(scheme), h.to_bits()])
}

/// Seed of the long trajectory for `(scheme, h)` in the equilibrium study.
pub fn trajectory_seed(base_seed: u64, scheme: Scheme, h: f64) -> u64 {
    derive_seed(base_seed, &[TAG_EQUILIBRIUM, scheme_tag(scheme), h.to_bits()])
}

fn context(scheme: Scheme, h: f64) -> String {
    format!("scheme {}, h = {h}", scheme.as_str())
}

/// One line of the convergence table. For a self reference `reference` is
/// the mean at `h/2`; `stderr` is the standard error of `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLine {
    pub scheme: Scheme,
    pub f: String,
    pub h: f64,
    pub mean: f64,
    pub stderr: f64,
    pub reference: f64,
    pub error: f64,
}

/// Observed order for one `(scheme, f)`. `slope` is absent when fewer than
/// three rows had a resolvable error; `note` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub scheme: Scheme,
    pub f: String,
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    /// Step lengths whose rows entered the fit.
    pub used_h: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOutput {
    pub lines: Vec<ConvergenceLine>,
    pub fits: Vec<SlopeFit>,
    /// Reference values computed by the Fokker-Planck solver, one per test
    /// function, when that reference was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpe_reference: Option<Vec<f64>>,
}

impl ConvergenceOutput {
    pub fn fit(&self, scheme: Scheme, f: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|s| s.scheme == scheme && s.f == f)
    }

    pub fn lines_for(&self, scheme: Scheme, f: &str) -> Vec<&ConvergenceLine> {
        self.lines.iter().filter(|l| l.scheme == scheme && l.f == f).collect()
    }
}

fn test_fns(exprs: &[Expr]) -> Vec<Box<dyn Fn(&[f64]) -> f64 + Sync + '_>> {
    exprs.iter().map(|e| Box::new(move |x: &[f64]| e.eval(x[0])) as Box<dyn Fn(&[f64]) -> f64 + Sync>).collect()
}

/// Expectations of the test functions under the Fokker-Planck solution
/// started from a delta at `x0`.
pub fn fpe_reference(model: &DiffusionModel, x0: f64, horizon: f64, spec: &FpeGrid, tests: &[Expr]) -> Result<Vec<f64>> {
    let rho = solve_fpe(model, spec.grid()?, InitialCondition::DeltaAt(x0), horizon, spec.dt)
        .map_err(|e| CliError::runtime("fpe reference", e))?;
    Ok(tests.iter().map(|f| field_expectation(&rho, |x| f.eval(x))).collect())
}

fn run_ensembles(
    model: &DiffusionModel,
    cfg: &ExperimentConfig,
    scheme: Scheme,
    hs: &[f64],
    tests: &[TestFn<'_>],
) -> Result<BTreeMap<u64, Vec<EnsembleStats>>> {
    let c = cfg.convergence.as_ref().expect("convergence section");
    let mut out = BTreeMap::new();
    for &h in hs {
        if out.contains_key(&h.to_bits()) {
            continue;
        }
        let seed = ensemble_seed(cfg.base_seed, scheme, h);
        let stats = simulate_ensemble_multi(model, scheme, &[cfg.x0], h, c.t, c.m, tests, seed)
            .map_err(|e| CliError::runtime(context(scheme, h), e))?;
        out.insert(h.to_bits(), stats);
    }
    Ok(out)
}

/// Runs the convergence section: ensembles for every `(scheme, h)`, errors
/// against the declared reference, and a slope per `(scheme, f)`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceOutput> {
    let c = cfg
        .convergence
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no convergence section".into()))?;
    let model = cfg.build_model()?;
    let boxed = test_fns(&c.test_functions);
    let tests: Vec<TestFn<'_>> = boxed.iter().map(|b| &**b as TestFn<'_>).collect();

    let (exact, fpe_reference_values) = match &c.reference {
        Reference::Exact(values) => (Some(values.iter().map(|v| v.constant().unwrap_or(f64::NAN)).collect::<Vec<_>>()), None),
        Reference::SelfDifference => (None, None),
        Reference::Fpe(spec) => {
            let values = fpe_reference(&model, cfg.x0, c.t, spec, &c.test_functions)?;
            (Some(values.clone()), Some(values))
        }
    };

    let mut lines = Vec::new();
    let mut fits = Vec::new();
    for scheme in c.scheme.schemes() {
        let mut needed = c.h.clone();
        if exact.is_none() {
            needed.extend(c.h.iter().map(|h| h / 2.0));
        }
        let ensembles = run_ensembles(&model, cfg, scheme, &needed, &tests)?;
        for (k, f) in c.test_functions.iter().enumerate() {
            let mut rows = Vec::new();
            for &h in &c.h {
                let stats = &ensembles[&h.to_bits()][k];
                let (reference, err) = match &exact {
                    Some(values) => (values[k], weak_error_exact(stats, values[k])),
                    None => {
                        let half = &ensembles[&(h / 2.0).to_bits()][k];
                        (half.mean, weak_error_self(stats, half))
                    }
                };
                let err: WeakError = err.map_err(|e| CliError::runtime(context(scheme, h), e))?;
                lines.push(ConvergenceLine {
                    scheme,
                    f: f.source().to_string(),
                    h,
                    mean: stats.mean,
                    stderr: err.stderr,
                    reference,
                    error: err.error,
                });
                rows.push(ConvergenceRow::new(h, err.error, err.stderr));
            }
            fits.push(match fit_order_with_threshold(&rows, c.min_error_ratio) {
                Ok(report) => SlopeFit {
                    scheme,
                    f: f.source().to_string(),
                    slope: Some(report.slope),
                    slope_stderr: Some(report.slope_stderr),
                    used_h: report.rows.iter().filter(|r| r.used).map(|r| r.h).collect(),
                    note: None,
                },
                Err(e) => SlopeFit {
                    scheme,
                    f: f.source().to_string(),
                    slope: None,
                    slope_stderr: None,
                    used_h: Vec::new(),
                    note: Some(e.to_string()),
                },
            });
        }
    }
    Ok(ConvergenceOutput { lines, fits, fpe_reference: fpe_reference_values })
}

/// One bin of the equilibrium table. `deff` is absent for bins no step
/// started in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumLine {
    pub x_left: f64,
    pub x_right: f64,
    pub density: f64,
    pub density_se: f64,
    pub deff: Option<f64>,
    pub deff_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumTable {
    pub scheme: Scheme,
    pub h: f64,
    pub steps: u64,
    pub acceptance_rate: f64,
    /// States that fell outside the histogram range.
    pub out_of_range: u64,
    pub lines: Vec<EquilibriumLine>,
}

/// Runs the equilibrium section: one long trajectory per `h`, its
/// occupation histogram and bin-wise effective diffusion.
pub fn run_equilibrium(cfg: &ExperimentConfig) -> Result<Vec<EquilibriumTable>> {
    let e = cfg
        .equilibrium
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no equilibrium section".into()))?;
    let model = cfg.build_model()?;
    let edges = Histogram::uniform_edges(e.range[0], e.range[1], e.bins);
    let mut tables = Vec::with_capacity(e.h.len());
    for &h in &e.h {
        let ctx = || context(e.scheme, h);
        let n_steps = step_count(e.t, h).map_err(|err| CliError::runtime(ctx(), err))?;
        let mut rng = RngStream::new(trajectory_seed(cfg.base_seed, e.scheme, h), 0);
        let traj = simulate_trajectory(&model, e.scheme, &[cfg.x0], h, n_steps, &mut rng)
            .map_err(|err| CliError::runtime(ctx(), err))?;
        let (hist, density_se) =
            occupancy_with_stderr(&traj, &edges, e.batches).map_err(|err| CliError::runtime(ctx(), err))?;
        let deff = effective_diffusion(&traj, &edges, e.batches).map_err(|err| CliError::runtime(ctx(), err))?;
        let density = hist.density();
        let lines = (0..hist.bins())
            .map(|i| EquilibriumLine {
                x_left: edges[i],
                x_right: edges[i + 1],
                density: density[i],
                density_se: density_se[i],
                deff: deff[i].estimate,
                deff_se: deff[i].stderr,
            })
            .collect();
        tables.push(EquilibriumTable {
            scheme: e.scheme,
            h,
            steps: n_steps,
            acceptance_rate: if n_steps == 0 { 1.0 } else { traj.accepted() as f64 / n_steps as f64 },
            out_of_range: hist.out_of_range,
            lines,
        });
    }
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpeOutput {
    pub field: DensityField,
    /// `(f, ∫ f ρ dx)` for each requested test function.
    pub expectations: Vec<(String, f64)>,
}

/// Runs the fpe section: solves to `t` and evaluates the test functions.
pub fn run_fpe(cfg: &ExperimentConfig) -> Result<FpeOutput> {
    let f = cfg.fpe.as_ref().ok_or_else(|| CliError::Config("config has no fpe section".into()))?;
    let model = cfg.build_model()?;
    let grid = f.grid_spec().grid()?;
    let ic = match &f.initial {
        InitialSpec::Delta => InitialCondition::DeltaAt(cfg.x0),
        InitialSpec::Field(expr) => InitialCondition::Field(DensityField::from_fn(grid, |x| expr.eval(x))),
    };
    let field = solve_fpe(&model, grid, ic, f.t, f.dt).map_err(|e| CliError::runtime("fpe solve", e))?;
    let expectations = f
        .test_functions
        .iter()
        .map(|e| (e.source().to_string(), field_expectation(&field, |x| e.eval(x))))
        .collect();
    Ok(FpeOutput { field, expectations })
}
