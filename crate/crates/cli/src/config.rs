//! Declarative experiment configuration, read from JSON.
//!
//! ```json
//! {
//!   "model": "arcsine",
//!   "x0": 0.5,
//!   "base_seed": 7,
//!   "convergence": {
//!     "scheme": "mh", "t": 1.0, "h": [0.125, 0.0625], "m": 100000,
//!     "test_functions": ["x", "x^2"],
//!     "reference": { "exact": ["1/(2*sqrt(e))", "1/2 - 1/(4*e^2)"] }
//!   }
//! }
//! ```
//!
//! `model` is a builtin label or an inline definition
//! `{"label", "diffusion", "ln_rho_eq", "lower", "upper"}` with expressions
//! over `x` and an optional open interval as support. The reference is
//! `{"exact": [...]}` (one constant expression per test function), `"self"`
//! (compare step `h` with `h/2`) or `{"fpe": {"x_min", "x_max", "n_cells",
//! "dt"}}`.

use std::path::{Path, PathBuf};

use mhsde::fpe::Grid1D;
use mhsde::integrator::step_count;
use mhsde::{builtin_model, DiffusionModel, Scheme};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub x0: f64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpe: Option<FpeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Builtin(String),
    Inline(InlineModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineModel {
    pub label: String,
    pub diffusion: Expr,
    pub ln_rho_eq: Expr,
    /// Open lower end of the support; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeChoice {
    Mh,
    Em,
    Both,
}

impl SchemeChoice {
    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeChoice::Mh => vec![Scheme::Mh],
            SchemeChoice::Em => vec![Scheme::Em],
            SchemeChoice::Both => vec![Scheme::Mh, Scheme::Em],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub scheme: SchemeChoice,
    pub t: f64,
    pub h: Vec<f64>,
    pub m: u64,
    pub test_functions: Vec<Expr>,
    pub reference: Reference,
    /// Rows whose error does not exceed this multiple of their standard
    /// error are left out of the slope fit.
    #[serde(default = "default_min_error_ratio")]
    pub min_error_ratio: f64,
}

fn default_min_error_ratio() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Exact(Vec<Expr>),
    #[serde(rename = "self")]
    SelfDifference,
    Fpe(FpeGrid),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub dt: f64,
}

impl FpeGrid {
    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.x_min, self.x_max, self.n_cells).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub t: f64,
    pub h: Vec<f64>,
    pub bins: usize,
    pub range: [f64; 2],
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_scheme() -> Scheme {
    Scheme::Mh
}

fn default_batches() -> usize {
    mhsde::stats::DEFAULT_BATCHES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpeSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub dt: f64,
    pub t: f64,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub test_functions: Vec<Expr>,
}

/// `"delta"` puts unit mass in the cell containing `x0`; `{"field": expr}`
/// samples the expression at cell centers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialSpec {
    #[default]
    Delta,
    Field(Expr),
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The model named or defined by the config.
    pub fn build_model(&self) -> Result<DiffusionModel> {
        match &self.model {
            ModelSpec::Builtin(label) => builtin_model(label).ok_or_else(|| {
                let known: Vec<_> = mhsde::model::builtin_descriptions().iter().map(|(l, _)| *l).collect();
                config_err(format!("unknown model `{label}` (builtin models: {})", known.join(", ")))
            }),
            ModelSpec::Inline(m) => Ok(m.build()),
        }
    }

    /// Checks everything that can be checked without running: the model
    /// evaluates at `x0`, every step divides its horizon, references match
    /// the test functions.
    pub fn validate(&self) -> Result<()> {
        let model = self.build_model()?;
        if model.dim() != 1 {
            return Err(config_err("only one-dimensional models are supported by the runner"));
        }
        if !self.x0.is_finite() || !model.in_support(&[self.x0]) {
            return Err(config_err(format!("x0 = {} is outside the support of `{}`", self.x0, model.label())));
        }
        model.diffusion(&[self.x0]).map_err(|e| config_err(format!("model at x0: {e}")))?;
        let lr = model.ln_rho_eq(&[self.x0]).map_err(|e| config_err(format!("model at x0: {e}")))?;
        if !lr.is_finite() {
            return Err(config_err("ln_rho_eq is not finite at x0"));
        }
        if self.convergence.is_none() && self.equilibrium.is_none() && self.fpe.is_none() {
            return Err(config_err("config has no convergence, equilibrium or fpe section"));
        }
        if let Some(c) = &self.convergence {
            c.validate()?;
        }
        if let Some(e) = &self.equilibrium {
            e.validate()?;
        }
        if let Some(f) = &self.fpe {
            f.validate(self.x0)?;
        }
        Ok(())
    }
}

impl InlineModel {
    pub fn build(&self) -> DiffusionModel {
        let d = self.diffusion.clone();
        let r = self.ln_rho_eq.clone();
        let (lo, hi) = (self.lower.unwrap_or(f64::NEG_INFINITY), self.upper.unwrap_or(f64::INFINITY));
        DiffusionModel::new(self.label.clone(), 1, move |x| d.eval(x[0]), move |x| r.eval(x[0]))
            .with_support(move |x| x[0] > lo && x[0] < hi)
    }
}

fn check_steps(t: f64, hs: &[f64], what: &str) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(config_err(format!("{what}: horizon t must be positive, got {t}")));
    }
    if hs.is_empty() {
        return Err(config_err(format!("{what}: step list h is empty")));
    }
    for &h in hs {
        if !(h > 0.0 && h.is_finite()) {
            return Err(config_err(format!("{what}: step h = {h} must be positive")));
        }
        step_count(t, h).map_err(|e| config_err(format!("{what}: {e}")))?;
    }
    Ok(())
}

impl ConvergenceSection {
    fn validate(&self) -> Result<()> {
        check_steps(self.t, &self.h, "convergence")?;
        if self.m < 2 {
            return Err(config_err("convergence: m must be at least 2"));
        }
        if self.test_functions.is_empty() {
            return Err(config_err("convergence: no test functions"));
        }
        if !(self.min_error_ratio >= 0.0) {
            return Err(config_err("convergence: min_error_ratio must be nonnegative"));
        }
        match &self.reference {
            Reference::Exact(values) => {
                if values.len() != self.test_functions.len() {
                    return Err(config_err(format!(
                        "convergence: {} exact reference(s) for {} test function(s)",
                        values.len(),
                        self.test_functions.len()
                    )));
                }
                for v in values {
                    match v.constant() {
                        Some(c) if c.is_finite() => {}
                        _ => return Err(config_err(format!("convergence: reference `{v}` is not a finite constant"))),
                    }
                }
            }
            Reference::SelfDifference => {}
            Reference::Fpe(g) => {
                g.grid()?;
                if !(g.dt > 0.0) {
                    return Err(config_err("convergence: fpe reference needs dt > 0"));
                }
                step_count(self.t, g.dt).map_err(|e| config_err(format!("convergence fpe reference: {e}")))?;
            }
        }
        Ok(())
    }
}

impl EquilibriumSection {
    fn validate(&self) -> Result<()> {
        check_steps(self.t, &self.h, "equilibrium")?;
        if self.bins == 0 {
            return Err(config_err("equilibrium: bins must be positive"));
        }
        if !(self.range[0] < self.range[1]) || !self.range.iter().all(|v| v.is_finite()) {
            return Err(config_err("equilibrium: range must be an increasing finite pair"));
        }
        if self.batches < 2 {
            return Err(config_err("equilibrium: at least 2 batches are needed"));
        }
        Ok(())
    }
}

impl FpeSection {
    pub fn grid_spec(&self) -> FpeGrid {
        FpeGrid { x_min: self.x_min, x_max: self.x_max, n_cells: self.n_cells, dt: self.dt }
    }

    fn validate(&self, x0: f64) -> Result<()> {
        let grid = self.grid_spec().grid()?;
        if !(self.dt > 0.0) {
            return Err(config_err("fpe: dt must be positive"));
        }
        if !(self.t >= 0.0) {
            return Err(config_err("fpe: t must be nonnegative"));
        }
        if self.t > 0.0 {
            step_count(self.t, self.dt).map_err(|e| config_err(format!("fpe: {e}")))?;
        }
        if self.initial == InitialSpec::Delta {
            grid.cell_of(x0).map_err(|e| config_err(format!("fpe: {e}")))?;
        }
        Ok(())
    }
}
