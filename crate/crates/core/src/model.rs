//! Problem definitions in terms of a diffusion coefficient `D(x)` and an
//! equilibrium density `ρ_eq(x)`, and the drift/noise coefficients they
//! determine under detailed balance:
//!
//! ```text
//!     a(x) = ∇D(x) + D(x) ∇ln ρ_eq(x),    b(x) = √(2 D(x))
//! ```

use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type SupportFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Relative step of the central finite-difference fallback.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

/// Noise amplitude `√(2D)`. Shared by the proposal and by `b(x)` so both
/// follow the same floating-point path.
#[inline]
pub fn noise_amplitude(diffusion: f64) -> f64 {
    (2.0 * diffusion).sqrt()
}

/// A known value of `E f(X(T))` for the exact process started at `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactReference {
    /// Test function in the expression syntax of the experiment runner.
    pub test: &'static str,
    pub x0: f64,
    pub horizon: f64,
    pub value: f64,
}

/// A diffusion specified by `(D, ρ_eq)`.
///
/// `ln_rho_eq` may be unnormalized: only ratios of the equilibrium density
/// enter the integrator. Outside the support the log density is reported as
/// `-∞`, which the acceptance probability maps to a rejection.
#[derive(Clone)]
pub struct DiffusionModel {
    label: String,
    dim: usize,
    diffusion: ScalarFn,
    ln_rho_eq: ScalarFn,
    support: SupportFn,
    grad_diffusion: Option<GradientFn>,
    grad_ln_rho_eq: Option<GradientFn>,
    singular_drift: bool,
    references: Vec<ExactReference>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("analytic_grad_diffusion", &self.grad_diffusion.is_some())
            .field("analytic_grad_ln_rho_eq", &self.grad_ln_rho_eq.is_some())
            .field("singular_drift", &self.singular_drift)
            .finish()
    }
}

impl DiffusionModel {
    /// A model supported on all of ℝ^dim, without analytic gradients.
    pub fn new<D, R>(label: impl Into<String>, dim: usize, diffusion: D, ln_rho_eq: R) -> Self
    where
        D: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        R: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        assert!(dim > 0, "state dimension must be positive");
        Self {
            label: label.into(),
            dim,
            diffusion: Arc::new(diffusion),
            ln_rho_eq: Arc::new(ln_rho_eq),
            support: Arc::new(|_| true),
            grad_diffusion: None,
            grad_ln_rho_eq: None,
            singular_drift: false,
            references: Vec::new(),
        }
    }

    pub fn with_support<S>(mut self, support: S) -> Self
    where
        S: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.support = Arc::new(support);
        self
    }

    pub fn with_grad_diffusion<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.grad_diffusion = Some(Arc::new(grad));
        self
    }

    pub fn with_grad_ln_rho_eq<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.grad_ln_rho_eq = Some(Arc::new(grad));
        self
    }

    /// Marks the drift as undefined (e.g. `D` or `ρ_eq` jumps), so
    /// [`derive_coefficients`] refuses to fall back to finite differences.
    pub fn with_singular_drift(mut self) -> Self {
        self.singular_drift = true;
        self
    }

    pub fn with_reference(mut self, reference: ExactReference) -> Self {
        self.references.push(reference);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn references(&self) -> &[ExactReference] {
        &self.references
    }

    pub fn has_analytic_gradients(&self) -> bool {
        self.grad_diffusion.is_some() && self.grad_ln_rho_eq.is_some()
    }

    pub fn has_singular_drift(&self) -> bool {
        self.singular_drift
    }

    #[inline]
    pub fn in_support(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.is_finite()) && (self.support)(x)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    fn outside(&self, x: &[f64]) -> Error {
        Error::EvalOutsideSupport { model: self.label.clone(), x: x.to_vec() }
    }

    /// `D(x)`; errors outside the support or when `D(x) ≤ 0`.
    #[inline]
    pub fn diffusion(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if !self.in_support(x) {
            return Err(self.outside(x));
        }
        let value = (self.diffusion)(x);
        if value > 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonpositiveDiffusion { model: self.label.clone(), x: x.to_vec(), value })
        }
    }

    /// `ln ρ_eq(x)`, or `-∞` outside the support.
    #[inline]
    pub fn ln_rho_eq(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if !self.in_support(x) {
            return Ok(f64::NEG_INFINITY);
        }
        let value = (self.ln_rho_eq)(x);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteLogDensity { model: self.label.clone(), x: x.to_vec() })
        }
    }

    /// `ρ_eq(x)` (unnormalized when the model is).
    pub fn rho_eq(&self, x: &[f64]) -> Result<f64> {
        Ok(self.ln_rho_eq(x)?.exp())
    }

    /// `∇D(x)`, analytic when supplied, otherwise central differences.
    pub fn grad_diffusion(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        self.check_dim(out)?;
        match &self.grad_diffusion {
            Some(grad) => {
                if !self.in_support(x) {
                    return Err(self.outside(x));
                }
                grad(x, out);
                Ok(())
            }
            None => self.central_difference(x, out, |m, p| m.diffusion(p)),
        }
    }

    /// `∇ln ρ_eq(x)`, analytic when supplied, otherwise central differences.
    pub fn grad_ln_rho_eq(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        self.check_dim(out)?;
        match &self.grad_ln_rho_eq {
            Some(grad) => {
                if !self.in_support(x) {
                    return Err(self.outside(x));
                }
                grad(x, out);
                Ok(())
            }
            None => self.central_difference(x, out, |m, p| {
                if m.in_support(p) {
                    m.ln_rho_eq(p)
                } else {
                    Err(m.outside(p))
                }
            }),
        }
    }

    /// Finite-difference gradient of `D`, regardless of any analytic one.
    pub fn fd_grad_diffusion(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        self.check_dim(out)?;
        self.central_difference(x, out, |m, p| m.diffusion(p))
    }

    /// Finite-difference gradient of `ln ρ_eq`, regardless of any analytic one.
    pub fn fd_grad_ln_rho_eq(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        self.check_dim(out)?;
        self.central_difference(x, out, |m, p| {
            if m.in_support(p) {
                m.ln_rho_eq(p)
            } else {
                Err(m.outside(p))
            }
        })
    }

    fn central_difference<F>(&self, x: &[f64], out: &mut [f64], f: F) -> Result<()>
    where
        F: Fn(&Self, &[f64]) -> Result<f64>,
    {
        if !self.in_support(x) {
            return Err(self.outside(x));
        }
        let mut probe = x.to_vec();
        for i in 0..self.dim {
            let step = FD_RELATIVE_STEP * x[i].abs().max(1.0);
            probe[i] = x[i] + step;
            let forward = f(self, &probe)?;
            probe[i] = x[i] - step;
            let backward = f(self, &probe)?;
            probe[i] = x[i];
            out[i] = (forward - backward) / (2.0 * step);
        }
        Ok(())
    }
}

/// Drift and noise coefficients of the SDE determined by a model.
#[derive(Debug, Clone)]
pub struct DerivedCoefficients {
    model: DiffusionModel,
}

impl DerivedCoefficients {
    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    /// `a(x) = ∇D(x) + D(x)∇ln ρ_eq(x)` written into `out`.
    pub fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.model.diffusion(x)?;
        let mut grad_ln_rho = vec![0.0; self.model.dim];
        self.model.grad_ln_rho_eq(x, &mut grad_ln_rho)?;
        self.model.grad_diffusion(x, out)?;
        for (o, g) in out.iter_mut().zip(&grad_ln_rho) {
            *o += d * g;
        }
        Ok(())
    }

    /// `b(x) = √(2D(x))`.
    pub fn noise(&self, x: &[f64]) -> Result<f64> {
        Ok(noise_amplitude(self.model.diffusion(x)?))
    }
}

/// Derive `(a, b)` from `(D, ρ_eq)` under detailed balance.
pub fn derive_coefficients(model: &DiffusionModel) -> Result<DerivedCoefficients> {
    if model.singular_drift {
        return Err(Error::SingularDrift { model: model.label.clone() });
    }
    Ok(DerivedCoefficients { model: model.clone() })
}

pub const ARCSINE: &str = "arcsine";
pub const SINE_DIFFUSION: &str = "sine-diffusion";
pub const GBM: &str = "gbm";
pub const PIECEWISE: &str = "piecewise";

/// `D = (1 − x²)/2`, `ρ_eq = 1/(π√(1 − x²))` on `|x| < 1`. Started at
/// `x0 = 1/2` the exact solution is `sin(B(t) + π/6)`.
pub fn arcsine() -> DiffusionModel {
    DiffusionModel::new(
        ARCSINE,
        1,
        |x| (1.0 - x[0] * x[0]) / 2.0,
        |x| -0.5 * (1.0 - x[0] * x[0]).ln() - PI.ln(),
    )
    .with_support(|x| x[0].abs() < 1.0)
    .with_grad_diffusion(|x, g| g[0] = -x[0])
    .with_grad_ln_rho_eq(|x, g| g[0] = x[0] / (1.0 - x[0] * x[0]))
    .with_reference(ExactReference {
        test: "x",
        x0: 0.5,
        horizon: 1.0,
        value: 1.0 / (2.0 * E.sqrt()),
    })
    .with_reference(ExactReference {
        test: "x^2",
        x0: 0.5,
        horizon: 1.0,
        value: 0.5 - 1.0 / (4.0 * E * E),
    })
}

/// `D = sin x + 2` with a flat (non-normalizable) equilibrium density.
pub fn sine_diffusion() -> DiffusionModel {
    DiffusionModel::new(SINE_DIFFUSION, 1, |x| x[0].sin() + 2.0, |_| 0.0)
        .with_grad_diffusion(|x, g| g[0] = x[0].cos())
        .with_grad_ln_rho_eq(|_, g| g[0] = 0.0)
}

/// Geometric Brownian motion `dX = X dt + X dB` written as `D = x²/2`,
/// `ρ_eq = 1` on `x > 0`.
pub fn gbm() -> DiffusionModel {
    DiffusionModel::new(GBM, 1, |x| x[0] * x[0] / 2.0, |_| 0.0)
        .with_support(|x| x[0] > 0.0)
        .with_grad_diffusion(|x, g| g[0] = x[0])
        .with_grad_ln_rho_eq(|_, g| g[0] = 0.0)
        .with_reference(ExactReference { test: "x", x0: 1.0, horizon: 1.0, value: E })
}

/// `E X(t) = x0·eᵗ` for the `gbm` model.
pub fn gbm_mean(x0: f64, t: f64) -> f64 {
    x0 * t.exp()
}

/// `D = 2` on `[0, 1)`, `D = 1` on `(−1, 0)`, `ρ_eq = 1/2` on `(−1, 1)`.
/// The drift is singular at the jump.
pub fn piecewise() -> DiffusionModel {
    DiffusionModel::new(
        PIECEWISE,
        1,
        |x| if x[0] >= 0.0 { 2.0 } else { 1.0 },
        |_| 0.5f64.ln(),
    )
    .with_support(|x| x[0] > -1.0 && x[0] < 1.0)
    .with_singular_drift()
}

/// The four benchmark models, in order: arcsine, sine-diffusion, gbm,
/// piecewise.
pub fn builtin_models() -> Vec<DiffusionModel> {
    vec![arcsine(), sine_diffusion(), gbm(), piecewise()]
}

pub fn builtin_model(label: &str) -> Option<DiffusionModel> {
    builtin_models().into_iter().find(|m| m.label() == label)
}

/// One-line human-readable definitions of the builtin models.
pub fn builtin_descriptions() -> Vec<(&'static str, &'static str)> {
    vec![
        (ARCSINE, "D = (1 - x^2)/2, rho_eq = 1/(pi sqrt(1 - x^2)), |x| < 1"),
        (SINE_DIFFUSION, "D = sin(x) + 2, rho_eq = 1, x in R"),
        (GBM, "D = x^2/2, rho_eq = 1, x > 0"),
        (PIECEWISE, "D = 2 on [0,1), 1 on (-1,0), rho_eq = 0.5 on (-1,1)"),
    ]
}
