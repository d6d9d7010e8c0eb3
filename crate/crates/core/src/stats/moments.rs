//! Deterministic first and second moments of one Metropolized step,
//!
//! ```text
//!     (1/h) ∫ (y − x)  α_h(x, y) q_h(x, y) dy   →  a(x)
//!     (1/h) ∫ (y − x)² α_h(x, y) q_h(x, y) dy   →  2 D(x)
//! ```
//!
//! with errors of order `√h`. Computed by quadrature, so free of Monte
//! Carlo noise.

use crate::error::{Error, Result};
use crate::integrator::{acceptance_prob, proposal_density};
use crate::model::{noise_amplitude, DiffusionModel};
use crate::stats::quadrature::integrate;

/// Proposal standard deviations covered on each side of `x`.
pub const TRUNCATION_SIGMAS: f64 = 12.0;

fn step_moment(model: &DiffusionModel, x: f64, h: f64, power: i32) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: model.dim() });
    }
    let sigma = noise_amplitude(model.diffusion(&[x])?) * h.sqrt();
    let half_width = TRUNCATION_SIGMAS * sigma;
    // integrand magnitude is about σ^power per unit length of σ
    let tol = 1e-12 * sigma.powi(power);
    let failure = std::cell::Cell::new(None);
    let value = integrate(
        |y| {
            let weight = acceptance_prob(model, &[x], &[y], h)
                .and_then(|a| Ok(a * proposal_density(model, &[x], &[y], h)?));
            match weight {
                Ok(w) => (y - x).powi(power) * w,
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            }
        },
        x - half_width,
        x + half_width,
        tol,
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(value? / h)
}

/// Quadrature estimate of the one-step drift `E[Δ]/h` at `x` (1-D models).
pub fn recover_drift(model: &DiffusionModel, x: f64, h: f64) -> Result<f64> {
    step_moment(model, x, h, 1)
}

/// Quadrature estimate of the one-step second moment `E[Δ²]/h` at `x`
/// (1-D models); tends to `b(x)² = 2D(x)`.
pub fn recover_diffusion(model: &DiffusionModel, x: f64, h: f64) -> Result<f64> {
    step_moment(model, x, h, 2)
}
