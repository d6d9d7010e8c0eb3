//! The Metropolized integrator and the Euler-Maruyama baseline.
//!
//! One Metropolized step proposes `y = x + √(2D(x))·ΔB` with `ΔB ~ N(0, h·I)`
//! and accepts it when `ξ < α_h(x, y)`, where
//!
//! ```text
//!     α_h(x, y) = min(1, q_h(y, x) ρ_eq(y) / (q_h(x, y) ρ_eq(x)))
//!     q_h(x, y) = (4πhD(x))^(−d/2) exp(−|x − y|² / (4hD(x)))
//! ```
//!
//! Variates are drawn in a fixed order: `d` normals, then one uniform.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_coefficients, noise_amplitude, DerivedCoefficients, DiffusionModel};
use crate::rng::{RngStream, VariateSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Metropolized trial step.
    Mh,
    /// Euler-Maruyama.
    Em,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Mh => "mh",
            Scheme::Em => "em",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub step_index: u64,
}

impl ChainState {
    pub fn new(x: Vec<f64>) -> Self {
        Self { x, step_index: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: Vec<f64>,
    pub proposal: Vec<f64>,
    pub alpha: f64,
    pub accepted: bool,
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn ln_q(dim: usize, h: f64, d_from: f64, sq: f64) -> f64 {
    -0.5 * dim as f64 * (4.0 * std::f64::consts::PI * h * d_from).ln() - sq / (4.0 * h * d_from)
}

/// `ln α_h(x, y)` before clamping, from cached model values.
#[inline]
fn ln_mh_ratio(dim: usize, h: f64, d_x: f64, lr_x: f64, d_y: f64, lr_y: f64, sq: f64) -> f64 {
    ln_q(dim, h, d_y, sq) + lr_y - ln_q(dim, h, d_x, sq) - lr_x
}

#[inline]
fn clamp_ratio(ln_ratio: f64) -> f64 {
    if ln_ratio >= 0.0 {
        1.0
    } else {
        ln_ratio.exp()
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("step length must be positive, got {h}")))
    }
}

/// Trial step `x + √(2D(x))·√h·z` for `d` standard normals `z`.
pub fn propose<V: VariateSource>(
    model: &DiffusionModel,
    x: &[f64],
    h: f64,
    rng: &mut V,
) -> Result<Vec<f64>> {
    check_step(h)?;
    let sigma = noise_amplitude(model.diffusion(x)?);
    let sqrt_h = h.sqrt();
    Ok(x.iter().map(|xi| xi + sigma * (sqrt_h * rng.normal())).collect())
}

/// `ln q_h(x, y)`.
pub fn ln_proposal_density(model: &DiffusionModel, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    check_step(h)?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let d_x = model.diffusion(x)?;
    Ok(ln_q(model.dim(), h, d_x, squared_distance(x, y)))
}

/// `q_h(x, y)`, the density of the trial step from `x` evaluated at `y`.
pub fn proposal_density(model: &DiffusionModel, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    Ok(ln_proposal_density(model, x, y, h)?.exp())
}

/// `α_h(x, y)`; zero when `y` lies outside the support.
pub fn acceptance_prob(model: &DiffusionModel, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    check_step(h)?;
    let d_x = model.diffusion(x)?;
    let lr_x = model.ln_rho_eq(x)?;
    if !model.in_support(y) {
        return Ok(0.0);
    }
    let d_y = model.diffusion(y)?;
    let lr_y = model.ln_rho_eq(y)?;
    let sq = squared_distance(x, y);
    Ok(clamp_ratio(ln_mh_ratio(model.dim(), h, d_x, lr_x, d_y, lr_y, sq)))
}

/// One Metropolized step. Consumes exactly `d` normals and one uniform.
pub fn mh_step<V: VariateSource>(
    model: &DiffusionModel,
    state: &ChainState,
    h: f64,
    rng: &mut V,
) -> Result<StepOutcome> {
    let proposal = propose(model, &state.x, h, rng)?;
    let alpha = acceptance_prob(model, &state.x, &proposal, h)?;
    let accepted = rng.uniform() < alpha;
    let next = if accepted { proposal.clone() } else { state.x.clone() };
    Ok(StepOutcome { next, proposal, alpha, accepted })
}

/// One Euler-Maruyama step `x + a(x)h + b(x)√h·z`. Consumes exactly `d`
/// normals.
pub fn em_step<V: VariateSource>(
    coeffs: &DerivedCoefficients,
    state: &ChainState,
    h: f64,
    rng: &mut V,
) -> Result<StepOutcome> {
    check_step(h)?;
    let mut drift = vec![0.0; state.x.len()];
    coeffs.drift(&state.x, &mut drift)?;
    let b = coeffs.noise(&state.x)?;
    let sqrt_h = h.sqrt();
    let next: Vec<f64> = state
        .x
        .iter()
        .zip(&drift)
        .map(|(xi, ai)| xi + ai * h + b * (sqrt_h * rng.normal()))
        .collect();
    Ok(StepOutcome { proposal: next.clone(), next, alpha: 1.0, accepted: true })
}

/// Metropolized chain that caches `D` and `ln ρ_eq` at the current state.
/// Produces the same numbers as iterating [`mh_step`].
struct MhChain<'a> {
    model: &'a DiffusionModel,
    h: f64,
    sqrt_h: f64,
    x: Vec<f64>,
    d_x: f64,
    lr_x: f64,
    y: Vec<f64>,
}

impl<'a> MhChain<'a> {
    fn new(model: &'a DiffusionModel, x0: &[f64], h: f64) -> Result<Self> {
        check_step(h)?;
        let d_x = model.diffusion(x0)?;
        let lr_x = model.ln_rho_eq(x0)?;
        Ok(Self { model, h, sqrt_h: h.sqrt(), x: x0.to_vec(), d_x, lr_x, y: x0.to_vec() })
    }

    #[inline]
    fn advance<V: VariateSource>(&mut self, rng: &mut V) -> Result<bool> {
        let sigma = noise_amplitude(self.d_x);
        for (yi, xi) in self.y.iter_mut().zip(&self.x) {
            *yi = xi + sigma * (self.sqrt_h * rng.normal());
        }
        let mut cached = None;
        let alpha = if self.model.in_support(&self.y) {
            let d_y = self.model.diffusion(&self.y)?;
            let lr_y = self.model.ln_rho_eq(&self.y)?;
            cached = Some((d_y, lr_y));
            let sq = squared_distance(&self.x, &self.y);
            clamp_ratio(ln_mh_ratio(self.model.dim(), self.h, self.d_x, self.lr_x, d_y, lr_y, sq))
        } else {
            0.0
        };
        let accepted = rng.uniform() < alpha;
        if accepted {
            std::mem::swap(&mut self.x, &mut self.y);
            // alpha > 0 implies the proposal was in the support
            let (d_y, lr_y) = cached.expect("accepted proposal outside support");
            self.d_x = d_y;
            self.lr_x = lr_y;
        }
        Ok(accepted)
    }
}

struct EmChain<'a> {
    coeffs: &'a DerivedCoefficients,
    h: f64,
    sqrt_h: f64,
    x: Vec<f64>,
    drift: Vec<f64>,
}

impl<'a> EmChain<'a> {
    fn new(coeffs: &'a DerivedCoefficients, x0: &[f64], h: f64) -> Result<Self> {
        check_step(h)?;
        Ok(Self { coeffs, h, sqrt_h: h.sqrt(), x: x0.to_vec(), drift: vec![0.0; x0.len()] })
    }

    #[inline]
    fn advance<V: VariateSource>(&mut self, rng: &mut V) -> Result<()> {
        self.coeffs.drift(&self.x, &mut self.drift)?;
        let b = self.coeffs.noise(&self.x)?;
        for (xi, ai) in self.x.iter_mut().zip(&self.drift) {
            *xi = *xi + ai * self.h + b * (self.sqrt_h * rng.normal());
        }
        Ok(())
    }
}

/// Runs `n_steps` steps of either scheme and hands every visited state
/// (including `x0`) to `visit`. Returns the number of accepted MH proposals.
fn drive<V, F>(
    model: &DiffusionModel,
    coeffs: Option<&DerivedCoefficients>,
    scheme: Scheme,
    x0: &[f64],
    h: f64,
    n_steps: u64,
    rng: &mut V,
    mut visit: F,
) -> Result<u64>
where
    V: VariateSource,
    F: FnMut(&[f64]),
{
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x0.len() });
    }
    if !model.in_support(x0) {
        return Err(Error::EvalOutsideSupport { model: model.label().to_string(), x: x0.to_vec() });
    }
    visit(x0);
    match scheme {
        Scheme::Mh => {
            let mut chain = MhChain::new(model, x0, h)?;
            let mut accepted = 0;
            for _ in 0..n_steps {
                accepted += chain.advance(rng)? as u64;
                visit(&chain.x);
            }
            Ok(accepted)
        }
        Scheme::Em => {
            let coeffs = coeffs.expect("Euler-Maruyama needs coefficients");
            let mut chain = EmChain::new(coeffs, x0, h)?;
            for _ in 0..n_steps {
                chain.advance(rng)?;
                if !model.in_support(&chain.x) {
                    return Err(Error::EvalOutsideSupport {
                        model: model.label().to_string(),
                        x: chain.x.clone(),
                    });
                }
                visit(&chain.x);
            }
            Ok(n_steps)
        }
    }
}

/// A simulated path, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    h: f64,
    positions: Vec<f64>,
    accepted: u64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Number of states (`n_steps + 1`).
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn state(&self, k: usize) -> ChainState {
        ChainState { x: self.position(k).to_vec(), step_index: k as u64 }
    }

    pub fn states(&self) -> impl Iterator<Item = ChainState> + '_ {
        (0..self.len()).map(|k| self.state(k))
    }

    /// Flat positions, row-major by step.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Accepted proposals (equal to the step count for Euler-Maruyama).
    pub fn accepted(&self) -> u64 {
        self.accepted
    }
}

/// Simulates one path of `n_steps` steps from `x0`.
pub fn simulate_trajectory<V: VariateSource>(
    model: &DiffusionModel,
    scheme: Scheme,
    x0: &[f64],
    h: f64,
    n_steps: u64,
    rng: &mut V,
) -> Result<Trajectory> {
    let coeffs = match scheme {
        Scheme::Em => Some(derive_coefficients(model)?),
        Scheme::Mh => None,
    };
    let mut positions = Vec::with_capacity((n_steps as usize + 1) * model.dim());
    let accepted = drive(model, coeffs.as_ref(), scheme, x0, h, n_steps, rng, |x| {
        positions.extend_from_slice(x)
    })?;
    Ok(Trajectory { dim: model.dim(), h, positions, accepted })
}

/// Number of steps `N = T/h`, rejecting horizons that are not a multiple of
/// the step to within a few ulps.
pub fn step_count(horizon: f64, h: f64) -> Result<u64> {
    check_step(h)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be nonnegative, got {horizon}")));
    }
    let ratio = horizon / h;
    let n = ratio.round();
    let ulp = f64::EPSILON * ratio.abs().max(f64::MIN_POSITIVE);
    if (ratio - n).abs() > 4.0 * ulp || n > u64::MAX as f64 {
        return Err(Error::NonIntegerStepCount { horizon, step: h });
    }
    Ok(n as u64)
}

/// Monte Carlo estimate of `E f(X_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mean: f64,
    /// Sample standard deviation over `√M`.
    pub stderr: f64,
    pub count: u64,
    pub horizon: f64,
    pub h: f64,
}

pub type TestFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

const CHUNK: u64 = 1024;

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * (other.n as f64 / n as f64);
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        Moments { n, mean, m2 }
    }
}

/// Final states of trajectories `0..count` of an ensemble, in index order.
/// Deterministic given `base_seed`.
pub fn ensemble_final_states(
    model: &DiffusionModel,
    scheme: Scheme,
    x0: &[f64],
    h: f64,
    horizon: f64,
    count: u64,
    base_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n_steps = step_count(horizon, h)?;
    let coeffs = match scheme {
        Scheme::Em => Some(derive_coefficients(model)?),
        Scheme::Mh => None,
    };
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(base_seed, i);
            final_state(model, coeffs.as_ref(), scheme, x0, h, n_steps, &mut rng)
        })
        .collect()
}

fn final_state(
    model: &DiffusionModel,
    coeffs: Option<&DerivedCoefficients>,
    scheme: Scheme,
    x0: &[f64],
    h: f64,
    n_steps: u64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut last = x0.to_vec();
    let mut k = 0u64;
    drive(model, coeffs, scheme, x0, h, n_steps, rng, |x| {
        k += 1;
        if k == n_steps + 1 {
            last.copy_from_slice(x);
        }
    })?;
    Ok(last)
}

/// Estimates `E f(X_N)`, `N = T/h`, for each test function over `count`
/// independent trajectories sharing `x0`. Trajectory `i` uses the stream
/// `(base_seed, i)` and partial sums are combined in index order, so the
/// result does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ensemble_multi(
    model: &DiffusionModel,
    scheme: Scheme,
    x0: &[f64],
    h: f64,
    horizon: f64,
    count: u64,
    tests: &[TestFn<'_>],
    base_seed: u64,
) -> Result<Vec<EnsembleStats>> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!("ensemble needs at least 2 trajectories, got {count}")));
    }
    let n_steps = step_count(horizon, h)?;
    let coeffs = match scheme {
        Scheme::Em => Some(derive_coefficients(model)?),
        Scheme::Mh => None,
    };
    let n_chunks = count.div_ceil(CHUNK);
    let partials: Vec<Result<Vec<Moments>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); tests.len()];
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                let mut rng = RngStream::new(base_seed, i);
                let x = final_state(model, coeffs.as_ref(), scheme, x0, h, n_steps, &mut rng)?;
                for (m, f) in acc.iter_mut().zip(tests) {
                    m.push(f(&x));
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Moments::default(); tests.len()];
    for chunk in partials {
        for (t, m) in total.iter_mut().zip(chunk?) {
            *t = t.merge(m);
        }
    }
    Ok(total
        .into_iter()
        .map(|m| {
            let variance = m.m2 / (m.n - 1) as f64;
            EnsembleStats {
                mean: m.mean,
                stderr: (variance / m.n as f64).sqrt(),
                count: m.n,
                horizon,
                h,
            }
        })
        .collect())
}

/// Single-test-function form of [`simulate_ensemble_multi`].
#[allow(clippy::too_many_arguments)]
pub fn simulate_ensemble(
    model: &DiffusionModel,
    scheme: Scheme,
    x0: &[f64],
    h: f64,
    horizon: f64,
    count: u64,
    test: TestFn<'_>,
    base_seed: u64,
) -> Result<EnsembleStats> {
    let mut stats = simulate_ensemble_multi(model, scheme, x0, h, horizon, count, &[test], base_seed)?;
    Ok(stats.remove(0))
}
