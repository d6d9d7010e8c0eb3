//! Binned relative entropy `H(p|q) = Σ p_i ln(p_i/q_i) w_i`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::histogram::Histogram;
use crate::stats::quadrature::integrate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeEntropy {
    pub value: f64,
    /// `Σ |p_i − q_i| w_i`; for normalized inputs `value ≥ l1²/2`.
    pub l1_distance: f64,
}

/// Relative entropy between two binned densities with common widths.
/// Bins with `p = 0` contribute nothing.
pub fn relative_entropy(p: &[f64], q: &[f64], widths: &[f64]) -> Result<RelativeEntropy> {
    if p.len() != q.len() || p.len() != widths.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), got: q.len().min(widths.len()) });
    }
    let mut value = 0.0;
    let mut l1 = 0.0;
    for (bin, ((&pi, &qi), &w)) in p.iter().zip(q).zip(widths).enumerate() {
        if pi > 0.0 {
            if !(qi > 0.0) {
                return Err(Error::SupportViolation { bin });
            }
            value += pi * (pi / qi).ln() * w;
        }
        l1 += (pi - qi).abs() * w;
    }
    let mass = |d: &[f64]| d.iter().zip(widths).map(|(v, w)| v * w).sum::<f64>();
    if (mass(p) - 1.0).abs() < 1e-9 && (mass(q) - 1.0).abs() < 1e-9 {
        debug_assert!(value >= 0.5 * l1 * l1 - 1e-12, "Csiszár-Kullback bound violated");
    }
    Ok(RelativeEntropy { value, l1_distance: l1 })
}

pub fn relative_entropy_hist(p: &Histogram, q: &Histogram) -> Result<RelativeEntropy> {
    if p.edges != q.edges {
        return Err(Error::InvalidParameter("histograms have different edges".into()));
    }
    relative_entropy(&p.density(), &q.density(), &p.widths())
}

/// Relative entropy of a histogram against the bin averages of an analytic
/// density.
pub fn relative_entropy_to_density(p: &Histogram, density: impl Fn(f64) -> f64) -> Result<RelativeEntropy> {
    let q = bin_averages(&p.edges, density)?;
    relative_entropy(&p.density(), &q, &p.widths())
}

/// `(1/w_i) ∫ density` over each bin.
pub fn bin_averages(edges: &[f64], density: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    edges
        .windows(2)
        .map(|w| Ok(integrate(&density, w[0], w[1], 1e-13 * (w[1] - w[0]))? / (w[1] - w[0])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_densities() {
        let p = [0.2, 0.5, 0.3];
        let r = relative_entropy(&p, &p, &[1.0; 3]).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.l1_distance, 0.0);
    }

    #[test]
    fn uniform_against_linear() {
        let n = 1000;
        let mut hist = Histogram::new(Histogram::uniform_edges(0.0, 1.0, n)).unwrap();
        for i in 0..n {
            hist.add((i as f64 + 0.5) / n as f64);
        }
        let r = relative_entropy_to_density(&hist, |x| 2.0 * x).unwrap();
        assert_abs_diff_eq!(r.value, 1.0 - 2f64.ln(), epsilon = 1e-3);
        assert!(r.value >= 0.5 * r.l1_distance.powi(2));
    }

    #[test]
    fn support_violation() {
        assert!(matches!(
            relative_entropy(&[0.5, 0.5], &[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::SupportViolation { bin: 1 })
        ));
        // q may vanish where p does
        assert!(relative_entropy(&[1.0, 0.0], &[0.5, 0.5], &[1.0, 1.0]).is_ok());
    }

    #[test]
    fn histogram_pair() {
        let edges = vec![0.0, 1.0, 2.0];
        let mut p = Histogram::new(edges.clone()).unwrap();
        let mut q = Histogram::new(edges).unwrap();
        for x in [0.1, 0.2, 1.5] {
            p.add(x);
        }
        for x in [0.1, 1.5] {
            q.add(x);
        }
        let r = relative_entropy_hist(&p, &q).unwrap();
        let expected = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(r.value, expected, epsilon = 1e-15);
    }
}
