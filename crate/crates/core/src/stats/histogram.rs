//! Occupation-measure estimates from a single long trajectory: the
//! equilibrium histogram and the bin-wise effective diffusion coefficient
//! `mean[(X_{k+1} − X_k)² / 2h]`, both with batch-means standard errors.
//!
//! Rejected Metropolis steps are kept: they repeat a state in the histogram
//! and contribute a zero increment to the diffusion estimate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;

/// Batches used for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// All samples offered, including those outside the edges.
    pub total: u64,
    pub out_of_range: u64,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::UnsortedEdges);
        }
        let bins = edges.len() - 1;
        Ok(Self { edges, counts: vec![0; bins], total: 0, out_of_range: 0 })
    }

    /// `n + 1` equally spaced edges on `[lo, hi]`.
    pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let w = (hi - lo) / n as f64;
        (0..=n).map(|i| if i == n { hi } else { lo + i as f64 * w }).collect()
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.bins()).map(|i| self.width(i)).collect()
    }

    /// Bin `[e_i, e_{i+1})` containing `x`.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        bin_index(&self.edges, x)
    }

    pub fn add(&mut self, x: f64) {
        self.total += 1;
        match self.bin_of(x) {
            Some(i) => self.counts[i] += 1,
            None => self.out_of_range += 1,
        }
    }

    /// `count_i / (total · width_i)`.
    pub fn density(&self) -> Vec<f64> {
        (0..self.bins())
            .map(|i| self.counts[i] as f64 / (self.total as f64 * self.width(i)))
            .collect()
    }
}

fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    if !(x >= edges[0] && x < edges[edges.len() - 1]) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// `sd(batch values) / √n_batches`; `None` with fewer than two batches.
pub fn batch_stderr(batch_values: &[f64]) -> Option<f64> {
    let n = batch_values.len();
    if n < 2 {
        return None;
    }
    let mean = batch_values.iter().sum::<f64>() / n as f64;
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((var / n as f64).sqrt())
}

fn scalar_path(traj: &Trajectory) -> Result<&[f64]> {
    if traj.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: traj.dim() });
    }
    Ok(traj.positions())
}

fn batch_bounds(len: usize, n_batches: usize) -> Vec<(usize, usize)> {
    (0..n_batches).map(|b| (b * len / n_batches, (b + 1) * len / n_batches)).collect()
}

fn check_batches(len: usize, n_batches: usize) -> Result<()> {
    if n_batches < 2 || n_batches > len {
        return Err(Error::InvalidParameter(format!(
            "cannot split {len} samples into {n_batches} batches"
        )));
    }
    Ok(())
}

/// Histogram of every state of the trajectory.
pub fn occupancy_density(traj: &Trajectory, edges: &[f64]) -> Result<Histogram> {
    let path = scalar_path(traj)?;
    if path.is_empty() {
        return Err(Error::InvalidParameter("empty trajectory".into()));
    }
    let mut hist = Histogram::new(edges.to_vec())?;
    for &x in path {
        hist.add(x);
    }
    Ok(hist)
}

/// Occupancy histogram plus per-bin batch-means standard errors of the
/// density.
pub fn occupancy_with_stderr(
    traj: &Trajectory,
    edges: &[f64],
    n_batches: usize,
) -> Result<(Histogram, Vec<f64>)> {
    let hist = occupancy_density(traj, edges)?;
    let path = scalar_path(traj)?;
    check_batches(path.len(), n_batches)?;
    let mut per_batch = vec![Vec::with_capacity(n_batches); hist.bins()];
    for (lo, hi) in batch_bounds(path.len(), n_batches) {
        let mut h = Histogram::new(edges.to_vec())?;
        for &x in &path[lo..hi] {
            h.add(x);
        }
        for (i, d) in h.density().into_iter().enumerate() {
            per_batch[i].push(d);
        }
    }
    let se = per_batch.iter().map(|v| batch_stderr(v).unwrap_or(f64::NAN)).collect();
    Ok((hist, se))
}

/// Effective diffusion estimate for one bin. `estimate` is `None` when no
/// step started in the bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeffBin {
    pub count: u64,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
}

/// Bin-wise mean of `(X_{k+1} − X_k)² / 2h` over steps starting in each bin,
/// with batch-means standard errors over `n_batches` contiguous blocks of
/// steps (blocks that never visit a bin are skipped for that bin).
pub fn effective_diffusion(traj: &Trajectory, edges: &[f64], n_batches: usize) -> Result<Vec<DeffBin>> {
    let path = scalar_path(traj)?;
    if path.len() < 2 {
        return Err(Error::InvalidParameter("need at least one step".into()));
    }
    Histogram::new(edges.to_vec())?;
    let steps = path.len() - 1;
    check_batches(steps, n_batches)?;
    let bins = edges.len() - 1;
    let two_h = 2.0 * traj.step();
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0u64; bins];
    let mut batch_means = vec![Vec::new(); bins];
    for (lo, hi) in batch_bounds(steps, n_batches) {
        let mut b_sums = vec![0.0; bins];
        let mut b_counts = vec![0u64; bins];
        for k in lo..hi {
            if let Some(i) = bin_index(edges, path[k]) {
                let dx = path[k + 1] - path[k];
                b_sums[i] += dx * dx / two_h;
                b_counts[i] += 1;
            }
        }
        for i in 0..bins {
            if b_counts[i] > 0 {
                batch_means[i].push(b_sums[i] / b_counts[i] as f64);
                sums[i] += b_sums[i];
                counts[i] += b_counts[i];
            }
        }
    }
    Ok((0..bins)
        .map(|i| DeffBin {
            count: counts[i],
            estimate: (counts[i] > 0).then(|| sums[i] / counts[i] as f64),
            stderr: batch_stderr(&batch_means[i]),
        })
        .collect())
}
