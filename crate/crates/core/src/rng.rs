//! Counter-based random streams.
//!
//! Every trajectory owns a stream keyed by `(base_seed, trajectory_index)`.
//! A stream has two lanes, one for the Gaussian increments and one for the
//! Metropolis uniforms, each a ChaCha8 keystream addressed by the trajectory
//! index. Keeping the lanes apart means the Gaussian increments of a
//! trajectory do not depend on whether the scheme also draws uniforms.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Source of the variates consumed by the step functions.
pub trait VariateSource {
    /// A standard normal variate.
    fn normal(&mut self) -> f64;
    /// A uniform variate on `[0, 1)`.
    fn uniform(&mut self) -> f64;
}

const NORMAL_LANE: u64 = 0x6e6f_726d_616c;
const UNIFORM_LANE: u64 = 0x0075_6e69_666f_726d;

fn lane(base_seed: u64, tag: u64, trajectory_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base_seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trajectory_index);
    rng
}

#[derive(Clone, Debug)]
pub struct RngStream {
    base_seed: u64,
    trajectory_index: u64,
    counter: u64,
    normals: ChaCha8Rng,
    uniforms: ChaCha8Rng,
}

impl RngStream {
    pub fn new(base_seed: u64, trajectory_index: u64) -> Self {
        Self {
            base_seed,
            trajectory_index,
            counter: 0,
            normals: lane(base_seed, NORMAL_LANE, trajectory_index),
            uniforms: lane(base_seed, UNIFORM_LANE, trajectory_index),
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn trajectory_index(&self) -> u64 {
        self.trajectory_index
    }

    /// Number of variates drawn so far (normals and uniforms together).
    pub fn counter(&self) -> u64 {
        self.counter
    }
}

impl VariateSource for RngStream {
    #[inline]
    fn normal(&mut self) -> f64 {
        self.counter += 1;
        self.normals.sample(StandardNormal)
    }

    #[inline]
    fn uniform(&mut self) -> f64 {
        self.counter += 1;
        self.uniforms.random::<f64>()
    }
}

/// Replays fixed variates; panics when a lane runs dry.
#[derive(Clone, Debug, Default)]
pub struct ScriptedVariates {
    normals: VecDeque<f64>,
    uniforms: VecDeque<f64>,
    consumed: usize,
}

impl ScriptedVariates {
    pub fn new(normals: &[f64], uniforms: &[f64]) -> Self {
        Self {
            normals: normals.iter().copied().collect(),
            uniforms: uniforms.iter().copied().collect(),
            consumed: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }
}

impl VariateSource for ScriptedVariates {
    fn normal(&mut self) -> f64 {
        self.consumed += 1;
        self.normals.pop_front().expect("scripted normals exhausted")
    }

    fn uniform(&mut self) -> f64 {
        self.consumed += 1;
        self.uniforms.pop_front().expect("scripted uniforms exhausted")
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of tags, e.g.
/// `(scheme, step index)`, so that separate ensembles get unrelated streams.
pub fn derive_seed(base_seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(base_seed), |acc, &t| {
        mix64(acc ^ mix64(t.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    })
}
