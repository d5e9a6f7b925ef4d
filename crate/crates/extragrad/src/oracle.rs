//! Stochastic first-order oracle: returns `V(x) + U` with zero-mean noise from
//! counter-based substreams, so any single query can be replayed exactly.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::vi::{standard_normal, VIProblem, Vector};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// iid Gaussian per coordinate with the given variance.
    GaussianIid { variance: f64 },
}

/// Identifies one oracle query: run, iteration and whether the query happens
/// at the leading (half-integer) state. `t = 0, lead = true` is reserved for
/// an optional initialization query at the lead seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub run_id: u64,
    pub t: u64,
    pub lead: bool,
}

impl StreamKey {
    pub fn base(run_id: u64, t: u64) -> Self {
        StreamKey { run_id, t, lead: false }
    }

    pub fn lead(run_id: u64, t: u64) -> Self {
        StreamKey { run_id, t, lead: true }
    }
}

pub struct Oracle {
    problem: Arc<VIProblem>,
    pub noise: NoiseModel,
    pub seed: u64,
    calls: AtomicU64,
}

impl Oracle {
    pub fn new(problem: Arc<VIProblem>, noise: NoiseModel, seed: u64) -> Self {
        Oracle { problem, noise, seed, calls: AtomicU64::new(0) }
    }

    pub fn problem(&self) -> &VIProblem {
        &self.problem
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// One oracle query. Identical (problem, noise, seed, key) always produce
    /// bit-identical outputs, independent of query order.
    pub fn query(&self, x: &Vector, key: StreamKey) -> Result<Vector> {
        let mut v = self.problem.eval(x)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        if let NoiseModel::GaussianIid { variance } = self.noise {
            let sd = variance.sqrt();
            let mut rng = substream(self.seed, key);
            for i in 0..v.len() {
                v[i] += sd * standard_normal(&mut rng);
            }
        }
        Ok(v)
    }

    /// Unbiased sample estimate of `E|U|^2` at `x` from `n` fresh substreams.
    pub fn variance_estimate(&self, x: &Vector, n: usize) -> Result<f64> {
        assert!(n >= 2, "variance estimate needs n >= 2");
        let clean = self.problem.eval(x)?;
        let mut acc = 0.0;
        for i in 0..n {
            let key = StreamKey { run_id: VARIANCE_RUN_ID, t: i as u64, lead: false };
            let noisy = self.query(x, key)?;
            acc += (&noisy - &clean).norm_squared();
        }
        Ok(acc / n as f64)
    }
}

/// Run id reserved for variance estimation so its draws never collide with an
/// algorithm run.
const VARIANCE_RUN_ID: u64 = u64::MAX;

/// Derives a ChaCha substream from (seed, key) by splitmix64 chaining; the
/// stream is a pure function of the key, not of any previous query.
fn substream(seed: u64, key: StreamKey) -> ChaCha8Rng {
    let mut s = splitmix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    s = splitmix64(s ^ key.run_id);
    s = splitmix64(s ^ key.t);
    s = splitmix64(s ^ key.lead as u64);
    let mut bytes = [0u8; 32];
    let mut acc = s;
    for chunk in bytes.chunks_mut(8) {
        acc = splitmix64(acc);
        chunk.copy_from_slice(&acc.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
