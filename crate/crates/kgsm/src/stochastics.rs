//! Deterministic randomness: a splittable 64-bit generator, normal draws,
//! and weighted row sampling.
//!
//! Every stochastic component in the crate draws from [`RngStream`], a
//! SplitMix64-style generator chosen so that substream derivation is a pure
//! function of `(master_seed, trial)`. Trials can therefore run in any order
//! or in parallel and still reproduce byte-identical output. Normal samples
//! use the classic Box-Muller transform with the second value of each pair
//! cached, so the draw sequence is a deterministic function of the seed
//! alone.

use thiserror::Error;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. Bijective on `u64`, which keeps substream
/// derivation collision-free.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream.
///
/// The state advances by a fixed odd increment and each output is the mixed
/// counter value, so two streams with the same seed produce identical
/// sequences regardless of platform or thread count.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    state: u64,
    cached_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, state: seed, cached_normal: None }
    }

    /// Seed this stream was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives the substream for one trial of a master seed.
    ///
    /// Pure function of `(master_seed, trial)`: the composition of bijective
    /// mixes makes distinct trials map to distinct seeds for any fixed
    /// master, so no two trials share a stream.
    pub fn derive_substream(master_seed: u64, trial: u64) -> Self {
        Self::new(mix(master_seed ^ mix(trial.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller.
    ///
    /// Consumes two uniforms per pair and caches the second output. The
    /// first uniform is shifted into `(0, 1]` so the logarithm is always
    /// finite.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Vector of independent standard normals.
    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.standard_normal()).collect()
    }
}

/// Uniform index in `{0, ..., count - 1}`.
pub fn uniform_index(stream: &mut RngStream, count: usize) -> usize {
    assert!(count > 0, "uniform_index needs a nonempty range");
    let idx = (stream.next_f64() * count as f64) as usize;
    idx.min(count - 1)
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("sampler needs at least one weight")]
    Empty,
    #[error("weight {index} is not finite")]
    NonFinite { index: usize },
    #[error("weight {index} is not strictly positive")]
    NonPositive { index: usize },
}

/// Categorical sampler over row indices with probabilities proportional to
/// the given weights.
///
/// Sampling is a binary search on the cumulative distribution, so a draw
/// costs one uniform and `O(log m)` comparisons.
#[derive(Clone, Debug)]
pub struct RowSampler {
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RowSampler {
    /// Builds a sampler from strictly positive weights (for Kaczmarz,
    /// squared row norms). Weights are normalized to probabilities; zero or
    /// negative weights are rejected rather than silently dropped.
    pub fn from_weights(weights: &[f64]) -> Result<Self, SamplerError> {
        if weights.is_empty() {
            return Err(SamplerError::Empty);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(SamplerError::NonFinite { index });
            }
            if w <= 0.0 {
                return Err(SamplerError::NonPositive { index });
            }
        }
        let total: f64 = weights.iter().sum();
        let probabilities: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &p in &probabilities {
            acc += p;
            cumulative.push(acc);
        }
        Ok(Self { probabilities, cumulative })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Probability of drawing `index`.
    pub fn probability(&self, index: usize) -> f64 {
        self.probabilities[index]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Draws one index: the first position whose cumulative weight exceeds
    /// a uniform in `[0, 1)`. The final clamp covers the rounding slack in
    /// the last cumulative entry.
    pub fn sample(&self, stream: &mut RngStream) -> usize {
        let u = stream.next_f64();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.cumulative.len() - 1)
    }
}
