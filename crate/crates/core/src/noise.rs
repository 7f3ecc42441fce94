//! Reproducible space-time white noise.
//!
//! Every trajectory owns a [`NoiseStream`] addressed by `(master_seed,
//! stream_id)`. The Gaussian at lattice cell `(time_index, space_index)` is a
//! pure function of those four integers, so the full noise plane can be
//! generated in any order, from any number of workers, with bit-identical
//! results. The construction is a Philox-style keyed counter cipher
//! (Salmon et al., SC'11, the 2x64-10 variant) followed by an inverse-CDF
//! transform of the resulting uniform.

use crate::stats::normal_quantile;

const PHILOX_M: u64 = 0xD2B7_4407_B1CE_6E93;
const PHILOX_W: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_ROUNDS: u32 = 10;

/// One Philox 2x64-10 block: encrypt counter `(c0, c1)` under `key`.
#[inline]
fn philox2x64(mut c0: u64, mut c1: u64, key: u64) -> (u64, u64) {
    let mut k = key;
    for _ in 0..PHILOX_ROUNDS {
        let prod = (c0 as u128).wrapping_mul(PHILOX_M as u128);
        let hi = (prod >> 64) as u64;
        let lo = prod as u64;
        c0 = hi ^ k ^ c1;
        c1 = lo;
        k = k.wrapping_add(PHILOX_W);
    }
    (c0, c1)
}

/// SplitMix64 finalizer; used to derive per-stream keys from the master seed.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Map a u64 to a uniform in the open interval (0, 1).
#[inline]
fn u64_to_open_unit(x: u64) -> f64 {
    // 53 significant bits, offset by half an ulp so 0 and 1 are unreachable.
    ((x >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Seed derivation for sub-runs: avalanche both words so edited configs
/// never produce overlapping stream families.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed ^ 0x5EED_DE21_0E11_57A1) ^ index)
}

/// Deterministic counter-addressed Gaussian source for one trajectory.
///
/// Cloning is free; the stream holds no mutable state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    master_seed: u64,
    stream_id: u64,
    key: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let key = mix64(mix64(master_seed) ^ stream_id);
        NoiseStream {
            master_seed,
            stream_id,
            key,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Standard normal variate at cell `(n, i)`.
    ///
    /// Each Philox block yields two lanes; cell `i` uses lane `i % 2` of
    /// block `i / 2`, so sequential fills consume whole blocks.
    #[inline]
    pub fn gaussian(&self, n: u64, i: u64) -> f64 {
        let (w0, w1) = philox2x64(n, i >> 1, self.key);
        let word = if i & 1 == 0 { w0 } else { w1 };
        normal_quantile(u64_to_open_unit(word))
    }

    /// Uniform in (0, 1) at cell `(n, i)`; used by resampling utilities.
    #[inline]
    pub fn uniform(&self, n: u64, i: u64) -> f64 {
        let (w0, w1) = philox2x64(n, i >> 1, self.key);
        let word = if i & 1 == 0 { w0 } else { w1 };
        u64_to_open_unit(word)
    }

    /// Gaussians for every space index in `i_range` at time index `n`.
    pub fn plane(&self, n: u64, i_range: std::ops::Range<u64>) -> Vec<f64> {
        let mut out = Vec::with_capacity((i_range.end - i_range.start) as usize);
        self.fill_plane(n, i_range, &mut out);
        out
    }

    /// As [`plane`](Self::plane) but appending into a caller-owned buffer.
    pub fn fill_plane(&self, n: u64, i_range: std::ops::Range<u64>, out: &mut Vec<f64>) {
        let mut i = i_range.start;
        // Leading odd lane, then whole blocks, then a trailing even lane.
        if i < i_range.end && i & 1 == 1 {
            out.push(self.gaussian(n, i));
            i += 1;
        }
        while i + 1 < i_range.end {
            let (w0, w1) = philox2x64(n, i >> 1, self.key);
            out.push(normal_quantile(u64_to_open_unit(w0)));
            out.push(normal_quantile(u64_to_open_unit(w1)));
            i += 2;
        }
        if i < i_range.end {
            out.push(self.gaussian(n, i));
        }
    }
}
