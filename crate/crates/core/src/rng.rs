//! Deterministic counter-based random streams.
//!
//! Every random draw in this crate comes from a [`KeyedStream`]: a stateless
//! generator whose i-th output is a pure function of (key, i). Streams for
//! different keys are independent, so per-example and per-resample draws can
//! run in any order (or in parallel) and still produce identical results.

/// Weyl increment from splitmix64.
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer: bijective avalanche mix of a 64-bit word.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the UTF-8 bytes of a string. Stable across platforms and
/// releases, unlike the std hasher.
#[inline]
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in s.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Order-sensitive absorption of key parts into a single 64-bit key.
pub fn derive_key(parts: &[u64]) -> u64 {
    let mut k: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        k = mix64(k ^ p).wrapping_add(GOLDEN);
    }
    mix64(k)
}

/// Counter-based PRNG stream.
#[derive(Debug, Clone)]
pub struct KeyedStream {
    key: u64,
    counter: u64,
}

impl KeyedStream {
    pub fn new(key: u64) -> Self {
        KeyedStream { key, counter: 0 }
    }

    /// Stream for one preference draw, keyed by (base_seed, epoch, dialogue id).
    pub fn for_example(base_seed: u64, epoch: u64, dialogue_id: &str) -> Self {
        KeyedStream::new(derive_key(&[base_seed, epoch, fnv1a64(dialogue_id)]))
    }

    /// Stream for one resample block, keyed by (seed, resample index).
    pub fn for_resample(seed: u64, index: u64) -> Self {
        KeyedStream::new(derive_key(&[seed, index]))
    }

    /// The derived key; recorded in outputs as the per-draw seed.
    pub fn key(&self) -> u64 {
        self.key
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in `0..n` via rejection sampling (unbiased).
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below requires n > 0");
        let zone = (u64::MAX / n) * n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// Partial Fisher-Yates: after the call, `xs[..k]` is a uniform random
    /// k-subset of the original slice (in random order).
    pub fn partial_shuffle<T>(&mut self, xs: &mut [T], k: usize) {
        let n = xs.len();
        for i in 0..k.min(n.saturating_sub(1)) {
            let j = i + self.next_below((n - i) as u64) as usize;
            xs.swap(i, j);
        }
    }
}
