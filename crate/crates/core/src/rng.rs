//! Deterministic randomness utilities.
//!
//! Codeword material is produced by a splittable counter-based function so
//! that any symbol of any codeword can be regenerated in isolation. The
//! construction is fixed and documented here so independent implementations
//! can reproduce it bit for bit:
//!
//! * `splitmix64` is the finalizer from Vigna's SplitMix64 generator
//!   (constants 0x9E3779B97F4A7C15, 0xBF58476D1CE4E5B9, 0x94D049BB133111EB).
//! * a sequence digest folds `len` and then each symbol through
//!   `h = splitmix64(h ^ (v + 1))`, starting from `h = splitmix64(len)`.
//! * a key chain mixes words left to right: `k = splitmix64(k ^ w)`.
//! * a counter stream at key `k` yields `splitmix64(k + (i + 1) * GOLDEN)`
//!   for counter `i`, where GOLDEN = 0x9E3779B97F4A7C15.
//! * 64 random bits map to `f64` in `[0, 1)` by taking the top 53 bits.
//! * a unit draw `u` selects a symbol from a mass row by inverse CDF over
//!   the positive-mass symbols: the smallest positive prefix whose
//!   cumulative mass exceeds `u`, clamped to the last positive index so
//!   rounding can never select a zero-mass symbol.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub(crate) const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a word into a running key.
#[inline]
pub(crate) fn mix(key: u64, word: u64) -> u64 {
    splitmix64(key ^ word)
}

/// Order-sensitive digest of a symbol sequence.
pub(crate) fn digest_symbols(seq: &[usize]) -> u64 {
    let mut h = splitmix64(seq.len() as u64);
    for &v in seq {
        h = splitmix64(h ^ (v as u64 + 1));
    }
    h
}

/// Counter-based stream: `i`-th word under key `key`.
#[inline]
pub(crate) fn stream_word(key: u64, i: u64) -> u64 {
    splitmix64(key.wrapping_add((i + 1).wrapping_mul(GOLDEN)))
}

/// Top 53 bits as a float in `[0, 1)`.
#[inline]
pub(crate) fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF draw from a mass row, never landing on a zero-mass symbol.
/// The row must be a valid distribution.
#[inline]
pub(crate) fn inv_cdf(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Sequential convenience wrapper over the counter stream.
pub(crate) struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub(crate) fn new(key: u64) -> Self {
        Stream { key, counter: 0 }
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        let w = stream_word(self.key, self.counter);
        self.counter += 1;
        w
    }

    pub(crate) fn next_unit(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    pub(crate) fn sample(&mut self, row: &[f64]) -> usize {
        inv_cdf(row, self.next_unit())
    }
}

/// Full-entropy ChaCha generator derived from a list of key words.
pub(crate) fn chacha_from(words: &[u64]) -> ChaCha12Rng {
    let mut k = 0x7fb5_d329_728e_a185; // arbitrary fixed domain constant
    for &w in words {
        k = mix(k, w);
    }
    let mut seed = [0u8; 32];
    for (chunk, i) in seed.chunks_mut(8).zip(0u64..) {
        chunk.copy_from_slice(&stream_word(k, i).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
