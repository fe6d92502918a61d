//! Deterministic random streams.
//!
//! Every stream is ChaCha8 keyed by the SHA-256 digest of a domain tag and
//! the caller's key material, so a stream depends only on what it is *for*
//! (seed, record id, copy index, pass, bin) and never on traversal order.
//! Integer draws, uniform floats, shuffles and Gaussian deviates are derived
//! from raw `u64` outputs with the fixed methods below, which keeps outputs
//! bit-stable across dependency upgrades.

use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"lrtts/v1";

/// Builder for the 256-bit key of a [`CounterRng`].
#[derive(Clone)]
pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new(tag: &str) -> Self {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        let mut k = Self(h);
        k = k.str(tag);
        k
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0.update(v.to_le_bytes());
        self
    }

    /// Length-prefixed so that `("ab", "c")` and `("a", "bc")` differ.
    pub fn str(mut self, s: &str) -> Self {
        self.0.update((s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    pub fn key(self) -> [u8; 32] {
        let digest = self.0.finalize();
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        out
    }

    /// First eight key bytes as a little-endian integer.
    pub fn seed(self) -> u64 {
        let key = self.key();
        let mut b = [0u8; 8];
        b.copy_from_slice(&key[..8]);
        u64::from_le_bytes(b)
    }

    pub fn rng(self) -> CounterRng {
        CounterRng::from_key(self.key())
    }
}

/// Per-record augmentation seed: `mix(base_seed, record id, copy index)`.
pub fn mix_seed(base_seed: u64, record_id: &str, index: u64) -> u64 {
    KeyBuilder::new("augment")
        .u64(base_seed)
        .str(record_id)
        .u64(index)
        .seed()
}

/// ChaCha8 stream with fixed sampling methods on top.
#[derive(Clone)]
pub struct CounterRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        KeyBuilder::new("seed").u64(seed).rng()
    }

    pub fn from_key(key: [u8; 32]) -> Self {
        Self {
            inner: ChaCha8Rng::from_seed(key),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Unbiased integer in `0..n` (Lemire's multiply-and-reject). `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
            }
        }
        (m >> 64) as u64
    }

    /// Fisher–Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Standard normal deviate by the Box–Muller transform; deviates are
    /// produced in pairs and the sine branch is cached for the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(2.0 * PI * u2);
        self.spare_normal = Some(r * s);
        r * c
    }
}
