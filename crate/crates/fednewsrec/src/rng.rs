//! Deterministic splittable random streams.
//!
//! A counter-based generator: every draw is a stateless hash of
//! `(seed, stream_id, counter)`, so identical states reproduce identical
//! sequences regardless of thread count, and child streams obtained via
//! [`RngState::split`] are independent by construction.

/// Value-like random stream state. Cheap to copy; callers split, never share.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    stream_id: u64,
    counter: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
// Domain separators keep draw hashing and stream derivation disjoint.
const DOMAIN_DRAW: u64 = 0x1fc7_1a5c_9d21_f0e3;
const DOMAIN_SPLIT: u64 = 0xb5e8_52f9_614d_0c27;

#[inline]
fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn hash3(a: u64, b: u64, c: u64, domain: u64) -> u64 {
    let mut h = mix64(a ^ domain);
    h = mix64(h.wrapping_add(b).wrapping_mul(GOLDEN) ^ b.rotate_left(23));
    h = mix64(h.wrapping_add(c).wrapping_mul(GOLDEN) ^ c.rotate_left(41));
    mix64(h)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            stream_id: 0,
            counter: 0,
        }
    }

    /// Derive the `k`-th child stream. Pure: the parent is not advanced.
    pub fn split(&self, k: u64) -> RngState {
        RngState {
            seed: hash3(self.seed, self.stream_id, k, DOMAIN_SPLIT),
            stream_id: hash3(self.stream_id, k, self.seed, DOMAIN_SPLIT ^ GOLDEN),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        hash3(self.seed, self.stream_id, c, DOMAIN_DRAW)
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (((self.next_u64() >> 11) as f64) + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // 64-bit multiply-shift; bias is negligible for simulation-sized n.
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// Uniform draw in `[-scale, scale]`.
    pub fn next_symmetric(&mut self, scale: f64) -> f64 {
        (self.next_f64() * 2.0 - 1.0) * scale
    }
}
