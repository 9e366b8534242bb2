//! Counter-based random streams.
//!
//! Every stream is ChaCha20 (the original 64-bit-counter / 64-bit-nonce
//! layout) with
//!
//! * key: four 64-bit words produced by SplitMix64 seeded with the master
//!   seed, each written little-endian;
//! * nonce ("stream id"): a 64-bit value, normally the replicate index;
//! * block counter starting at 0.
//!
//! A stream is fully determined by `(seed, stream_id)`, so replicate `r`
//! produces the same draws no matter which worker evaluates it. Uniforms take
//! the top 53 bits of one 64-bit output: `u = (w >> 11) * 2^-53`, in `[0, 1)`.
//! Normals come from the Box-Muller transform on two uniforms
//! `(u1, u2)`: `r = sqrt(-2 ln(1 - u1))`, yielding `r cos(2π u2)` then
//! `r sin(2π u2)`.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// SplitMix64 step; also used for deriving child seeds.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for index `i` under `master`.
pub fn derive_seed(master: u64, i: u64) -> u64 {
    let mut s = master ^ i.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut s)
}

pub fn chacha_key(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// One replicate's random stream.
#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::from_seed(chacha_key(seed));
        inner.set_stream(stream_id);
        Self {
            inner,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` from exactly one 64-bit output.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform in the open interval `(0, 1)`.
    pub fn open_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
