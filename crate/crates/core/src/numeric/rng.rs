use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Stream identifiers. Each purpose gets its own ChaCha stream under the
/// run seed, so consumption in one stream never shifts another.
pub mod streams {
    pub const WEIGHT_NOISE: u64 = 1;
    pub const GATE_NOISE: u64 = 2;
    pub const DATA_ORDER: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const INIT: u64 = 5;
    pub const PERTURB_SIGNS: u64 = 6;
    pub const DATA_GEN: u64 = 7;
    pub const CORRUPTION: u64 = 8;
    pub const EVAL: u64 = 9;
    pub const SPLIT: u64 = 10;

    /// Derives a sub-stream id from a purpose tag and up to two indices
    /// (e.g. epoch and example id). Tags occupy the top byte.
    pub const fn derive(tag: u64, a: u64, b: u64) -> u64 {
        (tag << 56) ^ ((a & 0xff_ffff) << 32) ^ (b & 0xffff_ffff)
    }
}

/// Counter-based random stream: ChaCha20 keyed by `seed` with the 64-bit
/// stream selector set to `stream_id`.
///
/// One logical step is one draw: a uniform consumes one 64-bit word, a
/// standard normal consumes two (Box-Muller, cosine branch only), so the
/// position of the stream after `n` draws does not depend on their values.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream under the same seed.
    pub fn fork(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift; bias is below 2^-64 * n and irrelevant here.
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn coin(&mut self) -> bool {
        self.inner.next_u64() >> 63 == 1
    }

    pub fn sign(&mut self) -> f64 {
        if self.coin() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }

    pub fn fill_uniform(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.uniform();
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

pub fn sample_standard_normal(rng: &mut RngStream, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    rng.fill_standard_normal(&mut out);
    out
}
