//! Deterministic, splittable random streams.
//!
//! Every experiment takes a `(seed, stream)` pair. Child streams derived
//! from the same root seed never share state, so Monte Carlo trials can be
//! laid out (or later parallelised) without any cross-talk, and the same
//! seed reproduces the same artifact bundle bit for bit on any platform.
//!
//! ```
//! use pycra_core::rng::RngStream;
//!
//! let mut a = RngStream::new(42);
//! let mut b = RngStream::new(42);
//! assert_eq!(a.next_f64(), b.next_f64());
//! assert_ne!(RngStream::new(42).substream(1).next_f64(),
//!            RngStream::new(42).substream(2).next_f64());
//! ```

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Counter-based random stream; cheap to fork by stream id.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Root stream for a seed (stream id 0).
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Stream `stream` of the family keyed by `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Fresh stream in the same family; independent of `self`'s position.
    ///
    /// Ids are mixed so that nested derivations (`substream(a).substream(b)`)
    /// do not collide with flat ones for any ids in practical use.
    pub fn substream(&self, id: u64) -> Self {
        let mixed = self
            .stream
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(id)
            .wrapping_add(1);
        Self::with_stream(self.seed, mixed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn uniform_usize(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        Uniform::new_inclusive(lo, hi).sample(&mut self.rng)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo < hi);
        Uniform::new(lo, hi).sample(&mut self.rng)
    }

    /// One N(mean, sigma^2) draw; sigma must be finite and >= 0.
    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        debug_assert!(sigma >= 0.0);
        if sigma == 0.0 {
            return mean;
        }
        Normal::new(mean, sigma).expect("sigma checked").sample(&mut self.rng)
    }

    /// Geometric draw on {1, 2, ...} with success probability `rho`:
    /// P(n) = (1 - rho)^(n-1) * rho.
    pub fn geometric(&mut self, rho: f64) -> Result<u64> {
        if !(rho > 0.0 && rho < 1.0) && rho != 1.0 {
            return Err(Error::Parameter(format!("rho = {rho} outside (0, 1]")));
        }
        if rho == 1.0 {
            return Ok(1);
        }
        let u = self.next_f64();
        // Inverse CDF; (1-u) avoids ln(0) since u in [0,1).
        let n = ((1.0 - u).ln() / (1.0 - rho).ln()).floor() as u64 + 1;
        Ok(n.max(1))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
