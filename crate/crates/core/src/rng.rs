//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 seeded with a 64-bit
//! seed through `SeedableRng::seed_from_u64`. Independent consumers of the
//! same seed use distinct ChaCha stream ids, so adding draws to one consumer
//! never shifts another. Uniform reals are built from the top 53 bits of a
//! `u64`, which keeps the sequence reproducible outside Rust.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids for the consumers of a realization seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Network = 0,
    InitialCondition = 1,
    PowerIteration = 2,
}

#[derive(Debug, Clone)]
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        SeededRng(rng)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_and_repeatable() {
        let a: Vec<f64> = (0..4)
            .map({
                let mut r = SeededRng::new(7, Stream::Network);
                move |_| r.unit()
            })
            .collect();
        let b: Vec<f64> = (0..4)
            .map({
                let mut r = SeededRng::new(7, Stream::Network);
                move |_| r.unit()
            })
            .collect();
        let mut other = SeededRng::new(7, Stream::InitialCondition);
        assert_eq!(a, b);
        assert_ne!(a[0], other.unit());
        assert!(a.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn uniform_respects_bounds() {
        let mut r = SeededRng::new(1, Stream::Network);
        for _ in 0..10_000 {
            let v = r.uniform(-0.5, 0.5);
            assert!((-0.5..0.5).contains(&v));
        }
    }
}
