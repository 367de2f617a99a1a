// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Seeded random streams.
//!
//! Only one generator is supported: xoshiro256++ seeded through SplitMix64,
//! with `jump()` (2^128 steps) for independent sub-streams. Uniform doubles
//! take the top 53 bits of each output so another implementation of the same
//! generator reproduces every draw.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RngAlgorithm {
    #[default]
    #[serde(rename = "xoshiro256++")]
    Xoshiro256PlusPlus,
}

impl std::str::FromStr for RngAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xoshiro256++" => Ok(RngAlgorithm::Xoshiro256PlusPlus),
            other => Err(Error::invalid(
                "rng",
                format!("unsupported generator `{other}`"),
            )),
        }
    }
}

pub struct Stream {
    inner: Xoshiro256PlusPlus,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Independent sub-stream `k` of `seed`, obtained by `k + 1` jumps.
    pub fn substream(seed: u64, k: u64) -> Self {
        let mut inner = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..=k {
            inner.jump();
        }
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi].
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform on the open interval (0, 1); used where 0 would be a pole.
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Stream::new(7);
        let mut b = Stream::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_differ() {
        let mut a = Stream::substream(7, 0);
        let mut b = Stream::substream(7, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_range() {
        let mut s = Stream::new(1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn parses_algorithm_name() {
        assert_eq!(
            "xoshiro256++".parse::<RngAlgorithm>().unwrap(),
            RngAlgorithm::Xoshiro256PlusPlus
        );
        assert!("mt19937".parse::<RngAlgorithm>().is_err());
    }
}
