//! Flajolet's probabilistic counter with base β = 2^(2^-δ).
//!
//! The zero state stores C = 1, so that after n increments
//! E[β^C] = (β−1)·n + β and the estimate (β^C − β)/(β−1) is unbiased.
//! Each increment consumes exactly one uniform `f64` draw.

use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlajoletCounter {
    c: u32,
    delta: f64,
}

/// β for precision δ.
pub fn beta(delta: f64) -> f64 {
    2f64.powf(2f64.powf(-delta))
}

/// Bits needed for the exponent when counting up to `n_max`.
pub fn counter_width(delta: f64, n_max: u64) -> u32 {
    let loglog = (n_max.max(2) as f64).log2().log2().max(0.0);
    (loglog + delta).ceil() as u32 + 2
}

impl FlajoletCounter {
    pub fn new(delta: f64) -> Self {
        assert!(delta >= 0.0, "delta must be non-negative");
        FlajoletCounter { c: 1, delta }
    }

    pub fn from_raw(c: u32, delta: f64) -> Self {
        FlajoletCounter { c, delta }
    }

    pub fn raw(&self) -> u32 {
        self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn beta(&self) -> f64 {
        beta(self.delta)
    }

    /// Raise C with probability β^(−C).
    pub fn increment<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let p = self.beta().powf(-f64::from(self.c));
        if rng.gen::<f64>() < p {
            self.c += 1;
        }
    }

    pub fn incremented<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        self.increment(rng);
        self
    }

    pub fn estimate(&self) -> f64 {
        let b = self.beta();
        ((b.powf(f64::from(self.c)) - b) / (b - 1.0)).max(0.0)
    }
}
