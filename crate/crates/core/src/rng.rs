//! Counter-based Gaussian source.
//!
//! Every standard Gaussian pair is produced by Box–Muller from exactly two
//! 64-bit ChaCha20 outputs, so the draw for entry `e` of sample `k` lives at
//! a fixed position: stream `k`, word offset `4·e`. Entries can therefore be
//! generated in any order (or in parallel) and still reproduce bit for bit.

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone)]
pub struct GaussianStream {
    rng: ChaCha20Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Positions the stream at the draw belonging to `entry`.
    pub fn seek(&mut self, entry: u64) {
        self.rng.set_word_pos(4 * entry as u128);
    }

    fn unit_open(&mut self) -> f64 {
        // (0, 1]
        ((self.rng.next_u64() >> 11) + 1) as f64 * TWO_POW_M53
    }

    /// One Box–Muller pair of independent N(0, 1) variables.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.unit_open();
        let u2 = self.unit_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Standard complex Gaussian: E|z|² = 1, E z² = 0.
    pub fn complex_normal(&mut self) -> Complex64 {
        let (a, b) = self.normal_pair();
        Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// Real N(0, 1); consumes a full pair to keep offsets fixed.
    pub fn real_normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    pub fn uniform(&mut self) -> f64 {
        self.unit_open()
    }
}
