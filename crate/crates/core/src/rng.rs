//! Seeded randomness.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded with a
//! single `u64`. ChaCha is counter based, so a generator's position is fully
//! described by `(seed, stream, word_pos)` and can be checkpointed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SeededRng = ChaCha8Rng;

/// Serializable position of a [`SeededRng`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u64,
}

/// Generator for `seed` on a numbered stream. Distinct streams of the same
/// seed are independent sequences.
pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl RngState {
    pub fn capture(seed: u64, rng: &SeededRng) -> Self {
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos() as u64,
        }
    }

    pub fn restore(&self) -> SeededRng {
        let mut rng = seeded(self.seed, self.stream);
        rng.set_word_pos(self.word_pos as u128);
        rng
    }
}

/// Fills `out` with i.i.d. standard normals using the Box–Muller transform.
/// Values are produced in pairs; an odd tail discards the second variate.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut chunks = out.chunks_mut(2);
    for chunk in &mut chunks {
        // u1 in (0, 1] keeps ln(u1) finite.
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        chunk[0] = radius * angle.cos();
        if chunk.len() > 1 {
            chunk[1] = radius * angle.sin();
        }
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mut v = [0.0];
    fill_standard_normal(rng, &mut v);
    v[0]
}

/// Uniform random direction on the unit sphere in `dim` dimensions.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    loop {
        fill_standard_normal(rng, &mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}
