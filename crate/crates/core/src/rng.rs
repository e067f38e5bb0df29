//! Seeded random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha stream keyed by the
//! run seed, a task label and a task index, so trials can run in any order
//! (or in parallel) and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::hermitian::{CMat, C64};

pub type Stream = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent stream for `(seed, label, index)`.
pub fn stream(seed: u64, label: &str, index: u64) -> Stream {
    let key = splitmix(seed ^ splitmix(fnv1a(label) ^ splitmix(index)));
    let mut bytes = [0u8; 32];
    let mut z = key;
    for chunk in bytes.chunks_mut(8) {
        z = splitmix(z);
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Derive a child seed, for APIs that take a plain `u64` seed.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix(seed ^ splitmix(fnv1a(label).wrapping_add(index)))
}

/// Standard complex Gaussian, E|z|^2 = 1.
pub fn complex_normal<R: rand::Rng>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: rand::Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Random Hermitian matrix with Gaussian entries (GUE-like), unit Frobenius norm.
pub fn hermitian_direction<R: rand::Rng>(n: usize, rng: &mut R) -> CMat {
    let g = gaussian_matrix(n, n, rng);
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let norm = h.norm();
    if norm > 0.0 {
        h.unscale(norm)
    } else {
        h
    }
}
