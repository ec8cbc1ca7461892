#![allow(dead_code)]

use fockphase::engine::QuadraticGenerator;
use fockphase::linalg::{self, CMatrix};
use fockphase::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric `A`, Hermitian `B`, entries bounded by `bound`.
pub fn random_generator(rng: &mut ChaCha8Rng, n: usize, bound: f64, dk: f64) -> QuadraticGenerator {
    let mut r = || C64::new(rng.random_range(-bound..bound), rng.random_range(-bound..bound));
    let a = CMatrix::from_fn(n, n, |_, _| r());
    let b = CMatrix::from_fn(n, n, |_, _| r());
    QuadraticGenerator::new(linalg::symmetrize(&a), linalg::hermitize(&b), dk).unwrap()
}

pub fn single(a: C64, b: f64, dk: f64) -> QuadraticGenerator {
    QuadraticGenerator::new(CMatrix::from_element(1, 1, a), CMatrix::from_element(1, 1, C64::new(b, 0.0)), dk).unwrap()
}
