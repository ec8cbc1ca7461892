//! Small dense helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

pub type CMatrix = DMatrix<C64>;

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn norm1(m: &CMatrix) -> f64 {
    (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `|M - M^T|_max / (1 + |M|_max)`.
pub fn asymmetry(m: &CMatrix) -> f64 {
    max_abs(&(m - m.transpose())) / (1.0 + max_abs(m))
}

/// `|M - M^H|_max / (1 + |M|_max)`.
pub fn non_hermiticity(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint())) / (1.0 + max_abs(m))
}

pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.transpose()) * C64::new(0.5, 0.0)
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    // Tr(AB) = sum_ij A_ij B_ji
    let n = a.nrows();
    let mut t = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..a.ncols() {
            t += a[(i, j)] * b[(j, i)];
        }
    }
    t
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Inverse together with the 1-norm condition number.
pub fn inverse_with_condition(m: &CMatrix) -> Option<(CMatrix, f64)> {
    let inv = m.clone().lu().try_inverse()?;
    if !all_finite(&inv) {
        return None;
    }
    let cond = norm1(m) * norm1(&inv);
    Some((inv, cond))
}

/// Solves `A X = B`, returning `None` if `A` is numerically singular.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    let x = a.clone().lu().solve(b)?;
    all_finite(&x).then_some(x)
}

/// `X^2 = 0` up to the rounding of the product.
pub fn squares_to_zero(x: &CMatrix) -> bool {
    let scale = max_abs(x);
    max_abs(&(x * x)) <= 8.0 * f64::EPSILON * (x.nrows() as f64) * scale * scale
}

/// Matrix exponential. Nilpotent-of-index-two arguments (the phi^2
/// generators) are returned as `I + X` directly.
pub fn expm(x: &CMatrix) -> Result<CMatrix> {
    if !all_finite(x) {
        return Err(Error::NonFinite("exponential argument"));
    }
    let n = x.nrows();
    let scale = max_abs(x);
    if scale == 0.0 {
        return Ok(identity(n));
    }
    if squares_to_zero(x) {
        return Ok(identity(n) + x);
    }
    let e = x.clone().exp();
    if !all_finite(&e) {
        return Err(Error::NonFinite("matrix exponential"));
    }
    Ok(e)
}

/// `|exp(X) exp(-X) - I|_max`, the accuracy contract of [`expm`].
pub fn expm_residual(x: &CMatrix) -> Result<f64> {
    let p = expm(x)?;
    let m = expm(&(-x))?;
    Ok(max_abs(&(p * m - identity(x.nrows()))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn exponential_of_diagonal() {
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(0.0, 1.0), C64::new(-1.0, 0.5)]));
        let e = expm(&d).unwrap();
        assert!((e[(0, 0)] - C64::new(0.0, 1.0).exp()).norm() < 1e-15);
        assert!((e[(1, 1)] - C64::new(-1.0, 0.5).exp()).norm() < 1e-15);
    }

    #[test]
    fn nilpotent_shortcut_is_exact() {
        let mut x = CMatrix::zeros(3, 3);
        x[(0, 2)] = C64::new(2.0, -1.0);
        x[(0, 1)] = C64::new(0.5, 0.0);
        let e = expm(&x).unwrap();
        assert_eq!(e, identity(3) + &x);
    }

    #[test]
    fn residual_contract() {
        for seed in 0..5 {
            let x = random(6, seed) * C64::new(0.7, 0.0);
            assert!(expm_residual(&x).unwrap() < 1e-10);
        }
    }

    #[test]
    fn inverse_and_condition() {
        let a = random(5, 11);
        let (inv, cond) = inverse_with_condition(&a).unwrap();
        assert!(max_abs(&(&a * inv - identity(5))) < 1e-12);
        assert!(cond >= 1.0);
        assert!(inverse_with_condition(&CMatrix::zeros(2, 2)).is_none());
    }

    #[test]
    fn symmetry_measures() {
        let a = random(4, 3);
        assert!(asymmetry(&symmetrize(&a)) == 0.0);
        assert!(non_hermiticity(&hermitize(&a)) == 0.0);
        let t = trace_product(&a, &a.adjoint());
        assert!((t.re - a.norm_squared()).abs() < 1e-12);
    }
}
