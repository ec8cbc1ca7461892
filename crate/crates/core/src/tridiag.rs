//! Implicit QL on a real symmetric tridiagonal matrix, tracking only the
//! first component of each eigenvector. That is all a spectral weight
//! `<e0| f(T) |e0>` needs, and it keeps the cost at O(n^2).

use crate::error::{Error, Result};

/// Returns `(eigenvalues, first components of the eigenvectors)` for the
/// tridiagonal matrix with diagonal `d` and off-diagonal `e`.
pub(crate) fn eigen_first_row(mut d: Vec<f64>, off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    if n == 0 {
        return Ok((d, Vec::new()));
    }
    if off.len() + 1 != n {
        return Err(Error::ShapeMismatch(format!("{} off-diagonals for dimension {n}", off.len())));
    }
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Integration("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn matches_dense_eigen() {
        let d = vec![1.0, -0.5, 2.0, 0.3, 0.7];
        let e = vec![0.4, 1.1, -0.2, 0.9];
        let n = d.len();
        let mut t = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone()));
        for i in 0..n - 1 {
            t[(i, i + 1)] = e[i];
            t[(i + 1, i)] = e[i];
        }
        let (vals, z) = eigen_first_row(d, &e).unwrap();
        let weights: f64 = z.iter().map(|x| x * x).sum();
        assert!((weights - 1.0).abs() < 1e-14);
        // <e0| T^p |e0> from the spectral weights
        let tp = &t * &t * &t;
        let s: f64 = vals.iter().zip(&z).map(|(l, w)| l.powi(3) * w * w).sum();
        assert!((s - tp[(0, 0)]).abs() < 1e-12);
        let full = t.symmetric_eigen();
        let mut a = vals.clone();
        let mut b: Vec<f64> = full.eigenvalues.iter().copied().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn trivial_sizes() {
        assert_eq!(eigen_first_row(vec![], &[]).unwrap().0.len(), 0);
        let (v, z) = eigen_first_row(vec![3.0], &[]).unwrap();
        assert_eq!((v[0], z[0]), (3.0, 1.0));
    }
}
