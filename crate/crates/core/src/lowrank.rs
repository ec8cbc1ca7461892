//! Rank-one fast path for separable smearings.
//!
//! A `:phi^2:` coupling with `F = v v^T` acts on the single field mode with
//! creation vector `v`; a free-evolution delay only rephases that vector.
//! The three kicks of the Fermi sequence therefore touch at most a three
//! dimensional real subspace, spanned by `v_B`, `v_A cos(wT)` and
//! `v_A sin(wT)`. Every quantity in the pipeline is a function of the Gram
//! matrix of those vectors, so after an `O(N)` projection the amplitude is
//! evaluated exactly on three modes.

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

use crate::engine::{self, PhaseOptions, ProductAmplitude, ProductFactor, QuadraticGenerator};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::C64;

/// Relative Gram-spectrum mass that may be discarded by the compression.
pub const COMPRESSION_TOLERANCE: f64 = 1e-12;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn check_rank1(s: f64, lambda: f64, dk: f64) -> Result<C64> {
    if !(s.is_finite() && lambda.is_finite() && dk.is_finite()) {
        return Err(Error::NonFinite("rank-one generator"));
    }
    // Real part is exactly one, so this never vanishes.
    Ok(C64::new(1.0, 2.0 * lambda * dk * s))
}

/// `K = c v v^T` with `c = -2 i lambda / (1 + 2 i lambda dk s)`, `s = v^T v`.
pub fn rank1_k(v: &DVector<f64>, lambda: f64, dk: f64) -> Result<(C64, DVector<f64>)> {
    let den = check_rank1(v.norm_squared(), lambda, dk)?;
    Ok((-2.0 * I * lambda / den, v.clone()))
}

/// `D = i lambda dk s - (1/2) ln(1 + 2 i lambda dk s)`, principal branch.
pub fn rank1_d(v: &DVector<f64>, lambda: f64, dk: f64) -> Result<C64> {
    let s = v.norm_squared();
    let arg = check_rank1(s, lambda, dk)?;
    Ok(I * lambda * dk * s - 0.5 * arg.ln())
}

/// `h = dk^2 :(v^T a^dag + v^H a)^2:` for a complex creation vector `v`;
/// for real `v` this is the `:phi^2:` generator with `F = v v^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOneGenerator {
    pub v: DVector<C64>,
    pub dk: f64,
}

impl RankOneGenerator {
    pub fn from_real(v: &DVector<f64>, dk: f64) -> Self {
        Self { v: v.map(|x| C64::new(x, 0.0)), dk }
    }

    /// The generator seen after free evolution for `t`: `v_k -> e^{-i w_k t} v_k`.
    pub fn delayed(&self, omegas: &[f64], t: f64) -> Result<Self> {
        if omegas.len() != self.v.len() {
            return Err(Error::ShapeMismatch(format!("{} frequencies for {} modes", omegas.len(), self.v.len())));
        }
        let v = DVector::from_iterator(self.v.len(), self.v.iter().zip(omegas).map(|(x, w)| x * C64::from_polar(1.0, -w * t)));
        Ok(Self { v, dk: self.dk })
    }

    /// `s = v^H v`.
    pub fn s(&self) -> f64 {
        self.v.norm_squared()
    }

    pub fn nullifier(&self, lambda: f64) -> Result<CMatrix> {
        let den = check_rank1(self.s(), lambda, self.dk)?;
        Ok(&self.v * self.v.transpose() * (-2.0 * I * lambda / den))
    }

    pub fn phase(&self, lambda: f64) -> Result<C64> {
        let s = self.s();
        let arg = check_rank1(s, lambda, self.dk)?;
        Ok(I * lambda * self.dk * s - 0.5 * arg.ln())
    }

    /// Dense form: `A = conj(v) conj(v)^T`, `B = v v^H`.
    pub fn to_dense(&self) -> Result<QuadraticGenerator> {
        let vb = self.v.conjugate();
        QuadraticGenerator::new(&vb * vb.transpose(), &self.v * self.v.adjoint(), self.dk)
    }
}

/// `dk` times the Gram matrix of `(v_B, v_A cos(wT), v_A sin(wT))`.
pub fn fermi_gram(v_a: &DVector<f64>, v_b: &DVector<f64>, omegas: &[f64], t: f64, dk: f64) -> Result<Matrix3<f64>> {
    let n = v_a.len();
    if v_b.len() != n || omegas.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "vectors of length {} and {} with {} frequencies",
            n,
            v_b.len(),
            omegas.len()
        )));
    }
    let mut g = [0.0; 6];
    for k in 0..n {
        let (s, c) = (omegas[k] * t).sin_cos();
        let (b, ac, as_) = (v_b[k], v_a[k] * c, v_a[k] * s);
        g[0] += b * b;
        g[1] += b * ac;
        g[2] += b * as_;
        g[3] += ac * ac;
        g[4] += ac * as_;
        g[5] += as_ * as_;
    }
    let g = g.map(|x| x * dk);
    Ok(Matrix3::new(g[0], g[1], g[2], g[1], g[3], g[4], g[2], g[4], g[5]))
}

/// Coordinates of the three spanning vectors in an orthonormal basis of
/// their span, recovered from the Gram matrix alone.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceCompression {
    pub gram: Matrix3<f64>,
    /// Column `j` holds the coordinates of spanning vector `j`.
    pub coords: Matrix3<f64>,
    pub eigenvalues: [f64; 3],
    /// Discarded negative Gram spectrum relative to the trace.
    pub residual: f64,
}

impl SubspaceCompression {
    pub fn new(gram: Matrix3<f64>) -> Result<Self> {
        if gram.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Gram matrix"));
        }
        let sym = (gram + gram.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let trace = sym.trace();
        let neg: f64 = eig.eigenvalues.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
        let residual = if trace > 0.0 { neg / trace } else { 0.0 };
        let root = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        let coords = root * eig.eigenvectors.transpose();
        Ok(Self { gram: sym, coords, eigenvalues: [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]], residual })
    }

    /// Orthonormal basis `Q` (columns) of the span of `x`'s columns, for
    /// inspection; `x` must be the (dk-scaled) vectors the Gram came from.
    pub fn basis(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.gram);
        let scale = eig.eigenvalues.amax();
        let mut cols = Vec::new();
        for j in 0..3 {
            let l = eig.eigenvalues[j];
            if l > 1e-14 * scale {
                let e = eig.eigenvectors.column(j);
                let dir = x * DVector::from_column_slice(e.as_slice()) / l.sqrt();
                cols.push(dir);
            }
        }
        if cols.is_empty() {
            return DMatrix::zeros(x.nrows(), 0);
        }
        DMatrix::from_columns(&cols)
    }

    /// Compressed three-mode generators (unit measure): Alice's after the
    /// delay, and Bob's.
    fn generators(&self) -> Result<(QuadraticGenerator, QuadraticGenerator)> {
        let ub = self.coords.column(0);
        let p = DVector::from_iterator(3, (0..3).map(|i| C64::new(self.coords[(i, 1)], self.coords[(i, 2)])));
        let alice = RankOneGenerator { v: p.conjugate(), dk: 1.0 }.to_dense()?;
        let bob = RankOneGenerator::from_real(&DVector::from_column_slice(ub.as_slice()), 1.0).to_dense()?;
        Ok((alice, bob))
    }
}

/// `<0| S_A^dag(lambda_a; T) S_B(lambda_b) S_A(lambda_a; T) |0>` from the
/// Gram matrix of [`fermi_gram`].
pub fn amplitude_from_gram(gram: Matrix3<f64>, lambda_a: f64, lambda_b: f64, opts: &PhaseOptions) -> Result<(ProductAmplitude, f64)> {
    let comp = SubspaceCompression::new(gram)?;
    let (alice, bob) = comp.generators()?;
    let seq = [
        ProductFactor { generator: &alice, coupling: lambda_a, delay: 0.0 },
        ProductFactor { generator: &bob, coupling: lambda_b, delay: 0.0 },
        ProductFactor { generator: &alice, coupling: -lambda_a, delay: 0.0 },
    ];
    let amp = engine::vacuum_amplitude_product(&seq, &[0.0; 3], opts)?;
    Ok((amp, comp.residual))
}

/// The same amplitude on the full lattice with dense generators.
#[allow(clippy::too_many_arguments)]
pub fn dense_product_amplitude(
    v_a: &DVector<f64>,
    lambda_a: f64,
    t: f64,
    v_b: &DVector<f64>,
    lambda_b: f64,
    omegas: &[f64],
    dk: f64,
    opts: &PhaseOptions,
) -> Result<ProductAmplitude> {
    let ga = RankOneGenerator::from_real(v_a, dk).to_dense()?;
    let gb = RankOneGenerator::from_real(v_b, dk).to_dense()?;
    let seq = [
        ProductFactor { generator: &ga, coupling: lambda_a, delay: 0.0 },
        ProductFactor { generator: &gb, coupling: lambda_b, delay: t },
        ProductFactor { generator: &ga, coupling: -lambda_a, delay: -t },
    ];
    engine::vacuum_amplitude_product(&seq, omegas, opts)
}

/// Compressed evaluation of the Fermi amplitude; falls back to the dense
/// engine (with a warning) if the compression is not exact to tolerance.
#[allow(clippy::too_many_arguments)]
pub fn compressed_product_amplitude(
    v_a: &DVector<f64>,
    lambda_a: f64,
    t: f64,
    v_b: &DVector<f64>,
    lambda_b: f64,
    omegas: &[f64],
    dk: f64,
    opts: &PhaseOptions,
) -> Result<ProductAmplitude> {
    let gram = fermi_gram(v_a, v_b, omegas, t, dk)?;
    let (amp, residual) = amplitude_from_gram(gram, lambda_a, lambda_b, opts)?;
    if residual > COMPRESSION_TOLERANCE {
        warn!("subspace compression residual {residual:.3e} exceeds {COMPRESSION_TOLERANCE:e}; using the dense engine");
        return dense_product_amplitude(v_a, lambda_a, t, v_b, lambda_b, omegas, dk, opts);
    }
    Ok(amp)
}
