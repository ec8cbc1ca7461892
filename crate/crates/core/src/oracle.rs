//! Brute-force reference: quadratic Hamiltonians as dense matrices on a
//! truncated Fock space of at most three modes.
//!
//! Quadratic Hamiltonians conserve total-number parity, so everything that
//! starts from the vacuum lives in the even sector; only that block is
//! diagonalized.

use nalgebra::{DVector, SymmetricTridiagonal};

use crate::engine::QuadraticGenerator;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::tridiag::eigen_first_row;
use crate::C64;

pub const MAX_ORACLE_MODES: usize = 3;
pub const MAX_SPACE_DIM: usize = 1_000_000;
/// Largest parity block that is diagonalized densely.
pub const MAX_DENSE_BLOCK: usize = 6000;

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedFockSpace {
    modes: usize,
    nmax: usize,
    dk: f64,
}

impl TruncatedFockSpace {
    pub fn new(modes: usize, nmax: usize, dk: f64) -> Result<Self> {
        if modes == 0 || modes > MAX_ORACLE_MODES {
            return Err(Error::InvalidArgument(format!("oracle supports 1 to {MAX_ORACLE_MODES} modes, got {modes}")));
        }
        if nmax == 0 {
            return Err(Error::InvalidArgument("occupation cutoff must be at least 1".into()));
        }
        if !(dk.is_finite() && dk > 0.0) {
            return Err(Error::InvalidArgument(format!("measure dk = {dk} must be positive")));
        }
        let dim = (nmax + 1).checked_pow(modes as u32).unwrap_or(usize::MAX);
        if dim > MAX_SPACE_DIM {
            return Err(Error::DimensionGuard { dim, limit: MAX_SPACE_DIM });
        }
        Ok(Self { modes, nmax, dk })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    pub fn dk(&self) -> f64 {
        self.dk
    }

    pub fn dim(&self) -> usize {
        (self.nmax + 1).pow(self.modes as u32)
    }

    pub fn with_nmax(&self, nmax: usize) -> Result<Self> {
        Self::new(self.modes, nmax, self.dk)
    }

    /// Occupations of basis state `idx` (first mode most significant).
    pub fn occupations(&self, mut idx: usize) -> [usize; 3] {
        let mut occ = [0; 3];
        for j in (0..self.modes).rev() {
            occ[j] = idx % (self.nmax + 1);
            idx /= self.nmax + 1;
        }
        occ
    }

    pub fn index(&self, occ: &[usize; 3]) -> usize {
        occ[..self.modes].iter().fold(0, |acc, &n| acc * (self.nmax + 1) + n)
    }

    fn even_sector(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.occupations(i).iter().sum::<usize>() % 2 == 0).collect()
    }
}

/// Applies `b_j` (`create = false`) or `b_j^dag` to basis state `idx`,
/// returning the target state and coefficient. Creation at the cutoff
/// leaves the space and yields `None`.
fn ladder(space: &TruncatedFockSpace, idx: usize, j: usize, create: bool) -> Option<(usize, f64)> {
    let mut occ = space.occupations(idx);
    if create {
        if occ[j] == space.nmax {
            return None;
        }
        occ[j] += 1;
        Some((space.index(&occ), (occ[j] as f64).sqrt()))
    } else {
        if occ[j] == 0 {
            return None;
        }
        let c = (occ[j] as f64).sqrt();
        occ[j] -= 1;
        Some((space.index(&occ), c))
    }
}

fn check_generator(gen: &QuadraticGenerator, space: &TruncatedFockSpace) -> Result<()> {
    if gen.dim() != space.modes {
        return Err(Error::ShapeMismatch(format!("generator has {} modes, space has {}", gen.dim(), space.modes)));
    }
    if gen.dk() != space.dk {
        return Err(Error::InvalidArgument(format!("generator dk {} differs from space dk {}", gen.dk(), space.dk)));
    }
    Ok(())
}

/// `T = dk sum_kl (A_kl b_k b_l + B_kl b_k^dag b_l)` restricted to `basis`;
/// the Hamiltonian is `T + T^H`.
fn half_hamiltonian(gen: &QuadraticGenerator, space: &TruncatedFockSpace, basis: &[usize]) -> CMatrix {
    let n = basis.len();
    let mut pos = vec![usize::MAX; space.dim()];
    for (p, &i) in basis.iter().enumerate() {
        pos[i] = p;
    }
    let m = space.modes;
    let dk = C64::new(space.dk, 0.0);
    let mut t = CMatrix::zeros(n, n);
    for (col, &idx) in basis.iter().enumerate() {
        for k in 0..m {
            for l in 0..m {
                let a = gen.a()[(k, l)];
                if a != C64::new(0.0, 0.0) {
                    if let Some((i1, c1)) = ladder(space, idx, l, false) {
                        if let Some((i2, c2)) = ladder(space, i1, k, false) {
                            if pos[i2] != usize::MAX {
                                t[(pos[i2], col)] += dk * a * (c1 * c2);
                            }
                        }
                    }
                }
                let b = gen.b()[(k, l)];
                if b != C64::new(0.0, 0.0) {
                    if let Some((i1, c1)) = ladder(space, idx, l, false) {
                        if let Some((i2, c2)) = ladder(space, i1, k, true) {
                            if pos[i2] != usize::MAX {
                                t[(pos[i2], col)] += dk * b * (c1 * c2);
                            }
                        }
                    }
                }
            }
        }
    }
    t
}

fn hermitian_from_half(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    CMatrix::from_fn(n, n, |i, j| t[(i, j)] + t[(j, i)].conj())
}

/// `h = dk^2 sum (A aa + 2B a^dag a + conj(A) a^dag a^dag)` with
/// `[a, a^dag] = 1/dk`, on the full truncated space. Hermitian exactly.
pub fn build_hamiltonian(gen: &QuadraticGenerator, space: &TruncatedFockSpace) -> Result<CMatrix> {
    check_generator(gen, space)?;
    if space.dim() > MAX_DENSE_BLOCK {
        return Err(Error::DimensionGuard { dim: space.dim(), limit: MAX_DENSE_BLOCK });
    }
    let basis: Vec<usize> = (0..space.dim()).collect();
    Ok(hermitian_from_half(&half_hamiltonian(gen, space, &basis)))
}

fn even_hamiltonian(gen: &QuadraticGenerator, space: &TruncatedFockSpace) -> Result<(Vec<usize>, CMatrix)> {
    check_generator(gen, space)?;
    let basis = space.even_sector();
    if basis.len() > MAX_DENSE_BLOCK {
        return Err(Error::DimensionGuard { dim: basis.len(), limit: MAX_DENSE_BLOCK });
    }
    let h = hermitian_from_half(&half_hamiltonian(gen, space, &basis));
    Ok((basis, h))
}

/// `<0| exp(-i lambda h) |0>` from the spectral weights of the vacuum.
pub fn oracle_vacuum_amplitude(gen: &QuadraticGenerator, lambda: f64, space: &TruncatedFockSpace) -> Result<C64> {
    let (basis, h) = even_hamiltonian(gen, space)?;
    debug_assert_eq!(basis[0], 0);
    // Householder reflections leave the first basis vector (the vacuum)
    // fixed, so its weights come from the tridiagonal form directly.
    let (diag, off) = SymmetricTridiagonal::new(h).unpack_tridiagonal();
    let (vals, z) = eigen_first_row(diag.iter().copied().collect(), off.as_slice())?;
    Ok(vals.iter().zip(&z).map(|(&e, &w)| w * w * C64::from_polar(1.0, -lambda * e)).sum())
}

/// An oracle number together with its value at twice the cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleValue {
    pub value: C64,
    pub companion: C64,
    pub nmax: usize,
}

impl OracleValue {
    /// Change from doubling the cutoff.
    pub fn truncation_error(&self) -> f64 {
        (self.value - self.companion).norm()
    }
}

pub fn oracle_vacuum_amplitude_checked(gen: &QuadraticGenerator, lambda: f64, space: &TruncatedFockSpace) -> Result<OracleValue> {
    let value = oracle_vacuum_amplitude(gen, lambda, space)?;
    let companion = oracle_vacuum_amplitude(gen, lambda, &space.with_nmax(2 * space.nmax)?)?;
    Ok(OracleValue { value, companion, nmax: space.nmax })
}

/// A state vector on the full truncated space.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleState {
    pub space: TruncatedFockSpace,
    pub amplitudes: DVector<C64>,
}

impl OracleState {
    pub fn vacuum(space: &TruncatedFockSpace) -> Self {
        let mut v = DVector::zeros(space.dim());
        v[0] = C64::new(1.0, 0.0);
        Self { space: space.clone(), amplitudes: v }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn vacuum_component(&self) -> C64 {
        self.amplitudes[0]
    }

    /// `exp(-i T sum_k w_k b_k^dag b_k)`.
    pub fn free_evolve(&mut self, omegas: &[f64], t: f64) -> Result<()> {
        if omegas.len() != self.space.modes {
            return Err(Error::ShapeMismatch(format!("{} frequencies for {} modes", omegas.len(), self.space.modes)));
        }
        for i in 0..self.space.dim() {
            let occ = self.space.occupations(i);
            let e: f64 = (0..self.space.modes).map(|k| omegas[k] * occ[k] as f64).sum();
            self.amplitudes[i] *= C64::from_polar(1.0, -e * t);
        }
        Ok(())
    }

    /// `exp(-i lambda h)` applied through the even-sector eigenbasis. The
    /// odd sector is untouched because the state starts from the vacuum.
    pub fn apply(&mut self, gen: &QuadraticGenerator, lambda: f64) -> Result<()> {
        let (basis, h) = even_hamiltonian(gen, &self.space)?;
        let eig = h.symmetric_eigen();
        let psi = DVector::from_iterator(basis.len(), basis.iter().map(|&i| self.amplitudes[i]));
        let mut coef = eig.eigenvectors.adjoint() * psi;
        for (c, &e) in coef.iter_mut().zip(eig.eigenvalues.iter()) {
            *c *= C64::from_polar(1.0, -lambda * e);
        }
        let out = &eig.eigenvectors * coef;
        for (p, &i) in basis.iter().enumerate() {
            self.amplitudes[i] = out[p];
        }
        Ok(())
    }
}

/// `exp(-i lambda h)|0>`.
pub fn oracle_state(gen: &QuadraticGenerator, lambda: f64, space: &TruncatedFockSpace) -> Result<OracleState> {
    let mut s = OracleState::vacuum(space);
    s.apply(gen, lambda)?;
    Ok(s)
}

/// `S_n U_0(T_n) ... S_1 U_0(T_1)|0>` for factors `(generator, coupling, delay)`.
pub fn oracle_product_state(
    factors: &[(&QuadraticGenerator, f64, f64)],
    omegas: &[f64],
    space: &TruncatedFockSpace,
) -> Result<OracleState> {
    let mut s = OracleState::vacuum(space);
    for &(g, lambda, delay) in factors {
        s.free_evolve(omegas, delay)?;
        s.apply(g, lambda)?;
    }
    Ok(s)
}

/// `max_j |(a_j - dk (K a^dag)_j) psi| / |psi|` with `a = b / sqrt(dk)`.
pub fn oracle_nullifier_residual(state: &OracleState, k: &CMatrix) -> Result<f64> {
    oracle_nullifier_residual_within(state, k, state.space.nmax)
}

/// As [`oracle_nullifier_residual`], counting only output components whose
/// occupations are all at most `shell`. Shells below the cutoff exclude the
/// boundary, where truncated evolution distorts the state.
pub fn oracle_nullifier_residual_within(state: &OracleState, k: &CMatrix, shell: usize) -> Result<f64> {
    let space = &state.space;
    let m = space.modes;
    if k.nrows() != m || k.ncols() != m {
        return Err(Error::ShapeMismatch(format!("K is {}x{}, space has {m} modes", k.nrows(), k.ncols())));
    }
    let norm = state.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("zero state".into()));
    }
    let s = space.dk.sqrt();
    let mut worst: f64 = 0.0;
    for j in 0..m {
        let mut out = DVector::<C64>::zeros(space.dim());
        for idx in 0..space.dim() {
            let amp = state.amplitudes[idx];
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            if let Some((t, c)) = ladder(space, idx, j, false) {
                out[t] += amp * (c / s);
            }
            for l in 0..m {
                if let Some((t, c)) = ladder(space, idx, l, true) {
                    // dk K_jl a_l^dag = dk K_jl b_l^dag / sqrt(dk)
                    out[t] -= amp * k[(j, l)] * (c * s);
                }
            }
        }
        if shell < space.nmax {
            for (idx, v) in out.iter_mut().enumerate() {
                if space.occupations(idx).iter().any(|&o| o > shell) {
                    *v = C64::new(0.0, 0.0);
                }
            }
        }
        worst = worst.max(out.norm() / norm);
    }
    Ok(worst)
}

pub fn oracle_overlap(s1: &OracleState, s2: &OracleState) -> Result<C64> {
    if s1.space != s2.space {
        return Err(Error::ShapeMismatch("states live on different spaces".into()));
    }
    Ok(s1.amplitudes.dotc(&s2.amplitudes))
}
