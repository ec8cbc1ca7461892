//! Gaussian-state algebra: Bogoliubov conjugation, the nullifier matrix `K`,
//! the phase `D`, free evolution, overlaps and vacuum amplitudes of products
//! of quadratic unitaries.
//!
//! A state is `e^D exp(dk^2 a^T K a / 2)|0>` with `[a, a^dag] = 1/dk`
//! (`a^T K a` meaning creation operators on both sides). Internally most of the work
//! happens in the rescaled frame `b = sqrt(dk) a` where the commutator is
//! Kronecker and the matrices become `dk K`, `dk A`, `dk B`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::mode_lattice::ModeLattice;
use crate::ode::{self, OdeOptions, OdeStats};
use crate::smearing::GeneratorMatrices;
use crate::C64;

/// Largest mode count handled by the dense engine (2N x 2N exponentials).
pub const MAX_DENSE_MODES: usize = 3000;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `h = dk^2 sum_kk' (A aa + 2B a^dag a + conj(A) a^dag a^dag)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticGenerator {
    a: CMatrix,
    b: CMatrix,
    dk: f64,
}

impl QuadraticGenerator {
    /// `A` must be symmetric and `B` Hermitian to `1e-12` (relative); both
    /// are then projected so the properties hold exactly.
    pub fn new(a: CMatrix, b: CMatrix, dk: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || b.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if n > MAX_DENSE_MODES {
            return Err(Error::DimensionGuard { dim: n, limit: MAX_DENSE_MODES });
        }
        if !(dk.is_finite() && dk > 0.0) {
            return Err(Error::InvalidArgument(format!("measure dk = {dk} must be positive")));
        }
        if !linalg::all_finite(&a) || !linalg::all_finite(&b) {
            return Err(Error::NonFinite("generator"));
        }
        let dev = linalg::asymmetry(&a);
        if dev > 1e-12 {
            return Err(Error::Symmetry { kind: "symmetric (A)", deviation: dev });
        }
        let dev = linalg::non_hermiticity(&b);
        if dev > 1e-12 {
            return Err(Error::Symmetry { kind: "Hermitian (B)", deviation: dev });
        }
        Ok(Self { a: linalg::symmetrize(&a), b: linalg::hermitize(&b), dk })
    }

    pub fn from_matrices(m: &GeneratorMatrices, lattice: &ModeLattice) -> Result<Self> {
        if m.a.nrows() != lattice.len() {
            return Err(Error::ShapeMismatch(format!(
                "generator has {} modes, lattice has {}",
                m.a.nrows(),
                lattice.len()
            )));
        }
        Self::new(m.a.clone(), m.b.clone(), lattice.dk())
    }

    /// `A = B = F`, the generator of a `:phi^2:` coupling.
    pub fn phi_squared(f: &DMatrix<f64>, dk: f64) -> Result<Self> {
        let fc = linalg::to_complex(f);
        Self::new(fc.clone(), fc, dk)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn b(&self) -> &CMatrix {
        &self.b
    }

    pub fn dk(&self) -> f64 {
        self.dk
    }

    pub fn is_zero(&self) -> bool {
        linalg::max_abs(&self.a) == 0.0 && linalg::max_abs(&self.b) == 0.0
    }

    /// `M = [[-B, -conj(A)], [A, conj(B)]]`.
    pub fn generator_matrix(&self) -> CMatrix {
        let n = self.dim();
        let mut m = CMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&(-&self.b));
        m.view_mut((0, n), (n, n)).copy_from(&(-self.a.conjugate()));
        m.view_mut((n, 0), (n, n)).copy_from(&self.a);
        m.view_mut((n, n), (n, n)).copy_from(&self.b.conjugate());
        m
    }

    /// `exp(-2 i lambda dk M)`.
    fn exponential(&self, lambda: f64) -> Result<CMatrix> {
        linalg::expm(&(self.generator_matrix() * (-2.0 * I * lambda * self.dk)))
    }

    fn scaled(&self) -> (CMatrix, CMatrix) {
        (&self.a * c(self.dk), &self.b * c(self.dk))
    }
}

/// Top block row `(G1 G2)` of `exp(-2 i lambda dk M)`: the Heisenberg image
/// of the annihilation operators is `G1 b + G2 b^dag`.
#[derive(Clone, Debug, PartialEq)]
pub struct BogoliubovBlocks {
    pub g1: CMatrix,
    pub g2: CMatrix,
}

impl BogoliubovBlocks {
    /// `|G1 G1^H - G2 G2^H - I|_max`.
    pub fn bogoliubov_residual(&self) -> f64 {
        let n = self.g1.nrows();
        linalg::max_abs(&(&self.g1 * self.g1.adjoint() - &self.g2 * self.g2.adjoint() - linalg::identity(n)))
    }
}

fn top_blocks(e: &CMatrix, n: usize, k0: Option<&CMatrix>) -> BogoliubovBlocks {
    let e11 = e.view((0, 0), (n, n));
    let e12 = e.view((0, n), (n, n));
    match k0 {
        None => BogoliubovBlocks { g1: e11.into_owned(), g2: e12.into_owned() },
        Some(k) => {
            let e21 = e.view((n, 0), (n, n));
            let e22 = e.view((n, n), (n, n));
            BogoliubovBlocks { g1: e11 - k * e21, g2: e12 - k * e22 }
        }
    }
}

pub fn conjugation_blocks(gen: &QuadraticGenerator, lambda: f64) -> Result<BogoliubovBlocks> {
    if !lambda.is_finite() {
        return Err(Error::NonFinite("coupling"));
    }
    let e = gen.exponential(lambda)?;
    Ok(top_blocks(&e, gen.dim(), None))
}

/// `dk K = -G1^{-1} G2` in the rescaled frame.
fn nullifier_scaled(blocks: &BogoliubovBlocks) -> Result<CMatrix> {
    let (inv, cond) = linalg::inverse_with_condition(&blocks.g1)
        .ok_or_else(|| Error::Degenerate("G1 is singular".into()))?;
    if cond > 1e14 {
        return Err(Error::Degenerate(format!("G1 condition number {cond:.3e}")));
    }
    let k = -(inv * &blocks.g2);
    let dev = linalg::max_abs(&(&k - k.transpose()));
    if dev > 1e-10 * (1.0 + linalg::max_abs(&k)) {
        return Err(Error::Symmetry { kind: "symmetric (K)", deviation: dev });
    }
    Ok(linalg::symmetrize(&k))
}

/// `K = -G1^{-1} G2 / dk`, symmetrized after checking the asymmetry.
pub fn nullifier_k(blocks: &BogoliubovBlocks, dk: f64) -> Result<CMatrix> {
    Ok(nullifier_scaled(blocks)? / c(dk))
}

/// A zero-mean Gaussian ket `(K, D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKet {
    pub k: CMatrix,
    pub d: C64,
    pub dk: f64,
}

impl GaussianKet {
    pub fn vacuum(n: usize, dk: f64) -> Self {
        Self { k: CMatrix::zeros(n, n), d: C64::new(0.0, 0.0), dk }
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    /// `<0|state> = e^D`.
    pub fn vacuum_amplitude(&self) -> C64 {
        self.d.exp()
    }

    /// Largest singular value of `dk K`; below one for normalizable states.
    pub fn k_radius(&self) -> f64 {
        linalg::spectral_norm(&(&self.k * c(self.dk)))
    }
}

/// Blocks of the inverse of
///
/// ```text
/// aleph = [[2 dk I - dk^2 (K + conj K),  i dk^2 (K - conj K)],
///          [i dk^2 (K - conj K),         2 dk I + dk^2 (K + conj K)]]
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct AlephBlocks {
    pub gamma: CMatrix,
    pub sigma: CMatrix,
    pub xi: CMatrix,
    pub psi: CMatrix,
}

impl AlephBlocks {
    pub fn assemble(&self) -> CMatrix {
        let n = self.gamma.nrows();
        let mut m = CMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.gamma);
        m.view_mut((0, n), (n, n)).copy_from(&self.sigma);
        m.view_mut((n, 0), (n, n)).copy_from(&self.xi);
        m.view_mut((n, n), (n, n)).copy_from(&self.psi);
        m
    }

    /// `Gamma - i Xi - i Sigma - Psi`.
    pub fn weight(&self) -> CMatrix {
        &self.gamma - (&self.xi + &self.sigma) * I - &self.psi
    }
}

pub const ALEPH_CONDITION_LIMIT: f64 = 1e13;

pub fn aleph_matrix(k: &CMatrix, dk: f64) -> CMatrix {
    let n = k.nrows();
    let kb = k.conjugate();
    let s = (k + &kb) * c(dk * dk);
    let d = (k - &kb) * (I * dk * dk);
    let id = linalg::identity(n) * c(2.0 * dk);
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&id - &s));
    m.view_mut((0, n), (n, n)).copy_from(&d);
    m.view_mut((n, 0), (n, n)).copy_from(&d);
    m.view_mut((n, n), (n, n)).copy_from(&(&id + &s));
    m
}

pub fn aleph_inverse(k: &CMatrix, dk: f64) -> Result<AlephBlocks> {
    let n = k.nrows();
    let m = aleph_matrix(k, dk);
    let (inv, cond) = linalg::inverse_with_condition(&m).ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    if cond > ALEPH_CONDITION_LIMIT {
        return Err(Error::IllConditioned { cond });
    }
    Ok(AlephBlocks {
        gamma: inv.view((0, 0), (n, n)).into_owned(),
        sigma: inv.view((0, n), (n, n)).into_owned(),
        xi: inv.view((n, 0), (n, n)).into_owned(),
        psi: inv.view((n, n), (n, n)).into_owned(),
    })
}

/// The weight `Gamma - i Xi - i Sigma - Psi` without forming the doubled
/// matrix: in the basis `[I; -iI], [I; iI]` the matrix block-diagonalizes to
/// `2 dk [[I, -K_b], [-conj(K_b), I]]`, leaving
/// `W = conj(K_b) (I - K_b conj(K_b))^{-1} / dk` with `K_b = dk K`.
pub fn aleph_weight(k: &CMatrix, dk: f64) -> Result<CMatrix> {
    let kb = k * c(dk);
    let kbar = kb.conjugate();
    let m = linalg::identity(k.nrows()) - &kb * &kbar;
    let (inv, cond) = linalg::inverse_with_condition(&m).ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    if cond > ALEPH_CONDITION_LIMIT {
        return Err(Error::IllConditioned { cond });
    }
    Ok(kbar * inv / c(dk))
}

/// `D' = -(dk^2 / 2) Tr([Gamma - i Xi - i Sigma - Psi] K')`.
pub fn phase_rhs(k: &CMatrix, k_prime: &CMatrix, dk: f64) -> Result<C64> {
    if linalg::max_abs(k_prime) == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let w = aleph_inverse(k, dk)?.weight();
    Ok(-0.5 * dk * dk * linalg::trace_product(&w, k_prime))
}

/// Pair moments `<b b^T>` and `<b^dag b^T>` of the normalized state with
/// rescaled nullifier `kb`.
fn moments(kb: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let n = kb.nrows();
    let kbar = kb.conjugate();
    let m = linalg::identity(n) - kb * &kbar;
    let pair = linalg::solve(&m, kb).ok_or_else(|| Error::Degenerate("state is not normalizable".into()))?;
    let number = &kbar * &pair;
    Ok((pair, number))
}

/// The same phase derivative written through the pair moment:
/// `D' = -(1/2) Tr(conj(<b b^T>) dK_b)`. Used to cross-check [`phase_rhs`].
pub fn phase_rhs_moments(kb: &CMatrix, kb_prime: &CMatrix) -> Result<C64> {
    let (pair, _) = moments(kb)?;
    Ok(-0.5 * linalg::trace_product(&pair.conjugate(), kb_prime))
}

/// `<h>` in the normalized state with rescaled nullifier `kb`.
fn generator_expectation(gen: &QuadraticGenerator, kb: &CMatrix) -> Result<f64> {
    if linalg::max_abs(kb) == 0.0 {
        return Ok(0.0);
    }
    let (ae, be) = gen.scaled();
    let (pair, number) = moments(kb)?;
    let t = 2.0 * linalg::trace_product(&ae, &pair).re + 2.0 * linalg::trace_product(&be, &number.transpose()).re;
    Ok(t)
}

/// Riccati flow of the rescaled nullifier under `exp(-i mu h)`:
/// `dK_b/dmu = -2i (conj(A_e) + B_e K_b + K_b conj(B_e) + K_b A_e K_b)`.
fn riccati(gen: &QuadraticGenerator, kb: &CMatrix) -> CMatrix {
    let (ae, be) = gen.scaled();
    let s = ae.conjugate() + &be * kb + kb * be.conjugate() + kb * &ae * kb;
    s * (-2.0 * I)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseOptions {
    pub ode: OdeOptions,
}

/// Evolves the state `(kb0, d0)` (rescaled frame) by `exp(-i lambda h)`.
struct Flow<'a> {
    gen: &'a QuadraticGenerator,
    kb0: Option<CMatrix>,
    source: C64,
    /// `-2 i dk M`, and whether it squares to zero.
    x: CMatrix,
    nilpotent: bool,
}

impl<'a> Flow<'a> {
    fn new(gen: &'a QuadraticGenerator, kb0: Option<CMatrix>) -> Result<Self> {
        let source = match &kb0 {
            Some(k) => -I * generator_expectation(gen, k)?,
            None => C64::new(0.0, 0.0),
        };
        let x = gen.generator_matrix() * (-2.0 * I * gen.dk);
        let nilpotent = linalg::squares_to_zero(&x);
        Ok(Self { gen, kb0, source, x, nilpotent })
    }

    fn kb_at(&self, mu: f64) -> Result<CMatrix> {
        let e = if self.nilpotent {
            linalg::identity(self.x.nrows()) + &self.x * c(mu)
        } else {
            linalg::expm(&(&self.x * c(mu)))?
        };
        nullifier_scaled(&top_blocks(&e, self.gen.dim(), self.kb0.as_ref()))
    }

    fn d_prime(&self, mu: f64) -> Result<C64> {
        let kb = self.kb_at(mu)?;
        let kp = riccati(self.gen, &kb);
        let dk = self.gen.dk;
        if linalg::max_abs(&kp) == 0.0 {
            return Ok(self.source);
        }
        let w = aleph_weight(&(kb / c(dk)), dk)?;
        Ok(self.source - 0.5 * dk * linalg::trace_product(&w, &kp))
    }

    /// `D' = drift + bounded remainder`: the prefix source is constant and
    /// the normal-ordering offset `i Tr(B_e)` is the large-coupling slope,
    /// so both are added exactly and only the remainder is integrated. This
    /// keeps the tolerance absolute when `|D|` grows large.
    fn drift(&self) -> C64 {
        self.source + I * (self.gen.b.trace().re * self.gen.dk)
    }

    /// Nilpotent generators. The moment terms of `D'` collapse to
    /// `-i Tr(A_e K_b)`, and `K_b = Y P^-1` with `P(mu) = I + mu N`, so the
    /// phase is `i mu Tr(B_e) - (1/2) ln det P`. Each eigenvalue factor
    /// `1 + mu nu` traces a straight segment from 1 and the principal
    /// logarithm follows it continuously.
    fn run_nilpotent(&self, lambda: f64, d0: C64) -> Result<(CMatrix, C64, OdeStats)> {
        let (ae, be) = self.gen.scaled();
        let kb0 = self.kb0.clone().unwrap_or_else(|| CMatrix::zeros(self.gen.dim(), self.gen.dim()));
        let n = (&ae * &kb0 + be.conjugate()) * (2.0 * I * lambda);
        let nus = n
            .schur()
            .eigenvalues()
            .ok_or_else(|| Error::Branch("eigenvalues of the flow denominator did not converge".into()))?;
        let mut log_det = C64::new(0.0, 0.0);
        for nu in nus.iter() {
            let f = C64::new(1.0, 0.0) + nu;
            if f.norm() < 1e-12 || (f.re <= 0.0 && f.im.abs() < 1e-12) {
                return Err(Error::Degenerate(format!("flow denominator passes through zero (factor {f})")));
            }
            log_det += f.ln();
        }
        let d = d0 + I * be.trace() * lambda - 0.5 * log_det;
        Ok((self.kb_at(lambda)?, d, OdeStats::default()))
    }

    /// The exact nilpotent route when available, otherwise the ODE.
    fn advance(&self, lambda: f64, d0: C64, opts: &PhaseOptions) -> Result<(CMatrix, C64, OdeStats)> {
        if self.nilpotent {
            return self.run_nilpotent(lambda, d0);
        }
        self.run(lambda, d0, opts)
    }

    fn run(&self, lambda: f64, d0: C64, opts: &PhaseOptions) -> Result<(CMatrix, C64, OdeStats)> {
        let drift = self.drift();
        let (rest, stats) = ode::integrate(|mu, _| Ok(self.d_prime(mu)? - drift), 0.0, lambda, C64::new(0.0, 0.0), opts.ode)?;
        Ok((self.kb_at(lambda)?, d0 + drift * lambda + rest, stats))
    }
}

/// `exp(-i lambda h)|0>` as `(K, D)`, integrating the phase ODE from the
/// vacuum.
pub fn phase_integrate(gen: &QuadraticGenerator, lambda: f64) -> Result<GaussianKet> {
    phase_integrate_with(gen, lambda, &PhaseOptions::default())
}

pub fn phase_integrate_with(gen: &QuadraticGenerator, lambda: f64, opts: &PhaseOptions) -> Result<GaussianKet> {
    if !lambda.is_finite() {
        return Err(Error::NonFinite("coupling"));
    }
    let (kb, d, _) = Flow::new(gen, None)?.run(lambda, C64::new(0.0, 0.0), opts)?;
    Ok(GaussianKet { k: kb / c(gen.dk), d, dk: gen.dk })
}

/// `D = i lambda Tr(dk F) - (1/2) Tr ln(I + 2 i lambda dk F)` for Hermitian
/// `F`, evaluated eigenvalue by eigenvalue with the principal logarithm.
pub fn phase_phi2_closed_form(f: &CMatrix, lambda: f64, dk: f64) -> Result<C64> {
    let dev = linalg::non_hermiticity(f);
    if dev > 1e-12 {
        return Err(Error::Symmetry { kind: "Hermitian (F)", deviation: dev });
    }
    if f.is_empty() {
        return Ok(C64::new(0.0, 0.0));
    }
    let eig = linalg::hermitize(f).symmetric_eigenvalues();
    let mut d = C64::new(0.0, 0.0);
    for &mu in eig.iter() {
        let arg = C64::new(1.0, 2.0 * lambda * dk * mu);
        // Re(arg) = 1: strictly inside the principal branch.
        debug_assert!(arg.re > 0.0);
        d += I * lambda * dk * mu - 0.5 * arg.ln();
    }
    Ok(d)
}

/// `K_kk' -> exp(-i (w_k + w_k') T) K_kk'`; `D` is unchanged because the
/// free Hamiltonian annihilates the vacuum.
pub fn free_evolve(state: &GaussianKet, omegas: &[f64], t: f64) -> Result<GaussianKet> {
    if omegas.len() != state.dim() {
        return Err(Error::ShapeMismatch(format!("{} frequencies for {} modes", omegas.len(), state.dim())));
    }
    if t == 0.0 {
        return Ok(state.clone());
    }
    Ok(GaussianKet { k: phase_rotate(&state.k, omegas, t), d: state.d, dk: state.dk })
}

fn phase_rotate(k: &CMatrix, omegas: &[f64], t: f64) -> CMatrix {
    let ph: Vec<C64> = omegas.iter().map(|w| C64::from_polar(1.0, -w * t)).collect();
    CMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * ph[i] * ph[j])
}

/// `<s1|s2> = exp(conj(D1) + D2) det(I - dk^2 conj(K1) K2)^{-1/2}`.
///
/// Along the homotopy `(t K1, t K2)` each eigenvalue factor `1 - t^2 nu`
/// traces a straight segment from 1, so the continuously tracked square
/// root is the product of principal roots unless a segment passes through
/// zero, which is reported as a branch failure.
pub fn overlap(s1: &GaussianKet, s2: &GaussianKet) -> Result<C64> {
    if s1.dim() != s2.dim() || s1.dk != s2.dk {
        return Err(Error::ShapeMismatch("states live on different lattices".into()));
    }
    let pre = (s1.d.conj() + s2.d).exp();
    if s1.dim() == 0 {
        return Ok(pre);
    }
    let x = s1.k.conjugate() * &s2.k * c(s1.dk * s1.dk);
    let nus = x
        .clone()
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::Branch("eigenvalues of conj(K1) K2 did not converge".into()))?;
    let mut root = C64::new(1.0, 0.0);
    for nu in nus.iter() {
        let f = C64::new(1.0, 0.0) - nu;
        if f.norm() < 1e-12 || (f.re <= 0.0 && f.im.abs() < 1e-12) {
            return Err(Error::Branch(format!("determinant path passes through zero (factor {f})")));
        }
        root *= f.sqrt();
    }
    Ok(pre / root)
}

/// One factor `exp(-i coupling h)` of a product, preceded by free evolution
/// for `delay`.
#[derive(Clone, Copy, Debug)]
pub struct ProductFactor<'a> {
    pub generator: &'a QuadraticGenerator,
    pub coupling: f64,
    pub delay: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductAmplitude {
    pub value: C64,
    /// `ln` of the amplitude when it is nonzero.
    pub log_amplitude: Option<C64>,
    /// A composed `G1` became singular: the product maps the vacuum to a
    /// state orthogonal to it.
    pub degenerate: bool,
    /// Factors left after dropping zero couplings and merging neighbours.
    pub factors_evaluated: usize,
}

/// Drops zero-coupling factors (carrying their delay forward) and merges
/// adjacent factors with the same generator and no net delay between them.
pub fn simplify_product<'a>(factors: &[ProductFactor<'a>]) -> Vec<ProductFactor<'a>> {
    let mut out: Vec<ProductFactor<'a>> = Vec::new();
    let mut pending = 0.0;
    for f in factors {
        let delay = pending + f.delay;
        if f.coupling == 0.0 || f.generator.is_zero() {
            pending = delay;
            continue;
        }
        pending = 0.0;
        if let Some(top) = out.last_mut() {
            if delay == 0.0 && (std::ptr::eq(top.generator, f.generator) || top.generator == f.generator) {
                top.coupling += f.coupling;
                if top.coupling == 0.0 {
                    pending = top.delay;
                    out.pop();
                }
                continue;
            }
        }
        out.push(ProductFactor { delay, ..*f });
    }
    out
}

/// `<0| S_n ... S_1 |0>` with `S_j = exp(-i lambda_j h_j) U_0(T_j)`.
///
/// The last factor's coupling is the integration variable: with the prefix
/// state fixed, `K(mu)` follows from the composed blocks and
/// `D' = -i <h_n>_prefix - (dk^2 / 2) Tr(W K')`. Nilpotent factors use the
/// exact log-determinant form of the same integral.
pub fn vacuum_amplitude_product(factors: &[ProductFactor], omegas: &[f64], opts: &PhaseOptions) -> Result<ProductAmplitude> {
    for f in factors {
        if f.generator.dim() != omegas.len() {
            return Err(Error::ShapeMismatch(format!(
                "generator has {} modes, {} frequencies given",
                f.generator.dim(),
                omegas.len()
            )));
        }
        if !(f.coupling.is_finite() && f.delay.is_finite()) {
            return Err(Error::NonFinite("product factor"));
        }
    }
    if let Some(first) = factors.first() {
        if factors.iter().any(|f| f.generator.dk != first.generator.dk) {
            return Err(Error::ShapeMismatch("factors use different measures".into()));
        }
    }
    let seq = simplify_product(factors);
    let mut kb: Option<CMatrix> = None;
    let mut d = C64::new(0.0, 0.0);
    for f in &seq {
        let prefix = kb.take().map(|k| phase_rotate(&k, omegas, f.delay));
        let flow = match Flow::new(f.generator, prefix) {
            Ok(fl) => fl,
            Err(Error::Degenerate(_)) => return Ok(degenerate(seq.len())),
            Err(e) => return Err(e),
        };
        match flow.advance(f.coupling, d, opts) {
            Ok((k, dn, _)) => {
                kb = Some(k);
                d = dn;
            }
            Err(Error::Degenerate(msg)) => {
                log::debug!("product amplitude degenerate: {msg}");
                return Ok(degenerate(seq.len()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ProductAmplitude { value: d.exp(), log_amplitude: Some(d), degenerate: false, factors_evaluated: seq.len() })
}

fn degenerate(n: usize) -> ProductAmplitude {
    ProductAmplitude { value: C64::new(0.0, 0.0), log_amplitude: None, degenerate: true, factors_evaluated: n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    fn scalar(x: C64) -> CMatrix {
        CMatrix::from_element(1, 1, x)
    }

    fn random_generator(rng: &mut ChaCha8Rng, n: usize, bound: f64, dk: f64) -> QuadraticGenerator {
        let mut r = || C64::new(rng.random_range(-bound..bound), rng.random_range(-bound..bound));
        let a = CMatrix::from_fn(n, n, |_, _| r());
        let b = CMatrix::from_fn(n, n, |_, _| r());
        QuadraticGenerator::new(linalg::symmetrize(&a), linalg::hermitize(&b), dk).unwrap()
    }

    fn phi2_single(f: f64, dk: f64) -> QuadraticGenerator {
        QuadraticGenerator::phi_squared(&DMatrix::from_element(1, 1, f), dk).unwrap()
    }

    #[test]
    fn zero_coupling_blocks_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_generator(&mut rng, 3, 0.5, 1.0);
        let b = conjugation_blocks(&g, 0.0).unwrap();
        assert_eq!(b.g1, linalg::identity(3));
        assert_eq!(b.g2, CMatrix::zeros(3, 3));
        assert_eq!(nullifier_k(&b, 1.0).unwrap(), CMatrix::zeros(3, 3));
    }

    #[test]
    fn passive_generator_mixes_no_creation_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g0 = random_generator(&mut rng, 3, 0.5, 0.7);
        let g = QuadraticGenerator::new(CMatrix::zeros(3, 3), g0.b().clone(), 0.7).unwrap();
        let lam = 0.8;
        let b = conjugation_blocks(&g, lam).unwrap();
        assert!(linalg::max_abs(&b.g2) < 1e-14);
        let expect = (g.b() * (2.0 * I * lam * 0.7)).exp();
        assert!(linalg::max_abs(&(&b.g1 - expect)) < 1e-12);
    }

    #[test]
    fn phi2_single_mode_blocks() {
        let (f, dk, lam) = (0.8, 0.6, 0.35);
        let b = conjugation_blocks(&phi2_single(f, dk), lam).unwrap();
        assert!((b.g1[(0, 0)] - C64::new(1.0, 2.0 * lam * dk * f)).norm() < 1e-15);
        assert!((b.g2[(0, 0)] - C64::new(0.0, 2.0 * lam * dk * f)).norm() < 1e-15);
    }

    #[test]
    fn phi2_single_mode_nullifier() {
        let (f, dk, lam) = (0.8, 0.6, 0.35);
        let k = nullifier_k(&conjugation_blocks(&phi2_single(f, dk), lam).unwrap(), dk).unwrap();
        let expect = C64::new(0.0, -2.0 * lam * f) / C64::new(1.0, 2.0 * lam * dk * f);
        assert!((k[(0, 0)] - expect).norm() < 1e-15);

        let k = nullifier_k(&conjugation_blocks(&phi2_single(1.0, 1.0), 0.5).unwrap(), 1.0).unwrap();
        assert!((k[(0, 0)] - C64::new(-0.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn bogoliubov_condition_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..5 {
            let g = random_generator(&mut rng, n, 0.5, 1.3);
            let b = conjugation_blocks(&g, rng.random_range(-1.0..1.0)).unwrap();
            assert!(b.bogoliubov_residual() < 1e-10);
        }
    }

    #[test]
    fn aleph_of_vacuum() {
        let dk = 0.4;
        let a = aleph_inverse(&CMatrix::zeros(2, 2), dk).unwrap();
        assert!(linalg::max_abs(&(&a.gamma - linalg::identity(2) / c(2.0 * dk))) < 1e-15);
        assert!(linalg::max_abs(&(&a.psi - linalg::identity(2) / c(2.0 * dk))) < 1e-15);
        assert_eq!(linalg::max_abs(&a.sigma), 0.0);
        assert_eq!(linalg::max_abs(&a.xi), 0.0);
    }

    #[test]
    fn aleph_phi2_closed_form() {
        let (f, dk, lam) = (0.9, 0.7, 0.45);
        let k = nullifier_k(&conjugation_blocks(&phi2_single(f, dk), lam).unwrap(), dk).unwrap();
        let a = aleph_inverse(&k, dk).unwrap();
        let off = -lam * dk * f / dk;
        assert!((a.gamma[(0, 0)] - c(0.5 / dk)).norm() < 1e-13);
        assert!((a.sigma[(0, 0)] - c(off)).norm() < 1e-13);
        assert!((a.xi[(0, 0)] - c(off)).norm() < 1e-13);
        let psi = (0.5 + 4.0 * lam * lam * dk * dk * f * f) / dk;
        assert!((a.psi[(0, 0)] - c(psi)).norm() < 1e-13);
    }

    #[test]
    fn aleph_inverse_reassembles() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..5 {
            let g = random_generator(&mut rng, n, 0.5, 1.1);
            let k = nullifier_k(&conjugation_blocks(&g, 0.6).unwrap(), 1.1).unwrap();
            let blocks = aleph_inverse(&k, 1.1).unwrap();
            let prod = aleph_matrix(&k, 1.1) * blocks.assemble();
            assert!(linalg::max_abs(&(prod - linalg::identity(2 * n))) < 1e-10);
        }
    }

    #[test]
    fn ill_conditioned_aleph_reported() {
        // |dk K| -> 1 makes aleph singular
        let k = scalar(C64::new(1.0 - 1e-15, 0.0));
        assert!(matches!(aleph_inverse(&k, 1.0), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn phase_rhs_zero_derivative() {
        let k = scalar(C64::new(0.1, 0.2));
        assert_eq!(phase_rhs(&k, &CMatrix::zeros(1, 1), 1.0).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn phase_rhs_phi2_single_mode() {
        let (f, dk, lam) = (0.9, 0.7, 0.45);
        let gen = phi2_single(f, dk);
        let kb = nullifier_scaled(&conjugation_blocks(&gen, lam).unwrap()).unwrap();
        let kp = riccati(&gen, &kb);
        let got = phase_rhs(&(&kb / c(dk)), &(kp / c(dk)), dk).unwrap();
        let expect = -2.0 * lam * dk * dk * f * f / C64::new(1.0, 2.0 * lam * dk * f);
        assert!((got - expect).norm() < 1e-13, "{got} vs {expect}");
    }

    #[test]
    fn riccati_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_generator(&mut rng, 3, 0.5, 0.8);
        let lam = 0.4;
        let kb = |l: f64| nullifier_scaled(&conjugation_blocks(&g, l).unwrap()).unwrap();
        // Richardson-refined central difference
        let h = 1e-3;
        let d1 = (kb(lam + h) - kb(lam - h)) / c(2.0 * h);
        let d2 = (kb(lam + h / 2.0) - kb(lam - h / 2.0)) / c(h);
        let fd = (&d2 * c(4.0) - d1) / c(3.0);
        let an = riccati(&g, &kb(lam));
        assert!(linalg::max_abs(&(fd - an)) < 1e-9);
    }

    #[test]
    fn reduced_weight_matches_doubled_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..5 {
            let dk = 0.6;
            let g = random_generator(&mut rng, n, 0.5, dk);
            let k = nullifier_k(&conjugation_blocks(&g, 0.8).unwrap(), dk).unwrap();
            let full = aleph_inverse(&k, dk).unwrap().weight();
            let reduced = aleph_weight(&k, dk).unwrap();
            assert!(linalg::max_abs(&(&full - reduced)) < 1e-12 * (1.0 + linalg::max_abs(&full)));
        }
    }

    #[test]
    fn nilpotent_route_matches_ode() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 1..4 {
            let dk = 0.9;
            let prefix = random_generator(&mut rng, n, 0.5, dk);
            let k0 = nullifier_scaled(&conjugation_blocks(&prefix, 0.4).unwrap()).unwrap();
            let f = CMatrix::from_fn(n, n, |i, j| c(0.2 / (1.0 + (i + j) as f64)));
            let g = QuadraticGenerator::new(f.clone(), f, dk).unwrap();
            for kb0 in [None, Some(k0.clone())] {
                let flow = Flow::new(&g, kb0).unwrap();
                assert!(flow.nilpotent);
                let d0 = C64::new(0.1, -0.2);
                for lam in [0.3, -0.7, 1.5] {
                    let (ka, da, _) = flow.run_nilpotent(lam, d0).unwrap();
                    let (kb, db, _) = flow.run(lam, d0, &PhaseOptions::default()).unwrap();
                    assert!((da - db).norm() < 1e-9, "{da} {db}");
                    assert!(linalg::max_abs(&(ka - kb)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn both_phase_derivatives_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 1..4 {
            let dk = 0.9;
            let g = random_generator(&mut rng, n, 0.5, dk);
            let kb = nullifier_scaled(&conjugation_blocks(&g, 0.7).unwrap()).unwrap();
            let kp = riccati(&g, &kb);
            let a = phase_rhs(&(&kb / c(dk)), &(&kp / c(dk)), dk).unwrap();
            let b = phase_rhs_moments(&kb, &kp).unwrap();
            assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn integrate_at_zero_is_vacuum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_generator(&mut rng, 2, 0.5, 1.0);
        let s = phase_integrate(&g, 0.0).unwrap();
        assert_eq!(s, GaussianKet::vacuum(2, 1.0));
    }

    #[test]
    fn phi2_fixture_phase() {
        let s = phase_integrate(&phi2_single(1.0, 1.0), 0.5).unwrap();
        let expect = C64::new(-LN_2 / 4.0, 0.5 - PI / 8.0);
        assert!((s.d - expect).norm() < 1e-9, "{}", s.d);
        assert!((s.d - C64::new(-0.17328679513998632, 0.10730091830127586)).norm() < 1e-9);
        let cf = phase_phi2_closed_form(&scalar(c(1.0)), 0.5, 1.0).unwrap();
        assert!((cf - expect).norm() < 1e-15);
    }

    #[test]
    fn squeeze_fixture_phase() {
        let g = QuadraticGenerator::new(scalar(c(1.0)), CMatrix::zeros(1, 1), 1.0).unwrap();
        for lam in [0.1, 0.3, 0.6] {
            let amp = phase_integrate(&g, lam).unwrap().vacuum_amplitude();
            let expect = (2.0 * lam).cosh().powf(-0.5);
            assert!((amp - c(expect)).norm() < 1e-8, "{lam}: {amp}");
        }
    }

    #[test]
    fn closed_form_rank_one() {
        let v = nalgebra::DVector::from_vec(vec![0.3, -0.4, 0.5]);
        let f = linalg::to_complex(&(&v * v.transpose()));
        let s = v.norm_squared();
        let (lam, dk) = (0.7, 0.9);
        let expect = I * lam * dk * s - 0.5 * C64::new(1.0, 2.0 * lam * dk * s).ln();
        assert!((phase_phi2_closed_form(&f, lam, dk).unwrap() - expect).norm() < 1e-14);
        assert_eq!(phase_phi2_closed_form(&CMatrix::zeros(2, 2), lam, dk).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn closed_form_rejects_non_hermitian() {
        let mut f = CMatrix::zeros(2, 2);
        f[(0, 1)] = c(1.0);
        assert!(phase_phi2_closed_form(&f, 0.1, 1.0).is_err());
    }

    #[test]
    fn closed_form_matches_ode_on_random_phi2() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.5..0.5));
            let f = (&m + m.transpose()) * 0.5;
            let lam = rng.random_range(0.0..1.0);
            let g = QuadraticGenerator::phi_squared(&f, 1.0).unwrap();
            let ode = phase_integrate(&g, lam).unwrap().d;
            let cf = phase_phi2_closed_form(&linalg::to_complex(&f), lam, 1.0).unwrap();
            assert!((ode - cf).norm() < 1e-8);
        }
    }

    #[test]
    fn free_evolution_single_mode() {
        let s = GaussianKet { k: scalar(C64::new(0.2, -0.1)), d: C64::new(-0.1, 0.3), dk: 1.0 };
        let (w, t) = (1.7, 0.9);
        let e = free_evolve(&s, &[w], t).unwrap();
        assert!((e.k[(0, 0)] - s.k[(0, 0)] * C64::from_polar(1.0, -2.0 * w * t)).norm() < 1e-15);
        assert_eq!(e.d, s.d);
        assert_eq!(free_evolve(&s, &[w], 0.0).unwrap(), s);
    }

    #[test]
    fn overlap_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_generator(&mut rng, 2, 0.5, 1.0);
        let s = phase_integrate(&g, 0.6).unwrap();
        assert!((overlap(&s, &s).unwrap() - c(1.0)).norm() < 1e-8);
        let vac = GaussianKet::vacuum(2, 1.0);
        assert!((overlap(&s, &vac).unwrap() - s.vacuum_amplitude().conj()).norm() < 1e-15);
    }

    #[test]
    fn product_empty_and_single() {
        let g = phi2_single(0.7, 1.0);
        let opts = PhaseOptions::default();
        let e = vacuum_amplitude_product(&[], &[1.0], &opts).unwrap();
        assert_eq!(e.value, c(1.0));
        let one = [ProductFactor { generator: &g, coupling: 0.4, delay: 0.3 }];
        let p = vacuum_amplitude_product(&one, &[1.0], &opts).unwrap();
        let exact = phase_phi2_closed_form(&scalar(c(0.7)), 0.4, 1.0).unwrap().exp();
        assert!((p.value - exact).norm() < 1e-14);
    }

    #[test]
    fn product_with_cancelling_factors_is_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_generator(&mut rng, 2, 0.5, 1.0);
        let b = random_generator(&mut rng, 2, 0.5, 1.0);
        let seq = [
            ProductFactor { generator: &a, coupling: 0.7, delay: 0.0 },
            ProductFactor { generator: &b, coupling: 0.0, delay: 0.9 },
            ProductFactor { generator: &a, coupling: -0.7, delay: -0.9 },
        ];
        let p = vacuum_amplitude_product(&seq, &[1.0, 2.0], &PhaseOptions::default()).unwrap();
        assert_eq!(p.value, c(1.0));
        assert_eq!(p.factors_evaluated, 0);
    }

    #[test]
    fn simplification_keeps_separated_factors() {
        let g = phi2_single(1.0, 1.0);
        let seq = [
            ProductFactor { generator: &g, coupling: 0.5, delay: 0.0 },
            ProductFactor { generator: &g, coupling: 0.5, delay: 1.0 },
            ProductFactor { generator: &g, coupling: 0.25, delay: 0.0 },
        ];
        let s = simplify_product(&seq);
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].coupling, 0.75);
    }

    #[test]
    fn delayed_product_of_commuting_factors_adds_phases() {
        // Two kicks by the same generator with no delay compose additively.
        let g = phi2_single(0.8, 1.0);
        let seq = [
            ProductFactor { generator: &g, coupling: 0.3, delay: 0.0 },
            ProductFactor { generator: &g, coupling: 0.0, delay: 0.0 },
            ProductFactor { generator: &g, coupling: 0.2, delay: 0.0 },
        ];
        let p = vacuum_amplitude_product(&seq, &[1.0], &PhaseOptions::default()).unwrap();
        let exact = phase_phi2_closed_form(&scalar(c(0.8)), 0.5, 1.0).unwrap().exp();
        assert!((p.value - exact).norm() < 1e-12);
    }

    #[test]
    fn split_product_matches_single_factor() {
        // Splitting exp(-i 0.5 h) into two factors exercises the source term.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_generator(&mut rng, 2, 0.5, 1.0);
        let h = g.clone();
        let seq = [
            ProductFactor { generator: &g, coupling: 0.3, delay: 0.0 },
            ProductFactor { generator: &h, coupling: 0.2, delay: 1e-300 },
        ];
        let p = vacuum_amplitude_product(&seq, &[1.0, 1.5], &PhaseOptions::default()).unwrap();
        assert_eq!(p.factors_evaluated, 2);
        let s = phase_integrate(&g, 0.5).unwrap();
        assert!((p.value - s.vacuum_amplitude()).norm() < 1e-9, "{} {}", p.value, s.vacuum_amplitude());
    }

    #[test]
    fn generator_validation() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(0.0), c(1.0)]);
        assert!(QuadraticGenerator::new(a, CMatrix::zeros(2, 2), 1.0).is_err());
        let b = CMatrix::from_row_slice(2, 2, &[c(1.0), I, I, c(1.0)]);
        assert!(QuadraticGenerator::new(CMatrix::zeros(2, 2), b, 1.0).is_err());
        assert!(QuadraticGenerator::new(CMatrix::zeros(2, 2), CMatrix::zeros(2, 2), 0.0).is_err());
        assert!(QuadraticGenerator::new(CMatrix::zeros(2, 2), CMatrix::zeros(3, 3), 1.0).is_err());
    }
}
