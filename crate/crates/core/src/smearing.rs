//! Detector smearings and the mode-space coupling matrices built from them.
//!
//! A kernel `F(x, y)` enters the quadratic Hamiltonian through
//!
//! ```text
//! F_kk' = 4 / (pi^3 sqrt(w w')) * int F(x, y) prod_i sin(k_i x_i) sin(k'_i y_i)
//! ```
//!
//! and analogous `G` and `P` matrices with weights `-sqrt(w'/w)` and
//! `sqrt(w w')`. Kernels here are sums of separable Gaussian products, so
//! every matrix is available both densely and as a short sum of outer
//! products.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mode_lattice::{CavitySpec, ModeLattice};
use crate::quad::{integrate, QuadOptions};
use crate::C64;

/// Clearance (in units of sigma) below which a smearing is considered to
/// touch the cavity wall.
pub const WALL_CLEARANCE_SIGMAS: f64 = 6.0;

/// The closed-form integral ignores the Gaussian mass outside the cavity.
/// At 9 sigma that mass is ~1e-19, below double precision.
pub const ANALYTIC_CLEARANCE_SIGMAS: f64 = 9.0;

/// Unit-normalized 3D Gaussian profile `f(x)` with an overall strength.
/// The separable kernel `strength * f(x) f(y)` carries the normalization
/// `1 / ((2 pi)^3 sigma^6)` at unit strength.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSmearing {
    pub center: [f64; 3],
    pub sigma: f64,
    pub strength: f64,
}

impl GaussianSmearing {
    pub fn new(center: [f64; 3], sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidSmearing(format!("sigma = {sigma} must be positive")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSmearing(format!("center {center:?} is not finite")));
        }
        Ok(Self { center, sigma, strength: 1.0 })
    }

    pub fn with_strength(mut self, strength: f64) -> Self {
        self.strength = strength;
        self
    }

    /// Distance from the center to the nearest wall.
    pub fn wall_distance(&self, spec: &CavitySpec) -> f64 {
        let l = spec.lengths();
        (0..3).map(|i| self.center[i].min(l[i] - self.center[i])).fold(f64::INFINITY, f64::min)
    }

    /// Errors if the center is outside the cavity. Returns `false` (and
    /// logs a warning) when the support comes within 6 sigma of a wall.
    pub fn check_in(&self, spec: &CavitySpec) -> Result<bool> {
        let l = spec.lengths();
        for (i, (&x, &li)) in self.center.iter().zip(l.iter()).enumerate() {
            if !(x > 0.0 && x < li) {
                return Err(Error::InvalidSmearing(format!(
                    "center coordinate {} = {} lies outside (0, {})",
                    i + 1,
                    x,
                    li
                )));
            }
        }
        let clear = self.wall_distance(spec) >= WALL_CLEARANCE_SIGMAS * self.sigma;
        if !clear {
            warn!(
                "smearing at {:?} with sigma {} is within {} sigma of a cavity wall",
                self.center, self.sigma, WALL_CLEARANCE_SIGMAS
            );
        }
        Ok(clear)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IntegralMethod {
    /// Closed form when the Gaussian is far enough from both walls,
    /// quadrature otherwise.
    #[default]
    Auto,
    Quadrature,
}

fn gaussian_1d(x: f64, a: f64, sigma: f64) -> f64 {
    let z = (x - a) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// `int_0^L sin(k x) g(x; a, sigma) dx` for the unit-normalized Gaussian `g`.
pub fn sine_gaussian_integral(k: f64, a: f64, sigma: f64, l: f64, method: IntegralMethod) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidSmearing(format!("sigma = {sigma} must be positive")));
    }
    if !(a > 0.0 && a < l) {
        return Err(Error::InvalidSmearing(format!("center {a} lies outside (0, {l})")));
    }
    let d = a.min(l - a);
    if method == IntegralMethod::Auto && sigma * ANALYTIC_CLEARANCE_SIGMAS <= d {
        return Ok((k * a).sin() * (-0.5 * k * k * sigma * sigma).exp());
    }
    let mut bps = vec![a];
    for j in [1.0, 2.0, 4.0, 8.0, 12.0] {
        bps.push(a - j * sigma);
        bps.push(a + j * sigma);
    }
    let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-14, max_intervals: 20_000 };
    integrate(|x| (k * x).sin() * gaussian_1d(x, a, sigma), 0.0, l, &bps, opts)
}

/// `I(k_n)` along one axis for `n = 1..=nmax`.
pub fn axis_profile(s: &GaussianSmearing, spec: &CavitySpec, axis: usize, method: IntegralMethod) -> Result<Vec<f64>> {
    let l = spec.lengths()[axis];
    spec.axis_wavenumbers(axis)
        .into_iter()
        .map(|k| sine_gaussian_integral(k, s.center[axis], s.sigma, l, method))
        .collect()
}

/// Which of the three coupling matrices is being built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coupling {
    F,
    G,
    P,
}

impl Coupling {
    /// (left frequency exponent, right frequency exponent, sign)
    fn weights(self) -> (f64, f64, f64) {
        match self {
            Coupling::F => (-0.5, -0.5, 1.0),
            Coupling::G => (-0.5, 0.5, -1.0),
            Coupling::P => (0.5, 0.5, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparableTerm {
    pub weight: f64,
    pub left: GaussianSmearing,
    pub right: GaussianSmearing,
}

/// `K(x, y) = sum_r weight_r * f_r(x) h_r(y)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeparableKernel {
    pub terms: Vec<SeparableTerm>,
}

impl SeparableKernel {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `strength * f(x) f(y)`.
    pub fn product(f: GaussianSmearing) -> Self {
        Self { terms: vec![SeparableTerm { weight: f.strength, left: f, right: f }] }
    }

    pub fn push(&mut self, weight: f64, left: GaussianSmearing, right: GaussianSmearing) {
        self.terms.push(SeparableTerm { weight, left, right });
    }
}

/// `M = sum_r c_r l_r r_r^T`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankFactors {
    pub weights: Vec<f64>,
    pub left: Vec<DVector<f64>>,
    pub right: Vec<DVector<f64>>,
}

impl RankFactors {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn reconstruct(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for ((c, l), r) in self.weights.iter().zip(&self.left).zip(&self.right) {
            m += *c * l * r.transpose();
        }
        m
    }
}

#[derive(Clone, Debug)]
pub struct SmearingMatrix {
    pub dense: DMatrix<f64>,
    pub factors: Option<RankFactors>,
}

fn lattice_integrals(s: &GaussianSmearing, lattice: &ModeLattice, method: IntegralMethod) -> Result<Vec<f64>> {
    let spec = lattice.spec();
    let prof: Vec<Vec<f64>> = (0..3).map(|ax| axis_profile(s, spec, ax, method)).collect::<Result<_>>()?;
    Ok(lattice
        .modes()
        .iter()
        .map(|m| (0..3).map(|ax| prof[ax][m.n[ax] as usize - 1]).product())
        .collect())
}

/// `(2 / pi^{3/2}) * w^{-1/2} * prod_i I(k_i)` for every lattice mode: the
/// vector with `F = strength * v v^T` for a separable Gaussian product.
/// The smearing's strength is not included.
pub fn smearing_vector(s: &GaussianSmearing, lattice: &ModeLattice, method: IntegralMethod) -> Result<DVector<f64>> {
    let ints = lattice_integrals(s, lattice, method)?;
    let pre = 2.0 / PI.powf(1.5);
    Ok(DVector::from_iterator(
        lattice.len(),
        lattice.modes().iter().zip(ints).map(|(m, i)| pre * i / m.omega.sqrt()),
    ))
}

fn coupling_matrix(
    kernel: &SeparableKernel,
    lattice: &ModeLattice,
    coupling: Coupling,
    method: IntegralMethod,
) -> Result<SmearingMatrix> {
    let n = lattice.len();
    let (el, er, sign) = coupling.weights();
    let omegas = lattice.frequencies();
    let half = 2.0 / PI.powf(1.5);
    let pre = 4.0 / PI.powi(3);
    let mut factors = RankFactors::default();
    let mut dense = DMatrix::zeros(n, n);
    for term in &kernel.terms {
        if term.left.check_in(lattice.spec()).is_ok_and(|c| !c) || term.right.check_in(lattice.spec()).is_ok_and(|c| !c) {
            warn!("kernel support touches the cavity walls; matrix elements include boundary effects");
        }
        let il = lattice_integrals(&term.left, lattice, method)?;
        let ir = lattice_integrals(&term.right, lattice, method)?;
        for j in 0..n {
            for i in 0..n {
                let w = omegas[i].powf(el) * omegas[j].powf(er);
                dense[(i, j)] += sign * term.weight * pre * w * il[i] * ir[j];
            }
        }
        factors.weights.push(sign * term.weight);
        factors.left.push(DVector::from_iterator(n, (0..n).map(|i| half * omegas[i].powf(el) * il[i])));
        factors.right.push(DVector::from_iterator(n, (0..n).map(|j| half * omegas[j].powf(er) * ir[j])));
    }
    Ok(SmearingMatrix { dense, factors: Some(factors) })
}

pub fn f_matrix(kernel: &SeparableKernel, lattice: &ModeLattice, method: IntegralMethod) -> Result<SmearingMatrix> {
    coupling_matrix(kernel, lattice, Coupling::F, method)
}

pub fn g_matrix(kernel: &SeparableKernel, lattice: &ModeLattice, method: IntegralMethod) -> Result<SmearingMatrix> {
    coupling_matrix(kernel, lattice, Coupling::G, method)
}

pub fn p_matrix(kernel: &SeparableKernel, lattice: &ModeLattice, method: IntegralMethod) -> Result<SmearingMatrix> {
    coupling_matrix(kernel, lattice, Coupling::P, method)
}

/// `A` (complex symmetric) and `B` (Hermitian) of the quadratic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrices {
    pub a: DMatrix<C64>,
    pub b: DMatrix<C64>,
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax() / (1.0 + m.amax())
}

/// `A = F + iG + iG^T - P`, `B = F + iG - iG^T + P`.
///
/// `F` and `P` must be symmetric up to rounding (`1e-12` relative); they are
/// symmetrized before assembly so `A = A^T` and `B = B^H` hold exactly.
pub fn build_generator(f: &DMatrix<f64>, g: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<GeneratorMatrices> {
    let n = f.nrows();
    for (name, m) in [("F", f), ("G", g), ("P", p)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "{name} is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("smearing matrix"));
        }
    }
    for (kind, m) in [("symmetric (F)", f), ("symmetric (P)", p)] {
        let dev = asymmetry(m);
        if dev > 1e-12 {
            return Err(Error::Symmetry { kind, deviation: dev });
        }
    }
    let fs = (f + f.transpose()) * 0.5;
    let ps = (p + p.transpose()) * 0.5;
    let gs = g + g.transpose();
    let ga = g - g.transpose();
    let a = DMatrix::from_fn(n, n, |i, j| C64::new(fs[(i, j)] - ps[(i, j)], gs[(i, j)]));
    let b = DMatrix::from_fn(n, n, |i, j| C64::new(fs[(i, j)] + ps[(i, j)], ga[(i, j)]));
    Ok(GeneratorMatrices { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode_lattice::Convention;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(nmax: usize) -> ModeLattice {
        ModeLattice::build(CavitySpec::new([PI; 3], nmax).unwrap(), Convention::Field).unwrap()
    }

    #[test]
    fn node_of_second_harmonic_vanishes() {
        let l = 2.0;
        let v = sine_gaussian_integral(2.0 * PI / l, l / 2.0, 0.01, l, IntegralMethod::Auto).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn narrow_limit_is_point_evaluation() {
        let l = 2.0;
        let v = sine_gaussian_integral(PI / l, l / 2.0, 1e-6, l, IntegralMethod::Auto).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let exact = sine_gaussian_integral(3.0, 0.5, 0.05, PI, IntegralMethod::Auto).unwrap();
        let quad = sine_gaussian_integral(3.0, 0.5, 0.05, PI, IntegralMethod::Quadrature).unwrap();
        assert!((exact - quad).abs() <= 1e-10 * exact.abs());
    }

    #[test]
    fn closed_form_matches_quadrature_across_widths() {
        let l = 3.0;
        let a = 1.1;
        for sigma in [0.01, 0.05, 0.1] {
            for n in 1..40 {
                let k = n as f64 * PI / l;
                let e = sine_gaussian_integral(k, a, sigma, l, IntegralMethod::Auto).unwrap();
                let q = sine_gaussian_integral(k, a, sigma, l, IntegralMethod::Quadrature).unwrap();
                assert!((e - q).abs() <= 1e-10 * e.abs() + 1e-14, "sigma {sigma} n {n}: {e} vs {q}");
            }
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(sine_gaussian_integral(1.0, 0.0, 0.1, 1.0, IntegralMethod::Auto).is_err());
        assert!(sine_gaussian_integral(1.0, 1.5, 0.1, 1.0, IntegralMethod::Auto).is_err());
        assert!(sine_gaussian_integral(1.0, 0.5, 0.0, 1.0, IntegralMethod::Auto).is_err());
        assert!(GaussianSmearing::new([1.0; 3], -1.0).is_err());
        let spec = CavitySpec::new([1.0; 3], 1).unwrap();
        assert!(GaussianSmearing::new([1.5, 0.5, 0.5], 0.01).unwrap().check_in(&spec).is_err());
        assert!(!GaussianSmearing::new([0.05, 0.5, 0.5], 0.01).unwrap().check_in(&spec).unwrap());
        assert!(GaussianSmearing::new([0.5; 3], 0.01).unwrap().check_in(&spec).unwrap());
    }

    #[test]
    fn separable_kernel_gives_rank_one() {
        let lat = cube(3);
        let s = GaussianSmearing::new([PI / 2.0, 1.4, 1.7], 0.2).unwrap();
        let m = f_matrix(&SeparableKernel::product(s), &lat, IntegralMethod::Auto).unwrap();
        let f = m.factors.unwrap();
        assert_eq!(f.rank(), 1);
        let sv = m.dense.clone().singular_values();
        assert!(sv[1] <= 1e-12 * sv[0]);
    }

    #[test]
    fn zero_kernel_gives_zero_matrices() {
        let lat = cube(2);
        for m in [
            f_matrix(&SeparableKernel::zero(), &lat, IntegralMethod::Auto).unwrap(),
            g_matrix(&SeparableKernel::zero(), &lat, IntegralMethod::Auto).unwrap(),
        ] {
            assert_eq!(m.dense, DMatrix::zeros(8, 8));
        }
    }

    #[test]
    fn dense_matches_rank_path_near_center() {
        let lat = cube(2);
        let s = GaussianSmearing::new([PI / 2.0; 3], 0.3).unwrap();
        let dense = f_matrix(&SeparableKernel::product(s), &lat, IntegralMethod::Quadrature).unwrap().dense;
        let v = smearing_vector(&s, &lat, IntegralMethod::Auto).unwrap();
        let diff = (&dense - &v * v.transpose()).amax();
        assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn factors_reconstruct_dense() {
        for nmax in 1..=4 {
            let lat = cube(nmax);
            let s = GaussianSmearing::new([1.3, 1.6, 1.9], 0.15).unwrap();
            let h = GaussianSmearing::new([1.5, 1.4, 1.8], 0.2).unwrap();
            let mut k = SeparableKernel::product(s);
            k.push(0.7, s, h);
            k.push(0.7, h, s);
            for c in [Coupling::F, Coupling::G, Coupling::P] {
                let m = coupling_matrix(&k, &lat, c, IntegralMethod::Auto).unwrap();
                let r = m.factors.unwrap().reconstruct(lat.len());
                assert!((&r - &m.dense).norm() <= 1e-10 * m.dense.norm());
            }
        }
    }

    #[test]
    fn symmetric_kernel_gives_symmetric_p() {
        let lat = cube(3);
        let s = GaussianSmearing::new([1.2, 1.6, 1.9], 0.2).unwrap();
        let p = p_matrix(&SeparableKernel::product(s), &lat, IntegralMethod::Auto).unwrap().dense;
        assert!(asymmetry(&p) < 1e-15);
    }

    #[test]
    fn p_over_f_is_omega_squared_on_one_mode() {
        let lat = cube(1);
        let s = GaussianSmearing::new([1.3, 1.5, 1.7], 0.2).unwrap();
        let k = SeparableKernel::product(s);
        let f = f_matrix(&k, &lat, IntegralMethod::Auto).unwrap().dense[(0, 0)];
        let p = p_matrix(&k, &lat, IntegralMethod::Auto).unwrap().dense[(0, 0)];
        let w = lat.modes()[0].omega;
        assert!((p / f - w * w).abs() < 1e-13);
    }

    #[test]
    fn phi_squared_generator() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let z = DMatrix::zeros(2, 2);
        let g = build_generator(&f, &z, &z).unwrap();
        assert_eq!(g.a, f.map(|x| C64::new(x, 0.0)));
        assert_eq!(g.b, g.a);
    }

    #[test]
    fn pure_g_generator() {
        let gm = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, -0.2, 0.1]);
        let z = DMatrix::zeros(2, 2);
        let g = build_generator(&z, &gm, &z).unwrap();
        assert_eq!(g.a, gm.map(|x| C64::new(0.0, 2.0 * x)));
        assert_eq!(g.b, DMatrix::zeros(2, 2));
    }

    #[test]
    fn assembled_symmetry_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..6 {
            let mut sym = || {
                let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                (&m + m.transpose()) * 0.5
            };
            let (f, g, p) = (sym(), DMatrix::from_fn(n, n, |_, _| 0.3), sym());
            let gen = build_generator(&f, &g, &p).unwrap();
            assert_eq!(gen.a, gen.a.transpose());
            assert_eq!(gen.b, gen.b.adjoint());
        }
    }

    #[test]
    fn shape_and_symmetry_errors() {
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::zeros(3, 3);
        assert!(matches!(build_generator(&a, &b, &a), Err(Error::ShapeMismatch(_))));
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(build_generator(&f, &a, &a), Err(Error::Symmetry { .. })));
    }
}
