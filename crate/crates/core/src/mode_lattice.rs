//! Discrete momentum lattice of a rectangular Dirichlet cavity.
//!
//! Modes are indexed by integer triples `n_i >= 1` with wavenumbers
//! `k_i = n_i * pi / L_i` and massless dispersion `omega = |k|`. The
//! Riemann measure `dk` converts mode sums into k-space integrals over the
//! positive octant: one cell has volume `prod_i pi / L_i = pi^3 / V`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Largest lattice [`ModeLattice::build`] will materialize. Larger cutoffs
/// are handled by streaming code that works from [`CavitySpec`] directly.
pub const MAX_MATERIALIZED_MODES: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavitySpec {
    lengths: [f64; 3],
    nmax: usize,
}

impl CavitySpec {
    pub fn new(lengths: [f64; 3], nmax: usize) -> Result<Self> {
        for (i, &l) in lengths.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidCavity(format!("length L{} = {l} must be positive", i + 1)));
            }
        }
        if nmax == 0 {
            return Err(Error::InvalidCavity("cutoff nmax must be at least 1".into()));
        }
        Ok(Self { lengths, nmax })
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn mode_count(&self) -> usize {
        self.nmax * self.nmax * self.nmax
    }

    pub fn with_nmax(&self, nmax: usize) -> Result<Self> {
        Self::new(self.lengths, nmax)
    }

    /// `k_n = n pi / L_axis` for `n = 1..=nmax`.
    pub fn axis_wavenumbers(&self, axis: usize) -> Vec<f64> {
        let step = PI / self.lengths[axis];
        (1..=self.nmax).map(|n| n as f64 * step).collect()
    }

    pub fn measure(&self, convention: Convention) -> f64 {
        match convention {
            Convention::Field => self.lengths.iter().map(|l| PI / l).product(),
            Convention::Optics => 1.0,
        }
    }
}

/// Normalization of the ladder operators: Dirac-delta (`[a, a^dag] = 1/dk`)
/// for field modes, Kronecker (`dk = 1`) for optical modes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Convention {
    #[default]
    Field,
    Optics,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub n: [u32; 3],
    pub k: [f64; 3],
    pub omega: f64,
}

impl Mode {
    pub fn new(n: [u32; 3], lengths: [f64; 3]) -> Result<Self> {
        if n.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "mode index {n:?}: Dirichlet modes start at n = 1"
            )));
        }
        let k = [0, 1, 2].map(|i| n[i] as f64 * PI / lengths[i]);
        Ok(Self { n, k, omega: mode_frequency(k) })
    }
}

/// Massless dispersion.
pub fn mode_frequency(k: [f64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

#[derive(Clone, Debug)]
pub struct ModeLattice {
    spec: CavitySpec,
    convention: Convention,
    modes: Vec<Mode>,
    dk: f64,
}

impl ModeLattice {
    /// Modes are ordered lexicographically by `(n1, n2, n3)`.
    pub fn build(spec: CavitySpec, convention: Convention) -> Result<Self> {
        let count = spec.mode_count();
        if count > MAX_MATERIALIZED_MODES {
            return Err(Error::DimensionGuard { dim: count, limit: MAX_MATERIALIZED_MODES });
        }
        let nmax = spec.nmax as u32;
        let mut modes = Vec::with_capacity(count);
        for n1 in 1..=nmax {
            for n2 in 1..=nmax {
                for n3 in 1..=nmax {
                    modes.push(Mode::new([n1, n2, n3], spec.lengths)?);
                }
            }
        }
        Ok(Self { spec, convention, modes, dk: spec.measure(convention) })
    }

    pub fn spec(&self) -> &CavitySpec {
        &self.spec
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn dk(&self) -> f64 {
        self.dk
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }

    pub fn index_of(&self, n: [u32; 3]) -> Option<usize> {
        let nmax = self.spec.nmax;
        if n.iter().any(|&x| x == 0 || x as usize > nmax) {
            return None;
        }
        let [a, b, c] = n.map(|x| x as usize - 1);
        Some((a * nmax + b) * nmax + c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_single_mode() {
        let lat = ModeLattice::build(CavitySpec::new([PI; 3], 1).unwrap(), Convention::Field).unwrap();
        assert_eq!(lat.len(), 1);
        let m = lat.modes()[0];
        for k in m.k {
            assert!((k - 1.0).abs() < 1e-15);
        }
        assert!((m.omega - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unit_cube_measure_is_one() {
        let lat = ModeLattice::build(CavitySpec::new([PI; 3], 2).unwrap(), Convention::Field).unwrap();
        assert_eq!(lat.len(), 8);
        assert!((lat.dk() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn measure_matches_hand_product() {
        let lat = ModeLattice::build(CavitySpec::new([2.0, 4.0, 8.0], 3).unwrap(), Convention::Field).unwrap();
        assert_eq!(lat.len(), 27);
        // (pi/2)(pi/4)(pi/8)
        let hand = (PI / 2.0) * (PI / 4.0) * (PI / 8.0);
        assert!((lat.dk() - hand).abs() < 1e-15);
        assert!((lat.dk() - PI.powi(3) / 64.0).abs() < 1e-15);
    }

    #[test]
    fn optics_measure_is_exactly_one() {
        let lat = ModeLattice::build(CavitySpec::new([2.0, 4.0, 8.0], 2).unwrap(), Convention::Optics).unwrap();
        assert_eq!(lat.dk(), 1.0);
    }

    #[test]
    fn pythagorean_frequency() {
        assert!((mode_frequency([3.0, 4.0, 0.0]) - 5.0).abs() < 1e-15);
        let m = Mode::new([1, 1, 1], [1.0; 3]).unwrap();
        assert!((m.omega - PI * 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_index_rejected() {
        assert!(Mode::new([1, 0, 0], [PI; 3]).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(CavitySpec::new([1.0, 0.0, 1.0], 2).is_err());
        assert!(CavitySpec::new([1.0, -1.0, 1.0], 2).is_err());
        assert!(CavitySpec::new([1.0, 1.0, 1.0], 0).is_err());
        assert!(CavitySpec::new([f64::NAN, 1.0, 1.0], 1).is_err());
    }

    #[test]
    fn ordering_is_lexicographic_and_stable() {
        let spec = CavitySpec::new([1.0, 2.0, 3.0], 3).unwrap();
        let a = ModeLattice::build(spec, Convention::Field).unwrap();
        let b = ModeLattice::build(spec, Convention::Field).unwrap();
        assert_eq!(a.modes(), b.modes());
        for w in a.modes().windows(2) {
            assert!(w[0].n < w[1].n);
        }
        for (i, m) in a.modes().iter().enumerate() {
            assert_eq!(a.index_of(m.n), Some(i));
        }
    }

    #[test]
    fn measure_scales_inversely_with_volume() {
        let small = CavitySpec::new([1.0, 2.0, 3.0], 2).unwrap();
        let big = CavitySpec::new([2.0, 4.0, 6.0], 2).unwrap();
        let ratio = small.measure(Convention::Field) / big.measure(Convention::Field);
        assert!((ratio - 8.0).abs() < 1e-13);
    }

    #[test]
    fn dispersion_holds_for_every_mode() {
        let lat = ModeLattice::build(CavitySpec::new([1.3, 2.1, 0.7], 5).unwrap(), Convention::Field).unwrap();
        for m in lat.modes() {
            let k2: f64 = m.k.iter().map(|k| k * k).sum();
            assert!((m.omega * m.omega - k2).abs() <= 4.0 * f64::EPSILON * k2);
        }
    }
}
