//! The quadratic-detector Fermi problem.
//!
//! Alice's qubit controls a `:phi^2:` kick of the field at `t = 0`; Bob's
//! qubit controls one at `t = T`, separated by `r` along a cavity axis.
//! With both couplings delta-switched, Bob's reduced state in the x basis is
//!
//! ```text
//! p_{+-} = b1 conj(b2) ( |a1|^2 <0|S_A^dag(l_A;T) S_B(2 l_B) S_A(l_A;T)|0>
//!                      + |a2|^2 <0|S_A^dag(-l_A;T) S_B(2 l_B) S_A(-l_A;T)|0> )
//! ```
//!
//! with `p_{++} = |b1|^2`, `p_{--} = |b2|^2`. The signal is the change of
//! Bob's excitation probability caused by Alice's coupling.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DVector, Matrix2, Matrix3};

use crate::engine::{PhaseOptions, ProductAmplitude, MAX_DENSE_MODES};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::lowrank::{self, COMPRESSION_TOLERANCE};
use crate::mode_lattice::{CavitySpec, Convention, ModeLattice};
use crate::smearing::{self, axis_profile, GaussianSmearing, IntegralMethod};
use crate::C64;

/// Below this magnitude a signal is reported as numerical noise.
pub const NOISE_FLOOR: f64 = 1e-16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorSpec {
    pub smearing: GaussianSmearing,
    pub coupling: f64,
}

impl DetectorSpec {
    /// Coupling including the smearing strength.
    fn effective_coupling(&self) -> f64 {
        self.coupling * self.smearing.strength
    }
}

/// Qubit amplitudes in the Pauli x basis, `c1 |+> + c2 |->`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitAmplitudes {
    pub c1: C64,
    pub c2: C64,
}

impl QubitAmplitudes {
    pub fn new(c1: C64, c2: C64) -> Result<Self> {
        let n = c1.norm_sqr() + c2.norm_sqr();
        if n.is_nan() || (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("qubit amplitudes have norm^2 {n}, expected 1")));
        }
        Ok(Self { c1, c2 })
    }

    /// `|+z> = (|+> + |->) / sqrt 2`.
    pub fn plus_z() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { c1: C64::new(h, 0.0), c2: C64::new(h, 0.0) }
    }

    /// `|-z> = (|+> - |->) / sqrt 2`.
    pub fn minus_z() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { c1: C64::new(h, 0.0), c2: C64::new(-h, 0.0) }
    }

    pub fn plus_x() -> Self {
        Self { c1: C64::new(1.0, 0.0), c2: C64::new(0.0, 0.0) }
    }

    pub fn minus_x() -> Self {
        Self { c1: C64::new(0.0, 0.0), c2: C64::new(1.0, 0.0) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EngineSelection {
    Dense,
    LowRank,
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineUsed {
    Dense,
    LowRank,
}

impl EngineUsed {
    pub fn name(self) -> &'static str {
        match self {
            EngineUsed::Dense => "dense",
            EngineUsed::LowRank => "lowrank",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FermiConfig {
    pub cavity: CavitySpec,
    pub alice: DetectorSpec,
    /// Bob's center is replaced by `alice.center + r * e_axis` at each point.
    pub bob: DetectorSpec,
    pub delay: f64,
    pub grid: Vec<f64>,
    pub axis: usize,
    pub alice_state: QubitAmplitudes,
    pub bob_state: QubitAmplitudes,
    pub engine: EngineSelection,
    pub integrals: IntegralMethod,
    pub phase: PhaseOptions,
    pub exec: ExecMode,
}

impl FermiConfig {
    /// Detectors of width 0.01 in a cube of side 3, Alice half a unit left of
    /// the center, `T = 1`, unit couplings, Alice `|+z>`, Bob `|-z>`, and a
    /// grid over `[0.5, 1.5]` with step 0.025.
    pub fn reference(nmax: usize) -> Result<Self> {
        let l = 3.0;
        let cavity = CavitySpec::new([l; 3], nmax)?;
        let alice = GaussianSmearing::new([l / 2.0 - 0.5, l / 2.0, l / 2.0], 0.01)?;
        Ok(Self {
            cavity,
            alice: DetectorSpec { smearing: alice, coupling: 1.0 },
            bob: DetectorSpec { smearing: alice, coupling: 1.0 },
            delay: 1.0,
            grid: uniform_grid(0.5, 1.5, 0.025),
            axis: 0,
            alice_state: QubitAmplitudes::plus_z(),
            bob_state: QubitAmplitudes::minus_z(),
            engine: EngineSelection::Auto,
            integrals: IntegralMethod::Auto,
            phase: PhaseOptions::default(),
            exec: ExecMode::Parallel,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay.is_finite() && self.delay > 0.0) {
            return Err(Error::InvalidArgument(format!("delay T = {} must be positive", self.delay)));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("separation grid is empty".into()));
        }
        if self.grid.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("separation grid has non-finite entries".into()));
        }
        if self.axis > 2 {
            return Err(Error::InvalidArgument(format!("axis {} out of range", self.axis)));
        }
        if !self.alice.coupling.is_finite() || !self.bob.coupling.is_finite() {
            return Err(Error::InvalidArgument("couplings must be finite".into()));
        }
        self.alice.smearing.check_in(&self.cavity)?;
        Ok(())
    }

    pub fn bob_at(&self, r: f64) -> GaussianSmearing {
        let mut s = self.bob.smearing;
        s.center = self.alice.smearing.center;
        s.center[self.axis] += r;
        s
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive with spacing `step`.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointFlags {
    pub noise_floor: bool,
    pub degenerate: bool,
    pub near_wall: bool,
    pub fallback: bool,
    pub error: Option<String>,
}

impl PointFlags {
    /// Compact `;`-separated form for tables.
    pub fn label(&self) -> String {
        let mut v = Vec::new();
        if self.noise_floor {
            v.push("noise_floor".to_string());
        }
        if self.degenerate {
            v.push("degenerate".to_string());
        }
        if self.near_wall {
            v.push("near_wall".to_string());
        }
        if self.fallback {
            v.push("dense_fallback".to_string());
        }
        if let Some(e) = &self.error {
            v.push(format!("error: {}", e.replace([',', '\n'], " ")));
        }
        v.join(";")
    }
}

/// Composite vacuum amplitudes behind one sweep point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointAmplitudes {
    /// Alice `+lambda_A`, Bob `+2 lambda_B`.
    pub plus: C64,
    /// Alice `-lambda_A`, Bob `+2 lambda_B`.
    pub minus: C64,
    /// Alice off, Bob `+2 lambda_B`.
    pub baseline: C64,
    /// The same three with Bob at `-2 lambda_B`.
    pub plus_rev: C64,
    pub minus_rev: C64,
    pub baseline_rev: C64,
    pub degenerate: bool,
    pub compression_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FermiResult {
    pub r: f64,
    pub p_plusminus: C64,
    pub p_minusplus: C64,
    pub p_plusplus: f64,
    pub p_minusminus: f64,
    pub p_b: f64,
    pub p_b_baseline: f64,
    pub delta_p: f64,
    pub engine: EngineUsed,
    pub amplitudes: Option<PointAmplitudes>,
    pub flags: PointFlags,
}

impl FermiResult {
    /// Bob's reduced state in the x basis.
    pub fn density_matrix(&self) -> Matrix2<C64> {
        Matrix2::new(C64::new(self.p_plusplus, 0.0), self.p_plusminus, self.p_minusplus, C64::new(self.p_minusminus, 0.0))
    }

    pub fn succeeded(&self) -> bool {
        self.flags.error.is_none()
    }
}

/// `P(+z) = (p_{++} + p_{--}) / 2 + Re p_{+-}`.
pub fn excitation_probability(rho: &Matrix2<C64>) -> Result<f64> {
    let dev = (rho - rho.adjoint()).camax();
    if dev > 1e-10 {
        return Err(Error::Symmetry { kind: "Hermitian (density matrix)", deviation: dev });
    }
    Ok(0.5 * (rho[(0, 0)].re + rho[(1, 1)].re) + rho[(0, 1)].re)
}

/// Hermiticity, trace and positivity defects of a 2x2 density matrix.
pub fn density_defects(rho: &Matrix2<C64>) -> (f64, f64, f64) {
    let herm = (rho - rho.adjoint()).camax();
    let trace = (rho.trace() - C64::new(1.0, 0.0)).norm();
    let h = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let (a, d) = (h[(0, 0)].re, h[(1, 1)].re);
    let b = h[(0, 1)].norm();
    let min_eig = 0.5 * (a + d) - (0.25 * (a - d).powi(2) + b * b).sqrt();
    (herm, trace, (-min_eig).max(0.0))
}

/// Per-axis sums that turn the Gram matrix of the Fermi sequence into
/// `O(nmax)` work per separation when the separation runs along one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GramTables {
    pub bb: Vec<f64>,
    pub ab_cos: Vec<f64>,
    pub ab_sin: Vec<f64>,
    pub aa: Vec<f64>,
    pub aa_cos2: Vec<f64>,
    pub aa_sin2: Vec<f64>,
}

/// For every axis index `n`, sums over the transverse modes of
/// `(4 / pi^3) dk f(w) / w` times the transverse profile products.
pub fn gram_tables(
    spec: &CavitySpec,
    axis: usize,
    alice: &GaussianSmearing,
    bob: &GaussianSmearing,
    t: f64,
    method: IntegralMethod,
    mode: ExecMode,
) -> Result<GramTables> {
    let tr: Vec<usize> = (0..3).filter(|&i| i != axis).collect();
    let k_axis = spec.axis_wavenumbers(axis);
    let k1 = spec.axis_wavenumbers(tr[0]);
    let k2 = spec.axis_wavenumbers(tr[1]);
    let ga1 = axis_profile(alice, spec, tr[0], method)?;
    let ga2 = axis_profile(alice, spec, tr[1], method)?;
    let gb1 = axis_profile(bob, spec, tr[0], method)?;
    let gb2 = axis_profile(bob, spec, tr[1], method)?;
    let pre = 4.0 / PI.powi(3) * spec.measure(Convention::Field);

    let rows = exec::map_indexed(mode, k_axis.len(), |n| {
        let ka2 = k_axis[n] * k_axis[n];
        let mut s = [0.0f64; 6];
        for i in 0..k1.len() {
            let base = ka2 + k1[i] * k1[i];
            let (a1, b1) = (ga1[i], gb1[i]);
            for j in 0..k2.len() {
                let w = (base + k2[j] * k2[j]).sqrt();
                let x = pre / w;
                let (a2, b2) = (ga2[j], gb2[j]);
                let (sn, cs) = (w * t).sin_cos();
                let bb = b1 * b1 * b2 * b2;
                let ab = a1 * b1 * a2 * b2;
                let aa = a1 * a1 * a2 * a2;
                s[0] += x * bb;
                s[1] += x * ab * cs;
                s[2] += x * ab * sn;
                s[3] += x * aa;
                s[4] += x * aa * (cs * cs - sn * sn);
                s[5] += x * aa * (2.0 * sn * cs);
            }
        }
        s
    });
    Ok(GramTables {
        bb: rows.iter().map(|s| s[0]).collect(),
        ab_cos: rows.iter().map(|s| s[1]).collect(),
        ab_sin: rows.iter().map(|s| s[2]).collect(),
        aa: rows.iter().map(|s| s[3]).collect(),
        aa_cos2: rows.iter().map(|s| s[4]).collect(),
        aa_sin2: rows.iter().map(|s| s[5]).collect(),
    })
}

impl GramTables {
    /// Gram matrix of `(v_B, v_A cos wT, v_A sin wT)` given the axis profiles.
    pub fn gram(&self, ia: &[f64], ib: &[f64]) -> Matrix3<f64> {
        let mut g = [0.0; 6];
        for n in 0..self.bb.len() {
            let (a, b) = (ia[n], ib[n]);
            g[0] += b * b * self.bb[n];
            g[1] += a * b * self.ab_cos[n];
            g[2] += a * b * self.ab_sin[n];
            g[3] += a * a * 0.5 * (self.aa[n] + self.aa_cos2[n]);
            g[4] += a * a * 0.5 * self.aa_sin2[n];
            g[5] += a * a * 0.5 * (self.aa[n] - self.aa_cos2[n]);
        }
        Matrix3::new(g[0], g[1], g[2], g[1], g[3], g[4], g[2], g[4], g[5])
    }
}

enum Backend {
    Tables { tables: GramTables, alice_axis: Vec<f64> },
    Dense { lattice: ModeLattice, v_a: DVector<f64>, omegas: Vec<f64> },
}

/// Prepared state for evaluating sweep points of one configuration.
pub struct FermiEvaluator<'c> {
    config: &'c FermiConfig,
    backend: Backend,
}

impl<'c> FermiEvaluator<'c> {
    pub fn new(config: &'c FermiConfig) -> Result<Self> {
        config.validate()?;
        let backend = match config.engine {
            EngineSelection::Dense => Self::dense_backend(config)?,
            EngineSelection::LowRank | EngineSelection::Auto => Self::table_backend(config)?,
        };
        Ok(Self { config, backend })
    }

    fn dense_backend(config: &FermiConfig) -> Result<Backend> {
        let n = config.cavity.mode_count();
        if n > MAX_DENSE_MODES {
            return Err(Error::DimensionGuard { dim: n, limit: MAX_DENSE_MODES });
        }
        let lattice = ModeLattice::build(config.cavity, Convention::Field)?;
        let v_a = smearing::smearing_vector(&config.alice.smearing, &lattice, config.integrals)?;
        let omegas = lattice.frequencies();
        Ok(Backend::Dense { lattice, v_a, omegas })
    }

    fn table_backend(config: &FermiConfig) -> Result<Backend> {
        let probe = config.bob_at(0.0);
        let tables = gram_tables(
            &config.cavity,
            config.axis,
            &config.alice.smearing,
            &probe,
            config.delay,
            config.integrals,
            config.exec,
        )?;
        let alice_axis = axis_profile(&config.alice.smearing, &config.cavity, config.axis, config.integrals)?;
        Ok(Backend::Tables { tables, alice_axis })
    }

    pub fn engine(&self) -> EngineUsed {
        match self.backend {
            Backend::Tables { .. } => EngineUsed::LowRank,
            Backend::Dense { .. } => EngineUsed::Dense,
        }
    }

    /// The six composite amplitudes at separation `r`.
    pub fn amplitudes(&self, r: f64) -> Result<(PointAmplitudes, bool)> {
        let cfg = self.config;
        let bob = cfg.bob_at(r);
        bob.check_in(&cfg.cavity)?;
        let la = cfg.alice.effective_coupling();
        let mu = 2.0 * cfg.bob.effective_coupling();
        let opts = &cfg.phase;
        match &self.backend {
            Backend::Tables { tables, alice_axis } => {
                let ib = axis_profile(&bob, &cfg.cavity, cfg.axis, cfg.integrals)?;
                let gram = tables.gram(alice_axis, &ib);
                let comp = lowrank::SubspaceCompression::new(gram)?;
                if comp.residual > COMPRESSION_TOLERANCE {
                    if cfg.cavity.mode_count() <= MAX_DENSE_MODES {
                        warn!("r = {r}: compression residual {:.3e}; using the dense engine", comp.residual);
                        let dense = FermiEvaluator { config: cfg, backend: Self::dense_backend(cfg)? };
                        return dense.amplitudes(r).map(|(a, _)| (a, true));
                    }
                    return Err(Error::Degenerate(format!("compression residual {:.3e} with no dense fallback", comp.residual)));
                }
                let f = |a: f64, b: f64| lowrank::amplitude_from_gram(gram, a, b, opts).map(|x| x.0);
                Ok((collect(f(la, mu)?, f(-la, mu)?, f(0.0, mu)?, f(la, -mu)?, f(-la, -mu)?, f(0.0, -mu)?, comp.residual), false))
            }
            Backend::Dense { lattice, v_a, omegas } => {
                let v_b = smearing::smearing_vector(&bob, lattice, cfg.integrals)?;
                let dk = lattice.dk();
                let f = |a: f64, b: f64| lowrank::dense_product_amplitude(v_a, a, cfg.delay, &v_b, b, omegas, dk, opts);
                Ok((collect(f(la, mu)?, f(-la, mu)?, f(0.0, mu)?, f(la, -mu)?, f(-la, -mu)?, f(0.0, -mu)?, 0.0), false))
            }
        }
    }

    pub fn evaluate(&self, r: f64) -> FermiResult {
        let cfg = self.config;
        let (b1, b2) = (cfg.bob_state.c1, cfg.bob_state.c2);
        let (w1, w2) = (cfg.alice_state.c1.norm_sqr(), cfg.alice_state.c2.norm_sqr());
        let p_pp = b1.norm_sqr();
        let p_mm = b2.norm_sqr();
        let mut flags = PointFlags::default();
        let bob = cfg.bob_at(r);
        flags.near_wall = !bob.check_in(&cfg.cavity).unwrap_or(false);
        let empty = |flags: PointFlags| FermiResult {
            r,
            p_plusminus: C64::new(f64::NAN, f64::NAN),
            p_minusplus: C64::new(f64::NAN, f64::NAN),
            p_plusplus: p_pp,
            p_minusminus: p_mm,
            p_b: f64::NAN,
            p_b_baseline: f64::NAN,
            delta_p: f64::NAN,
            engine: self.engine(),
            amplitudes: None,
            flags,
        };
        let (amps, fallback) = match self.amplitudes(r) {
            Ok(a) => a,
            Err(e) => {
                flags.error = Some(e.to_string());
                return empty(flags);
            }
        };
        flags.fallback = fallback;
        flags.degenerate = amps.degenerate;
        let p_pm = b1 * b2.conj() * (w1 * amps.plus + w2 * amps.minus);
        let p_mp = b1.conj() * b2 * (w1 * amps.plus_rev + w2 * amps.minus_rev);
        let p0_pm = b1 * b2.conj() * amps.baseline;
        let p0_mp = b1.conj() * b2 * amps.baseline_rev;
        let rho = Matrix2::new(C64::new(p_pp, 0.0), p_pm, p_mp, C64::new(p_mm, 0.0));
        let rho0 = Matrix2::new(C64::new(p_pp, 0.0), p0_pm, p0_mp, C64::new(p_mm, 0.0));
        let (p_b, p_b0) = match (excitation_probability(&rho), excitation_probability(&rho0)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                flags.error = Some(e.to_string());
                return empty(flags);
            }
        };
        let delta_p = p_b - p_b0;
        flags.noise_floor = delta_p.abs() < NOISE_FLOOR;
        FermiResult {
            r,
            p_plusminus: p_pm,
            p_minusplus: p_mp,
            p_plusplus: p_pp,
            p_minusminus: p_mm,
            p_b,
            p_b_baseline: p_b0,
            delta_p,
            engine: if fallback { EngineUsed::Dense } else { self.engine() },
            amplitudes: Some(amps),
            flags,
        }
    }
}

fn collect(
    plus: ProductAmplitude,
    minus: ProductAmplitude,
    baseline: ProductAmplitude,
    plus_rev: ProductAmplitude,
    minus_rev: ProductAmplitude,
    baseline_rev: ProductAmplitude,
    residual: f64,
) -> PointAmplitudes {
    let all = [plus, minus, baseline, plus_rev, minus_rev, baseline_rev];
    PointAmplitudes {
        plus: plus.value,
        minus: minus.value,
        baseline: baseline.value,
        plus_rev: plus_rev.value,
        minus_rev: minus_rev.value,
        baseline_rev: baseline_rev.value,
        degenerate: all.iter().any(|a| a.degenerate),
        compression_residual: residual,
    }
}

/// Bob's reduced density matrix (x basis) at separation `r`.
pub fn reduced_density_b(config: &FermiConfig, r: f64) -> Result<Matrix2<C64>> {
    let ev = FermiEvaluator::new(config)?;
    let row = ev.evaluate(r);
    match row.flags.error {
        Some(e) => Err(Error::Integration(e)),
        None => Ok(row.density_matrix()),
    }
}

/// One result per grid point, in grid order. Configuration problems are
/// errors; failures at individual points are recorded in their rows.
pub fn sweep(config: &FermiConfig) -> Result<Vec<FermiResult>> {
    let ev = FermiEvaluator::new(config)?;
    Ok(exec::map_slice(config.exec, &config.grid, |&r| ev.evaluate(r)))
}

/// Index of the largest finite signal.
pub fn argmax(rows: &[FermiResult]) -> Option<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, x)| x.delta_p.is_finite())
        .max_by(|a, b| a.1.delta_p.total_cmp(&b.1.delta_p))
        .map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub nmax: usize,
    pub lengths: [f64; 3],
    pub delta_p: f64,
    /// Change from the previous rung.
    pub difference: Option<f64>,
    pub relative_change: Option<f64>,
    pub converged: bool,
}

/// Signal at separation `r` for each cutoff of `ladder`, which must be
/// strictly increasing. `converged` marks rungs whose relative change from the previous rung is
/// below `threshold`.
pub fn converge_nmax(config: &FermiConfig, r: f64, ladder: &[usize], threshold: f64) -> Result<Vec<ConvergenceRow>> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("empty cutoff ladder".into()));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!("cutoff ladder {ladder:?} is not increasing")));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &n in ladder {
        let mut cfg = config.clone();
        cfg.cavity = config.cavity.with_nmax(n)?;
        cfg.grid = vec![r];
        let res = FermiEvaluator::new(&cfg)?.evaluate(r);
        if let Some(e) = res.flags.error {
            return Err(Error::Integration(format!("nmax {n}: {e}")));
        }
        push_rung(&mut rows, n, cfg.cavity.lengths(), res.delta_p, threshold);
    }
    Ok(rows)
}

fn push_rung(rows: &mut Vec<ConvergenceRow>, nmax: usize, lengths: [f64; 3], dp: f64, threshold: f64) {
    let (difference, relative_change) = match rows.last() {
        Some(prev) => {
            let d = dp - prev.delta_p;
            (Some(d), Some(d.abs() / dp.abs().max(f64::MIN_POSITIVE)))
        }
        None => (None, None),
    };
    let converged = relative_change.is_some_and(|c| c < threshold);
    rows.push(ConvergenceRow { nmax, lengths, delta_p: dp, difference, relative_change, converged });
}

/// First rung flagged as converged.
pub fn first_converged(rows: &[ConvergenceRow]) -> Option<&ConvergenceRow> {
    rows.iter().find(|r| r.converged)
}

/// Cavity-size ladder at a fixed physical cutoff: each side is scaled by
/// `scale`, the cutoff grows in proportion, and both detectors keep their
/// offsets from the cavity center.
pub fn converge_lengths(config: &FermiConfig, r: f64, scales: &[f64], threshold: f64) -> Result<Vec<ConvergenceRow>> {
    if scales.is_empty() {
        return Err(Error::InvalidArgument("empty length ladder".into()));
    }
    let l0 = config.cavity.lengths();
    let mut rows = Vec::new();
    for &s in scales {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!("length scale {s} must be positive")));
        }
        let lengths = l0.map(|l| l * s);
        let nmax = ((config.cavity.nmax() as f64) * s).round().max(1.0) as usize;
        let mut cfg = config.clone();
        cfg.cavity = CavitySpec::new(lengths, nmax)?;
        for i in 0..3 {
            cfg.alice.smearing.center[i] += 0.5 * (lengths[i] - l0[i]);
        }
        cfg.grid = vec![r];
        let res = FermiEvaluator::new(&cfg)?.evaluate(r);
        if let Some(e) = res.flags.error {
            return Err(Error::Integration(format!("scale {s}: {e}")));
        }
        push_rung(&mut rows, nmax, lengths, res.delta_p, threshold);
    }
    Ok(rows)
}
