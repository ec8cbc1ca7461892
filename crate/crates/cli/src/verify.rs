//! Engine-versus-oracle checks. Fixture cases are fixed; random cases are
//! drawn from a ChaCha stream seeded by the caller.

use std::f64::consts::{LN_2, PI};

use fockphase::engine::{
    conjugation_blocks, nullifier_k, overlap, phase_integrate, phase_phi2_closed_form,
    vacuum_amplitude_product, PhaseOptions, ProductFactor, QuadraticGenerator,
};
use fockphase::linalg::{self, CMatrix};
use fockphase::oracle::{
    oracle_nullifier_residual_within, oracle_overlap, oracle_product_state, oracle_state, oracle_vacuum_amplitude_checked,
    TruncatedFockSpace,
};
use fockphase::{Error, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one check: the worst deviation seen against its tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub note: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }

    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!("{status} {} worst={:e} tol={:e} cases={}", self.name, self.worst, self.tolerance, self.cases);
        if !self.note.is_empty() {
            s.push_str("  ");
            s.push_str(&self.note);
        }
        s
    }
}

type Result<T> = std::result::Result<T, Error>;

/// Distinct, reproducible streams for each check.
fn stream(seed: u64, check: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(check);
    rng
}

/// Symmetric `A` and Hermitian `B` with entries bounded by `bound`.
pub fn random_generator(rng: &mut ChaCha8Rng, n: usize, bound: f64, dk: f64) -> Result<QuadraticGenerator> {
    let mut r = || C64::new(rng.random_range(-bound..bound), rng.random_range(-bound..bound));
    let a = CMatrix::from_fn(n, n, |_, _| r());
    let b = CMatrix::from_fn(n, n, |_, _| r());
    QuadraticGenerator::new(linalg::symmetrize(&a), linalg::hermitize(&b), dk)
}

fn single(a: f64, b: f64) -> Result<QuadraticGenerator> {
    QuadraticGenerator::new(CMatrix::from_element(1, 1, C64::new(a, 0.0)), CMatrix::from_element(1, 1, C64::new(b, 0.0)), 1.0)
}

/// Real symmetric matrix with entries in `[-1, 1]`.
fn symmetric_real(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let x = C64::new(rng.random_range(-1.0..1.0), 0.0);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

/// Vacuum amplitudes of random one- and two-mode generators against the
/// truncated-space oracle.
pub fn phase_vs_oracle(seed: u64, single_count: usize, double_count: usize, nmax_single: usize, nmax_double: usize, tol: f64) -> Result<Check> {
    let mut rng = stream(seed, 1);
    let mut worst: f64 = 0.0;
    let mut truncation: f64 = 0.0;
    for (modes, count, nmax) in [(1, single_count, nmax_single), (2, double_count, nmax_double)] {
        if count == 0 {
            continue;
        }
        let space = TruncatedFockSpace::new(modes, nmax, 1.0)?;
        for _ in 0..count {
            let g = random_generator(&mut rng, modes, 0.5, 1.0)?;
            let lam = rng.random_range(0.0..1.0);
            let engine = phase_integrate(&g, lam)?.vacuum_amplitude();
            let o = oracle_vacuum_amplitude_checked(&g, lam, &space)?;
            worst = worst.max((engine - o.value).norm());
            truncation = truncation.max(o.truncation_error());
        }
    }
    Ok(Check {
        name: "vacuum amplitude vs oracle",
        worst,
        tolerance: tol,
        cases: single_count + double_count,
        note: format!("nmax={nmax_single}/{nmax_double} oracle nmax-vs-2nmax={truncation:e}"),
    })
}

/// Closed form of the `:phi^2:` phase against ODE integration for random
/// real-symmetric `F` up to 6x6.
pub fn closed_form_vs_ode(seed: u64, count: usize, tol: f64) -> Result<Check> {
    let mut rng = stream(seed, 2);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let n = 1 + i % 6;
        let f = symmetric_real(&mut rng, n);
        let dk = rng.random_range(0.2..1.5);
        let lam = rng.random_range(0.0..1.0);
        let g = QuadraticGenerator::new(f.clone(), f.clone(), dk)?;
        let ode = phase_integrate(&g, lam)?.d;
        let closed = phase_phi2_closed_form(&f, lam, dk)?;
        worst = worst.max((ode - closed).norm());
    }
    Ok(Check { name: "phi^2 closed form vs ODE", worst, tolerance: tol, cases: count, note: String::new() })
}

/// Single-mode squeeze `A = 1, B = 0`: `e^D = cosh(2 lambda)^{-1/2}`, real
/// and positive. The oracle is checked against the same values.
pub fn squeeze_fixture(tol: f64) -> Result<Check> {
    let g = single(1.0, 0.0)?;
    let space = TruncatedFockSpace::new(1, 60, 1.0)?;
    let mut worst: f64 = 0.0;
    let mut oracle_worst: f64 = 0.0;
    for lam in [0.1f64, 0.3, 0.6] {
        let exact = C64::new((2.0 * lam).cosh().powf(-0.5), 0.0);
        worst = worst.max((phase_integrate(&g, lam)?.vacuum_amplitude() - exact).norm());
        oracle_worst = oracle_worst.max((oracle_vacuum_amplitude_checked(&g, lam, &space)?.value - exact).norm());
    }
    Ok(Check {
        name: "squeeze fixture",
        worst,
        tolerance: tol,
        cases: 3,
        note: format!("oracle-vs-exact={oracle_worst:e}"),
    })
}

/// `:phi^2:` with `F = 1, dk = 1, lambda = 1/2`: `D = -ln 2 / 4 + i (1/2 - pi/8)`.
pub fn phi2_fixture(tol: f64) -> Result<Check> {
    let d = phase_integrate(&single(1.0, 1.0)?, 0.5)?.d;
    let worst = (d - C64::new(-LN_2 / 4.0, 0.5 - PI / 8.0)).norm();
    Ok(Check { name: "phi^2 fixture", worst, tolerance: tol, cases: 1, note: String::new() })
}

/// Engine nullifier applied to oracle states. Only shells up to `nmax / 2`
/// are counted; the outer shells hold the oracle's own truncation error.
/// The fixed case is the squeeze at `lambda = 0.3`; stronger squeezing
/// leaves too much weight above 60 quanta for the oracle state to resolve.
pub fn nullifier_residuals(seed: u64, count: usize, nmax: usize, tol: f64) -> Result<Check> {
    let mut rng = stream(seed, 4);
    let space = TruncatedFockSpace::new(1, nmax, 1.0)?;
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let g = if i == 0 { single(1.0, 0.0)? } else { random_generator(&mut rng, 1, 0.5, 1.0)? };
        let lam = if i == 0 { 0.3 } else { rng.random_range(0.0..1.0) };
        let k = nullifier_k(&conjugation_blocks(&g, lam)?, 1.0)?;
        let state = oracle_state(&g, lam, &space)?;
        worst = worst.max(oracle_nullifier_residual_within(&state, &k, nmax / 2)?);
    }
    Ok(Check {
        name: "nullifier residual on oracle states",
        worst,
        tolerance: tol,
        cases: count,
        note: format!("nmax={nmax} shells<={}", nmax / 2),
    })
}

/// Two- and three-factor products with free evolution between factors,
/// plus the exact `lambda_B = 0` short cut.
pub fn composite_products(seed: u64, count: usize, nmax: usize, tol: f64) -> Result<Check> {
    let mut rng = stream(seed, 5);
    let space = TruncatedFockSpace::new(1, nmax, 1.0)?;
    let opts = PhaseOptions::default();
    let mut worst: f64 = 0.0;
    let mut exact_one = true;
    for _ in 0..count {
        let ga = random_generator(&mut rng, 1, 0.5, 1.0)?;
        let gb = random_generator(&mut rng, 1, 0.5, 1.0)?;
        let omegas = [rng.random_range(0.5..2.0)];
        let la = rng.random_range(0.0..1.0);
        let lb = rng.random_range(0.0..1.0);
        let t = rng.random_range(0.1..2.0);
        let chains: [Vec<(&QuadraticGenerator, f64, f64)>; 2] =
            [vec![(&ga, la, 0.0), (&gb, lb, t)], vec![(&ga, la, 0.0), (&gb, lb, t), (&ga, -la, -t)]];
        for chain in &chains {
            let factors: Vec<ProductFactor> =
                chain.iter().map(|&(generator, coupling, delay)| ProductFactor { generator, coupling, delay }).collect();
            let engine = vacuum_amplitude_product(&factors, &omegas, &opts)?;
            let o = oracle_product_state(chain, &omegas, &space)?;
            worst = worst.max((engine.value - o.vacuum_component()).norm());
        }
        let off = [
            ProductFactor { generator: &ga, coupling: la, delay: 0.0 },
            ProductFactor { generator: &gb, coupling: 0.0, delay: t },
            ProductFactor { generator: &ga, coupling: -la, delay: -t },
        ];
        exact_one &= vacuum_amplitude_product(&off, &omegas, &opts)?.value == C64::new(1.0, 0.0);
    }
    if !exact_one {
        worst = f64::INFINITY;
    }
    Ok(Check {
        name: "composite products vs oracle",
        worst,
        tolerance: tol,
        cases: 2 * count,
        note: format!("lambda_B=0 exactly one: {exact_one}"),
    })
}

/// Overlaps of two engine states against oracle inner products.
pub fn overlaps(seed: u64, count: usize, nmax: usize, tol: f64) -> Result<Check> {
    let mut rng = stream(seed, 6);
    let space = TruncatedFockSpace::new(1, nmax, 1.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let g1 = random_generator(&mut rng, 1, 0.5, 1.0)?;
        let g2 = random_generator(&mut rng, 1, 0.5, 1.0)?;
        let (l1, l2) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let e = overlap(&phase_integrate(&g1, l1)?, &phase_integrate(&g2, l2)?)?;
        let o = oracle_overlap(&oracle_state(&g1, l1, &space)?, &oracle_state(&g2, l2, &space)?)?;
        worst = worst.max((e - o).norm());
    }
    Ok(Check { name: "overlaps vs oracle", worst, tolerance: tol, cases: count, note: String::new() })
}

/// Full suite as run by the `verify` command.
pub fn suite(seed: u64, req: &crate::config::VerifyRequest) -> Result<Vec<Check>> {
    let tol = req.tolerance;
    Ok(vec![
        phase_vs_oracle(seed, req.single, req.double, req.nmax_single, req.nmax_double, tol)?,
        closed_form_vs_ode(seed, 20, 1e-8)?,
        squeeze_fixture(1e-8)?,
        phi2_fixture(1e-8)?,
        nullifier_residuals(seed, 10, req.nmax_single, tol)?,
        composite_products(seed, 5, req.nmax_single, tol)?,
        overlaps(seed, 5, req.nmax_single, tol)?,
    ])
}
