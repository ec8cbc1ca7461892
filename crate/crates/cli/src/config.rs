//! Flat `key = value` run configuration.
//!
//! Every key has a default; a file only lists the keys it changes. Unknown
//! keys, repeated keys and malformed values are rejected before any work
//! starts, and [`RunConfig::render`] writes back the fully resolved set in a
//! fixed order so that it can be echoed into outputs and parsed again.

use std::collections::HashSet;
use std::path::PathBuf;

use fockphase::engine::PhaseOptions;
use fockphase::exec::ExecMode;
use fockphase::fermi::{uniform_grid, EngineSelection, FermiConfig, QubitAmplitudes};
use fockphase::smearing::{GaussianSmearing, IntegralMethod};
use fockphase::CavitySpec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Self { key: key.to_string(), message: message.into() }
    }
}

type Parsed<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QubitState {
    PlusZ,
    MinusZ,
    PlusX,
    MinusX,
}

impl QubitState {
    const ALL: [(QubitState, &'static str); 4] = [
        (QubitState::PlusZ, "plus_z"),
        (QubitState::MinusZ, "minus_z"),
        (QubitState::PlusX, "plus_x"),
        (QubitState::MinusX, "minus_x"),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(s, _)| *s == self).map(|(_, n)| *n).unwrap_or("plus_z")
    }

    pub fn amplitudes(self) -> QubitAmplitudes {
        match self {
            QubitState::PlusZ => QubitAmplitudes::plus_z(),
            QubitState::MinusZ => QubitAmplitudes::minus_z(),
            QubitState::PlusX => QubitAmplitudes::plus_x(),
            QubitState::MinusX => QubitAmplitudes::minus_x(),
        }
    }

    fn parse(key: &str, v: &str) -> Parsed<Self> {
        Self::ALL
            .iter()
            .find(|(_, n)| *n == v)
            .map(|(s, _)| *s)
            .ok_or_else(|| ConfigError::new(key, format!("unknown state `{v}` (plus_z, minus_z, plus_x, minus_x)")))
    }
}

pub fn engine_name(e: EngineSelection) -> &'static str {
    match e {
        EngineSelection::Dense => "dense",
        EngineSelection::LowRank => "lowrank",
        EngineSelection::Auto => "auto",
    }
}

pub fn parse_engine(key: &str, v: &str) -> Parsed<EngineSelection> {
    match v {
        "dense" => Ok(EngineSelection::Dense),
        "lowrank" => Ok(EngineSelection::LowRank),
        "auto" => Ok(EngineSelection::Auto),
        _ => Err(ConfigError::new(key, format!("unknown engine `{v}` (dense, lowrank, auto)"))),
    }
}

/// What `phase` evaluates: the single-mode `:phi^2:` fixture `F = [f]` with
/// measure `dk`, or Alice's smearing on the configured lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseSource {
    Fixture,
    Alice,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRequest {
    pub source: PhaseSource,
    pub f: f64,
    pub dk: f64,
    pub lambda: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergeRequest {
    pub r: f64,
    pub ladder: Vec<usize>,
    pub threshold: f64,
    /// Optional cavity-size ladder (side-length multipliers).
    pub scales: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyRequest {
    pub single: usize,
    pub double: usize,
    pub nmax_single: usize,
    pub nmax_double: usize,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub fermi: FermiConfig,
    pub alice_state: QubitState,
    pub bob_state: QubitState,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub phase: PhaseRequest,
    pub converge: ConvergeRequest,
    pub verify: VerifyRequest,
}

/// Cutoff used when no config is given: the first rung of the default
/// ladder that passes the 1% convergence test.
pub const DEFAULT_NMAX: usize = 512;

impl Default for RunConfig {
    fn default() -> Self {
        let fermi = FermiConfig::reference(DEFAULT_NMAX).expect("reference configuration is valid");
        Self {
            fermi,
            alice_state: QubitState::PlusZ,
            bob_state: QubitState::MinusZ,
            out: PathBuf::from("out"),
            seed: 0,
            workers: None,
            phase: PhaseRequest { source: PhaseSource::Fixture, f: 1.0, dk: 1.0, lambda: 0.5, tolerance: 1e-6 },
            converge: ConvergeRequest { r: 1.0, ladder: vec![128, 256, 384, 512], threshold: 0.01, scales: Vec::new() },
            verify: VerifyRequest { single: 20, double: 10, nmax_single: 60, nmax_double: 25, tolerance: 1e-6 },
        }
    }
}

const KEYS: &[&str] = &[
    "lengths",
    "nmax",
    "axis",
    "delay",
    "grid",
    "grid.start",
    "grid.stop",
    "grid.step",
    "alice.center",
    "alice.sigma",
    "alice.strength",
    "alice.coupling",
    "alice.state",
    "bob.sigma",
    "bob.strength",
    "bob.coupling",
    "bob.state",
    "engine",
    "integrals",
    "ode.rtol",
    "ode.atol",
    "ode.max_steps",
    "exec",
    "workers",
    "seed",
    "out",
    "phase.source",
    "phase.f",
    "phase.dk",
    "phase.lambda",
    "phase.tolerance",
    "converge.r",
    "converge.ladder",
    "converge.threshold",
    "converge.scales",
    "verify.single",
    "verify.double",
    "verify.nmax_single",
    "verify.nmax_double",
    "verify.tolerance",
];

fn float(key: &str, v: &str) -> Parsed<f64> {
    let x: f64 = v.parse().map_err(|_| ConfigError::new(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(ConfigError::new(key, "must be finite"));
    }
    Ok(x)
}

fn positive(key: &str, v: &str) -> Parsed<f64> {
    let x = float(key, v)?;
    if x <= 0.0 {
        return Err(ConfigError::new(key, format!("must be positive, got {x}")));
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Parsed<usize> {
    v.parse().map_err(|_| ConfigError::new(key, format!("`{v}` is not a non-negative integer")))
}

fn list<T>(key: &str, v: &str, item: impl Fn(&str, &str) -> Parsed<T>) -> Parsed<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| item(key, s.trim())).collect()
}

fn triple(key: &str, v: &str) -> Parsed<[f64; 3]> {
    let xs = list(key, v, float)?;
    xs.try_into().map_err(|xs: Vec<f64>| ConfigError::new(key, format!("expected 3 values, got {}", xs.len())))
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Grid given either explicitly or as an inclusive range.
#[derive(Default)]
struct GridSpec {
    points: Option<Vec<f64>>,
    start: Option<f64>,
    stop: Option<f64>,
    step: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Parsed<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        let mut grid = GridSpec::default();
        let mut lengths = cfg.fermi.cavity.lengths();
        let mut nmax = cfg.fermi.cavity.nmax();
        let mut alice = cfg.fermi.alice.smearing;
        let mut bob = cfg.fermi.bob.smearing;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(line, format!("line {} is not `key = value`", lineno + 1)))?;
            let (key, v) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::new(key, "unknown key"));
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::new(key, "given more than once"));
            }
            match key {
                "lengths" => lengths = triple(key, v)?,
                "nmax" => nmax = count(key, v)?,
                "axis" => {
                    cfg.fermi.axis = count(key, v)?;
                    if cfg.fermi.axis > 2 {
                        return Err(ConfigError::new(key, "must be 0, 1 or 2"));
                    }
                }
                "delay" => cfg.fermi.delay = positive(key, v)?,
                "grid" => grid.points = Some(list(key, v, float)?),
                "grid.start" => grid.start = Some(float(key, v)?),
                "grid.stop" => grid.stop = Some(float(key, v)?),
                "grid.step" => grid.step = Some(positive(key, v)?),
                "alice.center" => alice.center = triple(key, v)?,
                "alice.sigma" => alice.sigma = positive(key, v)?,
                "alice.strength" => alice.strength = float(key, v)?,
                "alice.coupling" => cfg.fermi.alice.coupling = float(key, v)?,
                "alice.state" => cfg.alice_state = QubitState::parse(key, v)?,
                "bob.sigma" => bob.sigma = positive(key, v)?,
                "bob.strength" => bob.strength = float(key, v)?,
                "bob.coupling" => cfg.fermi.bob.coupling = float(key, v)?,
                "bob.state" => cfg.bob_state = QubitState::parse(key, v)?,
                "engine" => cfg.fermi.engine = parse_engine(key, v)?,
                "integrals" => {
                    cfg.fermi.integrals = match v {
                        "auto" => IntegralMethod::Auto,
                        "quadrature" => IntegralMethod::Quadrature,
                        _ => return Err(ConfigError::new(key, format!("unknown method `{v}` (auto, quadrature)"))),
                    }
                }
                "ode.rtol" => cfg.fermi.phase.ode.rtol = positive(key, v)?,
                "ode.atol" => cfg.fermi.phase.ode.atol = positive(key, v)?,
                "ode.max_steps" => cfg.fermi.phase.ode.max_steps = count(key, v)?,
                "exec" => {
                    cfg.fermi.exec = match v {
                        "parallel" => ExecMode::Parallel,
                        "sequential" => ExecMode::Sequential,
                        _ => return Err(ConfigError::new(key, format!("unknown mode `{v}` (parallel, sequential)"))),
                    }
                }
                "workers" => {
                    cfg.workers = match v {
                        "auto" => None,
                        _ => Some(count(key, v)?.max(1)),
                    }
                }
                "seed" => cfg.seed = v.parse().map_err(|_| ConfigError::new(key, format!("`{v}` is not a u64")))?,
                "out" => cfg.out = PathBuf::from(v),
                "phase.source" => {
                    cfg.phase.source = match v {
                        "fixture" => PhaseSource::Fixture,
                        "alice" => PhaseSource::Alice,
                        _ => return Err(ConfigError::new(key, format!("unknown source `{v}` (fixture, alice)"))),
                    }
                }
                "phase.f" => cfg.phase.f = float(key, v)?,
                "phase.dk" => cfg.phase.dk = positive(key, v)?,
                "phase.lambda" => cfg.phase.lambda = float(key, v)?,
                "phase.tolerance" => cfg.phase.tolerance = positive(key, v)?,
                "converge.r" => cfg.converge.r = float(key, v)?,
                "converge.ladder" => cfg.converge.ladder = list(key, v, count)?,
                "converge.threshold" => cfg.converge.threshold = positive(key, v)?,
                "converge.scales" => cfg.converge.scales = list(key, v, positive)?,
                "verify.single" => cfg.verify.single = count(key, v)?,
                "verify.double" => cfg.verify.double = count(key, v)?,
                "verify.nmax_single" => cfg.verify.nmax_single = count(key, v)?,
                "verify.nmax_double" => cfg.verify.nmax_double = count(key, v)?,
                "verify.tolerance" => cfg.verify.tolerance = positive(key, v)?,
                _ => unreachable!("key list and match arms disagree"),
            }
        }

        cfg.fermi.cavity = CavitySpec::new(lengths, nmax).map_err(|e| {
            let key = if nmax == 0 { "nmax" } else { "lengths" };
            ConfigError::new(key, e.to_string())
        })?;
        cfg.fermi.alice.smearing =
            GaussianSmearing::new(alice.center, alice.sigma).map_err(|e| ConfigError::new("alice.sigma", e.to_string()))?.with_strength(alice.strength);
        cfg.fermi.bob.smearing =
            GaussianSmearing::new(alice.center, bob.sigma).map_err(|e| ConfigError::new("bob.sigma", e.to_string()))?.with_strength(bob.strength);
        cfg.fermi.alice_state = cfg.alice_state.amplitudes();
        cfg.fermi.bob_state = cfg.bob_state.amplitudes();
        cfg.fermi.grid = resolve_grid(grid, &cfg.fermi.grid)?;
        if cfg.converge.ladder.is_empty() {
            return Err(ConfigError::new("converge.ladder", "must not be empty"));
        }
        if cfg.converge.ladder.windows(2).any(|w| w[1] <= w[0]) || cfg.converge.ladder[0] == 0 {
            return Err(ConfigError::new("converge.ladder", "must be positive and strictly increasing"));
        }
        cfg.fermi.validate().map_err(|e| ConfigError::new("alice.center", e.to_string()))?;
        Ok(cfg)
    }

    /// Resolved configuration, one `key = value` per line, in a fixed order.
    pub fn render(&self) -> String {
        let f = &self.fermi;
        let ode = f.phase.ode;
        let lines: Vec<(&str, String)> = vec![
            ("lengths", join(&f.cavity.lengths())),
            ("nmax", f.cavity.nmax().to_string()),
            ("axis", f.axis.to_string()),
            ("delay", f.delay.to_string()),
            ("grid", join(&f.grid)),
            ("alice.center", join(&f.alice.smearing.center)),
            ("alice.sigma", f.alice.smearing.sigma.to_string()),
            ("alice.strength", f.alice.smearing.strength.to_string()),
            ("alice.coupling", f.alice.coupling.to_string()),
            ("alice.state", self.alice_state.name().to_string()),
            ("bob.sigma", f.bob.smearing.sigma.to_string()),
            ("bob.strength", f.bob.smearing.strength.to_string()),
            ("bob.coupling", f.bob.coupling.to_string()),
            ("bob.state", self.bob_state.name().to_string()),
            ("engine", engine_name(f.engine).to_string()),
            (
                "integrals",
                match f.integrals {
                    IntegralMethod::Auto => "auto",
                    IntegralMethod::Quadrature => "quadrature",
                }
                .to_string(),
            ),
            ("ode.rtol", ode.rtol.to_string()),
            ("ode.atol", ode.atol.to_string()),
            ("ode.max_steps", ode.max_steps.to_string()),
            (
                "exec",
                match f.exec {
                    ExecMode::Parallel => "parallel",
                    ExecMode::Sequential => "sequential",
                }
                .to_string(),
            ),
            ("workers", self.workers.map_or("auto".to_string(), |w| w.to_string())),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            (
                "phase.source",
                match self.phase.source {
                    PhaseSource::Fixture => "fixture",
                    PhaseSource::Alice => "alice",
                }
                .to_string(),
            ),
            ("phase.f", self.phase.f.to_string()),
            ("phase.dk", self.phase.dk.to_string()),
            ("phase.lambda", self.phase.lambda.to_string()),
            ("phase.tolerance", self.phase.tolerance.to_string()),
            ("converge.r", self.converge.r.to_string()),
            ("converge.ladder", join(&self.converge.ladder)),
            ("converge.threshold", self.converge.threshold.to_string()),
            ("converge.scales", join(&self.converge.scales)),
            ("verify.single", self.verify.single.to_string()),
            ("verify.double", self.verify.double.to_string()),
            ("verify.nmax_single", self.verify.nmax_single.to_string()),
            ("verify.nmax_double", self.verify.nmax_double.to_string()),
            ("verify.tolerance", self.verify.tolerance.to_string()),
        ];
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn phase_options(&self) -> PhaseOptions {
        self.fermi.phase
    }
}

fn resolve_grid(g: GridSpec, default: &[f64]) -> Parsed<Vec<f64>> {
    let range = g.start.is_some() || g.stop.is_some() || g.step.is_some();
    let grid = match (g.points, range) {
        (Some(_), true) => return Err(ConfigError::new("grid", "give either `grid` or `grid.start/stop/step`, not both")),
        (Some(p), false) => p,
        (None, true) => {
            let (Some(lo), Some(hi), Some(step)) = (g.start, g.stop, g.step) else {
                return Err(ConfigError::new("grid.start", "a range needs grid.start, grid.stop and grid.step"));
            };
            if hi < lo {
                return Err(ConfigError::new("grid.stop", "must not be below grid.start"));
            }
            uniform_grid(lo, hi, step)
        }
        (None, false) => default.to_vec(),
    };
    if grid.is_empty() {
        return Err(ConfigError::new("grid", "must not be empty"));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn render_round_trips() {
        let text = "nmax = 64\nalice.sigma = 0.05\nbob.coupling = 0.5\ngrid = 0.9, 1.0, 1.1\nengine = dense\nconverge.scales = 1, 1.5\nworkers = 2\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.fermi.cavity.nmax(), 64);
        assert_eq!(cfg.fermi.grid, vec![0.9, 1.0, 1.1]);
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(RunConfig::parse(&d.render()).unwrap(), d);
    }

    #[test]
    fn unknown_and_repeated_keys() {
        assert_eq!(RunConfig::parse("nmaxx = 3").unwrap_err().key, "nmaxx");
        assert_eq!(RunConfig::parse("nmax = 3\nnmax = 4").unwrap_err().key, "nmax");
        assert_eq!(RunConfig::parse("just text").unwrap_err().message, "line 1 is not `key = value`");
    }

    #[test]
    fn bad_values_name_their_key() {
        for (text, key) in [
            ("delay = -1", "delay"),
            ("alice.sigma = x", "alice.sigma"),
            ("engine = fast", "engine"),
            ("lengths = 1, 2", "lengths"),
            ("converge.ladder = 8, 4", "converge.ladder"),
            ("grid = ", "grid"),
            ("grid.start = 0.5", "grid.start"),
            ("alice.center = -0.5, 1.5, 1.5", "alice.center"),
            ("nmax = 0", "nmax"),
        ] {
            assert_eq!(RunConfig::parse(text).unwrap_err().key, key, "{text}");
        }
    }

    #[test]
    fn grid_range() {
        let cfg = RunConfig::parse("grid.start = 0.5\ngrid.stop = 1.5\ngrid.step = 0.25").unwrap();
        assert_eq!(cfg.fermi.grid, vec![0.5, 0.75, 1.0, 1.25, 1.5]);
        assert!(RunConfig::parse("grid = 1\ngrid.step = 0.1").is_err());
    }
}
