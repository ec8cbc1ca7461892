//! Front end for the `fockphase` library: configuration, the four commands
//! and their output files.

pub mod config;
pub mod output;
pub mod verify;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fockphase::engine::{conjugation_blocks, nullifier_k, phase_integrate_with, phase_phi2_closed_form, QuadraticGenerator};
use fockphase::exec;
use fockphase::fermi::{argmax, converge_lengths, converge_nmax, first_converged, sweep, EngineSelection};
use fockphase::linalg::{self, CMatrix};
use fockphase::smearing::smearing_vector;
use fockphase::{Convention, ModeLattice, C64};

pub use config::{ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<fockphase::Error> for CliError {
    fn from(e: fockphase::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Phase,
    Verify,
    Fermi,
    Converge,
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub engine: Option<EngineSelection>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::new("--config", format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(e) = overrides.engine {
        cfg.fermi.engine = e;
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(w) = overrides.workers {
        if w == 0 {
            return Err(ConfigError::new("--workers", "must be at least 1").into());
        }
        cfg.workers = Some(w);
    }
    if let Some(o) = &overrides.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

/// Result of a command: the exit code, the text shown on stdout and the
/// files written.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: String,
    pub files: Vec<PathBuf>,
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    exec::with_workers(cfg.workers, || match command {
        Command::Phase => cmd_phase(cfg),
        Command::Verify => cmd_verify(cfg),
        Command::Fermi => cmd_fermi(cfg),
        Command::Converge => cmd_converge(cfg),
    })
}

fn complex(z: C64) -> String {
    format!("{}{}{}i", output::num(z.re), if z.im < 0.0 || z.im.is_sign_negative() { "-" } else { "+" }, output::num(z.im.abs()))
}

/// Phase by closed form and by integration, for the single-mode fixture or
/// for Alice's smearing on the configured lattice.
pub fn cmd_phase(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let lam = cfg.phase.lambda;
    let (f, dk) = match cfg.phase.source {
        config::PhaseSource::Fixture => (CMatrix::from_element(1, 1, C64::new(cfg.phase.f, 0.0)), cfg.phase.dk),
        config::PhaseSource::Alice => {
            let lattice = ModeLattice::build(cfg.fermi.cavity, Convention::Field)?;
            let s = cfg.fermi.alice.smearing;
            let v = smearing_vector(&s, &lattice, cfg.fermi.integrals)?;
            let f = &v * v.transpose() * s.strength;
            (linalg::to_complex(&f), lattice.dk())
        }
    };
    let gen = QuadraticGenerator::new(f.clone(), f.clone(), dk)?;
    let closed = phase_phi2_closed_form(&f, lam, dk)?;
    let ket = phase_integrate_with(&gen, lam, &cfg.fermi.phase)?;
    let k = nullifier_k(&conjugation_blocks(&gen, lam)?, dk)?;
    let diff = (closed - ket.d).norm();
    let ok = diff <= cfg.phase.tolerance;

    let mut body = String::new();
    let _ = writeln!(body, "modes = {}", gen.dim());
    let _ = writeln!(body, "D_closed_form = {}", complex(closed));
    let _ = writeln!(body, "D_ode = {}", complex(ket.d));
    let _ = writeln!(body, "abs_difference = {}", output::num(diff));
    let _ = writeln!(body, "re_D = {}", output::num(ket.d.re));
    let _ = writeln!(body, "im_D = {}", output::num(ket.d.im));
    let _ = writeln!(body, "k_spectral_radius = {}", output::num(ket.k_radius()));
    let _ = writeln!(body, "k_max_entry = {}", output::num(linalg::max_abs(&k)));
    let _ = writeln!(body, "status = {}", if ok { "agree" } else { "mismatch" });
    let path = output::write(&cfg.out, "phase.txt", &(output::echo(&cfg.render()) + &body))?;
    Ok(Outcome { code: if ok { 0 } else { 3 }, report: body, files: vec![path] })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let checks = verify::suite(cfg.seed, &cfg.verify)?;
    let mut body = String::new();
    for c in &checks {
        let _ = writeln!(body, "{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let _ = writeln!(body, "{} checks, {} failed", checks.len(), failed);
    let path = output::write(&cfg.out, "verify.txt", &(output::echo(&cfg.render()) + &body))?;
    Ok(Outcome { code: if failed == 0 { 0 } else { 1 }, report: body, files: vec![path] })
}

pub fn cmd_fermi(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rows = sweep(&cfg.fermi)?;
    let text = cfg.render();
    let csv = output::write(&cfg.out, "fermi.csv", &output::fermi_csv(&text, &rows))?;
    let plot = output::write(&cfg.out, "fermi_plot.csv", &output::plot_data(&text, &rows))?;
    let ok = rows.iter().filter(|r| r.succeeded()).count();
    let mut body = format!("{} rows, {} succeeded\n", rows.len(), ok);
    if let Some(i) = argmax(&rows) {
        let _ = writeln!(body, "argmax r = {} deltaP = {}", output::num(rows[i].r), output::num(rows[i].delta_p));
    }
    let peak = rows.iter().filter(|r| r.succeeded()).max_by(|a, b| a.delta_p.abs().total_cmp(&b.delta_p.abs()));
    if let Some(p) = peak {
        let _ = writeln!(body, "largest |deltaP| at r = {}", output::num(p.r));
    }
    for row in rows.iter().filter(|r| !r.succeeded()) {
        let _ = writeln!(body, "r = {}: {}", output::num(row.r), row.flags.label());
    }
    Ok(Outcome { code: if ok > 0 { 0 } else { 3 }, report: body, files: vec![csv, plot] })
}

pub fn cmd_converge(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let c = &cfg.converge;
    let rows = converge_nmax(&cfg.fermi, c.r, &c.ladder, c.threshold)?;
    let mut csv = output::echo(&cfg.render());
    csv.push_str(output::CONVERGE_HEADER);
    csv.push('\n');
    csv.push_str(&output::converge_block("nmax", &rows));
    let mut body = String::new();
    match first_converged(&rows) {
        Some(r) => {
            let _ = writeln!(body, "first converged nmax = {} deltaP = {}", r.nmax, output::num(r.delta_p));
        }
        None => body.push_str("no rung converged\n"),
    }
    if !c.scales.is_empty() {
        let lrows = converge_lengths(&cfg.fermi, c.r, &c.scales, c.threshold)?;
        csv.push_str(&output::converge_block("length", &lrows));
        for r in lrows.iter().filter_map(|r| r.difference.map(|d| (r.lengths[0], d))) {
            let _ = writeln!(body, "L1 = {} difference = {}", output::num(r.0), output::num(r.1));
        }
    }
    let path = output::write(&cfg.out, "converge.csv", &csv)?;
    Ok(Outcome { code: 0, report: body, files: vec![path] })
}
