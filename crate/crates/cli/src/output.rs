//! CSV and report formatting. Numbers use the shortest decimal that parses
//! back to the same double, so reruns can be compared byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fockphase::fermi::{ConvergenceRow, FermiResult};

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

/// Config echo as `#` comment lines.
pub fn echo(config_text: &str) -> String {
    config_text.lines().map(|l| format!("# {l}\n")).collect()
}

pub const FERMI_HEADER: &str = "r,Re_p_pm,Im_p_pm,P_B,P_B_baseline,deltaP,engine,flags";

pub fn fermi_csv(config_text: &str, rows: &[FermiResult]) -> String {
    let mut s = echo(config_text);
    s.push_str(FERMI_HEADER);
    s.push('\n');
    for row in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            num(row.r),
            num(row.p_plusminus.re),
            num(row.p_plusminus.im),
            num(row.p_b),
            num(row.p_b_baseline),
            num(row.delta_p),
            row.engine.name(),
            row.flags.label()
        );
    }
    s
}

pub fn plot_data(config_text: &str, rows: &[FermiResult]) -> String {
    let mut s = echo(config_text);
    s.push_str("r,deltaP\n");
    for row in rows {
        let _ = writeln!(s, "{},{}", num(row.r), num(row.delta_p));
    }
    s
}

pub const CONVERGE_HEADER: &str = "kind,nmax,L1,L2,L3,deltaP,difference,relative_change,first_converged";

/// One value row per rung followed, from the second rung on, by a
/// difference row against the previous rung.
pub fn converge_block(kind: &str, rows: &[ConvergenceRow]) -> String {
    let first = rows.iter().position(|r| r.converged);
    let mut s = String::new();
    for (i, row) in rows.iter().enumerate() {
        let [l1, l2, l3] = row.lengths;
        let _ = writeln!(
            s,
            "{kind},{},{},{},{},{},,,{}",
            row.nmax,
            num(l1),
            num(l2),
            num(l3),
            num(row.delta_p),
            first == Some(i)
        );
        if row.difference.is_some() {
            let _ = writeln!(
                s,
                "{kind}_difference,{},{},{},{},,{},{},",
                row.nmax,
                num(l1),
                num(l2),
                num(l3),
                opt(row.difference),
                opt(row.relative_change)
            );
        }
    }
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -6.7247e-3, 1e-300, 0.0, 123456789.0, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.025), "2.5e-2");
    }

    #[test]
    fn echo_prefixes_every_line() {
        assert_eq!(echo("a = 1\nb = 2\n"), "# a = 1\n# b = 2\n");
    }
}
