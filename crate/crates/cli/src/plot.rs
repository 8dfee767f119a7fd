//! Plot-ready data files: whitespace-delimited columns with a `#` header,
//! readable by gnuplot and numpy alike.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;
use crate::manifest::write_atomic;

fn number(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v:?}")
}

/// Numeric table, one row per line.
pub fn write_dat(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut out = format!("# {}\n", columns.join(" "));
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        let cells: Vec<String> = row.iter().map(|&v| number(v)).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    write_atomic(path, out.as_bytes())
}

/// Table whose first column is a text label.
pub fn write_labeled_dat(path: &Path, columns: &[&str], rows: &[(String, Vec<f64>)]) -> Result<(), CliError> {
    let mut out = format!("# {}\n", columns.join(" "));
    for (label, values) in rows {
        let cells: Vec<String> = values.iter().map(|&v| number(v)).collect();
        let _ = writeln!(out, "{} {}", label.replace(char::is_whitespace, "_"), cells.join(" "));
    }
    write_atomic(path, out.as_bytes())
}

/// Comma-separated table with a commented header row.
pub fn write_csv(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut out = format!("# {}\n", columns.join(","));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| number(v)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_exact_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.dat");
        write_dat(&p, &["x", "y"], &[vec![0.1, 1.0 / 3.0], vec![2.0, -0.0]]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# x y"));
        let second: Vec<f64> = lines.next().unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(second, vec![0.1, 1.0 / 3.0]);

        let c = dir.path().join("a.csv");
        write_csv(&c, &["alpha", "qhat"], &[vec![0.5, 1.25]]).unwrap();
        assert_eq!(std::fs::read_to_string(&c).unwrap(), "# alpha,qhat\n0.5,1.25\n");

        let l = dir.path().join("bars.dat");
        write_labeled_dat(&l, &["label", "pehe"], &[("pair run".into(), vec![0.7])]).unwrap();
        assert_eq!(std::fs::read_to_string(&l).unwrap(), "# label pehe\npair_run 0.7\n");
    }
}
