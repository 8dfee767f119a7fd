//! Observational datasets and their on-disk form.
//!
//! CSV layout: a commented header line `# x0,…,x{d−1},t,y[,mu0,…,mu{K−1}]`
//! followed by one row per unit. Reals are written with 17 significant
//! digits, so a write/read cycle is bit-exact. Provenance goes to a JSON
//! sidecar next to the CSV.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub params: serde_json::Value,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn loaded(path: &Path) -> Self {
        Self {
            generator: "file".into(),
            seed: 0,
            params: serde_json::json!({ "path": path.display().to_string() }),
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub t: Vec<usize>,
    pub y: Vec<f64>,
    /// True potential-outcome means, `n × K`, when known.
    pub truth: Option<Matrix>,
    /// Generator propensities `P(T = t | x)`, `n × K`, when known. Not serialized.
    pub propensity: Option<Matrix>,
    pub k: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDiagnostics {
    pub counts: Vec<usize>,
    pub min_count: usize,
    /// Set when any arm has fewer than two units.
    pub overlap_flag: bool,
    pub empirical_propensity: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, t: Vec<usize>, y: Vec<f64>, truth: Option<Matrix>, k: usize, provenance: Provenance) -> Result<Self> {
        let ds = Self {
            x,
            t,
            y,
            truth,
            propensity: None,
            k,
            provenance,
        };
        ds.check_shapes()?;
        Ok(ds)
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.x.rows();
        if self.t.len() != n || self.y.len() != n {
            return Err(Error::shape(
                "Dataset",
                format!("{n} treatments and outcomes"),
                format!("{} treatments, {} outcomes", self.t.len(), self.y.len()),
            ));
        }
        if let Some(&bad) = self.t.iter().find(|&&a| a >= self.k) {
            return Err(Error::InvalidArgument(format!("treatment {bad} outside [0, {})", self.k)));
        }
        if let Some(truth) = &self.truth {
            if truth.shape() != (n, self.k) {
                return Err(Error::shape("Dataset truth", format!("({n}, {})", self.k), format!("{:?}", truth.shape())));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn arm_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &a in &self.t {
            c[a] += 1;
        }
        c
    }

    pub fn arm_indices(&self) -> Vec<Vec<usize>> {
        let mut idx = vec![Vec::new(); self.k];
        for (i, &a) in self.t.iter().enumerate() {
            idx[a].push(i);
        }
        idx
    }

    /// Rows `idx` (repeats allowed), keeping provenance.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            truth: self.truth.as_ref().map(|m| m.select_rows(idx)),
            propensity: self.propensity.as_ref().map(|m| m.select_rows(idx)),
            k: self.k,
            provenance: self.provenance.clone(),
        }
    }

    /// Observed outcome minus the true mean of the received arm.
    pub fn noise_draws(&self) -> Option<Vec<f64>> {
        let truth = self.truth.as_ref()?;
        Some((0..self.n()).map(|i| self.y[i] - truth.get(i, self.t[i])).collect())
    }

    /// Errors with [`Error::Overlap`] when an arm has fewer than `needed` units.
    pub fn require_overlap(&self, needed: usize) -> Result<()> {
        for (arm, &count) in self.arm_counts().iter().enumerate() {
            if count < needed {
                return Err(Error::Overlap { arm, count, needed });
            }
        }
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (0..self.d()).map(|j| format!("x{j}")).collect();
        h.push("t".into());
        h.push("y".into());
        if self.truth.is_some() {
            h.extend((0..self.k).map(|t| format!("mu{t}")));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {}", self.header().join(","))?;
        let mut line = String::new();
        for i in 0..self.n() {
            line.clear();
            for v in self.x.row(i) {
                line.push_str(&fmt_real(*v));
                line.push(',');
            }
            line.push_str(&self.t[i].to_string());
            line.push(',');
            line.push_str(&fmt_real(self.y[i]));
            if let Some(truth) = &self.truth {
                for v in truth.row(i) {
                    line.push(',');
                    line.push_str(&fmt_real(*v));
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Writes `path` and the provenance sidecar, returning both paths.
    pub fn save(&self, path: &Path) -> Result<(PathBuf, PathBuf)> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf)?;
        let side = provenance_path(path);
        let json = serde_json::to_string_pretty(&self.provenance).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&side, json)?;
        Ok((path.to_path_buf(), side))
    }

    /// Reads a CSV written by [`Dataset::write_csv`]. `K` is taken from the
    /// `mu*` column count, or from the largest treatment index otherwise.
    pub fn load(path: &Path) -> Result<Dataset> {
        let file = fs::File::open(path)?;
        let mut ds = Self::read_csv(BufReader::new(file), Provenance::loaded(path))?;
        let side = provenance_path(path);
        if side.exists() {
            let text = fs::read_to_string(&side)?;
            ds.provenance = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
        }
        Ok(ds)
    }

    pub fn read_csv<R: BufRead>(reader: R, provenance: Provenance) -> Result<Dataset> {
        let mut lines = reader.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if let Some(h) = line.strip_prefix('#') {
                        break h.trim().to_string();
                    }
                    if !line.trim().is_empty() {
                        return Err(Error::Format("dataset CSV must start with a '# x0,...' header".into()));
                    }
                }
                None => return Err(Error::Format("empty dataset file".into())),
            }
        };
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let t_col = cols
            .iter()
            .position(|c| *c == "t")
            .ok_or_else(|| Error::Format("header has no 't' column".into()))?;
        if cols.get(t_col + 1) != Some(&"y") {
            return Err(Error::Format("header must have 'y' right after 't'".into()));
        }
        let d = t_col;
        let k_truth = cols.len() - t_col - 2;
        let mut x = Vec::new();
        let mut t = Vec::new();
        let mut y = Vec::new();
        let mut truth = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Format(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    cols.len(),
                    fields.len()
                )));
            }
            let real = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: '{s}': {e}", lineno + 2)))
            };
            for f in &fields[..d] {
                x.push(real(f)?);
            }
            t.push(
                fields[t_col]
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Format(format!("line {}: treatment: {e}", lineno + 2)))?,
            );
            y.push(real(fields[t_col + 1])?);
            for f in &fields[t_col + 2..] {
                truth.push(real(f)?);
            }
        }
        let n = t.len();
        let k = if k_truth > 0 {
            k_truth
        } else {
            t.iter().max().map_or(0, |m| m + 1)
        };
        let truth = (k_truth > 0).then(|| Matrix::from_vec(n, k, truth)).transpose()?;
        Dataset::new(Matrix::from_vec(n, d, x)?, t, y, truth, k, provenance)
    }
}

pub fn provenance_path(csv: &Path) -> PathBuf {
    let mut p = csv.as_os_str().to_owned();
    p.push(".provenance.json");
    PathBuf::from(p)
}

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn validate_dataset(ds: &Dataset) -> DatasetDiagnostics {
    let counts = ds.arm_counts();
    let n = ds.n().max(1) as f64;
    DatasetDiagnostics {
        min_count: counts.iter().copied().min().unwrap_or(0),
        overlap_flag: counts.iter().any(|&c| c < 2),
        empirical_propensity: counts.iter().map(|&c| c as f64 / n).collect(),
        counts,
    }
}
