//! Seeded synthetic generators with known potential-outcome means.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::balancing::GeodesicGraph;
use crate::dataset::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::math::{Matrix, RngStream};

/// `P(T = k | x) ∝ exp(κ · w_kᵀ x)`, computed with max-subtraction.
pub fn softmax_propensity(w: &Matrix, x: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if w.cols() != x.len() {
        return Err(Error::shape("softmax_propensity", w.cols(), x.len()));
    }
    if !(kappa >= 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be >= 0, got {kappa}")));
    }
    let logits: Vec<f64> = w.row_iter().map(|row| kappa * crate::math::matrix::dot(row, x)).collect();
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("non-finite propensity logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `μ_t(x) = sin(2x₁) + x₃² + 0.5 (t+1) (x_{1:5}ᵀ β)` for `t = 0..K`.
pub fn true_means_hard(x: &[f64], beta: &[f64; 5], k: usize) -> Result<Vec<f64>> {
    if x.len() < 5 {
        return Err(Error::InvalidArgument(format!("hard-setting outcome needs d >= 5, got {}", x.len())));
    }
    let base = (2.0 * x[0]).sin() + x[2] * x[2];
    let slope: f64 = x[..5].iter().zip(beta).map(|(a, b)| a * b).sum();
    Ok((0..k).map(|t| base + 0.5 * (t as f64 + 1.0) * slope).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenHardParams {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub kappa: f64,
    /// Variance of the additive outcome noise.
    pub noise_variance: f64,
    pub seed: u64,
}

impl Default for GenHardParams {
    fn default() -> Self {
        Self {
            n: 1500,
            d: 20,
            k: 4,
            kappa: 5.0,
            noise_variance: 0.1,
            seed: 0,
        }
    }
}

/// Population-level draws of the hard setting: projection vectors `w_k` and
/// effect coefficients `β`. Fixing the design and redrawing samples isolates
/// sampling noise from design noise.
#[derive(Debug, Clone, PartialEq)]
pub struct HardDesign {
    pub w: Matrix,
    pub beta: [f64; 5],
    pub kappa: f64,
    pub noise_variance: f64,
}

impl HardDesign {
    pub fn draw(d: usize, k: usize, kappa: f64, noise_variance: f64, rng: &mut RngStream) -> Result<Self> {
        if d < 5 {
            return Err(Error::InvalidArgument(format!("hard setting needs d >= 5, got {d}")));
        }
        if k < 2 {
            return Err(Error::InvalidArgument(format!("need K >= 2, got {k}")));
        }
        if !(kappa >= 0.0) || !(noise_variance >= 0.0) {
            return Err(Error::InvalidArgument("kappa and noise variance must be >= 0".into()));
        }
        let w = Matrix::from_vec(k, d, (0..k * d).map(|_| rng.uniform_range(-1.0, 1.0)).collect())?;
        let mut beta = [0.0; 5];
        beta.iter_mut().for_each(|b| *b = rng.normal());
        Ok(Self {
            w,
            beta,
            kappa,
            noise_variance,
        })
    }

    pub fn k(&self) -> usize {
        self.w.rows()
    }

    /// Draws `n` units. Treatments come from `t_rng`, everything else from
    /// `rng`, so treatments can be redrawn without touching covariates.
    pub fn sample(&self, n: usize, rng: &mut RngStream, t_rng: &mut RngStream) -> Result<Dataset> {
        let (d, k) = (self.w.cols(), self.k());
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect())?;
        let noise: Vec<f64> = (0..n).map(|_| rng.normal() * self.noise_variance.sqrt()).collect();
        let mut truth = Matrix::zeros(n, k);
        let mut prop = Matrix::zeros(n, k);
        for i in 0..n {
            truth.row_mut(i).copy_from_slice(&true_means_hard(x.row(i), &self.beta, k)?);
            prop.row_mut(i).copy_from_slice(&softmax_propensity(&self.w, x.row(i), self.kappa)?);
        }
        let t: Vec<usize> = (0..n).map(|i| t_rng.categorical(prop.row(i))).collect();
        let y = (0..n).map(|i| truth.get(i, t[i]) + noise[i]).collect();
        let mut ds = Dataset::new(
            x,
            t,
            y,
            Some(truth),
            k,
            Provenance {
                generator: "hard".into(),
                seed: 0,
                params: serde_json::Value::Null,
                notes: vec![],
            },
        )?;
        ds.propensity = Some(prop);
        Ok(ds)
    }
}

/// Draws treatments, retrying once with a derived stream if an arm is empty.
fn sample_with_overlap_retry(draw: impl Fn(&mut RngStream) -> Result<Dataset>, rng: &RngStream) -> Result<Dataset> {
    let first = draw(&mut rng.derive(3))?;
    if first.arm_counts().iter().all(|&c| c > 0) {
        return Ok(first);
    }
    let second = draw(&mut rng.derive(4))?;
    match second.arm_counts().iter().position(|&c| c == 0) {
        None => Ok(second),
        Some(arm) => Err(Error::Overlap {
            arm,
            count: 0,
            needed: 1,
        }),
    }
}

/// The confounded hard setting: `X ~ N(0, I_d)`, softmax treatment
/// assignment, nonlinear outcome with treatment-scaled heterogeneity.
/// The noise parameter is a variance (`ε ~ N(0, 0.1)` gives sd ≈ 0.316).
pub fn gen_hard(params: &GenHardParams) -> Result<Dataset> {
    let root = RngStream::new(params.seed);
    let design = HardDesign::draw(params.d, params.k, params.kappa, params.noise_variance, &mut root.derive(1))?;
    let mut ds = sample_with_overlap_retry(|t_rng| design.sample(params.n, &mut root.derive(2), t_rng), &root)?;
    ds.provenance = Provenance {
        generator: "hard".into(),
        seed: params.seed,
        params: serde_json::to_value(params).expect("params serialize"),
        notes: vec!["noise_variance is the variance of the Gaussian outcome noise (sd = sqrt(noise_variance))".into()],
    };
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenDoseParams {
    pub n: usize,
    pub k: usize,
    pub kappa: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for GenDoseParams {
    fn default() -> Self {
        Self {
            n: 1797,
            k: 10,
            kappa: 2.0,
            noise_sd: 0.1f64.sqrt(),
            seed: 0,
        }
    }
}

pub const DOSE_COVARIATES: usize = 8;

/// Baseline of the dose-response law, `sin(2x₁) + 0.5 x₂²`.
pub fn dose_baseline(x: &[f64]) -> f64 {
    (2.0 * x[0]).sin() + 0.5 * x[1] * x[1]
}

/// `μ_t(x) = f(x) + (t − 4)²`.
pub fn dose_means(x: &[f64], k: usize) -> Vec<f64> {
    let f = dose_baseline(x);
    (0..k).map(|t| f + (t as f64 - 4.0).powi(2)).collect()
}

/// Tabular dose-response data: `X ~ N(0, I₈)`, softmax assignment with
/// `κ = 2`, outcome `f(X) + (t − 4)² + ε`.
pub fn gen_dose(params: &GenDoseParams) -> Result<Dataset> {
    let root = RngStream::new(params.seed);
    let (n, k, d) = (params.n, params.k, DOSE_COVARIATES);
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need K >= 2, got {k}")));
    }
    let mut design_rng = root.derive(1);
    let w = Matrix::from_vec(k, d, (0..k * d).map(|_| design_rng.uniform_range(-1.0, 1.0)).collect())?;
    let draw = |t_rng: &mut RngStream| -> Result<Dataset> {
        let mut rng = root.derive(2);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect())?;
        let noise: Vec<f64> = (0..n).map(|_| rng.normal() * params.noise_sd).collect();
        let mut truth = Matrix::zeros(n, k);
        let mut prop = Matrix::zeros(n, k);
        for i in 0..n {
            truth.row_mut(i).copy_from_slice(&dose_means(x.row(i), k));
            prop.row_mut(i).copy_from_slice(&softmax_propensity(&w, x.row(i), params.kappa)?);
        }
        let t: Vec<usize> = (0..n).map(|i| t_rng.categorical(prop.row(i))).collect();
        let y = (0..n).map(|i| truth.get(i, t[i]) + noise[i]).collect();
        let mut ds = Dataset::new(x, t, y, Some(truth), k, provenance_dose(params))?;
        ds.propensity = Some(prop);
        Ok(ds)
    };
    sample_with_overlap_retry(draw, &root)
}

fn provenance_dose(params: &GenDoseParams) -> Provenance {
    Provenance {
        generator: "dose".into(),
        seed: params.seed,
        params: serde_json::to_value(params).expect("params serialize"),
        notes: vec!["f(x) = sin(2 x0) + 0.5 x1^2 on 8 standard-normal covariates".into()],
    }
}

/// Dose-response outcomes on real features (e.g. 64 pixel columns plus a
/// label column named `label`). Features are standardized and `f` is applied
/// to the first two non-constant standardized columns; the label is the
/// treatment.
pub fn dose_from_feature_csv(path: &Path, noise_sd: f64, seed: u64) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let Ok(values) = parsed else {
            if lineno == 0 {
                continue; // header
            }
            return Err(Error::Format(format!("line {}: non-numeric field", lineno + 1)));
        };
        let (label, feats) = values.split_last().ok_or_else(|| Error::Format("empty row".into()))?;
        if *label < 0.0 || label.fract() != 0.0 {
            return Err(Error::Format(format!("line {}: label must be a non-negative integer", lineno + 1)));
        }
        labels.push(*label as usize);
        rows.push(feats.to_vec());
    }
    let n = rows.len();
    let mut x = Matrix::from_rows(&rows)?;
    let means = x.column_means();
    let d = x.cols();
    let mut sds = vec![0.0; d];
    for row in x.row_iter() {
        for (j, v) in row.iter().enumerate() {
            sds[j] += (v - means[j]).powi(2);
        }
    }
    sds.iter_mut().for_each(|s| *s = (*s / n.max(1) as f64).sqrt());
    for i in 0..n {
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            *v = if sds[j] > 0.0 { (*v - means[j]) / sds[j] } else { 0.0 };
        }
    }
    let active: Vec<usize> = (0..d).filter(|&j| sds[j] > 0.0).take(2).collect();
    if active.len() < 2 {
        return Err(Error::Degenerate("need at least two non-constant feature columns".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let mut rng = RngStream::new(seed).derive(2);
    let mut truth = Matrix::zeros(n, k);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let pair = [x.get(i, active[0]), x.get(i, active[1])];
        truth.row_mut(i).copy_from_slice(&dose_means(&pair, k));
        y.push(truth.get(i, labels[i]) + noise_sd * rng.normal());
    }
    Dataset::new(
        x,
        labels,
        y,
        Some(truth),
        k,
        Provenance {
            generator: "dose-features".into(),
            seed,
            params: serde_json::json!({ "path": path.display().to_string(), "noise_sd": noise_sd, "f_columns": active }),
            notes: vec!["features standardized; f applied to the first two non-constant columns".into()],
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopologyKind {
    Tree,
    Cycle,
}

impl std::str::FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(TopologyKind::Tree),
            "cycle" => Ok(TopologyKind::Cycle),
            other => Err(Error::InvalidArgument(format!("unknown topology '{other}' (tree|cycle)"))),
        }
    }
}

/// Node effects of the depth-3 binary tree in heap order:
/// root, L, R, LL, LR, RL, RR.
pub const TREE_EFFECTS: [f64; 7] = [0.0, -2.0, 2.0, -3.0, -1.0, 1.0, 3.0];
pub const TREE_LL: usize = 3;
pub const TREE_RR: usize = 6;
pub const CYCLE_NODES: usize = 8;
pub const TOPOLOGY_COVARIATES: usize = 4;

pub fn topology_effects(kind: TopologyKind) -> Vec<f64> {
    match kind {
        TopologyKind::Tree => TREE_EFFECTS.to_vec(),
        TopologyKind::Cycle => (0..CYCLE_NODES)
            .map(|t| (2.0 * PI * t as f64 / CYCLE_NODES as f64).cos())
            .collect(),
    }
}

pub fn topology_graph(kind: TopologyKind) -> Result<GeodesicGraph> {
    match kind {
        TopologyKind::Tree => GeodesicGraph::binary_tree(3),
        TopologyKind::Cycle => GeodesicGraph::cycle(CYCLE_NODES),
    }
}

/// Treatments on a known topology with uniform assignment:
/// `μ_t(x) = effect_t + 0.3 sin(x₁)`, `X ~ N(0, I₄)`.
pub fn gen_topology(kind: TopologyKind, n: usize, noise_sd: f64, seed: u64) -> Result<(Dataset, GeodesicGraph)> {
    let graph = topology_graph(kind)?;
    let effects = topology_effects(kind);
    let k = effects.len();
    let root = RngStream::new(seed);
    let d = TOPOLOGY_COVARIATES;
    let mut rng = root.derive(2);
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect())?;
    let noise: Vec<f64> = (0..n).map(|_| rng.normal() * noise_sd).collect();
    let mut t_rng = root.derive(3);
    let t: Vec<usize> = (0..n).map(|_| t_rng.below(k)).collect();
    let mut truth = Matrix::zeros(n, k);
    for i in 0..n {
        let f = 0.3 * x.get(i, 0).sin();
        for (tt, e) in effects.iter().enumerate() {
            truth.set(i, tt, e + f);
        }
    }
    let y = (0..n).map(|i| truth.get(i, t[i]) + noise[i]).collect();
    let name = match kind {
        TopologyKind::Tree => "tree",
        TopologyKind::Cycle => "cycle",
    };
    let mut ds = Dataset::new(
        x,
        t,
        y,
        Some(truth),
        k,
        Provenance {
            generator: name.into(),
            seed,
            params: serde_json::json!({ "n": n, "noise_sd": noise_sd }),
            notes: match kind {
                TopologyKind::Tree => vec!["tree effects root,L,R,LL,LR,RL,RR = 0,-2,2,-3,-1,1,3".into()],
                TopologyKind::Cycle => vec!["cycle effects cos(2*pi*t/8)".into()],
            },
        },
    )?;
    ds.propensity = Some(Matrix::filled(n, k, 1.0 / k as f64));
    Ok((ds, graph))
}
