//! Counterfactual evaluation and the estimator-level experiments.

use serde::{Deserialize, Serialize};

use crate::balancing::{strategy_penalty, StrategyKind, StrategySpec};
use crate::datagen::{gen_hard, GenHardParams, HardDesign};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::math::eigen::pca_project;
use crate::math::matrix::sq_dist;
use crate::math::{mean, median, std_dev, Activation, Matrix, MlpParams, RngStream, Stopwatch};
use crate::model::{predict_means, ModelParams};
use crate::parallel::parallel_map;
use crate::train::{stratified_subsample, train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeheReport {
    /// Sum over treatment pairs of the mean squared ITE error.
    pub pehe: f64,
    /// Root of the per-pair average, `sqrt(pehe / (K(K−1)/2))`; the single
    /// headline number.
    pub sqrt_pehe: f64,
    /// Entry `(j, k)`, `j < k`, holds that pair's mean squared error.
    pub per_pair: Matrix,
}

pub fn pehe_from_means(means: &Matrix, truth: &Matrix) -> Result<PeheReport> {
    if means.shape() != truth.shape() {
        return Err(Error::shape(
            "pehe",
            format!("{:?}", truth.shape()),
            format!("{:?}", means.shape()),
        ));
    }
    let (n, k) = means.shape();
    if n == 0 {
        return Err(Error::InsufficientData {
            context: "pehe",
            needed: 1,
            got: 0,
        });
    }
    let mut per_pair = Matrix::zeros(k, k);
    for j in 0..k {
        for l in j + 1..k {
            let mut acc = 0.0;
            for i in 0..n {
                let est = means.get(i, j) - means.get(i, l);
                let tru = truth.get(i, j) - truth.get(i, l);
                acc += (est - tru) * (est - tru);
            }
            per_pair.set(j, l, acc / n as f64);
        }
    }
    let pehe = per_pair.sum();
    let pairs = (k * k.saturating_sub(1) / 2).max(1);
    Ok(PeheReport {
        pehe,
        sqrt_pehe: (pehe / pairs as f64).sqrt(),
        per_pair,
    })
}

/// Multi-treatment PEHE with signed effects `τ̂_{j,k} = m̂_j − m̂_k`.
pub fn pehe(theta: &ModelParams, ds: &Dataset) -> Result<PeheReport> {
    let truth = ds
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("PEHE needs a dataset with true potential-outcome means".into()))?;
    pehe_from_means(&predict_means(theta, &ds.x)?, truth)
}

/// Average predicted outcome of each treatment over the dataset's rows.
pub fn adrf(theta: &ModelParams, ds: &Dataset) -> Result<Vec<f64>> {
    Ok(predict_means(theta, &ds.x)?.column_means())
}

/// Mean predicted outcome along the segment `(1 − λ)e_a + λe_b` between two
/// treatment embeddings, at `steps + 1` evenly spaced `λ`.
pub fn interpolate_effect(theta: &ModelParams, t_a: usize, t_b: usize, steps: usize, ds: &Dataset) -> Result<Vec<(f64, f64)>> {
    let k = theta.k();
    if t_a >= k || t_b >= k {
        return Err(Error::InvalidArgument(format!("treatments ({t_a}, {t_b}) outside [0, {k})")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("interpolation needs steps >= 1".into()));
    }
    let z = theta.represent(&ds.x)?;
    let (ea, eb) = (theta.table.row(t_a), theta.table.row(t_b));
    (0..=steps)
        .map(|s| {
            let lambda = s as f64 / steps as f64;
            let e: Vec<f64> = ea.iter().zip(eb).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
            Ok((lambda, theta.mean_at_embedding(&z, &e)?))
        })
        .collect()
}

/// Rows of `table` projected on their top two principal directions.
pub fn embedding_plane(table: &Matrix) -> Result<Matrix> {
    if table.cols() < 2 {
        return Err(Error::InvalidArgument(format!("embedding plane needs width >= 2, got {}", table.cols())));
    }
    pca_project(table, 2)
}

/// Whether sorting 2-d points by angle around their centroid visits the
/// rows in cyclic order `0, 1, …, K−1`, up to rotation and reflection.
pub fn cyclic_order_matches(points: &Matrix) -> Result<bool> {
    let k = points.rows();
    if k < 3 || points.cols() != 2 {
        return Err(Error::InvalidArgument(format!(
            "cyclic order needs >= 3 points in the plane, got {}x{}",
            k,
            points.cols()
        )));
    }
    let c = points.column_means();
    let mut order: Vec<(f64, usize)> = (0..k)
        .map(|i| ((points.get(i, 1) - c[1]).atan2(points.get(i, 0) - c[0]), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let seq: Vec<usize> = order.into_iter().map(|(_, i)| i).collect();
    let start = seq.iter().position(|&i| i == 0).expect("row 0 present");
    let forward = (0..k).all(|j| seq[(start + j) % k] == j);
    let backward = (0..k).all(|j| seq[(start + k - j) % k] == j);
    Ok(forward || backward)
}

/// The `m` rows closest to row `node` in Euclidean distance, nearest first.
pub fn nearest_rows(table: &Matrix, node: usize, m: usize) -> Result<Vec<usize>> {
    if node >= table.rows() {
        return Err(Error::InvalidArgument(format!("row {node} outside table of {} rows", table.rows())));
    }
    let mut d: Vec<(f64, usize)> = (0..table.rows())
        .filter(|&j| j != node)
        .map(|j| (sq_dist(table.row(node), table.row(j)), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(d.into_iter().take(m).map(|(_, j)| j).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConfig {
    pub k_list: Vec<usize>,
    pub n: usize,
    pub reps: usize,
    pub strategies: Vec<StrategyKind>,
    pub seed: u64,
    /// Confounding strength of the hard-setting design used for the draws;
    /// 0 samples at the balanced point.
    pub kappa: f64,
    pub d: usize,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            k_list: vec![4, 16],
            n: 500,
            reps: 50,
            strategies: StrategyKind::ALL.to_vec(),
            seed: 0,
            kappa: 0.0,
            d: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub strategy: StrategyKind,
    pub k: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationTable {
    pub n: usize,
    pub reps: usize,
    pub rows: Vec<ConcentrationRow>,
}

impl ConcentrationTable {
    pub fn sd(&self, strategy: StrategyKind, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.strategy == strategy && r.k == k).map(|r| r.sd)
    }
}

/// `k` treatments evenly spaced on the unit circle in the first two of `dim`
/// coordinates. The geometry stays the same as `k` grows.
pub fn circle_table(k: usize, dim: usize) -> Result<Matrix> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("circle table needs dim >= 2, got {dim}")));
    }
    let mut table = Matrix::zeros(k, dim);
    for a in 0..k {
        let theta = std::f64::consts::TAU * a as f64 / k as f64;
        table.set(a, 0, theta.cos());
        table.set(a, 1, theta.sin());
    }
    Ok(table)
}

/// Spread of `R̂_S` across independent samples, seen through one frozen
/// random representation map so only estimator noise remains.
pub fn concentration_experiment(cfg: &ConcentrationConfig, workers: usize) -> Result<ConcentrationTable> {
    if cfg.reps < 20 {
        return Err(Error::InvalidArgument(format!("concentration needs reps >= 20, got {}", cfg.reps)));
    }
    let root = RngStream::new(cfg.seed);
    let phi = MlpParams::init(&[cfg.d, 64, 16], Activation::Relu, Activation::Identity, &mut root.derive(1))?;
    let mut rows = Vec::new();
    for &k in &cfg.k_list {
        let kroot = root.derive(100 + k as u64);
        let design = HardDesign::draw(cfg.d, k, cfg.kappa, 0.1, &mut kroot.derive(1))?;
        let table = circle_table(k, 8)?;
        let reference = design.sample(cfg.n, &mut kroot.derive(3), &mut kroot.derive(4))?;
        let kernel = KernelSpec::rbf_median().frozen_on(&phi.predict(&reference.x)?)?;
        let embed_kernel = KernelSpec::rbf_median().frozen_on(&table)?;
        let reps: Vec<usize> = (0..cfg.reps).collect();
        let values = parallel_map(&reps, workers, |_, &r| -> Result<Vec<f64>> {
            let rroot = kroot.derive(1000 + r as u64);
            let ds = design.sample(cfg.n, &mut rroot.derive(1), &mut rroot.derive(2))?;
            let z = phi.predict(&ds.x)?;
            cfg.strategies
                .iter()
                .map(|&kind| {
                    let spec = StrategySpec {
                        kernel,
                        embed_kernel,
                        ..StrategySpec::new(kind)
                    };
                    Ok(strategy_penalty(&spec, &z, &ds.t, &table, None, false)?.value)
                })
                .collect()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        for (s, &kind) in cfg.strategies.iter().enumerate() {
            let v: Vec<f64> = values.iter().map(|r| r[s]).collect();
            rows.push(ConcentrationRow {
                strategy: kind,
                k,
                mean: mean(&v),
                sd: std_dev(&v),
            });
        }
    }
    Ok(ConcentrationTable {
        n: cfg.n,
        reps: cfg.reps,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub k_list: Vec<usize>,
    pub strategies: Vec<StrategyKind>,
    pub n: usize,
    pub epochs: usize,
    /// Penalty evaluations timed per cell (median reported).
    pub penalty_evals: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            k_list: vec![4, 20],
            strategies: StrategyKind::ALL.to_vec(),
            n: 1500,
            epochs: 5,
            penalty_evals: 7,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub strategy: StrategyKind,
    pub k: usize,
    pub terms: usize,
    pub epoch_seconds: f64,
    pub penalty_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub n: usize,
    pub epochs: usize,
    /// Threads used while timing; cells run one after another.
    pub threads: usize,
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn row(&self, strategy: StrategyKind, k: usize) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.k == k)
    }
}

/// Wall-clock cost per training epoch and per penalty evaluation (value and
/// gradient on one balance subsample), medians over repeats. Cells run
/// sequentially on one thread.
pub fn timing_benchmark(cfg: &TimingConfig) -> Result<TimingTable> {
    if cfg.epochs == 0 || cfg.penalty_evals == 0 {
        return Err(Error::InvalidArgument("timing needs epochs >= 1 and penalty_evals >= 1".into()));
    }
    let mut rows = Vec::new();
    for &k in &cfg.k_list {
        let ds = gen_hard(&GenHardParams {
            n: cfg.n,
            k,
            seed: cfg.seed,
            ..GenHardParams::default()
        })?;
        for &kind in &cfg.strategies {
            let spec = StrategySpec::new(kind);
            let tcfg = TrainConfig {
                epochs: cfg.epochs,
                seed: cfg.seed,
                ..cfg.train.clone()
            };
            let fit = train(&ds, 1.0, &spec, &tcfg, None)?;
            let epoch_secs: Vec<f64> = fit.trace.epochs.iter().map(|e| e.seconds).collect();
            let mut rng = RngStream::new(cfg.seed).derive(9);
            let idx = stratified_subsample(&ds.t, k, tcfg.balance_subsample.min(ds.n()), spec.min_arm_batch, &mut rng);
            let z = fit.model.represent(&ds.x.select_rows(&idx))?;
            let t: Vec<usize> = idx.iter().map(|&i| ds.t[i]).collect();
            std::hint::black_box(strategy_penalty(&fit.spec, &z, &t, &fit.model.table, None, true)?);
            let mut evals = Vec::with_capacity(cfg.penalty_evals);
            for _ in 0..cfg.penalty_evals {
                let clock = Stopwatch::start();
                let v = strategy_penalty(&fit.spec, &z, &t, &fit.model.table, None, true)?;
                evals.push(clock.elapsed_secs());
                std::hint::black_box(v);
            }
            rows.push(TimingRow {
                strategy: kind,
                k,
                terms: kind.term_count(k),
                epoch_seconds: median(&epoch_secs),
                penalty_seconds: median(&evals),
            });
        }
    }
    Ok(TimingTable {
        n: cfg.n,
        epochs: cfg.epochs,
        threads: 1,
        rows,
    })
}
