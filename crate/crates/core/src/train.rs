//! Minibatch training of `argmin_θ ε̂_F(θ) + α·R̂_S(θ)` with Adam.

use serde::{Deserialize, Serialize};

use crate::balancing::{GeodesicGraph, StrategySpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::math::matrix::sq_dist;
use crate::math::{adam_step, AdamState, Matrix, ParamVector, RngStream, Stopwatch};
use crate::model::{imbalance, objective, Architecture, Batch, HeadMode, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub d_z: usize,
    pub phi_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    /// `None` picks [`HeadMode::default_for`].
    pub head_mode: Option<HeadMode>,
    pub embedding_dim: usize,
    pub balance_subsample: usize,
    /// Decoupled weight decay on the network parameters, applied after each
    /// Adam step (`θ ← θ − lr·wd·θ`); the embedding table is exempt. 0
    /// disables it.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            d_z: 16,
            phi_hidden: vec![64, 64],
            head_hidden: vec![32],
            head_mode: None,
            embedding_dim: 8,
            balance_subsample: 512,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, k: usize, min_arm_batch: usize) -> Result<()> {
        if self.batch_size == 0 || self.d_z == 0 || self.balance_subsample < 2 {
            return Err(Error::InvalidArgument(
                "batch_size, d_z must be >= 1 and balance_subsample >= 2".into(),
            ));
        }
        if self.phi_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size < k * min_arm_batch {
            return Err(Error::InvalidArgument(format!(
                "batch_size {} below K * min_arm_batch = {}",
                self.batch_size,
                k * min_arm_batch
            )));
        }
        Ok(())
    }

    pub fn architecture(&self, ds: &Dataset, spec: &StrategySpec) -> Architecture {
        Architecture {
            input_dim: ds.d(),
            k: ds.k,
            d_z: self.d_z,
            phi_hidden: self.phi_hidden.clone(),
            head_hidden: self.head_hidden.clone(),
            head_mode: self.head_mode.unwrap_or_else(|| HeadMode::default_for(ds.k, spec.kind)),
            embedding_dim: self.embedding_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean factual loss over the epoch's minibatches.
    pub factual: f64,
    /// Imbalance on a balance subsample at the end of the epoch.
    pub imbalance: f64,
    /// Mean objective over the epoch's minibatches.
    pub objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: ModelParams,
    pub trace: TrainTrace,
    /// The strategy with kernel bandwidths frozen at initialization.
    pub spec: StrategySpec,
}

/// Stratified subsample of `size` rows: each arm keeps its share of `size`
/// (at least `min_per_arm`, at most its count), drawn without replacement.
pub fn stratified_subsample(t: &[usize], k: usize, size: usize, min_per_arm: usize, rng: &mut RngStream) -> Vec<usize> {
    let n = t.len();
    if size >= n {
        return (0..n).collect();
    }
    let mut arms = vec![Vec::new(); k];
    for (i, &a) in t.iter().enumerate() {
        arms[a].push(i);
    }
    let mut out = Vec::with_capacity(size + k * min_per_arm);
    for rows in &arms {
        let share = ((size as f64) * rows.len() as f64 / n as f64).round() as usize;
        let take = share.max(min_per_arm).min(rows.len());
        for j in rng.sample_without_replacement(rows.len(), take) {
            out.push(rows[j]);
        }
    }
    out.sort_unstable();
    out
}

/// Cycles through each arm's rows in reshuffled passes.
struct ArmCycler {
    rows: Vec<Vec<usize>>,
    pos: Vec<usize>,
}

impl ArmCycler {
    fn new(ds: &Dataset, rng: &mut RngStream) -> Self {
        let mut rows = ds.arm_indices();
        for r in &mut rows {
            rng.shuffle(r);
        }
        let pos = vec![0; rows.len()];
        Self { rows, pos }
    }

    fn take(&mut self, arm: usize, count: usize, rng: &mut RngStream, out: &mut Vec<usize>) {
        let rows = &mut self.rows[arm];
        let count = count.min(rows.len());
        for _ in 0..count {
            if self.pos[arm] == rows.len() {
                rng.shuffle(rows);
                self.pos[arm] = 0;
            }
            out.push(rows[self.pos[arm]]);
            self.pos[arm] += 1;
        }
    }
}

/// Freezes median bandwidths: the representation kernel on `Φ₀` of a
/// subsample, the embedding kernel on the table rows.
fn freeze_kernels(spec: &StrategySpec, theta: &ModelParams, x: &Matrix) -> Result<StrategySpec> {
    let z0 = theta.represent(x)?;
    Ok(StrategySpec {
        kernel: spec.kernel.frozen_on(&z0)?,
        embed_kernel: spec.embed_kernel.frozen_on(&theta.table)?,
        ..*spec
    })
}

/// Trains `θ̂(α, S)`. Deterministic given `cfg.seed`.
pub fn train(
    ds: &Dataset,
    alpha: f64,
    spec: &StrategySpec,
    cfg: &TrainConfig,
    graph: Option<&GeodesicGraph>,
) -> Result<TrainResult> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    spec.validate()?;
    ds.require_overlap(2)?;
    cfg.validate(ds.k, spec.min_arm_batch)?;
    let root = RngStream::new(cfg.seed);
    let mut theta = ModelParams::init(&cfg.architecture(ds, spec), &mut root.derive(1))?;
    let mut sub_rng = root.derive(2);
    let n = ds.n();
    let sub_size = cfg.balance_subsample.min(n);
    let probe = stratified_subsample(&ds.t, ds.k, sub_size, spec.min_arm_batch, &mut sub_rng);
    let spec = freeze_kernels(spec, &theta, &ds.x.select_rows(&probe))?;

    let mut params = theta.flatten();
    // the table is stored last
    let net_params = params.len() - theta.table.as_slice().len();
    let mut adam = AdamState::new(params.len(), cfg.learning_rate);
    let mut batch_rng = root.derive(3);
    let mut cycler = ArmCycler::new(ds, &mut batch_rng);
    let steps = n.div_ceil(cfg.batch_size);
    let per_arm = cfg.batch_size.div_ceil(ds.k);
    let mut trace = TrainTrace::default();
    let mut fit_idx = Vec::with_capacity(per_arm * ds.k);
    for epoch in 0..cfg.epochs {
        let clock = Stopwatch::start();
        let (mut fsum, mut osum) = (0.0, 0.0);
        let mut bal_idx = Vec::new();
        for _ in 0..steps {
            fit_idx.clear();
            for arm in 0..ds.k {
                cycler.take(arm, per_arm, &mut batch_rng, &mut fit_idx);
            }
            let fx = ds.x.select_rows(&fit_idx);
            let ft: Vec<usize> = fit_idx.iter().map(|&i| ds.t[i]).collect();
            let fy: Vec<f64> = fit_idx.iter().map(|&i| ds.y[i]).collect();
            bal_idx = stratified_subsample(&ds.t, ds.k, sub_size, spec.min_arm_batch, &mut sub_rng);
            let bx = ds.x.select_rows(&bal_idx);
            let bt: Vec<usize> = bal_idx.iter().map(|&i| ds.t[i]).collect();
            let obj = objective(&theta, Batch::new(&fx, &ft, &fy)?, Some((&bx, &bt)), alpha, &spec, graph, true)?;
            if !obj.value.is_finite() {
                return Err(Error::Numeric(format!("objective diverged at epoch {epoch}")));
            }
            fsum += obj.factual;
            osum += obj.value;
            let grad = obj.grad.expect("gradient requested").flatten();
            adam_step(&mut params, &grad, &mut adam)?;
            if cfg.weight_decay > 0.0 {
                let shrink = 1.0 - cfg.learning_rate * cfg.weight_decay;
                params[..net_params].iter_mut().for_each(|p| *p *= shrink);
            }
            theta.unflatten(&params);
        }
        let bt: Vec<usize> = bal_idx.iter().map(|&i| ds.t[i]).collect();
        let imb = imbalance(&theta, &spec, &ds.x.select_rows(&bal_idx), &bt)?;
        trace.epochs.push(EpochRecord {
            epoch,
            factual: fsum / steps as f64,
            imbalance: imb,
            objective: osum / steps as f64,
            seconds: clock.elapsed_secs(),
        });
    }
    Ok(TrainResult { model: theta, trace, spec })
}

/// Largest ratio `‖Φ(x_i) − Φ(x_j)‖ / ‖x_i − x_j‖` over up to `pair_budget`
/// random pairs of distinct rows.
pub fn lipschitz_estimate(theta: &ModelParams, x: &Matrix, pair_budget: usize, rng: &mut RngStream) -> Result<f64> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientData {
            context: "lipschitz_estimate",
            needed: 2,
            got: n,
        });
    }
    let z = theta.represent(x)?;
    let ratio = |i: usize, j: usize| {
        let dx = sq_dist(x.row(i), x.row(j));
        (dx > 0.0).then(|| (sq_dist(z.row(i), z.row(j)) / dx).sqrt())
    };
    let mut best: Option<f64> = None;
    let all_pairs = n * (n - 1) / 2;
    if all_pairs <= pair_budget {
        for i in 0..n {
            for j in i + 1..n {
                if let Some(r) = ratio(i, j) {
                    best = Some(best.map_or(r, |b: f64| b.max(r)));
                }
            }
        }
    } else {
        for _ in 0..pair_budget {
            let i = rng.below(n);
            let j = (i + 1 + rng.below(n - 1)) % n;
            if let Some(r) = ratio(i, j) {
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
    }
    best.ok_or_else(|| Error::Degenerate("no pair of distinct rows to estimate a Lipschitz constant".into()))
}
