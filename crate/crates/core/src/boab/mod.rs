//! Bound-optimized selection of the balancing weight: train on each grid
//! point, score `Q̂(α) = ε̂_F + α·R̂_S + Comp`, keep the argmin.

pub mod bootstrap;
pub mod complexity;
pub mod stub;

use serde::{Deserialize, Serialize};

use crate::balancing::{GeodesicGraph, StrategySpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::math::{RngStream, Stopwatch};
use crate::model::{factual_losses, imbalance, Batch};
use crate::parallel::parallel_map;
use crate::train::{lipschitz_estimate, train, TrainConfig, TrainResult};

pub use bootstrap::{bootstrap_alpha, bootstrap_alpha_with, AlphaEstimate};
pub use complexity::{complexity_term, confidence_term, ComplexityInputs, ComplexityMethod, ComplexitySpec};

/// Row pairs sampled for the Lipschitz estimate.
pub const LIPSCHITZ_PAIRS: usize = 2000;

pub const DEFAULT_GRID: [f64; 6] = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub alpha: f64,
    pub factual: f64,
    pub imbalance: f64,
    pub comp: f64,
    pub qhat: f64,
    pub lipschitz: f64,
    pub seconds: f64,
}

impl ProfilePoint {
    /// Builds a point with `qhat = factual + alpha·imbalance + comp`.
    pub fn new(alpha: f64, factual: f64, imbalance: f64, comp: f64, lipschitz: f64, seconds: f64) -> Self {
        Self {
            alpha,
            factual,
            imbalance,
            comp,
            qhat: factual + alpha * imbalance + comp,
            lipschitz,
            seconds,
        }
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    if grid.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha grid must be finite and >= 0: {grid:?}")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!("alpha grid must be strictly increasing: {grid:?}")));
    }
    Ok(())
}

/// Index of the smallest `qhat`; equal values go to the smaller `alpha`.
pub fn select_alpha(points: &[ProfilePoint]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no profile points".into()));
    }
    if let Some(p) = points.iter().find(|p| !p.qhat.is_finite()) {
        return Err(Error::Numeric(format!("profile bound at alpha={} is not finite", p.alpha)));
    }
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let b = &points[best];
        if p.qhat < b.qhat || (p.qhat == b.qhat && p.alpha < b.alpha) {
            best = i;
        }
    }
    Ok(best)
}

/// Trains `θ̂(α)` and scores it on the full dataset.
pub fn profile_point(
    ds: &Dataset,
    alpha: f64,
    spec: &StrategySpec,
    cfg: &TrainConfig,
    comp: &ComplexitySpec,
    graph: Option<&GeodesicGraph>,
) -> Result<(ProfilePoint, TrainResult)> {
    comp.validate()?;
    let clock = Stopwatch::start();
    let fit = train(ds, alpha, spec, cfg, graph)?;
    let losses = factual_losses(&fit.model, Batch::new(&ds.x, &ds.t, &ds.y)?)?;
    let factual = losses.iter().sum::<f64>() / losses.len() as f64;
    let loss_bound = losses.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let imb = imbalance(&fit.model, &fit.spec, &ds.x, &ds.t)?;
    let lipschitz = lipschitz_estimate(&fit.model, &ds.x, LIPSCHITZ_PAIRS, &mut RngStream::new(cfg.seed).derive(7))?;
    let c = complexity_term(
        comp,
        &ComplexityInputs {
            n: ds.n(),
            loss_bound,
            lipschitz: Some(lipschitz),
            losses: Some(&losses),
            mc_seed: RngStream::new(cfg.seed).derive(8).seed(),
        },
    )?;
    let point = ProfilePoint::new(alpha, factual, imb, c, lipschitz, clock.elapsed_secs());
    Ok((point, fit))
}

#[derive(Debug, Clone)]
pub struct BoabResult {
    pub alpha_hat: f64,
    pub index: usize,
    pub points: Vec<ProfilePoint>,
    /// Trained model of every grid point, in grid order.
    pub fits: Vec<TrainResult>,
}

impl BoabResult {
    pub fn selected(&self) -> &TrainResult {
        &self.fits[self.index]
    }
}

/// Runs the profile over `grid` (points trained concurrently on up to
/// `workers` threads) and returns the argmin with every trained model.
pub fn boab_search(
    ds: &Dataset,
    grid: &[f64],
    spec: &StrategySpec,
    cfg: &TrainConfig,
    comp: &ComplexitySpec,
    graph: Option<&GeodesicGraph>,
    workers: usize,
) -> Result<BoabResult> {
    validate_grid(grid)?;
    let runs = parallel_map(grid, workers, |_, &alpha| profile_point(ds, alpha, spec, cfg, comp, graph));
    let (points, fits): (Vec<_>, Vec<_>) = runs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let index = select_alpha(&points)?;
    Ok(BoabResult {
        alpha_hat: points[index].alpha,
        index,
        points,
        fits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEstimate {
    pub alpha: f64,
    /// `R̂_S(θ̂(α)) + ∂_α Comp`, the complexity slope by central difference.
    pub envelope: f64,
    /// Central difference of `Q̂` over the grid.
    pub central: f64,
}

/// Envelope and finite-difference estimates of `Q̂'(α)` at interior points.
pub fn profile_score(points: &[ProfilePoint]) -> Result<Vec<ScoreEstimate>> {
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            context: "profile_score",
            needed: 3,
            got: points.len(),
        });
    }
    Ok(points
        .windows(3)
        .map(|w| {
            let h = w[2].alpha - w[0].alpha;
            ScoreEstimate {
                alpha: w[1].alpha,
                envelope: w[1].imbalance + (w[2].comp - w[0].comp) / h,
                central: (w[2].qhat - w[0].qhat) / h,
            }
        })
        .collect())
}
