//! Stratified bootstrap of the selected weight.

use serde::{Deserialize, Serialize};

use super::{boab_search, ComplexitySpec};
use crate::balancing::{GeodesicGraph, StrategySpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::math::{median, percentile, std_dev, RngStream};
use crate::parallel::parallel_map;
use crate::train::TrainConfig;

pub const MIN_REPLICATES: usize = 20;
pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    /// Selection on the original sample.
    pub alpha_hat: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub median: f64,
    pub replicates: Vec<f64>,
}

/// Resamples rows with replacement inside each arm. Returns `None` when
/// some arm ends up empty.
fn stratified_resample(t: &[usize], k: usize, rng: &mut RngStream) -> Option<Vec<usize>> {
    let mut arms = vec![Vec::new(); k];
    for (i, &a) in t.iter().enumerate() {
        arms[a].push(i);
    }
    if arms.iter().any(Vec::is_empty) {
        return None;
    }
    let mut idx = Vec::with_capacity(t.len());
    for rows in &arms {
        for _ in 0..rows.len() {
            idx.push(rows[rng.below(rows.len())]);
        }
    }
    Some(idx)
}

/// Bootstrap of any selection rule. `select(rows, seed)` returns the weight
/// chosen on the resampled `rows`; replicates get independent streams.
pub fn bootstrap_alpha_with<F>(
    t: &[usize],
    k: usize,
    replicates: usize,
    seed: u64,
    workers: usize,
    alpha_hat: f64,
    select: F,
) -> Result<AlphaEstimate>
where
    F: Fn(&[usize], u64) -> Result<f64> + Sync,
{
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs >= {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    let root = RngStream::new(seed);
    let jobs: Vec<usize> = (0..replicates).collect();
    let values = parallel_map(&jobs, workers, |_, &b| {
        let stream = root.derive(b as u64);
        for attempt in 0..MAX_REDRAWS {
            let mut rng = stream.derive(attempt as u64);
            if let Some(idx) = stratified_resample(t, k, &mut rng) {
                return select(&idx, stream.derive(1_000).seed());
            }
        }
        Err(Error::Degenerate(format!(
            "bootstrap replicate {b}: an arm stayed empty after {MAX_REDRAWS} redraws"
        )))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(AlphaEstimate {
        alpha_hat,
        se: std_dev(&values),
        lo: percentile(&values, 0.025),
        hi: percentile(&values, 0.975),
        median: median(&values),
        replicates: values,
    })
}

/// Reruns the full grid search on `replicates` stratified resamples.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_alpha(
    ds: &Dataset,
    replicates: usize,
    grid: &[f64],
    spec: &StrategySpec,
    cfg: &TrainConfig,
    comp: &ComplexitySpec,
    graph: Option<&GeodesicGraph>,
    workers: usize,
) -> Result<AlphaEstimate> {
    let point = boab_search(ds, grid, spec, cfg, comp, graph, workers)?.alpha_hat;
    bootstrap_alpha_with(&ds.t, ds.k, replicates, cfg.seed, workers, point, |idx, seed| {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        Ok(boab_search(&ds.subset(idx), grid, spec, &cfg, comp, graph, 1)?.alpha_hat)
    })
}

#[cfg(test)]
mod tests {
    use super::super::select_alpha;
    use super::super::stub::{uniform_grid, QuadraticStub, StubNoise};
    use super::*;

    #[test]
    fn single_point_grid_has_zero_spread() {
        let t: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let est = bootstrap_alpha_with(&t, 2, 20, 1, 2, 0.5, |_, _| Ok(0.5)).unwrap();
        assert_eq!(est.se, 0.0);
        assert_eq!((est.lo, est.hi, est.median), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_arm_exhausts_redraws() {
        let t = vec![0; 30];
        assert!(bootstrap_alpha_with(&t, 2, 20, 1, 1, 0.0, |_, _| Ok(0.0)).is_err());
        assert!(bootstrap_alpha_with(&t, 1, 19, 1, 1, 0.0, |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn replicates_stay_in_grid_and_shrink_with_n() {
        let stub = QuadraticStub::default();
        let grid = uniform_grid(0.0, 1.0, 1000);
        let se_at = |n: usize| {
            let mut rng = RngStream::new(n as u64);
            let u: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let t = vec![0; n];
            let est = bootstrap_alpha_with(&t, 1, 30, 9, 4, stub.alpha_bd(), |idx, _| {
                let shift = idx.iter().map(|&i| u[i]).sum::<f64>() / idx.len() as f64;
                let pts = stub.profile(
                    &grid,
                    &StubNoise {
                        score_shift: shift,
                        per_point: vec![],
                    },
                );
                Ok(pts[select_alpha(&pts)?].alpha)
            })
            .unwrap();
            assert!(est.replicates.iter().all(|a| (0.0..=1.0).contains(a)));
            assert!(est.lo <= est.median && est.median <= est.hi);
            est.se
        };
        let (small, large) = (se_at(1000), se_at(4000));
        assert!(large <= 0.7 * small, "{small} -> {large}");
    }
}
