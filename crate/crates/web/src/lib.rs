//! Browser bindings for three small experiments: bound-based selection on a
//! synthetic profile, a geodesic-regularized treatment embedding, and the
//! spread of each imbalance penalty as K grows.
//!
//! Every export returns a JSON string; the page parses it and draws.

use boab_core::balancing::{StrategyKind, StrategySpec};
use boab_core::boab::select_alpha;
use boab_core::boab::stub::{uniform_grid, QuadraticStub, StubNoise};
use boab_core::datagen::{gen_topology, topology_effects, TopologyKind, TREE_LL, TREE_RR};
use boab_core::eval::{concentration_experiment, cyclic_order_matches, embedding_plane, interpolate_effect, ConcentrationConfig};
use boab_core::model::HeadMode;
use boab_core::train::{train, TrainConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, String>;

#[derive(Debug, Serialize)]
pub struct StubCurve {
    pub alpha: Vec<f64>,
    pub q: Vec<f64>,
    pub qhat: Vec<f64>,
    pub alpha_hat: f64,
    pub alpha_bd: f64,
}

/// Selection on the quadratic stub over `[0, 3]`. `shift` biases the measured
/// imbalance, which moves the selected weight by about `shift / kappa`.
pub fn stub_curve(kappa: f64, g: f64, shift: f64, steps: usize) -> Result<StubCurve> {
    if !(kappa > 0.0) {
        return Err(format!("kappa must be positive, got {kappa}"));
    }
    let stub = QuadraticStub { kappa, g, ..QuadraticStub::default() };
    let grid = uniform_grid(0.0, 3.0, steps.clamp(2, 2000));
    let noise = StubNoise { score_shift: shift, per_point: Vec::new() };
    let points = stub.profile(&grid, &noise);
    let best = select_alpha(&points).map_err(|e| e.to_string())?;
    Ok(StubCurve {
        q: grid.iter().map(|&a| stub.q(a)).collect(),
        qhat: points.iter().map(|p| p.qhat).collect(),
        alpha_hat: points[best].alpha,
        alpha_bd: stub.alpha_bd(),
        alpha: grid,
    })
}

#[derive(Debug, Serialize)]
pub struct EmbeddingView {
    pub effects: Vec<f64>,
    /// First two principal coordinates of each treatment's embedding.
    pub plane: Vec<[f64; 2]>,
    pub edges: Vec<(usize, usize)>,
    pub from: usize,
    pub to: usize,
    /// `(s, mean outcome)` along the straight line between the two embeddings.
    pub curve: Vec<(f64, f64)>,
    pub cyclic_order: bool,
}

pub fn embedding_view(topology: &str, weight: f64, epochs: usize, seed: u64) -> Result<EmbeddingView> {
    let kind: TopologyKind = topology.parse().map_err(|e: boab_core::error::Error| e.to_string())?;
    let (ds, graph) = gen_topology(kind, 600, 0.1, seed).map_err(|e| e.to_string())?;
    let spec = StrategySpec { geodesic_weight: weight, ..StrategySpec::new(StrategyKind::Agg) };
    let cfg = TrainConfig {
        epochs: epochs.clamp(1, 200),
        batch_size: 100,
        learning_rate: 3e-3,
        d_z: 8,
        phi_hidden: vec![32],
        head_hidden: vec![16],
        head_mode: Some(HeadMode::EmbedConditioned),
        balance_subsample: 200,
        seed,
        ..TrainConfig::default()
    };
    let fit = train(&ds, 1.0, &spec, &cfg, Some(&graph)).map_err(|e| e.to_string())?;
    let (from, to) = match kind {
        TopologyKind::Tree => (TREE_LL, TREE_RR),
        TopologyKind::Cycle => (0, ds.k / 2),
    };
    let plane = embedding_plane(&fit.model.table).map_err(|e| e.to_string())?;
    Ok(EmbeddingView {
        effects: topology_effects(kind),
        curve: interpolate_effect(&fit.model, from, to, 20, &ds).map_err(|e| e.to_string())?,
        cyclic_order: cyclic_order_matches(&plane).map_err(|e| e.to_string())?,
        plane: (0..plane.rows()).map(|r| [plane.get(r, 0), plane.get(r, 1)]).collect(),
        edges: graph.edges().to_vec(),
        from,
        to,
    })
}

#[derive(Debug, Serialize)]
pub struct SpreadRow {
    pub strategy: &'static str,
    pub k: usize,
    pub terms: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sd of each penalty on balanced draws, for every K in `ks`.
pub fn penalty_spread(ks: &[usize], n: usize, reps: usize, seed: u64) -> Result<Vec<SpreadRow>> {
    if ks.is_empty() || ks.iter().any(|&k| k < 2) {
        return Err("every K must be at least 2".into());
    }
    let cfg = ConcentrationConfig {
        k_list: ks.to_vec(),
        n,
        reps: reps.clamp(20, 200),
        d: 5,
        seed,
        ..ConcentrationConfig::default()
    };
    let table = concentration_experiment(&cfg, 1).map_err(|e| e.to_string())?;
    Ok(table
        .rows
        .iter()
        .map(|r| SpreadRow {
            strategy: r.strategy.name(),
            k: r.k,
            terms: r.strategy.term_count(r.k),
            mean: r.mean,
            sd: r.sd,
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = stubCurve)]
pub fn stub_curve_js(kappa: f64, g: f64, shift: f64, steps: usize) -> std::result::Result<String, JsError> {
    to_js(stub_curve(kappa, g, shift, steps))
}

#[wasm_bindgen(js_name = embeddingView)]
pub fn embedding_view_js(topology: &str, weight: f64, epochs: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(embedding_view(topology, weight, epochs, seed as u64))
}

/// `ks` is a comma-separated list such as `"2,4,8,16"`.
#[wasm_bindgen(js_name = penaltySpread)]
pub fn penalty_spread_js(ks: &str, n: usize, reps: usize, seed: u32) -> std::result::Result<String, JsError> {
    let parsed: std::result::Result<Vec<usize>, _> = ks.split(',').map(|s| s.trim().parse::<usize>()).collect();
    match parsed {
        Ok(ks) => to_js(penalty_spread(&ks, n, reps, seed as u64)),
        Err(_) => Err(JsError::new(&format!("bad K list '{ks}'"))),
    }
}
