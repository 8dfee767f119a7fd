//! The subcommands. Each one reads an effective [`RunConfig`], writes its
//! artifacts into the run directory and reports deterministic metrics plus
//! wall-clock timings separately.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use boab_core::balancing::{GeodesicGraph, StrategySpec};
use boab_core::boab::{bootstrap_alpha_with, boab_search};
use boab_core::datagen::{
    gen_dose, gen_hard, gen_topology, topology_effects, topology_graph, GenDoseParams, GenHardParams, TopologyKind,
    TREE_LL, TREE_RR,
};
use boab_core::dataset::{validate_dataset, Dataset};
use boab_core::eval::{
    adrf, concentration_experiment, cyclic_order_matches, embedding_plane, interpolate_effect, nearest_rows, pehe,
    timing_benchmark, ConcentrationConfig, TimingConfig,
};
use boab_core::math::{RngStream, Stopwatch};
use boab_core::model::{factual_losses, imbalance, Batch, HeadMode, ModelParams};
use boab_core::model_file::{load_model, save_model};
use boab_core::train::{train, TrainConfig, TrainTrace};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::plot::{write_csv, write_dat, write_labeled_dat};

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub timings: BTreeMap<String, f64>,
}

impl Outcome {
    fn file(&mut self, path: &Path) {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.files.push(name);
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Gen,
    Train,
    Boab,
    Eval,
    Bench,
    Geodesic,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Gen => "gen",
            CommandKind::Train => "train",
            CommandKind::Boab => "boab",
            CommandKind::Eval => "eval",
            CommandKind::Bench => "bench",
            CommandKind::Geodesic => "geodesic",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        Ok(match name {
            "gen" => CommandKind::Gen,
            "train" => CommandKind::Train,
            "boab" => CommandKind::Boab,
            "eval" => CommandKind::Eval,
            "bench" => CommandKind::Bench,
            "geodesic" => CommandKind::Geodesic,
            other => return Err(CliError::config(format!("unknown command '{other}'"))),
        })
    }
}

pub fn execute(kind: CommandKind, cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    match kind {
        CommandKind::Gen => cmd_gen(cfg, out),
        CommandKind::Train => cmd_train(cfg, out),
        CommandKind::Boab => cmd_boab(cfg, out),
        CommandKind::Eval => cmd_eval(cfg, out),
        CommandKind::Bench => cmd_bench(cfg, out),
        CommandKind::Geodesic => cmd_geodesic(cfg, out),
    }
}

/// Training seed derived from the root seed, so data and initialization
/// never share a stream.
pub fn train_seed(seed: u64) -> u64 {
    RngStream::new(seed).derive(0x7a11).seed()
}

fn workers(cfg: &RunConfig) -> Result<usize, CliError> {
    match cfg.usize("workers")? {
        0 => Ok(boab_core::parallel::default_workers()),
        w => Ok(w),
    }
}

fn topology_n(cfg: &RunConfig) -> Result<usize, CliError> {
    cfg.usize_or("data.n", 2000)
}

fn fixed_k(cfg: &RunConfig, k: usize, generator: &str) -> Result<(), CliError> {
    match cfg.usize_or("data.k", k)? {
        v if v == k => Ok(()),
        v => Err(CliError::config(format!("data.k={v} but the {generator} generator has K={k}"))),
    }
}

/// The dataset named by `data.path`, or a fresh draw from `data.generator`.
/// Topology generators also return their graph.
pub fn load_or_generate(cfg: &RunConfig) -> Result<(Dataset, Option<GeodesicGraph>), CliError> {
    if let Some(path) = cfg.path("data.path") {
        let ds = Dataset::load(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let graph = match ds.provenance.generator.as_str() {
            "tree" => Some(topology_graph(TopologyKind::Tree)?),
            "cycle" => Some(topology_graph(TopologyKind::Cycle)?),
            _ => None,
        };
        return Ok((ds, graph));
    }
    let seed = cfg.seed()?;
    match cfg.text("data.generator") {
        "hard" => {
            let params = GenHardParams {
                n: cfg.usize_or("data.n", 1500)?,
                d: cfg.usize("data.d")?,
                k: cfg.usize_or("data.k", 4)?,
                kappa: cfg.real_or("data.kappa", 5.0)?,
                noise_variance: cfg.real("data.noise_variance")?,
                seed,
            };
            Ok((gen_hard(&params)?, None))
        }
        "dose" => {
            let params = GenDoseParams {
                n: cfg.usize_or("data.n", 1797)?,
                k: cfg.usize_or("data.k", 10)?,
                kappa: cfg.real_or("data.kappa", 2.0)?,
                noise_sd: cfg.real("data.noise_variance")?.sqrt(),
                seed,
            };
            Ok((gen_dose(&params)?, None))
        }
        name @ ("tree" | "cycle") => {
            let kind: TopologyKind = name.parse()?;
            fixed_k(cfg, topology_effects(kind).len(), name)?;
            let (ds, graph) = gen_topology(kind, topology_n(cfg)?, cfg.real("data.noise_sd")?, seed)?;
            Ok((ds, Some(graph)))
        }
        other => Err(CliError::config(format!("unknown generator '{other}'"))),
    }
}

fn training(cfg: &RunConfig) -> Result<TrainConfig, CliError> {
    let mut t = cfg.train_config()?;
    t.seed = train_seed(cfg.seed()?);
    Ok(t)
}

fn write_trace(path: &Path, trace: &TrainTrace) -> Result<(), CliError> {
    let rows: Vec<Vec<f64>> = trace
        .epochs
        .iter()
        .map(|e| vec![e.epoch as f64, e.factual, e.imbalance, e.objective, e.seconds])
        .collect();
    write_dat(path, &["epoch", "factual", "imbalance", "objective", "seconds"], &rows)
}

/// Full-sample factual risk, imbalance and (with truth) PEHE of a model.
fn score_model(out: &mut Outcome, prefix: &str, model: &ModelParams, ds: &Dataset, fit_spec: Option<&StrategySpec>) -> Result<(), CliError> {
    let losses = factual_losses(model, Batch::new(&ds.x, &ds.t, &ds.y)?)?;
    out.metric(format!("{prefix}factual"), losses.iter().sum::<f64>() / losses.len() as f64);
    if let Some(spec) = fit_spec {
        out.metric(format!("{prefix}imbalance"), imbalance(model, spec, &ds.x, &ds.t)?);
    }
    if ds.truth.is_some() {
        let r = pehe(model, ds)?;
        out.metric(format!("{prefix}pehe"), r.pehe);
        out.metric(format!("{prefix}sqrt_pehe"), r.sqrt_pehe);
    }
    Ok(())
}

fn cmd_gen(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let (ds, _) = load_or_generate(cfg)?;
    let mut out = Outcome::default();
    let path = out_dir.join("data.csv");
    let (csv, side) = ds.save(&path)?;
    out.file(&csv);
    out.file(&side);
    let diag = validate_dataset(&ds);
    out.metric("n", ds.n() as f64);
    out.metric("d", ds.d() as f64);
    out.metric("k", ds.k as f64);
    out.metric("y_mean", ds.y.iter().sum::<f64>() / ds.n() as f64);
    out.metric("min_arm_count", diag.min_count as f64);
    for (a, p) in diag.empirical_propensity.iter().enumerate() {
        out.metric(format!("arm_share_{a}"), *p);
    }
    Ok(out)
}

fn cmd_train(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let (ds, graph) = load_or_generate(cfg)?;
    let spec = cfg.strategy_spec()?;
    let tcfg = training(cfg)?;
    let alpha = cfg.real("train.alpha")?;
    let graph = graph.filter(|_| spec.geodesic_weight > 0.0);
    let clock = Stopwatch::start();
    let fit = train(&ds, alpha, &spec, &tcfg, graph.as_ref())?;
    let mut out = Outcome::default();
    out.timings.insert("train_seconds".into(), clock.elapsed_secs());
    let model_path = out_dir.join("model.bin");
    save_model(&fit.model, &model_path)?;
    out.file(&model_path);
    let trace_path = out_dir.join("trace.dat");
    write_trace(&trace_path, &fit.trace)?;
    out.file(&trace_path);
    out.metric("alpha", alpha);
    score_model(&mut out, "", &fit.model, &ds, Some(&fit.spec))?;
    Ok(out)
}

fn cmd_boab(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let (ds, graph) = load_or_generate(cfg)?;
    let spec = cfg.strategy_spec()?;
    let tcfg = training(cfg)?;
    let comp = cfg.complexity_spec()?;
    let grid = cfg.real_list("boab.grid")?;
    let graph = graph.filter(|_| spec.geodesic_weight > 0.0);
    let workers = workers(cfg)?;
    let clock = Stopwatch::start();
    let res = boab_search(&ds, &grid, &spec, &tcfg, &comp, graph.as_ref(), workers)?;
    let mut out = Outcome::default();
    out.timings.insert("search_seconds".into(), clock.elapsed_secs());

    let with_truth = ds.truth.is_some();
    let mut columns = vec!["alpha", "factual", "imbalance", "comp", "qhat", "lipschitz", "seconds"];
    if with_truth {
        columns.push("sqrt_pehe");
    }
    let mut rows = Vec::new();
    let mut bars = Vec::new();
    for (p, fit) in res.points.iter().zip(&res.fits) {
        let mut row = vec![p.alpha, p.factual, p.imbalance, p.comp, p.qhat, p.lipschitz, p.seconds];
        let tag = format!("alpha_{}", p.alpha);
        out.metric(format!("{tag}.qhat"), p.qhat);
        out.metric(format!("{tag}.imbalance"), p.imbalance);
        if with_truth {
            let r = pehe(&fit.model, &ds)?;
            row.push(r.sqrt_pehe);
            bars.push((format!("{}@{}", spec.kind.name(), p.alpha), vec![r.sqrt_pehe, r.pehe]));
            out.metric(format!("{tag}.sqrt_pehe"), r.sqrt_pehe);
        }
        rows.push(row);
    }
    let profile = out_dir.join("profile.csv");
    write_csv(&profile, &columns, &rows)?;
    out.file(&profile);
    if with_truth {
        let path = out_dir.join("pehe.dat");
        write_labeled_dat(&path, &["label", "sqrt_pehe", "pehe"], &bars)?;
        out.file(&path);
    }
    let model_path = out_dir.join("model.bin");
    save_model(&res.selected().model, &model_path)?;
    out.file(&model_path);
    out.metric("alpha_hat", res.alpha_hat);
    score_model(&mut out, "selected.", &res.selected().model, &ds, Some(&res.selected().spec))?;

    let replicates = cfg.usize("boab.bootstrap")?;
    if replicates > 0 {
        let est = bootstrap_alpha_with(&ds.t, ds.k, replicates, tcfg.seed, workers, res.alpha_hat, |idx, seed| {
            let cfg = TrainConfig { seed, ..tcfg.clone() };
            Ok(boab_search(&ds.subset(idx), &grid, &spec, &cfg, &comp, graph.as_ref(), 1)?.alpha_hat)
        })?;
        let path = out_dir.join("bootstrap.dat");
        let rows: Vec<Vec<f64>> = est.replicates.iter().enumerate().map(|(b, a)| vec![b as f64, *a]).collect();
        write_dat(&path, &["replicate", "alpha_hat"], &rows)?;
        out.file(&path);
        out.metric("bootstrap.se", est.se);
        out.metric("bootstrap.lo", est.lo);
        out.metric("bootstrap.hi", est.hi);
        out.metric("bootstrap.median", est.median);
    }
    Ok(out)
}

fn cmd_eval(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let model_path = cfg
        .path("eval.model")
        .ok_or_else(|| CliError::config("missing required key 'eval.model'"))?;
    let model = load_model(&model_path).map_err(|e| CliError::data(format!("{}: {e}", model_path.display())))?;
    let (ds, _) = load_or_generate(cfg)?;
    if ds.d() != model.phi.input_dim() || ds.k != model.k() {
        return Err(CliError::data(format!(
            "model expects d={} K={}, data has d={} K={}",
            model.phi.input_dim(),
            model.k(),
            ds.d(),
            ds.k
        )));
    }
    let mut out = Outcome::default();
    score_model(&mut out, "", &model, &ds, None)?;

    let est = adrf(&model, &ds)?;
    let truth = ds.truth.as_ref().map(|m| m.column_means());
    let rows: Vec<Vec<f64>> = est
        .iter()
        .enumerate()
        .map(|(t, &v)| match &truth {
            Some(tr) => vec![t as f64, v, tr[t]],
            None => vec![t as f64, v],
        })
        .collect();
    let columns: &[&str] = if truth.is_some() { &["t", "adrf", "truth"] } else { &["t", "adrf"] };
    let path = out_dir.join("adrf.dat");
    write_dat(&path, columns, &rows)?;
    out.file(&path);
    let argmin = est
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(t, _)| t)
        .unwrap_or(0);
    out.metric("adrf_argmin", argmin as f64);
    for (t, v) in est.iter().enumerate() {
        out.metric(format!("adrf_{t}"), *v);
    }

    if ds.truth.is_some() {
        let r = pehe(&model, &ds)?;
        let path = out_dir.join("pehe.dat");
        write_labeled_dat(&path, &["label", "sqrt_pehe", "pehe"], &[("model".into(), vec![r.sqrt_pehe, r.pehe])])?;
        out.file(&path);
        let k = ds.k;
        let pairs: Vec<Vec<f64>> = (0..k)
            .flat_map(|j| (j + 1..k).map(move |l| (j, l)))
            .map(|(j, l)| vec![j as f64, l as f64, r.per_pair.get(j, l)])
            .collect();
        let path = out_dir.join("pehe_pairs.csv");
        write_csv(&path, &["j", "k", "mse"], &pairs)?;
        out.file(&path);
    }
    Ok(out)
}

fn cmd_bench(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let kind = cfg.text("bench.kind").to_string();
    let strategies = cfg.strategies("bench.strategies")?;
    let seed = cfg.seed()?;
    let mut out = Outcome::default();
    if kind == "both" || kind == "timing" {
        let tcfg = TimingConfig {
            k_list: cfg.usize_list("bench.k_list")?,
            strategies: strategies.clone(),
            n: cfg.usize("bench.n")?,
            epochs: cfg.usize("bench.epochs")?,
            penalty_evals: cfg.usize("bench.penalty_evals")?,
            seed,
            train: training(cfg)?,
        };
        let table = timing_benchmark(&tcfg)?;
        let rows: Vec<(String, Vec<f64>)> = table
            .rows
            .iter()
            .map(|r| (r.strategy.name().to_string(), vec![r.k as f64, r.terms as f64, r.epoch_seconds, r.penalty_seconds]))
            .collect();
        let path = out_dir.join("timing.dat");
        write_labeled_dat(&path, &["strategy", "k", "terms", "epoch_seconds", "penalty_seconds"], &rows)?;
        out.file(&path);
        for r in &table.rows {
            out.metric(format!("timing.{}.k{}.terms", r.strategy.name(), r.k), r.terms as f64);
            out.timings.insert(format!("timing.{}.k{}.penalty_seconds", r.strategy.name(), r.k), r.penalty_seconds);
            out.timings.insert(format!("timing.{}.k{}.epoch_seconds", r.strategy.name(), r.k), r.epoch_seconds);
        }
    }
    if kind == "both" || kind == "concentration" {
        let n0 = cfg.usize("bench.conc_n")?;
        let mut rows = Vec::new();
        for n in [n0, 4 * n0] {
            let ccfg = ConcentrationConfig {
                k_list: cfg.usize_list("bench.conc_k_list")?,
                n,
                reps: cfg.usize("bench.reps")?,
                strategies: strategies.clone(),
                seed,
                ..ConcentrationConfig::default()
            };
            let table = concentration_experiment(&ccfg, workers(cfg)?)?;
            for r in &table.rows {
                rows.push((r.strategy.name().to_string(), vec![r.k as f64, n as f64, r.mean, r.sd]));
                out.metric(format!("concentration.{}.k{}.n{}.sd", r.strategy.name(), r.k, n), r.sd);
                out.metric(format!("concentration.{}.k{}.n{}.mean", r.strategy.name(), r.k, n), r.mean);
            }
        }
        let path = out_dir.join("concentration.dat");
        write_labeled_dat(&path, &["strategy", "k", "n", "mean", "sd"], &rows)?;
        out.file(&path);
    }
    Ok(out)
}

/// Metrics of a trained topology model: interpolation between two nodes and
/// the geometry of the learned table.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyReport {
    pub curve: Vec<(f64, f64)>,
    pub plane: boab_core::math::Matrix,
    pub cyclic_order: bool,
    /// The two rows nearest to row 0.
    pub neighbors_of_0: Vec<usize>,
}

pub fn topology_report(model: &ModelParams, ds: &Dataset, from: usize, to: usize, steps: usize) -> Result<TopologyReport, CliError> {
    let curve = interpolate_effect(model, from, to, steps, ds)?;
    let plane = embedding_plane(&model.table)?;
    Ok(TopologyReport {
        curve,
        cyclic_order: cyclic_order_matches(&plane)?,
        neighbors_of_0: nearest_rows(&model.table, 0, 2)?,
        plane,
    })
}

fn cmd_geodesic(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let kind = cfg.topology()?;
    let k = topology_effects(kind).len();
    let (ds, graph) = gen_topology(kind, topology_n(cfg)?, cfg.real("data.noise_sd")?, cfg.seed()?)?;
    let mut spec = cfg.strategy_spec()?;
    spec.geodesic_weight = cfg.real("geodesic.weight")?;
    let mut tcfg = training(cfg)?;
    match tcfg.head_mode {
        None => tcfg.head_mode = Some(HeadMode::EmbedConditioned),
        Some(HeadMode::MultiHead) => {
            return Err(CliError::config("geodesic runs need train.head_mode=embed_conditioned (or auto)"))
        }
        Some(HeadMode::EmbedConditioned) => {}
    }
    let (from_auto, to_auto) = match kind {
        TopologyKind::Tree => (TREE_LL, TREE_RR),
        TopologyKind::Cycle => (0, k / 2),
    };
    let from = cfg.usize_or("geodesic.from", from_auto)?;
    let to = cfg.usize_or("geodesic.to", to_auto)?;
    let steps = cfg.usize("geodesic.steps")?;
    if from >= k || to >= k {
        return Err(CliError::config(format!("geodesic.from/to must be below K={k}")));
    }
    let alpha = cfg.real("train.alpha")?;
    let clock = Stopwatch::start();
    let fit = train(&ds, alpha, &spec, &tcfg, Some(&graph))?;
    let mut out = Outcome::default();
    out.timings.insert("train_seconds".into(), clock.elapsed_secs());
    let report = topology_report(&fit.model, &ds, from, to, steps)?;

    let model_path = out_dir.join("model.bin");
    save_model(&fit.model, &model_path)?;
    out.file(&model_path);
    let trace_path = out_dir.join("trace.dat");
    write_trace(&trace_path, &fit.trace)?;
    out.file(&trace_path);
    let path = out_dir.join("interpolation.dat");
    let rows: Vec<Vec<f64>> = report.curve.iter().map(|&(l, y)| vec![l, y]).collect();
    write_dat(&path, &["lambda", "mean_outcome"], &rows)?;
    out.file(&path);
    let effects = topology_effects(kind);
    let path = out_dir.join("embedding.dat");
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|t| vec![t as f64, report.plane.get(t, 0), report.plane.get(t, 1), effects[t]])
        .collect();
    write_dat(&path, &["node", "pc1", "pc2", "effect"], &rows)?;
    out.file(&path);

    let at = |lambda: f64| {
        report
            .curve
            .iter()
            .min_by(|a, b| (a.0 - lambda).abs().total_cmp(&(b.0 - lambda).abs()))
            .map(|p| p.1)
            .unwrap_or(f64::NAN)
    };
    out.metric("interp.start", at(0.0));
    out.metric("interp.mid", at(0.5));
    out.metric("interp.end", at(1.0));
    out.metric("cyclic_order", if report.cyclic_order { 1.0 } else { 0.0 });
    for (i, j) in report.neighbors_of_0.iter().enumerate() {
        out.metric(format!("neighbor_{i}_of_0"), *j as f64);
    }
    let (geo, _) = boab_core::balancing::geodesic_penalty(&fit.model.table, &graph, false)?;
    out.metric("geodesic_stress", geo);
    score_model(&mut out, "", &fit.model, &ds, Some(&fit.spec))?;
    Ok(out)
}

/// Relative path helper for manifests written next to their outputs.
pub fn run_dir(out: &Path, command: CommandKind) -> PathBuf {
    if out.as_os_str().is_empty() {
        PathBuf::from("runs").join(command.name())
    } else {
        out.to_path_buf()
    }
}

