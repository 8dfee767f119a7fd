//! Flat `key=value` run configuration with dotted sections.
//!
//! Every key has a default, a value type and a one-line description in
//! [`SCHEMA`]. Files hold one `key = value` per line; `#` starts a comment.
//! Later sources override earlier ones: defaults, then the config file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use boab_core::balancing::{StrategyKind, StrategySpec};
use boab_core::boab::{ComplexityMethod, ComplexitySpec};
use boab_core::datagen::TopologyKind;
use boab_core::kernels::KernelSpec;
use boab_core::model::HeadMode;
use boab_core::train::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    U64,
    Usize,
    Real,
    /// Non-negative integer or `auto`.
    UsizeOrAuto,
    RealOrAuto,
    UsizeList,
    RealList,
    Text,
    Choice(&'static [&'static str]),
    /// Comma-separated subset of the choices.
    ChoiceList(&'static [&'static str]),
    Kernel,
}

pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub kind: ValueKind,
    pub doc: &'static str,
}

const STRATEGIES: &[&str] = &["pair", "ova", "agg"];

pub const SCHEMA: &[KeySpec] = &[
    KeySpec { key: "seed", default: "0", kind: ValueKind::U64, doc: "root seed for data, initialisation and batching" },
    KeySpec { key: "workers", default: "0", kind: ValueKind::Usize, doc: "worker threads for grid points and replicates (0 = all cores)" },
    KeySpec { key: "data.generator", default: "hard", kind: ValueKind::Choice(&["hard", "dose", "tree", "cycle"]), doc: "synthetic generator used when data.path is empty" },
    KeySpec { key: "data.path", default: "", kind: ValueKind::Text, doc: "dataset CSV to load instead of generating" },
    KeySpec { key: "data.n", default: "auto", kind: ValueKind::UsizeOrAuto, doc: "sample size (auto: 1500 hard, 1797 dose, 2000 tree/cycle)" },
    KeySpec { key: "data.d", default: "20", kind: ValueKind::Usize, doc: "covariates of the hard setting" },
    KeySpec { key: "data.k", default: "auto", kind: ValueKind::UsizeOrAuto, doc: "treatments (auto: 4 hard, 10 dose; fixed for tree/cycle)" },
    KeySpec { key: "data.kappa", default: "auto", kind: ValueKind::RealOrAuto, doc: "softmax confounding strength (auto: 5 hard, 2 dose)" },
    KeySpec { key: "data.noise_variance", default: "0.1", kind: ValueKind::Real, doc: "outcome noise variance (hard, dose)" },
    KeySpec { key: "data.noise_sd", default: "0.1", kind: ValueKind::Real, doc: "outcome noise sd (tree, cycle)" },
    KeySpec { key: "train.alpha", default: "1", kind: ValueKind::Real, doc: "balancing weight for `train` and `geodesic`" },
    KeySpec { key: "train.epochs", default: "100", kind: ValueKind::Usize, doc: "passes over the data" },
    KeySpec { key: "train.batch_size", default: "128", kind: ValueKind::Usize, doc: "fit batch size (stratified, ceil(B/K) per arm)" },
    KeySpec { key: "train.learning_rate", default: "0.001", kind: ValueKind::Real, doc: "Adam step size" },
    KeySpec { key: "train.weight_decay", default: "0", kind: ValueKind::Real, doc: "decoupled weight decay per step" },
    KeySpec { key: "train.d_z", default: "16", kind: ValueKind::Usize, doc: "representation width" },
    KeySpec { key: "train.phi_hidden", default: "64,64", kind: ValueKind::UsizeList, doc: "hidden widths of the representation network" },
    KeySpec { key: "train.head_hidden", default: "32", kind: ValueKind::UsizeList, doc: "hidden widths of each outcome head (empty for linear heads)" },
    KeySpec { key: "train.head_mode", default: "auto", kind: ValueKind::Choice(&["auto", "multi_head", "embed_conditioned"]), doc: "per-arm heads or one head on z plus the treatment embedding" },
    KeySpec { key: "train.embedding_dim", default: "8", kind: ValueKind::Usize, doc: "treatment embedding width" },
    KeySpec { key: "train.balance_subsample", default: "512", kind: ValueKind::Usize, doc: "rows per balance-term subsample" },
    KeySpec { key: "strategy.kind", default: "agg", kind: ValueKind::Choice(STRATEGIES), doc: "imbalance functional: pair, ova or agg" },
    KeySpec { key: "strategy.kernel", default: "rbf_median", kind: ValueKind::Kernel, doc: "kernel on z: rbf_median, rbf:<bandwidth> or linear" },
    KeySpec { key: "strategy.embed_kernel", default: "rbf_median", kind: ValueKind::Kernel, doc: "kernel on treatment embeddings (agg)" },
    KeySpec { key: "strategy.geodesic_weight", default: "0", kind: ValueKind::Real, doc: "weight of the embedding geodesic penalty" },
    KeySpec { key: "strategy.min_arm_batch", default: "2", kind: ValueKind::Usize, doc: "arms with fewer rows in a batch are skipped" },
    KeySpec { key: "boab.grid", default: "0,0.1,0.5,1,2,5", kind: ValueKind::RealList, doc: "balancing weights searched by `boab`" },
    KeySpec { key: "boab.bootstrap", default: "0", kind: ValueKind::Usize, doc: "bootstrap replicates of the selected weight (0 = none, else >= 20)" },
    KeySpec { key: "complexity.method", default: "lipschitz", kind: ValueKind::Choice(&["lipschitz", "rademacher_mc", "constant"]), doc: "complexity term of the profile bound" },
    KeySpec { key: "complexity.scale", default: "1", kind: ValueKind::Real, doc: "multiplier C of the complexity term" },
    KeySpec { key: "complexity.delta", default: "0.05", kind: ValueKind::Real, doc: "confidence level" },
    KeySpec { key: "complexity.mc_draws", default: "64", kind: ValueKind::Usize, doc: "sign vectors for rademacher_mc" },
    KeySpec { key: "eval.model", default: "", kind: ValueKind::Text, doc: "model file evaluated by `eval`" },
    KeySpec { key: "bench.kind", default: "both", kind: ValueKind::Choice(&["both", "timing", "concentration"]), doc: "which benchmark tables `bench` writes" },
    KeySpec { key: "bench.k_list", default: "4,20", kind: ValueKind::UsizeList, doc: "treatment counts timed" },
    KeySpec { key: "bench.strategies", default: "pair,ova,agg", kind: ValueKind::ChoiceList(STRATEGIES), doc: "strategies benchmarked" },
    KeySpec { key: "bench.n", default: "1500", kind: ValueKind::Usize, doc: "rows of the timing data" },
    KeySpec { key: "bench.epochs", default: "5", kind: ValueKind::Usize, doc: "training epochs per timing cell" },
    KeySpec { key: "bench.penalty_evals", default: "7", kind: ValueKind::Usize, doc: "timed penalty evaluations per cell" },
    KeySpec { key: "bench.conc_k_list", default: "4,16", kind: ValueKind::UsizeList, doc: "treatment counts of the concentration table" },
    KeySpec { key: "bench.conc_n", default: "500", kind: ValueKind::Usize, doc: "sample size per concentration replicate" },
    KeySpec { key: "bench.reps", default: "50", kind: ValueKind::Usize, doc: "concentration replicates" },
    KeySpec { key: "geodesic.topology", default: "tree", kind: ValueKind::Choice(&["tree", "cycle"]), doc: "treatment topology for `geodesic`" },
    KeySpec { key: "geodesic.weight", default: "5", kind: ValueKind::Real, doc: "geodesic penalty weight for `geodesic`" },
    KeySpec { key: "geodesic.steps", default: "20", kind: ValueKind::Usize, doc: "interpolation intervals" },
    KeySpec { key: "geodesic.from", default: "auto", kind: ValueKind::UsizeOrAuto, doc: "interpolation start (auto: LL for tree, 0 for cycle)" },
    KeySpec { key: "geodesic.to", default: "auto", kind: ValueKind::UsizeOrAuto, doc: "interpolation end (auto: RR for tree, 4 for cycle)" },
];

pub fn key_spec(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.key == key)
}

/// `--help-config` text.
pub fn help_text() -> String {
    let width = SCHEMA.iter().map(|s| s.key.len()).max().unwrap_or(0);
    let mut out = String::from("# key = default    description\n");
    for s in SCHEMA {
        let _ = writeln!(out, "{:width$} = {:<16} # {}", s.key, s.default, s.doc);
    }
    out
}

fn check_value(spec: &KeySpec, value: &str) -> Result<(), String> {
    let list = |v: &str| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect::<Vec<_>>();
    match spec.kind {
        ValueKind::U64 => value.parse::<u64>().map(drop).map_err(|e| e.to_string()),
        ValueKind::Usize => value.parse::<usize>().map(drop).map_err(|e| e.to_string()),
        ValueKind::Real => match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(()),
            Ok(_) => Err("not finite".into()),
            Err(e) => Err(e.to_string()),
        },
        ValueKind::UsizeOrAuto if value == "auto" => Ok(()),
        ValueKind::UsizeOrAuto => value.parse::<usize>().map(drop).map_err(|e| e.to_string()),
        ValueKind::RealOrAuto if value == "auto" => Ok(()),
        ValueKind::RealOrAuto => value.parse::<f64>().map(drop).map_err(|e| e.to_string()),
        ValueKind::UsizeList => list(value).iter().try_for_each(|v| v.parse::<usize>().map(drop).map_err(|e| format!("'{v}': {e}"))),
        ValueKind::RealList => list(value).iter().try_for_each(|v| match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(()),
            _ => Err(format!("'{v}' is not a finite number")),
        }),
        ValueKind::Text => Ok(()),
        ValueKind::Choice(options) => {
            if options.contains(&value) {
                Ok(())
            } else {
                Err(format!("expected one of {}", options.join("|")))
            }
        }
        ValueKind::ChoiceList(options) => list(value).iter().try_for_each(|v| {
            if options.contains(&v.as_str()) {
                Ok(())
            } else {
                Err(format!("'{v}' is not one of {}", options.join("|")))
            }
        }),
        ValueKind::Kernel => parse_kernel(value).map(drop),
    }
}

fn parse_kernel(value: &str) -> Result<KernelSpec, String> {
    match value {
        "rbf_median" => Ok(KernelSpec::rbf_median()),
        "linear" => Ok(KernelSpec::linear()),
        other => match other.strip_prefix("rbf:").map(str::parse::<f64>) {
            Some(Ok(g)) if g > 0.0 && g.is_finite() => Ok(KernelSpec::rbf(g)),
            _ => Err("expected rbf_median, linear or rbf:<bandwidth > 0>".into()),
        },
    }
}

/// Effective configuration: every schema key with its current value.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: SCHEMA.iter().map(|s| (s.key.to_string(), s.default.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let spec = key_spec(key).ok_or_else(|| CliError::config(format!("unknown config key '{key}' (see --help-config)")))?;
        let value = value.trim();
        check_value(spec, value).map_err(|e| CliError::config(format!("bad value for '{key}': {e}")))?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| CliError::config(format!("{origin}:{}: {}", no + 1, e.message)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// The effective config in file syntax.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("config key {key} not in schema"))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .parse()
            .map_err(|e: T::Err| CliError::config(format!("bad value for '{key}': {e}")))
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parsed(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parsed(key)
    }

    pub fn real(&self, key: &str) -> Result<f64, CliError> {
        self.parsed(key)
    }

    pub fn text(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn usize_or(&self, key: &str, auto: usize) -> Result<usize, CliError> {
        if self.raw(key) == "auto" {
            Ok(auto)
        } else {
            self.usize(key)
        }
    }

    pub fn real_or(&self, key: &str, auto: f64) -> Result<f64, CliError> {
        if self.raw(key) == "auto" {
            Ok(auto)
        } else {
            self.real(key)
        }
    }

    fn items(&self, key: &str) -> Vec<&str> {
        self.raw(key).split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        self.items(key)
            .into_iter()
            .map(|v| v.parse().map_err(|e| CliError::config(format!("bad value for '{key}': {e}"))))
            .collect()
    }

    pub fn real_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.items(key)
            .into_iter()
            .map(|v| v.parse().map_err(|e| CliError::config(format!("bad value for '{key}': {e}"))))
            .collect()
    }

    pub fn strategies(&self, key: &str) -> Result<Vec<StrategyKind>, CliError> {
        self.items(key).into_iter().map(|v| v.parse().map_err(CliError::from)).collect()
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.u64("seed")
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let head_mode = match self.text("train.head_mode") {
            "auto" => None,
            other => Some(other.parse::<HeadMode>()?),
        };
        Ok(TrainConfig {
            epochs: self.usize("train.epochs")?,
            batch_size: self.usize("train.batch_size")?,
            learning_rate: self.real("train.learning_rate")?,
            d_z: self.usize("train.d_z")?,
            phi_hidden: self.usize_list("train.phi_hidden")?,
            head_hidden: self.usize_list("train.head_hidden")?,
            head_mode,
            embedding_dim: self.usize("train.embedding_dim")?,
            balance_subsample: self.usize("train.balance_subsample")?,
            weight_decay: self.real("train.weight_decay")?,
            seed: self.seed()?,
        })
    }

    pub fn strategy_spec(&self) -> Result<StrategySpec, CliError> {
        let kernel = |key: &str| parse_kernel(self.raw(key)).map_err(|e| CliError::config(format!("bad value for '{key}': {e}")));
        let spec = StrategySpec {
            kernel: kernel("strategy.kernel")?,
            embed_kernel: kernel("strategy.embed_kernel")?,
            embedding_dim: self.usize("train.embedding_dim")?,
            geodesic_weight: self.real("strategy.geodesic_weight")?,
            min_arm_batch: self.usize("strategy.min_arm_batch")?,
            ..StrategySpec::new(self.text("strategy.kind").parse()?)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn complexity_spec(&self) -> Result<ComplexitySpec, CliError> {
        let spec = ComplexitySpec {
            method: self.text("complexity.method").parse::<ComplexityMethod>()?,
            scale: self.real("complexity.scale")?,
            delta: self.real("complexity.delta")?,
            mc_draws: self.usize("complexity.mc_draws")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn topology(&self) -> Result<TopologyKind, CliError> {
        Ok(self.text("geodesic.topology").parse()?)
    }
}
