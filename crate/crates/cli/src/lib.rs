//! `boab` command-line experiments: data generation, training, bound-based
//! weight selection, evaluation, benchmarks and topology runs, each leaving
//! a manifest that can be replayed.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{execute, CommandKind};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{metric_differences, unix_now, write_atomic, RunManifest, MANIFEST_FILE};

pub use crate::commands::Outcome;

#[derive(Debug, Parser)]
#[command(name = "boab", version, about = "Multi-treatment representation balancing with bound-optimized weight selection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory (default runs/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Any config key, `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Print every config key with its default and exit.
    #[arg(long)]
    pub help_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    Hard,
    Dose,
    Tree,
    Cycle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(value_enum)]
        generator: Generator,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "K", alias = "k")]
        k: Option<usize>,
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Train one model at a fixed balancing weight.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Select the balancing weight by the profile bound.
    Boab {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<String>,
        /// Comma-separated weights.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// PEHE and dose-response curve of a saved model.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Timing and concentration tables.
    Bench {
        /// Comma-separated treatment counts for the timing table.
        #[arg(long = "K", alias = "k")]
        k_list: Option<String>,
        #[arg(long)]
        strategies: Option<String>,
        #[arg(long)]
        kind: Option<String>,
    },
    /// Train on a treatment topology and trace the embedding geometry.
    Geodesic {
        #[arg(long)]
        topology: Option<String>,
        #[arg(long)]
        weight: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Rerun the command recorded in a manifest and compare its metrics.
    Replay {
        /// A manifest.json, or the run directory holding one.
        manifest: PathBuf,
    },
}

/// Result of a finished command.
#[derive(Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    /// Set for replays: metrics compared against the original manifest.
    pub compared: Option<usize>,
}

fn command_overrides(cmd: &Command) -> (CommandKind, Vec<(&'static str, String)>) {
    fn push<T: ToString>(v: &mut Vec<(&'static str, String)>, key: &'static str, value: &Option<T>) {
        if let Some(x) = value {
            v.push((key, x.to_string()));
        }
    }
    let mut v = Vec::new();
    let kind = match cmd {
        Command::Gen { generator, n, k, kappa } => {
            let name = match generator {
                Generator::Hard => "hard",
                Generator::Dose => "dose",
                Generator::Tree => "tree",
                Generator::Cycle => "cycle",
            };
            v.push(("data.generator", name.to_string()));
            push(&mut v, "data.n", n);
            push(&mut v, "data.k", k);
            push(&mut v, "data.kappa", kappa);
            CommandKind::Gen
        }
        Command::Train { data, strategy, alpha, epochs } => {
            push(&mut v, "data.path", &data.as_ref().map(|p| p.display()));
            push(&mut v, "strategy.kind", strategy);
            push(&mut v, "train.alpha", alpha);
            push(&mut v, "train.epochs", epochs);
            CommandKind::Train
        }
        Command::Boab { data, strategy, grid, bootstrap, epochs } => {
            push(&mut v, "data.path", &data.as_ref().map(|p| p.display()));
            push(&mut v, "strategy.kind", strategy);
            push(&mut v, "boab.grid", grid);
            push(&mut v, "boab.bootstrap", bootstrap);
            push(&mut v, "train.epochs", epochs);
            CommandKind::Boab
        }
        Command::Eval { data, model } => {
            push(&mut v, "data.path", &data.as_ref().map(|p| p.display()));
            push(&mut v, "eval.model", &model.as_ref().map(|p| p.display()));
            CommandKind::Eval
        }
        Command::Bench { k_list, strategies, kind } => {
            push(&mut v, "bench.k_list", k_list);
            push(&mut v, "bench.strategies", strategies);
            push(&mut v, "bench.kind", kind);
            CommandKind::Bench
        }
        Command::Geodesic { topology, weight, alpha, epochs } => {
            push(&mut v, "geodesic.topology", topology);
            push(&mut v, "geodesic.weight", weight);
            push(&mut v, "train.alpha", alpha);
            push(&mut v, "train.epochs", epochs);
            CommandKind::Geodesic
        }
        Command::Replay { .. } => unreachable!("replay has no config overrides"),
    };
    (kind, v)
}

/// Defaults, then the config file, then `--set`, then the dedicated flags.
pub fn effective_config(global: &GlobalArgs, overrides: &[(&str, String)]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &global.config {
        cfg.apply_file(path)?;
    }
    for pair in &global.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = global.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(w) = global.workers {
        cfg.set("workers", &w.to_string())?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

/// Runs `kind` into `dir` and writes the effective config and the manifest.
pub fn run_command(kind: CommandKind, cfg: &RunConfig, dir: &Path) -> Result<RunManifest, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    let started = unix_now();
    let mut outcome = execute(kind, cfg, dir)?;
    write_atomic(&dir.join("config.txt"), cfg.render().as_bytes())?;
    outcome.files.push("config.txt".into());
    let manifest = RunManifest {
        tool: "boab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: kind.name().into(),
        seed: cfg.seed()?,
        workers: cfg.usize("workers")?,
        config: cfg.values().clone(),
        started,
        finished: unix_now(),
        files: outcome.files,
        metrics: outcome.metrics,
        timings: outcome.timings,
    };
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Reruns a manifest's command with its recorded config into `dir` and
/// fails if any metric differs in a single bit.
pub fn replay(manifest_path: &Path, dir: &Path) -> Result<(RunManifest, usize), CliError> {
    let path = if manifest_path.is_dir() { manifest_path.join(MANIFEST_FILE) } else { manifest_path.to_path_buf() };
    let original = RunManifest::load(&path)?;
    let kind = CommandKind::parse(&original.command)?;
    let cfg = RunConfig::from_map(&original.config)?;
    let again = run_command(kind, &cfg, dir)?;
    let diff = metric_differences(&original.metrics, &again.metrics);
    if !diff.is_empty() {
        return Err(CliError::numeric(format!(
            "replay of {} differs in {} metric(s): {}",
            path.display(),
            diff.len(),
            diff.join(", ")
        )));
    }
    Ok((again, original.metrics.len()))
}

pub fn run(cli: Cli) -> Result<Option<RunSummary>, CliError> {
    if cli.global.help_config {
        print!("{}", config::help_text());
        return Ok(None);
    }
    let Some(command) = cli.command else {
        return Err(CliError::config("no command given (gen, train, boab, eval, bench, geodesic, replay)"));
    };
    if let Command::Replay { manifest } = &command {
        let source = if manifest.is_dir() { manifest.clone() } else { manifest.parent().map(Path::to_path_buf).unwrap_or_default() };
        let dir = cli.global.out.clone().unwrap_or_else(|| source.join("replay"));
        let (m, compared) = replay(manifest, &dir)?;
        return Ok(Some(RunSummary { dir, manifest: m, compared: Some(compared) }));
    }
    let (kind, overrides) = command_overrides(&command);
    let cfg = effective_config(&cli.global, &overrides)?;
    let dir = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(kind.name()));
    let manifest = run_command(kind, &cfg, &dir)?;
    Ok(Some(RunSummary { dir, manifest, compared: None }))
}

/// Human-readable lines printed after a successful run.
pub fn summary_lines(s: &RunSummary) -> Vec<String> {
    let mut lines = vec![format!("{} -> {}", s.manifest.command, s.dir.join(MANIFEST_FILE).display())];
    if let Some(n) = s.compared {
        lines.push(format!("replay: {n} metrics identical"));
    }
    for (k, v) in &s.manifest.metrics {
        lines.push(format!("  {k} = {v}"));
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_set() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        fs::write(&file, "train.epochs = 40\nstrategy.kind = pair\nseed = 3\n").unwrap();
        let global = GlobalArgs {
            config: Some(file),
            set: vec!["train.epochs=30".into()],
            seed: Some(9),
            ..GlobalArgs::default()
        };
        let cfg = effective_config(&global, &[("train.epochs", "20".into())]).unwrap();
        assert_eq!(cfg.usize("train.epochs").unwrap(), 20);
        assert_eq!(cfg.text("strategy.kind"), "pair");
        assert_eq!(cfg.seed().unwrap(), 9);
        assert!(cfg.render().contains("train.epochs = 20\n"));
    }

    #[test]
    fn gen_defaults_are_the_hard_setting() {
        let cli = Cli::try_parse_from(["boab", "gen", "hard", "--seed", "7"]).unwrap();
        let (kind, ov) = command_overrides(cli.command.as_ref().unwrap());
        assert_eq!(kind, CommandKind::Gen);
        let cfg = effective_config(&cli.global, &ov).unwrap();
        let (ds, _) = commands::load_or_generate(&cfg).unwrap();
        assert_eq!((ds.n(), ds.d(), ds.k), (1500, 20, 4));
        assert_eq!(ds.provenance.params["kappa"], 5.0);
    }

    #[test]
    fn unknown_set_key_is_a_config_error() {
        let cli = Cli::try_parse_from(["boab", "train", "--set", "alhpa=1"]).unwrap();
        let err = run(cli).unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.to_string().contains("'alhpa'"));
    }
}
