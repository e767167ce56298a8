//! `matchlab` command-line driver.

mod config;
mod output;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use matchlab::economy::Family;
use matchlab::estimation::Objective;
use matchlab::io::read_json;
use matchlab::strategy::StrategyKind;

use config::{locate, Command, ConfigError, RunConfig};
use output::{Manifest, Outputs};

#[derive(Parser)]
#[command(name = "matchlab", version, about = "Deferred-acceptance simulations, estimation and counterfactuals")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw economies, generate reports and run DA.
    Simulate(Flags),
    /// Fit the WTT and stability estimators on simulated samples.
    Estimate(Flags),
    /// Evaluate the priority reform under each prediction approach.
    Counterfactual(Flags),
    /// Deviation sweeps and cutoff convergence.
    Converge(Flags),
    /// Full Monte Carlo run: summary statistics and per-sample series.
    Replicate(Flags),
    /// Run whatever command the config file names.
    Run(Flags),
    /// Re-run a manifest and check that every output hash matches.
    Replay {
        manifest: PathBuf,
        /// Directory for the replayed outputs.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Dgp {
    Tt,
    Pim,
    Prm,
    Theorem1,
    AppendixB,
    Custom,
}

impl From<Dgp> for StrategyKind {
    fn from(d: Dgp) -> Self {
        match d {
            Dgp::Tt => StrategyKind::Tt,
            Dgp::Pim => StrategyKind::Pim,
            Dgp::Prm => StrategyKind::Prm,
            Dgp::Theorem1 => StrategyKind::Theorem1,
            Dgp::AppendixB => StrategyKind::AppendixB,
            Dgp::Custom => StrategyKind::Custom,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Assumption {
    Wtt,
    Stability,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    FullSupport,
    McGeography,
    Example1,
    AppendixB,
}

#[derive(Args, Clone)]
struct Flags {
    /// JSON run configuration (a manifest also works).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Market size, or a comma-separated grid for `converge`.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Reporting process or strategy profile.
    #[arg(long, value_enum)]
    dgp: Option<Dgp>,
    #[arg(long, value_enum)]
    assumption: Option<Assumption>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] matchlab::io::IoError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
    #[error("replay mismatch: {0}")]
    Replay(String),
}

fn resolve(command: Option<Command>, flags: &Flags) -> Result<RunConfig, ConfigError> {
    let loaded = flags.config.as_deref().map(RunConfig::load).transpose()?;
    let mut cfg = loaded.as_ref().map(|(c, _)| c.clone()).unwrap_or_default();
    if let Some(c) = command {
        cfg.command = c;
    }
    if let Some(f) = flags.family {
        cfg.economy.family = match f {
            FamilyArg::FullSupport => Family::FullSupport,
            FamilyArg::McGeography => Family::McGeography,
            FamilyArg::Example1 => Family::Example1,
            FamilyArg::AppendixB => Family::AppendixB,
        };
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(n) = flags.samples {
        cfg.n_samples = n;
    }
    if let Some(d) = flags.dgp {
        cfg.strategy.kind = d.into();
    }
    if let Some(a) = flags.assumption {
        cfg.assumptions = vec![match a {
            Assumption::Wtt => Objective::Wtt,
            Assumption::Stability => Objective::Stability,
        }];
    }
    if let Some(o) = &flags.out {
        cfg.output_dir = o.clone();
    }
    if let Some(ks) = &flags.k {
        if cfg.command == Command::Converge {
            cfg.k_grid = ks.clone();
        } else {
            match ks.as_slice() {
                [k] => cfg.k = Some(*k),
                _ => return Err(ConfigError::Flags(config::Invalid { key: "k".into(), message: "expected a single market size".into() })),
            }
        }
    }
    let file = flags.config.as_deref().zip(loaded.as_ref().map(|(_, t)| t.as_str()));
    cfg.validate().map_err(|e| locate(e, file))?;
    Ok(cfg)
}

/// Runs a validated config; on failure every file it wrote is removed.
fn execute(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let mut out = Outputs::create(&cfg.output_dir)?;
    match pipeline::run(cfg, &mut out) {
        Ok(()) => Ok(out.finish(cfg)?),
        Err(e) => {
            out.discard();
            Err(e.into())
        }
    }
}

fn replay(manifest_path: &Path, dir: &Path) -> Result<usize, CliError> {
    let original: Manifest = read_json(manifest_path)?;
    let cfg = RunConfig { output_dir: dir.to_path_buf(), ..original.config.clone() };
    cfg.validate().map_err(ConfigError::Flags)?;
    let fresh = execute(&cfg)?;
    let mut bad = Vec::new();
    for (name, hash) in &original.files {
        match fresh.files.get(name) {
            Some(h) if h == hash => {}
            Some(_) => bad.push(format!("{name} differs")),
            None => bad.push(format!("{name} missing")),
        }
    }
    bad.extend(fresh.files.keys().filter(|k| !original.files.contains_key(*k)).map(|k| format!("{k} unexpected")));
    if bad.is_empty() {
        Ok(original.files.len())
    } else {
        Err(CliError::Replay(bad.join(", ")))
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("MATCHLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Cmd::Replay { manifest, out } => replay(&manifest, &out).map(|n| println!("replay: {n} files identical")),
        cmd => {
            let (command, flags) = match cmd {
                Cmd::Simulate(f) => (Some(Command::Simulate), f),
                Cmd::Estimate(f) => (Some(Command::Estimate), f),
                Cmd::Counterfactual(f) => (Some(Command::Counterfactual), f),
                Cmd::Converge(f) => (Some(Command::Converge), f),
                Cmd::Replicate(f) => (Some(Command::Replicate), f),
                Cmd::Run(f) => (None, f),
                Cmd::Replay { .. } => unreachable!(),
            };
            resolve(command, &flags).map_err(CliError::from).and_then(|cfg| {
                let m = execute(&cfg)?;
                println!("{}: wrote {} files to {}", serde_json::to_string(&m.command).unwrap_or_default().trim_matches('"'), m.files.len(), cfg.output_dir.display());
                Ok(())
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
