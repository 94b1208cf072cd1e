use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eelearn::experiment::{self, ExperimentConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "eelearn", version, about = "Experience-enhanced learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured tables as CSV.
    GenData(Common),
    /// Collect a rule-labeled training set.
    Label(Common),
    /// Online cardinality estimation with credibility gating.
    Eedl(Common),
    /// Index tuning with rule-guided exploration.
    Eerl(Common),
    /// Randomized check of the gated error bound.
    VerifyTheorem(Common),
    /// Rule labeling versus execution labeling timings.
    ElcBench(Common),
    /// Summarize an output directory into report.csv and a plot script.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

/// `expect` is the scenario the command runs; data commands accept any.
fn load(c: &Common, default: ScenarioKind, expect: Option<ScenarioKind>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => ExperimentConfig::for_scenario(default, vec![c.seed.unwrap_or(0)]),
    };
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let (Some(declared), Some(kind)) = (cfg.scenario, expect) {
        if declared != kind {
            return Err(Failure::Config(format!(
                "scenario: config declares `{}` but the command runs `{}`",
                declared.id(),
                kind.id()
            )));
        }
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn out_dir(c: &Common, name: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| Path::new("out").join(name))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Failure> {
    let rt = |e: eelearn::Error| Failure::Runtime(e.to_string());
    match cli.command {
        Command::GenData(c) => {
            let cfg = load(&c, ScenarioKind::EedlCardinality, None)?;
            experiment::gen_data(&cfg, &out_dir(&c, "gen-data")).map_err(rt)
        }
        Command::Label(c) => {
            let cfg = load(&c, ScenarioKind::EedlCardinality, None)?;
            experiment::label(&cfg, &out_dir(&c, "label")).map_err(rt)
        }
        Command::Eedl(c) => scenario(&c, ScenarioKind::EedlCardinality),
        Command::Eerl(c) => scenario(&c, ScenarioKind::EerlIndex),
        Command::VerifyTheorem(c) => scenario(&c, ScenarioKind::TheoremVerify),
        Command::ElcBench(c) => scenario(&c, ScenarioKind::ElcBench),
        Command::Report { out } => experiment::report(&out).map_err(rt),
    }
}

fn scenario(c: &Common, kind: ScenarioKind) -> Result<Vec<PathBuf>, Failure> {
    let cfg = load(c, kind, Some(kind))?;
    experiment::run_scenario(kind, &cfg, &out_dir(c, kind.id())).map_err(|e| Failure::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
