use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rectilinear::report::{run_command, Command, ExperimentConfig, Overrides};

#[derive(Parser, Debug)]
#[command(name = "rectilinear", version, about = "Barrier audits and exit-distribution experiments for rectilinear stable processes")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo paths per run.
    #[arg(long)]
    paths: Option<usize>,
    /// Stability index in (0, 2).
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Build θ and Θ, audit the admissibility conditions.
    ThetaBuild(Common),
    /// Check the generator identities against closed forms.
    GeneratorVerify(Common),
    /// Sign audits, jump-measure brackets and Monte Carlo lemma checks.
    LemmaAudit(Common),
    /// Simulate exits from the configured start points.
    SimulateExit(Common),
    /// Exit-radius histograms against the comparison density.
    DensityVerdict(Common),
    /// Small-ring exit probabilities against the comparison density.
    SmallRingCheck(Common),
    /// Redraw figures from files in the output directory.
    Plots(Common),
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Sub::ThetaBuild(c) => (Command::ThetaBuild, c),
            Sub::GeneratorVerify(c) => (Command::GeneratorVerify, c),
            Sub::LemmaAudit(c) => (Command::LemmaAudit, c),
            Sub::SimulateExit(c) => (Command::SimulateExit, c),
            Sub::DensityVerdict(c) => (Command::DensityVerdict, c),
            Sub::SmallRingCheck(c) => (Command::SmallRingCheck, c),
            Sub::Plots(c) => (Command::Plots, c),
        }
    }
}

fn run() -> anyhow::Result<bool> {
    let (cmd, common) = Cli::parse().command.split();
    let base = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    let config = base.apply(&Overrides {
        seed: common.seed,
        paths: common.paths,
        alpha: common.alpha,
        output_dir: common.out.map(|p| p.to_string_lossy().into_owned()),
    });
    let outcome = run_command(cmd, &config).with_context(|| format!("{} failed", cmd.name()))?;
    for line in &outcome.lines {
        println!("{line}");
    }
    println!("manifest: {}", outcome.manifest.display());
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
