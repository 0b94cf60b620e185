//! `t2fe`: runs each stage of the T₂-to-finite-element pipeline from one
//! JSON config. Exit status 0 on success, 1 on a runtime failure, 2 on a
//! usage or configuration error.

mod commands;
mod config;
mod staging;

use clap::{Parser, Subcommand};
use commands::{Ctx, Failure};
use config::{parse_fractions, MethodArg, PipelineConfig};
use std::path::PathBuf;
use std::process::ExitCode;
use t2fe::par::Execution;
use t2fe::sensitivity::Family;

#[derive(Clone, Debug)]
struct Fractions(Vec<f64>);

fn fractions_arg(s: &str) -> Result<Fractions, String> {
    parse_fractions(s).map(Fractions)
}

fn family_arg(s: &str) -> Result<Family, String> {
    Family::from_label(s).ok_or_else(|| format!("unknown family '{s}' (expected shift or slope)"))
}

#[derive(Parser, Debug)]
#[command(name = "t2fe", version, about = "T2-informed hexahedral finite-element pipeline")]
struct Cli {
    /// Pipeline config (JSON); required by every stage except `demo` and `check-overlap`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Voxel-to-element transfer rule.
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Perturbation family: shift or slope.
    #[arg(long, global = true, value_parser = family_arg)]
    family: Option<Family>,
    /// Comma-separated perturbation fractions, e.g. -0.1,0,0.1.
    #[arg(long, global = true, value_parser = fractions_arg, allow_hyphen_values = true)]
    fractions: Option<Fractions>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Check the config and inputs without writing anything.
    #[arg(long, global = true)]
    validate: bool,
    /// Seed for the Monte-Carlo overlap check.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Fit T2 from the multi-echo volumes.
    FitT2,
    /// Edge-preserving smoothing of the T2 volume.
    Smooth,
    /// Map the T2 volume onto mesh elements.
    Assign,
    /// Convert element T2 to dynamic modulus.
    Relate,
    /// Write perturbed relations (and moduli) for each fraction.
    Perturb,
    /// Solve the finite-element model.
    Solve,
    /// Run the full pipeline and the sensitivity study.
    Study,
    /// Re-emit report tables from a finished study.
    Report,
    /// Write the bundled synthetic fixture.
    Demo,
    /// Compare exact hex/voxel overlaps with a Monte-Carlo estimate.
    CheckOverlap {
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::FitT2 => "fit-t2",
            Command::Smooth => "smooth",
            Command::Assign => "assign",
            Command::Relate => "relate",
            Command::Perturb => "perturb",
            Command::Solve => "solve",
            Command::Study => "study",
            Command::Report => "report",
            Command::Demo => "demo",
            Command::CheckOverlap { .. } => "check-overlap",
        }
    }
}

fn load_config(cli: &Cli, stage: &'static str) -> Result<(PipelineConfig, Option<PathBuf>), Failure> {
    let Some(path) = &cli.config else {
        return Err(Failure::usage(stage, anyhow::anyhow!("--config is required")));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(stage, anyhow::anyhow!("{}: {e}", path.display())))?;
    let cfg: PipelineConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(stage, anyhow::anyhow!("{}: {e}", path.display())))?;
    Ok((cfg.anchor(path), Some(path.clone())))
}

fn run(cli: Cli) -> Result<String, Failure> {
    let stage = cli.command.name();
    if cli.jobs == Some(0) {
        return Err(Failure::usage(stage, anyhow::anyhow!("--jobs must be at least 1")));
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let exec = if cli.jobs == Some(1) { Execution::Sequential } else { Execution::Parallel };

    let (mut cfg, config_path) = match cli.command {
        Command::Demo | Command::CheckOverlap { .. } => (PipelineConfig::default(), None),
        _ => load_config(&cli, stage)?,
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    } else if config_path.is_none() {
        cfg.out = PathBuf::from(if matches!(cli.command, Command::Demo) { "demo" } else { "out" });
    }
    if let Some(m) = cli.method {
        cfg.assign.method = m;
    }
    if let Some(f) = cli.family {
        cfg.study.family = f;
    }
    if let Some(Fractions(f)) = &cli.fractions {
        cfg.study.fractions = f.clone();
    }
    cfg.study.execution = exec;
    cfg.study.solver.execution = exec;

    let ctx = Ctx { cfg, exec, validate_only: cli.validate };
    match cli.command {
        Command::FitT2 => commands::fit_t2(&ctx),
        Command::Smooth => commands::smooth(&ctx),
        Command::Assign => commands::assign(&ctx),
        Command::Relate => commands::relate(&ctx),
        Command::Perturb => commands::perturb(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Study => commands::study(&ctx),
        Command::Report => commands::report(&ctx),
        Command::Demo => commands::demo(&ctx),
        Command::CheckOverlap { pairs, samples } => commands::check_overlap(&ctx, pairs, samples, cli.seed.unwrap_or(1)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}: {:#}", f.stage, f.error);
            ExitCode::from(f.code)
        }
    }
}
