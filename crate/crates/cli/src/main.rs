//! `smallgain` command-line tool.
//!
//! Exit status: 0 when the analysis ran and every verdict is positive, 2 when it
//! ran and some verdict is negative, 1 on any error.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use smallgain::Exec;

use crate::commands::Outcome;
use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "smallgain",
    version,
    about = "Vector small-gain checks, gain synthesis and simulation-based validation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `analysis.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Args, Debug)]
struct InputArg {
    /// JSON run configuration.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cyclic small-gain check of `gains`.
    CheckSg(InputArg),
    /// Composite gain from `synthesis`.
    Synth(InputArg),
    /// Iterate `x ↦ Γ(x)` from `x0`.
    Iterate(InputArg),
    /// Simulate `system` from `x0` or `history`.
    Simulate(InputArg),
    /// Implication check, simulation and tail checks against `lyapunov`.
    Validate(InputArg),
    /// Run a pinned recipe.
    Repro {
        /// example51, example52, prop27-sweep or rk4-order
        name: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckSg(_) => "check-sg",
            Command::Synth(_) => "synth",
            Command::Iterate(_) => "iterate",
            Command::Simulate(_) => "simulate",
            Command::Validate(_) => "validate",
            Command::Repro { .. } => "repro",
        }
    }
}

fn write_outputs(dir: &Path, force: bool, files: &[(&str, String)]) -> Result<(), String> {
    if !force {
        let existing: Vec<&str> = files.iter().map(|(n, _)| *n).filter(|n| dir.join(n).exists()).collect();
        if !existing.is_empty() {
            return Err(format!(
                "{} already contains {}; pass --force to overwrite",
                dir.display(),
                existing.join(", ")
            ));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn dispatch(cli: &Cli, exec: Exec) -> Result<(Outcome, serde_json::Value), String> {
    let load = |input: &Path| -> Result<RunConfig, String> {
        let mut cfg = config::load(input)?;
        if let Some(seed) = cli.seed {
            cfg.analysis.seed = seed;
        }
        Ok(cfg)
    };
    let with_cfg = |input: &Path, f: &dyn Fn(&RunConfig) -> Result<Outcome, String>| {
        let cfg = load(input)?;
        let outcome = f(&cfg)?;
        let effective = serde_json::to_value(&cfg).map_err(|e| e.to_string())?;
        Ok((outcome, effective))
    };
    match &cli.command {
        Command::CheckSg(a) => with_cfg(&a.input, &commands::check_sg),
        Command::Synth(a) => with_cfg(&a.input, &commands::synth),
        Command::Iterate(a) => with_cfg(&a.input, &commands::iterate_cmd),
        Command::Simulate(a) => with_cfg(&a.input, &commands::simulate),
        Command::Validate(a) => with_cfg(&a.input, &|cfg| commands::validate(cfg, exec)),
        Command::Repro { name } => {
            let seed = cli.seed.unwrap_or(0);
            let outcome = commands::repro_cmd(name, seed, exec)?;
            Ok((outcome, json!({ "recipe": name, "seed": seed })))
        }
    }
}

fn run(cli: &Cli) -> Result<bool, String> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    let clock = Instant::now();
    let exec = match cli.jobs {
        Some(0) => return Err("--jobs must be at least 1".into()),
        Some(1) => Exec::Sequential,
        _ => Exec::Parallel,
    };
    let (outcome, effective) = match cli.jobs {
        #[cfg(feature = "parallel")]
        Some(j) if j > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| e.to_string())?
            .install(|| dispatch(cli, exec))?,
        _ => dispatch(cli, exec)?,
    };
    let meta = json!({
        "tool": "smallgain",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "started_unix_ms": started as u64,
        "elapsed_ms": clock.elapsed().as_millis() as u64,
        "jobs": cli.jobs,
        "parallel_build": cfg!(feature = "parallel"),
        "positive": outcome.positive,
    });
    let mut files = vec![
        ("report.json", pretty(&outcome.report)),
        ("effective_config.json", pretty(&effective)),
        ("run_meta.json", pretty(&meta)),
    ];
    files.extend(outcome.files.iter().cloned());
    write_outputs(&cli.out, cli.force, &files)?;
    print!("{}", outcome.summary);
    println!("wrote {}", cli.out.display());
    Ok(outcome.positive)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
