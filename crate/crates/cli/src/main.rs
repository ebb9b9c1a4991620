//! `blockmix` experiment runner.
//!
//! Exit codes: 0 success, 1 validation or run failure, 2 configuration error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{ConfigError, Ctx, Status};
use config::Config;
use output::OutDir;

#[derive(Parser, Debug)]
#[command(
    name = "blockmix",
    version,
    about = "Block dynamics experiments for colorings and the hard-core model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for replica-level parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Skip the ergodicity guards.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write the configured graph as an edge list.
    GenGraph,
    /// Build a block partition and validate it.
    Partition,
    /// Validate the configured partition.
    Validate,
    /// Exact samples of one block given a greedy boundary.
    Sample,
    /// Run chains with probes.
    Run,
    /// Coupling experiments: contraction, coupling time, trace, propagation.
    Couple,
    /// Percolation tails, domination test and β-weights.
    Percolate,
    /// Local uniformity of available colors.
    Uniformity,
    /// Exact kernels, stationary law, relaxation and comparison.
    Spectral,
    /// Block-update cost scaling.
    Bench,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GenGraph => "gen-graph",
            Command::Partition => "partition",
            Command::Validate => "validate",
            Command::Sample => "sample",
            Command::Run => "run",
            Command::Couple => "couple",
            Command::Percolate => "percolate",
            Command::Uniformity => "uniformity",
            Command::Spectral => "spectral",
            Command::Bench => "bench",
        }
    }

    fn run(self, ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
        match self {
            Command::GenGraph => commands::gen_graph(ctx, out),
            Command::Partition => commands::partition(ctx, out),
            Command::Validate => commands::validate(ctx, out),
            Command::Sample => commands::sample(ctx, out),
            Command::Run => commands::run(ctx, out),
            Command::Couple => commands::couple(ctx, out),
            Command::Percolate => commands::percolate(ctx, out),
            Command::Uniformity => commands::uniformity(ctx, out),
            Command::Spectral => commands::spectral(ctx, out),
            Command::Bench => commands::bench(ctx, out),
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, String> {
    let path = cli.config.as_ref().ok_or("--config is required")?;
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    let mut cfg: Config =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if cfg.out.is_none() {
        return Err("no output directory (set \"out\" or pass --out)".into());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("config error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let target = cfg.out.clone().expect("checked in load_config");
    let out = match OutDir::create(&target) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let mut ctx = Ctx {
        seed: cfg.seed,
        force: cli.force,
        cfg,
    };
    let status = match cli.command.run(&mut ctx, &out) {
        Ok(s) => s,
        Err(e) => {
            let code = if e.is::<ConfigError>() { 2 } else { 1 };
            eprintln!(
                "{}: {e:#}",
                if code == 2 { "config error" } else { "error" }
            );
            return ExitCode::from(code);
        }
    };
    let (ok, message) = match &status {
        Status::Ok => (true, None),
        Status::Invalid(m) => (false, Some(m.clone())),
    };
    let finish = || -> Result<PathBuf> {
        out.json("resolved-config.json", &ctx.cfg)?;
        out.json(
            "metadata.json",
            &json!({
                "version": env!("CARGO_PKG_VERSION"),
                "subcommand": cli.command.name(),
                "seed": ctx.seed,
                "threads": rayon::current_num_threads(),
                "started_unix": started,
                "wall_seconds": clock.elapsed().as_secs_f64(),
                "ok": ok,
                "message": message,
            }),
        )?;
        Ok(target.clone())
    };
    if let Err(e) = finish().and_then(|_| out.commit()) {
        eprintln!("error: writing outputs: {e:#}");
        return ExitCode::from(1);
    }
    match status {
        Status::Ok => ExitCode::SUCCESS,
        Status::Invalid(m) => {
            eprintln!("validation failed: {m}");
            ExitCode::from(1)
        }
    }
}
