use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use syncrate::harness::{self, ExperimentConfig, ExperimentKind};
use syncrate::mck::{solve_exact_dp, solve_fptas, MckInstance};
use syncrate::netsim::trace::write_slot_trace;
use syncrate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "syncrate",
    version,
    about = "Synchronization-rate optimization and learning for distributed controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal rates from the analytical consistency model.
    SolveObj1 {
        #[command(flatten)]
        common: Common,
        /// Solve a multiple-choice knapsack instance in text form instead.
        #[arg(long, conflicts_with_all = ["config", "preset"])]
        instance: Option<PathBuf>,
        /// Use the approximation scheme with this ε (with --instance).
        #[arg(long, requires = "instance")]
        eps: Option<f64>,
    },
    /// Learn rates online against the network simulator.
    Train(Common),
    /// Performance of homogeneous rates at several levels.
    RateCurve(Common),
    /// Empirical check of the approximation guarantees.
    BoundCheck(Common),
    /// Training time against performance over (σ, τ).
    Tradeoff(Common),
    /// Run any experiment document.
    Run(Common),
    /// List built-in presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// Experiment document (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment name (see `syncrate presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Result CSV path; defaults to the document's `output` or stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Seeds as `a..b` or a comma list, replacing the document's.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads.
    #[arg(long, short)]
    jobs: Option<usize>,
    /// Write learner traces as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write per-slot simulator observations as CSV.
    #[arg(long)]
    slot_trace: Option<PathBuf>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn load(common: &Common, kind: Option<ExperimentKind>, default_preset: &str) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => harness::preset(name)?,
        (None, None) => harness::preset(default_preset)?,
    };
    if let Some(kind) = kind {
        match cfg.kind {
            None => cfg.kind = Some(kind),
            Some(k) if k == kind => {}
            Some(k) => {
                return Err(Error::Config(format!(
                    "document is a {} experiment, not {}",
                    k.name(),
                    kind.name()
                )))
            }
        }
    }
    if let Some(seeds) = &common.seeds {
        cfg.seeds = parse_seeds(seeds)?;
    }
    Ok(cfg)
}

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(common: &Common, kind: Option<ExperimentKind>, default_preset: &str) -> Result<bool> {
    let cfg = load(common, kind, default_preset)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let out = pool.install(|| harness::run_experiment(&cfg))?;
    let output = common.output.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from));
    let mut w = open_output(output.as_ref())?;
    out.table.write_csv(&mut w)?;
    w.flush()?;
    if let Some(p) = &common.trace {
        std::fs::write(p, out.traces_json()?)?;
    }
    if let Some(p) = &common.slot_trace {
        write_slot_trace(BufWriter::new(File::create(p)?), &out.slot_trace)?;
    }
    for row in out.table.rows().iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "error: {} [{}]: {}",
            row.metric,
            row.params,
            row.error.as_deref().unwrap_or_default()
        );
    }
    Ok(!out.table.has_errors())
}

fn solve_instance(path: &PathBuf, eps: Option<f64>) -> Result<bool> {
    let inst: MckInstance = std::fs::read_to_string(path)?.parse()?;
    let sol = match eps {
        Some(e) => solve_fptas(&inst, e)?,
        None => solve_exact_dp(&inst),
    };
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &sol)?;
    writeln!(out)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SolveObj1 {
            instance: Some(path),
            eps,
            ..
        } => solve_instance(path, *eps),
        Command::SolveObj1 { common, .. } => run(common, Some(ExperimentKind::Obj1Sweep), "obj1-budget"),
        Command::Train(c) => run(c, Some(ExperimentKind::Obj2Train), "routing-train"),
        Command::RateCurve(c) => run(c, Some(ExperimentKind::RateCurve), "routing-rate-curve"),
        Command::BoundCheck(c) => run(c, Some(ExperimentKind::BoundCheck), "bound-check"),
        Command::Tradeoff(c) => run(c, Some(ExperimentKind::TradeoffSweep), "routing-tradeoff"),
        Command::Run(c) => run(c, None, "obj1-budget"),
        Command::Presets => {
            for name in harness::preset_names() {
                println!("{name}");
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
