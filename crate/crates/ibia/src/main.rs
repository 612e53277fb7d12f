use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ibia::harness::{load_instance, parse_manifest, run_batch, solve, RunOptions, Status};
use ibia::report::{batch_table, metrics};
use ibia::uai::serialize_mpe;
use ibia_core::{EngineConfig, VariablePriority};

/// Approximate MPE inference for Bayesian networks in UAI format.
#[derive(Parser)]
#[command(name = "ibia", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Run every instance of a manifest of `model evidence exact` triples.
    Batch(BatchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Priority {
    FewestCliques,
    Random,
}

#[derive(Args)]
struct EngineArgs {
    /// Clique size bound (log2 states) while building partitions.
    #[arg(long, default_value_t = 20.0)]
    mcs_p: f64,
    /// Clique size bound after approximation; lowered on demand, down to --mcs-im-floor.
    #[arg(long, default_value_t = 15.0)]
    mcs_im: f64,
    #[arg(long, default_value_t = 2.0)]
    mcs_im_floor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent runs per instance; the best assignment is kept.
    #[arg(long, default_value_t = 1)]
    sweep_seeds: usize,
    /// Seconds per instance.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long, value_enum, default_value_t = Priority::FewestCliques)]
    priority: Priority,
    /// Worker threads for sweeps and batches; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Disable the dead-end retry and restart.
    #[arg(long)]
    no_fallback: bool,
    /// Include wall-clock time in reports.
    #[arg(long)]
    timing: bool,
    /// Base of reported logarithms and of exact values given as input.
    #[arg(long, default_value_t = 10.0)]
    log_base: f64,
}

impl EngineArgs {
    fn options(&self) -> RunOptions {
        let priority = match self.priority {
            Priority::FewestCliques => VariablePriority::FewestCliques,
            Priority::Random => VariablePriority::Random,
        };
        RunOptions {
            engine: EngineConfig {
                mcs_p: self.mcs_p,
                mcs_im: self.mcs_im,
                mcs_im_floor: self.mcs_im_floor,
                seed: self.seed,
                priority,
                fallback: !self.no_fallback,
            },
            sweep_seeds: self.sweep_seeds.max(1),
            time_limit: Some(Duration::from_secs_f64(self.time_limit.max(0.0))),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    evidence: Option<PathBuf>,
    /// Exact log MPE value, in --log-base, to report the errors against.
    #[arg(long, allow_negative_numbers = true)]
    exact_log: Option<f64>,
    /// Result file; defaults to the model path with `.MPE` appended.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Metrics file; defaults to standard output.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct BatchArgs {
    manifest: PathBuf,
    /// Summary table file; defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

fn init_pool(jobs: usize) {
    if jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
}

fn check_base(base: f64) -> Result<(), String> {
    if base > 0.0 && base != 1.0 && base.is_finite() {
        Ok(())
    } else {
        Err(format!("--log-base must be positive and not 1, got {base}"))
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    check_base(args.engine.log_base)?;
    let model = args.model.ok_or("--model is required (or use the batch subcommand)")?;
    init_pool(args.engine.jobs);
    let (net, evidence) = load_instance(&model, args.evidence.as_deref()).map_err(|e| e.to_string())?;
    let opts = args.engine.options();
    let out = solve(&net, &evidence, &opts);
    let status = out.status();
    if let Ok(r) = &out.chosen().outcome {
        let states = r.assignment.to_dense(net.num_vars()).expect("complete assignment");
        let path = args.output.unwrap_or_else(|| {
            let mut p = model.clone().into_os_string();
            p.push(".MPE");
            p.into()
        });
        emit(Some(&path), &serialize_mpe(&states))?;
    }
    emit(args.metrics.as_deref(), &metrics(&out, args.exact_log, args.engine.timing, args.engine.log_base))?;
    if args.engine.timing {
        eprintln!("wall time {:.3}s", out.elapsed.as_secs_f64());
    }
    Ok(if status == Status::Solved { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn batch(args: BatchArgs) -> Result<ExitCode, String> {
    check_base(args.engine.log_base)?;
    init_pool(args.engine.jobs);
    let text = std::fs::read_to_string(&args.manifest).map_err(|e| format!("{}: {e}", args.manifest.display()))?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base).map_err(|e| e.to_string())?;
    let rows = run_batch(&entries, &args.engine.options());
    emit(args.output.as_deref(), &batch_table(&rows, args.engine.timing, args.engine.log_base))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Batch(b)) => batch(b),
        None => run(cli.run),
    };
    result.unwrap_or_else(|msg| {
        eprintln!("error: {msg}");
        ExitCode::from(1)
    })
}
