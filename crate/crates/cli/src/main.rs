//! `virso-kit`: data generation, graph preparation, training, evaluation,
//! ablations, gradient checks and benchmarking from one JSON config.

mod commands;
mod config;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use virso_core::model::Variant;

use config::{GraphMethod, Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad config, flags or inputs; exit code 1.
    Validation(String),
    /// Failure while doing the work; exit code 2.
    Runtime(String),
}

impl From<virso_core::Error> for CliError {
    fn from(e: virso_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Full,
    Spectral,
    Spatial,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Spectral => Variant::SpectralOnly,
            VariantArg::Spatial => Variant::SpatialOnly,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "virso-kit", version, about = "Spectral-spatial graph neural operator pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON run configuration (schema_version 1); defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives fully deterministic runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, global = true, value_enum)]
    graph: Option<GraphMethod>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic point cloud and dataset.
    GenData,
    /// Build the graph, edge weights, eigenbasis and anchors.
    PrepGraph,
    /// Train a model and evaluate the best checkpoint on the test split.
    Train,
    /// Evaluate a trained checkpoint.
    Eval {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train every variant over every graph method and tabulate the errors.
    Ablate,
    /// Finite-difference check of the model gradients.
    Gradcheck,
    /// Measure latency (and energy from a power trace) of a checkpoint.
    Bench,
    /// Recompute EDP and efficiency columns from published inputs.
    Report {
        /// CSV with model, error_percent, flops, energy_j_per_it,
        /// latency_ms_per_it, power_w, scope.
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        allow_mixed_scope: bool,
    },
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("VIRSO_KIT_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp_secs().try_init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    if let Some(t) = g.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let overrides = Overrides { out: g.out.clone(), seed: g.seed, variant: g.variant.map(Into::into), graph: g.graph };
    let cfg = RunConfig::load(g.config.as_deref())?.resolve(&overrides)?;
    let threads = g.threads.unwrap_or_else(rayon::current_num_threads);
    let ws = workspace::Workspace::new(cfg, threads);
    match cli.command {
        Command::GenData => commands::gen_data(&ws),
        Command::PrepGraph => commands::prep_graph(&ws, ws.cfg.graph.method).map(|_| ()),
        Command::Train => commands::train(&ws),
        Command::Eval { split } => commands::eval(&ws, &split),
        Command::Ablate => commands::ablate(&ws),
        Command::Gradcheck => commands::gradcheck(&ws),
        Command::Bench => commands::bench(&ws),
        Command::Report { inputs, allow_mixed_scope } => commands::report(&ws, &inputs, allow_mixed_scope),
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
