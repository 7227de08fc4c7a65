//! `phaseret` command line: scene synthesis, solver runs, trace and
//! spectrum analysis, experiment orchestration, and raster export.
//!
//! Exit codes: 0 on success, 1 when a run or experiment fails its
//! checks, 2 on usage or configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phaseret::grid::Image;
use phaseret::measure::{pad_support, MagnitudeData, SupportMask};
use phaseret::project::ConstraintSet;
use phaseret::solve::{random_torus_start, run, IterMap, SolverConfig};
use phaseret::synth::{generate, Generated, SceneSpec};
use phaseret_cli::config::{ExperimentConfig, RunManifest};
use phaseret_cli::experiments::{convert_raster, magnitude_of, read_trace, run_experiment};

#[derive(Parser)]
#[command(
    name = "phaseret",
    about = "Phase retrieval on periodic rasters: synthesis, solvers, diagnostics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene from a JSON spec and write PRIMG raster(s).
    Synth(SynthArgs),
    /// Run an iterative solver against magnitude data.
    Run(RunArgs),
    /// Summarize a trace CSV or a raster's spectral magnitudes.
    Analyze(AnalyzeArgs),
    /// Run a full experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Export a real PRIMG raster to CSV or PGM.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output PRIMG path (first image of a pair).
    #[arg(long)]
    out: PathBuf,
    /// Second output path, required for pair-generating scenes.
    #[arg(long)]
    out2: Option<PathBuf>,
    /// Override the scene's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Magnitude data as a real PRIMG raster.
    #[arg(long)]
    data: PathBuf,
    /// Support mask as a real PRIMG raster (nonzero = inside).
    #[arg(long)]
    support: PathBuf,
    /// Extra padding applied to the support mask.
    #[arg(long, default_value_t = 0)]
    pad: usize,
    /// Reference image for true-error tracking.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Iteration cap.
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    /// Iterative map: hybrid or alternating.
    #[arg(long, default_value = "hybrid")]
    map: String,
    /// Seed for the random torus start.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record stride for the trace.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Trace CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional reconstruction output (PRIMG).
    #[arg(long)]
    recon: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Solver trace CSV to summarize.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Real PRIMG raster whose spectral magnitude summary to print.
    #[arg(long)]
    raster: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for multi-run experiments.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Input PRIMG raster.
    #[arg(long)]
    input: PathBuf,
    /// Output path; format chosen by extension (.csv or .pgm).
    #[arg(long)]
    out: PathBuf,
}

const EXIT_CHECK_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(msg.exit)
        }
    }
}

struct CliError {
    msg: String,
    exit: u8,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.msg)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError {
        msg: msg.into(),
        exit: EXIT_USAGE,
    }
}

fn failure(msg: impl Into<String>) -> CliError {
    CliError {
        msg: msg.into(),
        exit: EXIT_CHECK_FAILURE,
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Synth(args) => synth(args),
        Command::Run(args) => solver_run(args),
        Command::Analyze(args) => analyze(args),
        Command::Experiment(args) => experiment(args),
        Command::Convert(args) => {
            convert_raster(&args.input, &args.out).map_err(|e| failure(e.to_string()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn synth(args: SynthArgs) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut spec: SceneSpec =
        serde_json::from_str(&text).map_err(|e| usage(format!("bad scene spec: {e}")))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    match generate(&spec).map_err(|e| failure(e.to_string()))? {
        Generated::Single(img) => {
            phaseret::io::write_image(&args.out, &img).map_err(|e| failure(e.to_string()))?;
        }
        Generated::Pair(a, b) => {
            let out2 = args
                .out2
                .ok_or_else(|| usage("this scene generates a pair; provide --out2"))?;
            phaseret::io::write_image(&args.out, &a).map_err(|e| failure(e.to_string()))?;
            phaseret::io::write_image(&out2, &b).map_err(|e| failure(e.to_string()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_mask(path: &PathBuf) -> Result<SupportMask, CliError> {
    let img = phaseret::io::read_image(path).map_err(|e| usage(e.to_string()))?;
    let bits = img.data().iter().map(|&v| v != 0.0).collect();
    SupportMask::new(img.dims().clone(), bits).map_err(|e| usage(e.to_string()))
}

fn solver_run(args: RunArgs) -> Result<ExitCode, CliError> {
    let data_img = phaseret::io::read_image(&args.data).map_err(|e| usage(e.to_string()))?;
    let data = MagnitudeData::new(data_img.dims().clone(), data_img.data().to_vec())
        .map_err(|e| usage(format!("invalid magnitude data: {e}")))?;
    let mut mask = load_mask(&args.support)?;
    if args.pad > 0 {
        mask = pad_support(&mask, args.pad);
    }
    let map = match args.map.as_str() {
        "hybrid" => IterMap::Hybrid,
        "alternating" => IterMap::Alternating,
        other => return Err(usage(format!("unknown map '{other}'"))),
    };
    let reference: Option<Image> = match &args.reference {
        Some(p) => Some(phaseret::io::read_image(p).map_err(|e| usage(e.to_string()))?),
        None => None,
    };
    let mut config = SolverConfig::new(map, ConstraintSet::Support(mask));
    config.max_iters = args.iters;
    config.seed = args.seed;
    config.record_every = args.record_every;
    let f0 = random_torus_start(&data, args.seed).map_err(|e| failure(e.to_string()))?;
    let (recon, trace) =
        run(&data, &config, &f0, reference.as_ref()).map_err(|e| failure(e.to_string()))?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).map_err(|e| failure(e.to_string()))?;
    std::fs::write(&args.out, buf).map_err(|e| failure(e.to_string()))?;
    if let Some(recon_path) = &args.recon {
        phaseret::io::write_image(recon_path, &recon).map_err(|e| failure(e.to_string()))?;
    }
    println!(
        "status={} iters={} final_residual={:e}",
        trace.status.as_str(),
        trace.iters_run,
        trace.final_residual()
    );
    // any terminal status is a completed run; checks belong to experiments
    Ok(ExitCode::SUCCESS)
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode, CliError> {
    match (&args.trace, &args.raster) {
        (Some(trace), None) => {
            let s = read_trace(trace).map_err(|e| failure(e.to_string()))?;
            println!("records={}", s.records);
            println!("status={}", s.status);
            println!("seed={}", s.seed);
            println!("final_residual={:e}", s.final_residual);
            match s.final_true_error {
                Some(te) => println!("final_true_error={te:e}"),
                None => println!("final_true_error="),
            }
            Ok(ExitCode::SUCCESS)
        }
        (None, Some(raster)) => {
            let img = phaseret::io::read_image(raster).map_err(|e| failure(e.to_string()))?;
            let mags = magnitude_of(&img);
            let max = mags.iter().cloned().fold(0.0f64, f64::max);
            let zero_mode = mags.first().copied().unwrap_or(0.0);
            println!("pixels={}", img.data().len());
            println!("l1_norm={:e}", img.data().iter().map(|v| v.abs()).sum::<f64>());
            println!("l2_norm={:e}", img.norm2());
            println!("max_magnitude={max:e}");
            println!("zero_frequency_magnitude={zero_mode:e}");
            Ok(ExitCode::SUCCESS)
        }
        _ => Err(usage("analyze needs exactly one of --trace or --raster")),
    }
}

fn experiment(args: ExperimentArgs) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| usage(format!("cannot read {}: {e}", args.config.display())))?;
    let config = ExperimentConfig::from_json(&text).map_err(usage)?;
    if let Some(jobs) = args.jobs {
        // per-run seeds are fixed up front, so thread count never
        // changes results
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| usage("no output directory: pass --out or set output_dir"))?;
    let manifest: RunManifest =
        run_experiment(&config, &out_dir).map_err(|e| failure(e.to_string()))?;
    println!(
        "experiment={:?} passed={} wall_ms={}",
        config.experiment, manifest.passed, manifest.wall_ms
    );
    for (key, value) in &manifest.summary {
        println!("{key}={value}");
    }
    if manifest.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_CHECK_FAILURE))
    }
}
