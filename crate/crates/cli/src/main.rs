use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use melograph::pipeline::{report, Outcome, Pipeline, PipelineConfig, Stage};
use melograph::synth::{write_corpus, SynthConfig};

/// Worker threads for the parallel stages.
const WORKERS_ENV: &str = "MELOGRAPH_WORKERS";
/// Aborts the process once this many DTW chunks were persisted in this run.
const ABORT_ENV: &str = "MELOGRAPH_ABORT_AFTER_CHUNKS";

#[derive(Parser)]
#[command(name = "melograph", version, about = "Perceptual segment graphs for symbolic melodies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Pipeline config (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the manifest's scores into note matrices.
    Ingest(ConfigArg),
    /// Label I-R symbols and corpus expectancy statistics.
    Annotate(ConfigArg),
    /// Split pieces into perceptual segments.
    Segment(ConfigArg),
    /// Corpus-wide DTW distances between segments (checkpointed).
    Dtw(ConfigArg),
    /// k-NN segment graphs for every k in the sweep range.
    Graph(ConfigArg),
    /// Intra- versus inter-graph similarity per k.
    Sweep(ConfigArg),
    /// Piecewise and group WL similarity at the operating k.
    Heatmap(ConfigArg),
    /// Joint segment projections for every piece pair.
    Mds(ConfigArg),
    /// graph2vec vectors and their PCA projection.
    Embed(ConfigArg),
    /// k-means over the graph vectors.
    Cluster(ConfigArg),
    /// Every stage in order, then the report.
    Run(ConfigArg),
    /// Summary JSON and text from finished stages.
    Report(ConfigArg),
    /// Which stages are current, stale or missing.
    Status(ConfigArg),
    /// Write a synthetic corpus with planted styles.
    Synth {
        #[arg(long, default_value_t = 10)]
        pieces: usize,
        #[arg(long, default_value_t = 5)]
        styles: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        phrases: usize,
        /// Directory for the scores, manifest and a starter config.
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
    },
}

fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("{WORKERS_ENV} must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<Pipeline> {
    let cfg = PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    let mut pipeline = Pipeline::open(cfg)?;
    if let Ok(v) = std::env::var(ABORT_ENV) {
        let limit: usize = v.parse().with_context(|| format!("{ABORT_ENV} must be an integer, got `{v}`"))?;
        pipeline = pipeline.with_chunk_hook(Arc::new(move |written| {
            if written >= limit {
                eprintln!("aborting after {written} DTW chunks");
                std::process::abort();
            }
        }));
    }
    Ok(pipeline)
}

fn print_outcome(stage: Stage, outcome: Outcome) {
    match outcome {
        Outcome::Cached => println!("{stage:<9} cached"),
        Outcome::Computed { duration_ms } => println!("{stage:<9} computed in {duration_ms} ms"),
    }
}

fn run_one(stage: Stage, args: &ConfigArg) -> Result<()> {
    let p = open(&args.config)?;
    print_outcome(stage, p.run_stage(stage)?);
    Ok(())
}

fn synth(cfg: SynthConfig, out: &Path) -> Result<()> {
    let manifest = write_corpus(out, &cfg)?;
    let config = out.join("melograph.toml");
    if !config.exists() {
        let starter = PipelineConfig {
            manifest: PathBuf::from("manifest.toml"),
            output_dir: PathBuf::from("run"),
            ..PipelineConfig::default()
        };
        std::fs::write(&config, starter.to_toml()).with_context(|| format!("writing {}", config.display()))?;
    }
    println!("wrote {} pieces; manifest {}; config {}", cfg.pieces, manifest.display(), config.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_workers()?;
    match &cli.command {
        Command::Ingest(a) => run_one(Stage::Ingest, a),
        Command::Annotate(a) => run_one(Stage::Annotate, a),
        Command::Segment(a) => run_one(Stage::Segment, a),
        Command::Dtw(a) => run_one(Stage::Dtw, a),
        Command::Graph(a) => run_one(Stage::Graph, a),
        Command::Sweep(a) => run_one(Stage::Sweep, a),
        Command::Heatmap(a) => run_one(Stage::Heatmap, a),
        Command::Mds(a) => run_one(Stage::Mds, a),
        Command::Embed(a) => run_one(Stage::Embed, a),
        Command::Cluster(a) => run_one(Stage::Cluster, a),
        Command::Run(a) => {
            let p = open(&a.config)?;
            for (s, outcome) in p.run_all()? {
                print_outcome(s, outcome);
            }
            report(&p)?;
            println!("report    {}", p.output_dir().join("report").display());
            Ok(())
        }
        Command::Report(a) => {
            let p = open(&a.config)?;
            let summary = report(&p)?;
            print!("{}", melograph::pipeline::render(&summary));
            Ok(())
        }
        Command::Status(a) => {
            let p = open(&a.config)?;
            for s in Stage::ALL {
                let state = match p.is_current(s) {
                    Ok(true) => "current".to_string(),
                    Ok(false) if p.meta(s)?.is_none() => "missing".to_string(),
                    Ok(false) => "stale".to_string(),
                    Err(e) => format!("blocked: {e}"),
                };
                println!("{s:<9} {state}");
            }
            Ok(())
        }
        Command::Synth { pieces, styles, seed, phrases, out } => synth(
            SynthConfig { pieces: *pieces, styles: *styles, seed: *seed, phrases: *phrases, ..SynthConfig::default() },
            out,
        ),
    }
}
