//! `scenemem`: ingest feature streams, answer queries, benchmark memory modes
//! and inspect stores.

mod commands;
mod settings;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::Overrides;

#[derive(Debug, Parser)]
#[command(name = "scenemem", version, about = "Streaming scene memory engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment, compress and offload a .vsf stream into a store.
    Ingest(IngestArgs),
    /// Answer queries from a .jsonl file against a store.
    Query(QueryArgs),
    /// Sweep hot memory and recall latency across frame counts and modes.
    Bench(BenchArgs),
    /// Summarize a store and optionally re-checksum its cold extents.
    Inspect(InspectArgs),
    /// Write a planted synthetic stream, its ground truth and probe queries.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Default, Args)]
struct EngineFlags {
    /// Boundary threshold in (0, 1).
    #[arg(long)]
    tau: Option<f64>,
    /// Maximum frames per scene.
    #[arg(long)]
    max_scene_len: Option<usize>,
    /// Scenes recalled per query.
    #[arg(long)]
    top_k: Option<usize>,
    /// Frames carried from one scene into the next.
    #[arg(long)]
    overlap: Option<usize>,
    /// Side of the spatial fusion window.
    #[arg(long)]
    window_a: Option<usize>,
}

impl EngineFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            tau: self.tau,
            max_scene_len: self.max_scene_len,
            top_k: self.top_k,
            overlap: self.overlap,
            window_a: self.window_a,
        }
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Input stream (.vsf).
    #[arg(long)]
    input: PathBuf,
    /// Store directory; an existing store there is replaced.
    #[arg(long)]
    store: PathBuf,
    /// JSON file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineFlags,
    /// fsync the cold file and manifest after every scene.
    #[arg(long)]
    fsync: bool,
    /// Write `frame_index,hot_bytes,cold_bytes` per frame.
    #[arg(long)]
    memory_csv: Option<PathBuf>,
    /// Write summary metrics as JSON.
    #[arg(long)]
    metrics_json: Option<PathBuf>,
    /// Leave wall-clock timings out of the metrics JSON.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Store directory written by `ingest`.
    #[arg(long)]
    store: PathBuf,
    /// Queries, one JSON object per line.
    #[arg(long)]
    queries: PathBuf,
    /// Output JSON array of results; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenes recalled per query.
    #[arg(long)]
    top_k: Option<usize>,
    /// Replay `--input` and answer each query as soon as the stream reaches
    /// its query time, instead of answering from the finished store.
    #[arg(long, requires = "input")]
    at_ingest: bool,
    /// Stream to replay with `--at-ingest`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write `query,latency_ms` per query.
    #[arg(long)]
    latency_csv: Option<PathBuf>,
    /// Emit `latency_ms: null` so output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated frame counts.
    #[arg(long, value_delimiter = ',')]
    frames: Vec<usize>,
    /// Comma-separated modes: scene, full, uniform (stride 4) or uniform:N.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<String>,
    /// Timed queries per row.
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineFlags,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Store directory.
    #[arg(long)]
    store: PathBuf,
    /// Re-read every cold extent and check its CRC.
    #[arg(long)]
    verify: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Output stream (.vsf).
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth JSON output.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Probe query output (.jsonl); each probe is one scene's center.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Number of probe queries.
    #[arg(long, default_value_t = 1)]
    query_count: usize,
    /// Explicit comma-separated scene sizes; overrides `--frames`.
    #[arg(long, value_delimiter = ',')]
    scene_sizes: Vec<usize>,
    /// Total frames, split into scenes of `--size-min..=--size-max`.
    #[arg(long, default_value_t = 1000)]
    frames: usize,
    #[arg(long, default_value_t = 6)]
    size_min: usize,
    #[arg(long, default_value_t = 7)]
    size_max: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Patch grid rows.
    #[arg(long, default_value_t = 2)]
    patch_rows: usize,
    /// Patch grid columns.
    #[arg(long, default_value_t = 2)]
    patch_cols: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Exit code for a failed command.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<scenemem::Error>() {
            return match e {
                _ if e.is_integrity() => 4,
                _ if e.is_data() => 3,
                scenemem::Error::InvalidConfig(_) | scenemem::Error::Json(_) => 2,
                scenemem::Error::Io(io) => io_exit_code(io),
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<io::Error>() {
            return io_exit_code(io);
        }
        if cause.downcast_ref::<commands::UsageError>().is_some() {
            return 2;
        }
    }
    1
}

fn io_exit_code(err: &io::Error) -> u8 {
    match err.kind() {
        io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Query(a) => commands::query(a),
        Command::Bench(a) => commands::bench(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Generate(a) => commands::generate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
