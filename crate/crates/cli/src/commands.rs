//! Subcommand implementations. Each returns `Err` with a cause chain that
//! `main` maps to an exit code.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use scenemem::bench::{run_bench, to_csv, BenchSpec};
use scenemem::query::{read_queries, write_queries};
use scenemem::synth::{generate as generate_stream, scene_sizes_for, PlantedSpec};
use scenemem::vsf::{StreamReader, StreamWriter};
use scenemem::{
    Dims, Engine, EngineConfig, FrameFeature, MemoryMode, QueryEmbedding, RecallResultJson,
    TieredStore,
};

use crate::settings::{merge, FileSettings, Overrides};
use crate::{BenchArgs, GenerateArgs, IngestArgs, InspectArgs, QueryArgs};

/// Engine settings persisted next to the store.
pub const ENGINE_FILE: &str = "engine.json";

/// Default stride for a bare `uniform` mode.
const DEFAULT_UNIFORM_STRIDE: usize = 4;

/// Arguments that parse but do not make sense together.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Serialize, Deserialize)]
struct EngineFile {
    config: EngineConfig,
}

fn open_stream(path: &Path) -> Result<StreamReader<BufReader<File>>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    StreamReader::new(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn frames_of<R: io::Read>(
    reader: &mut StreamReader<R>,
) -> impl Iterator<Item = scenemem::Result<FrameFeature>> + '_ {
    std::iter::from_fn(move || reader.read_frame().transpose())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Parses `scene` (alias `vista`), `full`, `uniform`, `uniform:N` or `uniformN`.
pub fn parse_mode(text: &str) -> Result<MemoryMode> {
    let t = text.trim().to_ascii_lowercase();
    match t.as_str() {
        "scene" | "vista" => return Ok(MemoryMode::Scene),
        "full" => return Ok(MemoryMode::Full),
        "uniform" => {
            return Ok(MemoryMode::Uniform {
                stride: DEFAULT_UNIFORM_STRIDE,
            })
        }
        _ => {}
    }
    let stride = t
        .strip_prefix("uniform")
        .map(|s| s.strip_prefix(':').unwrap_or(s))
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&s| s > 0)
        .ok_or_else(|| usage(format!("unknown mode `{text}`")))?;
    Ok(MemoryMode::Uniform { stride })
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let file = FileSettings::load(args.config.as_deref())?;
    let mut reader = open_stream(&args.input)?;
    let dims = reader.dims();
    let config = merge(EngineConfig::new(dims), &file, &args.engine.overrides());
    config.validate()?;
    let fsync = args.fsync || file.fsync.unwrap_or(false);
    let include_timing = !(args.no_timing || file.no_timing.unwrap_or(false));

    let store = TieredStore::create(&args.store, dims, fsync)
        .with_context(|| format!("creating store {}", args.store.display()))?;
    let mut engine = Engine::new(config, store, MemoryMode::Scene)?;
    for frame in frames_of(&mut reader) {
        let frame = frame.with_context(|| format!("reading {}", args.input.display()))?;
        engine.ingest(frame)?;
    }
    engine.flush()?;
    let metrics = engine.metrics();
    let store = engine.into_store()?;

    let engine_file = serde_json::to_string_pretty(&EngineFile { config })?;
    fs::write(args.store.join(ENGINE_FILE), engine_file + "\n")?;
    if let Some(p) = &args.memory_csv {
        write_output(Some(p), &metrics.memory_csv())?;
    }
    if let Some(p) = &args.metrics_json {
        let json = serde_json::to_string_pretty(&metrics.summary(include_timing))?;
        write_output(Some(p), &(json + "\n"))?;
    }

    println!(
        "ingested {} frames into {} scenes ({} forced splits)",
        metrics.frames_ingested,
        store.len(),
        metrics.forced_splits
    );
    println!(
        "hot bytes {} (peak {}), cold bytes {}",
        metrics.hot_bytes(),
        metrics.peak_hot_bytes(),
        store.cold_bytes()
    );
    println!("store written to {}", args.store.display());
    Ok(())
}

fn load_engine_config(dir: &Path, dims: Dims) -> Result<EngineConfig> {
    let path = dir.join(ENGINE_FILE);
    if !path.exists() {
        return Ok(EngineConfig::new(dims));
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let file: EngineFile = serde_json::from_str(&text)
        .map_err(scenemem::Error::from)
        .with_context(|| format!("parsing {}", path.display()))?;
    if file.config.dims != dims {
        return Err(scenemem::Error::DimensionMismatch {
            what: "engine settings dimensions",
            expected: dims.values_per_frame(),
            found: file.config.dims.values_per_frame(),
        })
        .with_context(|| format!("{} disagrees with the manifest", path.display()));
    }
    Ok(file.config)
}

pub fn query(args: QueryArgs) -> Result<()> {
    let file = FileSettings::load(args.config.as_deref())?;
    let include_timing = !(args.no_timing || file.no_timing.unwrap_or(false));
    let store = TieredStore::open(&args.store, false)
        .with_context(|| format!("opening store {}", args.store.display()))?;
    let dims = store.dims();
    let flags = Overrides {
        top_k: args.top_k,
        ..Default::default()
    };
    let file_top_k = FileSettings {
        top_k: file.top_k,
        ..Default::default()
    };
    let config = merge(load_engine_config(&args.store, dims)?, &file_top_k, &flags);
    config.validate()?;

    let qfile =
        File::open(&args.queries).with_context(|| format!("opening {}", args.queries.display()))?;
    let queries = read_queries(BufReader::new(qfile))
        .with_context(|| format!("reading {}", args.queries.display()))?;
    for (i, q) in queries.iter().enumerate() {
        q.validate(dims.dim)
            .with_context(|| format!("query {i} does not fit the store"))?;
    }

    let results = if args.at_ingest {
        let input = args
            .input
            .as_deref()
            .ok_or_else(|| usage("--at-ingest needs --input"))?;
        answer_at_ingest(config, input, &queries)?
    } else {
        let engine = Engine::resume(config, store)?;
        queries
            .iter()
            .enumerate()
            .map(|(i, q)| {
                engine
                    .answer_query(q)
                    .with_context(|| format!("answering query {i}"))
            })
            .collect::<Result<Vec<_>>>()?
    };

    let json: Vec<RecallResultJson> = results.iter().map(|r| r.to_json(include_timing)).collect();
    write_output(
        args.out.as_deref(),
        &(serde_json::to_string_pretty(&json)? + "\n"),
    )?;
    if let Some(p) = &args.latency_csv {
        let mut csv = String::from("query,latency_ms\n");
        for (i, r) in results.iter().enumerate() {
            csv.push_str(&format!("{i},{:.6}\n", r.latency_ms));
        }
        write_output(Some(p), &csv)?;
    }
    Ok(())
}

/// Replays `input` through a fresh engine, answering queries in time order,
/// and returns results in the original query order.
fn answer_at_ingest(
    config: EngineConfig,
    input: &Path,
    queries: &[QueryEmbedding],
) -> Result<Vec<scenemem::RecallResult>> {
    let mut reader = open_stream(input)?;
    if reader.dims() != config.dims {
        return Err(scenemem::Error::DimensionMismatch {
            what: "replayed stream shape (d * P_h * P_w)",
            expected: config.dims.values_per_frame(),
            found: reader.dims().values_per_frame(),
        })
        .with_context(|| format!("{} does not match the store", input.display()));
    }
    let mut order: Vec<usize> = (0..queries.len()).collect();
    order.sort_by(|&a, &b| queries[a].query_time.total_cmp(&queries[b].query_time));
    let sorted: Vec<QueryEmbedding> = order.iter().map(|&i| queries[i].clone()).collect();

    let store = TieredStore::in_memory(config.dims)?;
    let mut engine = Engine::new(config, store, MemoryMode::Scene)?;
    let out = engine
        .run_stream(frames_of(&mut reader), &sorted)
        .with_context(|| format!("replaying {}", input.display()))?;
    if let Some(f) = out.failures.into_iter().next() {
        let index = order[f.index];
        return Err(f.error).with_context(|| format!("answering query {index}"));
    }
    let mut slots: Vec<Option<scenemem::RecallResult>> = vec![None; queries.len()];
    for (pos, r) in out.results.into_iter().enumerate() {
        slots[order[pos]] = Some(r);
    }
    Ok(slots
        .into_iter()
        .map(|r| r.expect("every query answered"))
        .collect())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let file = FileSettings::load(args.config.as_deref())?;
    let frames = if args.frames.is_empty() {
        file.frames.clone().unwrap_or_default()
    } else {
        args.frames.clone()
    };
    if frames.is_empty() {
        bail!(usage("--frames needs at least one count"));
    }
    let mode_names = if args.mode.is_empty() {
        file.mode
            .clone()
            .unwrap_or_else(|| vec!["scene".into(), "full".into()])
    } else {
        args.mode.clone()
    };
    let modes = mode_names
        .iter()
        .map(|m| parse_mode(m))
        .collect::<Result<Vec<_>>>()?;

    let mut spec = BenchSpec::standard(frames, modes);
    spec.config = merge(spec.config, &file, &args.engine.overrides());
    if let Some(q) = args.queries.or(file.queries) {
        spec.queries = q;
    }
    if let Some(s) = args.seed.or(file.seed) {
        spec.seed = s;
    }
    let rows = run_bench(&spec)?;
    write_output(args.out.as_deref(), &to_csv(&rows))
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    let store = TieredStore::open(&args.store, false)
        .with_context(|| format!("opening store {}", args.store.display()))?;
    let m = store.manifest();
    let frames: usize = m.scenes.iter().map(|e| e.frame_count()).sum();
    println!(
        "{} scenes, {} stored frames, d={} P_h={} P_w={}, cold bytes {}",
        store.len(),
        frames,
        m.dims.dim,
        m.dims.patch_rows,
        m.dims.patch_cols,
        store.cold_bytes()
    );
    for e in &m.scenes {
        let norm = e
            .token
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        let finalized = e
            .finalized_at
            .map_or_else(|| "flush".to_string(), |t| format!("{t}"));
        println!(
            "scene {}: frames {}..={} ({}), {} bytes at {}, token norm {norm:.6}, finalized {finalized}",
            e.id,
            e.first_frame,
            e.last_frame,
            e.frame_count(),
            e.length,
            e.offset
        );
    }
    if args.verify {
        let failures = store.verify();
        for f in &failures {
            eprintln!("integrity: {f}");
        }
        if let Some(first) = failures.into_iter().next() {
            return Err(first).context("cold store verification failed");
        }
        println!("verified {} scenes", store.len());
    }
    Ok(())
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let dims = Dims::new(args.dim, args.patch_rows, args.patch_cols)?;
    let sizes = if args.scene_sizes.is_empty() {
        if args.frames == 0 || args.size_min == 0 || args.size_min > args.size_max {
            bail!(usage("need --frames > 0 and 0 < --size-min <= --size-max"));
        }
        scene_sizes_for(args.frames, args.size_min, args.size_max, args.seed)
    } else {
        args.scene_sizes.clone()
    };
    let spec = PlantedSpec::new(sizes, dims, args.seed);
    let stream = generate_stream(&spec)?;

    let out =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut writer =
        StreamWriter::new(BufWriter::new(out), dims, Some(stream.frames.len() as u64))?;
    for f in &stream.frames {
        writer.write_frame(f)?;
    }
    writer.finish()?;

    if let Some(p) = &args.truth {
        let json = serde_json::to_string_pretty(&stream.truth_json(&spec))?;
        write_output(Some(p), &(json + "\n"))?;
    }
    if let Some(p) = &args.queries {
        let t_q = stream.frames.last().map_or(0.0, FrameFeature::timestamp);
        let scenes = stream.centers.len();
        let probes: Vec<QueryEmbedding> = (0..args.query_count)
            .map(|i| {
                let scene = i * scenes / args.query_count.max(1);
                QueryEmbedding::new(t_q, stream.centers[scene].clone())
                    .with_label(format!("scene {scene}"))
            })
            .collect();
        let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_queries(BufWriter::new(file), &probes)?;
    }
    println!(
        "generated {} frames in {} scenes to {}",
        stream.frames.len(),
        spec.scene_sizes.len(),
        args.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names() {
        assert_eq!(parse_mode("scene").unwrap(), MemoryMode::Scene);
        assert_eq!(parse_mode("vista").unwrap(), MemoryMode::Scene);
        assert_eq!(parse_mode("FULL").unwrap(), MemoryMode::Full);
        assert_eq!(
            parse_mode("uniform").unwrap(),
            MemoryMode::Uniform { stride: 4 }
        );
        assert_eq!(
            parse_mode("uniform:8").unwrap(),
            MemoryMode::Uniform { stride: 8 }
        );
        assert_eq!(
            parse_mode("uniform2").unwrap(),
            MemoryMode::Uniform { stride: 2 }
        );
        assert!(parse_mode("uniform:0").is_err());
        assert!(parse_mode("sparse").is_err());
    }
}
