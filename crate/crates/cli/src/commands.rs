//! Subcommand plumbing: flag parsing, file wiring, exit-code mapping.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use hiret_core::{
    average_recall, batch_search, brute_force_search, hierarchical_cost, load_projections,
    load_scorer, recall_at_k, save_projections, save_scorer, CascadeConfig, CascadeTrace,
    CostParams, Error as CoreError, EvalReport, GalleryStore, HierSchedule, QueryEmbedding,
    SynthConfig, TrainConfig,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(CoreError),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{}", msg),
            CliError::Core(e) => write!(f, "{}", e),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(CoreError::Io(e))
    }
}

impl CliError {
    /// 0 success, 2 usage, 3 I/O, 4 numeric divergence, 5 schema/schedule
    /// mismatch.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                CoreError::Io(_) => 3,
                CoreError::DivergenceDetected(_) | CoreError::NonFiniteLoss => 4,
                CoreError::BadMagic
                | CoreError::UnsupportedVersion(_)
                | CoreError::TruncatedFile
                | CoreError::ChecksumMismatch
                | CoreError::ScheduleMismatch(_)
                | CoreError::DimMismatch { .. }
                | CoreError::UnknownId(_)
                | CoreError::LevelOutOfRange { .. } => 5,
                _ => 2,
            },
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "hiret",
    version,
    about = "Hierarchical coarse-to-fine retrieval experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic paired raw features and ground truth
    Synth(SynthArgs),
    /// Fit per-level projections on a generated dataset
    Train(TrainArgs),
    /// Apply trained projections to a raw store
    Encode(EncodeArgs),
    /// Cascade-search encoded queries against an encoded gallery
    Search(SearchArgs),
    /// Compare the pruned cascade against the flat full-dimension baseline
    Bench(BenchArgs),
    /// Evaluate the analytic retrieval-time model
    Cost(CostArgs),
    /// Compute recall@K and average recall
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pairs: usize,
    #[arg(long = "d-raw")]
    d_raw: usize,
    #[arg(long)]
    latent: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Share one view matrix across both sides
    #[arg(long)]
    identical_views: bool,
    /// Extra unpaired gallery-only items
    #[arg(long, default_value_t = 0)]
    distractors: usize,
    /// Scale every raw vector to unit L2 norm
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory holding queries.bin / gallery.bin / truth.csv
    #[arg(long)]
    data: PathBuf,
    /// Per-level output dimensions, coarsest first, e.g. 8,16,32
    #[arg(long)]
    dims: String,
    /// Per-level pool sizes; token 0 means the full pool
    #[arg(long)]
    pools: String,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also fit the matching scorer
    #[arg(long)]
    vlm: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Raw one-level store to encode
    #[arg(long)]
    raw: PathBuf,
    /// Projection parameter file for one tower
    #[arg(long)]
    projections: PathBuf,
    /// Pool schedule recorded in the output store; token 0 = full pool
    #[arg(long)]
    pools: Option<String>,
    /// Output store file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Pool override; token 0 = full pool
    #[arg(long)]
    pools: Option<String>,
    /// Matching-scorer parameter file for final re-ranking
    #[arg(long)]
    rerank: Option<PathBuf>,
    #[arg(long = "rerank-depth")]
    rerank_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Include per-stage wall times in the trace lines (breaks byte-for-byte
    /// reproducibility across runs)
    #[arg(long)]
    timings: bool,
    /// Output JSON-lines file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    pools: Option<String>,
    #[arg(long, default_value = "1,5,10")]
    ks: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    /// Gallery size N (accepts scientific notation, e.g. 1e9)
    #[arg(long)]
    n: String,
    /// Per-level candidate counts N_l, literal (0 means an empty level)
    #[arg(long)]
    pools: String,
    /// Per-level dimensions d_l
    #[arg(long)]
    dims: String,
    /// Per-layer encoding time
    #[arg(long, default_value = "1000")]
    te: String,
    /// Encoder depth of the flat baseline
    #[arg(long, default_value_t = 12)]
    layers: u32,
    /// Layers per encode chunk; defaults to layers / levels
    #[arg(long)]
    chunk: Option<u32>,
    /// Cost of one multiply-accumulate
    #[arg(long, default_value_t = 1)]
    unit: u64,
    /// Optional directory for report.txt + manifest
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Query->gallery trace file (JSON lines)
    #[arg(long)]
    results: Option<PathBuf>,
    /// Gallery->query trace file, evaluated with inverted ground truth
    #[arg(long)]
    backward: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "1,5,10")]
    ks: String,
    /// Directly average supplied recall values instead of reading traces
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Search(args) => cmd_search(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Cost(args) => cmd_cost(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

// ---------------------------------------------------------------- parsing

fn parse_count(s: &str) -> CliResult<u64> {
    let s = s.trim();
    if s.contains(['e', 'E', '.']) {
        let v: f64 = s
            .parse()
            .map_err(|_| CliError::Usage(format!("not a number: {}", s)))?;
        if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
            return Err(CliError::Usage(format!("not a whole count: {}", s)));
        }
        Ok(v as u64)
    } else {
        s.parse()
            .map_err(|_| CliError::Usage(format!("not a number: {}", s)))
    }
}

fn parse_count_list(s: &str) -> CliResult<Vec<u64>> {
    s.split(',').map(parse_count).collect()
}

fn parse_u32_list(s: &str) -> CliResult<Vec<u32>> {
    parse_count_list(s)?
        .into_iter()
        .map(|v| {
            u32::try_from(v).map_err(|_| CliError::Usage(format!("value too large: {}", v)))
        })
        .collect()
}

fn parse_ks(s: &str) -> CliResult<Vec<usize>> {
    let ks: Vec<usize> = parse_count_list(s)?.into_iter().map(|v| v as usize).collect();
    if ks.is_empty() || ks.iter().any(|&k| k == 0) {
        return Err(CliError::Usage("ks must be positive".into()));
    }
    Ok(ks)
}

fn schedule_from_flags(dims: &str, pools: &str) -> CliResult<HierSchedule> {
    Ok(HierSchedule::new(parse_u32_list(dims)?, parse_u32_list(pools)?)?)
}

// ----------------------------------------------------------- trace format

#[derive(Debug, Serialize, Deserialize)]
struct TraceLevelLine {
    level: usize,
    k: usize,
    clamped: bool,
    survivors: Vec<u64>,
    scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nanos: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceLine {
    query_id: u64,
    levels: Vec<TraceLevelLine>,
    final_ranking: Vec<(u64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rerank_nanos: Option<u64>,
}

impl TraceLine {
    fn from_trace(trace: &CascadeTrace, with_timings: bool) -> Self {
        Self {
            query_id: trace.query_id,
            levels: trace
                .levels
                .iter()
                .map(|l| TraceLevelLine {
                    level: l.level,
                    k: l.k,
                    clamped: l.clamped,
                    survivors: l.survivors.clone(),
                    scores: l.scores.clone(),
                    nanos: with_timings.then_some(l.nanos),
                })
                .collect(),
            final_ranking: trace.final_ranking.clone(),
            rerank_nanos: if with_timings { trace.rerank_nanos } else { None },
        }
    }
}

fn read_trace_rankings(path: &Path) -> CliResult<Vec<(u64, Vec<u64>)>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: TraceLine = serde_json::from_str(&line)
            .map_err(|e| CliError::Core(CoreError::ScheduleMismatch(format!("bad trace line: {}", e))))?;
        out.push((
            trace.query_id,
            trace.final_ranking.iter().map(|&(id, _)| id).collect(),
        ));
    }
    Ok(out)
}

fn read_truth(path: &Path) -> CliResult<Vec<(u64, u64)>> {
    let body = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if i == 0 && line.starts_with("query_id") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |p: Option<&str>| -> CliResult<u64> {
            p.and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| CliError::Usage(format!("bad truth line: {}", line)))
        };
        out.push((parse(parts.next())?, parse(parts.next())?));
    }
    Ok(out)
}

// -------------------------------------------------------------- commands

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let cfg = SynthConfig {
        pairs: args.pairs,
        d_raw: args.d_raw,
        latent: args.latent,
        noise: args.noise,
        seed: args.seed,
        identical_views: args.identical_views,
        distractors: args.distractors,
        normalize: args.normalize,
    };
    let start = Instant::now();
    let data = hiret_core::generate_pairs(&cfg)?;
    fs::create_dir_all(&args.out)?;

    let queries_path = args.out.join("queries.bin");
    let gallery_path = args.out.join("gallery.bin");
    let truth_path = args.out.join("truth.csv");
    GalleryStore::build_raw(args.d_raw as u32, data.queries)?.save(&queries_path)?;
    GalleryStore::build_raw(args.d_raw as u32, data.galleries)?.save(&gallery_path)?;
    let mut truth = String::from("query_id,gallery_id\n");
    for (q, g) in &data.truth {
        truth.push_str(&format!("{},{}\n", q, g));
    }
    fs::write(&truth_path, truth)?;

    let mut manifest = crate::manifest::RunManifest::new(
        "synth",
        Some(args.seed),
        json!({
            "pairs": args.pairs, "d_raw": args.d_raw, "latent": args.latent,
            "noise": args.noise, "identical_views": args.identical_views,
            "distractors": args.distractors, "normalize": args.normalize,
        }),
    );
    for p in [&queries_path, &gallery_path, &truth_path] {
        manifest.artifact(p);
    }
    manifest.timing("total", start.elapsed().as_secs_f64() * 1e3);
    manifest.write(&args.out)?;
    println!("wrote {} pairs to {}", args.pairs, args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let schedule = schedule_from_flags(&args.dims, &args.pools)?;
    let queries = GalleryStore::load(args.data.join("queries.bin"))?.raw_items()?;
    let galleries = GalleryStore::load(args.data.join("gallery.bin"))?.raw_items()?;
    // train on the paired prefix; distractors have no matching query
    let galleries = &galleries[..queries.len().min(galleries.len())];
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
        train_vlm: args.vlm,
    };
    let start = Instant::now();
    let model = hiret_core::train_eol(&queries, galleries, &schedule, &cfg)?;

    fs::create_dir_all(&args.out)?;
    let q_path = args.out.join("proj_query.bin");
    let g_path = args.out.join("proj_gallery.bin");
    let hist_path = args.out.join("history.csv");
    save_projections(&model.query_projs, &q_path)?;
    save_projections(&model.gallery_projs, &g_path)?;
    let mut hist = String::from("epoch,loss\n");
    for (i, loss) in model.history.iter().enumerate() {
        hist.push_str(&format!("{},{:.12}\n", i, loss));
    }
    fs::write(&hist_path, hist)?;

    let mut manifest = crate::manifest::RunManifest::new(
        "train",
        Some(args.seed),
        json!({
            "dims": args.dims, "pools": args.pools, "epochs": args.epochs,
            "lr": args.lr, "batch": args.batch, "vlm": args.vlm,
            "data": args.data.display().to_string(),
        }),
    );
    for p in [&q_path, &g_path, &hist_path] {
        manifest.artifact(p);
    }
    if let Some(scorer) = &model.vlm {
        let s_path = args.out.join("scorer.bin");
        save_scorer(scorer, &s_path)?;
        manifest.artifact(&s_path);
    }
    manifest.timing("total", start.elapsed().as_secs_f64() * 1e3);
    manifest.write(&args.out)?;
    println!(
        "trained {} epochs, final loss {:.6}",
        model.history.len(),
        model.history.last().unwrap()
    );
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> CliResult<()> {
    let raw = GalleryStore::load(&args.raw)?.raw_items()?;
    let projections = load_projections(&args.projections)?;
    let dims: Vec<u32> = projections.iter().map(|p| p.d_out as u32).collect();
    let pools = match &args.pools {
        Some(s) => parse_u32_list(s)?,
        None => vec![0; dims.len()],
    };
    let schedule = HierSchedule::new(dims, pools)?;
    let items = hiret_core::encode_corpus(&projections, &raw, &schedule)?;
    let store = GalleryStore::build(schedule, items)?;
    let bytes = store.save(&args.out)?;

    let dir = args.out.parent().unwrap_or(Path::new("."));
    let mut manifest = crate::manifest::RunManifest::new(
        "encode",
        None,
        json!({
            "raw": args.raw.display().to_string(),
            "projections": args.projections.display().to_string(),
        }),
    );
    manifest.artifact(&args.out);
    let name = format!(
        "{}.manifest.json",
        args.out.file_name().unwrap().to_string_lossy()
    );
    fs::write(
        dir.join(name),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    println!("encoded {} items ({} bytes)", store.len(), bytes);
    Ok(())
}

fn load_query_embeddings(path: &Path, gallery: &GalleryStore) -> CliResult<Vec<QueryEmbedding>> {
    let store = GalleryStore::load(path)?;
    if store.schedule().dims() != gallery.schedule().dims() {
        return Err(CliError::Core(CoreError::ScheduleMismatch(format!(
            "query dims {:?} vs gallery dims {:?}",
            store.schedule().dims(),
            gallery.schedule().dims()
        ))));
    }
    (0..store.len())
        .map(|pos| Ok(QueryEmbedding::from_store(&store, pos)?))
        .collect()
}

fn cascade_config(
    pools: &Option<String>,
    rerank: &Option<PathBuf>,
    rerank_depth: Option<usize>,
    levels: usize,
) -> CliResult<CascadeConfig> {
    let pools = match pools {
        Some(s) => {
            let p = parse_u32_list(s)?;
            if p.len() != levels {
                return Err(CliError::Usage(format!(
                    "--pools has {} levels, stores have {}",
                    p.len(),
                    levels
                )));
            }
            Some(p)
        }
        None => None,
    };
    let rerank = match rerank {
        Some(path) => Some(load_scorer(path)?),
        None => None,
    };
    Ok(CascadeConfig {
        pools,
        rerank,
        rerank_depth,
    })
}

fn cmd_search(args: SearchArgs) -> CliResult<()> {
    let gallery = GalleryStore::load(&args.gallery)?;
    let queries = load_query_embeddings(&args.queries, &gallery)?;
    let cfg = cascade_config(
        &args.pools,
        &args.rerank,
        args.rerank_depth,
        gallery.schedule().levels(),
    )?;
    let start = Instant::now();
    let traces = batch_search(&queries, &gallery, &cfg, args.workers)?;
    let elapsed = start.elapsed();

    let mut out = fs::File::create(&args.out)?;
    for trace in &traces {
        let line = serde_json::to_string(&TraceLine::from_trace(trace, args.timings))
            .expect("trace serializes");
        writeln!(out, "{}", line)?;
    }

    let dir = args.out.parent().unwrap_or(Path::new("."));
    let mut manifest = crate::manifest::RunManifest::new(
        "search",
        None,
        json!({
            "gallery": args.gallery.display().to_string(),
            "queries": args.queries.display().to_string(),
            "pools": args.pools, "workers": args.workers,
            "rerank": args.rerank.as_ref().map(|p| p.display().to_string()),
            "rerank_depth": args.rerank_depth,
        }),
    );
    manifest.artifact(&args.out);
    manifest.timing("search", elapsed.as_secs_f64() * 1e3);
    let name = format!(
        "{}.manifest.json",
        args.out.file_name().unwrap().to_string_lossy()
    );
    fs::write(
        dir.join(name),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    println!(
        "searched {} queries in {:.1} ms",
        traces.len(),
        elapsed.as_secs_f64() * 1e3
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let gallery = GalleryStore::load(&args.gallery)?;
    let queries = load_query_embeddings(&args.queries, &gallery)?;
    if queries.is_empty() {
        return Err(CliError::Core(CoreError::EmptyInput));
    }
    let ks = parse_ks(&args.ks)?;
    let max_k = *ks.iter().max().unwrap();
    let truth: HashMap<u64, u64> = read_truth(&args.truth)?.into_iter().collect();
    let cfg = cascade_config(&args.pools, &None, None, gallery.schedule().levels())?;

    let start = Instant::now();
    let traces = batch_search(&queries, &gallery, &cfg, args.workers)?;
    let cascade_elapsed = start.elapsed();

    let top = gallery.schedule().levels() - 1;
    let start = Instant::now();
    let brute: Vec<(u64, Vec<(u64, f64)>)> = queries
        .iter()
        .map(|q| {
            brute_force_search(&q.levels[top], &gallery, max_k).map(|r| (q.id, r))
        })
        .collect::<Result<_, _>>()?;
    let brute_elapsed = start.elapsed();

    let cascade_rankings: Vec<(u64, Vec<u64>)> = traces
        .iter()
        .map(|t| {
            (
                t.query_id,
                t.final_ranking.iter().map(|&(id, _)| id).collect(),
            )
        })
        .collect();
    let brute_rankings: Vec<(u64, Vec<u64>)> = brute
        .iter()
        .map(|(id, r)| (*id, r.iter().map(|&(id, _)| id).collect()))
        .collect();

    let per_query = |d: std::time::Duration| d.as_nanos() as f64 / queries.len() as f64;
    let speedup = brute_elapsed.as_secs_f64() / cascade_elapsed.as_secs_f64();

    let mut summary = String::new();
    summary.push_str(&format!("queries = {}\n", queries.len()));
    summary.push_str(&format!("gallery = {}\n", gallery.len()));
    summary.push_str(&format!(
        "cascade_ns_per_query = {:.0}\n",
        per_query(cascade_elapsed)
    ));
    summary.push_str(&format!(
        "brute_ns_per_query = {:.0}\n",
        per_query(brute_elapsed)
    ));
    summary.push_str(&format!("speedup = {:.3}\n", speedup));
    for &k in &ks {
        let rc = recall_at_k(&cascade_rankings, &truth, k)?;
        let rb = recall_at_k(&brute_rankings, &truth, k)?;
        summary.push_str(&format!("recall_cascade_at_{} = {:.6}\n", k, rc));
        summary.push_str(&format!("recall_brute_at_{} = {:.6}\n", k, rb));
        summary.push_str(&format!("delta_pp_at_{} = {:.3}\n", k, (rc - rb) * 100.0));
    }

    fs::create_dir_all(&args.out)?;
    let summary_path = args.out.join("summary.txt");
    fs::write(&summary_path, &summary)?;
    let mut manifest = crate::manifest::RunManifest::new(
        "bench",
        None,
        json!({
            "gallery": args.gallery.display().to_string(),
            "queries": args.queries.display().to_string(),
            "truth": args.truth.display().to_string(),
            "pools": args.pools, "ks": args.ks, "workers": args.workers,
        }),
    );
    manifest.artifact(&summary_path);
    manifest.timing("cascade", cascade_elapsed.as_secs_f64() * 1e3);
    manifest.timing("brute", brute_elapsed.as_secs_f64() * 1e3);
    manifest.write(&args.out)?;
    print!("{}", summary);
    Ok(())
}

fn cmd_cost(args: CostArgs) -> CliResult<()> {
    let n = parse_count(&args.n)?;
    let candidates = parse_count_list(&args.pools)?;
    let dims = parse_u32_list(&args.dims)?;
    let te = parse_count(&args.te)?;
    let levels = dims.len() as u32;
    if levels == 0 {
        return Err(CliError::Usage("need at least one level".into()));
    }
    let chunk = args.chunk.unwrap_or_else(|| (args.layers / levels).max(1));
    let params = CostParams::new(te, args.layers, args.unit, n, dims, candidates, chunk)?;
    let report = hierarchical_cost(&params);

    let mut text = report.to_kv();
    text.push_str(&format!("speedup_exact = {:.6}\n", report.speedup));
    text.push_str(
        "note = speedup is the exact ratio of the exact totals; rounding each total \
         to one significant figure before dividing can suggest a higher factor\n",
    );
    print!("{}", text);

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let report_path = dir.join("report.txt");
        fs::write(&report_path, &text)?;
        let mut manifest = crate::manifest::RunManifest::new(
            "cost",
            None,
            json!({
                "n": args.n, "pools": args.pools, "dims": args.dims,
                "te": args.te, "layers": args.layers, "chunk": chunk,
                "unit": args.unit,
            }),
        );
        manifest.artifact(&report_path);
        manifest.write(dir)?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    if let Some(values) = &args.values {
        let values: Vec<f64> = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("not a number: {}", v)))
            })
            .collect::<CliResult<_>>()?;
        let ar = average_recall(&values)?;
        println!("ar = {:.6}", ar);
        return Ok(());
    }

    let results = args
        .results
        .as_ref()
        .ok_or_else(|| CliError::Usage("need --results or --values".into()))?;
    let truth_path = args
        .truth
        .as_ref()
        .ok_or_else(|| CliError::Usage("need --truth with --results".into()))?;
    let ks = parse_ks(&args.ks)?;
    let truth_pairs = read_truth(truth_path)?;
    let forward_truth: HashMap<u64, u64> = truth_pairs.iter().copied().collect();

    let forward_rankings = read_trace_rankings(results)?;
    let forward: Vec<f64> = ks
        .iter()
        .map(|&k| recall_at_k(&forward_rankings, &forward_truth, k))
        .collect::<Result<_, _>>()?;

    let backward = match &args.backward {
        Some(path) => {
            let backward_truth: HashMap<u64, u64> =
                truth_pairs.iter().map(|&(q, g)| (g, q)).collect();
            let rankings = read_trace_rankings(path)?;
            Some(
                ks.iter()
                    .map(|&k| recall_at_k(&rankings, &backward_truth, k))
                    .collect::<Result<Vec<f64>, _>>()?,
            )
        }
        None => None,
    };

    let report = EvalReport::new(ks, forward, backward)?;
    print!("{}", report.to_kv());
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let txt = dir.join("report.txt");
        let csv = dir.join("report.csv");
        fs::write(&txt, report.to_kv())?;
        fs::write(&csv, report.to_csv())?;
        let mut manifest = crate::manifest::RunManifest::new(
            "eval",
            None,
            json!({
                "results": results.display().to_string(),
                "backward": args.backward.as_ref().map(|p| p.display().to_string()),
                "truth": truth_path.display().to_string(),
                "ks": args.ks,
            }),
        );
        manifest.artifact(&txt);
        manifest.artifact(&csv);
        manifest.write(dir)?;
    }
    Ok(())
}
