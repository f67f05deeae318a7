use std::collections::BTreeMap;
use std::ops::Bound::{Excluded, Unbounded};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;
use mottrack_core::appearance::{Embedding, EmbeddingProvider, FileEmbeddings};
use mottrack_core::association::Tracker;
use mottrack_core::classifier::{FixtureScoreMaps, ScoreMapGrid, ScoreMapProvider};
use mottrack_core::metrics::{evaluate, EvalOptions, MetricsReport};
use mottrack_core::scenario::{gen_scenario, ScenarioSpec};
use mottrack_core::{mot, overlay, BoundingBox, TrackerConfig};

#[derive(Parser)]
#[command(name = "mottrack", version, about = "Online multi-object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track detections through a sequence and write MOTChallenge output.
    Track(TrackArgs),
    /// Score a tracker output against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic sequence with matching fixtures.
    Gen(GenArgs),
    /// Render tracker output as one SVG per frame.
    Overlay(OverlayArgs),
}

#[derive(clap::Args)]
struct TrackArgs {
    /// Detections in MOTChallenge format.
    #[arg(long)]
    det: PathBuf,
    /// Tracker configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Score-map fixture; its frames define the processed range.
    #[arg(long)]
    scoremaps: PathBuf,
    /// Embedding fixture; required unless use_appearance = false.
    #[arg(long)]
    reid: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Override one configuration key, e.g. `--set tau_d=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
    /// Worker threads for appearance distances (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write measured throughput to this TOML file.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// MOTChallenge file whose boxes are regions to ignore.
    #[arg(long)]
    ignore: Option<PathBuf>,
    /// Write the report as TOML to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Timing file from `track --timing`; fills the fps field.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenArgs {
    /// Scenario description (TOML); defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Replace the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct OverlayArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Canvas width; defaults to the extent of all boxes.
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("`{s}` is not KEY=VALUE"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() || v.is_empty() {
        return Err(format!("`{s}` is not KEY=VALUE"));
    }
    Ok((k.to_string(), v.to_string()))
}

/// Failure classes with distinct exit codes.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

/// Adds the time spent inside a provider to a shared counter.
struct Timed<P> {
    inner: P,
    nanos: Arc<AtomicU64>,
}

impl<P> Timed<P> {
    fn record<T>(&self, f: impl FnOnce(&P) -> T) -> T {
        let t0 = Instant::now();
        let out = f(&self.inner);
        self.nanos.fetch_add(t0.elapsed().as_nanos() as u64, Ordering::Relaxed);
        out
    }
}

impl<P: ScoreMapProvider> ScoreMapProvider for Timed<P> {
    fn score_maps(&self, frame: u32) -> mottrack_core::Result<Arc<ScoreMapGrid>> {
        self.record(|p| p.score_maps(frame))
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for Timed<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, frame: u32, bbox: &BoundingBox) -> mottrack_core::Result<Embedding> {
        self.record(|p| p.embed(frame, bbox))
    }
}

/// Stands in when appearance is disabled; never consulted.
struct NoEmbeddings(usize);

impl EmbeddingProvider for NoEmbeddings {
    fn dim(&self) -> usize {
        self.0
    }

    fn embed(&self, frame: u32, bbox: &BoundingBox) -> mottrack_core::Result<Embedding> {
        Err(mottrack_core::Error::MissingFeature {
            frame,
            bbox: bbox.to_string(),
        })
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn track(args: TrackArgs) -> Result<(), Failure> {
    let text = match &args.config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let config = TrackerConfig::parse_with_overrides(&text, &args.overrides)?;
    if config.use_appearance && args.reid.is_none() {
        return Err(usage("--reid is required unless use_appearance = false"));
    }

    let detections = mot::detections(&mot::parse_mot(&args.det)?);
    let io_nanos = Arc::new(AtomicU64::new(0));
    let maps = Timed {
        inner: FixtureScoreMaps::open(&args.scoremaps)?,
        nanos: io_nanos.clone(),
    };
    let embeddings: Box<dyn EmbeddingProvider> = match &args.reid {
        Some(p) => Box::new(Timed {
            inner: FileEmbeddings::open(p)?,
            nanos: io_nanos.clone(),
        }),
        None => Box::new(NoEmbeddings(config.embedding_dim)),
    };

    let frames: Vec<u32> = maps.inner.frames().collect();
    let results = match (frames.first(), frames.last()) {
        (Some(&first), Some(&last)) => {
            if let Some((&f, _)) = detections.range(..first).chain(detections.range((Excluded(last), Unbounded))).next() {
                log::warn!("detections in frame {f} lie outside the score-map frames {first}..={last}");
            }
            let threads = match args.threads {
                0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
                n => n,
            };
            let mut tracker = Tracker::new(config)?.with_threads(threads);
            let t0 = Instant::now();
            let results = tracker.run(&detections, first..=last, &maps, embeddings.as_ref())?;
            let total = t0.elapsed();
            let busy = total.saturating_sub(Duration::from_nanos(io_nanos.load(Ordering::Relaxed)));
            let fps = results.len() as f64 / busy.as_secs_f64().max(1e-9);
            eprintln!("tracked {} frames at {fps:.1} fps (fixture IO excluded)", results.len());
            if let Some(path) = &args.timing {
                let text = format!("frames = {}\nfps = {fps}\n", results.len());
                std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            results
        }
        _ => {
            log::warn!("score-map fixture is empty; nothing to track");
            Vec::new()
        }
    };
    mot::write_mot(&results, &args.out)?;
    info!("wrote {}", args.out.display());
    Ok(())
}

#[derive(serde::Deserialize)]
struct Timing {
    fps: f64,
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<(), Failure> {
    if !(args.iou > 0.0 && args.iou <= 1.0) {
        return Err(usage(format!("--iou must be in (0, 1], got {}", args.iou)));
    }
    let gt = mot::ground_truth(&mot::parse_mot(&args.gt)?)?;
    let hyp = mot::frame_results(&mot::parse_mot(&args.hyp)?)?;
    let mut ignore_regions = BTreeMap::new();
    if let Some(p) = &args.ignore {
        for (f, records) in mot::parse_mot(p)? {
            ignore_regions.insert(f, records.iter().map(|r| r.bbox).collect());
        }
    }
    let options = EvalOptions {
        iou_threshold: args.iou,
        ignore_regions,
        ..EvalOptions::default()
    };
    let mut report: MetricsReport = evaluate(&gt, &hyp, &options)?;
    if let Some(p) = &args.timing {
        let timing: Timing = toml::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?;
        report.fps = Some(timing.fps);
    }
    println!("{report}");
    if let Some(p) = &args.report {
        std::fs::write(p, report.to_toml()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let mut spec = match &args.spec {
        Some(p) => ScenarioSpec::parse(&read_text(p)?)?,
        None => ScenarioSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let scenario = gen_scenario(&spec)?;
    let files = scenario.write(&args.out_dir)?;
    eprintln!(
        "wrote {} frames, {} ground-truth boxes to {}",
        spec.frame_count,
        scenario.ground_truth.total_boxes(),
        args.out_dir.display()
    );
    info!("{files:?}");
    Ok(())
}

fn overlay_cmd(args: OverlayArgs) -> Result<(), Failure> {
    let results = mot::frame_results(&mot::parse_mot(&args.hyp)?)?;
    let (w, h) = overlay::extent(&results);
    let dims = (args.width.unwrap_or(w), args.height.unwrap_or(h));
    if dims.0 == 0 || dims.1 == 0 {
        return Err(usage("--width and --height must be positive"));
    }
    let written = overlay::write_overlays(&results, dims, &args.out_dir)?;
    eprintln!("wrote {} images to {}", written.len(), args.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Track(a) => track(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Gen(a) => gen(a),
        Command::Overlay(a) => overlay_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
