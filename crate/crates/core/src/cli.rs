//! Command-line front end: `run`, `gen`, `bench` and `validate`.
//!
//! Stream format, one JSON object per line:
//!
//! ```text
//! {"vekg_stream":1,"width":1280,"height":720}
//! {"frame":0,"ts_ms":0,"objects":[{"track":7,"label":"person","conf":0.9,
//!   "bbox":{"x":10,"y":10,"w":40,"h":100},"attrs":{"color":"red"},
//!   "keypoints":{"left_shoulder":[18,35], ...}}]}
//! ```
//!
//! The header is optional. Frames must have strictly increasing `frame` and
//! `ts_ms`. Rule and scenario configs are TOML with units in key names
//! (`window_length_ms`, `alpha_px`, ...).
//!
//! Debug dumps (`VekgGraph::adjacency_dump`, `VekgTag::dump`) are line based:
//! a header line, one `node` line per node, then one `edge` line per ordered
//! pair with its relation values (series for the TAG, `X` for absent slots).
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 internal error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::ingest::{open_stream, FrameDetections, IngestError};
use crate::metrics::{median, render_table, score, time_window_run, AccuracyReport, LatencyReport, DEFAULT_IOU_THRESHOLD};
use crate::pipeline::{run_stream, PipelineError, PipelineOptions, WindowReport};
use crate::rules::{RuleError, RuleSet};
use crate::search::{compare_search, persistent_pairs, PairQuery};
use crate::synth::{builtin, builtin_names, generate, read_truth, Scenario, SynthError};
use crate::tag::{aggregate, ReductionReport};
use crate::vekg::{build_frame_graph, Relation, RelationSet, VekgGraph};
use crate::windowing::WindowState;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vekg", version, about = "Event matching over object-detection streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match rules over a detection stream.
    Run(RunArgs),
    /// Generate a scripted stream with planted ground truth.
    Gen(GenArgs),
    /// Measure latency, reduction and scan-vs-TAG search on a scenario.
    Bench(BenchArgs),
    /// Check a stream file's format.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Detection stream, `-` for stdin.
    #[arg(long)]
    pub input: PathBuf,
    /// Rule config (TOML).
    #[arg(long)]
    pub rules: PathBuf,
    /// Override every rule's window length.
    #[arg(long)]
    pub window_ms: Option<i64>,
    /// Notification output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-window latency/reduction records (JSON lines).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Ground truth to score against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Temporal IoU for a true positive.
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    /// Disable data-parallel execution.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Built-in scenario name or scenario TOML file.
    pub scenario: String,
    /// Stream output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ground-truth output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write the scenario's rule config here.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Uniform jitter with this standard deviation, px.
    #[arg(long)]
    pub jitter_px: Option<f64>,
    /// Per-object per-frame dropout probability.
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Built-in scenario name or scenario TOML file.
    pub scenario: String,
    /// Rule config replacing the scenario's own rules.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub window_ms: Option<i64>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report output (one JSON line); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Internal(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Ingest(_) | CliError::Rules(_) | CliError::Synth(_) => EXIT_INPUT,
            CliError::Pipeline(PipelineError::Input(_) | PipelineError::Window(_) | PipelineError::Rules(_)) => {
                EXIT_INPUT
            }
            CliError::Pipeline(_) | CliError::Internal(_) | CliError::Io { .. } => EXIT_INTERNAL,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(format!("cannot create {}", path.display())))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write + Send>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a).map(|_| ()),
        Command::Gen(a) => cmd_gen(&a),
        Command::Bench(a) => cmd_bench(&a).map(|_| ()),
        Command::Validate(a) => cmd_validate(&a).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

/// Outcome of `run`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub frames: usize,
    pub notifications: usize,
    pub windows: Vec<WindowReport>,
    pub accuracy: Option<AccuracyReport>,
}

fn check_distinct(paths: &[Option<&Path>]) -> Result<(), CliError> {
    let given: Vec<&Path> = paths.iter().flatten().copied().filter(|p| p.as_os_str() != "-").collect();
    for (i, a) in given.iter().enumerate() {
        if given[i + 1..].contains(a) {
            return Err(CliError::Usage(format!("path {} given for more than one role", a.display())));
        }
    }
    Ok(())
}

fn load_rules(path: &Path, window_ms: Option<i64>) -> Result<RuleSet, CliError> {
    let rules = RuleSet::load(path)?;
    match window_ms {
        Some(ms) if ms <= 0 => Err(CliError::Usage(format!("--window-ms must be positive, got {ms}"))),
        Some(ms) => Ok(rules.with_window_length(ms)?),
        None => Ok(rules),
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<RunOutcome, CliError> {
    check_distinct(&[
        Some(args.input.as_path()),
        Some(args.rules.as_path()),
        args.out.as_deref(),
        args.metrics.as_deref(),
        args.truth.as_deref(),
    ])?;
    if !(args.iou > 0.0 && args.iou <= 1.0) {
        return Err(CliError::Usage(format!("--iou must lie in (0, 1], got {}", args.iou)));
    }
    let rules = load_rules(&args.rules, args.window_ms)?;
    let truth = match &args.truth {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| IngestError::SourceUnavailable { path: p.clone(), source: e })?;
            Some(read_truth(&text)?)
        }
        None => None,
    };
    let stream = open_stream(&args.input)?;
    let mut out = output(args.out.as_deref())?;
    let keep = truth.is_some();
    let mut kept = Vec::new();
    let options = PipelineOptions { exec: execution(args.sequential), ..PipelineOptions::default() };

    // Each notification is written and flushed as soon as it is released.
    let result = run_stream(stream, &rules, options, |n| {
        writeln!(out, "{}", n.to_line())?;
        out.flush()?;
        if keep {
            kept.push(n.clone());
        }
        Ok(())
    });
    drop(out);
    let summary = result?;

    let accuracy = truth.as_ref().map(|t| score(&kept, t, args.iou));
    if let Some(path) = &args.metrics {
        let mut m = create(path)?;
        let write = |m: &mut BufWriter<File>| -> io::Result<()> {
            for w in &summary.windows {
                writeln!(m, "{}", w.to_line())?;
            }
            if let Some(a) = &accuracy {
                writeln!(m, "{}", serde_json::json!({ "accuracy": a }))?;
            }
            m.flush()
        };
        write(&mut m).map_err(io_err(format!("writing {}", path.display())))?;
    }
    if !args.quiet {
        let lat: Vec<LatencyReport> = summary.windows.iter().map(|w| w.latency).collect();
        let red: Vec<ReductionReport> = summary.windows.iter().map(|w| w.reduction).collect();
        eprint!("{}", render_table(&lat, &red));
        eprintln!("frames={} notifications={}", summary.frames, summary.notifications);
        if let Some(a) = &accuracy {
            eprintln!(
                "tp={} fp={} fn={} precision={:.4} recall={:.4} f_score={:.4}",
                a.tp, a.fp, a.fn_, a.precision, a.recall, a.f_score
            );
        }
    }
    Ok(RunOutcome { frames: summary.frames, notifications: summary.notifications, windows: summary.windows, accuracy })
}

/// Resolves a built-in name or a scenario TOML path.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario, CliError> {
    if let Some(s) = builtin(name_or_path) {
        return Ok(s);
    }
    let path = Path::new(name_or_path);
    if path.extension().is_some_and(|e| e == "toml") || path.exists() {
        return Ok(Scenario::load(path)?);
    }
    Err(CliError::Synth(SynthError::UnknownScenario(format!("{name_or_path} (built-ins: {})", builtin_names().join(", ")))))
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    check_distinct(&[args.out.as_deref(), args.truth.as_deref(), args.rules.as_deref()])?;
    let mut scenario = resolve_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(j) = args.jitter_px {
        scenario.noise.jitter_px = j;
    }
    if let Some(d) = args.dropout {
        scenario.noise.dropout = d;
    }
    let generated = generate(&scenario)?;
    let mut out = output(args.out.as_deref())?;
    generated.write_stream(&mut out).and_then(|_| out.flush()).map_err(io_err("writing stream"))?;
    if let Some(p) = &args.truth {
        let mut t = create(p)?;
        generated.write_truth(&mut t).and_then(|_| t.flush()).map_err(io_err(format!("writing {}", p.display())))?;
    }
    if let Some(p) = &args.rules {
        std::fs::write(p, scenario.rule_set()?.to_toml()).map_err(io_err(format!("writing {}", p.display())))?;
    }
    if !args.quiet {
        eprintln!(
            "scenario={} frames={} planted_events={}",
            scenario.name,
            generated.frames.len(),
            generated.truth.len()
        );
    }
    Ok(())
}

/// Medians reported by `bench`.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub scenario: String,
    pub reps: usize,
    pub frames: usize,
    pub windows: usize,
    pub parallel: bool,
    pub median_vekg_construction_ms: f64,
    pub median_tag_construction_ms: f64,
    pub median_tag_search_ms: f64,
    pub median_total_ms: f64,
    pub median_rin: f64,
    pub median_rie: f64,
    /// Per-repetition sums over windows of the distance-query timings.
    pub median_scan_ms: f64,
    pub median_tag_fetch_ms: f64,
    pub search_speedup: f64,
    pub query_pairs: usize,
    pub search_results_identical: bool,
}

/// Frames of each tumbling window of `length_ms`, empty windows included.
pub fn split_windows(frames: &[FrameDetections], length_ms: i64) -> Vec<(u64, i64, i64, &[FrameDetections])> {
    let Some(first) = frames.first() else { return Vec::new() };
    let origin = first.timestamp;
    let mut out = Vec::new();
    let mut lo = 0;
    let mut index = 0u64;
    while lo < frames.len() {
        let start = origin + index as i64 * length_ms;
        let end = start + length_ms;
        let hi = lo + frames[lo..].partition_point(|f| f.timestamp < end);
        out.push((index, start, end, &frames[lo..hi]));
        lo = hi;
        index += 1;
    }
    out
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport, CliError> {
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let mut scenario = resolve_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let mut rules = match &args.rules {
        Some(p) => RuleSet::load(p)?,
        None => scenario.rule_set()?,
    };
    if let Some(ms) = args.window_ms {
        if ms <= 0 {
            return Err(CliError::Usage(format!("--window-ms must be positive, got {ms}")));
        }
        rules = rules.with_window_length(ms)?;
    }
    let exec = execution(args.sequential);
    let frames = generate(&scenario)?.frames;
    let groups = rules.window_groups();

    let mut latency = Vec::new();
    let mut reduction = Vec::new();
    let mut window_count = 0;
    for _ in 0..args.reps {
        window_count = 0;
        for (&len, indices) in &groups {
            let group = rules.subset(indices);
            for (index, start, end, slice) in split_windows(&frames, len) {
                let (_, l, r) = time_window_run(index, start, end, slice, &group, exec);
                latency.push(l);
                reduction.push(r);
                window_count += 1;
            }
        }
    }

    // Distance query over persistent pairs, one window spanning the stream.
    let relations = RelationSet::new([Relation::Distance]);
    let graphs: Vec<Arc<VekgGraph>> = exec.map(&frames, |f| Arc::new(build_frame_graph(f, &relations)));
    let (start, end) = match (frames.first(), frames.last()) {
        (Some(a), Some(b)) => (a.timestamp, b.timestamp + 1),
        _ => (0, 1),
    };
    let window = WindowState { index: 0, start, end, graphs };
    let tag = aggregate(&window, &relations, exec).map_err(|e| CliError::Internal(e.to_string()))?;
    let query = PairQuery { pairs: persistent_pairs(&tag, 0.9), relation: Relation::Distance };
    let cmp = compare_search(&window.graphs, &tag, &query, args.reps).map_err(|e| CliError::Internal(e.to_string()))?;

    let med = |v: Vec<f64>| median(&v).unwrap_or(0.0);
    let scan = med(cmp.scan_ms.clone());
    let fetch = med(cmp.tag_ms.clone());
    let report = BenchReport {
        scenario: scenario.name.clone(),
        reps: args.reps,
        frames: frames.len(),
        windows: window_count,
        parallel: exec.is_parallel(),
        median_vekg_construction_ms: med(latency.iter().map(|l| l.vekg_construction_ms).collect()),
        median_tag_construction_ms: med(latency.iter().map(|l| l.tag_construction_ms).collect()),
        median_tag_search_ms: med(latency.iter().map(|l| l.tag_search_ms).collect()),
        median_total_ms: med(latency.iter().map(|l| l.total_ms).collect()),
        median_rin: med(reduction.iter().map(|r| r.rin).collect()),
        median_rie: med(reduction.iter().map(|r| r.rie).collect()),
        median_scan_ms: scan,
        median_tag_fetch_ms: fetch,
        search_speedup: if fetch > 0.0 { scan / fetch } else { f64::INFINITY },
        query_pairs: query.pairs.len(),
        search_results_identical: cmp.identical,
    };
    let mut out = output(args.out.as_deref())?;
    let line = serde_json::to_string(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out, "{line}").and_then(|_| out.flush()).map_err(io_err("writing report"))?;
    if !args.quiet {
        eprintln!(
            "{}: {} frames, {} windows x {} reps; median total {:.3} ms; RIN {:.4} RIE {:.4}",
            report.scenario, report.frames, report.windows, report.reps, report.median_total_ms, report.median_rin, report.median_rie
        );
        eprintln!(
            "distance query over {} pairs: scan {:.3} ms, TAG {:.3} ms ({:.1}x)",
            report.query_pairs, scan, fetch, report.search_speedup
        );
    }
    Ok(report)
}

/// Summary printed by `validate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidateReport {
    pub frames: usize,
    pub objects: usize,
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<ValidateReport, CliError> {
    let mut report = ValidateReport { frames: 0, objects: 0 };
    for frame in open_stream(&args.input)? {
        let frame = frame.map_err(|e| CliError::Pipeline(PipelineError::Input(e)))?;
        report.frames += 1;
        report.objects += frame.objects.len();
    }
    if !args.quiet {
        println!("ok frames={} objects={}", report.frames, report.objects);
    }
    Ok(report)
}
