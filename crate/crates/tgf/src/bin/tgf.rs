//! Command-line front end: inject anomalies, extract features, train and
//! evaluate, sliding windows, permutation importance, and benchmarking.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use tgf::csvio::{read_feature_matrix, write_feature_matrix};
use tgf::eval::{
    evaluate_threaded, feature_distribution, permutation_importance, sliding_window_eval,
    EvalOutcome,
};
use tgf::history::{HistoryConfig, Pipeline};
use tgf::learn::ForestParams;
use tgf::seeds::derive_seed;
use tgf::streamio::{inject, parse_labeled_stream, parse_stream, write_labeled_stream, LabeledLink};

#[derive(Parser)]
#[command(
    name = "tgf",
    about = "Anomaly detection on link streams via trivial graph features",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct HistoryArgs {
    /// Size-windowed history graph over the last S occurrences; repeatable.
    /// Accepts "S" or "LABEL=S".
    #[arg(long = "hsize", value_name = "[LABEL=]S")]
    hsize: Vec<String>,
    /// Duration-windowed history graph over the trailing D time units;
    /// repeatable. Accepts "D" or "LABEL=D".
    #[arg(long = "gdur", value_name = "[LABEL=]D")]
    gdur: Vec<String>,
}

impl HistoryArgs {
    // size-window graphs first, then duration-window graphs, each in flag
    // order
    fn configs(&self) -> Result<Vec<HistoryConfig>, String> {
        let mut out = Vec::new();
        for raw in &self.hsize {
            let (label, value) = split_labeled(raw);
            let s: usize = value.parse().map_err(|_| format!("bad --hsize value {value:?}"))?;
            if s == 0 {
                return Err("--hsize must be positive".into());
            }
            let mut cfg = HistoryConfig::by_size(s);
            if let Some(label) = label {
                cfg.id = label.to_string();
            }
            out.push(cfg);
        }
        for raw in &self.gdur {
            let (label, value) = split_labeled(raw);
            let d: f64 = value.parse().map_err(|_| format!("bad --gdur value {value:?}"))?;
            if d.is_nan() || d <= 0.0 {
                return Err("--gdur must be positive".into());
            }
            let mut cfg = HistoryConfig::by_duration(d);
            if let Some(label) = label {
                cfg.id = label.to_string();
            }
            out.push(cfg);
        }
        if out.is_empty() {
            return Err("at least one --hsize or --gdur is required".into());
        }
        let mut ids: Vec<&str> = out.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != out.len() {
            return Err("history graph labels must be unique".into());
        }
        Ok(out)
    }
}

fn split_labeled(raw: &str) -> (Option<&str>, &str) {
    match raw.split_once('=') {
        Some((label, value)) => (Some(label), value),
        None => (None, raw),
    }
}

#[derive(Args, Clone)]
struct LearnArgs {
    /// Train/test split ratio
    #[arg(long, default_value_t = 0.7)]
    ratio: f64,
    /// Number of trees in the forest
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Worker threads for tree growing
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl LearnArgs {
    fn validate(&self) -> Result<(), String> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(format!("--ratio {} outside (0, 1)", self.ratio));
        }
        if self.trees == 0 {
            return Err("--trees must be >= 1".into());
        }
        Ok(())
    }

    fn params(&self) -> ForestParams {
        ForestParams { n_trees: self.trees, ..ForestParams::default() }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Inject random anomalous links into a stream, writing a labeled stream
    /// plus a JSON report
    Inject {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
        /// Anomaly count as a fraction of the original link count
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output labeled stream; the report goes to <out>.report.json
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Extract per-link feature rows from a labeled stream into a CSV
    Features {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
        #[command(flatten)]
        history: HistoryArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Split, undersample, train a forest and report ROC-AUC on a feature CSV
    Eval {
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        learn: LearnArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for report.json, scores.csv and model.json
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Sliding-window evaluation of a labeled stream
    Windows {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
        #[command(flatten)]
        history: HistoryArgs,
        #[command(flatten)]
        learn: LearnArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Window length as a fraction of the stream
        #[arg(long, default_value_t = 0.5)]
        window_fraction: f64,
        /// Window stride as a fraction of the stream
        #[arg(long, default_value_t = 0.01)]
        step_fraction: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Permutation feature importance on a feature CSV
    Importance {
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        learn: LearnArgs,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Per-class value histogram of one feature column
    Distribution {
        #[arg(long, short)]
        input: PathBuf,
        /// Column name as written in the feature CSV header
        #[arg(long)]
        feature: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Per-link feature latency statistics for each history configuration
    Bench {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
        #[command(flatten)]
        history: HistoryArgs,
        /// Optional JSON output; statistics always print to stdout
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// End-to-end convenience: inject, extract features, evaluate
    Run {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
        #[arg(long)]
        rate: f64,
        #[command(flatten)]
        history: HistoryArgs,
        #[command(flatten)]
        learn: LearnArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(long, short)]
        out: PathBuf,
    },
}

enum CmdError {
    Usage(String),
    Data(String),
}

impl CmdError {
    fn code(&self) -> ExitCode {
        match self {
            CmdError::Usage(_) => ExitCode::from(1),
            CmdError::Data(_) => ExitCode::from(2),
        }
    }

    fn message(&self) -> &str {
        match self {
            CmdError::Usage(m) | CmdError::Data(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Usage(e.to_string())
}

fn data<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Data(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's rendering for --help/--version
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tgf: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CmdError> {
    match command {
        Command::Inject { input, delimiter, rate, seed, out } => {
            cmd_inject(&input, delimiter, rate, seed, &out)
        }
        Command::Features { input, delimiter, history, out } => {
            cmd_features(&input, delimiter, &history, &out)
        }
        Command::Eval { input, learn, seed, out } => cmd_eval(&input, &learn, seed, &out),
        Command::Windows {
            input,
            delimiter,
            history,
            learn,
            seed,
            window_fraction,
            step_fraction,
            out,
        } => cmd_windows(&input, delimiter, &history, &learn, seed, window_fraction, step_fraction, &out),
        Command::Importance { input, learn, repeats, seed, out } => {
            cmd_importance(&input, &learn, repeats, seed, &out)
        }
        Command::Distribution { input, feature, out } => cmd_distribution(&input, &feature, &out),
        Command::Bench { input, delimiter, history, out } => {
            cmd_bench(&input, delimiter, &history, out.as_deref())
        }
        Command::Run { input, delimiter, rate, history, learn, seed, out } => {
            cmd_run(&input, delimiter, rate, &history, &learn, seed, &out)
        }
    }
}

fn cmd_inject(
    input: &Path,
    delimiter: Option<char>,
    rate: f64,
    seed: u64,
    out: &Path,
) -> Result<(), CmdError> {
    if rate < 0.0 {
        return Err(usage("--rate must be non-negative"));
    }
    let (stream, summary) = parse_stream(input, delimiter).map_err(data)?;
    if summary.self_loops_dropped > 0 {
        eprintln!("tgf: dropped {} self-loop line(s)", summary.self_loops_dropped);
    }
    let (labeled, report) = inject(&stream, rate, derive_seed(seed, "inject", 0)).map_err(data)?;
    write_labeled_stream(out, &labeled).map_err(data)?;
    let report_path = sibling(out, "report.json");
    write_json(&report_path, &serde_json::json!({ "inject": report, "stream": summary }))?;
    println!(
        "injected {} anomalies into {} links -> {}",
        report.injected_links,
        report.original_links,
        out.display()
    );
    Ok(())
}

type Extracted = (Vec<LabeledLink>, Vec<HistoryConfig>, Vec<String>, Vec<Vec<u64>>);

fn extract(
    input: &Path,
    delimiter: Option<char>,
    history: &HistoryArgs,
) -> Result<Extracted, CmdError> {
    let configs = history.configs().map_err(CmdError::Usage)?;
    let stream = parse_labeled_stream(input, delimiter).map_err(data)?;
    let mut pipeline = Pipeline::new(configs.clone());
    let mut rows = Vec::with_capacity(stream.len());
    for l in &stream {
        rows.push(pipeline.observe(&l.link).map_err(data)?);
    }
    Ok((stream, configs, pipeline.header(), rows))
}

fn cmd_features(
    input: &Path,
    delimiter: Option<char>,
    history: &HistoryArgs,
    out: &Path,
) -> Result<(), CmdError> {
    let (stream, _, header, rows) = extract(input, delimiter, history)?;
    let labels: Vec<u8> = stream.iter().map(|l| l.label.as_u8()).collect();
    write_feature_matrix(out, &header, &rows, Some(&labels)).map_err(data)?;
    println!("{} rows x {} feature columns -> {}", rows.len(), header.len(), out.display());
    Ok(())
}

fn cmd_eval(input: &Path, learn: &LearnArgs, seed: u64, out: &Path) -> Result<(), CmdError> {
    learn.validate().map_err(CmdError::Usage)?;
    let matrix = read_feature_matrix(input).map_err(data)?;
    let labels = matrix.labels.ok_or_else(|| data("feature CSV has no label column"))?;
    let history_ids = graph_ids(&matrix.names);
    let outcome = evaluate_threaded(
        &matrix.rows,
        &labels,
        matrix.names,
        history_ids,
        learn.ratio,
        &learn.params(),
        seed,
        learn.threads,
    )
    .map_err(data)?;
    std::fs::create_dir_all(out).map_err(data)?;
    write_eval_outputs(out, &outcome)?;
    println!("AUC {:.4} -> {}", outcome.report.auc, out.join("report.json").display());
    Ok(())
}

fn write_eval_outputs(out: &Path, outcome: &EvalOutcome) -> Result<(), CmdError> {
    write_json(&out.join("report.json"), &outcome.report)?;
    std::fs::write(out.join("model.json"), outcome.model.to_json()).map_err(data)?;
    let mut w =
        std::io::BufWriter::new(std::fs::File::create(out.join("scores.csv")).map_err(data)?);
    writeln!(w, "index,score,label").map_err(data)?;
    for (idx, score, label) in &outcome.test_scores {
        writeln!(w, "{idx},{score},{label}").map_err(data)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_windows(
    input: &Path,
    delimiter: Option<char>,
    history: &HistoryArgs,
    learn: &LearnArgs,
    seed: u64,
    window_fraction: f64,
    step_fraction: f64,
    out: &Path,
) -> Result<(), CmdError> {
    learn.validate().map_err(CmdError::Usage)?;
    let in_unit = |f: f64| f > 0.0 && f < 1.0;
    if !in_unit(window_fraction) || !in_unit(step_fraction) {
        return Err(usage("window and step fractions must be in (0, 1)"));
    }
    let configs = history.configs().map_err(CmdError::Usage)?;
    let stream = parse_labeled_stream(input, delimiter).map_err(data)?;
    let windows = sliding_window_eval(
        &stream,
        &configs,
        &learn.params(),
        window_fraction,
        step_fraction,
        learn.ratio,
        seed,
    )
    .map_err(data)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out).map_err(data)?);
    writeln!(w, "index,start,end,auc").map_err(data)?;
    for win in &windows {
        writeln!(w, "{},{},{},{}", win.index, win.start, win.end, win.auc).map_err(data)?;
    }
    println!("{} windows -> {}", windows.len(), out.display());
    Ok(())
}

fn cmd_importance(
    input: &Path,
    learn: &LearnArgs,
    repeats: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CmdError> {
    learn.validate().map_err(CmdError::Usage)?;
    if repeats == 0 {
        return Err(usage("--repeats must be >= 1"));
    }
    let matrix = read_feature_matrix(input).map_err(data)?;
    let labels = matrix.labels.ok_or_else(|| data("feature CSV has no label column"))?;
    let history_ids = graph_ids(&matrix.names);
    let outcome = evaluate_threaded(
        &matrix.rows,
        &labels,
        matrix.names,
        history_ids,
        learn.ratio,
        &learn.params(),
        seed,
        learn.threads,
    )
    .map_err(data)?;
    let k = outcome.test_scores.first().map_or(0, |(idx, _, _)| *idx);
    let x_test = &matrix.rows[k..];
    let y_test = &labels[k..];
    let (baseline, entries) = permutation_importance(
        &outcome.model,
        x_test,
        y_test,
        repeats,
        derive_seed(seed, "importance", 0),
    )
    .map_err(data)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out).map_err(data)?);
    write!(w, "feature,column,mean_decrease").map_err(data)?;
    for i in 0..repeats {
        write!(w, ",d{i}").map_err(data)?;
    }
    writeln!(w).map_err(data)?;
    for e in &entries {
        write!(w, "{},{},{}", e.feature, e.column, e.mean_decrease).map_err(data)?;
        for d in &e.decreases {
            write!(w, ",{d}").map_err(data)?;
        }
        writeln!(w).map_err(data)?;
    }
    println!(
        "baseline AUC {:.4}, top feature {} -> {}",
        baseline,
        entries[0].feature,
        out.display()
    );
    Ok(())
}

fn cmd_distribution(input: &Path, feature: &str, out: &Path) -> Result<(), CmdError> {
    let matrix = read_feature_matrix(input).map_err(data)?;
    let labels = matrix.labels.ok_or_else(|| data("feature CSV has no label column"))?;
    let column = matrix
        .names
        .iter()
        .position(|n| n == feature)
        .ok_or_else(|| data(format!("unknown feature {feature:?}")))?;
    let (normal, anomalous) = feature_distribution(&matrix.rows, &labels, column);
    let mut w = std::io::BufWriter::new(std::fs::File::create(out).map_err(data)?);
    writeln!(w, "value,normal_count,anomalous_count").map_err(data)?;
    let mut values: Vec<u64> = normal.keys().chain(anomalous.keys()).copied().collect();
    values.sort_unstable();
    values.dedup();
    for v in values {
        writeln!(
            w,
            "{v},{},{}",
            normal.get(&v).copied().unwrap_or(0),
            anomalous.get(&v).copied().unwrap_or(0)
        )
        .map_err(data)?;
    }
    println!("histogram of {feature} -> {}", out.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct BenchStats {
    id: String,
    links: usize,
    mean_us: f64,
    p50_us: f64,
    p99_us: f64,
    links_per_sec: f64,
}

fn cmd_bench(
    input: &Path,
    delimiter: Option<char>,
    history: &HistoryArgs,
    out: Option<&Path>,
) -> Result<(), CmdError> {
    let configs = history.configs().map_err(CmdError::Usage)?;
    let stream = parse_labeled_stream(input, delimiter).map_err(data)?;
    let mut all = Vec::new();
    for cfg in configs {
        let mut graph = tgf::history::HistoryGraph::new(cfg.clone());
        // batched timing keeps clock overhead out of the per-link figures
        const BATCH: usize = 64;
        let mut samples = Vec::with_capacity(stream.len() / BATCH + 1);
        let total_start = Instant::now();
        for chunk in stream.chunks(BATCH) {
            let t = Instant::now();
            for l in chunk {
                std::hint::black_box(graph.observe(&l.link).map_err(data)?);
            }
            samples.push(t.elapsed().as_secs_f64() / chunk.len() as f64);
        }
        let total = total_start.elapsed().as_secs_f64();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pct = |q: f64| samples[((samples.len() - 1) as f64 * q) as usize] * 1e6;
        let stats = BenchStats {
            id: cfg.id,
            links: stream.len(),
            mean_us: total / stream.len() as f64 * 1e6,
            p50_us: pct(0.5),
            p99_us: pct(0.99),
            links_per_sec: stream.len() as f64 / total,
        };
        println!(
            "{}: mean {:.3} us/link, p50 {:.3} us, p99 {:.3} us, {:.0} links/s",
            stats.id, stats.mean_us, stats.p50_us, stats.p99_us, stats.links_per_sec
        );
        all.push(stats);
    }
    if let Some(path) = out {
        write_json(path, &all)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    input: &Path,
    delimiter: Option<char>,
    rate: f64,
    history: &HistoryArgs,
    learn: &LearnArgs,
    seed: u64,
    out: &Path,
) -> Result<(), CmdError> {
    learn.validate().map_err(CmdError::Usage)?;
    std::fs::create_dir_all(out).map_err(data)?;
    let labeled_path = out.join("labeled.tsv");
    cmd_inject(input, delimiter, rate, seed, &labeled_path)?;
    let features_path = out.join("features.csv");
    cmd_features(&labeled_path, None, history, &features_path)?;
    cmd_eval(&features_path, learn, seed, out)
}

fn graph_ids(names: &[String]) -> Vec<String> {
    let mut ids: Vec<String> = names
        .iter()
        .map(|n| n.split_once('.').map_or(n.as_str(), |(id, _)| id).to_string())
        .collect();
    ids.dedup();
    ids
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    name.push('.');
    name.push_str(suffix);
    path.with_file_name(name)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CmdError> {
    let text = serde_json::to_string_pretty(value).map_err(data)?;
    std::fs::write(path, text).map_err(data)?;
    Ok(())
}
