//! `tagflow` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.

mod output;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use tagflow_core::analyzer::HEAPS_MAX_POINTS;
use tagflow_core::estimation;
use tagflow_core::ingest::{self, MAX_TAGS_PER_QUESTION};
use tagflow_core::report;
use tagflow_core::{
    simulate, sweep, AssignmentTrace, Error, Metric, MetricsSnapshot, ModelParams, PostsParser,
    QuestionRecord, Selection, SweepConfig, TrajectoryBuilder,
};

use output::{check_input, check_output, io_error, run_manifest, sidecar, with_suffix, Staged};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(m) => CliError::Usage(m),
            Error::Io(io) if io.kind() == std::io::ErrorKind::InvalidData => {
                CliError::Data(io.to_string())
            }
            Error::Io(io) => CliError::Internal(io.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tagflow",
    version,
    about = "Tag efficiency analytics and tag growth simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a Posts.xml dump into a canonical corpus.
    Ingest(IngestArgs),
    /// Monthly metric trajectory of a canonical corpus.
    Analyze(IoArgs),
    /// Trajectories restricted by tag count.
    Stratify(StratifyArgs),
    /// Separate trajectories for questions with and without composite tags.
    Composite(IoArgs),
    /// Heaps'-law fit of vocabulary growth.
    Heaps(HeapsArgs),
    /// Run the tag growth model.
    Simulate(SimulateArgs),
    /// Sweep the (p, q) grid.
    Sweep(SweepArgs),
    /// Estimate p, q and d from a trace or a corpus.
    Fit(FitArgs),
}

#[derive(Args, Debug, Serialize)]
struct IoArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Write `<output>.run.json` with config, version and input digests.
    #[arg(long)]
    #[serde(skip)]
    emit_manifest: bool,
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    io: IoArgs,
}

#[derive(Args, Debug, Serialize)]
struct StratifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    io: IoArgs,
    /// Single tag limit; without it, limits 1..=5 go to `<stem>.max<k>.<ext>`.
    #[arg(long)]
    max_tags: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct HeapsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    io: IoArgs,
    /// Leading fraction of the assignment stream used for the head fit.
    #[arg(long, default_value_t = tagflow_core::analyzer::DEFAULT_HEAD_FRACTION)]
    head_fraction: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum SelectionArg {
    Proportional,
    Softmax,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = SelectionArg::Proportional)]
    selection: SelectionArg,
    /// Diversity factor, required with `--selection softmax`.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long, default_value_t = 5)]
    tag_n: u32,
    #[arg(long, default_value_t = 0.6)]
    tag_p: f64,
    #[arg(long, default_value_t = 1)]
    seed_resources: u32,
    #[arg(long, default_value_t = 1)]
    seed_tags: u32,
    #[arg(long, default_value_t = tagflow_core::simulator::DEFAULT_MAX_REDRAWS)]
    max_redraws: u32,
}

impl ModelArgs {
    fn params(&self, p: f64, q: f64) -> Result<ModelParams, CliError> {
        let selection = match (self.selection, self.d) {
            (SelectionArg::Proportional, None) => Selection::Proportional,
            (SelectionArg::Proportional, Some(_)) => {
                return Err(CliError::Usage(
                    "--d only applies to --selection softmax".into(),
                ))
            }
            (SelectionArg::Softmax, Some(d)) => Selection::Softmax { d },
            (SelectionArg::Softmax, None) => {
                return Err(CliError::Usage("--selection softmax needs --d".into()))
            }
        };
        let params = ModelParams {
            p,
            q,
            selection,
            tag_count_n: self.tag_n,
            tag_count_p: self.tag_p,
            seed_resources: self.seed_resources,
            seed_tags: self.seed_tags,
            max_redraws: self.max_redraws,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    output: PathBuf,
    /// Also write the assignment trace as JSON (input for `fit`).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    q: f64,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 4000)]
    users: u64,
    #[arg(long, default_value_t = 10)]
    snapshot_every: u64,
    #[arg(long)]
    #[serde(skip)]
    emit_manifest: bool,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long)]
    output: PathBuf,
    /// Root seed; cell and replicate seeds are derived from it.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Points per axis on [0, 1].
    #[arg(long, default_value_t = 11)]
    grid: usize,
    #[arg(long, default_value_t = 3)]
    replicates: u32,
    #[arg(long, default_value_t = 4000)]
    users: u64,
    /// Tail window, in users, for the rate of change.
    #[arg(long, default_value_t = 1000)]
    window: u64,
    #[arg(long, default_value_t = 10)]
    snapshot_every: u64,
    /// Swept metric.
    #[arg(long, default_value = "mi_joint")]
    #[serde(serialize_with = "serialize_display")]
    metric: Metric,
    /// Worker threads (default: machine parallelism). Results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    threads: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    emit_manifest: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum InputKind {
    /// JSON trace from `simulate --trace`.
    Trace,
    /// Canonical corpus; every question is a new resource.
    Corpus,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    io: IoArgs,
    #[arg(long, value_enum, default_value_t = InputKind::Trace)]
    input_kind: InputKind,
    /// Lower end of the search interval for d.
    #[arg(long, default_value_t = estimation::DEFAULT_D_INTERVAL[0])]
    d_min: f64,
    /// Upper end of the search interval for d.
    #[arg(long, default_value_t = estimation::DEFAULT_D_INTERVAL[1])]
    d_max: f64,
}

fn serialize_display<S: serde::Serializer>(m: &Metric, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(m.name())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = std::panic::catch_unwind(|| run(cli))
        .unwrap_or_else(|_| Err(CliError::Internal("unexpected panic".into())));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tagflow: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Stratify(a) => cmd_stratify(&a),
        Command::Composite(a) => cmd_composite(&a),
        Command::Heaps(a) => cmd_heaps(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Fit(a) => cmd_fit(&a),
    }
}

fn config_json<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn digest(path: &Path) -> Result<String, CliError> {
    let f = File::open(path).map_err(|e| io_error(path, e))?;
    ingest::digest_reader(BufReader::new(f)).map_err(|e| io_error(path, e))
}

/// Adds the run manifest if requested and commits every staged file.
fn finish<T: Serialize>(
    mut staged: Staged,
    command: &str,
    args: &T,
    emit_manifest: bool,
    inputs: &[&Path],
    primary: &Path,
) -> Result<(), CliError> {
    if emit_manifest {
        let digests = inputs
            .iter()
            .map(|p| Ok((p.to_path_buf(), digest(p)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = run_manifest(command, config_json(args), &digests, &staged.paths());
        staged.write_json(&sidecar(primary, "run.json"), &manifest)?;
    }
    staged.commit()
}

fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(|f| BufReader::with_capacity(1 << 16, f))
        .map_err(|e| CliError::Usage(format!("cannot read input {}: {e}", path.display())))
}

fn read_corpus(path: &Path) -> Result<Vec<QuestionRecord>, CliError> {
    Ok(ingest::read_canonical(open_input(path)?).collect::<tagflow_core::Result<Vec<_>>>()?)
}

fn snapshots_writer<'a>(
    snapshots: &'a [MetricsSnapshot],
    users_column: bool,
    path: &'a Path,
) -> impl FnOnce(&mut std::io::BufWriter<&File>) -> Result<(), CliError> + 'a {
    move |w| report::write_snapshots_csv(w, snapshots, users_column).map_err(|e| io_error(path, e))
}

fn validate_io(io: &IoArgs) -> Result<(), CliError> {
    check_input(&io.input)?;
    check_output(&io.output)
}

fn cmd_ingest(a: &IngestArgs) -> Result<(), CliError> {
    validate_io(&a.io)?;
    let mut parser = PostsParser::new(open_input(&a.io.input)?);
    let mut records = Vec::new();
    for r in parser.by_ref() {
        records.push(r?);
    }
    let skips = parser.into_skip_report();
    // stable: dump order is kept within a month
    records.sort_by_key(|r| r.month);

    let out = &a.io.output;
    let mut staged = Staged::new();
    let mut manifest = None;
    staged.write(out, |w| {
        manifest = Some(ingest::write_canonical(&records, w)?);
        Ok(())
    })?;
    let manifest = manifest.expect("corpus written");
    let skips_path = sidecar(out, "skips.tsv");
    staged.write(&skips_path, |w| {
        skips.write_tsv(w).map_err(|e| io_error(&skips_path, e))
    })?;
    let manifest_json =
        serde_json::to_value(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    staged.write_json(&sidecar(out, "manifest.json"), &manifest_json)?;
    finish(staged, "ingest", a, a.io.emit_manifest, &[&a.io.input], out)?;
    println!(
        "{} questions, {} distinct tags, {} malformed rows, {} untagged questions skipped",
        manifest.record_count,
        manifest.distinct_tags,
        skips.entries.len(),
        skips.untagged_questions
    );
    Ok(())
}

fn cmd_analyze(a: &IoArgs) -> Result<(), CliError> {
    validate_io(a)?;
    let mut builder = TrajectoryBuilder::new();
    for r in ingest::read_canonical(open_input(&a.input)?) {
        builder.push(&r?)?;
    }
    let snapshots = builder.finish()?;
    let mut staged = Staged::new();
    staged.write(&a.output, snapshots_writer(&snapshots, false, &a.output))?;
    finish(
        staged,
        "analyze",
        a,
        a.emit_manifest,
        &[&a.input],
        &a.output,
    )
}

fn cmd_stratify(a: &StratifyArgs) -> Result<(), CliError> {
    validate_io(&a.io)?;
    let limits: Vec<usize> = match a.max_tags {
        Some(k) if (1..=MAX_TAGS_PER_QUESTION).contains(&k) => vec![k],
        Some(k) => {
            return Err(CliError::Usage(format!(
                "--max-tags must be in 1..=5, got {k}"
            )))
        }
        None => (1..=MAX_TAGS_PER_QUESTION).collect(),
    };
    let mut builders: Vec<TrajectoryBuilder> =
        limits.iter().map(|_| TrajectoryBuilder::new()).collect();
    for r in ingest::read_canonical(open_input(&a.io.input)?) {
        let r = r?;
        for (b, &k) in builders.iter_mut().zip(&limits) {
            if r.tag_count() <= k {
                b.push(&r)?;
            }
        }
    }
    let mut staged = Staged::new();
    for (b, &k) in builders.into_iter().zip(&limits) {
        let snapshots = if b.questions() == 0 {
            Vec::new()
        } else {
            b.finish()?
        };
        let path = if a.max_tags.is_some() {
            a.io.output.clone()
        } else {
            with_suffix(&a.io.output, &format!("max{k}"))
        };
        staged.write(&path, snapshots_writer(&snapshots, false, &path))?;
    }
    finish(
        staged,
        "stratify",
        a,
        a.io.emit_manifest,
        &[&a.io.input],
        &a.io.output,
    )
}

fn cmd_composite(a: &IoArgs) -> Result<(), CliError> {
    validate_io(a)?;
    let corpus = read_corpus(&a.input)?;
    let split = tagflow_core::composite_split_trajectory(&corpus)?;
    let mut staged = Staged::new();
    let composite = with_suffix(&a.output, "composite");
    let simple = with_suffix(&a.output, "simple");
    staged.write(
        &composite,
        snapshots_writer(&split.composite, false, &composite),
    )?;
    staged.write(&simple, snapshots_writer(&split.simple, false, &simple))?;
    finish(
        staged,
        "composite",
        a,
        a.emit_manifest,
        &[&a.input],
        &a.output,
    )
}

fn cmd_heaps(a: &HeapsArgs) -> Result<(), CliError> {
    validate_io(&a.io)?;
    if !(a.head_fraction > 0.0 && a.head_fraction <= 1.0) {
        return Err(CliError::Usage(format!(
            "--head-fraction must be in (0, 1], got {}",
            a.head_fraction
        )));
    }
    let corpus = read_corpus(&a.io.input)?;
    let fit = tagflow_core::heaps_fit(&corpus, a.head_fraction)?;
    let mut staged = Staged::new();
    let out = &a.io.output;
    staged.write(out, |w| {
        report::write_heaps_csv(w, &fit).map_err(|e| io_error(out, e))
    })?;
    finish(staged, "heaps", a, a.io.emit_manifest, &[&a.io.input], out)?;
    println!(
        "beta {} k {} over assignments {}..{} ({} of at most {HEAPS_MAX_POINTS} points)",
        report::format_sig9(fit.beta),
        report::format_sig9(fit.k),
        fit.fit_range.0,
        fit.fit_range.1,
        fit.points
    );
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    check_output(&a.output)?;
    if let Some(t) = &a.trace {
        check_output(t)?;
    }
    let params = a.model.params(a.p, a.q)?;
    let run = simulate(&params, a.users, a.snapshot_every, a.seed)?;
    let mut staged = Staged::new();
    staged.write(&a.output, snapshots_writer(&run.snapshots, true, &a.output))?;
    if let Some(t) = &a.trace {
        staged.write(t, |w| {
            serde_json::to_writer(&mut *w, run.state.trace())
                .map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(w).map_err(|e| io_error(t, e))
        })?;
    }
    let fallbacks = run.state.distinctness_fallbacks();
    finish(staged, "simulate", a, a.emit_manifest, &[], &a.output)?;
    if fallbacks > 0 {
        eprintln!(
            "tagflow: {fallbacks} tag draws fell back to a fresh tag after {} re-draws",
            params.max_redraws
        );
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    check_output(&a.output)?;
    let base = a.model.params(0.0, 0.0)?;
    let config = SweepConfig {
        grid_resolution: a.grid,
        users: a.users,
        window: a.window,
        replicates: a.replicates,
        snapshot_every: a.snapshot_every,
        root_seed: a.seed,
        metric: a.metric,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let result = pool.install(|| sweep(&base, &config))?;
    let mut staged = Staged::new();
    staged.write(&a.output, |w| {
        report::write_sweep_csv(w, &result).map_err(|e| io_error(&a.output, e))
    })?;
    finish(staged, "sweep", a, a.emit_manifest, &[], &a.output)
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    validate_io(&a.io)?;
    let trace = match a.input_kind {
        InputKind::Trace => {
            let trace: AssignmentTrace = serde_json::from_reader(open_input(&a.io.input)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", a.io.input.display())))?;
            trace.validate()?;
            trace
        }
        InputKind::Corpus => AssignmentTrace::from_records(read_corpus(&a.io.input)?),
    };
    let report = estimation::fit(&trace, a.d_min, a.d_max)?;
    let json = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut staged = Staged::new();
    staged.write_json(&a.io.output, &json)?;
    finish(
        staged,
        "fit",
        a,
        a.io.emit_manifest,
        &[&a.io.input],
        &a.io.output,
    )
}
