//! `fdsketch`: sketch row streams, merge and verify sketches, run the
//! heavy-hitter summary and the counterexample demos.
//!
//! Every command prints a JSON report on stdout. Exit status: 0 success,
//! 1 a checked bound failed, 2 input error, 3 I/O error.

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use fdsketch::counterexamples::{
    compare_on_adversary, feasibility_grid, orthogonal_residual_min, removal_profile, AdversarialStream,
    CounterexampleError, SparseFdInstance,
};
use fdsketch::heavy_hitters::{self, histogram, MgSummary};
use fdsketch::io::{read_items, write_matrix, RowFormat, RowReader, RowStreamError};
use fdsketch::sketch::{decode, encode, error_report, SketchError};
use fdsketch::verify::{run_suite, seeded_grid, RowDistribution, DEFAULT_SEED_BASE};
use fdsketch::{DenseMatrix, Execution, FdParams, FdSketch};

#[derive(Parser)]
#[command(name = "fdsketch", version, about = "Deterministic streaming matrix sketching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sketch a row-stream file.
    Sketch(SketchArgs),
    /// Merge two sketch files.
    Merge(MergeArgs),
    /// Check a sketch against the stream it summarises.
    Verify(VerifyArgs),
    /// Misra-Gries summary of newline-delimited item ids.
    Hh(HhArgs),
    /// Write the incremental-PCA adversarial stream and compare both methods on it.
    Adversary(AdversaryArgs),
    /// Feasibility search on the sparse-variant hard instance.
    NoSparseFd(NoSparseArgs),
    /// Run the seeded trial grid.
    Suite(SuiteArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

impl From<FormatArg> for RowFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => RowFormat::Csv,
            FormatArg::Binary => RowFormat::Binary,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Gaussian,
    LowRankPlusNoise,
    Adversarial,
    ZipfRows,
}

impl From<DistArg> for RowDistribution {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::Gaussian => RowDistribution::Gaussian,
            DistArg::LowRankPlusNoise => RowDistribution::LowRankPlusNoise,
            DistArg::Adversarial => RowDistribution::Adversarial,
            DistArg::ZipfRows => RowDistribution::ZipfRows,
        }
    }
}

#[derive(Args)]
struct JsonOut {
    /// Also write the JSON report to this file.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SketchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k: usize,
    /// Relative error; sets ℓ = ⌈k + k/ε⌉.
    #[arg(long, required_unless_present = "ell", conflicts_with = "ell")]
    eps: Option<f64>,
    /// Explicit sketch size (ε = k/(ℓ−k)).
    #[arg(long)]
    ell: Option<usize>,
    /// Batch factor: the buffer holds ⌈c·ℓ⌉ rows.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Input format; detected from the file header when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Row width for an empty CSV input.
    #[arg(long)]
    d: Option<usize>,
    #[command(flatten)]
    json: JsonOut,
}

#[derive(Args)]
struct MergeArgs {
    /// The two sketch files to merge.
    #[arg(long, num_args = 2, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    json: JsonOut,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    sketch: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[command(flatten)]
    json: JsonOut,
}

#[derive(Args)]
struct HhArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, required_unless_present = "ell", conflicts_with = "ell")]
    eps: Option<f64>,
    #[arg(long)]
    ell: Option<usize>,
    /// Size for the per-item guarantee, ℓ = ⌈k + 1/ε⌉.
    #[arg(long, requires = "eps")]
    per_item: bool,
    #[command(flatten)]
    json: JsonOut,
}

#[derive(Args)]
struct AdversaryArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// Where to write the generated rows.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Relative error of the Frequent Directions side of the comparison.
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[command(flatten)]
    json: JsonOut,
}

#[derive(Args)]
struct NoSparseArgs {
    #[arg(long)]
    ell: usize,
    /// Columns; defaults to ℓ+1.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    c: f64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    hi: f64,
    #[command(flatten)]
    json: JsonOut,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Shards per trial (sketched independently, then merged).
    #[arg(long, default_value_t = 1)]
    shards: usize,
    /// First of the three seeds per configuration.
    #[arg(long, default_value_t = DEFAULT_SEED_BASE)]
    seed: u64,
    /// Row distributions to include (repeatable); all by default.
    #[arg(long = "distribution", value_enum)]
    distributions: Vec<DistArg>,
    /// Run trials one after another.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    json: JsonOut,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<RowStreamError> for Failure {
    fn from(e: RowStreamError) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

impl From<SketchError> for Failure {
    fn from(e: SketchError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<CounterexampleError> for Failure {
    fn from(e: CounterexampleError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<heavy_hitters::HeavyHitterError> for Failure {
    fn from(e: heavy_hitters::HeavyHitterError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

/// Result of a command: the report and whether its checks passed.
type Outcome = Result<(Value, bool), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, json_path) = match cli.command {
        Command::Sketch(a) => {
            let p = a.json.json.clone();
            (cmd_sketch(a), p)
        }
        Command::Merge(a) => {
            let p = a.json.json.clone();
            (cmd_merge(a), p)
        }
        Command::Verify(a) => {
            let p = a.json.json.clone();
            (cmd_verify(a), p)
        }
        Command::Hh(a) => {
            let p = a.json.json.clone();
            (cmd_hh(a), p)
        }
        Command::Adversary(a) => {
            let p = a.json.json.clone();
            (cmd_adversary(a), p)
        }
        Command::NoSparseFd(a) => {
            let p = a.json.json.clone();
            (cmd_no_sparse_fd(a), p)
        }
        Command::Suite(a) => {
            let p = a.json.json.clone();
            (cmd_suite(a), p)
        }
    };
    let (report, ok) = match result {
        Ok(r) => r,
        Err(f) => {
            let msg = match &f {
                Failure::Input(m) | Failure::Io(m) => m,
            };
            eprintln!("fdsketch: {msg}");
            return ExitCode::from(f.code());
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("reports serialise");
    // a closed pipe downstream is not an error of ours
    if let Err(e) = writeln!(io::stdout().lock(), "{text}") {
        if e.kind() != io::ErrorKind::BrokenPipe {
            eprintln!("fdsketch: stdout: {e}");
            return ExitCode::from(3);
        }
    }
    if let Some(path) = json_path {
        if let Err(e) = fs::write(&path, format!("{text}\n")) {
            eprintln!("fdsketch: {}: {e}", path.display());
            return ExitCode::from(3);
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn open_rows(path: &Path, format: Option<FormatArg>) -> Result<RowReader<BufReader<File>>, Failure> {
    match format {
        None => Ok(RowReader::open(path).map_err(|e| match e {
            RowStreamError::Io(e) => io_err(path)(e),
            e => e.into(),
        })?),
        Some(f) => {
            let file = File::open(path).map_err(io_err(path))?;
            Ok(RowReader::new(BufReader::new(file), f.into())?)
        }
    }
}

fn read_sketch(path: &Path) -> Result<FdSketch, Failure> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_sketch(sketch: &FdSketch, path: &Path) -> Result<(), Failure> {
    fs::write(path, encode(sketch)?).map_err(io_err(path))
}

fn warn(params: &FdParams) {
    for w in params.warnings() {
        eprintln!("fdsketch: warning: {w}");
    }
}

fn sketch_summary(s: &FdSketch) -> Value {
    let p = s.params();
    json!({
        "k": p.k,
        "eps": p.eps,
        "ell": p.ell,
        "m": p.capacity,
        "d": p.d,
        "rows": s.rows_seen(),
        "delta": s.delta(),
        "frob_sq_a": s.input_frob_sq(),
        "sketch_rows": s.nonzero_rows(),
    })
}

fn params_for(k: usize, eps: Option<f64>, ell: Option<usize>, c: f64, d: usize) -> Result<FdParams, SketchError> {
    match (eps, ell) {
        (_, Some(ell)) => FdParams::with_ell(k, ell, c, d),
        (Some(eps), None) => FdParams::new(k, eps, c, d),
        (None, None) => Err(SketchError::InvalidParams("one of --eps or --ell is required".into())),
    }
}

fn cmd_sketch(a: SketchArgs) -> Outcome {
    let mut reader = open_rows(&a.input, a.format)?;
    let mut row = Vec::new();
    let first = reader.next_row(&mut row)?;
    let d = match (reader.dim(), a.d) {
        (Some(d), Some(flag)) if d != flag => {
            return Err(Failure::Input(format!("input rows have {d} columns, --d says {flag}")))
        }
        (Some(d), _) => d,
        (None, flag) => flag.unwrap_or(1),
    };
    let params = params_for(a.k, a.eps, a.ell, a.c, d)?;
    warn(&params);
    let mut sketch = FdSketch::new(params);
    if first {
        sketch.append(&row)?;
        while reader.next_row(&mut row)? {
            sketch.append(&row)?;
        }
    }
    write_sketch(&sketch, &a.out)?;
    Ok((sketch_summary(&sketch.flushed()?), true))
}

fn cmd_merge(a: MergeArgs) -> Outcome {
    let s1 = read_sketch(&a.input[0])?;
    let s2 = read_sketch(&a.input[1])?;
    let merged = s1.merge(&s2)?;
    write_sketch(&merged, &a.out)?;
    Ok((sketch_summary(&merged.flushed()?), true))
}

fn cmd_verify(a: VerifyArgs) -> Outcome {
    let sketch = read_sketch(&a.sketch)?;
    let d = sketch.params().d;
    let mut matrix = open_rows(&a.input, a.format)?.read_all()?;
    if matrix.rows() == 0 {
        matrix = DenseMatrix::zeros(0, d);
    }
    if matrix.cols() != d {
        return Err(Failure::Input(format!("input rows have {} columns, sketch has d = {d}", matrix.cols())));
    }
    if sketch.rows_seen() != matrix.rows() as u64 {
        eprintln!(
            "fdsketch: warning: sketch saw {} rows, input has {}",
            sketch.rows_seen(),
            matrix.rows()
        );
    }
    let report = error_report(&matrix, &sketch)?;
    let ok = report.all_pass();
    Ok((to_value(&report), ok))
}

fn cmd_hh(a: HhArgs) -> Outcome {
    let file = File::open(&a.input).map_err(io_err(&a.input))?;
    let items = read_items(file)?;
    let ell = match (a.ell, a.eps) {
        (Some(ell), _) => ell,
        (None, Some(eps)) if a.per_item => heavy_hitters::per_item_capacity(a.k, eps)?,
        (None, Some(eps)) => heavy_hitters::relative_error_capacity(a.k, eps)?,
        (None, None) => return Err(Failure::Input("one of --eps or --ell is required".into())),
    };
    let mut summary = MgSummary::new(ell)?;
    summary.extend(items.iter().copied());
    let cert = summary.error_certificate(&histogram(items.iter().copied()), a.k)?;
    let top: Vec<Value> = summary.top_items().into_iter().map(|(item, count)| json!({"item": item, "estimate": count})).collect();
    let ok = cert.all_pass();
    Ok((json!({ "ell": ell, "k": a.k, "n": items.len(), "top_items": top, "certificate": cert }), ok))
}

fn cmd_adversary(a: AdversaryArgs) -> Outcome {
    let stream = AdversarialStream::new(a.k, a.d, a.n)?;
    write_matrix(&stream.to_matrix(), &a.out, a.format.into()).map_err(io_err(&a.out))?;
    let cmp = compare_on_adversary(&stream, a.eps)?;
    let ok = cmp.fd_within_bound;
    Ok((json!({ "stream": stream, "comparison": cmp }), ok))
}

fn cmd_no_sparse_fd(a: NoSparseArgs) -> Outcome {
    let inst = SparseFdInstance::hard(a.ell, a.d.unwrap_or(a.ell + 1))?;
    let grid = feasibility_grid(&inst, a.c, a.lo, a.hi, a.step, Execution::Parallel)?;
    let (residual_min, argmin) = orthogonal_residual_min(&inst.matrix())?;
    let profile = removal_profile(&inst)?;
    // the search confirms the prediction either way; disagreement is a failure
    let ok = (grid.jointly_feasible > 0) == grid.predicted_feasible;
    Ok((
        json!({
            "grid": grid,
            "orthogonal_residual_min": residual_min,
            "argmin": argmin,
            "removal_residuals": profile,
        }),
        ok,
    ))
}

fn cmd_suite(a: SuiteArgs) -> Outcome {
    let distributions: Vec<RowDistribution> = if a.distributions.is_empty() {
        RowDistribution::ALL.to_vec()
    } else {
        a.distributions.iter().map(|&d| d.into()).collect()
    };
    let configs: Vec<_> = seeded_grid(&distributions, a.c, a.seed)
        .into_iter()
        .map(|cfg| cfg.with_shards(a.shards))
        .collect();
    for cfg in &configs {
        cfg.validate()?;
    }
    let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    let summary = run_suite(&configs, exec);
    let trials: Vec<Value> = summary
        .trials
        .iter()
        .map(|t| json!({ "config": t.config, "bounds": t.bounds, "pass": t.pass, "millis": t.millis, "status": t.status, "error": t.error }))
        .collect();
    Ok((json!({ "trials": trials, "all_pass": summary.all_pass }), summary.all_pass))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialise")
}
