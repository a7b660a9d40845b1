//! `csc`: generate and ingest fields, compute correlation statistics, run
//! compression sweeps and fit compression-ratio models.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use csc_core::codecs::{build_codec, run_codec, CodecOptions};
use csc_core::experiment::{
    exclude_bounds, read_records, run_sweep, verify_bounds, write_fits, write_report, ExperimentConfig,
};
use csc_core::fields::{
    generate_grf, load_raw_field, read_metadata, sidecar_path, write_metadata, write_raw_field, ByteOrder, DType,
    Field2D, FieldMetadata, GrfSpec,
};
use csc_core::regression::{fit_groups, Predictor};
use csc_core::svdstats::{local_svd_stats, DEFAULT_THRESHOLD};
use csc_core::variogram::{global_variogram, local_variogram_stats, DEFAULT_WINDOW};

#[derive(Parser)]
#[command(name = "csc", version, about = "Correlation statistics and error-bounded compression of 2D fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian random field and write it as raw f64 plus a JSON sidecar.
    Gen(GenArgs),
    /// Extract a 2D slice from a raw 2D or 3D array.
    Ingest(IngestArgs),
    /// Compute variogram and SVD statistics of a field.
    Stats(StatsArgs),
    /// Compress a field once and report the compression record.
    Compress(CompressArgs),
    /// Run a sweep described by a JSON configuration.
    Sweep(SweepArgs),
    /// Fit CR = alpha + beta * ln(x) per (codec, eb) group of a records table.
    Fit(FitArgs),
    /// Write plot-ready CSV panels of points and fitted curves.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1028)]
    nx: usize,
    #[arg(long, default_value_t = 1028)]
    ny: usize,
    /// Correlation range; repeat for an equal-weight mixture.
    #[arg(long = "range", required = true)]
    ranges: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 0.0)]
    mean: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Extents, slowest-varying first, e.g. 256,384,384.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value = "float64")]
    dtype: DType,
    #[arg(long, default_value = "little")]
    byte_order: ByteOrder,
    #[arg(long, default_value_t = 0)]
    slice_axis: usize,
    #[arg(long, default_value_t = 0)]
    slice_index: usize,
    /// Output raw f64 file; a JSON sidecar is written next to it.
    #[arg(long, short)]
    out: PathBuf,
}

/// How to read a field: a raw f64 file with a sidecar, or explicit extents.
#[derive(Args)]
struct InputArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Columns, when the input has no sidecar.
    #[arg(long)]
    nx: Option<usize>,
    /// Rows, when the input has no sidecar.
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long, default_value = "float64")]
    dtype: DType,
    #[arg(long, default_value = "little")]
    byte_order: ByteOrder,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    global_variogram: bool,
    #[arg(long)]
    local_variogram: bool,
    #[arg(long)]
    local_svd: bool,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// JSON output; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    codec: String,
    #[arg(long)]
    eb: f64,
    /// Codec option as key=value; repeatable.
    #[arg(long = "option", value_parser = parse_option)]
    options: Vec<(String, String)>,
    /// Record JSON; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write the compressed blob.
    #[arg(long)]
    blob: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configuration's output_dir.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    predictor: Predictor,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    predictor: Predictor,
    #[arg(long, short = 'o')]
    out_dir: PathBuf,
    /// Leave out rows at this error bound; repeatable.
    #[arg(long)]
    exclude_eb: Vec<f64>,
}

fn parse_option(s: &str) -> Result<(String, String), String> {
    s.split_once('=').map(|(k, v)| (k.to_owned(), v.to_owned())).ok_or_else(|| format!("expected key=value, got {s:?}"))
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("CSC_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("CSC_THREADS={v:?} is not a count"))?;
            if n == 0 {
                bail!("CSC_THREADS must be at least 1");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn write_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_input(a: &InputArgs) -> Result<Field2D> {
    if !a.input.is_file() {
        bail!("input {} does not exist", a.input.display());
    }
    let meta = if sidecar_path(&a.input).is_file() { Some(read_metadata(&a.input)?) } else { None };
    let (nx, ny) = match (a.nx.or(meta.as_ref().map(|m| m.nx)), a.ny.or(meta.as_ref().map(|m| m.ny))) {
        (Some(nx), Some(ny)) => (nx, ny),
        _ => bail!("{} has no sidecar; pass --nx and --ny", a.input.display()),
    };
    let field = load_raw_field(&a.input, &[ny, nx], a.dtype, a.byte_order, 0, 0)?;
    Ok(match meta {
        Some(m) => field.with_id(m.field_id),
        None => field,
    })
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let mut spec = GrfSpec::equal_mix(a.nx, a.ny, &a.ranges, a.seed);
    spec.variance = a.variance;
    spec.mean = a.mean;
    let field = generate_grf(&spec)?;
    write_raw_field(&field, &a.out, DType::Float64, ByteOrder::Little)?;
    write_metadata(&a.out, &FieldMetadata::of(&field, Some(spec)))?;
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let field = load_raw_field(&a.input, &a.dims, a.dtype, a.byte_order, a.slice_axis, a.slice_index)?;
    write_raw_field(&field, &a.out, DType::Float64, ByteOrder::Little)?;
    write_metadata(&a.out, &FieldMetadata::of(&field, None))?;
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    if !(a.global_variogram || a.local_variogram || a.local_svd) {
        bail!("choose at least one of --global-variogram, --local-variogram, --local-svd");
    }
    let field = load_input(&a.input)?;
    let mut out = json!({ "field_id": field.field_id, "nx": field.nx(), "ny": field.ny() });
    if a.global_variogram {
        out["global_variogram"] = serde_json::to_value(global_variogram(&field)?)?;
    }
    if a.local_variogram {
        out["local_variogram"] = serde_json::to_value(local_variogram_stats(&field, a.window)?)?;
    }
    if a.local_svd {
        out["local_svd"] = serde_json::to_value(local_svd_stats(&field, a.window, a.threshold)?)?;
    }
    write_json(a.out.as_deref(), &out)
}

fn cmd_compress(a: CompressArgs) -> Result<()> {
    let options: CodecOptions = a.options.into_iter().collect();
    let codec = build_codec(&a.codec, &options)?;
    let field = load_input(&a.input)?;
    let run = run_codec(codec.as_ref(), &field, a.eb)?;
    if let Some(p) = &a.blob {
        fs::write(p, run.blob.to_bytes()).with_context(|| format!("writing {}", p.display()))?;
    }
    write_json(a.out.as_deref(), &serde_json::to_value(&run.record)?)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let threads = threads_from_env()?;
    let config = ExperimentConfig::load(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let out_dir = a.out.unwrap_or_else(|| config.output_dir.clone());
    let out = run_sweep(&config, &out_dir, threads)?;
    eprintln!("{} rows written to {}", out.rows.len(), out.records_path.display());
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let rows = read_records(&a.records)?;
    let fits = fit_groups(&rows, a.predictor);
    for s in &fits.skipped {
        eprintln!("skipped {} eb={}: {}", s.codec, s.eb, s.reason);
    }
    write_fits(&a.out, &fits.fits)?;
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let rows = read_records(&a.records)?;
    verify_bounds(&rows)?;
    let rows = exclude_bounds(rows, &a.exclude_eb);
    let fits = fit_groups(&rows, a.predictor);
    for s in &fits.skipped {
        eprintln!("skipped {} eb={}: {}", s.codec, s.eb, s.reason);
    }
    for p in write_report(&a.out_dir, &fits, a.predictor)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = threads_from_env()? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Compress(a) => cmd_compress(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
