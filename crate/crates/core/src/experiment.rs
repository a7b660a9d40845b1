//! Reproducible compression sweeps.
//!
//! A sweep materializes every configured field once, computes the requested
//! statistics on the original fields, compresses each field with every codec
//! at every error bound, and writes one flat records table. Rows come out in
//! configuration order (field, then codec, then error bound) whatever the
//! thread count, and timings are left out unless asked for, so the same
//! configuration always produces the same bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codecs::{build_codec, run_codec, CodecError, CodecOptions};
use crate::fields::{
    generate_grf, generate_half_and_half, load_raw_field, ByteOrder, DType, Field2D, FieldError, GrfSpec,
};
use crate::regression::{GroupFits, Predictor, RegressionFit};
use crate::svdstats::{local_svd_stats, DEFAULT_THRESHOLD};
use crate::variogram::{global_range, local_variogram_stats, DEFAULT_WINDOW};

pub const RECORDS_FILE: &str = "records.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FITS_COLUMNS: [&str; 8] = ["codec", "eb", "predictor", "alpha", "beta", "r2", "residual_std", "n"];
pub const REPORT_COLUMNS: [&str; 6] = ["series", "codec", "eb", "x", "cr", "field_id"];
/// Fitted-curve samples per group in a report panel.
pub const CURVE_SAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{codec} on {field_id} at eb={eb:e}: {source}")]
    Codec {
        field_id: String,
        codec: String,
        eb: f64,
        #[source]
        source: CodecError,
    },
    #[error("records table lacks columns {missing:?}; expected {expected}")]
    Schema { missing: Vec<String>, expected: String },
    #[error("records row {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_variance() -> f64 {
    1.0
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_dtype() -> DType {
    DType::Float64
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("sweep_out")
}

/// Where a sweep's fields come from. Seeds left out default to the
/// configuration seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    /// One single-range field per `(range, seed)` pair.
    GrfSweep {
        nx: usize,
        ny: usize,
        ranges: Vec<f64>,
        #[serde(default)]
        seeds: Option<Vec<u64>>,
        #[serde(default = "default_variance")]
        variance: f64,
    },
    Grf {
        spec: GrfSpec,
    },
    HalfAndHalf {
        nx: usize,
        ny: usize,
        left_range: f64,
        right_range: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Slices of a raw array; `dims` slowest-varying first.
    Raw {
        path: PathBuf,
        dims: Vec<usize>,
        #[serde(default = "default_dtype")]
        dtype: DType,
        #[serde(default)]
        byte_order: ByteOrder,
        #[serde(default)]
        slice_axis: usize,
        #[serde(default)]
        slice_indices: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSpec {
    pub id: String,
    #[serde(default)]
    pub options: CodecOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StatisticSpec {
    GlobalRange,
    LocalVarioStd {
        #[serde(default = "default_window", rename = "H")]
        h: usize,
    },
    LocalSvdStd {
        #[serde(default = "default_window", rename = "H")]
        h: usize,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fields: Vec<FieldSource>,
    pub codecs: Vec<CodecSpec>,
    pub error_bounds: Vec<f64>,
    #[serde(default)]
    pub statistics: Vec<StatisticSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Fill the timing columns. Timings vary between runs.
    #[serde(default)]
    pub record_timings: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.fields.is_empty() {
            return bad("no fields".into());
        }
        if self.codecs.is_empty() {
            return bad("no codecs".into());
        }
        if self.error_bounds.is_empty() {
            return bad("no error bounds".into());
        }
        if let Some(eb) = self.error_bounds.iter().find(|eb| !(eb.is_finite() && **eb > 0.0)) {
            return bad(format!("error bound {eb} is not > 0"));
        }
        let distinct: BTreeSet<u64> = self.error_bounds.iter().map(|eb| eb.to_bits()).collect();
        if distinct.len() != self.error_bounds.len() {
            return bad("duplicate error bounds".into());
        }
        let mut kinds = BTreeSet::new();
        for s in &self.statistics {
            let (kind, h) = match *s {
                StatisticSpec::GlobalRange => ("global_range", None),
                StatisticSpec::LocalVarioStd { h } => ("local_vario_std", Some(h)),
                StatisticSpec::LocalSvdStd { h, threshold } => {
                    if !(threshold > 0.0 && threshold <= 1.0) {
                        return bad(format!("SVD threshold {threshold} outside (0, 1]"));
                    }
                    ("local_svd_std", Some(h))
                }
            };
            if !kinds.insert(kind) {
                return bad(format!("statistic {kind} listed twice"));
            }
            if h == Some(0) {
                return bad(format!("{kind} window must be > 0"));
            }
        }
        for c in &self.codecs {
            build_codec(&c.id, &c.options).map_err(|e| ExperimentError::Config(format!("codec {}: {e}", c.id)))?;
        }
        for f in &self.fields {
            match f {
                FieldSource::GrfSweep { ranges, seeds, .. } => {
                    if ranges.is_empty() || seeds.as_ref().is_some_and(|s| s.is_empty()) {
                        return bad("grf_sweep needs at least one range and seed".into());
                    }
                }
                FieldSource::Raw { dims, .. } if !(2..=3).contains(&dims.len()) => {
                    return bad(format!("raw dims {dims:?} must have 2 or 3 entries"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn window(&self, kind: &str) -> usize {
        self.statistics
            .iter()
            .find_map(|s| match (*s, kind) {
                (StatisticSpec::LocalVarioStd { h }, "vario") | (StatisticSpec::LocalSvdStd { h, .. }, "svd") => {
                    Some(h)
                }
                _ => None,
            })
            .unwrap_or(DEFAULT_WINDOW)
    }

    /// Header of the records table.
    pub fn record_columns(&self) -> Vec<String> {
        record_columns(self.window("vario"), self.window("svd"))
    }
}

pub fn record_columns(vario_h: usize, svd_h: usize) -> Vec<String> {
    ["field_id", "codec", "eb", "original_bytes", "compressed_bytes", "cr", "max_abs_error", "global_range"]
        .iter()
        .map(|s| s.to_string())
        .chain([format!("local_vario_std_H{vario_h}"), format!("local_svd_std_H{svd_h}")])
        .chain(["encode_seconds".to_string(), "decode_seconds".to_string()])
        .collect()
}

/// A job that produces one field.
#[derive(Clone, Debug)]
enum FieldJob {
    Grf(GrfSpec),
    HalfAndHalf { nx: usize, ny: usize, left: f64, right: f64, seed: u64 },
    Raw { path: PathBuf, dims: Vec<usize>, dtype: DType, order: ByteOrder, axis: usize, index: usize },
}

impl FieldJob {
    fn run(&self) -> Result<Field2D, FieldError> {
        match self {
            FieldJob::Grf(spec) => generate_grf(spec),
            FieldJob::HalfAndHalf { nx, ny, left, right, seed } => {
                generate_half_and_half(*nx, *ny, *left, *right, *seed)
            }
            FieldJob::Raw { path, dims, dtype, order, axis, index } => {
                load_raw_field(path, dims, *dtype, *order, *axis, *index)
            }
        }
    }
}

fn expand_fields(config: &ExperimentConfig) -> Result<Vec<FieldJob>, ExperimentError> {
    let mut jobs = Vec::new();
    for source in &config.fields {
        match source {
            FieldSource::GrfSweep { nx, ny, ranges, seeds, variance } => {
                let seeds = seeds.clone().unwrap_or_else(|| vec![config.seed]);
                for &range in ranges {
                    for &seed in &seeds {
                        let mut spec = GrfSpec::single(*nx, *ny, range, seed);
                        spec.variance = *variance;
                        jobs.push(FieldJob::Grf(spec));
                    }
                }
            }
            FieldSource::Grf { spec } => jobs.push(FieldJob::Grf(spec.clone())),
            FieldSource::HalfAndHalf { nx, ny, left_range, right_range, seed } => jobs.push(FieldJob::HalfAndHalf {
                nx: *nx,
                ny: *ny,
                left: *left_range,
                right: *right_range,
                seed: seed.unwrap_or(config.seed),
            }),
            FieldSource::Raw { path, dims, dtype, byte_order, slice_axis, slice_indices } => {
                let indices = if slice_indices.is_empty() { vec![0] } else { slice_indices.clone() };
                for index in indices {
                    jobs.push(FieldJob::Raw {
                        path: path.clone(),
                        dims: dims.clone(),
                        dtype: *dtype,
                        order: *byte_order,
                        axis: *slice_axis,
                        index,
                    });
                }
            }
        }
    }
    for job in &jobs {
        if let FieldJob::Grf(spec) = job {
            spec.validate()?;
        }
    }
    Ok(jobs)
}

/// Statistics of one original field. A statistic that cannot be computed
/// (too small a field, a constant field) is left empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FieldStatistics {
    pub global_range: Option<f64>,
    pub local_vario_std: Option<f64>,
    pub local_svd_std: Option<f64>,
    /// `statistic: reason` for each statistic left empty.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

pub fn compute_statistics(field: &Field2D, specs: &[StatisticSpec]) -> FieldStatistics {
    let mut out = FieldStatistics::default();
    for spec in specs {
        match *spec {
            StatisticSpec::GlobalRange => match global_range(field) {
                Ok(fit) => out.global_range = Some(fit.range),
                Err(e) => out.failures.push(format!("global_range: {e}")),
            },
            StatisticSpec::LocalVarioStd { h } => match local_variogram_stats(field, h) {
                Ok(s) => out.local_vario_std = Some(s.std),
                Err(e) => out.failures.push(format!("local_vario_std: {e}")),
            },
            StatisticSpec::LocalSvdStd { h, threshold } => match local_svd_stats(field, h, threshold) {
                Ok(s) => out.local_svd_std = Some(s.std),
                Err(e) => out.failures.push(format!("local_svd_std: {e}")),
            },
        }
    }
    out
}

/// One row of the records table.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordRow {
    pub field_id: String,
    pub codec: String,
    pub eb: f64,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    pub cr: f64,
    pub max_abs_error: f64,
    pub global_range: Option<f64>,
    pub local_vario_std: Option<f64>,
    pub local_svd_std: Option<f64>,
    pub encode_seconds: Option<f64>,
    pub decode_seconds: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RecordRow {
    fn to_csv(&self) -> [String; 12] {
        [
            self.field_id.clone(),
            self.codec.clone(),
            self.eb.to_string(),
            self.original_bytes.to_string(),
            self.compressed_bytes.to_string(),
            self.cr.to_string(),
            self.max_abs_error.to_string(),
            opt(self.global_range),
            opt(self.local_vario_std),
            opt(self.local_svd_std),
            opt(self.encode_seconds),
            opt(self.decode_seconds),
        ]
    }
}

pub fn write_records(path: &Path, columns: &[String], rows: &[RecordRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row.to_csv())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a records table. The local statistic columns are matched by
/// prefix, whatever their window size.
pub fn read_records(path: &Path) -> Result<Vec<RecordRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let expected = record_columns(DEFAULT_WINDOW, DEFAULT_WINDOW)
        .iter()
        .map(|c| c.replace(&format!("_H{DEFAULT_WINDOW}"), "_H<window>"))
        .collect::<Vec<_>>();
    let find = |name: &str| {
        let prefix = name.strip_suffix("<window>");
        headers.iter().position(|h| match prefix {
            Some(p) => h.strip_prefix(p).is_some_and(|rest| rest.parse::<usize>().is_ok()),
            None => h == name,
        })
    };
    let missing: Vec<String> = expected.iter().filter(|c| find(c).is_none()).cloned().collect();
    if !missing.is_empty() {
        return Err(ExperimentError::Schema { missing, expected: expected.join(",") });
    }
    let idx: Vec<usize> = expected.iter().map(|c| find(c).unwrap()).collect();

    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| record.get(idx[i]).unwrap_or("");
        let err = |col: &str, v: &str| ExperimentError::Row { line, message: format!("bad {col} {v:?}") };
        let num = |i: usize| cell(i).parse::<f64>().map_err(|_| err(&expected[i], cell(i)));
        let int = |i: usize| cell(i).parse::<u64>().map_err(|_| err(&expected[i], cell(i)));
        let maybe = |i: usize| match cell(i) {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| err(&expected[i], s)),
        };
        rows.push(RecordRow {
            field_id: cell(0).to_owned(),
            codec: cell(1).to_owned(),
            eb: num(2)?,
            original_bytes: int(3)?,
            compressed_bytes: int(4)?,
            cr: num(5)?,
            max_abs_error: num(6)?,
            global_range: maybe(7)?,
            local_vario_std: maybe(8)?,
            local_svd_std: maybe(9)?,
            encode_seconds: maybe(10)?,
            decode_seconds: maybe(11)?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldSummary {
    pub field_id: String,
    pub provenance: String,
    pub nx: usize,
    pub ny: usize,
    pub statistics: FieldStatistics,
}

/// Everything needed to re-run a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub fields: Vec<FieldSummary>,
    pub rows: usize,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub rows: Vec<RecordRow>,
    pub manifest: Manifest,
    pub records_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Runs a sweep and writes `records.csv` and `manifest.json` into `out_dir`.
/// Nothing is written unless every job succeeds. `threads` caps the worker
/// pool; `None` uses rayon's default.
pub fn run_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<SweepOutput, ExperimentError> {
    config.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
    let (rows, fields) = pool.install(|| sweep_rows(config))?;

    let manifest = Manifest {
        tool: "csc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        columns: config.record_columns(),
        fields,
        rows: rows.len(),
    };
    fs::create_dir_all(out_dir)?;
    let records_path = out_dir.join(RECORDS_FILE);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_records(&records_path, &manifest.columns, &rows)?;
    let mut f = fs::File::create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(SweepOutput { rows, manifest, records_path, manifest_path })
}

fn sweep_rows(config: &ExperimentConfig) -> Result<(Vec<RecordRow>, Vec<FieldSummary>), ExperimentError> {
    let jobs = expand_fields(config)?;
    let fields: Vec<Field2D> = jobs.par_iter().map(FieldJob::run).collect::<Result<_, _>>()?;
    let mut seen = BTreeSet::new();
    if let Some(dup) = fields.iter().find(|f| !seen.insert(f.field_id.as_str())) {
        return Err(ExperimentError::Config(format!("field {} appears twice", dup.field_id)));
    }
    let stats: Vec<FieldStatistics> = fields.par_iter().map(|f| compute_statistics(f, &config.statistics)).collect();

    let codecs = config
        .codecs
        .iter()
        .map(|c| build_codec(&c.id, &c.options))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let triples: Vec<(usize, usize, f64)> = (0..fields.len())
        .flat_map(|f| (0..codecs.len()).flat_map(move |c| config.error_bounds.iter().map(move |&eb| (f, c, eb))))
        .collect();

    let rows: Vec<RecordRow> = triples
        .par_iter()
        .map(|&(fi, ci, eb)| {
            let (field, codec, st) = (&fields[fi], codecs[ci].as_ref(), &stats[fi]);
            let run = run_codec(codec, field, eb).map_err(|source| ExperimentError::Codec {
                field_id: field.field_id.clone(),
                codec: codec.id().to_owned(),
                eb,
                source,
            })?;
            let rec = run.record;
            let timing = |t: f64| config.record_timings.then_some(t);
            Ok(RecordRow {
                field_id: field.field_id.clone(),
                codec: rec.codec_id,
                eb,
                original_bytes: rec.original_bytes,
                compressed_bytes: rec.compressed_bytes,
                cr: rec.compression_ratio,
                max_abs_error: rec.max_abs_error,
                global_range: st.global_range,
                local_vario_std: st.local_vario_std,
                local_svd_std: st.local_svd_std,
                encode_seconds: timing(rec.encode_seconds),
                decode_seconds: timing(rec.decode_seconds),
            })
        })
        .collect::<Result<_, ExperimentError>>()?;

    let summaries = fields
        .iter()
        .zip(stats)
        .map(|(f, statistics)| FieldSummary {
            field_id: f.field_id.clone(),
            provenance: f.provenance.clone(),
            nx: f.nx(),
            ny: f.ny(),
            statistics,
        })
        .collect();
    Ok((rows, summaries))
}

pub fn write_fits(path: &Path, fits: &[RegressionFit]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(FITS_COLUMNS)?;
    for f in fits {
        w.write_record([
            f.codec.clone(),
            f.eb.to_string(),
            f.predictor.to_string(),
            f.fit.alpha.to_string(),
            f.fit.beta.to_string(),
            f.fit.r_squared.to_string(),
            f.fit.residual_std.to_string(),
            f.fit.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rejects rows whose reconstruction error exceeds their bound.
pub fn verify_bounds(rows: &[RecordRow]) -> Result<(), ExperimentError> {
    match rows.iter().find(|r| r.max_abs_error.is_nan() || r.max_abs_error > r.eb) {
        Some(r) => Err(ExperimentError::Codec {
            field_id: r.field_id.clone(),
            codec: r.codec.clone(),
            eb: r.eb,
            source: CodecError::BoundViolation { max_error: r.max_abs_error, eb: r.eb },
        }),
        None => Ok(()),
    }
}

/// Drops rows whose eb is in `exclude`.
pub fn exclude_bounds(rows: Vec<RecordRow>, exclude: &[f64]) -> Vec<RecordRow> {
    rows.into_iter().filter(|r| !exclude.contains(&r.eb)).collect()
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Writes one plot-ready CSV per codec: the measured points of every group
/// and, for each fitted group, the curve at [`CURVE_SAMPLES`] evenly spaced
/// predictor values over the group's range. Returns the paths written.
pub fn write_report(out_dir: &Path, fits: &GroupFits, predictor: Predictor) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut panels: BTreeMap<&str, Vec<[String; 6]>> = BTreeMap::new();
    for g in &fits.groups {
        let rows = panels.entry(g.codec.as_str()).or_default();
        for (x, cr, id) in &g.points {
            rows.push(["point".into(), g.codec.clone(), g.eb.to_string(), x.to_string(), cr.to_string(), id.clone()]);
        }
    }
    for f in &fits.fits {
        let g = fits.groups.iter().find(|g| g.codec == f.codec && g.eb == f.eb).expect("fit without group");
        let lo = g.points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = g.points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let rows = panels.entry(f.codec.as_str()).or_default();
        for x in linspace(lo, hi, CURVE_SAMPLES) {
            rows.push([
                "curve".into(),
                f.codec.clone(),
                f.eb.to_string(),
                x.to_string(),
                f.fit.predict(x).to_string(),
                String::new(),
            ]);
        }
    }
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for (codec, rows) in panels {
        let path = out_dir.join(format!("report_{}_{}.csv", file_safe(codec), predictor));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(REPORT_COLUMNS)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "fields": [{"kind": "grf_sweep", "nx": 32, "ny": 32, "ranges": [2, 4, 8], "seeds": [1, 2]}],
                "codecs": [{"id": "sz-like"}, {"id": "transform"}],
                "error_bounds": [1e-3, 1e-2],
                "statistics": [{"kind": "global_range"}, {"kind": "local_vario_std", "H": 16}],
                "seed": 7
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let ok = small_config();
        assert_eq!(ok.output_dir, PathBuf::from("sweep_out"));
        assert_eq!(ok.record_columns()[8], "local_vario_std_H16");
        assert_eq!(ok.record_columns()[9], "local_svd_std_H32");
        for bad in [
            r#"{"fields": [], "codecs": [{"id": "sz-like"}], "error_bounds": [1e-3]}"#,
            r#"{"fields": [{"kind": "grf", "spec": {"nx": 8, "ny": 8, "components": [{"range": 2, "weight": 1}], "variance": 1, "seed": 0}}], "codecs": [{"id": "sz-like"}], "error_bounds": [0]}"#,
            r#"{"fields": [{"kind": "half_and_half", "nx": 8, "ny": 8, "left_range": 2, "right_range": 4}], "codecs": [{"id": "lz4"}], "error_bounds": [1e-3]}"#,
            r#"{"fields": [{"kind": "half_and_half", "nx": 8, "ny": 8, "left_range": 2, "right_range": 4}], "codecs": [{"id": "sz-like"}], "error_bounds": [1e-3], "colour": 1}"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn sweep_cardinality_order_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let out = run_sweep(&cfg, dir.path(), Some(2)).unwrap();
        assert_eq!(out.rows.len(), 6 * 2 * 2);
        assert_eq!(out.rows[0].field_id, "grf_a2_s1");
        assert_eq!(out.rows[0].codec, "sz-like");
        assert_eq!(out.rows[2].codec, "zfp-like");
        assert_eq!(out.rows[4].field_id, "grf_a2_s2");
        assert!(out.rows.iter().all(|r| r.max_abs_error <= r.eb && r.encode_seconds.is_none()));
        assert!(out.rows.iter().all(|r| r.local_svd_std.is_none() && r.local_vario_std.is_some()));
        let back = read_records(&out.records_path).unwrap();
        assert_eq!(back, out.rows);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&out.manifest_path).unwrap()).unwrap();
        let again: ExperimentConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn schema_errors_list_expected_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        fs::write(&path, "field_id,codec,eb\nx,sz-like,0.001\n").unwrap();
        match read_records(&path) {
            Err(ExperimentError::Schema { missing, expected }) => {
                assert!(missing.contains(&"cr".to_string()));
                assert!(expected.contains("local_vario_std_H<window>"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_curves_follow_the_fit() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&small_config(), dir.path(), None).unwrap();
        let fits = crate::regression::fit_groups(&out.rows, Predictor::GlobalRange);
        assert_eq!(fits.fits.len(), 4);
        let paths = write_report(dir.path(), &fits, Predictor::GlobalRange).unwrap();
        assert_eq!(paths.len(), 2);
        let mut r = csv::Reader::from_path(&paths[0]).unwrap();
        let mut curves = 0;
        for rec in r.records() {
            let rec = rec.unwrap();
            if &rec[0] == "curve" {
                curves += 1;
                let eb: f64 = rec[2].parse().unwrap();
                let f = fits.fits.iter().find(|f| f.codec == rec[1] && f.eb == eb).unwrap();
                let x: f64 = rec[3].parse().unwrap();
                assert_eq!(rec[4].parse::<f64>().unwrap(), f.fit.predict(x));
            }
        }
        assert_eq!(curves, 2 * CURVE_SAMPLES);
    }

    #[test]
    fn bound_check_and_eb_filter() {
        let mut rows = vec![RecordRow {
            field_id: "f".into(),
            codec: "sz-like".into(),
            eb: 1e-2,
            original_bytes: 8,
            compressed_bytes: 1,
            cr: 8.0,
            max_abs_error: 1e-3,
            global_range: None,
            local_vario_std: None,
            local_svd_std: None,
            encode_seconds: None,
            decode_seconds: None,
        }];
        assert!(verify_bounds(&rows).is_ok());
        rows[0].max_abs_error = 0.5;
        assert!(verify_bounds(&rows).is_err());
        assert!(exclude_bounds(rows, &[1e-2]).is_empty());
        assert_eq!(linspace(1.0, 2.0, 3), vec![1.0, 1.5, 2.0]);
    }
}
