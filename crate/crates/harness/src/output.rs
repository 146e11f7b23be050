//! CSV output.
//!
//! Every file starts with a `# hecal-<kind> v1` line followed by a header row.
//! Result columns, in order:
//!
//! `adc_id, seed, config_digest, algorithm, pre_sndr_db, pre_sfdr_db,
//! post_sndr_db, post_sfdr_db, theta_alpha, delta, samples, iterations,
//! status, error_norm`
//!
//! Sweep files prepend `sweep, grid_value`. Empty cells mean "not
//! applicable". Floats use the shortest representation that round-trips.
//! Wall-clock times go to a separate timings file so result files stay
//! byte-identical across reruns.

use crate::run::{ResultRow, SweepPoint};
use crate::HarnessError;
use hecal_core::spectral::SpectrumEstimate;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const RESULT_VERSION: &str = "# hecal-results v1";
pub const AGGREGATE_VERSION: &str = "# hecal-aggregate v1";
pub const TIMING_VERSION: &str = "# hecal-timings v1";
pub const SPECTRUM_VERSION: &str = "# hecal-spectrum v1";

pub const ROW_COLUMNS: [&str; 14] = [
    "adc_id",
    "seed",
    "config_digest",
    "algorithm",
    "pre_sndr_db",
    "pre_sfdr_db",
    "post_sndr_db",
    "post_sfdr_db",
    "theta_alpha",
    "delta",
    "samples",
    "iterations",
    "status",
    "error_norm",
];

pub const AGGREGATE_COLUMNS: [&str; 8] = ["sweep", "grid_value", "algorithm", "metric", "count", "mean", "min", "max"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row_fields(r: &ResultRow) -> Vec<String> {
    vec![
        r.adc_id.to_string(),
        r.seed.to_string(),
        r.config_digest.clone(),
        r.algorithm.name().to_string(),
        fmt_f64(r.pre_sndr_db),
        fmt_f64(r.pre_sfdr_db),
        fmt_f64(r.post_sndr_db),
        fmt_f64(r.post_sfdr_db),
        opt(r.theta_alpha.map(fmt_f64)),
        fmt_f64(r.delta),
        r.samples.to_string(),
        opt(r.iterations),
        r.status.clone(),
        opt(r.error_norm.map(fmt_f64)),
    ]
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn writer<W: Write>(mut w: W, version: &str) -> std::io::Result<csv::Writer<W>> {
    writeln!(w, "{version}")?;
    Ok(csv::WriterBuilder::new().flexible(false).from_writer(w))
}

pub fn write_rows<W: Write>(w: W, rows: &[ResultRow]) -> std::io::Result<()> {
    let mut out = writer(w, RESULT_VERSION)?;
    out.write_record(ROW_COLUMNS).map_err(csv_err)?;
    for r in rows {
        out.write_record(row_fields(r)).map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_sweep<W: Write>(w: W, points: &[SweepPoint]) -> std::io::Result<()> {
    let mut out = writer(w, RESULT_VERSION)?;
    let header: Vec<&str> = ["sweep", "grid_value"].into_iter().chain(ROW_COLUMNS).collect();
    out.write_record(&header).map_err(csv_err)?;
    for p in points {
        for r in &p.rows {
            let mut fields = vec![p.kind.name().to_string(), fmt_f64(p.value)];
            fields.extend(row_fields(r));
            out.write_record(&fields).map_err(csv_err)?;
        }
    }
    out.flush()
}

/// Population statistics of one metric at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub sweep: String,
    pub grid_value: f64,
    pub algorithm: String,
    pub metric: &'static str,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

type Metric = (&'static str, fn(&ResultRow) -> Option<f64>);

const METRICS: [Metric; 6] = [
    ("pre_sndr_db", |r| Some(r.pre_sndr_db)),
    ("pre_sfdr_db", |r| Some(r.pre_sfdr_db)),
    ("post_sndr_db", |r| Some(r.post_sndr_db)),
    ("post_sfdr_db", |r| Some(r.post_sfdr_db)),
    ("theta_alpha", |r| r.theta_alpha),
    ("error_norm", |r| r.error_norm),
];

/// Arithmetic mean, min and max of every metric over each point's rows.
/// Metrics without values at a point are skipped.
pub fn aggregate(points: &[SweepPoint]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for p in points {
        for (metric, get) in METRICS {
            let values: Vec<f64> = p.rows.iter().filter_map(get).collect();
            if values.is_empty() {
                continue;
            }
            out.push(AggregateRow {
                sweep: p.kind.name().to_string(),
                grid_value: p.value,
                algorithm: p.algorithm.name().to_string(),
                metric,
                count: values.len(),
                mean: values.iter().sum::<f64>() / values.len() as f64,
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    out
}

pub fn write_aggregate<W: Write>(w: W, rows: &[AggregateRow]) -> std::io::Result<()> {
    let mut out = writer(w, AGGREGATE_VERSION)?;
    out.write_record(AGGREGATE_COLUMNS).map_err(csv_err)?;
    for a in rows {
        out.write_record([
            a.sweep.clone(),
            fmt_f64(a.grid_value),
            a.algorithm.clone(),
            a.metric.to_string(),
            a.count.to_string(),
            fmt_f64(a.mean),
            fmt_f64(a.min),
            fmt_f64(a.max),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_timings<W: Write>(w: W, rows: &[ResultRow]) -> std::io::Result<()> {
    let mut out = writer(w, TIMING_VERSION)?;
    out.write_record(["adc_id", "algorithm", "samples", "wall_clock_s"])
        .map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.adc_id.to_string(),
            r.algorithm.name().to_string(),
            r.samples.to_string(),
            fmt_f64(r.wall_clock),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_spectrum<W: Write>(w: W, spec: &SpectrumEstimate) -> std::io::Result<()> {
    let mut out = writer(w, SPECTRUM_VERSION)?;
    out.write_record(["bin", "power"]).map_err(csv_err)?;
    for (k, p) in spec.power.iter().enumerate() {
        out.write_record([k.to_string(), fmt_f64(*p)]).map_err(csv_err)?;
    }
    out.flush()
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn to_file<F>(path: &Path, f: F) -> Result<(), HarnessError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    f(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [94.23, 1e-20, -3.5e-3, f64::INFINITY, 0.1 + 0.2] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }
}
