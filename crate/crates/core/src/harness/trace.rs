//! Per-repetition traces, their CSV form, and percentile aggregation.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::stats::percentile;

/// One row of a trace.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Point evaluated at this iteration; NaN for iteration 0.
    pub x: Vec<f64>,
    /// Noisy observation at `x`; NaN for iteration 0.
    pub y: f64,
    /// Recommended point after this iteration.
    pub incumbent: Vec<f64>,
    /// `|g(incumbent) - g*|`; NaN when no ground truth exists.
    pub regret: f64,
    /// `||incumbent - x*||`; NaN when no ground truth exists.
    pub distance: f64,
    pub wall_ms: f64,
    /// `g(incumbent)`.
    pub robust_value: f64,
}

impl PartialEq for TraceRecord {
    /// Bitwise comparison, so NaN entries compare equal to themselves.
    fn eq(&self, other: &Self) -> bool {
        fn same(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits())
        }
        self.iteration == other.iteration
            && same(&self.x, &other.x)
            && same(&self.incumbent, &other.incumbent)
            && same(
                &[self.y, self.regret, self.distance, self.wall_ms, self.robust_value],
                &[other.y, other.regret, other.distance, other.wall_ms, other.robust_value],
            )
    }
}

/// All rows of one repetition, iteration 0 first.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub dim: usize,
    pub records: Vec<TraceRecord>,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_float(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| invalid(format!("bad number `{s}`: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    invalid(format!("csv: {e}"))
}

pub fn trace_header(dim: usize) -> Vec<String> {
    let mut h = vec!["iter".to_string()];
    h.extend((1..=dim).map(|j| format!("x_{j}")));
    h.push("y".into());
    h.extend((1..=dim).map(|j| format!("inc_{j}")));
    for c in ["regret", "distance", "wall_ms", "g_inc"] {
        h.push(c.into());
    }
    h
}

impl RegretTrace {
    pub fn new(dim: usize) -> Self {
        Self { dim, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn regrets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.regret).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(trace_header(self.dim)).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.x.iter().map(|v| format_float(*v)));
            row.push(format_float(r.y));
            row.extend(r.incumbent.iter().map(|v| format_float(*v)));
            for v in [r.regret, r.distance, r.wall_ms, r.robust_value] {
                row.push(format_float(v));
            }
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let cols = header.len();
        if cols < 7 || (cols - 6) % 2 != 0 {
            return Err(invalid(format!("unexpected trace header with {cols} columns")));
        }
        let dim = (cols - 6) / 2;
        if header.iter().ne(trace_header(dim).iter().map(String::as_str)) {
            return Err(invalid("trace header does not match the expected layout"));
        }
        let mut trace = Self::new(dim);
        for row in rdr.records() {
            let row = row.map_err(csv_err)?;
            let iteration = row[0]
                .parse::<usize>()
                .map_err(|e| invalid(format!("bad iteration `{}`: {e}", &row[0])))?;
            let nums: Vec<f64> = row.iter().skip(1).map(parse_float).collect::<Result<_>>()?;
            trace.records.push(TraceRecord {
                iteration,
                x: nums[..dim].to_vec(),
                y: nums[dim],
                incumbent: nums[dim + 1..2 * dim + 1].to_vec(),
                regret: nums[2 * dim + 1],
                distance: nums[2 * dim + 2],
                wall_ms: nums[2 * dim + 3],
                robust_value: nums[2 * dim + 4],
            });
        }
        Ok(trace)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Median and quartiles of one metric at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub metric: String,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

pub const AGGREGATE_METRICS: [&str; 3] = ["regret", "distance", "g_inc"];

fn metric(r: &TraceRecord, name: &str) -> f64 {
    match name {
        "regret" => r.regret,
        "distance" => r.distance,
        _ => r.robust_value,
    }
}

/// Per-iteration percentiles across traces (linear interpolation between
/// order statistics). NaN entries are skipped; an iteration where every
/// trace is NaN yields NaN.
pub fn aggregate(traces: &[RegretTrace]) -> Result<Vec<AggregateRow>> {
    let first = traces.first().ok_or_else(|| invalid("aggregate needs at least one trace"))?;
    let len = first.len();
    if traces.iter().any(|t| t.len() != len || t.dim != first.dim) {
        return Err(invalid("traces differ in length or dimension"));
    }
    let mut rows = Vec::with_capacity(len * AGGREGATE_METRICS.len());
    for i in 0..len {
        for name in AGGREGATE_METRICS {
            let vals: Vec<f64> = traces
                .iter()
                .map(|t| metric(&t.records[i], name))
                .filter(|v| !v.is_nan())
                .collect();
            let (median, p25, p75) = if vals.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (percentile(&vals, 50.0), percentile(&vals, 25.0), percentile(&vals, 75.0))
            };
            rows.push(AggregateRow {
                iteration: first.records[i].iteration,
                metric: name.to_string(),
                median,
                p25,
                p75,
            });
        }
    }
    Ok(rows)
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(["iter", "metric", "median", "p25", "p75"]).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.iteration.to_string(),
            r.metric.clone(),
            format_float(r.median),
            format_float(r.p25),
            format_float(r.p75),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_aggregate<R: Read>(r: R) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 5 {
            return Err(invalid("aggregate rows need 5 columns"));
        }
        rows.push(AggregateRow {
            iteration: rec[0].parse().map_err(|e| invalid(format!("bad iteration: {e}")))?,
            metric: rec[1].to_string(),
            median: parse_float(&rec[2])?,
            p25: parse_float(&rec[3])?,
            p75: parse_float(&rec[4])?,
        });
    }
    Ok(rows)
}
