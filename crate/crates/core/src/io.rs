//! Delimited-text persistence for datasets, traces, timings and summaries.
//!
//! Floats are written in their shortest round-trip form so files written
//! from identical runs are byte-identical.

use std::io::{Read, Write};

use crate::bo::BoTrace;
use crate::error::{Error, Result};
use crate::gp::Dataset;

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn joined(values: impl Iterator<Item = f64>) -> String {
    values.map(num).collect::<Vec<_>>().join(";")
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("expected a number, got '{s}'")))
}

/// Columns `x0..x{D-1}, y`.
pub fn write_dataset_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..ds.dim()).map(|d| format!("x{d}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (x, y) in ds.x().iter().zip(ds.y()) {
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.push(num(*y));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a header row and numeric rows; the last column is the target.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(input);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec.iter().map(parse_num).collect::<Result<_>>()?;
        let (y, x) = vals.split_last().ok_or_else(|| Error::Parse("empty row".into()))?;
        if x.is_empty() {
            return Err(Error::Parse("rows need at least one input column".into()));
        }
        xs.push(x.to_vec());
        ys.push(*y);
    }
    if xs.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Dataset::new(xs, ys)
}

pub const TRACE_FIXED_COLUMNS: [&str; 13] = [
    "f", "best", "regret", "beta", "gap", "status", "nodes", "lcb_warm", "lcb_pool", "lcb_polished", "nugget", "duplicate",
    "fallback",
];

/// One row per evaluation; the initial design carries iteration 0. Group
/// quantities of additive runs are joined with ';'.
pub fn write_trace_csv<W: Write>(trace: &BoTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string()];
    header.extend((0..trace.dim).map(|d| format!("x{d}")));
    header.extend(TRACE_FIXED_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let mut best = f64::INFINITY;
    for s in &trace.initial {
        best = best.min(s.f);
        let mut row = vec!["0".to_string()];
        row.extend(s.x.iter().map(|v| num(*v)));
        row.extend([num(s.f), num(best), opt(trace.known_optimum.map(|o| best - o))]);
        row.extend(std::iter::repeat_n(String::new(), TRACE_FIXED_COLUMNS.len() - 3));
        w.write_record(&row)?;
    }
    for r in &trace.records {
        let mut row = vec![r.iteration.to_string()];
        row.extend(r.x.iter().map(|v| num(*v)));
        row.extend([
            num(r.f),
            num(r.best),
            opt(r.regret),
            joined(r.groups.iter().map(|g| g.beta)),
            num(r.gap()),
            r.groups.iter().map(|g| g.status.map_or("none", |s| s.as_str())).collect::<Vec<_>>().join(";"),
            r.groups.iter().map(|g| g.nodes).sum::<usize>().to_string(),
            joined(r.groups.iter().map(|g| g.lcb_warm)),
            joined(r.groups.iter().map(|g| g.lcb_pool)),
            joined(r.groups.iter().map(|g| g.lcb_polished)),
            opt(r.nugget),
            (r.duplicate as u8).to_string(),
            (r.fallback() as u8).to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock seconds per stage and iteration.
pub fn write_timings_csv<W: Write>(trace: &BoTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "fit", "linearize", "warm_start", "solve", "polish", "evaluate"])?;
    for r in &trace.records {
        let t = &r.timings;
        w.write_record([
            r.iteration.to_string(),
            num(t.fit),
            num(t.linearize),
            num(t.warm_start),
            num(t.solve),
            num(t.polish),
            num(t.evaluate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub best: f64,
    pub regret: Option<f64>,
}

/// Reads the leading columns of a file written by [`write_trace_csv`].
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let dim = r.headers()?.iter().filter(|h| h.starts_with('x')).count();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse("short trace row".into()));
        let iteration = field(0)?.parse().map_err(|_| Error::Parse("bad iteration".into()))?;
        let x = (1..=dim).map(|i| parse_num(field(i)?)).collect::<Result<_>>()?;
        let regret = match field(dim + 3)? {
            "" => None,
            s => Some(parse_num(s)?),
        };
        rows.push(TraceRow { iteration, x, f: parse_num(field(dim + 1)?)?, best: parse_num(field(dim + 2)?)?, regret });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub iteration: usize,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Per-iteration mean and population standard deviation of the simple
/// regret over runs. Iteration 0 is the state after the initial design.
pub fn summarize(traces: &[BoTrace]) -> Vec<SummaryRow> {
    let last = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    (0..=last)
        .filter_map(|it| {
            let vals: Vec<f64> = traces
                .iter()
                .filter_map(|t| {
                    let o = t.known_optimum?;
                    if it == 0 {
                        (!t.initial.is_empty()).then(|| t.initial.iter().map(|s| s.f).fold(f64::INFINITY, f64::min) - o)
                    } else {
                        t.records.get(it - 1).and_then(|r| r.regret)
                    }
                })
                .collect();
            mean_std(&vals).map(|(mean, std)| SummaryRow { iteration: it, mean, std, runs: vals.len() })
        })
        .collect()
}

/// Mean and population standard deviation; `None` for an empty slice.
pub fn mean_std(vals: &[f64]) -> Option<(f64, f64)> {
    if vals.is_empty() {
        return None;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "mean_regret", "std_regret", "runs"])?;
    for r in rows {
        w.write_record([r.iteration.to_string(), num(r.mean), num(r.std), r.runs.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).ok_or_else(|| Error::Parse("short summary row".into()));
        rows.push(SummaryRow {
            iteration: get(0)?.parse().map_err(|_| Error::Parse("bad iteration".into()))?,
            mean: parse_num(get(1)?)?,
            std: parse_num(get(2)?)?,
            runs: get(3)?.parse().map_err(|_| Error::Parse("bad run count".into()))?,
        });
    }
    Ok(rows)
}
