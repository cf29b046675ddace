//! CSV result tables. The run table header is fixed and versioned; columns
//! that do not apply to a filter are left empty.

use super::experiment::{GridResult, Metric, RunRow};
use crate::error::Result;
use crate::metrics::GroundTruth;
use std::io::Write;

pub const SCHEMA_VERSION: u32 = 1;

pub const RUN_HEADER: [&str; 15] = [
    "schema_version",
    "model",
    "filter",
    "B",
    "w",
    "r",
    "P",
    "seed",
    "repeat",
    "rmse_mean",
    "rmse_std",
    "rmse_smooth",
    "median_n_eff",
    "assim_seconds",
    "error",
];

pub const SUMMARY_HEADER: [&str; 14] = [
    "schema_version",
    "model",
    "filter",
    "B",
    "w",
    "r",
    "P",
    "statistic",
    "rmse_mean",
    "rmse_std",
    "rmse_smooth",
    "assim_seconds",
    "runs",
    "failures",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row_record(row: &RunRow) -> Vec<String> {
    let m = row.metrics.as_ref();
    vec![
        SCHEMA_VERSION.to_string(),
        row.model.name().to_string(),
        row.filter.name().to_string(),
        opt(row.patches),
        opt(row.kernel_width),
        opt(row.radius),
        row.particles.to_string(),
        row.seed.to_string(),
        row.repeat.to_string(),
        opt(m.map(|m| m.rmse_mean)),
        opt(m.map(|m| m.rmse_std)),
        opt(m.map(|m| m.rmse_smoothness)),
        opt(m.map(|m| m.median_n_eff)),
        opt(m.map(|m| m.assim_seconds)),
        row.error.clone().unwrap_or_default(),
    ]
}

/// Single-writer CSV sink for run rows.
pub struct RunWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RunWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(RUN_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &RunRow) -> Result<()> {
        self.inner.write_record(row_record(row))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_run_rows<W: Write>(out: W, rows: &[RunRow]) -> Result<()> {
    let mut w = RunWriter::new(out)?;
    for r in rows {
        w.write(r)?;
    }
    w.finish()
}

/// Three rows (`min`, `median`, `max`) per swept cell, over its repeats.
pub fn write_grid_summary<W: Write>(out: W, result: &GridResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for cell in &result.cells {
        let rows: Vec<&RunRow> = result.cell_rows(cell).collect();
        let Some(first) = rows.first() else { continue };
        let failures = rows.iter().filter(|r| r.error.is_some()).count();
        let spreads = [
            Metric::RmseMean,
            Metric::RmseStd,
            Metric::RmseSmoothness,
            Metric::AssimSeconds,
        ]
        .map(|m| result.spread(cell, m));
        for (name, pick) in [("min", 0usize), ("median", 1), ("max", 2)] {
            let mut rec = vec![
                SCHEMA_VERSION.to_string(),
                first.model.name().to_string(),
                first.filter.name().to_string(),
                opt(first.patches),
                opt(first.kernel_width),
                opt(first.radius),
                first.particles.to_string(),
                name.to_string(),
            ];
            rec.extend(
                spreads
                    .iter()
                    .map(|s| opt(s.map(|s| [s.min, s.median, s.max][pick]))),
            );
            rec.push(rows.len().to_string());
            rec.push(failures.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Ground truth as CSV with columns `t,node,mean,std,smoothness`; the
/// smoothness coefficient is per time and repeats across nodes.
pub fn write_ground_truth_csv<W: Write>(out: W, gt: &GroundTruth) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "node", "mean", "std", "smoothness"])?;
    for t in 0..gt.times {
        for n in 0..gt.nodes {
            let i = t * gt.nodes + n;
            w.write_record(&[
                (t + 1).to_string(),
                n.to_string(),
                gt.means[i].to_string(),
                gt.stds[i].to_string(),
                gt.smoothness[t].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
