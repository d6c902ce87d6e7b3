//! Per-iteration metric rows and their CSV encoding.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

pub const HEADER: &str = "step,train_loss,eval_loss,drift,contraction_norm,wall_ms";

/// One CSV row. Absent values are written as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    pub drift: Option<f64>,
    pub contraction_norm: Option<f64>,
    pub wall_ms: Option<u64>,
}

/// Append-only CSV sink that enforces strictly increasing steps. The header
/// is written up front, so a run without iterations still yields a valid file.
pub struct MetricWriter<W: Write> {
    inner: csv::Writer<W>,
    last_step: Option<u64>,
}

impl<W: Write> MetricWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
        inner.write_record(HEADER.split(','))?;
        inner.flush()?;
        Ok(MetricWriter { inner, last_step: None })
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<()> {
        if let Some(prev) = self.last_step {
            ensure!(row.step > prev, "metric step {} after {}", row.step, prev);
        }
        self.inner.serialize(row)?;
        self.inner.flush()?;
        self.last_step = Some(row.step);
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| anyhow::anyhow!("flushing metrics: {}", e.error()))
    }
}

impl MetricWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Self::new(f)
    }
}

/// Rows of a metric CSV, header included in the check.
pub fn read_metrics<R: io::Read>(source: R) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(source);
    let header: Vec<&str> = rdr.headers()?.iter().collect();
    ensure!(header.join(",") == HEADER, "unexpected metric header {:?}", header);
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricRow>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_metrics(f)
}

/// Encodes rows into CSV bytes, header first.
pub fn to_csv_bytes(rows: &[MetricRow]) -> Result<Vec<u8>> {
    let mut w = MetricWriter::new(Vec::new())?;
    for r in rows {
        w.write(r)?;
    }
    w.into_inner()
}
