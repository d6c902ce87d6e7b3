//! JSON-lines export of generated task samples.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use ncgru_core::tasks::TaskSpec;

#[derive(Debug, Serialize)]
struct Line<'a> {
    task: &'a str,
    #[serde(rename = "T")]
    t: usize,
    seed: u64,
    input: Vec<&'a [f64]>,
    target: Vec<Vec<f64>>,
}

/// Writes `count` samples of `spec` as one JSON object per line. Class
/// targets are one-hot rows; regression targets a single row.
pub fn write_jsonl<W: Write>(spec: &TaskSpec, count: usize, seed: u64, mut out: W) -> Result<()> {
    let batch = spec.generate(count, seed)?;
    let task = spec.kind().name();
    for (k, x) in batch.inputs.iter().enumerate() {
        let line = Line {
            task,
            t: spec.t(),
            seed,
            input: (0..x.rows()).map(|i| x.row(i)).collect(),
            target: batch.target_rows(k),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_jsonl_file(spec: &TaskSpec, count: usize, seed: u64, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_jsonl(spec, count, seed, BufWriter::new(f))
}
