use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::pool::Assets;
use super::render::{render, ForgeryRecord};
use super::scenario::ScenarioConfig;
use super::spec::sample_spec;
use crate::audio::write_wav;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub manifest: PathBuf,
    pub written: usize,
    /// Sample indices that could not satisfy the scenario, with the reason.
    pub skipped: Vec<(u64, String)>,
}

/// Renders `count` samples into `<out>/audio/<id>.wav` and writes
/// `<out>/manifest.jsonl`. Sample `i` depends only on `(scenario, seed, i)`,
/// so the output does not depend on thread scheduling.
pub fn generate_dataset(
    assets: &Assets,
    scenario: &ScenarioConfig,
    count: usize,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<GenerateReport> {
    scenario.validate()?;
    let out_dir = out_dir.as_ref();
    let audio_dir = out_dir.join("audio");
    if count > 0 {
        fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    } else {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    let outcomes: Vec<Result<std::result::Result<ForgeryRecord, String>>> = (0..count as u64)
        .into_par_iter()
        .map(|index| {
            let spec = match sample_spec(assets, scenario, seed, index) {
                Ok(s) => s,
                Err(Error::Rejected(msg)) => return Ok(Err(msg)),
                Err(e) => return Err(e),
            };
            let rendered = match render(&spec, assets) {
                Ok(r) => r,
                Err(Error::Rejected(msg)) => return Ok(Err(msg)),
                Err(e) => return Err(e),
            };
            let id = format!("{index:06}");
            let rel = format!("audio/{id}.wav");
            write_wav(out_dir.join(&rel), &rendered.audio)?;
            Ok(Ok(ForgeryRecord {
                id,
                audio_path: rel,
                duration_s: rendered.duration_seconds(),
                splice_times_s: rendered.splice_times,
                grid_labels: rendered.grid_labels,
                spec,
            }))
        })
        .collect();

    let mut records = Vec::with_capacity(count);
    let mut skipped = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            Ok(r) => records.push(r),
            Err(msg) => skipped.push((index as u64, msg)),
        }
    }
    let manifest = out_dir.join(MANIFEST_NAME);
    write_manifest(&manifest, &records)?;
    Ok(GenerateReport {
        manifest,
        written: records.len(),
        skipped,
    })
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ForgeryRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ForgeryRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Absolute location of a record's audio.
pub fn record_audio_path(manifest: &Path, rec: &ForgeryRecord) -> PathBuf {
    manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&rec.audio_path)
}
