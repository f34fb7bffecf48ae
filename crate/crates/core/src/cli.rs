//! Command-line front end and the manifest-level helpers it is built on.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, AudioSignal, WORKING_RATE};
use crate::error::{Error, Result};
use crate::features::{assemble, frame_count};
use crate::forgery::synth::{write_synth_pool, SynthPoolConfig};
use crate::forgery::{
    check_record, generate_dataset, read_manifest, record_audio_path, Assets, ScenarioConfig,
    Split, EXTERNAL_CODEC_ENV, PRESET_NAMES,
};
use crate::metrics::{evaluate, write_csv, write_plots, EvalResult, SamplePrediction};
use crate::model::vocab::grid_labels;
use crate::model::{decode_topn, load_checkpoint, Hypothesis, Model, TokenSeq};
use crate::training::{finetune, load_examples, train, TrainFile};

fn presets_help() -> String {
    format!(
        "Scenario presets:\n  {}\n\nA scenario may also be a TOML file with the same fields.\n\
         Set {EXTERNAL_CODEC_ENV} to a shell template with {{input}}, {{output}} and \
         {{bitrate}} to use an external encoder for the `external` codec.",
        PRESET_NAMES.join("\n  ")
    )
}

#[derive(Parser, Debug)]
#[command(name = "splicedet", version, about = "Generate spliced speech and localize splice points")]
#[command(after_help = presets_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a forged dataset with a manifest.
    #[command(after_help = presets_help())]
    Generate(GenerateArgs),
    /// Write a synthetic speaker/noise pool usable by `generate`.
    SynthPool(SynthPoolArgs),
    /// Train a detector from scratch.
    Train(TrainArgs),
    /// Continue training an existing checkpoint on new data.
    Finetune(FinetuneArgs),
    /// Score a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Print ranked splice hypotheses for one audio file.
    Detect(DetectArgs),
    /// Re-derive frame counts and label grids and compare with the manifest.
    Inspect(InspectArgs),
    /// Tables and plots from an eval report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Preset name or scenario TOML file.
    #[arg(long)]
    pub scenario: String,
    /// Pool directory with train/validation/test speaker folders.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthPoolArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Speakers per split as train,validation,test.
    #[arg(long, default_value = "6,2,2")]
    pub speakers: String,
    #[arg(long, default_value_t = 6)]
    pub clips: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// TOML with optional [train] and [model] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// The [model] table, when given, must match the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 3.0])]
    pub windows: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub topn: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the aggregate table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    pub audio: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub topn: usize,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// JSON written by `eval`.
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Ranked hypotheses for one signal, at most `topn` of them.
pub fn detect_signal(model: &Model<f32>, audio: &AudioSignal, topn: usize) -> Result<Vec<Hypothesis>> {
    let fs = assemble(audio)?;
    let mut hyps = decode_topn(model, &fs, topn)?;
    hyps.truncate(topn);
    Ok(hyps)
}

/// Renders positions as `1.5 4 12.5`, or `∘` when empty.
pub fn format_positions(p: &[f64]) -> String {
    if p.is_empty() {
        "∘".into()
    } else {
        p.iter().map(|t| format!("{t}")).collect::<Vec<_>>().join(" ")
    }
}

/// Decodes every record of a manifest and scores the predictions.
pub fn evaluate_manifest(
    model: &Model<f32>,
    manifest: impl AsRef<Path>,
    windows: &[f64],
    topn: usize,
) -> Result<EvalResult> {
    let manifest = manifest.as_ref();
    let records = read_manifest(manifest)?;
    let preds: Vec<SamplePrediction> = records
        .par_iter()
        .map(|rec| {
            let audio = load_wav(record_audio_path(manifest, rec))?;
            let hyps = detect_signal(model, &audio, topn)?;
            Ok(SamplePrediction {
                id: rec.id.clone(),
                truth: TokenSeq::from_positions(&rec.grid_labels).positions(),
                ranked: hyps.iter().map(|h| h.seq.positions()).collect(),
                scores: hyps.iter().map(|h| h.score).collect(),
                truncated: hyps.first().is_some_and(|h| h.truncated),
            })
        })
        .collect::<Result<_>>()?;
    Ok(evaluate(preds, windows, topn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectRow {
    pub id: String,
    pub duration_s: f64,
    pub frames: usize,
    pub grid_labels: Vec<f64>,
    /// Empty when the record agrees with its audio.
    pub problems: Vec<String>,
}

/// Re-derives duration, frame count and label grid of each record from its
/// audio and reports disagreements with the manifest.
pub fn inspect_manifest(manifest: impl AsRef<Path>) -> Result<Vec<InspectRow>> {
    let manifest = manifest.as_ref();
    let records = read_manifest(manifest)?;
    records
        .par_iter()
        .map(|rec| {
            let audio = load_wav(record_audio_path(manifest, rec))?;
            let mut problems = Vec::new();
            if let Err(e) = check_record(rec) {
                problems.push(e);
            }
            let dur = audio.duration_seconds();
            if (dur - rec.duration_s).abs() > 1.0 / WORKING_RATE as f64 {
                problems.push(format!("audio lasts {dur} s, manifest says {}", rec.duration_s));
            }
            let frames = frame_count(audio.len());
            let expected = frame_count((rec.duration_s * WORKING_RATE as f64).round() as usize);
            if frames != expected {
                problems.push(format!("{frames} frames from audio, {expected} from manifest"));
            }
            match assemble(&audio) {
                Ok(fs) if fs.n_frames != frames => {
                    problems.push(format!("features have {} frames, expected {frames}", fs.n_frames))
                }
                Err(e) => problems.push(e.to_string()),
                _ => {}
            }
            let grid = grid_labels(&rec.splice_times_s);
            if grid != rec.grid_labels {
                problems.push(format!("grid {grid:?} differs from manifest {:?}", rec.grid_labels));
            }
            Ok(InspectRow {
                id: rec.id.clone(),
                duration_s: dur,
                frames,
                grid_labels: grid,
                problems,
            })
        })
        .collect()
}

fn parse_speakers(s: &str) -> Result<[usize; 3]> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("--speakers {s:?}: {e}")))?;
    <[usize; 3]>::try_from(v).map_err(|_| Error::Config(format!("--speakers {s:?} needs three counts")))
}

fn load_train_file(path: Option<&Path>) -> Result<TrainFile> {
    path.map_or_else(|| Ok(TrainFile::default()), TrainFile::load)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Runs one parsed command and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    match cli.command {
        Command::Generate(a) => {
            let scenario = ScenarioConfig::resolve(&a.scenario)?;
            let split = Split::parse(&a.split)?;
            let assets = Assets::load_dir(&a.pool, split)?;
            let rep = generate_dataset(&assets, &scenario, a.count, a.seed, &a.out)?;
            writeln!(out, "wrote {} records to {}", rep.written, rep.manifest.display()).map_err(w)?;
            for (i, why) in &rep.skipped {
                writeln!(out, "skipped sample {i}: {why}").map_err(w)?;
            }
        }
        Command::SynthPool(a) => {
            let cfg = SynthPoolConfig {
                speakers: parse_speakers(&a.speakers)?,
                clips_per_speaker: a.clips,
                seed: a.seed,
                ..SynthPoolConfig::default()
            };
            write_synth_pool(&a.out, &cfg)?;
            writeln!(out, "wrote synthetic pool to {}", a.out.display()).map_err(w)?;
        }
        Command::Train(a) => {
            let mut file = load_train_file(a.config.as_deref())?;
            if let Some(s) = a.seed {
                file.train.seed = s;
            }
            let mut model = Model::<f32>::new(file.model.clone(), file.train.seed)?;
            let tr = load_examples(&a.train)?;
            let va = load_examples(&a.val)?;
            let rep = train(&mut model, &tr, &va, &file.train, &a.out)?;
            writeln!(
                out,
                "{} epochs, stopped by {:?}; best checkpoint {}",
                rep.epochs.len(),
                rep.stop_reason,
                rep.best_checkpoint.display()
            )
            .map_err(w)?;
        }
        Command::Finetune(a) => {
            let mut file = load_train_file(a.config.as_deref())?;
            if let Some(s) = a.seed {
                file.train.seed = s;
            }
            let expected = a.config.as_ref().map(|_| &file.model);
            let tr = load_examples(&a.train)?;
            let va = load_examples(&a.val)?;
            let (_, rep) = finetune::<f32>(&a.from, expected, &tr, &va, &file.train, &a.out)?;
            writeln!(
                out,
                "{} epochs, stopped by {:?}; best checkpoint {}",
                rep.epochs.len(),
                rep.stop_reason,
                rep.best_checkpoint.display()
            )
            .map_err(w)?;
        }
        Command::Eval(a) => {
            let model: Model<f32> = load_checkpoint(&a.checkpoint)?;
            let res = evaluate_manifest(&model, &a.manifest, &a.windows, a.topn)?;
            write_json(&a.out, &res)?;
            if let Some(csv) = &a.csv {
                write_csv(&res.aggregates, csv)?;
            }
            let ag = &res.aggregates;
            for (n, acc) in &ag.topn {
                writeln!(out, "top-{n} accuracy {acc:.4}").map_err(w)?;
            }
            for s in &ag.windows {
                writeln!(out, "w={} J={:.4} R={:.4}", s.w, s.jaccard, s.recall).map_err(w)?;
            }
        }
        Command::Detect(a) => {
            let model: Model<f32> = load_checkpoint(&a.checkpoint)?;
            let audio = load_wav(&a.audio)?;
            let hyps = detect_signal(&model, &audio, a.topn)?;
            for h in &hyps {
                let mark = if h.truncated { "\ttruncated" } else { "" };
                writeln!(out, "{}\t{:.4}{mark}", format_positions(&h.seq.positions()), h.score).map_err(w)?;
            }
            if hyps.first().is_some_and(|h| h.truncated) {
                return Ok(2);
            }
        }
        Command::Inspect(a) => {
            let rows = inspect_manifest(&a.manifest)?;
            let mut bad = 0;
            for r in &rows {
                let status = if r.problems.is_empty() { "ok" } else { "MISMATCH" };
                writeln!(
                    out,
                    "{}\t{:.3} s\t{} frames\t{}\t{status}",
                    r.id,
                    r.duration_s,
                    r.frames,
                    format_positions(&r.grid_labels)
                )
                .map_err(w)?;
                for p in &r.problems {
                    writeln!(out, "  {p}").map_err(w)?;
                }
                bad += usize::from(!r.problems.is_empty());
            }
            writeln!(out, "{} records, {bad} with problems", rows.len()).map_err(w)?;
            if bad > 0 {
                return Ok(1);
            }
        }
        Command::Report(a) => {
            let text = fs::read_to_string(&a.eval).map_err(|e| Error::io(&a.eval, e))?;
            let res: EvalResult =
                serde_json::from_str(&text).map_err(|e| Error::format(&a.eval, e.to_string()))?;
            fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            write_csv(&res.aggregates, a.out.join("metrics.csv"))?;
            write_plots(&res.aggregates, &a.out)?;
            writeln!(out, "wrote metrics.csv, topn.svg and windows.svg to {}", a.out.display()).map_err(w)?;
        }
    }
    Ok(0)
}
