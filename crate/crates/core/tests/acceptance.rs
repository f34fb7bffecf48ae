//! End-to-end acceptance checks. Run with
//! `cargo test --release -p splicedet --test acceptance`.
//!
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fail.

mod support;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splicedet::audio::{fft_convolution, AudioSignal, WORKING_RATE};
use splicedet::features::{assemble, dct2_orthonormal, dct3_orthonormal, spectral_centroid, FULL_WIDTH};
use splicedet::forgery::synth::{synth_recording, synth_split, write_synth_pool, SynthPoolConfig};
use splicedet::forgery::{
    add_noise, check_record, generate_dataset, read_manifest, white_noise, Assets, ScenarioConfig,
    SpeakerPool, SpliceCount, Split,
};
use splicedet::metrics::{jaccard, recall};
use splicedet::model::vocab::{position_time, VOCAB_SIZE};
use splicedet::model::{decode_greedy, Model, ModelConfig, SpliceVocab};
use splicedet::training::{load_examples, train, Example, TrainConfig};

// Tolerances and budgets.
const PARAMS_MIN: usize = 5_000_000;
const PARAMS_MAX: usize = 9_000_000;
const CAUSAL_TOL: f64 = 1e-6;
const ARCH_BUDGET: Duration = Duration::from_secs(60);
const FEATURE_BUDGET: Duration = Duration::from_secs(10);
const GRAD_BUDGET: Duration = Duration::from_secs(300);
const CONV_RMS_TOL: f64 = 1e-6;
const DCT_TOL: f64 = 1e-9;
const SNR_TOL_DB: f64 = 0.1;
const CENTROID_REL_TOL: f64 = 0.01;
const MATCH_INSTANCES: usize = 10_000;
const ONE_SIXTH_TOL: f64 = 0.005;
const SMOKE_TRAIN_ACC: f64 = 0.9;
const SMOKE_CHANCE_FACTOR: f64 = 2.0;
const SMOKE_CPU_BUDGET: Duration = Duration::from_secs(30 * 60);
const TRAJECTORY_TOL: f64 = 1e-6;
const SCENARIO_COUNT: usize = 50;
const SCENARIO_BUDGET: Duration = Duration::from_secs(300);

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget: Duration) -> Result<(), String> {
    if elapsed <= budget {
        Ok(())
    } else {
        Err(format!("took {:.1}s, budget {:.0}s", elapsed.as_secs_f64(), budget.as_secs_f64()))
    }
}

/// User plus system CPU time of this process, from /proc. Falls back to
/// `None` where that is unavailable.
fn cpu_time() -> Option<Duration> {
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // utime and stime are fields 14 and 15 of the full line
    let ticks: u64 = fields.get(11)?.parse::<u64>().ok()? + fields.get(12)?.parse::<u64>().ok()?;
    Some(Duration::from_secs_f64(ticks as f64 / 100.0))
}

fn tone(freq: f64, seconds: f64, amp: f64) -> AudioSignal {
    let rate = WORKING_RATE as f64;
    AudioSignal::new(
        (0..(seconds * rate) as usize)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin())
            .collect(),
        WORKING_RATE,
    )
}

fn random_stack(seed: u64, frames: usize) -> splicedet::features::FeatureStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    splicedet::features::FeatureStack {
        n_frames: frames,
        width: FULL_WIDTH,
        data: (0..frames * FULL_WIDTH).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        source_duration: frames as f64 * 0.5,
    }
}

fn architecture() -> Outcome {
    let t0 = Instant::now();
    let model = Model::<f32>::new(ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    let params = model.parameter_count();
    let fs = random_stack(1, 12);
    let prefix = [1usize, 10, 20, 30];
    let logits = model.logits(&fs, &prefix).map_err(|e| e.to_string())?;
    let shape_ok = logits.shape == [prefix.len(), VOCAB_SIZE];
    let mut altered = prefix;
    altered[2] = 70;
    altered[3] = 71;
    let other = model.logits(&fs, &altered).map_err(|e| e.to_string())?;
    let keep = 2 * VOCAB_SIZE;
    let leak = logits.data[..keep]
        .iter()
        .zip(&other.data[..keep])
        .map(|(a, b)| (a - b).abs() as f64)
        .fold(0.0, f64::max);
    within(t0.elapsed(), ARCH_BUDGET)?;
    check(
        (PARAMS_MIN..=PARAMS_MAX).contains(&params) && shape_ok && leak <= CAUSAL_TOL,
        format!("params {params}, logits {:?}, causal leak {leak:.1e}", logits.shape),
    )
}

fn feature_shape() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let long = AudioSignal::new(synth_recording(120.0, 45.0, &mut rng).samples[..45 * 16_000].to_vec(), WORKING_RATE);
    let short = AudioSignal::new(synth_recording(200.0, 3.0, &mut rng).samples[..3 * 16_000].to_vec(), WORKING_RATE);
    let a = assemble(&long).map_err(|e| e.to_string())?;
    let b = assemble(&short).map_err(|e| e.to_string())?;
    within(t0.elapsed(), FEATURE_BUDGET)?;
    let finite = a.data.iter().chain(&b.data).all(|v| v.is_finite());
    check(
        (a.n_frames, a.width, b.n_frames, b.width) == (90, 277, 6, 277) && finite,
        format!("45 s -> {}x{}, 3 s -> {}x{}", a.n_frames, a.width, b.n_frames, b.width),
    )
}

fn vocabulary() -> Outcome {
    let v = SpliceVocab::new();
    let times: Vec<f64> = (0..v.len()).filter_map(position_time).collect();
    let expected: Vec<f64> = (1..=89).map(|k| 0.5 * k as f64).collect();
    check(
        v.len() == 93 && times == expected,
        format!(
            "{} tokens, {} positions {}..{} s",
            v.len(),
            times.len(),
            times.first().unwrap_or(&f64::NAN),
            times.last().unwrap_or(&f64::NAN)
        ),
    )
}

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let ops = support::grad::op_errors();
    let (worst_op, op_err) = ops
        .iter()
        .cloned()
        .fold(("none", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let model_err = support::grad::model_error();
    within(t0.elapsed(), GRAD_BUDGET)?;
    check(
        op_err <= support::grad::OP_TOL && model_err <= support::grad::MODEL_TOL,
        format!(
            "{} ops, worst {worst_op} {op_err:.2e} (tol {:.0e}); model {model_err:.2e} (tol {:.0e})",
            ops.len(),
            support::grad::OP_TOL,
            support::grad::MODEL_TOL
        ),
    )
}

fn naive_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, xi) in x.iter().enumerate() {
        for (j, hj) in h.iter().enumerate() {
            y[i + j] += xi * hj;
        }
    }
    y
}

fn dsp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut conv_rms: f64 = 0.0;
    for _ in 0..5 {
        let x: Vec<f64> = (0..rng.gen_range(1000..6000)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..rng.gen_range(10..1200)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (fft_convolution(&x, &h), naive_convolution(&x, &h));
        if a.len() != b.len() {
            return Err(format!("convolution length {} vs {}", a.len(), b.len()));
        }
        let rms = (a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        conv_rms = conv_rms.max(rms);
    }

    let mut dct_err: f64 = 0.0;
    for n in [8, 20, 256, 301] {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let back = dct3_orthonormal(&dct2_orthonormal(&x));
        dct_err = dct_err.max(x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }

    let speech = {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let s = synth_recording(150.0, 5.0, &mut r);
        let peak = s.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        AudioSignal::new(s.samples.iter().map(|v| v * 0.02 / peak).collect(), WORKING_RATE)
    };
    let noise = white_noise(3 * 16_000, WORKING_RATE, 9);
    let power = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    let mut snr_err: f64 = 0.0;
    for snr in [-10.0, 0.0, 10.0, 30.0, 50.0] {
        let out = add_noise(&speech, &noise, snr, 1234).map_err(|e| e.to_string())?;
        let residual: Vec<f64> = out.samples.iter().zip(&speech.samples).map(|(o, s)| o - s).collect();
        let realized = 10.0 * (power(&speech.samples) / power(&residual)).log10();
        snr_err = snr_err.max((realized - snr).abs());
    }

    let mut centroid_err: f64 = 0.0;
    for f in [500.0, 1000.0, 2000.0, 4000.0] {
        let c = spectral_centroid(&tone(f, 3.0, 0.5)).map_err(|e| e.to_string())?;
        for v in &c.data {
            centroid_err = centroid_err.max((v - f).abs() / f);
        }
    }

    check(
        conv_rms <= CONV_RMS_TOL && dct_err <= DCT_TOL && snr_err <= SNR_TOL_DB && centroid_err <= CENTROID_REL_TOL,
        format!(
            "conv rms {conv_rms:.1e}, dct {dct_err:.1e}, snr {snr_err:.3} dB, centroid {:.3}%",
            100.0 * centroid_err
        ),
    )
}

fn write_pool(dir: &Path) -> Result<(), String> {
    write_synth_pool(dir, &SynthPoolConfig::default()).map_err(|e| e.to_string())
}

fn evaluation(pool: &Path, work: &Path) -> Outcome {
    let mismatches = support::oracle::matching_mismatches(MATCH_INSTANCES, 4, 2024);
    let assets = Assets::load_dir(pool, Split::Test).map_err(|e| e.to_string())?;
    let scenario = ScenarioConfig::preset("multisplice-train").map_err(|e| e.to_string())?;
    let rep = generate_dataset(&assets, &scenario, 120, 31, work.join("balanced")).map_err(|e| e.to_string())?;
    let records = read_manifest(&rep.manifest).map_err(|e| e.to_string())?;
    let n = records.len() as f64;
    let j = records.iter().map(|r| jaccard(&r.grid_labels, &[], 1.0)).sum::<f64>() / n;
    let r = records.iter().map(|r| recall(&r.grid_labels, &[], 1.0)).sum::<f64>() / n;
    let sixth = 1.0 / 6.0;
    check(
        mismatches == 0 && (j - sixth).abs() <= ONE_SIXTH_TOL && (r - sixth).abs() <= ONE_SIXTH_TOL,
        format!(
            "{mismatches}/{MATCH_INSTANCES} matching mismatches; always-no-splice on {} samples: J {j:.4} R {r:.4}",
            records.len()
        ),
    )
}

fn accuracy(model: &Model<f32>, set: &[Example]) -> f64 {
    let hits = set
        .iter()
        .filter(|e| decode_greedy(model, &e.features).map(|h| h.seq == e.target).unwrap_or(false))
        .count();
    hits as f64 / set.len() as f64
}

fn smoke_scenario() -> ScenarioConfig {
    ScenarioConfig {
        name: "smoke".into(),
        splices: SpliceCount::Fixed { n: 1 },
        rir: false,
        duration: [3.0, 10.0],
        ..ScenarioConfig::default()
    }
}

fn learning(work: &Path) -> Outcome {
    let (cpu0, t0) = (cpu_time(), Instant::now());
    let pool = SpeakerPool::from_clips(Split::Train, synth_split(&SynthPoolConfig::default(), Split::Train))
        .map_err(|e| e.to_string())?;
    let assets = Assets::new(pool);
    let scenario = smoke_scenario();
    let tr = generate_dataset(&assets, &scenario, 200, 1, work.join("train")).map_err(|e| e.to_string())?;
    let ho = generate_dataset(&assets, &scenario, 50, 2, work.join("heldout")).map_err(|e| e.to_string())?;
    let train_set = load_examples(&tr.manifest).map_err(|e| e.to_string())?;
    let held = load_examples(&ho.manifest).map_err(|e| e.to_string())?;

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for e in &train_set {
        *counts.entry(e.target.to_string()).or_default() += 1;
    }
    let mode = counts.iter().max_by_key(|(_, c)| **c).map(|(k, _)| k.clone()).unwrap_or_default();
    let chance = held.iter().filter(|e| e.target.to_string() == mode).count() as f64 / held.len() as f64;

    let cfg = ModelConfig {
        dropout: 0.1,
        ..ModelConfig::tiny(32, 2)
    };
    let mut model = Model::<f32>::new(cfg, 0).map_err(|e| e.to_string())?;
    let tc = TrainConfig {
        batch_size: 16,
        learning_rate: 3e-3,
        max_epochs: 200,
        early_stop_delta: 0.0,
        early_stop_patience: 200,
        ..TrainConfig::default()
    };
    train(&mut model, &train_set, &held, &tc, work.join("run")).map_err(|e| e.to_string())?;
    let (acc_train, acc_held) = (accuracy(&model, &train_set), accuracy(&model, &held));
    let spent = match (cpu0, cpu_time()) {
        (Some(a), Some(b)) => b.saturating_sub(a),
        _ => t0.elapsed(),
    };
    within(spent, SMOKE_CPU_BUDGET)?;
    check(
        acc_train >= SMOKE_TRAIN_ACC && acc_held >= SMOKE_CHANCE_FACTOR * chance,
        format!(
            "top-1 train {acc_train:.3}, held-out {acc_held:.3}, chance {chance:.3}, cpu {:.0}s",
            spent.as_secs_f64()
        ),
    )
}

fn reproducibility(pool: &Path, work: &Path) -> Outcome {
    let assets = Assets::load_dir(pool, Split::Train).map_err(|e| e.to_string())?;
    let scenario = ScenarioConfig::preset("single-degraded").map_err(|e| e.to_string())?;
    let mut manifests = Vec::new();
    let mut audio = Vec::new();
    for run in ["a", "b"] {
        let rep = generate_dataset(&assets, &scenario, 20, 77, work.join(run)).map_err(|e| e.to_string())?;
        manifests.push(std::fs::read(&rep.manifest).map_err(|e| e.to_string())?);
        let first = read_manifest(&rep.manifest).map_err(|e| e.to_string())?;
        let bytes: Vec<Vec<u8>> = first
            .iter()
            .map(|r| std::fs::read(work.join(run).join(&r.audio_path)).unwrap_or_default())
            .collect();
        audio.push(bytes);
    }
    let same_data = manifests[0] == manifests[1] && audio[0] == audio[1];

    let examples = load_examples(work.join("a").join("manifest.jsonl")).map_err(|e| e.to_string())?;
    let (tr, va) = examples.split_at(examples.len() - 4);
    let mut curves = Vec::new();
    for run in ["t1", "t2"] {
        let cfg = ModelConfig {
            dropout: 0.1,
            ..ModelConfig::tiny(16, 1)
        };
        let mut model = Model::<f32>::new(cfg, 3).map_err(|e| e.to_string())?;
        let tc = TrainConfig {
            batch_size: 4,
            learning_rate: 1e-3,
            max_epochs: 5,
            seed: 9,
            ..TrainConfig::default()
        };
        let rep = train(&mut model, tr, va, &tc, work.join(run)).map_err(|e| e.to_string())?;
        curves.push(rep.epochs.iter().flat_map(|e| [e.train_loss, e.val_loss]).collect::<Vec<f64>>());
    }
    let drift = if curves[0].len() == curves[1].len() {
        curves[0].iter().zip(&curves[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    check(
        same_data && drift <= TRAJECTORY_TOL,
        format!(
            "manifests identical: {same_data}, {} epochs, max loss drift {drift:.1e}",
            curves[0].len() / 2
        ),
    )
}

fn scenarios(pool: &Path, work: &Path) -> Outcome {
    let t0 = Instant::now();
    let names = [
        "single-clean",
        "single-degraded",
        "multisplice-train",
        "multicompression-0",
        "multicompression-1",
        "multicompression-2",
        "multicompression-3",
        "multicompression-4",
        "multicompression-5",
        "intersplicing",
        "realnoise-rain",
    ];
    let assets = Assets::load_dir(pool, Split::Test).map_err(|e| e.to_string())?;
    let mut short = Vec::new();
    let mut invalid = 0;
    for (i, name) in names.iter().enumerate() {
        let scenario = ScenarioConfig::preset(name).map_err(|e| format!("{name}: {e}"))?;
        let rep = generate_dataset(&assets, &scenario, SCENARIO_COUNT, 100 + i as u64, work.join(name))
            .map_err(|e| format!("{name}: {e}"))?;
        let records = read_manifest(&rep.manifest).map_err(|e| format!("{name}: {e}"))?;
        if records.len() != SCENARIO_COUNT {
            short.push(format!("{name}={}", records.len()));
        }
        invalid += records.iter().filter(|r| check_record(r).is_err()).count();
    }
    within(t0.elapsed(), SCENARIO_BUDGET)?;
    check(
        short.is_empty() && invalid == 0,
        format!(
            "{} scenarios x {SCENARIO_COUNT}; short: [{}]; invalid records {invalid}; {:.0}s",
            names.len(),
            short.join(", "),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let pool = dir.path().join("pool");
    let pool_ready = write_pool(&pool);
    let pooled = |f: &dyn Fn(&Path) -> Outcome| match &pool_ready {
        Ok(()) => f(&pool),
        Err(e) => Err(format!("synthetic pool: {e}")),
    };

    let criteria: Vec<Criterion> = vec![
        ("architecture", Box::new(architecture)),
        ("feature geometry", Box::new(feature_shape)),
        ("output vocabulary", Box::new(vocabulary)),
        ("gradient checks", Box::new(gradients)),
        ("signal processing", Box::new(dsp)),
        ("evaluation metrics", Box::new(|| pooled(&|p| evaluation(p, &dir.path().join("c6"))))),
        ("learning smoke test", Box::new(|| learning(&dir.path().join("c7")))),
        ("reproducibility", Box::new(|| pooled(&|p| reproducibility(p, &dir.path().join("c8"))))),
        ("scenario coverage", Box::new(|| pooled(&|p| scenarios(p, &dir.path().join("c9"))))),
    ];

    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
