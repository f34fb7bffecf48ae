//! Desk-scale training run on synthetic single-splice data.
//!
//! cargo run --release --example train_tiny -- [train_count] [epochs] [lr] [batch] [dropout]

use std::collections::BTreeMap;
use std::time::Instant;

use splicedet::forgery::synth::{synth_split, SynthPoolConfig};
use splicedet::forgery::{generate_dataset, Assets, ScenarioConfig, SpeakerPool, SpliceCount, Split};
use splicedet::model::{decode_greedy, Model, ModelConfig};
use splicedet::training::{load_examples, train, Example, TrainConfig};

fn accuracy(model: &Model<f32>, set: &[Example]) -> f64 {
    let hits = set
        .iter()
        .filter(|e| decode_greedy(model, &e.features).unwrap().seq == e.target)
        .count();
    hits as f64 / set.len() as f64
}

fn main() -> splicedet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let n_train = arg(0, 200.0) as usize;
    let epochs = arg(1, 60.0) as usize;
    let lr = arg(2, 3e-3);
    let batch = arg(3, 16.0) as usize;
    let dropout = arg(4, 0.0);

    let pool_cfg = SynthPoolConfig::default();
    let pool = SpeakerPool::from_clips(Split::Train, synth_split(&pool_cfg, Split::Train))?;
    let assets = Assets::new(pool);
    let scenario = ScenarioConfig {
        name: "smoke".into(),
        splices: SpliceCount::Fixed { n: 1 },
        rir: false,
        duration: [3.0, 10.0],
        ..ScenarioConfig::default()
    };
    let dir = tempfile::tempdir().expect("tempdir");
    let t0 = Instant::now();
    let tr = generate_dataset(&assets, &scenario, n_train, 1, dir.path().join("train"))?;
    let ho = generate_dataset(&assets, &scenario, 50, 2, dir.path().join("heldout"))?;
    let train_set = load_examples(&tr.manifest)?;
    let held = load_examples(&ho.manifest)?;
    println!("data: {} + {} in {:.1}s", train_set.len(), held.len(), t0.elapsed().as_secs_f64());

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for e in &train_set {
        *counts.entry(e.target.to_string()).or_default() += 1;
    }
    let (mode, _) = counts.iter().max_by_key(|(_, c)| **c).unwrap();
    let chance = held.iter().filter(|e| e.target.to_string() == *mode).count() as f64 / held.len() as f64;

    let model_cfg = ModelConfig {
        dropout,
        ..ModelConfig::tiny(32, 2)
    };
    let mut model = Model::<f32>::new(model_cfg, 0)?;
    let cfg = TrainConfig {
        batch_size: batch,
        learning_rate: lr,
        max_epochs: epochs,
        early_stop_delta: 0.0,
        early_stop_patience: epochs.max(1),
        ..TrainConfig::default()
    };
    let t1 = Instant::now();
    let rep = train(&mut model, &train_set, &held, &cfg, dir.path().join("run"))?;
    for e in rep.epochs.iter().step_by(5) {
        println!("epoch {:3} train {:.4} val {:.4}", e.epoch, e.train_loss, e.val_loss);
    }
    println!("train time {:.1}s", t1.elapsed().as_secs_f64());
    println!(
        "top-1 train {:.3} held-out {:.3} chance {:.3}",
        accuracy(&model, &train_set),
        accuracy(&model, &held),
        chance
    );
    Ok(())
}
