use std::sync::OnceLock;

use splicedet::audio::{read_wav, AudioSignal, WORKING_RATE};
use splicedet::features::{assemble, frame_count};
use splicedet::forgery::synth::{synth_split, SynthPoolConfig};
use splicedet::forgery::{
    check_record, generate_dataset, read_manifest, record_audio_path, render, sample_spec,
    Assets, ForgerySpec, NoiseMode, ScenarioConfig, SourceClip, SpeakerPool, SpliceCount, Split,
};

fn assets() -> &'static Assets {
    static A: OnceLock<Assets> = OnceLock::new();
    A.get_or_init(|| {
        let cfg = SynthPoolConfig {
            speakers: [3, 1, 1],
            clips_per_speaker: 4,
            clip_seconds: (6.0, 10.0),
            seed: 21,
        };
        let pool = SpeakerPool::from_clips(Split::Train, synth_split(&cfg, Split::Train)).unwrap();
        let mut a = Assets::new(pool);
        a.noises.insert(
            "rain".into(),
            splicedet::forgery::synth::synth_ambience(3.0, 0.2, 30.0, 1),
        );
        a
    })
}

fn plain_spec(cuts: &[(f64, f64)]) -> (Assets, ForgerySpec) {
    let noise: Vec<f64> = (0..16_000 * 12).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
    let clip = SourceClip::new("s/a".into(), "s".into(), AudioSignal::new(noise, WORKING_RATE));
    let pool = SpeakerPool::from_clips(Split::Test, vec![clip]).unwrap();
    let spec = ForgerySpec {
        n_sources: cuts.len(),
        speaker: "s".into(),
        source_ids: vec!["s/a".into(); cuts.len()],
        rir_ids: None,
        cut_points: cuts.to_vec(),
        noise: None,
        compressions: vec![],
        seed: 0,
    };
    (Assets::new(pool), spec)
}

#[test]
fn single_source_has_no_splices() {
    let (a, spec) = plain_spec(&[(1.0, 5.0)]);
    let r = render(&spec, &a).unwrap();
    assert!(r.splice_times.is_empty() && r.grid_labels.is_empty());
}

#[test]
fn boundaries_are_cumulative_segment_lengths() {
    let (a, spec) = plain_spec(&[(0.0, 4.0), (1.0, 6.0)]);
    let r = render(&spec, &a).unwrap();
    assert_eq!(r.splice_times, vec![4.0]);
    assert_eq!(r.grid_labels, vec![4.0]);
    assert_eq!(r.audio.len(), 9 * 16_000);

    let (a, spec) = plain_spec(&[(2.0, 5.26), (0.5, 6.5)]);
    let r = render(&spec, &a).unwrap();
    assert!((r.splice_times[0] - 3.26).abs() < 1.0 / 16_000.0);
    assert_eq!(r.grid_labels, vec![3.5]);
}

#[test]
fn fixed_zero_splices_without_post_processing() {
    let sc = ScenarioConfig {
        splices: SpliceCount::Fixed { n: 0 },
        rir: false,
        ..ScenarioConfig::default()
    };
    for i in 0..5 {
        let spec = sample_spec(assets(), &sc, 3, i).unwrap();
        assert_eq!(spec.n_sources, 1);
        assert!(spec.compressions.is_empty());
        assert!(spec.noise.is_none() && spec.rir_ids.is_none());
    }
}

#[test]
fn specs_are_deterministic() {
    let sc = ScenarioConfig::preset("multisplice-train").unwrap();
    for i in 0..10 {
        assert_eq!(
            sample_spec(assets(), &sc, 99, i).unwrap(),
            sample_spec(assets(), &sc, 99, i).unwrap()
        );
    }
    assert_ne!(
        sample_spec(assets(), &sc, 99, 0).unwrap(),
        sample_spec(assets(), &sc, 100, 0).unwrap()
    );
}

#[test]
fn cut_points_are_silence_midpoints() {
    let sc = ScenarioConfig::preset("single-clean").unwrap();
    for i in 0..10 {
        let spec = sample_spec(assets(), &sc, 5, i).unwrap();
        for (id, &(a, b)) in spec.source_ids.iter().zip(&spec.cut_points) {
            let mids = assets().pool.clip(id).unwrap().cut_candidates();
            for t in [a, b] {
                assert!(mids.iter().any(|m| (m - t).abs() <= 0.5 / 16_000.0), "{t} not in {mids:?}");
            }
        }
    }
}

#[test]
fn generated_audio_matches_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sc = ScenarioConfig::preset("multicompression-2").unwrap();
    let rep = generate_dataset(assets(), &sc, 6, 8, dir.path()).unwrap();
    assert_eq!(rep.written + rep.skipped.len(), 6);
    for rec in read_manifest(&rep.manifest).unwrap() {
        check_record(&rec).unwrap();
        let audio = read_wav(record_audio_path(&rep.manifest, &rec)).unwrap();
        assert_eq!(audio.sample_rate, 16_000);
        assert!((audio.duration_seconds() - rec.duration_s).abs() < 1.0 / 16_000.0);
        let seg_total: f64 = rec.spec.cut_points.iter().map(|(a, b)| b - a).sum();
        assert!((seg_total - rec.duration_s).abs() <= 1.0 / 16_000.0 * rec.spec.n_sources as f64);
        let mut acc = 0.0;
        for (t, (a, b)) in rec.splice_times_s.iter().zip(&rec.spec.cut_points) {
            acc += b - a;
            assert!((acc - t).abs() <= 1.0 / 16_000.0 * rec.spec.n_sources as f64);
        }
        let fs = assemble(&audio).unwrap();
        assert_eq!(fs.n_frames, frame_count(audio.len()));
        assert_eq!(rec.spec.compressions.len(), 2);
    }
}

#[test]
fn manifests_are_byte_identical_across_runs() {
    let sc = ScenarioConfig::preset("single-degraded").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = generate_dataset(assets(), &sc, 8, 42, a.path()).unwrap();
    let rb = generate_dataset(assets(), &sc, 8, 42, b.path()).unwrap();
    assert_eq!(
        std::fs::read(&ra.manifest).unwrap(),
        std::fs::read(&rb.manifest).unwrap()
    );
    for rec in read_manifest(&ra.manifest).unwrap() {
        assert_eq!(
            std::fs::read(a.path().join(&rec.audio_path)).unwrap(),
            std::fs::read(b.path().join(&rec.audio_path)).unwrap()
        );
    }
}

#[test]
fn empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let sc = ScenarioConfig::preset("single-clean").unwrap();
    let rep = generate_dataset(assets(), &sc, 0, 1, dir.path()).unwrap();
    assert_eq!(std::fs::read(&rep.manifest).unwrap().len(), 0);
    assert!(!dir.path().join("audio").exists());
}

#[test]
fn single_splice_scenario_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let sc = ScenarioConfig::preset("single-clean").unwrap();
    let rep = generate_dataset(assets(), &sc, 6, 2, dir.path()).unwrap();
    for rec in read_manifest(&rep.manifest).unwrap() {
        assert!(rec.splice_times_s.len() <= 1);
        assert!(rec.spec.compressions.is_empty());
    }
}

#[test]
fn intersplicing_uses_one_dry_recording() {
    let sc = ScenarioConfig::preset("intersplicing").unwrap();
    for i in 0..12 {
        let spec = sample_spec(assets(), &sc, 4, i).unwrap();
        assert!(spec.rir_ids.is_none() && spec.noise.is_none() && spec.compressions.is_empty());
        assert!(spec.source_ids.iter().all(|s| *s == spec.source_ids[0]));
    }
}

#[test]
fn file_backed_noise_and_missing_assets() {
    let sc = ScenarioConfig::preset("realnoise-rain").unwrap();
    let spec = sample_spec(assets(), &sc, 1, 0).unwrap();
    assert!(matches!(sc.noise, NoiseMode::File { .. }));
    assert_eq!(spec.noise.as_ref().unwrap().noise_id.as_deref(), Some("rain"));
    render(&spec, assets()).unwrap();
    let missing = ScenarioConfig::preset("realnoise-traffic").unwrap();
    assert!(matches!(
        sample_spec(assets(), &missing, 1, 0),
        Err(splicedet::Error::MissingAsset(_))
    ));
}
