//! Spliced-audio generation with exact ground truth.
//!
//! A [`ForgerySpec`] is drawn from a [`SpeakerPool`] under a
//! [`ScenarioConfig`], then rendered: room convolution, cutting at silence
//! midpoints, concatenation, noise and compression.

mod codec;
mod dataset;
mod noise;
mod pool;
mod render;
mod scenario;
mod spec;
pub mod synth;
pub mod vad;

pub use codec::{
    compress, compress_external, compress_with, mp3_cutoff_hz, quantization_bits,
    validate_bitrate, Codec, CodecOptions, AMR_CUTOFF_HZ, AMR_NB_MODES, EXTERNAL_CODEC_ENV,
};
pub use dataset::{
    generate_dataset, read_manifest, record_audio_path, write_manifest, GenerateReport,
    MANIFEST_NAME,
};
pub use noise::{add_noise, scaled_noise, tile, white_noise};
pub use pool::{synthetic_rirs, Assets, SourceClip, SpeakerPool, Split, SYNTHETIC_RT60S};
pub use render::{check_record, render, ForgeryRecord, Rendered, MAX_SOURCES, MIN_DURATION_SECONDS};
pub use scenario::{
    CompressionMode, NoiseMode, ScenarioConfig, SpliceCount, MAX_SPLICES, PRESET_NAMES, SNR_RANGE,
};
pub use spec::{
    record_rng, sample_spec, CompressionSpec, ForgerySpec, NoiseKind, NoiseSpec, MAX_ATTEMPTS,
    MIN_SEGMENT_SECONDS,
};
pub use vad::detect_silence;
