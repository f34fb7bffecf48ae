use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{resample, AudioSignal, WORKING_RATE};
use crate::error::{Error, Result};

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        // hound reports short reads as generic I/O errors
        hound::Error::IoError(io) => Error::format(path, format!("truncated RIFF data ({io})")),
        hound::Error::FormatError(msg) => Error::format(path, msg),
        hound::Error::Unsupported => Error::Unsupported(format!("{}", path.display())),
        other => Error::format(path, other.to_string()),
    }
}

/// Reads a RIFF/WAVE file (PCM16 or float32), mean-downmixed to mono,
/// at its native sample rate.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_wav_from(BufReader::new(file), path)
}

fn read_wav_from<R: Read>(reader: R, path: &Path) -> Result<AudioSignal> {
    let mut reader = WavReader::new(reader).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::format(path, "zero channels"));
    }
    let declared = reader.len() as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    };
    if interleaved.len() != declared {
        return Err(Error::format(
            path,
            format!("truncated RIFF data: header declares {declared} samples, found {}", interleaved.len()),
        ));
    }
    if !interleaved.len().is_multiple_of(channels) {
        return Err(Error::format(path, "partial sample frame"));
    }
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioSignal::new(samples, spec.sample_rate))
}

/// Reads a WAV file and brings it to the working rate.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let sig = read_wav(path)?;
    resample(&sig, WORKING_RATE)
}

fn map_write(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => map_hound(path, other),
    }
}

/// Writes mono PCM16. Samples outside [-1, 1] are clamped.
pub fn write_wav(path: impl AsRef<Path>, sig: &AudioSignal) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: sig.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = WavWriter::new(BufWriter::new(file), spec).map_err(|e| map_write(path, e))?;
    for &s in &sig.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| map_write(path, e))?;
    }
    writer.finalize().map_err(|e| map_write(path, e))
}
