use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::load_wav;
use crate::error::Result;
use crate::features::{assemble, FeatureStack};
use crate::forgery::{read_manifest, record_audio_path};
use crate::model::{SourceBatch, TargetBatch, TokenSeq};
use crate::tensor::Real;

/// One training pair held in memory.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub features: FeatureStack,
    pub target: TokenSeq,
}

/// Reads every manifest record and computes its features. Records keep
/// manifest order.
pub fn load_examples(manifest: impl AsRef<Path>) -> Result<Vec<Example>> {
    let manifest = manifest.as_ref();
    let records = read_manifest(manifest)?;
    records
        .par_iter()
        .map(|rec| {
            let audio = load_wav(record_audio_path(manifest, rec))?;
            Ok(Example {
                id: rec.id.clone(),
                features: assemble(&audio)?,
                target: TokenSeq::from_positions(&rec.grid_labels),
            })
        })
        .collect()
}

pub struct Batch<T> {
    pub src: SourceBatch<T>,
    pub inputs: TargetBatch,
    pub targets: TargetBatch,
    /// Non-pad target tokens, the loss denominator.
    pub tokens: usize,
}

pub fn make_batch<T: Real>(examples: &[&Example]) -> Result<Batch<T>> {
    let stacks: Vec<&FeatureStack> = examples.iter().map(|e| &e.features).collect();
    let inputs: Vec<&[usize]> = examples.iter().map(|e| e.target.decoder_input()).collect();
    let targets: Vec<&[usize]> = examples.iter().map(|e| e.target.decoder_target()).collect();
    Ok(Batch {
        src: SourceBatch::from_stacks(&stacks)?,
        inputs: TargetBatch::from_seqs(&inputs)?,
        targets: TargetBatch::from_seqs(&targets)?,
        tokens: targets.iter().map(|t| t.len()).sum(),
    })
}

/// Example order for one epoch; a function of `(seed, epoch)` only.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_a_seeded_permutation() {
        let a = epoch_order(50, 3, 0);
        assert_eq!(a, epoch_order(50, 3, 0));
        assert_ne!(a, epoch_order(50, 3, 1));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }
}
