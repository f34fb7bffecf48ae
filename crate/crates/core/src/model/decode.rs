use serde::{Deserialize, Serialize};

use super::layers::ForwardCtx;
use super::transformer::{Memory, Model, SourceBatch, TargetBatch};
use super::vocab::{TokenSeq, BOS, EOS, PAD};
use crate::error::{contract, Result};
use crate::features::FeatureStack;
use crate::tensor::{Real, Tape};

/// Default beam width for ranked decoding.
pub const DEFAULT_BEAM: usize = 5;

/// One decoded output. `raw` is the emitted token stream after `<bos>`;
/// `seq` its canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub raw: Vec<usize>,
    pub seq: TokenSeq,
    /// Total log-probability of `raw`.
    pub log_prob: f64,
    /// `log_prob / raw.len()`, the ranking key.
    pub score: f64,
    /// True when the length limit was reached before `<eos>`.
    pub truncated: bool,
}

impl Hypothesis {
    fn finish(raw: Vec<usize>, log_prob: f64) -> Self {
        let truncated = raw.last() != Some(&EOS);
        let mut full = Vec::with_capacity(raw.len() + 1);
        full.push(BOS);
        full.extend_from_slice(&raw);
        Self {
            seq: TokenSeq::canonicalize(&full),
            score: log_prob / raw.len().max(1) as f64,
            raw,
            log_prob,
            truncated,
        }
    }
}

fn allowed(token: usize) -> bool {
    token != PAD && token != BOS
}

/// Log-softmax over the full vocabulary of one logit row, computed in f64.
fn log_softmax<T: Real>(row: &[T]) -> Vec<f64> {
    let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v.f64() - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v.f64() - lse).collect()
}

struct Session<'t, 'm, T: Real> {
    model: &'m Model<T>,
    bound: super::transformer::Bound<'t, T>,
    memory: Memory<'t, T>,
}

impl<'t, 'm, T: Real> Session<'t, 'm, T> {
    fn open(model: &'m Model<T>, tape: &'t Tape<T>, features: &FeatureStack) -> Result<Self> {
        let bound = model.bind(tape);
        let src = SourceBatch::from_stacks(&[features])?;
        let memory = model.encode(&bound, &src, &mut ForwardCtx::eval())?;
        Ok(Self {
            model,
            bound,
            memory,
        })
    }

    /// Next-token log-probabilities for equally long prefixes.
    fn step(&self, prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let refs: Vec<&[usize]> = prefixes.iter().map(Vec::as_slice).collect();
        let tgt = TargetBatch::from_seqs(&refs)?;
        let logits = self
            .model
            .decode(&self.bound, &self.memory, &tgt, &mut ForwardCtx::eval())?;
        let v = self.model.config.vocab;
        let t = tgt.max_len;
        let data = logits.data();
        Ok((0..prefixes.len())
            .map(|b| {
                let at = (b * t + t - 1) * v;
                log_softmax(&data[at..at + v])
            })
            .collect())
    }

    fn max_new_tokens(&self) -> usize {
        self.model.config.max_tgt_len - 1
    }
}

/// Autoregressive argmax decoding from `<bos>`; `<pad>` and `<bos>` are
/// never emitted.
pub fn decode_greedy<T: Real>(model: &Model<T>, features: &FeatureStack) -> Result<Hypothesis> {
    let tape = Tape::new();
    let session = Session::open(model, &tape, features)?;
    let mut prefix = vec![BOS];
    let mut log_prob = 0.0;
    for _ in 0..session.max_new_tokens() {
        let lp = session.step(std::slice::from_ref(&prefix))?.remove(0);
        let (best, &p) = lp
            .iter()
            .enumerate()
            .filter(|(t, _)| allowed(*t))
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("vocabulary has emittable tokens");
        prefix.push(best);
        log_prob += p;
        if best == EOS {
            break;
        }
    }
    Ok(Hypothesis::finish(prefix.split_off(1), log_prob))
}

fn rank(hyps: &mut [Hypothesis]) {
    hyps.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.raw.cmp(&b.raw)));
}

/// Beam search with the given width; returns every finished hypothesis,
/// best length-normalized score first.
pub fn beam_search<T: Real>(
    model: &Model<T>,
    features: &FeatureStack,
    beam: usize,
) -> Result<Vec<Hypothesis>> {
    let emittable = (0..model.config.vocab).filter(|&t| allowed(t)).count();
    contract!(
        (1..=emittable).contains(&beam),
        "beam width {beam} outside 1..={emittable}"
    );
    let tape = Tape::new();
    let session = Session::open(model, &tape, features)?;
    let mut alive: Vec<(Vec<usize>, f64)> = vec![(vec![BOS], 0.0)];
    let mut finished = Vec::new();
    for step in 0..session.max_new_tokens() {
        let prefixes: Vec<Vec<usize>> = alive.iter().map(|(p, _)| p.clone()).collect();
        let lps = session.step(&prefixes)?;
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        for (i, lp) in lps.iter().enumerate() {
            for (tok, &p) in lp.iter().enumerate() {
                if allowed(tok) {
                    cands.push((i, tok, alive[i].1 + p));
                }
            }
        }
        cands.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        cands.truncate(beam);
        let last_step = step + 1 == session.max_new_tokens();
        let mut next = Vec::new();
        for (i, tok, lp) in cands {
            let mut p = alive[i].0.clone();
            p.push(tok);
            if tok == EOS || last_step {
                finished.push(Hypothesis::finish(p.split_off(1), lp));
            } else {
                next.push((p, lp));
            }
        }
        alive = next;
        if alive.is_empty() {
            break;
        }
    }
    rank(&mut finished);
    Ok(finished)
}

/// Ranked hypotheses for top-n evaluation, beam width `max(5, n)`. At
/// least `n` hypotheses are returned.
pub fn decode_topn<T: Real>(
    model: &Model<T>,
    features: &FeatureStack,
    n: usize,
) -> Result<Vec<Hypothesis>> {
    contract!(n >= 1, "top-n needs n >= 1");
    beam_search(model, features, DEFAULT_BEAM.max(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn features(frames: usize, seed: u64) -> FeatureStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureStack {
            n_frames: frames,
            width: 277,
            data: (0..frames * 277).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            source_duration: frames as f64 * 0.5,
        }
    }

    #[test]
    fn untrained_outputs_are_canonical() {
        for seed in 0..4 {
            let m = Model::<f32>::new(ModelConfig::tiny(16, 1), seed).unwrap();
            let f = features(6, seed);
            let g = decode_greedy(&m, &f).unwrap();
            assert!(g.seq.is_canonical());
            assert!(g.raw.len() < m.config.max_tgt_len);
            assert_eq!(g.truncated, g.raw.last() != Some(&EOS));
            for h in decode_topn(&m, &f, 3).unwrap() {
                assert!(h.seq.is_canonical());
            }
        }
    }

    #[test]
    fn beam_one_is_greedy() {
        for seed in 0..4 {
            let m = Model::<f64>::new(ModelConfig::tiny(16, 1), seed + 10).unwrap();
            let f = features(5, seed);
            let g = decode_greedy(&m, &f).unwrap();
            let b = beam_search(&m, &f, 1).unwrap();
            assert_eq!(b[0].raw, g.raw);
            assert!((b[0].log_prob - g.log_prob).abs() < 1e-9);
        }
    }

    #[test]
    fn ranking_is_non_increasing_and_long_enough() {
        let m = Model::<f32>::new(ModelConfig::tiny(16, 1), 2).unwrap();
        let f = features(4, 9);
        let hyps = decode_topn(&m, &f, 7).unwrap();
        assert!(hyps.len() >= 7);
        assert!(hyps.windows(2).all(|w| w[0].score >= w[1].score));
    }
}
