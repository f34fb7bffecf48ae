use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub const VOCAB_SIZE: usize = 93;
pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
/// "No splicing" symbol.
pub const NO_SPLICE: usize = 3;
pub const FIRST_POSITION: usize = 4;
pub const N_POSITIONS: usize = 89;
/// Spacing of the splice-position grid in seconds.
pub const GRID_STEP: f64 = 0.5;

pub const NO_SPLICE_SYMBOL: &str = "∘";

/// The output alphabet: three control tokens, `∘`, and 89 positions
/// 0.5 s … 44.5 s.
#[derive(Debug, Clone)]
pub struct SpliceVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for SpliceVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl SpliceVocab {
    pub fn new() -> Self {
        let mut tokens: Vec<String> = ["<pad>", "<bos>", "<eos>", NO_SPLICE_SYMBOL]
            .iter()
            .map(|s| s.to_string())
            .collect();
        tokens.extend((0..N_POSITIONS).map(|i| format!("{:.1}", (i + 1) as f64 * GRID_STEP)));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn symbol(&self, token: usize) -> Option<&str> {
        self.tokens.get(token).map(String::as_str)
    }

    pub fn lookup(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

pub fn is_position(token: usize) -> bool {
    (FIRST_POSITION..VOCAB_SIZE).contains(&token)
}

/// Time in seconds of a position token.
pub fn position_time(token: usize) -> Option<f64> {
    is_position(token).then(|| (token - FIRST_POSITION + 1) as f64 * GRID_STEP)
}

/// Snaps a time to the nearest grid point (ties away from zero) and returns
/// its token, or `None` outside 0.5 … 44.5 s.
pub fn position_token(seconds: f64) -> Option<usize> {
    let steps = (seconds / GRID_STEP).round();
    if !(1.0..=N_POSITIONS as f64).contains(&steps) {
        return None;
    }
    Some(FIRST_POSITION + steps as usize - 1)
}

/// Round-to-nearest 0.5 s label grid, deduplicated.
pub fn grid_labels(splice_times: &[f64]) -> Vec<f64> {
    let mut labels: Vec<f64> = splice_times
        .iter()
        .map(|t| (t / GRID_STEP).round() * GRID_STEP)
        .collect();
    labels.sort_by(f64::total_cmp);
    labels.dedup();
    labels
}

/// Canonical target/prediction sequence: `<bos>`, ascending unique
/// positions (or the single `∘`), `<eos>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(Vec<usize>);

impl TokenSeq {
    pub fn no_splice() -> Self {
        TokenSeq(vec![BOS, NO_SPLICE, EOS])
    }

    /// Builds the canonical sequence for grid positions; times off the grid
    /// or out of range are dropped.
    pub fn from_positions(times: &[f64]) -> Self {
        let tokens: Vec<usize> = times.iter().filter_map(|&t| position_token(t)).collect();
        Self::from_position_tokens(tokens)
    }

    fn from_position_tokens(mut tokens: Vec<usize>) -> Self {
        tokens.sort_unstable();
        tokens.dedup();
        if tokens.is_empty() {
            return Self::no_splice();
        }
        let mut seq = Vec::with_capacity(tokens.len() + 2);
        seq.push(BOS);
        seq.extend(tokens);
        seq.push(EOS);
        TokenSeq(seq)
    }

    /// Canonicalizes a raw decoder output: ignores control tokens, stops at
    /// the first `<eos>`, sorts and deduplicates positions; `∘` is kept only
    /// when no position was emitted.
    pub fn canonicalize(raw: &[usize]) -> Self {
        let mut positions = Vec::new();
        for &t in raw.iter().skip_while(|&&t| t == BOS) {
            if t == EOS {
                break;
            }
            if is_position(t) {
                positions.push(t);
            }
        }
        Self::from_position_tokens(positions)
    }

    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    pub fn is_no_splice(&self) -> bool {
        self.0.len() == 3 && self.0[1] == NO_SPLICE
    }

    pub fn positions(&self) -> Vec<f64> {
        self.0.iter().filter_map(|&t| position_time(t)).collect()
    }

    /// Decoder input under teacher forcing: the sequence without `<eos>`.
    pub fn decoder_input(&self) -> &[usize] {
        &self.0[..self.0.len() - 1]
    }

    /// Decoder target under teacher forcing: the sequence without `<bos>`.
    pub fn decoder_target(&self) -> &[usize] {
        &self.0[1..]
    }

    /// Structural check of the canonical form.
    pub fn is_canonical(&self) -> bool {
        let s = &self.0;
        if s.len() < 3 || s[0] != BOS || s[s.len() - 1] != EOS {
            return false;
        }
        let body = &s[1..s.len() - 1];
        if body == [NO_SPLICE] {
            return true;
        }
        body.iter().all(|&t| is_position(t)) && body.windows(2).all(|w| w[0] < w[1])
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_no_splice() {
            return write!(f, "{NO_SPLICE_SYMBOL}");
        }
        let parts: Vec<String> = self.positions().iter().map(|p| format!("{p:.1}")).collect();
        write!(f, "{}", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_layout() {
        let v = SpliceVocab::new();
        assert_eq!(v.len(), 93);
        assert_eq!(v.symbol(3), Some("∘"));
        assert_eq!(v.symbol(4), Some("0.5"));
        assert_eq!(v.symbol(92), Some("44.5"));
        assert_eq!(v.lookup("4.0"), Some(11));
        for i in FIRST_POSITION..VOCAB_SIZE {
            assert_eq!(position_time(i), Some((i - 3) as f64 * 0.5));
        }
    }

    #[test]
    fn grid_rounding() {
        assert_eq!(grid_labels(&[3.26]), vec![3.5]);
        assert_eq!(grid_labels(&[4.0]), vec![4.0]);
        assert_eq!(grid_labels(&[2.1, 2.2]), vec![2.0]);
        assert_eq!(position_token(0.2), None);
        assert_eq!(position_token(44.74), Some(92));
    }

    #[test]
    fn canonicalization() {
        let raw = [BOS, 20, 10, 20, NO_SPLICE, EOS, 30];
        let c = TokenSeq::canonicalize(&raw);
        assert_eq!(c.tokens(), &[BOS, 10, 20, EOS]);
        assert!(c.is_canonical());
        assert_eq!(TokenSeq::canonicalize(&[BOS, EOS]), TokenSeq::no_splice());
        assert_eq!(TokenSeq::canonicalize(&[BOS, PAD, NO_SPLICE]), TokenSeq::no_splice());
        assert_eq!(TokenSeq::no_splice().to_string(), "∘");
    }
}
