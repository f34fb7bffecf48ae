//! Localization metrics over splice-point sets.
//!
//! Positions are seconds. An empty position list stands for the no-splice
//! symbol `∘`, which takes part in Jaccard and recall as an ordinary element
//! that only matches itself.

mod report;

pub use report::{write_csv, write_plots};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Default tolerance windows, seconds.
pub const DEFAULT_WINDOWS: [f64; 4] = [0.5, 1.0, 2.0, 3.0];
pub const DEFAULT_TOPN: usize = 5;

/// Ranking key of a partial matching: more pairs first, then less total
/// displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Value {
    count: usize,
    cost: f64,
}

impl Value {
    fn better_than(self, other: Value) -> bool {
        self.count > other.count || (self.count == other.count && self.cost < other.cost - 1e-12)
    }
}

/// One-to-one matching of `truth` and `pred` points with
/// `|t - p| <= w`: the largest possible number of pairs, and among those the
/// smallest total displacement. Returned pairs are `(truth, pred)` in
/// ascending order.
///
/// On a line some optimal matching never crosses, so a dynamic programme
/// over prefixes finds it exactly.
pub fn match_points(truth: &[f64], pred: &[f64], w: f64) -> Vec<(f64, f64)> {
    let sorted = |xs: &[f64]| {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (truth, pred) = (sorted(truth), sorted(pred));
    let (n, m) = (truth.len(), pred.len());
    let zero = Value { count: 0, cost: 0.0 };
    let mut dp = vec![vec![zero; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            let mut best = dp[i - 1][j];
            if dp[i][j - 1].better_than(best) {
                best = dp[i][j - 1];
            }
            let d = (truth[i - 1] - pred[j - 1]).abs();
            if d <= w + 1e-12 {
                let prev = dp[i - 1][j - 1];
                let cand = Value {
                    count: prev.count + 1,
                    cost: prev.cost + d,
                };
                if cand.better_than(best) {
                    best = cand;
                }
            }
            dp[i][j] = best;
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let here = dp[i][j];
        if here == dp[i - 1][j] {
            i -= 1;
        } else if here == dp[i][j - 1] {
            j -= 1;
        } else {
            pairs.push((truth[i - 1], pred[j - 1]));
            i -= 1;
            j -= 1;
        }
    }
    pairs.reverse();
    pairs
}

fn intersection(truth: &[f64], pred: &[f64], w: f64) -> usize {
    match (truth.is_empty(), pred.is_empty()) {
        (true, true) => 1,
        (false, false) => match_points(truth, pred, w).len(),
        _ => 0,
    }
}

fn set_size(p: &[f64]) -> usize {
    p.len().max(1)
}

/// Windowed Jaccard index `m / (|P| + |P̂| - m)`.
pub fn jaccard(truth: &[f64], pred: &[f64], w: f64) -> f64 {
    let m = intersection(truth, pred, w) as f64;
    m / ((set_size(truth) + set_size(pred)) as f64 - m).max(1.0)
}

/// Windowed recall `m / |P|`.
pub fn recall(truth: &[f64], pred: &[f64], w: f64) -> f64 {
    intersection(truth, pred, w) as f64 / set_size(truth) as f64
}

/// Whether one of the first `n` ranked predictions equals the truth
/// exactly on the label grid.
pub fn topn_hit(truth: &[f64], ranked: &[Vec<f64>], n: usize) -> bool {
    ranked.iter().take(n).any(|p| p.as_slice() == truth)
}

/// Distance from the single true splice to the nearest predicted position,
/// or `None` when the prediction is `∘`.
pub fn splice_distance(truth: &[f64], pred: &[f64]) -> Result<Option<f64>> {
    contract!(
        truth.len() == 1,
        "splice distance needs exactly one true splice, got {}",
        truth.len()
    );
    Ok(pred
        .iter()
        .map(|p| (p - truth[0]).abs())
        .min_by(f64::total_cmp))
}

/// Input for one evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub id: String,
    /// Ground-truth grid labels.
    pub truth: Vec<f64>,
    /// Canonical predictions, best first.
    pub ranked: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMatches {
    pub w: f64,
    pub pairs: Vec<(f64, f64)>,
    pub jaccard: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    #[serde(flatten)]
    pub prediction: SamplePrediction,
    pub windows: Vec<WindowMatches>,
    pub d_sp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub w: f64,
    pub jaccard: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub samples: usize,
    /// `(n, accuracy)` for n = 1..=topn.
    pub topn: Vec<(usize, f64)>,
    pub mean_d_sp: Option<f64>,
    /// Single-splice samples that entered the d_sp mean.
    pub d_sp_samples: usize,
    /// Single-splice samples excluded because the best prediction was `∘`.
    pub d_sp_excluded: usize,
    pub windows: Vec<WindowScore>,
    pub truncated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub aggregates: Aggregates,
    pub samples: Vec<SampleEval>,
}

/// Scores every sample with its best prediction and aggregates. Top-n and
/// d_sp follow the single-splice protocol; d_sp only covers samples with
/// exactly one true splice.
pub fn evaluate(preds: Vec<SamplePrediction>, windows: &[f64], topn: usize) -> EvalResult {
    let samples: Vec<SampleEval> = preds
        .into_iter()
        .map(|p| {
            let best: &[f64] = p.ranked.first().map(Vec::as_slice).unwrap_or(&[]);
            let windows = windows
                .iter()
                .map(|&w| WindowMatches {
                    w,
                    pairs: if p.truth.is_empty() || best.is_empty() {
                        Vec::new()
                    } else {
                        match_points(&p.truth, best, w)
                    },
                    jaccard: jaccard(&p.truth, best, w),
                    recall: recall(&p.truth, best, w),
                })
                .collect();
            let d_sp = if p.truth.len() == 1 {
                splice_distance(&p.truth, best).ok().flatten()
            } else {
                None
            };
            SampleEval {
                prediction: p,
                windows,
                d_sp,
            }
        })
        .collect();
    EvalResult {
        aggregates: aggregate(&samples, windows, topn),
        samples,
    }
}

/// Recomputes the aggregates from per-sample records.
pub fn aggregate(samples: &[SampleEval], windows: &[f64], topn: usize) -> Aggregates {
    let n = samples.len();
    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        if n == 0 {
            0.0
        } else {
            xs.sum::<f64>() / n as f64
        }
    };
    let topn = (1..=topn)
        .map(|k| {
            let hits = samples
                .iter()
                .filter(|s| topn_hit(&s.prediction.truth, &s.prediction.ranked, k))
                .count();
            (k, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
        })
        .collect();
    let single: Vec<&SampleEval> = samples.iter().filter(|s| s.prediction.truth.len() == 1).collect();
    let dists: Vec<f64> = single.iter().filter_map(|s| s.d_sp).collect();
    let windows = windows
        .iter()
        .enumerate()
        .map(|(i, &w)| WindowScore {
            w,
            jaccard: mean(&mut samples.iter().map(|s| s.windows[i].jaccard)),
            recall: mean(&mut samples.iter().map(|s| s.windows[i].recall)),
        })
        .collect();
    Aggregates {
        samples: n,
        topn,
        mean_d_sp: (!dists.is_empty()).then(|| dists.iter().sum::<f64>() / dists.len() as f64),
        d_sp_samples: dists.len(),
        d_sp_excluded: single.len() - dists.len(),
        windows,
        truncated: samples.iter().filter(|s| s.prediction.truncated).count(),
    }
}
