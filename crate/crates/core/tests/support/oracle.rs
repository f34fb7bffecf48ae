use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Best (pairs, cost) over every one-to-one assignment, by brute force.
pub fn exhaustive(truth: &[f64], pred: &[f64], w: f64) -> (usize, f64) {
    fn go(i: usize, truth: &[f64], pred: &[f64], used: &mut Vec<bool>, w: f64) -> (usize, f64) {
        if i == truth.len() {
            return (0, 0.0);
        }
        let mut best = go(i + 1, truth, pred, used, w);
        for j in 0..pred.len() {
            let d = (truth[i] - pred[j]).abs();
            if !used[j] && d <= w + 1e-12 {
                used[j] = true;
                let (c, cost) = go(i + 1, truth, pred, used, w);
                used[j] = false;
                let cand = (c + 1, cost + d);
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                    best = cand;
                }
            }
        }
        best
    }
    go(0, truth, pred, &mut vec![false; pred.len()], w)
}

pub fn grid_points(rng: &mut ChaCha8Rng, max: usize) -> Vec<f64> {
    let n = rng.gen_range(0..=max);
    let mut v: Vec<f64> = (0..n).map(|_| 0.5 * rng.gen_range(1..=20) as f64).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}


/// Random instances with at most `max` points per side; returns how many
/// disagree with the exhaustive optimum in pair count or total cost.
pub fn matching_mismatches(instances: usize, max: usize, seed: u64) -> usize {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let truth = grid_points(&mut rng, max);
        let pred: Vec<f64> = grid_points(&mut rng, max)
            .into_iter()
            .map(|p| p + rng.gen_range(-0.3..0.3))
            .collect();
        let w = [0.5, 1.0, 2.0, 3.0][rng.gen_range(0..4)];
        let pairs = splicedet::metrics::match_points(&truth, &pred, w);
        let (count, cost) = exhaustive(&truth, &pred, w);
        let got: f64 = pairs.iter().map(|(t, p)| (t - p).abs()).sum();
        if pairs.len() != count || (got - cost).abs() > 1e-9 {
            bad += 1;
        }
    }
    bad
}
