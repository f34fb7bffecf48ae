//! Finite-difference suites shared by the gradient tests and the
//! acceptance harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splicedet::features::{FeatureStack, FULL_WIDTH};
use splicedet::model::{ForwardCtx, Model, ModelConfig, SourceBatch, TargetBatch, TokenSeq};
use splicedet::tensor::gradcheck::{check_inputs, check_params};
use splicedet::tensor::{Tape, Tensor, Var};

pub const INSTANCES: u64 = 100;
pub const OP_TOL: f64 = 1e-4;
pub const OP_H: f64 = 1e-3;
pub const MODEL_TOL: f64 = 1e-3;
pub const MODEL_H: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Weighted sum with fixed random weights, so that every output element
/// contributes a distinct amount.
fn project<'t>(y: Var<'t, f64>, seed: u64) -> splicedet::Result<Var<'t, f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = rand_tensor(&mut rng, &y.shape());
    Ok(y.mul(y.tape().constant(w))?.sum())
}

macro_rules! rt {
    ($r:expr, [$($d:expr),*]) => {{
        let shape = vec![$($d),*];
        rand_tensor($r, &shape)
    }};
}

fn dims(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=4)
}

fn run_op<G, F>(out: &mut Vec<(&'static str, f64)>, name: &'static str, gen: G, f: F)
where
    G: Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>], u64) -> splicedet::Result<Var<'t, f64>>,
{
    let mut worst = 0.0f64;
    for i in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let inputs = gen(&mut rng);
        let rep = check_inputs(&inputs, OP_H, |t, v| f(t, v, i)).unwrap();
        assert!(rep.checked > 0);
        worst = worst.max(rep.max_error);
    }
    out.push((name, worst));
}

fn elementwise_and_broadcast(out: &mut Vec<(&'static str, f64)>) {
    let pair = |rng: &mut ChaCha8Rng| {
        let (a, b) = (dims(rng), dims(rng));
        vec![rand_tensor(rng, &[a, b]), rand_tensor(rng, &[1, b])]
    };
    run_op(out, "add", pair, |_, v, s| project(v[0].add(v[1])?, s));
    run_op(out, "sub", pair, |_, v, s| project(v[1].sub(v[0])?, s));
    run_op(out, "mul", pair, |_, v, s| project(v[0].mul(v[1])?, s));
    run_op(out, "scale", |r| vec![rt!(r, [3, 2])], |_, v, s| project(v[0].scale(-1.7), s));
}

fn matmul_batched_and_broadcast(out: &mut Vec<(&'static str, f64)>) {
    run_op(
        out,
        "matmul",
        |r| {
            let (b, m, k, n) = (dims(r), dims(r), dims(r), dims(r));
            vec![rt!(r, [b, m, k]), rt!(r, [k, n])]
        },
        |_, v, s| project(v[0].matmul(v[1])?, s),
    );
    run_op(
        out,
        "matmul-4d",
        |r| {
            let (m, k, n) = (dims(r), dims(r), dims(r));
            vec![rt!(r, [2, 2, m, k]), rt!(r, [2, 2, k, n])]
        },
        |_, v, s| project(v[0].matmul(v[1])?, s),
    );
}

fn relu_away_from_the_kink(out: &mut Vec<(&'static str, f64)>) {
    run_op(
        out,
        "relu",
        |r| {
            let mut t = rt!(r, [4, 3]);
            for x in &mut t.data {
                if x.abs() < 0.05 {
                    *x += 0.1f64.copysign(*x);
                }
            }
            vec![t]
        },
        |_, v, s| project(v[0].relu(), s),
    );
}

fn softmax_and_layer_norm(out: &mut Vec<(&'static str, f64)>) {
    run_op(
        out,
        "softmax",
        |r| vec![rt!(r, [dims(r), dims(r) + 1])],
        |_, v, s| project(v[0].softmax(1)?, s),
    );
    run_op(
        out,
        "softmax-axis0",
        |r| vec![rt!(r, [dims(r) + 1, 3])],
        |_, v, s| project(v[0].softmax(0)?, s),
    );
    run_op(
        out,
        "layer_norm",
        |r| {
            // two-element rows normalize to ±1 and are too curved for h=1e-3
            let d = r.gen_range(4..=8);
            vec![rt!(r, [dims(r), d]), rt!(r, [d]), rt!(r, [d])]
        },
        |_, v, s| project(v[0].layer_norm(v[1], v[2], 1e-5)?, s),
    );
}

fn embedding_reshape_permute(out: &mut Vec<(&'static str, f64)>) {
    run_op(
        out,
        "embedding",
        |r| vec![rt!(r, [6, dims(r)])],
        |_, v, s| project(v[0].embedding(&[(s % 6) as usize, 2, 2, 5])?, s),
    );
    run_op(
        out,
        "reshape",
        |r| vec![rt!(r, [2, 3, 2])],
        |_, v, s| project(v[0].reshape(&[3, 4])?, s),
    );
    run_op(
        out,
        "permute",
        |r| vec![rt!(r, [2, dims(r), 3, dims(r)])],
        |_, v, s| project(v[0].permute(&[2, 0, 3, 1])?, s),
    );
}

fn dropout_with_a_fixed_mask(out: &mut Vec<(&'static str, f64)>) {
    run_op(
        out,
        "dropout",
        |r| vec![rt!(r, [5, 4])],
        |_, v, s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            project(v[0].dropout(0.3, &mut rng), s)
        },
    );
}

fn cross_entropy_sum_mean(out: &mut Vec<(&'static str, f64)>) {
    run_op(
        out,
        "cross_entropy",
        |r| vec![rt!(r, [4, 5])],
        |_, v, s| v[0].cross_entropy(&[(s % 5) as usize, 0, 3, 0], 0),
    );
    run_op(out, "sum", |r| vec![rt!(r, [3, dims(r)])], |_, v, _| Ok(v[0].sum()));
    run_op(out, "mean", |r| vec![rt!(r, [3, dims(r)])], |_, v, _| Ok(v[0].mean()));
}

fn stack(rng: &mut ChaCha8Rng, frames: usize) -> FeatureStack {
    FeatureStack {
        n_frames: frames,
        width: FULL_WIDTH,
        data: (0..frames * FULL_WIDTH).map(|_| rng.gen_range(0.0..1.0)).collect(),
        source_duration: frames as f64 * 0.5,
    }
}

/// Worst scaled error of the full model loss over random instances.
pub fn model_error() -> f64 {
    let cfg = ModelConfig {
        n_heads: 2,
        ..ModelConfig::tiny(8, 1)
    };
    let mut worst = 0.0f64;
    for i in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let model = Model::<f64>::new(cfg.clone(), i).unwrap();
        let (f0, f1) = (rng.gen_range(2..6), rng.gen_range(2..6));
        let stacks = [stack(&mut rng, f0), stack(&mut rng, f1)];
        let seqs = [
            TokenSeq::from_positions(&[0.5 * rng.gen_range(1..4) as f64]),
            TokenSeq::no_splice(),
        ];
        let refs: Vec<&FeatureStack> = stacks.iter().collect();
        let src = SourceBatch::<f64>::from_stacks(&refs).unwrap();
        let inputs: Vec<&[usize]> = seqs.iter().map(|s| s.decoder_input()).collect();
        let targets: Vec<&[usize]> = seqs.iter().map(|s| s.decoder_target()).collect();
        let inputs = TargetBatch::from_seqs(&inputs).unwrap();
        let targets = TargetBatch::from_seqs(&targets).unwrap();

        let coords: Vec<(usize, usize)> = (0..10)
            .map(|_| {
                let p = rng.gen_range(0..model.params.len());
                (p, rng.gen_range(0..model.params.params[p].value.data.len()))
            })
            .collect();
        let rep = check_params(&model.params, &coords, MODEL_H, |tape, store| {
            let m = model.clone().with_params(store.clone())?;
            let bound = m.bind(tape);
            m.loss(&bound, &src, &inputs, &targets, &mut ForwardCtx::eval())
        })
        .unwrap();
        worst = worst.max(rep.max_error);
    }
    worst
}

/// Worst scaled error per differentiable operation.
pub fn op_errors() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    elementwise_and_broadcast(&mut out);
    matmul_batched_and_broadcast(&mut out);
    relu_away_from_the_kink(&mut out);
    softmax_and_layer_norm(&mut out);
    embedding_reshape_permute(&mut out);
    dropout_with_a_fixed_mask(&mut out);
    cross_entropy_sum_mean(&mut out);
    out
}
