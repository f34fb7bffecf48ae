use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, kept in f64 whatever the parameter
/// precision.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update from the gradients held in `store`.
/// A non-finite gradient leaves every parameter untouched.
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if let Some(p) = store
        .params
        .iter()
        .find(|p| p.grad.iter().any(|g| !g.is_finite()))
    {
        return Err(Error::NonFinite(format!(
            "gradient of {} at optimizer step {}",
            p.name,
            state.step + 1
        )));
    }
    if state.m.len() != store.params.len() {
        state.m = store.params.iter().map(|p| vec![0.0; p.grad.len()]).collect();
        state.v = state.m.clone();
        state.step = 0;
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in store.params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for (i, g) in p.grad.iter().enumerate() {
            let g = g.f64();
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let update = cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
            p.value.data[i] = T::of(p.value.data[i].f64() - update);
        }
    }
    Ok(())
}

/// Scales all gradients so that their global L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_grad_norm<T: Real>(store: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm.is_finite() {
        let s = T::of(max_norm / norm);
        for p in &mut store.params {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_store(theta: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.push("theta", Tensor::scalar(theta));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar_store(0.7);
        adam_step(&mut s, &mut AdamState::new(), &AdamConfig::default()).unwrap();
        assert_eq!(s.params[0].value.data[0], 0.7);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        for g in [-3.0, 0.25, 40.0] {
            let mut s = scalar_store(1.0);
            s.params[0].grad[0] = g;
            let cfg = AdamConfig::default();
            adam_step(&mut s, &mut AdamState::new(), &cfg).unwrap();
            let delta = s.params[0].value.data[0] - 1.0;
            let expect = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((delta - expect).abs() < 1e-12, "{delta} vs {expect}");
        }
    }

    #[test]
    fn quadratic_bowl() {
        // independent scalar recurrence of the same update
        let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut s = scalar_store(1.0);
        let mut st = AdamState::new();
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        for t in 1..=200 {
            let g = 2.0 * th;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            th -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);

            s.zero_grad();
            s.params[0].grad[0] = 2.0 * s.params[0].value.data[0];
            adam_step(&mut s, &mut st, &cfg).unwrap();
        }
        assert!(th.abs() < 1e-2);
        assert!((s.params[0].value.data[0] - th).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut s = scalar_store(1.0);
        s.params[0].grad[0] = f64::NAN;
        let err = adam_step(&mut s, &mut AdamState::new(), &AdamConfig::default());
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(s.params[0].value.data[0], 1.0);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut s = ParamStore::<f64>::new();
        s.push("a", Tensor::zeros(&[2]));
        s.params[0].grad = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut s, 1.0), 5.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
    }
}
