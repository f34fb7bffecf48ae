//! Central finite-difference checks for tape gradients.
//!
//! Errors are measured as `|analytic - numeric| / max(1, |analytic|, |numeric|)`.

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    pub max_error: f64,
}

pub fn scaled_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn eval<F>(inputs: &[Tensor<f64>], f: &F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    Ok(f(&tape, &vars)?.item())
}

/// Compares the tape gradient of the scalar `f(inputs)` with central
/// differences of step `h` for every input coordinate.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let grads = f(&tape, &vars)?.backward()?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            grads
                .wrt(*v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; t.data.len()])
        })
        .collect();

    let mut report = GradReport {
        checked: 0,
        max_error: 0.0,
    };
    let mut probe = inputs.to_vec();
    #[allow(clippy::needless_range_loop)]
    for i in 0..inputs.len() {
        for j in 0..inputs[i].data.len() {
            let orig = probe[i].data[j];
            probe[i].data[j] = orig + h;
            let up = eval(&probe, &f)?;
            probe[i].data[j] = orig - h;
            let down = eval(&probe, &f)?;
            probe[i].data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            report.max_error = report.max_error.max(scaled_error(analytic[i][j], numeric));
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Same check over selected `(param index, element)` coordinates of a store.
pub fn check_params<F>(
    store: &ParamStore<f64>,
    coords: &[(usize, usize)],
    h: f64,
    f: F,
) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &ParamStore<f64>) -> Result<Var<'t, f64>>,
{
    let mut work = store.clone();
    work.zero_grad();
    {
        let tape = Tape::new();
        let loss = f(&tape, &work)?;
        loss.backward()?.accumulate_into(&mut work);
    }
    let mut report = GradReport {
        checked: 0,
        max_error: 0.0,
    };
    for &(p, e) in coords {
        let analytic = work
            .params
            .get(p)
            .and_then(|param| param.grad.get(e))
            .copied()
            .ok_or_else(|| Error::Contract(format!("no parameter coordinate ({p}, {e})")))?;
        let orig = work.params[p].value.data[e];
        let mut at = |v: f64| -> Result<f64> {
            work.params[p].value.data[e] = v;
            let tape = Tape::new();
            let out = f(&tape, &work)?.item();
            Ok(out)
        };
        let up = at(orig + h)?;
        let down = at(orig - h)?;
        work.params[p].value.data[e] = orig;
        let numeric = (up - down) / (2.0 * h);
        report.max_error = report.max_error.max(scaled_error(analytic, numeric));
        report.checked += 1;
    }
    Ok(report)
}
