use serde::Serialize;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Outcome of comparing tape gradients with central differences.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |numeric|)` over every coordinate.
    pub max_relative_error: f64,
    /// Same statistic per parameter, in input order.
    pub per_param: Vec<f64>,
    /// (parameter, flat coordinate) of the worst coordinate.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

/// Checks the gradient of `loss_fn` at `params`.
///
/// `loss_fn` receives a fresh tape with every tensor in `params` registered
/// as a parameter and must return a scalar. It has to be deterministic.
pub fn grad_check<F>(params: &[Tensor], eps: f64, loss_fn: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = loss_fn(&mut tape, &vars)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.param(t.clone())).collect();
    let out = loss_fn(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut per_param = vec![0.0f64; params.len()];
    let mut worst = (0, 0);
    let mut max_err = 0.0f64;
    let mut coordinates = 0;
    for p in 0..params.len() {
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            work[p].data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work[p].data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work[p].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[p].data()[k] - numeric).abs() / numeric.abs().max(1.0);
            coordinates += 1;
            per_param[p] = per_param[p].max(err);
            if err > max_err {
                max_err = err;
                worst = (p, k);
            }
        }
    }
    Ok(GradCheckReport {
        max_relative_error: max_err,
        per_param,
        worst,
        coordinates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let report = grad_check(&[Tensor::scalar(3.0)], 1e-4, |t, v| t.mul(v[0], v[0])).unwrap();
        assert!(report.max_relative_error < 1e-9);

        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        assert!((tape.backward(y).unwrap().get(x).unwrap().item() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(0.0));
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.backward(y).unwrap().get(x).unwrap().item(), 0.25);
        let report = grad_check(&[Tensor::scalar(0.0)], 1e-4, |t, v| t.sigmoid(v[0])).unwrap();
        assert!(report.max_relative_error < 1e-8);
    }
}
