//! Central finite-difference gradient checking (float64, step 1e-5).

use crate::tensor::{Parameter, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// Relative error with a small-magnitude floor: gradients that are both
/// numerically zero compare equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-7 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Central differences of `f` with respect to every element of `x`.
pub fn fd_tensor_grad(f: &mut dyn FnMut(&Tensor<f64>) -> f64, x: &Tensor<f64>, h: f64) -> Vec<f64> {
    let base = x.data().to_vec();
    (0..base.len())
        .map(|i| {
            let plus = f(&x.with_element(i, base[i] + h));
            let minus = f(&x.with_element(i, base[i] - h));
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Central differences of `f` with respect to every stored value of `p`
/// (weight elements first, then bias), probing the parameter in place.
pub fn fd_param_grad(f: &mut dyn FnMut() -> f64, p: &Parameter<f64>, h: f64) -> (Vec<f64>, Vec<f64>) {
    let w0 = p.weight();
    let b0 = p.bias();
    let wg = (0..w0.len())
        .map(|i| {
            p.set_weight_element(i, w0[i] + h);
            let plus = f();
            p.set_weight_element(i, w0[i] - h);
            let minus = f();
            p.set_weight_element(i, w0[i]);
            (plus - minus) / (2.0 * h)
        })
        .collect();
    let bg = (0..b0.len())
        .map(|i| {
            p.set_bias_element(i, b0[i] + h);
            let plus = f();
            p.set_bias_element(i, b0[i] - h);
            let minus = f();
            p.set_bias_element(i, b0[i]);
            (plus - minus) / (2.0 * h)
        })
        .collect();
    (wg, bg)
}

/// Worst relative error between analytic and numeric gradient vectors.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}
