//! Browser bindings: spectral kernel curves, adjoint field slices and the
//! Gram matrix with its linear amplitude prediction.
//!
//! Every exported function returns a flat `Float64Array`; `www/index.html`
//! documents the layouts.

use lagctrl_core::adjoint::{forcing_eval, AdjointField, Cutoff};
use lagctrl_core::gram::{gram_report, linear_predict, QuadSpec};
use lagctrl_core::spectral::mode_kernel;
use wasm_bindgen::prelude::*;

/// Truncation used for browser evaluation; accelerated, so well within 1e-6.
const TRUNCATION: usize = 512;

fn linspace(lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub fn kernel_curve_impl(n: u32, c: f64, tau_max: f64, samples: usize) -> Vec<f64> {
    linspace(0.0, tau_max, samples)
        .into_iter()
        .flat_map(|tau| [tau, mode_kernel(n, c, tau)])
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn adjoint_slice_impl(
    alpha: f64,
    c: f64,
    horizon: f64,
    t: f64,
    omega_lo: f64,
    omega_hi: f64,
    eta: f64,
    samples: usize,
) -> lagctrl_core::Result<Vec<f64>> {
    let field = AdjointField::new(alpha, c, horizon, TRUNCATION)?;
    let cutoff = Cutoff::new((omega_lo, omega_hi), eta)?;
    let mut out = Vec::with_capacity(4 * samples);
    for x in linspace(0.0, std::f64::consts::PI, samples) {
        out.extend([
            x,
            field.xi_eval(t, x)?,
            cutoff.chi_eval(x),
            forcing_eval(&field, &cutoff, t, x)?,
        ]);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn gram_prediction_impl(
    alphas: &[f64],
    betas: &[f64],
    c: f64,
    horizon: f64,
    omega_lo: f64,
    omega_hi: f64,
    eta: f64,
) -> lagctrl_core::Result<Vec<f64>> {
    if alphas.len() != betas.len() {
        return Err(lagctrl_core::Error::Precondition(format!(
            "{} sources but {} targets",
            alphas.len(),
            betas.len()
        )));
    }
    let fields = alphas
        .iter()
        .map(|&a| AdjointField::new(a, c, horizon, TRUNCATION))
        .collect::<lagctrl_core::Result<Vec<_>>>()?;
    let cutoff = Cutoff::new((omega_lo, omega_hi), eta)?;
    let report = gram_report(&fields, &cutoff, &QuadSpec::default())?;
    let displacement: Vec<f64> = betas.iter().zip(alphas).map(|(b, a)| b - a).collect();
    let eps = linear_predict(&report, &displacement)?;
    let mut out = report.matrix.clone();
    out.extend([report.det, report.condition_number]);
    out.extend(eps);
    Ok(out)
}

fn js(err: lagctrl_core::Error) -> JsError {
    JsError::new(&err.to_string())
}

/// `[tau_0, k_0, tau_1, k_1, ...]` for the mode-`n` kernel on `[0, tau_max]`.
#[wasm_bindgen]
pub fn kernel_curve(n: u32, c: f64, tau_max: f64, samples: usize) -> Vec<f64> {
    kernel_curve_impl(n, c, tau_max, samples)
}

/// `[x, xi, chi, chi * xi]` quadruples across `[0, pi]` at time `t`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn adjoint_slice(
    alpha: f64,
    c: f64,
    horizon: f64,
    t: f64,
    omega_lo: f64,
    omega_hi: f64,
    eta: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    adjoint_slice_impl(alpha, c, horizon, t, omega_lo, omega_hi, eta, samples).map_err(js)
}

/// Row-major Gram matrix, then `det`, condition number and the linear
/// amplitudes `G^{-1} (beta - alpha)`.
#[wasm_bindgen]
pub fn gram_prediction(
    alphas: &[f64],
    betas: &[f64],
    c: f64,
    horizon: f64,
    omega_lo: f64,
    omega_hi: f64,
    eta: f64,
) -> Result<Vec<f64>, JsError> {
    gram_prediction_impl(alphas, betas, c, horizon, omega_lo, omega_hi, eta).map_err(js)
}
