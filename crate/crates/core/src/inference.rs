//! Plug-in asymptotics around a fitted point: `sqrt(n)(theta_hat - theta)` is
//! approximately `N(0, 4 tau^2 A^{-1})`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GarchError, Result};
use crate::innovations::{DistKind, InnovationDist, Moment};
use crate::likelihood::{scan_scale, ScoreFamily};
use crate::model::{GarchOrder, GarchParams, TimeSeries};

const SINGULAR_RATIO: f64 = 1e-12;
const CURVATURE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub a_hat: DMatrix<f64>,
    pub tau_sq_hat: f64,
    /// `4 tau_sq_hat A_hat^{-1}`, the covariance of `sqrt(n)(theta_hat - theta)`.
    pub covariance: DMatrix<f64>,
    /// `sqrt(covariance_jj / n)`.
    pub std_errors: Vec<f64>,
    /// `eps_hat_k = y_k / sqrt(w_hat_k)` for `k = 2..n`.
    pub residuals: Vec<f64>,
    /// `sqrt(sum eps_hat_k^2 / (n - 1))`.
    pub d_hat: f64,
}

struct Pass {
    residuals: Vec<f64>,
    a_hat: DMatrix<f64>,
}

fn residual_pass(series: &TimeSeries, theta_hat: &GarchParams) -> Result<Pass> {
    let order = theta_hat.order();
    series.require_len(order.dim() + 1)?;
    let dim = order.dim();
    let y = series.values();
    let mut residuals = Vec::with_capacity(series.len() - 1);
    let mut sum = DMatrix::<f64>::zeros(dim, dim);
    let mut z = vec![0.0; dim];
    scan_scale(&theta_hat.to_point(), series, true, |k, w, dw| {
        residuals.push(y[k - 1] / w.sqrt());
        for col in 0..dim {
            z[col] = dw[col] / w;
        }
        for a in 0..dim {
            for b in 0..=a {
                sum[(a, b)] += z[a] * z[b];
            }
        }
    })?;
    for a in 0..dim {
        for b in 0..a {
            sum[(b, a)] = sum[(a, b)];
        }
    }
    let a_hat = sum / (series.len() - 1) as f64;
    Ok(Pass { residuals, a_hat })
}

fn check_nonsingular(a: &DMatrix<f64>) -> Result<()> {
    let eig = a.clone().symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || !(min >= SINGULAR_RATIO * max) {
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        return Err(GarchError::SingularInformation { ratio });
    }
    Ok(())
}

/// `A_hat = (1/(n-1)) sum_{k=2..n} z_k z_k^T`, `z_k = w_hat'_k / w_hat_k` at `theta_hat`.
pub fn information_matrix(series: &TimeSeries, theta_hat: &GarchParams) -> Result<DMatrix<f64>> {
    let pass = residual_pass(series, theta_hat)?;
    check_nonsingular(&pass.a_hat)?;
    Ok(pass.a_hat)
}

/// `mean g1(e, 1)^2 / (mean g2(e, 1))^2` over a sample of (standardized) innovations.
pub fn tau_sq_sample(family: &ScoreFamily, eps: &[f64]) -> Result<f64> {
    if eps.is_empty() {
        return Err(GarchError::SeriesTooShort { needed: 1, got: 0 });
    }
    let m = eps.len() as f64;
    let num = eps.iter().map(|&e| family.g1(e, 1.0).powi(2)).sum::<f64>() / m;
    let den = eps.iter().map(|&e| family.g2(e, 1.0)).sum::<f64>() / m;
    if den.abs() <= CURVATURE_FLOOR {
        return Err(GarchError::VanishingCurvature(den));
    }
    if num == 0.0 {
        return Err(GarchError::DegenerateScore);
    }
    Ok(num / (den * den))
}

/// [`tau_sq_sample`] at the residuals of `theta_hat`.
pub fn tau_sq_empirical(series: &TimeSeries, theta_hat: &GarchParams, family: &ScoreFamily) -> Result<f64> {
    let pass = residual_pass(series, theta_hat)?;
    tau_sq_sample(family, &pass.residuals)
}

/// Closed-form `tau^2` for the built-in families on the built-in laws, with
/// the law rescaled to the family's convention.
///
/// Gaussian family: `(E eps^4 / (E eps^2)^2 - 1) / 4`. Laplace family:
/// `E eps^2 / (E|eps|)^2 - 1`. Both ratios are scale free, so they are taken
/// on the base law directly and need no numerical rescaling.
pub fn tau_sq_analytic(family: &ScoreFamily, dist: &InnovationDist) -> Result<f64> {
    let refuse = || GarchError::NoClosedForm { family: family.name(), dist: dist.to_string() };
    if matches!(dist.kind(), DistKind::Table(_)) {
        return Err(refuse());
    }
    let base = dist.with_divisor(1.0)?;
    match family {
        ScoreFamily::Gaussian => {
            let e2 = base.moment(Moment::Second)?;
            let e4 = base.moment(Moment::Fourth)?;
            Ok((e4 / (e2 * e2) - 1.0) / 4.0)
        }
        ScoreFamily::Laplace => {
            let e1 = base.moment(Moment::AbsMean)?;
            let e2 = base.moment(Moment::Second)?;
            Ok(e2 / (e1 * e1) - 1.0)
        }
        _ => Err(refuse()),
    }
}

pub fn full_inference(series: &TimeSeries, theta_hat: &GarchParams, family: &ScoreFamily) -> Result<InferenceResult> {
    let pass = residual_pass(series, theta_hat)?;
    check_nonsingular(&pass.a_hat)?;
    let tau_sq_hat = tau_sq_sample(family, &pass.residuals)?;
    let chol = pass.a_hat.clone().cholesky().ok_or(GarchError::SingularInformation { ratio: 0.0 })?;
    let mut covariance = chol.inverse() * (4.0 * tau_sq_hat);
    covariance = (&covariance + covariance.transpose()) * 0.5;
    let n = series.len() as f64;
    let std_errors = (0..covariance.nrows()).map(|j| (covariance[(j, j)] / n).sqrt()).collect();
    let m = pass.residuals.len() as f64;
    let d_hat = (pass.residuals.iter().map(|e| e * e).sum::<f64>() / m).sqrt();
    Ok(InferenceResult { a_hat: pass.a_hat, tau_sq_hat, covariance, std_errors, residuals: pass.residuals, d_hat })
}

/// Diagonal of the convention map: `1/d^2` on `omega` and `alpha`, `1` on `beta`.
pub fn convention_map(order: GarchOrder, d: f64) -> DVector<f64> {
    DVector::from_fn(order.dim(), |i, _| if i <= order.p() { 1.0 / (d * d) } else { 1.0 })
}

/// Converts `theta_hat` and the covariance to innovations divided by `d`:
/// `(omega/d^2, alpha/d^2, beta)` and `M cov M`.
pub fn rescale_estimate(
    result: &InferenceResult,
    theta_hat: &GarchParams,
    d: f64,
) -> Result<(GarchParams, DMatrix<f64>)> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(GarchError::NonPositiveScale(d));
    }
    let order = theta_hat.order();
    let m = convention_map(order, d);
    let coords = theta_hat.as_slice().iter().zip(m.iter()).map(|(v, s)| v * s).collect();
    let cov = DMatrix::from_fn(order.dim(), order.dim(), |i, j| m[i] * result.covariance[(i, j)] * m[j]);
    Ok((GarchParams::from_flat(order, coords)?, cov))
}
