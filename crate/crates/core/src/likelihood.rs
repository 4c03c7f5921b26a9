//! Score families, the truncated conditional scale `w_hat_k(u)`, the objective
//! `L_hat_n(u)` and its gradient.
//!
//! With `g(y, t) = log(t h(y t))` the `k`-th objective term is
//! `g(y_k, w_hat_k^{-1/2}) = log h(eps_k) - log(w_hat_k) / 2` where
//! `eps_k = y_k / sqrt(w_hat_k)`. Its gradient in `u` is
//! `-g1(eps_k, 1) / 2 * w_hat'_k / w_hat_k`, using `t g1(y, t) = g1(y t, 1)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{GarchError, Result};
use crate::innovations::ScalingConvention;
use crate::model::{EstimationPoint, TimeSeries};

type ScoreFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A user-supplied family: `g`, its first two `t`-derivatives, and the
/// scaling convention under which `E g1(eps, 1) = 0`.
pub struct CustomScore {
    pub name: String,
    pub g: Box<ScoreFn>,
    pub g1: Box<ScoreFn>,
    pub g2: Box<ScoreFn>,
    pub convention: ScalingConvention,
}

impl fmt::Debug for CustomScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomScore").field("name", &self.name).field("convention", &self.convention).finish()
    }
}

/// The function `h` behind the objective, through `g(y, t) = log(t h(y t))`.
#[derive(Debug, Clone)]
pub enum ScoreFamily {
    /// Standard normal `h`: the classical Gaussian quasi-likelihood.
    Gaussian,
    /// Two-sided exponential `h(t) = exp(-|t|)/2`.
    Laplace,
    /// `h(t) = ((theta - 1)/2)(1 + |t|)^(-theta)`.
    PolyTail { theta: f64 },
    Custom(Arc<CustomScore>),
}

impl ScoreFamily {
    pub fn poly_tail(theta: f64) -> Result<Self> {
        if !(theta > 1.0) || !theta.is_finite() {
            return Err(GarchError::InvalidParameter(format!("poly-tail family needs theta > 1, got {theta}")));
        }
        Ok(ScoreFamily::PolyTail { theta })
    }

    pub fn custom(score: CustomScore) -> Self {
        ScoreFamily::Custom(Arc::new(score))
    }

    /// Parse `gaussian`, `laplace`, or `polytail` (the latter needs `theta`).
    pub fn from_name(name: &str, theta: Option<f64>) -> Result<Self> {
        match name {
            "gaussian" | "normal" => Ok(ScoreFamily::Gaussian),
            "laplace" | "exponential" => Ok(ScoreFamily::Laplace),
            "polytail" => Self::poly_tail(theta.ok_or_else(|| {
                GarchError::InvalidParameter("polytail family requires theta".into())
            })?),
            other => Err(GarchError::InvalidParameter(format!("unknown score family '{other}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ScoreFamily::Gaussian => "gaussian".into(),
            ScoreFamily::Laplace => "laplace".into(),
            ScoreFamily::PolyTail { theta } => format!("polytail({theta})"),
            ScoreFamily::Custom(c) => c.name.clone(),
        }
    }

    pub fn convention(&self) -> ScalingConvention {
        match self {
            ScoreFamily::Gaussian => ScalingConvention::SecondMomentOne,
            ScoreFamily::Laplace => ScalingConvention::FirstAbsMomentOne,
            ScoreFamily::PolyTail { theta } => ScalingConvention::PolyRatio(*theta),
            ScoreFamily::Custom(c) => c.convention,
        }
    }

    #[inline]
    pub fn g(&self, y: f64, t: f64) -> f64 {
        match self {
            ScoreFamily::Gaussian => {
                let yt = y * t;
                t.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * yt * yt
            }
            ScoreFamily::Laplace => t.ln() - std::f64::consts::LN_2 - y.abs() * t,
            ScoreFamily::PolyTail { theta } => {
                t.ln() + ((theta - 1.0) / 2.0).ln() - theta * (y.abs() * t).ln_1p()
            }
            ScoreFamily::Custom(c) => (c.g)(y, t),
        }
    }

    #[inline]
    pub fn g1(&self, y: f64, t: f64) -> f64 {
        match self {
            ScoreFamily::Gaussian => (1.0 - y * y * t * t) / t,
            ScoreFamily::Laplace => (1.0 - y.abs() * t) / t,
            ScoreFamily::PolyTail { theta } => 1.0 / t - theta * y.abs() / (1.0 + y.abs() * t),
            ScoreFamily::Custom(c) => (c.g1)(y, t),
        }
    }

    #[inline]
    pub fn g2(&self, y: f64, t: f64) -> f64 {
        match self {
            ScoreFamily::Gaussian => -(1.0 + y * y * t * t) / (t * t),
            ScoreFamily::Laplace => -1.0 / (t * t),
            ScoreFamily::PolyTail { theta } => {
                let d = 1.0 + y.abs() * t;
                -1.0 / (t * t) + theta * y * y / (d * d)
            }
            ScoreFamily::Custom(c) => (c.g2)(y, t),
        }
    }
}

/// `g`, `g1` or `g2` (selected by `deriv`) at `(y, t)`.
pub fn score_eval(family: &ScoreFamily, y: f64, t: f64, deriv: u8) -> Result<f64> {
    if !(t > 0.0) {
        return Err(GarchError::NonPositiveScale(t));
    }
    match deriv {
        0 => Ok(family.g(y, t)),
        1 => Ok(family.g1(y, t)),
        2 => Ok(family.g2(y, t)),
        d => Err(GarchError::InvalidParameter(format!("derivative order must be 0, 1 or 2, got {d}"))),
    }
}

/// `w_hat_k` for `k = 2..n` (entry `k - 2`) and optionally the gradients
/// `w_hat'_k` as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleVector {
    pub w_hat: Vec<f64>,
    pub w_hat_grad: Option<DMatrix<f64>>,
}

fn prepare(u: &EstimationPoint, series: &TimeSeries) -> Result<(f64, Vec<f64>)> {
    series.require_len(2)?;
    let order = u.order();
    let t_sum: f64 = u.t().iter().sum();
    if t_sum >= 1.0 {
        return Err(GarchError::UnitRootCoefficients(t_sum));
    }
    let den = 1.0 - t_sum;
    let c0 = u.x() / den;
    let mut dc0 = vec![0.0; order.dim()];
    dc0[0] = 1.0 / den;
    for j in 0..order.q() {
        dc0[1 + order.p() + j] = u.x() / (den * den);
    }
    Ok((c0, dc0))
}

/// Runs `w_hat_k = c_0 + V_k` with
/// `V_k = sum_i s_i y_{k-i}^2 + sum_j t_j V_{k-j}` and `V_j = 0` for `j <= 1`,
/// which is the truncated sum `sum_{1 <= i < k} c_i y_{k-i}^2` written as a
/// recursion. Calls `visit(k, w_hat_k, w_hat'_k)` for `k = 2..n`.
pub(crate) fn scan_scale<F>(u: &EstimationPoint, series: &TimeSeries, with_grad: bool, mut visit: F) -> Result<()>
where
    F: FnMut(usize, f64, &[f64]),
{
    let (c0, dc0) = prepare(u, series)?;
    let order = u.order();
    let (p, q, dim) = (order.p(), order.q(), order.dim());
    let (s, t) = (u.s(), u.t());
    let y = series.values();
    let n = y.len();
    let ysq = |j: usize| -> f64 { y[j - 1] * y[j - 1] };

    // v[k] = V_k, dv[k * dim + col] = dV_k/du_col; indices 0 and 1 stay zero
    let mut v = vec![0.0; n + 1];
    let mut dv = if with_grad { vec![0.0; (n + 1) * dim] } else { Vec::new() };
    let mut dw = vec![0.0; if with_grad { dim } else { 0 }];

    for k in 2..=n {
        let mut vk = 0.0;
        for i in 1..=p.min(k - 1) {
            vk += s[i - 1] * ysq(k - i);
        }
        for j in 1..=q.min(k - 2) {
            vk += t[j - 1] * v[k - j];
        }
        v[k] = vk;
        if with_grad {
            let (head, tail) = dv.split_at_mut(k * dim);
            let cur = &mut tail[..dim];
            for j in 1..=q.min(k - 2) {
                let prev = &head[(k - j) * dim..(k - j + 1) * dim];
                let tj = t[j - 1];
                for col in 1..dim {
                    cur[col] += tj * prev[col];
                }
                cur[p + j] += v[k - j];
            }
            for i in 1..=p.min(k - 1) {
                cur[i] += ysq(k - i);
            }
            for col in 0..dim {
                dw[col] = dc0[col] + cur[col];
            }
        }
        visit(k, c0 + vk, &dw);
    }
    Ok(())
}

/// `w_hat_k(u)` for `k = 2..n`, with gradients when requested.
pub fn conditional_scale(u: &EstimationPoint, series: &TimeSeries, with_grad: bool) -> Result<ScaleVector> {
    let n = series.len();
    let dim = u.order().dim();
    let mut w_hat = Vec::with_capacity(n.saturating_sub(1));
    let mut grad = with_grad.then(|| DMatrix::<f64>::zeros(n.saturating_sub(1), dim));
    scan_scale(u, series, with_grad, |k, w, dw| {
        w_hat.push(w);
        if let Some(g) = grad.as_mut() {
            for (col, d) in dw.iter().enumerate() {
                g[(k - 2, col)] = *d;
            }
        }
    })?;
    Ok(ScaleVector { w_hat, w_hat_grad: grad })
}

/// Direct `O(n^2)` evaluation of `w_hat_k = c_0 + sum_{1 <= i < k} c_i y_{k-i}^2`
/// from the coefficient table. Kept as the reference for [`conditional_scale`].
pub fn conditional_scale_reference(
    u: &EstimationPoint,
    series: &TimeSeries,
    with_grad: bool,
) -> Result<ScaleVector> {
    series.require_len(2)?;
    let order = u.order();
    let n = series.len();
    let m = (n - 1).max(order.r());
    let table = if with_grad {
        crate::coeffs::coeff_gradients(u, order, m)?
    } else {
        crate::coeffs::coeff_sequence(u, order, m)?
    };
    let y = series.values();
    let dim = order.dim();
    let mut w_hat = Vec::with_capacity(n - 1);
    let mut grad = with_grad.then(|| DMatrix::<f64>::zeros(n - 1, dim));
    for k in 2..=n {
        let mut w = table.c[0];
        for i in 1..k {
            w += table.c[i] * y[k - i - 1] * y[k - i - 1];
        }
        w_hat.push(w);
        if let (Some(g), Some(tg)) = (grad.as_mut(), table.grad.as_ref()) {
            for col in 0..dim {
                let mut d = tg[(0, col)];
                for i in 1..k {
                    d += tg[(i, col)] * y[k - i - 1] * y[k - i - 1];
                }
                g[(k - 2, col)] = d;
            }
        }
    }
    Ok(ScaleVector { w_hat, w_hat_grad: grad })
}

/// Objective value plus first-order quantities gathered in one pass.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
    /// `(1/n) sum_k z_k z_k^T` with `z_k = w_hat'_k / w_hat_k`.
    pub outer: DMatrix<f64>,
    /// `(1/n) sum_k (g1 + g2)(eps_k, 1)`.
    pub curvature: f64,
}

pub(crate) fn evaluate(u: &EstimationPoint, series: &TimeSeries, family: &ScoreFamily) -> Result<Evaluation> {
    let dim = u.order().dim();
    let n = series.len() as f64;
    let y = series.values();
    let mut value = 0.0;
    let mut grad = vec![0.0; dim];
    let mut outer = DMatrix::<f64>::zeros(dim, dim);
    let mut curvature = 0.0;
    let mut z = vec![0.0; dim];
    scan_scale(u, series, true, |k, w, dw| {
        let eps = y[k - 1] / w.sqrt();
        value += family.g(eps, 1.0) - 0.5 * w.ln();
        let g1 = family.g1(eps, 1.0);
        curvature += g1 + family.g2(eps, 1.0);
        for col in 0..dim {
            z[col] = dw[col] / w;
            grad[col] -= 0.5 * g1 * z[col];
        }
        for a in 0..dim {
            for b in 0..=a {
                outer[(a, b)] += z[a] * z[b];
            }
        }
    })?;
    for a in 0..dim {
        for b in 0..a {
            outer[(b, a)] = outer[(a, b)];
        }
    }
    let value = if value.is_finite() { value / n } else { f64::NEG_INFINITY };
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(Evaluation { value, grad, outer: outer / n, curvature: curvature / n })
}

/// `L_hat_n(u) = (1/n) sum_{1 < k <= n} [log h(y_k / sqrt(w_hat_k)) - log(w_hat_k)/2]`.
///
/// Returns `-inf` when `h` vanishes at some residual.
pub fn objective(u: &EstimationPoint, series: &TimeSeries, family: &ScoreFamily) -> Result<f64> {
    let y = series.values();
    let mut value = 0.0;
    scan_scale(u, series, false, |k, w, _| {
        value += family.g(y[k - 1] / w.sqrt(), 1.0) - 0.5 * w.ln();
    })?;
    if !value.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(value / series.len() as f64)
}

/// Exact gradient of [`objective`] in the flattened coordinate order.
pub fn objective_gradient(u: &EstimationPoint, series: &TimeSeries, family: &ScoreFamily) -> Result<Vec<f64>> {
    let dim = u.order().dim();
    let y = series.values();
    let mut grad = vec![0.0; dim];
    scan_scale(u, series, true, |k, w, dw| {
        let g1 = family.g1(y[k - 1] / w.sqrt(), 1.0);
        for col in 0..dim {
            grad[col] -= 0.5 * g1 * dw[col] / w;
        }
    })?;
    let n = series.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}
