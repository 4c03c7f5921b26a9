//! Coefficients `c_i(u)` of the ARCH(infinity) representation
//! `w_k(u) = c_0(u) + sum_{i>=1} c_i(u) y_{k-i}^2` and their gradients.

use nalgebra::DMatrix;

use crate::error::{GarchError, Result};
use crate::model::{EstimationPoint, GarchOrder};

/// `c_0..c_m` and optionally `d c_i / d u_j` (rows `i`, columns `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    pub c: Vec<f64>,
    pub grad: Option<DMatrix<f64>>,
}

impl CoeffTable {
    /// Truncation length `m` (the table holds `m + 1` coefficients).
    pub fn m(&self) -> usize {
        self.c.len() - 1
    }
}

fn check_inputs(u: &EstimationPoint, order: GarchOrder, m: usize) -> Result<f64> {
    if u.order() != order {
        return Err(GarchError::DimensionMismatch { expected: order.dim(), got: u.as_slice().len() });
    }
    if m < order.r() {
        return Err(GarchError::InvalidParameter(format!(
            "truncation m = {m} must be at least max(p, q) = {}",
            order.r()
        )));
    }
    let t_sum: f64 = u.t().iter().sum();
    if t_sum >= 1.0 {
        return Err(GarchError::UnitRootCoefficients(t_sum));
    }
    Ok(t_sum)
}

/// `c_0` and the coefficients for `1 <= i <= m`.
///
/// For `i <= R = max(p, q)` this is the initial block
/// `c_i = s_i [i <= p] + t_1 c_{i-1} + ... + t_{min(i-1, q)} c_{i - min(i-1, q)}`,
/// which reads as the `q >= p` block when `q >= p` (the `s` terms stop at
/// `i = p`) and as the `q < p` block otherwise (the `t` sum saturates at `q`).
/// Beyond `R` only the `t` recursion remains.
pub fn coeff_sequence(u: &EstimationPoint, order: GarchOrder, m: usize) -> Result<CoeffTable> {
    let t_sum = check_inputs(u, order, m)?;
    let (s, t) = (u.s(), u.t());
    let (p, q) = (order.p(), order.q());
    let mut c = Vec::with_capacity(m + 1);
    c.push(u.x() / (1.0 - t_sum));
    for i in 1..=m {
        let mut v = if i <= p { s[i - 1] } else { 0.0 };
        for l in 1..=q.min(i - 1) {
            v += t[l - 1] * c[i - l];
        }
        c.push(v);
    }
    Ok(CoeffTable { c, grad: None })
}

/// [`coeff_sequence`] plus the forward-mode gradient of every coefficient.
pub fn coeff_gradients(u: &EstimationPoint, order: GarchOrder, m: usize) -> Result<CoeffTable> {
    let mut table = coeff_sequence(u, order, m)?;
    let t_sum: f64 = u.t().iter().sum();
    let t = u.t();
    let (p, q) = (order.p(), order.q());
    let dim = order.dim();
    let mut grad = DMatrix::<f64>::zeros(m + 1, dim);

    let denom = 1.0 - t_sum;
    grad[(0, 0)] = 1.0 / denom;
    for j in 0..q {
        grad[(0, 1 + p + j)] = u.x() / (denom * denom);
    }
    for i in 1..=m {
        let lags = q.min(i - 1);
        if i <= p {
            grad[(i, i)] = 1.0;
        }
        for l in 1..=lags {
            grad[(i, 1 + p + l - 1)] += table.c[i - l];
        }
        for col in 1..dim {
            let mut acc = 0.0;
            for l in 1..=lags {
                acc += t[l - 1] * grad[(i - l, col)];
            }
            grad[(i, col)] += acc;
        }
    }
    table.grad = Some(grad);
    Ok(table)
}
