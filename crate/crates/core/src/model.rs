//! Core domain types: model order, parameters, the feasible set and data.
//!
//! Every vector-valued quantity in this crate (points, gradients, matrices,
//! JSON output) uses the flattened order `(omega, alpha_1..alpha_p,
//! beta_1..beta_q)`, equivalently `(x, s_1..s_p, t_1..t_q)`.

use serde::{Deserialize, Serialize};

use crate::error::{GarchError, Result};

/// Lag counts of a GARCH(p, q) model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GarchOrder {
    p: usize,
    q: usize,
}

impl GarchOrder {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(GarchError::InvalidOrder { p, q });
        }
        Ok(GarchOrder { p, q })
    }

    /// Number of ARCH lags.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of GARCH lags.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Dimension of the flattened parameter vector, `p + q + 1`.
    pub fn dim(&self) -> usize {
        self.p + self.q + 1
    }

    /// `max(p, q)`, the length of the initial block of the coefficient recursion.
    pub fn r(&self) -> usize {
        self.p.max(self.q)
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(GarchError::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }
}

/// Model parameter `(omega, alpha, beta)` with `omega > 0` and nonnegative
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    order: GarchOrder,
    coords: Vec<f64>,
}

impl GarchParams {
    pub fn new(omega: f64, alpha: &[f64], beta: &[f64]) -> Result<Self> {
        let order = GarchOrder::new(alpha.len(), beta.len())?;
        let mut coords = Vec::with_capacity(order.dim());
        coords.push(omega);
        coords.extend_from_slice(alpha);
        coords.extend_from_slice(beta);
        Self::from_flat(order, coords)
    }

    pub fn from_flat(order: GarchOrder, coords: Vec<f64>) -> Result<Self> {
        order.check_dim(coords.len())?;
        if !(coords[0] > 0.0) || !coords[0].is_finite() {
            return Err(GarchError::InvalidParameter(format!(
                "omega must be positive and finite, got {}",
                coords[0]
            )));
        }
        if let Some(bad) = coords[1..].iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(GarchError::InvalidParameter(format!(
                "alpha and beta must be nonnegative and finite, got {bad}"
            )));
        }
        Ok(GarchParams { order, coords })
    }

    pub fn order(&self) -> GarchOrder {
        self.order
    }

    pub fn omega(&self) -> f64 {
        self.coords[0]
    }

    pub fn alpha(&self) -> &[f64] {
        &self.coords[1..=self.order.p]
    }

    pub fn beta(&self) -> &[f64] {
        &self.coords[self.order.p + 1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_point(&self) -> EstimationPoint {
        EstimationPoint { order: self.order, coords: self.coords.clone() }
    }

    /// `sum(alpha) * e2 + sum(beta)`, the persistence under innovation second moment `e2`.
    pub fn persistence(&self, e2: f64) -> f64 {
        self.alpha().iter().sum::<f64>() * e2 + self.beta().iter().sum::<f64>()
    }
}

/// A point `u = (x, s, t)` at which the objective is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationPoint {
    order: GarchOrder,
    coords: Vec<f64>,
}

impl EstimationPoint {
    pub fn new(order: GarchOrder, coords: Vec<f64>) -> Result<Self> {
        order.check_dim(coords.len())?;
        Ok(EstimationPoint { order, coords })
    }

    pub fn from_parts(x: f64, s: &[f64], t: &[f64]) -> Result<Self> {
        let order = GarchOrder::new(s.len(), t.len())?;
        let mut coords = vec![x];
        coords.extend_from_slice(s);
        coords.extend_from_slice(t);
        Ok(EstimationPoint { order, coords })
    }

    pub fn order(&self) -> GarchOrder {
        self.order
    }

    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    pub fn s(&self) -> &[f64] {
        &self.coords[1..=self.order.p]
    }

    pub fn t(&self) -> &[f64] {
        &self.coords[self.order.p + 1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    /// Interpret the point as model parameters. Fails if `x <= 0` or any
    /// coordinate is negative.
    pub fn to_params(&self) -> Result<GarchParams> {
        GarchParams::from_flat(self.order, self.coords.clone())
    }
}

/// The compact feasible set `U`: a box `[u_low, u_high]^(p+q+1)` intersected
/// with the cap `t_1 + ... + t_q <= rho0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    order: GarchOrder,
    u_low: f64,
    u_high: f64,
    rho0: f64,
}

impl ParamSpace {
    pub const DEFAULT_U_LOW: f64 = 1e-4;
    pub const DEFAULT_U_HIGH: f64 = 10.0;
    pub const DEFAULT_RHO0: f64 = 0.999;

    pub fn new(order: GarchOrder, u_low: f64, u_high: f64, rho0: f64) -> Result<Self> {
        if !(u_low > 0.0 && u_low < u_high && u_high.is_finite()) {
            return Err(GarchError::EmptySpace(format!(
                "need 0 < u_low < u_high, got u_low={u_low}, u_high={u_high}"
            )));
        }
        if !(rho0 > 0.0 && rho0 < 1.0) {
            return Err(GarchError::EmptySpace(format!("rho0 must lie in (0, 1), got {rho0}")));
        }
        if order.q() as f64 * u_low >= rho0 {
            return Err(GarchError::EmptySpace(format!(
                "q * u_low = {} must be below rho0 = {rho0}",
                order.q() as f64 * u_low
            )));
        }
        Ok(ParamSpace { order, u_low, u_high, rho0 })
    }

    /// The default space `u_low = 1e-4`, `u_high = 10`, `rho0 = 0.999`.
    pub fn default_for(order: GarchOrder) -> Self {
        Self::new(order, Self::DEFAULT_U_LOW, Self::DEFAULT_U_HIGH, Self::DEFAULT_RHO0)
            .expect("default space is nonempty for q < 9990")
    }

    pub fn order(&self) -> GarchOrder {
        self.order
    }

    pub fn u_low(&self) -> f64 {
        self.u_low
    }

    pub fn u_high(&self) -> f64 {
        self.u_high
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    /// Same order and cap with a different box.
    pub fn with_bounds(&self, u_low: f64, u_high: f64) -> Result<Self> {
        Self::new(self.order, u_low, u_high, self.rho0)
    }

    pub fn contains(&self, u: &EstimationPoint) -> Result<bool> {
        validate_point(u, self)
    }
}

/// An observed sample `y_1, ..., y_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Self {
        TimeSeries { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample variance around zero, `mean(y^2)`.
    pub fn mean_square(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|y| y * y).sum::<f64>() / self.values.len() as f64
    }

    /// Every observation multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        TimeSeries { values: self.values.iter().map(|y| y * lambda).collect() }
    }

    pub(crate) fn require_len(&self, needed: usize) -> Result<()> {
        if self.values.len() < needed {
            return Err(GarchError::SeriesTooShort { needed, got: self.values.len() });
        }
        Ok(())
    }
}

impl From<Vec<f64>> for TimeSeries {
    fn from(values: Vec<f64>) -> Self {
        TimeSeries::new(values)
    }
}

/// Membership test for `U`.
pub fn validate_point(u: &EstimationPoint, space: &ParamSpace) -> Result<bool> {
    if u.order != space.order {
        return Err(GarchError::DimensionMismatch { expected: space.order.dim(), got: u.coords.len() });
    }
    let in_box = u.coords.iter().all(|&c| c >= space.u_low && c <= space.u_high);
    let t_sum: f64 = u.t().iter().sum();
    Ok(in_box && t_sum <= space.rho0)
}

/// Clamp into the box, then project the `t` block onto
/// `{t >= u_low, sum(t) <= rho0}` if the cap is violated.
pub fn project_to_space(u: &EstimationPoint, space: &ParamSpace) -> Result<EstimationPoint> {
    if u.order != space.order {
        return Err(GarchError::DimensionMismatch { expected: space.order.dim(), got: u.coords.len() });
    }
    let mut coords: Vec<f64> =
        u.coords.iter().map(|&c| if c.is_nan() { space.u_low } else { c.clamp(space.u_low, space.u_high) }).collect();
    let p = space.order.p();
    let t = &mut coords[p + 1..];
    if t.iter().sum::<f64>() > space.rho0 {
        project_capped_simplex(t, space.u_low, space.rho0);
    }
    Ok(EstimationPoint { order: u.order, coords })
}

/// Euclidean projection of `t` onto `{t_i >= low, sum(t) = cap}` by the
/// sort-based simplex algorithm applied to the shifted vector `t - low`.
fn project_capped_simplex(t: &mut [f64], low: f64, cap: f64) {
    let radius = cap - low * t.len() as f64;
    let mut sorted: Vec<f64> = t.iter().map(|v| v - low).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (j, v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    for v in t.iter_mut() {
        *v = low + (*v - low - shift).max(0.0);
    }
    // rounding can leave the sum a few ulps above the cap
    for _ in 0..8 {
        let excess = t.iter().sum::<f64>() - cap;
        if excess <= 0.0 {
            break;
        }
        if let Some(top) = t.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *top = (*top - excess.max(*top * f64::EPSILON)).max(low);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space11() -> ParamSpace {
        ParamSpace::new(GarchOrder::new(1, 1).unwrap(), 0.01, 0.9, 0.95).unwrap()
    }

    #[test]
    fn validate_point_examples() {
        let s = space11();
        let u = EstimationPoint::from_parts(0.5, &[0.2], &[0.3]).unwrap();
        assert!(validate_point(&u, &s).unwrap());
        let u = EstimationPoint::from_parts(0.5, &[0.2], &[0.96]).unwrap();
        assert!(!validate_point(&u, &s).unwrap());
    }

    #[test]
    fn empty_space_rejected() {
        let order = GarchOrder::new(1, 2).unwrap();
        assert!(matches!(ParamSpace::new(order, 0.1, 0.9, 0.15), Err(GarchError::EmptySpace(_))));
        assert!(ParamSpace::new(order, 0.2, 0.1, 0.5).is_err());
        assert!(ParamSpace::new(order, 0.01, 0.9, 1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let u = EstimationPoint::from_parts(0.5, &[0.2, 0.1], &[0.3]).unwrap();
        assert!(matches!(validate_point(&u, &space11()), Err(GarchError::DimensionMismatch { .. })));
        assert!(project_to_space(&u, &space11()).is_err());
    }

    #[test]
    fn projection_examples() {
        let s = space11();
        let u = EstimationPoint::from_parts(0.5, &[0.2], &[0.3]).unwrap();
        assert_eq!(project_to_space(&u, &s).unwrap(), u);

        let u = EstimationPoint::from_parts(1.2, &[0.2], &[0.3]).unwrap();
        assert_eq!(project_to_space(&u, &s).unwrap().as_slice(), &[0.9, 0.2, 0.3]);

        let s = ParamSpace::new(GarchOrder::new(1, 2).unwrap(), 0.05, 0.9, 0.5).unwrap();
        let u = EstimationPoint::from_parts(0.3, &[0.3], &[0.4, 0.4]).unwrap();
        let got = project_to_space(&u, &s).unwrap();
        let want = [0.3, 0.3, 0.25, 0.25];
        for (g, w) in got.as_slice().iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{got:?}");
        }
    }

    #[test]
    fn projection_respects_lower_bound_on_uneven_t() {
        let s = ParamSpace::new(GarchOrder::new(1, 3).unwrap(), 0.05, 0.9, 0.5).unwrap();
        let u = EstimationPoint::from_parts(0.3, &[0.3], &[0.9, 0.06, 0.05]).unwrap();
        let got = project_to_space(&u, &s).unwrap();
        assert!(validate_point(&got, &s).unwrap());
        assert_eq!(&got.t()[1..], &[0.05, 0.05]);
        assert!((got.t()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn params_reject_invalid_values() {
        assert!(GarchParams::new(0.0, &[0.1], &[0.8]).is_err());
        assert!(GarchParams::new(-1.0, &[0.1], &[0.8]).is_err());
        assert!(GarchParams::new(0.1, &[-0.1], &[0.8]).is_err());
        assert!(GarchParams::new(0.1, &[0.1], &[-1e-9]).is_err());
        assert!(GarchParams::new(0.1, &[], &[0.8]).is_err());
        let ok = GarchParams::new(0.1, &[0.1, 0.0], &[0.8]).unwrap();
        assert_eq!(ok.alpha(), &[0.1, 0.0]);
        assert_eq!(ok.beta(), &[0.8]);
    }
}
