//! Innovation laws used for simulation, their moments, and rescaling between
//! moment normalizations.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GarchError, Result};

/// Base law of the innovations before division by the scale divisor.
#[derive(Debug, Clone, PartialEq)]
pub enum DistKind {
    StandardNormal,
    /// Unit-rate two-sided exponential, density `exp(-|x|)/2`.
    Laplace,
    /// Density `((theta - 1)/2) (1 + |x|)^(-theta)`, `theta > 1`.
    PolyTail { theta: f64 },
    /// Empirical law of a sample; sampled by bootstrap.
    Table(Arc<[f64]>),
}

/// A sampleable innovation law `eps = base / scale_divisor`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationDist {
    kind: DistKind,
    scale_divisor: f64,
}

/// Moment normalization that makes the parameter identifiable for a score family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "tag", content = "theta")]
pub enum ScalingConvention {
    /// `E eps^2 = 1`.
    SecondMomentOne,
    /// `E|eps| = 1`.
    FirstAbsMomentOne,
    /// `E(|eps| / (1 + |eps|)) = 1/theta`.
    PolyRatio(f64),
    /// No rescaling: the score family is matched to the law as given.
    AsIs,
}

/// Moments exposed by [`InnovationDist::moment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    /// `E|eps|`
    AbsMean,
    /// `E eps^2`
    Second,
    /// `E eps^4`
    Fourth,
    /// `E(|eps| / (1 + |eps|))`
    Ratio,
}

impl Moment {
    fn name(self) -> &'static str {
        match self {
            Moment::AbsMean => "E|eps|",
            Moment::Second => "E eps^2",
            Moment::Fourth => "E eps^4",
            Moment::Ratio => "E(|eps|/(1+|eps|))",
        }
    }

    fn power(self) -> i32 {
        match self {
            Moment::AbsMean => 1,
            Moment::Second => 2,
            Moment::Fourth => 4,
            Moment::Ratio => 0,
        }
    }
}

const QUAD_TOL: f64 = 1e-14;
const BISECTION_TOL: f64 = 1e-10;

impl InnovationDist {
    pub fn standard_normal() -> Self {
        InnovationDist { kind: DistKind::StandardNormal, scale_divisor: 1.0 }
    }

    pub fn laplace() -> Self {
        InnovationDist { kind: DistKind::Laplace, scale_divisor: 1.0 }
    }

    pub fn poly_tail(theta: f64) -> Result<Self> {
        if !(theta > 1.0) || !theta.is_finite() {
            return Err(GarchError::InvalidParameter(format!("poly-tail needs theta > 1, got {theta}")));
        }
        Ok(InnovationDist { kind: DistKind::PolyTail { theta }, scale_divisor: 1.0 })
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(GarchError::InvalidParameter("empirical table must be nonempty and finite".into()));
        }
        Ok(InnovationDist { kind: DistKind::Table(values.into()), scale_divisor: 1.0 })
    }

    /// Same base law divided by `d`.
    pub fn with_divisor(&self, d: f64) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(GarchError::InvalidParameter(format!("scale divisor must be positive, got {d}")));
        }
        Ok(InnovationDist { kind: self.kind.clone(), scale_divisor: d })
    }

    pub fn kind(&self) -> &DistKind {
        &self.kind
    }

    pub fn scale_divisor(&self) -> f64 {
        self.scale_divisor
    }

    /// One draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let base = match &self.kind {
            DistKind::StandardNormal => rng.sample::<f64, _>(StandardNormal),
            DistKind::Laplace => {
                let e: f64 = rng.sample(Exp1);
                if rng.random_bool(0.5) {
                    e
                } else {
                    -e
                }
            }
            DistKind::PolyTail { theta } => {
                let negative = rng.random_bool(0.5);
                // V in (0, 1]; P(|eps| > t) = (1 + t)^(1 - theta)
                let v = 1.0 - rng.random::<f64>();
                let mag = v.powf(-1.0 / (theta - 1.0)) - 1.0;
                if negative {
                    -mag
                } else {
                    mag
                }
            }
            DistKind::Table(values) => values[rng.random_range(0..values.len())],
        };
        base / self.scale_divisor
    }

    /// `count` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }

    /// Closed-form (or quadrature, or empirical) moment of the scaled law.
    pub fn moment(&self, which: Moment) -> Result<f64> {
        if which == Moment::Ratio {
            return self.ratio_moment(self.scale_divisor);
        }
        let base = self.base_moment(which)?;
        Ok(base / self.scale_divisor.powi(which.power()))
    }

    fn base_moment(&self, which: Moment) -> Result<f64> {
        let infinite = || GarchError::MomentInfinite { which: which.name(), dist: self.to_string() };
        match (&self.kind, which) {
            (DistKind::StandardNormal, Moment::AbsMean) => Ok((2.0 / std::f64::consts::PI).sqrt()),
            (DistKind::StandardNormal, Moment::Second) => Ok(1.0),
            (DistKind::StandardNormal, Moment::Fourth) => Ok(3.0),
            (DistKind::Laplace, Moment::AbsMean) => Ok(1.0),
            (DistKind::Laplace, Moment::Second) => Ok(2.0),
            (DistKind::Laplace, Moment::Fourth) => Ok(24.0),
            (DistKind::PolyTail { theta }, m) => {
                let th = *theta;
                match m {
                    Moment::AbsMean if th > 2.0 => Ok(1.0 / (th - 2.0)),
                    Moment::Second if th > 3.0 => Ok(2.0 / ((th - 2.0) * (th - 3.0))),
                    Moment::Fourth if th > 5.0 => {
                        Ok(24.0 / ((th - 2.0) * (th - 3.0) * (th - 4.0) * (th - 5.0)))
                    }
                    _ => Err(infinite()),
                }
            }
            (DistKind::Table(values), m) => {
                let k = m.power();
                Ok(values.iter().map(|v| v.abs().powi(k)).sum::<f64>() / values.len() as f64)
            }
            (_, Moment::Ratio) => unreachable!("ratio moment handled by quadrature"),
        }
    }

    /// `E(|base/d| / (1 + |base/d|)) = E(|base| / (d + |base|))`.
    fn ratio_moment(&self, d: f64) -> Result<f64> {
        let ratio = |a: f64| if a.is_infinite() { 1.0 } else { a / (d + a) };
        let value = match &self.kind {
            DistKind::StandardNormal => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                half_line_integral(|z| c * (-0.5 * z * z).exp() * ratio(z))
            }
            DistKind::Laplace => half_line_integral(|z| (-z).exp() * ratio(z)),
            DistKind::PolyTail { theta } => {
                let th = *theta;
                // inverse-CDF substitution turns the tail integral into a bounded one on (0, 1]
                quadrature::double_exponential::integrate(
                    |v| ratio(v.powf(-1.0 / (th - 1.0)) - 1.0),
                    0.0,
                    1.0,
                    QUAD_TOL,
                )
                .integral
            }
            DistKind::Table(values) => {
                values.iter().map(|v| ratio(v.abs())).sum::<f64>() / values.len() as f64
            }
        };
        Ok(value)
    }

    /// Same base law with the divisor that makes `conv` hold.
    pub fn rescale_to(&self, conv: ScalingConvention) -> Result<Self> {
        let base = self.with_divisor(1.0)?;
        let d = match conv {
            ScalingConvention::AsIs => return Ok(self.clone()),
            ScalingConvention::SecondMomentOne => base.base_moment(Moment::Second)?.sqrt(),
            ScalingConvention::FirstAbsMomentOne => base.base_moment(Moment::AbsMean)?,
            ScalingConvention::PolyRatio(theta) => {
                if !(theta > 1.0) {
                    return Err(GarchError::InvalidParameter(format!(
                        "poly-ratio convention needs theta > 1, got {theta}"
                    )));
                }
                base.solve_ratio_divisor(1.0 / theta)?
            }
        };
        if !(d > 0.0) || !d.is_finite() {
            return Err(GarchError::BracketFailure(format!("degenerate scale divisor {d}")));
        }
        self.with_divisor(d)
    }

    /// Bisection on `d` for `E(|base|/(d + |base|)) = target`; the map is
    /// strictly decreasing in `d`.
    fn solve_ratio_divisor(&self, target: f64) -> Result<f64> {
        let f = |d: f64| self.ratio_moment(d).map(|m| m - target);
        let (mut lo, mut hi) = (1.0, 1.0);
        let mut tries = 0;
        while f(lo)? <= 0.0 {
            lo *= 0.5;
            tries += 1;
            if tries > 200 {
                return Err(GarchError::BracketFailure(format!("no lower bracket for target {target}")));
            }
        }
        tries = 0;
        while f(hi)? >= 0.0 {
            hi *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(GarchError::BracketFailure(format!("no upper bracket for target {target}")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = f(mid)?;
            if v.abs() <= BISECTION_TOL {
                return Ok(mid);
            }
            if v > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(GarchError::BracketFailure(format!("bisection did not reach tolerance for target {target}")))
    }
}

/// `int_0^inf f(z) dz` via `z = v / (1 - v)`.
fn half_line_integral<F: Fn(f64) -> f64>(f: F) -> f64 {
    quadrature::double_exponential::integrate(
        |v| {
            if v >= 1.0 {
                return 0.0;
            }
            let w = 1.0 - v;
            f(v / w) / (w * w)
        },
        0.0,
        1.0,
        QUAD_TOL,
    )
    .integral
}

impl fmt::Display for InnovationDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DistKind::StandardNormal => write!(f, "normal")?,
            DistKind::Laplace => write!(f, "laplace")?,
            DistKind::PolyTail { theta } => write!(f, "polytail(theta={theta})")?,
            DistKind::Table(values) => write!(f, "table(n={})", values.len())?,
        }
        if self.scale_divisor != 1.0 {
            write!(f, "/{}", self.scale_divisor)?;
        }
        Ok(())
    }
}
