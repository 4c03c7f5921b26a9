//! Sample paths of `y_k = sigma_k eps_k`,
//! `sigma_k^2 = omega + sum_i alpha_i y_{k-i}^2 + sum_j beta_j sigma_{k-j}^2`.

use crate::error::{GarchError, Result};
use crate::innovations::{InnovationDist, Moment};
use crate::model::{GarchParams, TimeSeries};
use crate::rng;

pub const DEFAULT_BURN_IN: usize = 1000;
const OVERFLOW_LIMIT: f64 = 1e300;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: GarchParams,
    pub dist: InnovationDist,
    pub n: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(params: GarchParams, dist: InnovationDist, n: usize, seed: u64) -> Self {
        SimConfig { params, dist, n, burn_in: DEFAULT_BURN_IN, seed }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub series: TimeSeries,
    pub sigma_sq: Vec<f64>,
    pub innovations: Vec<f64>,
}

/// Runs the recursion for `burn_in + n` steps and keeps the last `n`.
///
/// The pre-sample `sigma^2` lags start at the unconditional level
/// `omega / (1 - E eps^2 sum(alpha) - sum(beta))` when that is positive and
/// finite (otherwise at `omega`), and the `y^2` lags at `sigma^2 E eps^2`.
pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    if config.n == 0 {
        return Err(GarchError::InvalidParameter("simulation length n must be at least 1".into()));
    }
    let params = &config.params;
    let (alpha, beta, omega) = (params.alpha(), params.beta(), params.omega());
    let r = params.order().r();
    let e2 = config.dist.moment(Moment::Second).ok();

    let uncond = e2
        .map(|e2| omega / (1.0 - params.persistence(e2)))
        .filter(|v| v.is_finite() && *v > 0.0)
        .unwrap_or(omega);
    let total = config.burn_in + config.n;
    let mut sig2 = Vec::with_capacity(r + total);
    let mut ysq = Vec::with_capacity(r + total);
    sig2.resize(r, uncond);
    ysq.resize(r, uncond * e2.unwrap_or(1.0));

    let mut rng = rng::stream(config.seed, 0);
    let mut ys = Vec::with_capacity(config.n);
    let mut sigmas = Vec::with_capacity(config.n);
    let mut eps_out = Vec::with_capacity(config.n);
    for step in 0..total {
        let k = r + step;
        let mut s2 = omega;
        for (i, a) in alpha.iter().enumerate() {
            s2 += a * ysq[k - 1 - i];
        }
        for (j, b) in beta.iter().enumerate() {
            s2 += b * sig2[k - 1 - j];
        }
        if !(s2 <= OVERFLOW_LIMIT) {
            return Err(GarchError::SimulationOverflow { step });
        }
        let eps = config.dist.draw(&mut rng);
        let y = s2.sqrt() * eps;
        sig2.push(s2);
        ysq.push(y * y);
        if step >= config.burn_in {
            ys.push(y);
            sigmas.push(s2);
            eps_out.push(eps);
        }
    }
    Ok(SimOutput { series: TimeSeries::new(ys), sigma_sq: sigmas, innovations: eps_out })
}
